"""Command-line front end: smiles, error surfaces, Vasicek term curves and single prices.

Each run reads one TOML scenario file (or the name of a bundled one, ``fig1``
to ``fig6``) and writes CSV with a versioned header comment line. Failures
exit nonzero and print a JSON error record on stderr.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import sys
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .blackscholes import bs_call, bs_vega, implied_vol
from .errors import AffineSmileError, CapabilityError, OutOfRegimeWarning
from .fourier import InversionConfig, forward_call_price
from .ivol import QuadratureConfig, expand
from .lsv import coefficients, forward_log_price
from .mc import SimConfig, forward_call_mc
from .models import MODELS, VasicekParams, vasicek_sigma, vasicek_sigma_limit_expiry

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SCHEMA_VERSION = 1
ENGINES = ("exact", "bar0", "bar1", "bar2", "mc")
REFERENCE_ENGINES = ("exact", "mc")


class ConfigError(ValueError):
    """Invalid or inconsistent scenario configuration."""


@dataclass(frozen=True)
class ScenarioConfig:
    """One scenario: model, dates, state, strike grid and engine settings."""

    model: str
    params: dict
    t: float
    T: tuple
    Tbar: tuple
    y: tuple
    k_minus_x: tuple
    engine: str = "exact"
    sweep: Optional[tuple] = None
    t_grid: Optional[tuple] = None
    quadrature: QuadratureConfig = field(default_factory=QuadratureConfig)
    inversion: InversionConfig = field(default_factory=InversionConfig)
    mc: SimConfig = field(default_factory=SimConfig)
    out: Optional[str] = None

    def build_model(self, overrides: Optional[dict] = None):
        cls = MODELS[self.model]
        return cls(**{**self.params, **(overrides or {})})

    def model_variants(self):
        """``(label, value, model)`` for each swept parameter value, or one unlabelled model."""
        if self.sweep is None:
            return [(None, None, self.build_model())]
        name, values = self.sweep
        return [(name, v, self.build_model({name: v})) for v in values]


def _as_tuple(value, name) -> tuple:
    if isinstance(value, (int, float)):
        return (float(value),)
    if isinstance(value, dict):
        try:
            return tuple(float(v) for v in np.linspace(value["start"], value["stop"], int(value["num"])))
        except KeyError as exc:
            raise ConfigError(f"{name}: grid tables need start, stop and num") from exc
    if isinstance(value, list):
        return tuple(float(v) for v in value)
    raise ConfigError(f"{name}: expected a number, a list or a start/stop/num table")


def _sub_config(cls, table: dict, name: str):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(table) - known
    if unknown:
        raise ConfigError(f"[{name}] has unknown keys {sorted(unknown)}")
    try:
        return cls(**table)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{name}]: {exc}") from exc


def resolve_config_path(ref: str) -> Path:
    """A filesystem path, or the name of a bundled config such as ``fig2``."""
    path = Path(ref)
    if path.exists():
        return path
    bundled = resources.files("affinesmile").joinpath("configs", f"{ref}.toml")
    if bundled.is_file():
        return Path(str(bundled))
    raise ConfigError(f"config {ref!r} is neither a file nor a bundled scenario (fig1 ... fig6)")


def parse_config(data: dict, command: str) -> ScenarioConfig:
    """Validate a parsed TOML document for ``command``."""
    try:
        model_tbl = dict(data["model"])
        scen = dict(data["scenario"])
    except KeyError as exc:
        raise ConfigError(f"missing [{exc.args[0]}] table") from exc
    name = model_tbl.pop("name", None)
    if name not in MODELS:
        raise ConfigError(f"model.name must be one of {sorted(MODELS)}, got {name!r}")
    sweep = None
    sweep_tbl = data.get("sweep")
    if sweep_tbl:
        if len(sweep_tbl) != 1:
            raise ConfigError("[sweep] must name exactly one model parameter")
        (key, values), = sweep_tbl.items()
        if key not in {f.name for f in dataclasses.fields(MODELS[name])}:
            raise ConfigError(f"[sweep] parameter {key!r} is not a {name} parameter")
        sweep = (key, _as_tuple(values, f"sweep.{key}"))
        model_tbl.setdefault(key, sweep[1][0])
    try:
        MODELS[name](**model_tbl)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[model]: {exc}") from exc

    t = float(scen.get("t", 0.0))
    T = _as_tuple(scen.get("T"), "scenario.T") if "T" in scen else ()
    Tbar = _as_tuple(scen.get("Tbar"), "scenario.Tbar") if "Tbar" in scen else ()
    if not T or not Tbar:
        raise ConfigError("scenario needs T and Tbar")
    y = _as_tuple(scen.get("y", []), "scenario.y")
    if len(y) != MODELS[name].dim:
        raise ConfigError(f"scenario.y must have {MODELS[name].dim} entries")
    k_grid = _as_tuple(scen.get("k_minus_x", [0.0]), "scenario.k_minus_x")
    t_grid = _as_tuple(scen["t_grid"], "scenario.t_grid") if "t_grid" in scen else None

    if command in ("smile", "error-surface", "price"):
        if not k_grid:
            raise ConfigError("strike grid is empty")
        if any(b <= a for a, b in zip(k_grid, k_grid[1:])):
            raise ConfigError("strike grid must be strictly increasing")
        if len(Tbar) != 1:
            raise ConfigError("scenario.Tbar must be a single value for this command")
        for TT in T:
            if not t < TT < Tbar[0] and not (command == "price" and t == TT < Tbar[0]):
                raise ConfigError(f"need t < T < Tbar, got t={t}, T={TT}, Tbar={Tbar[0]}")
    if command == "vasicek-term":
        if name != "vasicek":
            raise ConfigError("vasicek-term requires the vasicek model")
        if len(T) != 1:
            raise ConfigError("vasicek-term takes a single option maturity T")
        if any(tb < T[0] for tb in Tbar):
            raise ConfigError("vasicek-term needs Tbar >= T")
        if t_grid is None:
            t_grid = tuple(np.linspace(0.0, T[0], 51)[:-1])
        if any(not 0 <= s < T[0] for s in t_grid):
            raise ConfigError("t_grid values must lie in [0, T)")

    engine = str(scen.get("engine", "exact"))
    out = data.get("output", {}).get("path")
    return ScenarioConfig(
        model=name,
        params=model_tbl,
        t=t,
        T=T,
        Tbar=Tbar,
        y=y,
        k_minus_x=k_grid,
        engine=engine,
        sweep=sweep,
        t_grid=t_grid,
        quadrature=_sub_config(QuadratureConfig, data.get("quadrature", {}), "quadrature"),
        inversion=_sub_config(InversionConfig, data.get("inversion", {}), "inversion"),
        mc=_sub_config(SimConfig, data.get("mc", {}), "mc"),
        out=out,
    )


def load_config(ref: str, command: str) -> ScenarioConfig:
    path = resolve_config_path(ref)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(data, command)


class _Table:
    """CSV rows with a schema header comment."""

    def __init__(self, command: str, model: str, columns: list):
        self.command = command
        self.model = model
        self.columns = columns
        self.rows: list = []

    def add(self, **row):
        self.rows.append(row)

    def render(self) -> str:
        buf = io.StringIO()
        buf.write(f"# affinesmile-csv schema={SCHEMA_VERSION} command={self.command} model={self.model}\n")
        writer = csv.DictWriter(buf, fieldnames=self.columns, lineterminator="\n")
        writer.writeheader()
        for row in self.rows:
            writer.writerow({c: _fmt(row.get(c)) for c in self.columns})
        return buf.getvalue()


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return v


def _anchor(model, cfg: ScenarioConfig, T: float):
    Tbar = cfg.Tbar[0]
    x = float(forward_log_price(model, cfg.t, np.array(cfg.y), T, Tbar))
    return x, np.array(cfg.y[1:])


def _expansion_columns(model, cfg: ScenarioConfig, T: float, x: float, ytilde, ks):
    """Sigma-bar columns and per-strike flags."""
    coeffs = coefficients(model, cfg.t, x, ytilde, T, cfg.Tbar[0])
    exp_ = expand(coeffs, cfg.quadrature)
    cols = {f"sigma_bar{n}": np.atleast_1d(exp_.sigma_bar(n, ks, warn=False)) for n in range(3)}
    flags = [[] for _ in ks]
    for n in range(3):
        for i, v in enumerate(cols[f"sigma_bar{n}"]):
            if v <= 0:
                flags[i].append(f"bar{n}:out-of-regime")
    return cols, flags


def _reference_vols(model, cfg: ScenarioConfig, T: float, x: float, ytilde, ks, flags):
    """Exact (Fourier) or Monte Carlo implied vols; blanks with a flag when unavailable."""
    n = len(ks)
    vols = np.full(n, math.nan)
    stderr = np.full(n, math.nan)
    tau = T - cfg.t
    if cfg.engine == "exact":
        try:
            prices = np.atleast_1d(forward_call_price(model, cfg.t, x, ytilde, T, cfg.Tbar[0], ks, cfg.inversion))
        except CapabilityError:
            for f in flags:
                f.append("exact:capability")
            return vols, None
        # below this the inversion's absolute accuracy leaves no usable time value
        floor = 100 * cfg.inversion.tail_tol
        for i, (p, k) in enumerate(zip(prices, ks)):
            if p - max(math.exp(x) - math.exp(k), 0.0) < floor:
                flags[i].append("exact:below-resolution")
                continue
            vols[i] = _safe_iv(p, x, k, tau, flags[i], "exact")
        return vols, None
    est = forward_call_mc(model, cfg.t, x, ytilde, T, cfg.Tbar[0], ks, cfg.mc)
    means = np.atleast_1d(est.mean)
    ses = np.atleast_1d(est.stderr)
    for i, (p, se, k) in enumerate(zip(means, ses, ks)):
        vols[i] = _safe_iv(p, x, k, tau, flags[i], "mc")
        if not math.isnan(vols[i]):
            vega = float(bs_vega(x, k, tau, vols[i]))
            stderr[i] = se / vega if vega > 0 else math.nan
    return vols, stderr


def _safe_iv(price, x, k, tau, flags, tag):
    try:
        return implied_vol(float(price), x, k, tau)
    except AffineSmileError:
        flags.append(f"{tag}:no-implied-vol")
        return math.nan


def _check_engine(cfg: ScenarioConfig, allowed):
    if cfg.engine not in allowed:
        raise ConfigError(f"engine {cfg.engine!r} is not valid here; choose from {allowed}")


def cmd_smile(cfg: ScenarioConfig) -> str:
    """Smile table over the strike grid for every maturity (and swept parameter value)."""
    _check_engine(cfg, REFERENCE_ENGINES)
    ref = "sigma_exact" if cfg.engine == "exact" else "sigma_mc"
    columns = ["T", "k_minus_x", ref]
    if cfg.engine == "mc":
        columns.append("sigma_mc_se")
    columns += ["sigma_bar0", "sigma_bar1", "sigma_bar2", "flags"]
    if cfg.sweep is not None:
        columns.insert(0, cfg.sweep[0])
    table = _Table("smile", cfg.model, columns)
    for label, value, model in cfg.model_variants():
        for T in cfg.T:
            x, ytilde = _anchor(model, cfg, T)
            ks = x + np.array(cfg.k_minus_x)
            bars, flags = _expansion_columns(model, cfg, T, x, ytilde, ks)
            vols, se = _reference_vols(model, cfg, T, x, ytilde, ks, flags)
            for i, m in enumerate(cfg.k_minus_x):
                row = {"T": T, "k_minus_x": m, ref: float(vols[i]), "flags": ";".join(flags[i])}
                if se is not None:
                    row["sigma_mc_se"] = float(se[i])
                if label is not None:
                    row[label] = value
                row.update({name: float(col[i]) for name, col in bars.items()})
                table.add(**row)
    return table.render()


def cmd_error_surface(cfg: ScenarioConfig) -> str:
    """``|Sigma_bar2 - Sigma| / Sigma`` over the ``(k - x, T)`` grid."""
    _check_engine(cfg, REFERENCE_ENGINES)
    table = _Table("error-surface", cfg.model, ["T", "k_minus_x", "sigma_ref", "sigma_bar2", "rel_error", "flags"])
    model = cfg.build_model()
    for T in cfg.T:
        x, ytilde = _anchor(model, cfg, T)
        ks = x + np.array(cfg.k_minus_x)
        bars, flags = _expansion_columns(model, cfg, T, x, ytilde, ks)
        vols, _ = _reference_vols(model, cfg, T, x, ytilde, ks, flags)
        if all("exact:capability" in f for f in flags):
            raise CapabilityError(f"no exact engine for model {cfg.model}; use engine = 'mc'")
        s2 = bars["sigma_bar2"]
        for i, m in enumerate(cfg.k_minus_x):
            rel = abs(s2[i] - vols[i]) / vols[i]
            table.add(T=T, k_minus_x=m, sigma_ref=float(vols[i]), sigma_bar2=float(s2[i]),
                      rel_error=float(rel), flags=";".join(flags[i]))
    return table.render()


def cmd_vasicek_term(cfg: ScenarioConfig) -> str:
    """Vasicek implied volatility as a function of ``t`` for each bond maturity."""
    model = cfg.build_model()
    assert isinstance(model, VasicekParams)
    T = cfg.T[0]
    table = _Table("vasicek-term", cfg.model, ["Tbar", "t", "sigma", "sigma_limit_expiry"])
    for Tbar in cfg.Tbar:
        limit = float(vasicek_sigma_limit_expiry(model, T, Tbar))
        for s in cfg.t_grid:
            table.add(Tbar=Tbar, t=float(s), sigma=float(vasicek_sigma(model, s, T, Tbar)), sigma_limit_expiry=limit)
    return table.render()


def cmd_price(cfg: ScenarioConfig) -> str:
    """Forward call price for each strike through one engine."""
    _check_engine(cfg, ENGINES)
    table = _Table("price", cfg.model, ["engine", "t", "T", "Tbar", "k_minus_x", "price", "stderr", "implied_vol", "flags"])
    model = cfg.build_model()
    Tbar = cfg.Tbar[0]
    for T in cfg.T:
        x, ytilde = _anchor(model, cfg, T)
        ks = x + np.array(cfg.k_minus_x)
        tau = T - cfg.t
        flags = [[] for _ in ks]
        se = np.zeros(len(ks))
        if tau == 0:
            prices = np.maximum(math.exp(x) - np.exp(ks), 0.0)
            for f in flags:
                f.append("intrinsic")
        elif cfg.engine == "exact":
            prices = np.atleast_1d(forward_call_price(model, cfg.t, x, ytilde, T, Tbar, ks, cfg.inversion))
        elif cfg.engine == "mc":
            est = forward_call_mc(model, cfg.t, x, ytilde, T, Tbar, ks, cfg.mc)
            prices, se = np.atleast_1d(est.mean), np.atleast_1d(est.stderr)
        else:
            bars, flags = _expansion_columns(model, cfg, T, x, ytilde, ks)
            vols = bars[f"sigma_{cfg.engine}"]
            prices = np.array([float(bs_call(x, k, tau, v)) if v > 0 else math.nan for k, v in zip(ks, vols)])
        for i, m in enumerate(cfg.k_minus_x):
            iv = math.nan if tau == 0 or math.isnan(prices[i]) else _safe_iv(prices[i], x, ks[i], tau, flags[i], cfg.engine)
            table.add(engine=cfg.engine, t=cfg.t, T=T, Tbar=Tbar, k_minus_x=m, price=float(prices[i]),
                      stderr=float(se[i]), implied_vol=iv, flags=";".join(flags[i]))
    return table.render()


COMMANDS = {
    "smile": cmd_smile,
    "error-surface": cmd_error_surface,
    "vasicek-term": cmd_vasicek_term,
    "price": cmd_price,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="affinesmile", description="Implied volatility smiles for bond options in affine short-rate models.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__.splitlines()[0])
        p.add_argument("--config", required=True, help="TOML scenario file or bundled name (fig1 ... fig6)")
        p.add_argument("--out", help="output CSV path (default: [output] path, else stdout)")
        p.add_argument("--seed", type=int, help="Monte Carlo seed override")
        p.add_argument("--engine", choices=ENGINES, help="engine override")
    return parser


def run(argv=None) -> int:
    """Parse ``argv``, execute the command and return the exit code."""
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.command)
        if args.seed is not None:
            cfg = dataclasses.replace(cfg, mc=dataclasses.replace(cfg.mc, seed=args.seed))
        if args.engine is not None:
            cfg = dataclasses.replace(cfg, engine=args.engine)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", OutOfRegimeWarning)
            text = COMMANDS[args.command](cfg)
        out = args.out or cfg.out
        if out:
            Path(out).write_text(text)
        else:
            sys.stdout.write(text)
    except (AffineSmileError, ValueError, OSError) as exc:
        code = 3 if isinstance(exc, CapabilityError) else 2 if isinstance(exc, ConfigError) else 1
        record = {"error": type(exc).__name__, "message": str(exc), "command": args.command, "exit_code": code}
        sys.stderr.write(json.dumps(record) + "\n")
        return code
    return 0


def main() -> None:
    sys.exit(run())
