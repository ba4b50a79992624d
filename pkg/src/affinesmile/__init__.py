"""Implied volatility expansions for bond options in affine short-rate models."""

from .affine import AffineModelSpec, BondCoefficients, StatePoint, bond_price, gamma_transform, solve_riccati
from .blackscholes import bs_call, bs_vega, implied_vol
from .chf import kummer_m, tricomi_u
from .fourier import InversionConfig, PayoffTransform, exact_implied_vol, forward_call_price, option_value_u
from .ivol import IVExpansion, QuadratureConfig, expand, sigma0, sigma1, sigma2, sigma_bar
from .lsv import GeneratorCoefficients, coefficients, eta, forward_log_price
from .mc import MCEstimate, SimConfig, forward_call_mc, simulate_discounted_payoff, simulate_transform
from .models import CIR2DParams, CIRParams, FongVasicekParams, MODELS, VasicekParams

__version__ = "0.1.0"

__all__ = [
    "AffineModelSpec", "BondCoefficients", "StatePoint", "bond_price", "gamma_transform", "solve_riccati",
    "bs_call", "bs_vega", "implied_vol",
    "kummer_m", "tricomi_u",
    "InversionConfig", "PayoffTransform", "exact_implied_vol", "forward_call_price", "option_value_u",
    "IVExpansion", "QuadratureConfig", "expand", "sigma0", "sigma1", "sigma2", "sigma_bar",
    "GeneratorCoefficients", "coefficients", "eta", "forward_log_price",
    "MCEstimate", "SimConfig", "forward_call_mc", "simulate_discounted_payoff", "simulate_transform",
    "CIR2DParams", "CIRParams", "FongVasicekParams", "MODELS", "VasicekParams",
]
