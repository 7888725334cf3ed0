"""Fractional Schrodinger operators on bounded domains: spectra and stable-process Monte Carlo."""

__version__ = "0.1.0"

from .eigen import EigenPair, MaximizerReport, maximizer, principal_eigenpair, rayleigh_quotient
from .fraclap import DiscreteOperator, OperatorSpec, Potential, assemble, getoor_residual, validate_symbol
from .geometry import (BetaCertificate, Domain, cap_exterior_measure, certify_beta, dist_to_boundary,
                       exterior_density, inradius)

__all__ = [
    "BetaCertificate", "DiscreteOperator", "Domain", "EigenPair", "MaximizerReport", "OperatorSpec",
    "Potential", "assemble", "cap_exterior_measure", "certify_beta", "dist_to_boundary",
    "exterior_density", "getoor_residual", "inradius", "maximizer", "principal_eigenpair",
    "rayleigh_quotient", "validate_symbol",
]
