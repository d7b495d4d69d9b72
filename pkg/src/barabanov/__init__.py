"""Extremal norms, Lyapunov exponents and periodic extremals of switched linear systems."""
from .matnum import RangeError, SingularMatrixError, Spectrum, expm, spectrum
from .model import (BarabanovPairData, SwitchedSystem, SystemFormatError, load_system,
                    spectral_shift, validate_pair)
from .norm import NormField, approximate_barabanov_norm, estimate_rho

__all__ = [
    "RangeError", "SingularMatrixError", "Spectrum", "expm", "spectrum",
    "BarabanovPairData", "SwitchedSystem", "SystemFormatError", "load_system", "spectral_shift",
    "validate_pair",
    "NormField", "approximate_barabanov_norm", "estimate_rho",
]
