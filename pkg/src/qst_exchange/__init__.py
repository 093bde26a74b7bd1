"""Fidelity of photon-polarisation to electron-spin state transfer in a
double quantum dot with electron-hole exchange."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    HBAR_MEV_PS,
    DensityMatrix2,
    DeviceParams,
    SpinState,
    ValidationError,
    from_pm_basis,
    to_pm_basis,
    validate,
)
from .analytic import eval_f, fidelity, fidelity_from_rho, overlap_integral, overlap_integrals, rho_infinity  # noqa: E402

__all__ = [
    "HBAR_MEV_PS",
    "DensityMatrix2",
    "DeviceParams",
    "SpinState",
    "ValidationError",
    "eval_f",
    "fidelity",
    "fidelity_from_rho",
    "from_pm_basis",
    "overlap_integral",
    "overlap_integrals",
    "rho_infinity",
    "to_pm_basis",
    "validate",
]
