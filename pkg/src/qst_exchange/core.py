"""
Domain types for the double-dot photo-detector model.

Units
-----
Every energy, coupling and rate is expressed in meV with hbar = 1, so
time is measured in 1/meV.  One unit of time is ``HBAR_MEV_PS`` ps
(about 0.6582 ps).

Spin basis
----------
The electron spin is carried in two representations:

* z basis: amplitudes ``(alpha_up, alpha_down)`` on |up>, |down>;
* x basis: amplitudes ``(beta_plus, beta_minus)`` on |+>, |->, where
  ``beta_pm = (alpha_up +/- alpha_down) / sqrt(2)``.

The exchange coupling is diagonal in the x basis, which is why all
dynamics are carried out there.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

HBAR_MEV_PS = 0.6582119569  # hbar in meV * ps

SIGMAS = (+1, -1)

_SQRT2 = math.sqrt(2.0)
_NORM_TOL = 1e-6


class ValidationError(ValueError):
    """Raised when an input violates a model invariant."""


def mev_to_ps(t: float) -> float:
    """Convert a time in 1/meV (hbar = 1) to picoseconds."""
    return t * HBAR_MEV_PS


def ps_to_mev(t: float) -> float:
    return t / HBAR_MEV_PS


def parse_sigma(sigma) -> int:
    """Normalise a spin-branch label (``+1``, ``-1``, ``'+'``, ``'-'``)."""
    if sigma in (1, "+", "plus"):
        return 1
    if sigma in (-1, "-", "minus"):
        return -1
    raise ValidationError(f"spin branch must be '+' or '-', got {sigma!r}")


def _finite(z: complex) -> bool:
    return math.isfinite(z.real) and math.isfinite(z.imag)


@dataclass(frozen=True)
class DeviceParams:
    """Energies and couplings of the double dot, all in meV.

    ``omega_e`` is kept even though no fidelity depends on it, so the
    time-domain solver can demonstrate that independence.
    """

    omega_e: float = 0.0
    omega_1: float = 0.0
    omega_2: float = 0.0
    omega_j: float = 0.04
    delta: complex = 0.8
    gamma_h: float = 0.8

    def omega_j_branch(self, sigma) -> float:
        """Exchange energy seen by spin branch ``sigma``: ``+/- omega_j``."""
        return parse_sigma(sigma) * self.omega_j

    @property
    def delta_sq(self) -> float:
        return abs(self.delta) ** 2

    def replace(self, **changes) -> "DeviceParams":
        values = {k: getattr(self, k) for k in self.__dataclass_fields__}
        values.update(changes)
        return DeviceParams(**values)

    @classmethod
    def from_exchange_coefficients(cls, a: float, b: float, **kwargs) -> "DeviceParams":
        """Build params with ``omega_j = (2a + 5b) / 4``.

        ``a`` and ``b`` are the isotropic and cubic coefficients of the
        zincblende electron-hole exchange term.
        """
        return cls(omega_j=exchange_from_coefficients(a, b), **kwargs)


def exchange_from_coefficients(a: float, b: float) -> float:
    return (2.0 * a + 5.0 * b) / 4.0


def validate(params: DeviceParams) -> DeviceParams:
    """Return ``params`` unchanged if it describes a physical device.

    Raises
    ------
    ValidationError
        On non-finite fields, ``gamma_h <= 0`` (the hole never escapes)
        or ``delta == 0`` (the hole is trapped in dot1).
    """
    for name in ("omega_e", "omega_1", "omega_2", "omega_j", "gamma_h"):
        value = getattr(params, name)
        if isinstance(value, complex) or not math.isfinite(float(value)):
            raise ValidationError(f"{name} must be a finite real number, got {value!r}")
    if not _finite(complex(params.delta)):
        raise ValidationError(f"delta must be finite, got {params.delta!r}")
    if params.gamma_h <= 0.0:
        raise ValidationError(f"gamma_h = {params.gamma_h!r} <= 0: hole never escapes")
    if abs(params.delta) == 0.0:
        raise ValidationError("delta = 0: hole trapped in dot1")
    return params


@dataclass(frozen=True)
class SpinState:
    """Initial electron spin in the x basis, ``beta_plus|+> + beta_minus|->``.

    The amplitudes are renormalised on construction; an input whose norm
    is off by more than 1e-6 is rejected.  Use :meth:`normalized` to
    accept arbitrary non-zero amplitudes.
    """

    beta_plus: complex
    beta_minus: complex

    def __post_init__(self):
        bp, bm = complex(self.beta_plus), complex(self.beta_minus)
        if not (_finite(bp) and _finite(bm)):
            raise ValidationError("spin amplitudes must be finite")
        norm = math.hypot(abs(bp), abs(bm))
        if norm == 0.0:
            raise ValidationError("spin amplitudes are both zero")
        if abs(norm - 1.0) > _NORM_TOL:
            raise ValidationError(
                f"spin state not normalised (norm = {norm:.9g}); use SpinState.normalized"
            )
        object.__setattr__(self, "beta_plus", bp / norm)
        object.__setattr__(self, "beta_minus", bm / norm)

    @classmethod
    def normalized(cls, beta_plus: complex, beta_minus: complex) -> "SpinState":
        bp, bm = complex(beta_plus), complex(beta_minus)
        norm = math.hypot(abs(bp), abs(bm))
        if not math.isfinite(norm) or norm == 0.0:
            raise ValidationError("spin amplitudes must be finite and not both zero")
        return cls(bp / norm, bm / norm)

    @classmethod
    def up(cls) -> "SpinState":
        return to_pm_basis(1.0, 0.0)

    @classmethod
    def down(cls) -> "SpinState":
        return to_pm_basis(0.0, 1.0)

    def beta(self, sigma) -> complex:
        return self.beta_plus if parse_sigma(sigma) == 1 else self.beta_minus

    def as_array(self) -> np.ndarray:
        return np.array([self.beta_plus, self.beta_minus], dtype=complex)

    @property
    def mixing(self) -> float:
        """``|beta_+|^2 |beta_-|^2``, the weight of the exchange-sensitive part."""
        return abs(self.beta_plus) ** 2 * abs(self.beta_minus) ** 2


def to_pm_basis(alpha_up: complex, alpha_down: complex, auto_normalize: bool = False) -> SpinState:
    """Convert z-basis amplitudes to a :class:`SpinState`.

    >>> s = to_pm_basis(1, 0)
    >>> round(abs(s.beta_plus) ** 2, 12), round(abs(s.beta_minus) ** 2, 12)
    (0.5, 0.5)
    """
    au, ad = complex(alpha_up), complex(alpha_down)
    if not (_finite(au) and _finite(ad)):
        raise ValidationError("spin amplitudes must be finite")
    if au == 0 and ad == 0:
        raise ValidationError("spin amplitudes are both zero")
    bp, bm = (au + ad) / _SQRT2, (au - ad) / _SQRT2
    if auto_normalize:
        return SpinState.normalized(bp, bm)
    return SpinState(bp, bm)


def from_pm_basis(state: SpinState) -> tuple[complex, complex]:
    """Inverse of :func:`to_pm_basis`, returning ``(alpha_up, alpha_down)``."""
    bp, bm = state.beta_plus, state.beta_minus
    return (bp + bm) / _SQRT2, (bp - bm) / _SQRT2


@dataclass(frozen=True)
class DensityMatrix2:
    """Reduced 2x2 spin density matrix indexed by (+, -)."""

    rho: np.ndarray = field(repr=False)

    def __post_init__(self):
        rho = np.array(self.rho, dtype=complex)
        if rho.shape != (2, 2):
            raise ValidationError(f"density matrix must be 2x2, got {rho.shape}")
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)

    def __getitem__(self, idx):
        return self.rho[idx]

    @property
    def trace(self) -> float:
        return float(np.trace(self.rho).real)

    def expectation(self, spin: SpinState) -> float:
        """``<psi|rho|psi>`` for the pure spin state ``spin``."""
        b = spin.as_array()
        return float(np.real(np.conj(b) @ self.rho @ b))

    def check(self, herm_tol: float = 1e-12, psd_tol: float = 1e-10, trace_tol: float = 1e-10):
        """Raise :class:`ValidationError` unless rho is a valid (sub)state."""
        if np.max(np.abs(self.rho - self.rho.conj().T)) > herm_tol:
            raise ValidationError("density matrix is not Hermitian")
        evals = np.linalg.eigvalsh(0.5 * (self.rho + self.rho.conj().T))
        if evals.min() < -psd_tol:
            raise ValidationError(f"density matrix has negative eigenvalue {evals.min():.3e}")
        tr = self.trace
        if not (0.0 < tr <= 1.0 + trace_tol):
            raise ValidationError(f"density matrix trace {tr!r} outside (0, 1]")
        return self

    def in_z_basis(self) -> np.ndarray:
        """The same state written in the (up, down) basis."""
        u = np.array([[1.0, 1.0], [1.0, -1.0]]) / _SQRT2
        return u @ self.rho @ u.conj().T


def rotate_delta_phase(params: DeviceParams, phase: float) -> DeviceParams:
    return params.replace(delta=params.delta * cmath.exp(1j * phase))
