"""
Time-domain reference solver.

The hole continuum is replaced by ``L`` discrete levels on a uniform grid
of width ``bandwidth`` centred on ``omega_2``, each coupled to dot2 with
the same matrix element ``W``.  Choosing ``W**2 = gamma_h * dw / pi``
makes the discretised spectral density equal ``gamma_h`` in the flat-band
limit, without any Markov or Laplace step in the solver itself.

The amplitudes of both spin branches are stacked as columns:

    phi1[s], phi2[s]  -> shape (2,)
    psi[l, s]         -> shape (L, 2)

with column 0 = ``+`` and column 1 = ``-``.  The equations of motion are
integrated with classical RK4 in a frame rotating at ``omega_e + omega_2``,
which only strips a global phase and therefore leaves every element of
the reduced density matrix unchanged.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numba
import numpy as np

from .core import DensityMatrix2, DeviceParams, SpinState, ValidationError, validate

DEFAULT_LEVELS = 4001
DEFAULT_BANDWIDTH = 40.0  # meV
DEFAULT_DECAY_TIMES = 40.0
DT_SAFETY = 0.05
NORM_DRIFT_LIMIT = 1e-6


class IntegrationError(RuntimeError):
    """The time stepping left its accuracy budget or validity window."""


class NarrowBandWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ContinuumModel:
    levels: np.ndarray = field(repr=False)
    coupling: float
    center: float
    bandwidth: float
    narrow_band: bool = False

    @property
    def size(self) -> int:
        return len(self.levels)

    @property
    def spacing(self) -> float:
        return self.bandwidth / (self.size - 1)

    @property
    def recurrence_time(self) -> float:
        """Revival time ``2 pi / dw`` of the discretised continuum."""
        return 2.0 * math.pi / self.spacing

    @property
    def max_time(self) -> float:
        return 0.5 * self.recurrence_time

    def spectral_density(self) -> float:
        """Flat-band rate ``pi W^2 / dw`` carried by the grid."""
        return math.pi * self.coupling**2 / self.spacing


def discretize_continuum(
    params: DeviceParams, bandwidth: float = DEFAULT_BANDWIDTH, levels: int = DEFAULT_LEVELS
) -> ContinuumModel:
    """Uniform grid of ``levels`` hole states spanning ``bandwidth`` around ``omega_2``.

    A band narrower than ten times the largest internal energy scale is
    flagged (``narrow_band``), since the flat-band picture then breaks down.
    """
    validate(params)
    if int(levels) != levels or levels < 3 or levels % 2 == 0:
        raise ValidationError(f"levels must be an odd integer >= 3, got {levels!r}")
    if not (math.isfinite(bandwidth) and bandwidth > 0):
        raise ValidationError(f"bandwidth must be positive, got {bandwidth!r}")
    levels = int(levels)
    dw = bandwidth / (levels - 1)
    grid = params.omega_2 + (np.arange(levels) - (levels - 1) // 2) * dw
    scale = max(params.gamma_h, abs(params.delta), abs(params.omega_1 - params.omega_2), abs(params.omega_j))
    narrow = bandwidth < 10.0 * scale
    if narrow:
        warnings.warn(
            f"bandwidth {bandwidth} meV < 10 x largest energy scale {scale:.4g} meV",
            NarrowBandWarning, stacklevel=2,
        )
    grid.setflags(write=False)
    return ContinuumModel(
        levels=grid, coupling=math.sqrt(params.gamma_h * dw / math.pi),
        center=params.omega_2, bandwidth=bandwidth, narrow_band=narrow,
    )


@dataclass(frozen=True)
class StateVector:
    phi1: np.ndarray
    phi2: np.ndarray
    psi: np.ndarray = field(repr=False)
    t: float
    frame: float = 0.0  # rotating-frame energy; lab amplitudes = stored * exp(-i frame t)

    @property
    def norm(self) -> float:
        return float(np.sum(np.abs(self.phi1) ** 2) + np.sum(np.abs(self.phi2) ** 2) + np.sum(np.abs(self.psi) ** 2))

    @property
    def dot_population(self) -> float:
        """Probability that the hole is still in dot1 or dot2."""
        return float(np.sum(np.abs(self.phi1) ** 2) + np.sum(np.abs(self.phi2) ** 2))

    def lab_frame(self) -> "StateVector":
        ph = np.exp(-1j * self.frame * self.t)
        return StateVector(self.phi1 * ph, self.phi2 * ph, self.psi * ph, self.t, 0.0)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.phi1[None, :], self.phi2[None, :], self.psi]).ravel()


def initial_state(spin: SpinState, n_levels: int, frame: float = 0.0) -> StateVector:
    """Electron-hole pair in dot1 with spin amplitudes ``(beta_+, beta_-)``."""
    return StateVector(
        phi1=spin.as_array(), phi2=np.zeros(2, complex),
        psi=np.zeros((n_levels, 2), complex), t=0.0, frame=frame,
    )


def _rhs_factory(params: DeviceParams, continuum: ContinuumModel):
    frame = params.omega_e + params.omega_2
    e1 = params.omega_e + params.omega_1 + np.array([params.omega_j, -params.omega_j]) - frame
    e2 = params.omega_e + params.omega_2 - frame
    el = (params.omega_e + continuum.levels - frame)[:, None]
    d, dc, w = params.delta, np.conj(params.delta), continuum.coupling

    def rhs(p1, p2, ps):
        dp1 = -1j * (e1 * p1 + d * p2)
        dp2 = -1j * (e2 * p2 + dc * p1 + w * ps.sum(axis=0))
        dps = -1j * (el * ps + w * p2)
        return dp1, dp2, dps

    diag = max(float(np.max(np.abs(e1))), abs(e2), float(np.max(np.abs(el))))
    return rhs, frame, diag


def max_stable_dt(params: DeviceParams, continuum: ContinuumModel) -> float:
    """Largest admissible step: ``0.05 / Omega_max`` with Omega_max the
    largest diagonal magnitude in the rotating frame."""
    _, _, diag = _rhs_factory(params, continuum)
    return DT_SAFETY / max(diag, 1e-300)


def default_t_final(params: DeviceParams) -> float:
    return DEFAULT_DECAY_TIMES / params.gamma_h


@numba.njit(cache=True, nogil=True)
def _rk4_branch(a1, a2, psi, e1, e2, el, d, w, h, n):
    # One spin branch: fused RK4 over (phi1, phi2, psi_l), psi updated in place.
    size = el.shape[0]
    k = np.empty((3, size), np.complex128)
    dc = np.conj(d)
    half = 0.5 * h
    for _ in range(n):
        s = 0j
        for l in range(size):
            s += psi[l]
        k11 = -1j * (e1 * a1 + d * a2)
        k12 = -1j * (e2 * a2 + dc * a1 + w * s)
        for l in range(size):
            k[0, l] = -1j * (el[l] * psi[l] + w * a2)

        b1 = a1 + half * k11
        b2 = a2 + half * k12
        s = 0j
        for l in range(size):
            s += psi[l] + half * k[0, l]
        k21 = -1j * (e1 * b1 + d * b2)
        k22 = -1j * (e2 * b2 + dc * b1 + w * s)
        for l in range(size):
            k[1, l] = -1j * (el[l] * (psi[l] + half * k[0, l]) + w * b2)

        b1 = a1 + half * k21
        b2 = a2 + half * k22
        s = 0j
        for l in range(size):
            s += psi[l] + half * k[1, l]
        k31 = -1j * (e1 * b1 + d * b2)
        k32 = -1j * (e2 * b2 + dc * b1 + w * s)
        for l in range(size):
            k[2, l] = -1j * (el[l] * (psi[l] + half * k[1, l]) + w * b2)

        b1 = a1 + h * k31
        b2 = a2 + h * k32
        s = 0j
        for l in range(size):
            s += psi[l] + h * k[2, l]
        k41 = -1j * (e1 * b1 + d * b2)
        k42 = -1j * (e2 * b2 + dc * b1 + w * s)
        for l in range(size):
            k4 = -1j * (el[l] * (psi[l] + h * k[2, l]) + w * b2)
            psi[l] += (h / 6.0) * (k[0, l] + 2.0 * k[1, l] + 2.0 * k[2, l] + k4)
        a1 += (h / 6.0) * (k11 + 2.0 * k21 + 2.0 * k31 + k41)
        a2 += (h / 6.0) * (k12 + 2.0 * k22 + 2.0 * k32 + k42)
    return a1, a2


def _rk4_joint(rhs, p1, p2, ps, h, n):
    # Both branches stacked as columns; plain numpy.
    for _ in range(n):
        k1 = rhs(p1, p2, ps)
        k2 = rhs(p1 + 0.5 * h * k1[0], p2 + 0.5 * h * k1[1], ps + 0.5 * h * k1[2])
        k3 = rhs(p1 + 0.5 * h * k2[0], p2 + 0.5 * h * k2[1], ps + 0.5 * h * k2[2])
        k4 = rhs(p1 + h * k3[0], p2 + h * k3[1], ps + h * k3[2])
        p1 = p1 + (h / 6.0) * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
        p2 = p2 + (h / 6.0) * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
        ps = ps + (h / 6.0) * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
    return p1, p2, ps


def evolve(
    params: DeviceParams,
    continuum: ContinuumModel,
    spin: SpinState,
    t_final: float,
    dt: float | None = None,
    check_dt: bool = True,
    joint: bool = False,
) -> StateVector:
    """Integrate the double-dot plus continuum amplitudes up to ``t_final``.

    The step is shortened so that an integer number of steps lands exactly
    on ``t_final``.  Amplitudes are returned in the rotating frame.  By
    default each spin branch is stepped separately by a compiled kernel;
    ``joint=True`` steps both together with plain numpy.

    Raises
    ------
    ValidationError
        If ``t_final`` passes half the recurrence time or ``dt`` exceeds
        :func:`max_stable_dt` (unless ``check_dt`` is False).
    IntegrationError
        If the norm drifts by more than 1e-6.
    """
    validate(params)
    if not (t_final >= 0 and math.isfinite(t_final)):
        raise ValidationError(f"t_final must be finite and >= 0, got {t_final!r}")
    if t_final > continuum.max_time:
        raise ValidationError(
            f"t_final = {t_final:.6g} exceeds half the recurrence time ({continuum.max_time:.6g})"
        )
    rhs, frame, _ = _rhs_factory(params, continuum)
    dt_max = max_stable_dt(params, continuum)
    if dt is None:
        dt = dt_max
    elif not (dt > 0):
        raise ValidationError(f"dt must be positive, got {dt!r}")
    elif check_dt and dt > dt_max * (1 + 1e-12):
        raise ValidationError(f"dt = {dt:.6g} exceeds the stable step {dt_max:.6g}")

    state = initial_state(spin, continuum.size, frame)
    n_steps = math.ceil(t_final / dt - 1e-9) if t_final > 0 else 0
    if n_steps == 0:
        return state
    h = t_final / n_steps

    if joint:
        p1, p2, ps = _rk4_joint(rhs, state.phi1, state.phi2, state.psi, h, n_steps)
    else:
        e1 = params.omega_1 - params.omega_2 + np.array([params.omega_j, -params.omega_j])
        el = np.ascontiguousarray(continuum.levels - params.omega_2, dtype=float)
        d = complex(params.delta)
        p1 = state.phi1.copy()
        p2 = state.phi2.copy()
        cols = []
        for branch in range(2):
            psi = np.zeros(continuum.size, np.complex128)
            p1[branch], p2[branch] = _rk4_branch(
                p1[branch], p2[branch], psi, float(e1[branch]), 0.0, el, d, continuum.coupling, h, n_steps
            )
            cols.append(psi)
        ps = np.stack(cols, axis=1)

    out = StateVector(p1, p2, ps, t_final, frame)
    drift = abs(out.norm - 1.0)
    if drift > NORM_DRIFT_LIMIT:
        raise IntegrationError(f"norm drifted by {drift:.3e} over t = {t_final:.6g}")
    return out


@dataclass(frozen=True)
class ReducedState:
    rho: DensityMatrix2
    rho_escaped: DensityMatrix2
    dot_population: float


def rho_at(state: StateVector) -> ReducedState:
    """Reduced spin density matrix, tracing over the hole position.

    ``rho`` includes the dot amplitudes, ``rho_escaped`` only the continuum
    part; the residual dot population is their trace difference.
    """
    escaped = state.psi.T @ state.psi.conj()
    dots = np.outer(state.phi1, state.phi1.conj()) + np.outer(state.phi2, state.phi2.conj())
    return ReducedState(DensityMatrix2(escaped + dots), DensityMatrix2(escaped), state.dot_population)


@dataclass(frozen=True)
class TimeDomainResult:
    fidelity: float
    fidelity_escaped: float
    rho: DensityMatrix2
    dot_population: float
    norm_drift: float
    t_final: float
    dt: float
    i_pm: complex  # rho_+- / (beta_+ conj(beta_-)); NaN when either beta is 0


def fidelity_timedomain(
    params: DeviceParams,
    spin: SpinState,
    continuum: ContinuumModel | None = None,
    t_final: float | None = None,
    dt: float | None = None,
) -> TimeDomainResult:
    """Fidelity ``<psi(0)|rho(t_final)|psi(0)>`` from the discretised model."""
    if continuum is None:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NarrowBandWarning)
            continuum = discretize_continuum(params)
    if t_final is None:
        t_final = min(default_t_final(params), continuum.max_time)
    if dt is None:
        dt = max_stable_dt(params, continuum)
    state = evolve(params, continuum, spin, t_final, dt)
    reduced = rho_at(state)
    weight = spin.beta_plus * spin.beta_minus.conjugate()
    i_pm = reduced.rho[0, 1] / weight if abs(weight) > 0 else complex("nan")
    return TimeDomainResult(
        fidelity=reduced.rho.expectation(spin),
        fidelity_escaped=reduced.rho_escaped.expectation(spin),
        rho=reduced.rho,
        dot_population=reduced.dot_population,
        norm_drift=abs(state.norm - 1.0),
        t_final=t_final,
        dt=t_final / max(1, math.ceil(t_final / dt - 1e-9)),
        i_pm=complex(i_pm),
    )
