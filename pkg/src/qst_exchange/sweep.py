"""Parameter sweeps over the device parameters and the optimal-gamma search."""
from __future__ import annotations

import hashlib
import json
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from itertools import product

import numpy as np

from . import analytic, timedomain
from .core import DeviceParams, SpinState, ValidationError, validate

PARAM_NAMES = ("omega_e", "omega_1", "omega_2", "omega_j", "delta", "gamma_h")
ENGINES = ("analytic", "timedomain")

BASELINE_PARAMS = DeviceParams(omega_e=0.0, omega_1=0.0, omega_2=0.0, omega_j=0.04, delta=0.8, gamma_h=0.8)


@dataclass(frozen=True)
class Axis:
    """One swept parameter.

    With ``relative=True`` the values are in units of ``|delta|`` of the
    baseline and the output column is named ``<name>_over_delta``.
    """

    name: str
    start: float
    stop: float
    count: int
    scale: str = "linear"
    relative: bool = False

    def __post_init__(self):
        if self.name not in PARAM_NAMES:
            raise ValidationError(f"unknown sweep parameter {self.name!r}; expected one of {PARAM_NAMES}")
        if self.relative and self.name == "delta":
            raise ValidationError("delta cannot be swept relative to itself")
        if int(self.count) != self.count or self.count < 2:
            raise ValidationError(f"axis {self.name}: count must be an integer >= 2, got {self.count!r}")
        if not (math.isfinite(self.start) and math.isfinite(self.stop)) or not self.start < self.stop:
            raise ValidationError(f"axis {self.name}: need finite start < stop, got {self.start!r}, {self.stop!r}")
        if self.scale not in ("linear", "log"):
            raise ValidationError(f"axis {self.name}: scale must be 'linear' or 'log'")
        if self.scale == "log" and self.start <= 0:
            raise ValidationError(f"axis {self.name}: log axis needs start > 0")

    @property
    def column(self) -> str:
        return f"{self.name}_over_delta" if self.relative else self.name

    def values(self) -> np.ndarray:
        if self.scale == "log":
            return np.geomspace(self.start, self.stop, int(self.count))
        return np.linspace(self.start, self.stop, int(self.count))

    def to_dict(self) -> dict:
        return {
            "name": self.name, "start": self.start, "stop": self.stop,
            "count": int(self.count), "scale": self.scale, "relative": self.relative,
        }


@dataclass(frozen=True)
class TimeDomainOptions:
    levels: int = timedomain.DEFAULT_LEVELS
    bandwidth: float = timedomain.DEFAULT_BANDWIDTH
    t_final: float | None = None  # None: decay-adapted default, see timedomain_point
    dt: float | None = None


@dataclass(frozen=True)
class SweepSpec:
    axes: tuple[Axis, ...]
    baseline: DeviceParams = BASELINE_PARAMS
    spin: SpinState = field(default_factory=SpinState.up)
    engine: str = "analytic"
    options: TimeDomainOptions = TimeDomainOptions()

    def __post_init__(self):
        object.__setattr__(self, "axes", tuple(self.axes))
        if not self.axes:
            raise ValidationError("a sweep needs at least one axis")
        names = [a.name for a in self.axes]
        if len(set(names)) != len(names):
            raise ValidationError(f"duplicate sweep axes: {names}")
        if self.engine not in ENGINES:
            raise ValidationError(f"engine must be one of {ENGINES}, got {self.engine!r}")

    @property
    def columns(self) -> list[str]:
        cols = [a.column for a in self.axes] + ["fidelity", "re_i_pm"]
        if self.engine == "timedomain":
            cols.append("dot_population")
        return cols

    def to_dict(self) -> dict:
        b = self.baseline
        return {
            "axes": [a.to_dict() for a in self.axes],
            "baseline": {
                "omega_e": float(b.omega_e), "omega_1": float(b.omega_1), "omega_2": float(b.omega_2),
                "omega_j": float(b.omega_j), "delta": [complex(b.delta).real, complex(b.delta).imag],
                "gamma_h": float(b.gamma_h),
            },
            "spin": {
                "beta_plus": [self.spin.beta_plus.real, self.spin.beta_plus.imag],
                "beta_minus": [self.spin.beta_minus.real, self.spin.beta_minus.imag],
            },
            "engine": self.engine,
            "timedomain": {
                "levels": self.options.levels, "bandwidth": self.options.bandwidth,
                "t_final": self.options.t_final, "dt": self.options.dt,
            },
        }

    def digest(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()


@dataclass
class SweepResult:
    columns: list[str]
    records: list[dict]
    metadata: dict

    def column(self, name: str) -> np.ndarray:
        return np.array([np.nan if r.get(name) is None else r[name] for r in self.records], dtype=float)

    def grid(self, name: str = "fidelity") -> np.ndarray:
        """Values reshaped to the axis grid (row-major, first axis outermost)."""
        shape = tuple(ax["count"] for ax in self.metadata["spec"]["axes"])
        return self.column(name).reshape(shape)

    @property
    def errors(self) -> list[dict]:
        return [r for r in self.records if r.get("error")]


def _point_params(spec: SweepSpec, values: tuple[float, ...]) -> DeviceParams:
    changes = {}
    mag = abs(spec.baseline.delta)
    for ax, v in zip(spec.axes, values):
        changes[ax.name] = float(v) * mag if ax.relative else float(v)
    return spec.baseline.replace(**changes)


def timedomain_point(params: DeviceParams, spin: SpinState, options: TimeDomainOptions) -> timedomain.TimeDomainResult:
    """Time-domain fidelity with the sweep's continuum settings.

    Without an explicit ``t_final`` the run lasts 40 of the slower of the
    two relevant times, ``1/gamma_h`` and the slowest dot-population decay,
    capped at half the recurrence time.
    """
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", timedomain.NarrowBandWarning)
        continuum = timedomain.discretize_continuum(params, options.bandwidth, options.levels)
    t_final = options.t_final
    if t_final is None:
        slow = min(params.gamma_h, analytic.slowest_decay_rate(params))
        t_final = min(timedomain.DEFAULT_DECAY_TIMES / slow, continuum.max_time)
    return timedomain.fidelity_timedomain(params, spin, continuum, t_final, options.dt)


def _evaluate(spec: SweepSpec, values: tuple[float, ...]) -> dict:
    record = {ax.column: float(v) for ax, v in zip(spec.axes, values)}
    try:
        params = validate(_point_params(spec, values))
        if spec.engine == "analytic":
            f = analytic.fidelity(params, spin=spec.spin)
            record["fidelity"] = f
            record["re_i_pm"] = analytic.overlap_integral(1, -1, params).real
        else:
            res = timedomain_point(params, spec.spin, spec.options)
            record["fidelity"] = res.fidelity
            record["re_i_pm"] = None if math.isnan(res.i_pm.real) else res.i_pm.real
            record["dot_population"] = res.dot_population
    except (ValidationError, timedomain.IntegrationError) as exc:
        record.update({c: None for c in spec.columns if c not in record})
        record["error"] = str(exc)
    return record


def worker_count() -> int:
    env = os.environ.get("QST_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValidationError(f"QST_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def run_sweep(spec: SweepSpec, workers: int | None = None) -> SweepResult:
    """Evaluate the fidelity on every grid point of ``spec``.

    Records come back row-major over the axes as declared.  A point that
    fails validation is kept with an ``error`` entry and ``None`` values.
    """
    points = list(product(*(ax.values() for ax in spec.axes)))
    workers = worker_count() if workers is None else max(1, workers)
    if spec.engine == "timedomain" and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(lambda v: _evaluate(spec, v), points))
    else:
        records = [_evaluate(spec, v) for v in points]

    columns = spec.columns + (["error"] if any("error" in r for r in records) else [])
    for r in records:
        r.setdefault("error", None) if "error" in columns else None
        ordered = {c: r.get(c) for c in columns}
        r.clear()
        r.update(ordered)
        f = r.get("fidelity")
        assert f is None or -1e-9 <= f <= 1.0 + 1e-9, f"fidelity {f!r} outside [0, 1]"

    metadata = {
        "spec_hash": spec.digest(),
        "engine": spec.engine,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "spec": spec.to_dict(),
    }
    return SweepResult(columns=columns, records=records, metadata=metadata)


def fig3_spec(engine: str = "analytic", baseline: DeviceParams = BASELINE_PARAMS, spin: SpinState | None = None) -> SweepSpec:
    """Fidelity against the dot2 escape rate: 100 log-spaced gamma_h in [0.05, 5] meV."""
    return SweepSpec(
        axes=(Axis("gamma_h", 0.05, 5.0, 100, "log"),),
        baseline=baseline, spin=spin or SpinState.up(), engine=engine,
    )


def fig2_spec(
    engine: str = "analytic",
    baseline: DeviceParams = BASELINE_PARAMS,
    spin: SpinState | None = None,
    count: int = 41,
) -> SweepSpec:
    """Fidelity map over omega_j/|delta| in [0, 2] and gamma_h/|delta| in [0.1, 10]."""
    return SweepSpec(
        axes=(
            Axis("omega_j", 0.0, 2.0, count, "linear", relative=True),
            Axis("gamma_h", 0.1, 10.0, count, "log", relative=True),
        ),
        baseline=baseline, spin=spin or SpinState.up(), engine=engine,
    )


PRESETS = {"fig2": fig2_spec, "fig3": fig3_spec}


@dataclass(frozen=True)
class Optimum:
    gamma: float
    fidelity: float
    unimodal: bool
    flat: bool
    converged: bool
    evaluations: int


def _golden_max(f, lo: float, hi: float, tol: float, max_iter: int = 200):
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    x1 = hi - inv_phi * (hi - lo)
    x2 = lo + inv_phi * (hi - lo)
    f1, f2 = f(x1), f(x2)
    n = 2
    while hi - lo > tol and n < max_iter:
        if f1 >= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - inv_phi * (hi - lo)
            f1 = f(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + inv_phi * (hi - lo)
            f2 = f(x2)
        n += 1
    x = x1 if f1 >= f2 else x2
    return x, max(f1, f2), n, hi - lo <= tol


def _count_peaks(values: np.ndarray, atol: float) -> int:
    steps = np.diff(values)
    signs = np.sign(np.where(np.abs(steps) <= atol, 0.0, steps))
    signs = signs[signs != 0]
    return int(np.sum((signs[:-1] > 0) & (signs[1:] < 0)))


def find_optimal_gamma(
    params: DeviceParams,
    spin: SpinState,
    gamma_range: tuple[float, float] = (0.05, 5.0),
    tol: float = 1e-3,
    grid: int = 41,
) -> Optimum:
    """Maximise the analytic fidelity over ``gamma_h`` by golden-section search.

    A log-spaced pre-grid checks that F(gamma_h) has a single peak.  If it
    does not, the best grid point is returned with ``unimodal=False``; if F
    is constant (e.g. ``omega_j = 0``) the result is flagged ``flat``.
    """
    lo, hi = gamma_range
    if not (math.isfinite(lo) and math.isfinite(hi) and 0 < lo < hi):
        raise ValidationError(f"gamma range must satisfy 0 < lo < hi, got {gamma_range!r}")
    if not tol > 0:
        raise ValidationError(f"tol must be positive, got {tol!r}")
    validate(params.replace(gamma_h=lo))

    def f(g):
        return analytic.fidelity(params.replace(gamma_h=g), spin)

    gammas = np.geomspace(lo, hi, grid)
    fs = np.array([f(g) for g in gammas])
    best = int(np.argmax(fs))
    if fs.max() - fs.min() <= 1e-12:
        return Optimum(float(gammas[best]), float(fs[best]), True, True, True, grid)
    if _count_peaks(fs, 1e-13) > 1:
        return Optimum(float(gammas[best]), float(fs[best]), False, False, False, grid)

    a = gammas[max(best - 1, 0)]
    b = gammas[min(best + 1, grid - 1)]
    g_star, f_star, n, converged = _golden_max(f, a, b, tol)
    if fs[best] > f_star:
        g_star, f_star = float(gammas[best]), float(fs[best])
    return Optimum(float(g_star), float(f_star), True, False, bool(converged), grid + n)
