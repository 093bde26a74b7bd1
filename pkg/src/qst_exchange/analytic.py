"""
Asymptotic (t -> infinity) spin state of the photo-created electron.

After the hole has tunnelled into the continuum, the reduced spin state
in the (+, -) basis is

    rho_ss'(inf) = beta_s conj(beta_s') I_ss',

    I_ss' = (|delta|^2 gamma_h / pi) * Int dw / (f_s(w) conj(f_s'(w))),

    f_s(w) = (omega_1 - w + s*omega_j)(omega_2 - w - i*gamma_h) - |delta|^2.

Both roots of ``f_s`` are the complex eigen-energies of the damped
two-level (dot1 hole, dot2 hole) problem and lie strictly below the
real axis when ``gamma_h > 0``.  The integrand is rational and decays as
``w**-4``, so the integral is evaluated in closed form by residues; an
adaptive quadrature on the real line is kept as an independent check.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import integrate

from .core import DensityMatrix2, DeviceParams, SpinState, parse_sigma, validate

QUAD_EPSREL = 1e-10
TAIL_FRACTION = 1e-14


class Method(str, Enum):
    RESIDUE = "residue"
    QUADRATURE = "quadrature"


@dataclass(frozen=True)
class OverlapIntegrals:
    i_pp: complex
    i_mm: complex
    i_pm: complex
    method: Method

    @property
    def i_mp(self) -> complex:
        return self.i_pm.conjugate()

    def get(self, sigma, sigma_prime) -> complex:
        s, sp = parse_sigma(sigma), parse_sigma(sigma_prime)
        if s == sp:
            return self.i_pp if s == 1 else self.i_mm
        return self.i_pm if s == 1 else self.i_mp


def eval_f(sigma, omega, params: DeviceParams):
    """Characteristic quadratic ``f_sigma(omega)``; ``omega`` may be an array."""
    wj = parse_sigma(sigma) * params.omega_j
    return (params.omega_1 - omega + wj) * (params.omega_2 - omega - 1j * params.gamma_h) - params.delta_sq


def f_roots(sigma, params: DeviceParams) -> tuple[complex, complex]:
    """Roots of ``f_sigma`` measured from ``omega_2``.

    The larger-magnitude root is taken from the quadratic formula and the
    other from the product of roots, which avoids cancellation when the
    two levels are nearly degenerate.
    """
    a = params.omega_1 - params.omega_2 + parse_sigma(sigma) * params.omega_j
    c = -1j * params.gamma_h
    half_sum = 0.5 * (a + c)
    product = a * c - params.delta_sq
    disc = cmath.sqrt(0.25 * (a - c) ** 2 + params.delta_sq)
    big = half_sum + disc if abs(half_sum + disc) >= abs(half_sum - disc) else half_sum - disc
    if big == 0:
        return 0j, 0j
    return big, product / big


def _residue_integral(sigma: int, sigma_prime: int, params: DeviceParams) -> complex:
    # On the real line the integrand is 1 / (f(w) g(w)) with
    #   f(w) = f_sigma(w)             = w^2 + p1 w + q1, roots r_k (Im < 0)
    #   g(w) = conj(f_sigma'(conj w)) = w^2 + p2 w + q2, roots s_j (Im > 0).
    # Closing upward, the residues at s_1, s_2 sum to the divided difference
    # of 1/f over (s_1, s_2):
    #   -(s1 + s2 - r1 - r2) / prod_{j,k} (s_j - r_k) = -(p1 - p2) / Res(f, g)
    # with Res(f, g) = (q1 - q2)^2 + (p1 - p2)(p1 q2 - p2 q1).  Measuring
    # energies from omega_2, a = omega_1 - omega_2 + sigma omega_j,
    # b = same with sigma', u = b - a, D = |delta|^2, this expands to
    #   I = (4 D g^2 - 2i g D u) / (4 g^2 D - u^2 (D + 2 g^2) - 2i g u (ab + 2D + g^2))
    # which is exactly 1 at u = 0 and involves no root differences, so
    # double poles and nearly closed channels lose no precision.
    g, dsq = params.gamma_h, params.delta_sq
    detuning = params.omega_1 - params.omega_2
    a = detuning + sigma * params.omega_j
    b = detuning + sigma_prime * params.omega_j
    u = (sigma_prime - sigma) * params.omega_j
    num = complex(4.0 * dsq * g * g, -2.0 * g * dsq * u)
    den = complex(4.0 * g * g * dsq - u * u * (dsq + 2.0 * g * g), -2.0 * g * u * (a * b + 2.0 * dsq + g * g))
    return num / den


def _quadrature_integral(sigma: int, sigma_prime: int, params: DeviceParams) -> complex:
    shifted = params.replace(omega_e=0.0, omega_1=params.omega_1 - params.omega_2, omega_2=0.0)

    def integrand(w):
        return 1.0 / (eval_f(sigma, w, shifted) * np.conj(eval_f(sigma_prime, w, shifted)))

    poles = [r.real for r in f_roots(sigma, shifted) + f_roots(sigma_prime, shifted)]
    center = 0.5 * (min(poles) + max(poles))
    spread = max(poles) - min(poles)

    probe = np.concatenate([poles, center + np.linspace(-1, 1, 201) * (spread + 4 * params.gamma_h)])
    peak = float(np.max(np.abs(integrand(probe))))
    # Tail decays as |w - center|^-4; start from that estimate and widen
    # until both ends are below TAIL_FRACTION * peak.
    # The radius also stays >= 100x every root offset so that the tail series
    # added below converges fast.
    roots = f_roots(sigma, shifted) + f_roots(sigma_prime, shifted)
    reach = max(abs(z - center) for z in roots)
    radius = max((TAIL_FRACTION * peak) ** -0.25, 100.0 * reach, 1.0)
    while max(abs(integrand(center - radius)), abs(integrand(center + radius))) >= TAIL_FRACTION * peak:
        radius *= 2.0

    # Panels: around every pole, shells growing geometrically from its
    # distance to the real axis, so narrow and broad peaks are both resolved.
    edges = set()
    for z in roots:
        width = max(abs(z.imag), 1e-300)
        edges.add(z.real)
        while width < 2.0 * radius:
            edges.update((z.real - width, z.real + width))
            width *= 4.0
    lo, hi = center - radius, center + radius
    edges = [lo] + sorted(e for e in edges if lo < e < hi) + [hi]

    # |I_ss'| <= 1, so the raw integral is at most pi / (|delta|^2 gamma);
    # the absolute floor keeps near-zero imaginary panels from stalling.
    epsabs = 1e-3 * QUAD_EPSREL * math.pi / (params.delta_sq * params.gamma_h)
    value = 0j
    for a, b in zip(edges[:-1], edges[1:]):
        if b > a:
            part, _ = integrate.quad(
                integrand, a, b, epsabs=epsabs, epsrel=QUAD_EPSREL, limit=500, complex_func=True,
            )
            value += part

    # Tails beyond the radius from the large-|u| expansion of
    # 1 / prod_k (u - d_k), u = w - center: the 1/u^5 term is odd and drops.
    d = [r - center for r in f_roots(sigma, shifted)]
    d += [q.conjugate() - center for q in f_roots(sigma_prime, shifted)]
    h2 = sum(d[j] * d[k] for j in range(4) for k in range(j, 4))
    value += 2.0 / (3.0 * radius**3) + 2.0 * h2 / (5.0 * radius**5)
    return params.delta_sq * params.gamma_h / math.pi * value


def overlap_integral(sigma, sigma_prime, params: DeviceParams, method=Method.RESIDUE) -> complex:
    """Escaped-amplitude overlap ``I_{sigma sigma'}`` (dimensionless)."""
    s, sp = parse_sigma(sigma), parse_sigma(sigma_prime)
    validate(params)
    if Method(method) is Method.QUADRATURE:
        return _quadrature_integral(s, sp, params)
    return _residue_integral(s, sp, params)


def overlap_integrals(params: DeviceParams, method=Method.RESIDUE) -> OverlapIntegrals:
    method = Method(method)
    return OverlapIntegrals(
        i_pp=overlap_integral(1, 1, params, method),
        i_mm=overlap_integral(-1, -1, params, method),
        i_pm=overlap_integral(1, -1, params, method),
        method=method,
    )


def rho_infinity(params: DeviceParams, spin: SpinState, method=Method.RESIDUE) -> DensityMatrix2:
    """Reduced spin density matrix after the hole has escaped."""
    ints = overlap_integrals(params, method)
    b = spin.as_array()
    table = np.array([[ints.i_pp, ints.i_pm], [ints.i_mp, ints.i_mm]])
    return DensityMatrix2(np.outer(b, b.conj()) * table)


def fidelity(params: DeviceParams, spin: SpinState, method=Method.RESIDUE) -> float:
    """Transfer fidelity ``1 - 2 |b+|^2 |b-|^2 (1 - Re I_+-)``.

    >>> from qst_exchange.core import DeviceParams, SpinState
    >>> round(fidelity(DeviceParams(omega_j=0.04, delta=0.8, gamma_h=0.8), SpinState.up()), 4)
    0.9963
    """
    mixing = spin.mixing
    if mixing == 0.0:
        validate(params)
        return 1.0
    i_pm = overlap_integral(1, -1, params, method)
    f = 1.0 - 2.0 * mixing * (1.0 - i_pm.real)
    # |I_+-| <= 1 and mixing <= 1/4 bound F to [0, 1]; a violation is a bug.
    assert -1e-12 <= f <= 1.0 + 1e-12, f"fidelity {f!r} outside [0, 1]"
    return f


def fidelity_from_rho(params: DeviceParams, spin: SpinState, method=Method.RESIDUE) -> float:
    """Same quantity evaluated as ``<psi(0)|rho(inf)|psi(0)>``."""
    return rho_infinity(params, spin, method).expectation(spin)


def slowest_decay_rate(params: DeviceParams) -> float:
    """Smallest population decay rate ``2 |Im root|`` over both branches."""
    return min(2.0 * abs(r.imag) for s in (1, -1) for r in f_roots(s, params))
