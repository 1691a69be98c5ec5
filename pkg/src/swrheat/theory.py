"""Closed-form constants: existence times, a-priori bounds and the contraction rate.

All functions are pure. Formulas are evaluated as printed for every spatial
dimension (the heat-kernel exponents are the three-dimensional ones).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate, optimize

from .errors import DomainError, GeometryError, ParamError, QuadratureError, SaturationError
from .model import Decomposition, Nonlinearity

QUAD_ABS_TOL = 1e-14
QUAD_REL_TOL = 1e-13
QUAD_LIMIT = 1000
MAX_SAMPLES = 4096


@dataclass(frozen=True)
class GrowthParams:
    p: float
    p1: float
    alpha: float
    l1: float
    l2: float

    @property
    def tau_denominator(self) -> float:
        """``1 - (p1 + p*alpha)``, in the factored form ``(p+3)(p-2) / (8p(p-1))``."""
        p = self.p
        return (p + 3.0) * (p - 2.0) / (8.0 * p * (p - 1.0))

    @property
    def time_exponent(self) -> float:
        """``1 + alpha - p*alpha - p1``, which simplifies to ``(p+3)/(8p)``."""
        return (self.p + 3.0) / (8.0 * self.p)

    @property
    def growth_factor(self) -> float:
        """``max(1, 2^(p-2))``."""
        return max(1.0, 2.0 ** (self.p - 2.0))


def growth_params(p: float) -> GrowthParams:
    """Exponents derived from the growth power ``p``.

    ``l1`` is the midpoint of ``(1, 1/p1)`` and ``l2`` its Hölder conjugate.
    """
    if not p > 1:
        raise ParamError(f"growth exponent p must be > 1, got {p}")
    p1 = 3.0 * (p - 1.0) / (4.0 * p)
    alpha = 0.5 * (1.0 / (p - 1.0) - 3.0 / (4.0 * p))
    l1 = (1.0 + 1.0 / p1) / 2.0
    l2 = l1 / (l1 - 1.0)
    if not l1 * p1 < 1:
        raise ParamError(f"l1*p1 = {l1 * p1} is not < 1 for p = {p}")
    return GrowthParams(p=float(p), p1=p1, alpha=alpha, l1=l1, l2=l2)


def tau(r: float, m: float, gp: GrowthParams, c_f: float) -> float:
    """Local existence time for a ball of radius ``r`` and background size ``m``.

    Strictly decreasing in ``r`` and ``m``. Undefined (ParamError) for
    ``p <= 2``, where ``1 - (p1 + p*alpha) <= 0``.
    """
    den = gp.tau_denominator
    if den <= 0:
        raise ParamError(
            f"1 - (p1 + p*alpha) = {den:.6g} <= 0 for p = {gp.p}; tau is undefined for p <= 2"
        )
    if r < 0 or m < 0:
        raise DomainError(f"tau needs r, m >= 0, got r={r}, m={m}")
    if r + m == 0:
        raise DomainError("tau(0, 0) is infinite; cap with the min(..., 1) clause")
    expo = gp.p1 + gp.p * gp.alpha
    log_base = (
        -gp.p1 * math.log(4.0 * math.pi)
        + expo * math.log(2.0)
        - math.log(den)
        + math.log(c_f * gp.growth_factor)
        + math.log(4.0 * r + 4.0 * m)
    )
    return math.exp(-8.0 * gp.p / (3.0 + gp.p) * log_base)


def max_abs_on(func, bound: float, samples: int = MAX_SAMPLES) -> float:
    """``max_{|z| <= bound} |func(z)|`` by dense sampling plus bounded Brent refinement."""
    if bound <= 0:
        return float(abs(func(np.array([0.0]))[0]))
    z = np.linspace(-bound, bound, samples)
    vals = np.abs(func(z))
    k = int(np.argmax(vals))
    best = float(vals[k])
    lo, hi = z[max(k - 1, 0)], z[min(k + 1, samples - 1)]
    if hi > lo:
        res = optimize.minimize_scalar(
            lambda s: -abs(float(func(np.array([s]))[0])),
            bounds=(lo, hi), method="bounded", options={"xatol": 1e-14 * max(1.0, bound)},
        )
        best = max(best, -float(res.fun))
    return best


def _front_factor(gp: GrowthParams, t0: float) -> float:
    # T0^((p+3)/(4p)) / (3(p-1)/(4p))
    return t0 ** ((gp.p + 3.0) / (4.0 * gp.p)) / (3.0 * (gp.p - 1.0) / (4.0 * gp.p))


def r1(M: float, f: Nonlinearity, measure: float, t0: float, gp: GrowthParams) -> float:
    """Ball radius for data bounded by ``M`` in sup norm."""
    if not (M > 0 and t0 > 0):
        raise ParamError(f"r1 needs M > 0 and t0 > 0, got M={M}, t0={t0}")
    fmax = max_abs_on(f.eval, M)
    return 2.0 * fmax * math.sqrt(measure) * _front_factor(gp, t0)


def r2(f_of_v_norm: float, t0: float, gp: GrowthParams) -> float:
    """Ball radius for data with ``||f(v)||_{L^inf(0,T;L^2)} = f_of_v_norm``."""
    if not t0 > 0:
        raise ParamError(f"r2 needs t0 > 0, got {t0}")
    return 2.0 * _front_factor(gp, t0) * f_of_v_norm


def _g_scale(horizon: float, gp: GrowthParams) -> float:
    q = gp.p1 * gp.l1
    inner = (4.0 * math.pi) ** (-q) * horizon ** (1.0 - q) / (1.0 - q)
    return inner ** (-gp.l2 / gp.l1)


def _g_integrand(gp: GrowthParams, c_f: float, m1: float, m2: float):
    c = c_f * gp.growth_factor
    e1 = (gp.p - 1.0) / gp.l2
    e2 = 1.0 / gp.l2
    l2 = gp.l2

    def integrand(zeta):
        return (c * (m1 + zeta**e1) * zeta**e2 + m2) ** (-l2)

    return integrand


def _check_g_args(r, horizon, m1, m2, gp):
    if gp.p1 * gp.l1 >= 1:
        raise ParamError(f"l1*p1 = {gp.p1 * gp.l1} >= 1")
    if r < 0:
        raise DomainError(f"G needs r >= 0, got {r}")
    if not horizon > 0:
        raise ParamError(f"G needs a positive horizon, got {horizon}")
    if m1 < 0 or m2 < 0:
        raise ParamError(f"G needs m1, m2 >= 0, got {m1}, {m2}")
    if m2 == 0 and r > 0:
        # integrand ~ zeta^-1 (m1 > 0) or zeta^-p (m1 = 0) at the origin
        raise QuadratureError("G integrand is not integrable at 0 when m2 = 0")


def g_of_r(r: float, horizon: float, m1: float, m2: float, gp: GrowthParams, c_f: float) -> float:
    """Gronwall-type comparison function ``G(r; T, m1, m2)``; strictly increasing in ``r``."""
    _check_g_args(r, horizon, m1, m2, gp)
    if r == 0:
        return 0.0
    val, err = integrate.quad(
        _g_integrand(gp, c_f, m1, m2), 0.0, r,
        epsabs=QUAD_ABS_TOL, epsrel=QUAD_REL_TOL, limit=QUAD_LIMIT,
    )
    if not math.isfinite(val):
        raise QuadratureError(f"G quadrature failed (value {val}, error estimate {err})")
    return _g_scale(horizon, gp) * val


def g_supremum(horizon: float, m1: float, m2: float, gp: GrowthParams, c_f: float) -> float:
    """``lim_{r -> inf} G(r)``; finite because the integrand decays like ``zeta^-p``."""
    _check_g_args(1.0, horizon, m1, m2, gp)
    integrand = _g_integrand(gp, c_f, m1, m2)
    head, _ = integrate.quad(integrand, 0.0, 1.0, epsabs=QUAD_ABS_TOL, epsrel=QUAD_REL_TOL,
                             limit=QUAD_LIMIT)
    tail, _ = integrate.quad(integrand, 1.0, math.inf, epsabs=QUAD_ABS_TOL, epsrel=QUAD_REL_TOL,
                             limit=QUAD_LIMIT)
    return _g_scale(horizon, gp) * (head + tail)


def g_inverse(t: float, horizon: float, m1: float, m2: float, gp: GrowthParams, c_f: float) -> float:
    """Inverse of :func:`g_of_r` by bracketing and bisection on the monotone map."""
    if t < 0:
        raise DomainError(f"g_inverse needs t >= 0, got {t}")
    if t == 0:
        return 0.0
    sup = g_supremum(horizon, m1, m2, gp, c_f)
    if t >= sup:
        raise SaturationError(
            f"G saturates at {sup:.12g} <= requested t = {t:.12g}", supremum=sup
        )
    lo, hi = 0.0, 1.0
    while g_of_r(hi, horizon, m1, m2, gp, c_f) < t:
        lo, hi = hi, 2.0 * hi
        if hi > 1e300:
            raise SaturationError(f"no bracket for G(r) = {t}", supremum=sup)
    # bisect to the resolution of the floating point grid
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if g_of_r(mid, horizon, m1, m2, gp, c_f) < t:
            lo = mid
        else:
            hi = mid
    glo = g_of_r(lo, horizon, m1, m2, gp, c_f)
    ghi = g_of_r(hi, horizon, m1, m2, gp, c_f)
    r = lo if abs(glo - t) <= abs(ghi - t) else hi
    return r


M_STAR_VARIANTS = ("standard", "restated")


def m_star(t_star: float, M: float, measure: float, f: Nonlinearity, gp: GrowthParams,
           c_f: float, variant: str = "standard") -> float:
    """Sup-norm bound on the correction ``w`` over ``(0, T_*)``.

    ``variant="standard"`` uses the power ``(p-1)/l2`` on both occurrences of
    ``G^-1(T_*)``; ``variant="restated"`` uses ``1/l2`` on the second one.
    The comparison function is evaluated with horizon ``T = T_*``.
    """
    if variant not in M_STAR_VARIANTS:
        raise ParamError(f"unknown M_* variant {variant!r}")
    fmax = max_abs_on(f.eval, M)
    m1 = M ** (gp.p - 1.0) * measure ** ((gp.p - 1.0) / (2.0 * gp.p))
    m2 = math.sqrt(measure) * fmax
    ginv = g_inverse(t_star, t_star, m1, m2, gp, c_f)
    e_first = (gp.p - 1.0) / gp.l2
    e_second = e_first if variant == "standard" else 1.0 / gp.l2
    lead = (4.0 * t_star / math.pi**3) ** 0.25
    return lead * (c_f * gp.growth_factor * (ginv**e_first + m1) * ginv**e_second + m2)


def t_star(M: float, f: Nonlinearity, measure: float, t0: float, gp: GrowthParams,
           c_f: float) -> float:
    """``min(T0, 1, tau(R1, M^(p-1) m^((p-1)/(2p))))``."""
    radius = r1(M, f, measure, t0, gp)
    m = M ** (gp.p - 1.0) * measure ** ((gp.p - 1.0) / (2.0 * gp.p))
    return min(t0, 1.0, tau(radius, m, gp, c_f))


def t_star_common(M_underbar: float, per_band_measures: Sequence[float], f: Nonlinearity,
                  gp: GrowthParams, c_f: float, t0: float, t_star_value: float,
                  measure: float) -> float:
    """Common existence time of all subdomain problems at all iterations.

    ``R1`` is taken at level ``M_underbar`` on the whole domain of measure
    ``measure`` (the largest, hence most conservative, choice).
    """
    if any(m <= 0 for m in per_band_measures):
        raise ParamError("band measures must be positive")
    radius = r1(M_underbar, f, measure, t0, gp)
    taus = [
        tau(radius, M_underbar ** (gp.p - 1.0) * mj ** ((gp.p - 1.0) / (2.0 * gp.p)), gp, c_f)
        for mj in per_band_measures
    ]
    return min([t0, 1.0, t_star_value] + taus)


def epsilon_bar(gamma: float, decomp: Decomposition) -> float:
    """Per-window contraction rate ``sqrt(gamma/2) * prod(S_j) / prod(L_2..L_{I-1})``."""
    if decomp.count < 2:
        raise GeometryError("epsilon_bar needs at least two bands")
    if not gamma > 0:
        raise ParamError(f"gamma must be > 0, got {gamma}")
    num = math.prod(decomp.overlaps)
    den = math.prod(decomp.lengths[1:-1])
    return math.sqrt(gamma / 2.0) * num / den


def choose_gamma(error_bound: float, f: Nonlinearity, p_ctrl, margin: float = 0.1) -> float:
    """Smallest weight exponent for which ``gamma/2`` dominates ``K(C2) max|f'|``."""
    if not error_bound > 0:
        raise ParamError(f"error bound must be > 0, got {error_bound}")
    if margin < 0:
        raise ParamError(f"margin must be >= 0, got {margin}")
    fprime = max_abs_on(f.deriv, error_bound)
    return 2.0 * (1.0 + margin) * p_ctrl.k_of(error_bound) * fprime


@dataclass
class TheoryReport:
    """All constants for one configured problem; failed entries are ``None``."""

    r1: float | None = None
    r2: float | None = None
    tau: float | None = None
    t_star: float | None = None
    t_star_common: float | None = None
    m_star: float | None = None
    gamma: float | None = None
    epsilon_bar: float | None = None
    provenance: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def to_dict(self) -> dict:
        return asdict(self)
