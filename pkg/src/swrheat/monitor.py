"""Error functionals, decay-rate fits and bound checks for SWR runs."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, GridMismatch, InsufficientData, RangeError
from .model import Decomposition
from .solver import SpaceTimeField
from .swr import SwrState

BOUND_TOL = 1e-9
BARRIER_TOL = 1e-6
WINDOWS = ("shifted", "literal")


@dataclass(frozen=True)
class ControllingFunction:
    """Convex auxiliary function applied to the error inside the weighted norm.

    ``deriv2`` returns NaN where the second derivative does not exist.
    """

    name: str
    eval: Callable[[np.ndarray], np.ndarray]
    deriv: Callable[[np.ndarray], np.ndarray]
    deriv2: Callable[[np.ndarray], np.ndarray]
    k_of: Callable[[float], float]

    def __call__(self, x):
        return self.eval(x)

    def validate(self, levels: Sequence[float] = (1e-2, 1.0, 1e3)) -> list[str]:
        """Sampled check of C^2 regularity, convexity, positivity and the K(M) ratio bound."""
        mag = np.logspace(-6, 3, 901)
        x = np.concatenate([-mag[::-1], np.linspace(-1.0, 1.0, 401), mag])
        x = np.unique(np.concatenate([x, [0.0]]))
        problems = []
        with np.errstate(all="ignore"):
            P, dP, d2P = self.eval(x), self.deriv(x), self.deriv2(x)
        if not (np.all(np.isfinite(P)) and np.all(np.isfinite(dP)) and np.all(np.isfinite(d2P))):
            problems.append(f"{self.name}: not twice differentiable on the samples")
        if np.any(P < 0) or np.any(d2P < 0):
            problems.append(f"{self.name}: P or P'' negative on the samples")
        zero = x == 0
        if np.any(P[zero] != 0) or np.any(P[~zero] == 0):
            problems.append(f"{self.name}: P must vanish exactly at 0 and only there")
        if np.any(dP[zero] != 0):
            problems.append(f"{self.name}: P'(0) != 0")
        if not problems:
            for level in levels:
                sel = (~zero) & (np.abs(x) <= level)
                ratio = np.abs(x[sel] * dP[sel] / P[sel])
                if np.any(ratio > self.k_of(level) * (1 + 1e-12)):
                    problems.append(f"{self.name}: |x P'/P| exceeds K({level:g})")
        return problems


def power_control(q: float = 2.0) -> ControllingFunction:
    """``P(x) = |x|^q`` with ``q >= 2``; ``x P'/P = q`` identically."""
    if q < 2:
        raise ConfigError(f"controlling power must be >= 2, got {q}")
    if q == 2:
        return ControllingFunction(
            "x^2", lambda x: x * x, lambda x: 2.0 * x,
            lambda x: np.full_like(np.asarray(x, float), 2.0), lambda M: 2.0,
        )
    return ControllingFunction(
        f"|x|^{q:g}",
        lambda x: np.abs(x) ** q,
        lambda x: q * np.sign(x) * np.abs(x) ** (q - 1),
        lambda x: q * (q - 1) * np.abs(x) ** (q - 2),
        lambda M: float(q),
    )


def error_field(iterate: SpaceTimeField, reference: SpaceTimeField) -> SpaceTimeField:
    """Nodewise ``iterate - reference``; the reference must already be restricted to the band."""
    if not iterate.same_grid(reference):
        raise GridMismatch(
            f"grids differ: {iterate.values.shape} @ {iterate.z_offset} vs "
            f"{reference.values.shape} @ {reference.z_offset}"
        )
    return SpaceTimeField(iterate.values - reference.values, iterate.dt, iterate.spacing,
                          iterate.z_offset)


def restrict(reference: SpaceTimeField, decomp: Decomposition, j: int) -> SpaceTimeField:
    lo, hi = decomp.index_bands[j]
    return SpaceTimeField(reference.values[..., lo:hi + 1], reference.dt, reference.spacing, lo,
                          reference.diverged_step)


def weighted_error(errors: Sequence[SpaceTimeField], P: ControllingFunction, gamma: float) -> float:
    """``max`` over bands, steps and nodes of ``P(e) exp(-gamma t)``."""
    if gamma < 0:
        raise ConfigError(f"gamma must be >= 0, got {gamma}")
    best = 0.0
    for e in errors:
        weight = np.exp(-gamma * e.times)
        vals = P(e.values)
        per_step = vals.reshape(vals.shape[0], -1).max(axis=1) * weight
        best = max(best, float(per_step.max()))
    return best


def window_offsets(count: int, window: str = "shifted") -> range:
    """Offsets ``j`` with ``Ebar_k = max_j E_(k+j)``: ``0..I-2`` or ``1..I-1``."""
    if window not in WINDOWS:
        raise ConfigError(f"unknown window convention {window!r}")
    width = max(count - 1, 1)
    return range(0, width) if window == "shifted" else range(1, width + 1)


def windowed_error(series: Sequence[float], count: int, k: int, window: str = "shifted") -> float:
    offsets = window_offsets(count, window)
    last = k + offsets[-1]
    if k < 0 or last >= len(series):
        raise RangeError(f"Ebar_{k} needs E up to index {last}, have {len(series)} entries")
    return max(series[k + j] for j in offsets)


def windowed_series(series: Sequence[float], count: int, window: str = "shifted") -> list[float]:
    n = len(series) - window_offsets(count, window)[-1]
    return [windowed_error(series, count, k, window) for k in range(max(n, 0))]


@dataclass
class BoundReport:
    holds: bool
    margins: list[float]
    bounds: list[float]
    epsilon_bar: float
    holds_per_window: bool
    margins_per_window: list[float]
    first_failure: int | None = None


def check_linear_bound(series: Sequence[float], epsilon_bar: float, window_steps: int = 1) -> BoundReport:
    """Check ``Ebar_n <= Ebar_0 exp(-n eps)`` at every recorded ``n``.

    The per-window reading ``Ebar_n <= Ebar_0 exp(-floor(n / window_steps) eps)``
    is reported alongside.
    """
    if not series or not series[0] > 0:
        raise RangeError("bound check needs Ebar_0 > 0")
    e0 = series[0]
    bounds, margins, margins_w = [], [], []
    for n, en in enumerate(series):
        b = e0 * math.exp(-n * epsilon_bar)
        bw = e0 * math.exp(-(n // max(window_steps, 1)) * epsilon_bar)
        bounds.append(b)
        margins.append(math.inf if en == 0 else b / en)
        margins_w.append(math.inf if en == 0 else bw / en)
    fails = [n for n, m in enumerate(margins) if m < 1 - BOUND_TOL]
    return BoundReport(
        holds=not fails,
        margins=margins,
        bounds=bounds,
        epsilon_bar=epsilon_bar,
        holds_per_window=all(m >= 1 - BOUND_TOL for m in margins_w),
        margins_per_window=margins_w,
        first_failure=fails[0] if fails else None,
    )


@dataclass
class DecayFit:
    rate: float
    r_squared: float
    used: list[int]
    excluded: list[int]


def fit_decay_rate(series: Sequence[float], burn_in: int = 0, stop: int | None = None) -> DecayFit:
    """Least-squares slope of ``ln Ebar_n`` against ``n`` over ``burn_in <= n <= stop``.

    Zero entries are excluded and listed in the result.
    """
    last = len(series) - 1 if stop is None else min(stop, len(series) - 1)
    idx = list(range(burn_in, last + 1))
    used = [n for n in idx if series[n] > 0]
    excluded = [n for n in idx if not series[n] > 0]
    if len(used) < 5:
        raise InsufficientData(f"need >= 5 positive points after burn-in, have {len(used)}")
    n = np.array(used, float)
    y = np.log(np.array([series[k] for k in used]))
    slope, intercept = np.polyfit(n, y, 1)
    resid = y - (slope * n + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return DecayFit(rate=-float(slope), r_squared=r2, used=used, excluded=excluded)


@dataclass
class BarrierReport:
    holds: bool
    lower: float
    upper_max: float
    worst: list[dict] = field(default_factory=list)


def barrier_check(state: SwrState, phi_m: SpaceTimeField, M: float, decomp: Decomposition,
                  tol: float = BARRIER_TOL) -> BarrierReport:
    """Verify ``-M - tol <= u_j^k <= phi_M + tol`` nodewise on every band.

    ``phi_m`` lives on the global grid and may extend past the run's horizon.
    """
    if phi_m.diverged:
        raise ConfigError("barrier field diverged; no bound available")
    worst = []
    ok = True
    for j, fl in enumerate(state.fields):
        lo, hi = decomp.index_bands[j]
        nt = fl.nt
        upper = phi_m.values[: nt + 1, ..., lo:hi + 1]
        if upper.shape != fl.values.shape:
            raise GridMismatch("barrier field does not cover the band")
        over = fl.values - upper
        under = -M - fl.values
        iu = np.unravel_index(np.nanargmax(over), over.shape)
        il = np.unravel_index(np.nanargmax(under), under.shape)
        entry = {
            "band": j + 1,
            "max_excess_over_barrier": float(over[iu]),
            "at_upper": [int(i) for i in iu],
            "max_excess_below_minus_M": float(under[il]),
            "at_lower": [int(i) for i in il],
        }
        if over[iu] > tol or under[il] > tol or not np.all(np.isfinite(fl.values)):
            ok = False
        worst.append(entry)
    return BarrierReport(ok, -M, float(np.max(phi_m.values)), worst)


@dataclass
class ErrorSeries:
    """Per-iteration errors against a fixed reference solution."""

    band_errors: list[list[float]] = field(default_factory=list)
    weighted: list[float] = field(default_factory=list)
    gamma: float = 0.0
    diverged: list[bool] = field(default_factory=list)


class ErrorTracker:
    """Callback for :func:`swrheat.swr.run` recording ``||e_j^k||`` and ``E_k``."""

    def __init__(self, reference: SpaceTimeField, decomp: Decomposition, P: ControllingFunction,
                 gamma: float, barrier: Callable[[SwrState], BarrierReport] | None = None):
        self.reference = [restrict(reference, decomp, j) for j in range(decomp.count)]
        self.P = P
        self.series = ErrorSeries(gamma=gamma)
        self.barrier = barrier
        self.barrier_reports: list[BarrierReport] = []

    def __call__(self, state: SwrState) -> None:
        errs = [error_field(fl, ref) for fl, ref in zip(state.fields, self.reference)]
        self.series.band_errors.append([float(np.max(np.abs(e.values))) for e in errs])
        self.series.weighted.append(weighted_error(errs, self.P, self.series.gamma))
        self.series.diverged.append(state.diverged is not None)
        if self.barrier is not None:
            self.barrier_reports.append(self.barrier(state))
