"""Problem data: geometry, band decomposition, nonlinearity, initial/boundary data.

The domain is a cylinder ``D x (a, b)`` with ``D`` an axis-aligned box (empty
for ``dim == 1``). Grids are tensor grids that include boundary nodes; the
axial coordinate is always the last array axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import CompatibilityError, ConfigError, GeometryError

GROWTH_REL_TOL = 1e-12


@dataclass(frozen=True)
class Nonlinearity:
    """Reaction term ``f`` with derivative and growth constants.

    ``c_f`` and ``p`` are the constants of ``|f'(x)| <= c_f |x|^(p-1)``.
    ``in_scope`` is False for catalog entries that do not satisfy that growth
    condition (usable by the solvers, rejected by the theory pipeline).
    """

    name: str
    eval: Callable[[np.ndarray], np.ndarray]
    deriv: Callable[[np.ndarray], np.ndarray]
    c_f: float
    p: float
    sign_positive: bool = False
    in_scope: bool = True
    is_zero: bool = False

    def __post_init__(self):
        if self.in_scope:
            problems = self.validate()
            if problems:
                raise ConfigError(problems)

    def __call__(self, u):
        return self.eval(u)

    def validate(self) -> list[str]:
        problems = []
        if not self.p > 1:
            problems.append(f"nonlinearity {self.name}: p must be > 1, got {self.p}")
        if not self.c_f > 0:
            problems.append(f"nonlinearity {self.name}: c_f must be > 0, got {self.c_f}")
        if problems:
            return problems
        mag = np.logspace(-3, 3, 601)
        x = np.concatenate([-mag[::-1], mag])
        bound = self.c_f * np.abs(x) ** (self.p - 1) * (1 + GROWTH_REL_TOL)
        bad = np.abs(self.deriv(x)) > bound
        if bad.any():
            problems.append(
                f"nonlinearity {self.name}: growth condition fails at x={x[bad][0]:.6g}"
            )
        if self.sign_positive and np.any(self.eval(x) <= 0):
            problems.append(f"nonlinearity {self.name}: declared positive but f <= 0 on samples")
        return problems


def square() -> Nonlinearity:
    """f(u) = u^2: p = 2, C_f = 2, nonnegative, blows up in finite time."""
    return Nonlinearity("square", lambda u: u * u, lambda u: 2.0 * u, c_f=2.0, p=2.0,
                        sign_positive=True)


def odd_power(p: float) -> Nonlinearity:
    """f(u) = u |u|^(p-1)."""
    return Nonlinearity(
        f"odd_power({p:g})",
        lambda u: u * np.abs(u) ** (p - 1),
        lambda u: p * np.abs(u) ** (p - 1),
        c_f=float(p),
        p=float(p),
    )


def abs_power(p: float) -> Nonlinearity:
    """f(u) = |u|^p, nonnegative; equals u^2 for p = 2."""
    return Nonlinearity(
        f"abs_power({p:g})",
        lambda u: np.abs(u) ** p,
        lambda u: p * np.sign(u) * np.abs(u) ** (p - 1),
        c_f=float(p),
        p=float(p),
        sign_positive=True,
    )


def sine() -> Nonlinearity:
    # bounded; violates the power growth bound near 0, so solver-only
    return Nonlinearity("sin", np.sin, np.cos, c_f=1.0, p=2.0, in_scope=False)


def zero() -> Nonlinearity:
    return Nonlinearity("zero", np.zeros_like, np.zeros_like, c_f=1.0, p=2.0, is_zero=True)


def shifted(f: Nonlinearity, v: float) -> Nonlinearity:
    """``w -> f(w + v)`` for a constant shift ``v`` (solver use only)."""
    return Nonlinearity(
        f"{f.name}(.+{v:g})",
        lambda w: f.eval(w + v),
        lambda w: f.deriv(w + v),
        c_f=f.c_f,
        p=f.p,
        in_scope=False,
    )


CATALOG = {
    "square": lambda params: square(),
    "odd_power": lambda params: odd_power(params["p"]),
    "abs_power": lambda params: abs_power(params["p"]),
    "sin": lambda params: sine(),
    "zero": lambda params: zero(),
}


def make_nonlinearity(name: str, **params) -> Nonlinearity:
    try:
        factory = CATALOG[name]
    except KeyError:
        raise ConfigError(f"unknown nonlinearity {name!r}; choose from {sorted(CATALOG)}")
    return factory(params)


@dataclass(frozen=True)
class DomainSpec:
    """Cylinder ``D x (a, b)`` with a tensor space grid and a uniform time grid."""

    dim: int
    axial: tuple[float, float]
    nz: int
    nt: int
    horizon: float
    cross_section: tuple[tuple[float, float], ...] = ()
    nx_cross: tuple[int, ...] = ()

    def __post_init__(self):
        problems = []
        if self.dim < 1:
            problems.append(f"dim must be >= 1, got {self.dim}")
        a, b = self.axial
        if not a < b:
            problems.append(f"axial interval needs a < b, got ({a}, {b})")
        if self.nz < 2:
            problems.append(f"nz must be >= 2, got {self.nz}")
        if self.nt < 1:
            problems.append(f"nt must be >= 1, got {self.nt}")
        if not self.horizon > 0:
            problems.append(f"horizon must be > 0, got {self.horizon}")
        if len(self.cross_section) != self.dim - 1 or len(self.nx_cross) != self.dim - 1:
            problems.append(f"cross-section needs {self.dim - 1} axes")
        for (lo, hi), n in zip(self.cross_section, self.nx_cross):
            if not lo < hi:
                problems.append(f"cross-section side ({lo}, {hi}) is empty")
            if n < 2:
                problems.append(f"cross-section grid count must be >= 2, got {n}")
        if problems:
            raise ConfigError(problems)

    @property
    def dt(self) -> float:
        return self.horizon / self.nt

    @property
    def hz(self) -> float:
        return (self.axial[1] - self.axial[0]) / (self.nz - 1)

    @property
    def spacing(self) -> tuple[float, ...]:
        hs = [(hi - lo) / (n - 1) for (lo, hi), n in zip(self.cross_section, self.nx_cross)]
        return tuple(hs) + (self.hz,)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.nx_cross) + (self.nz,)

    @property
    def cross_shape(self) -> tuple[int, ...]:
        return tuple(self.nx_cross)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.nt + 1) * self.dt

    @property
    def z(self) -> np.ndarray:
        return np.linspace(self.axial[0], self.axial[1], self.nz)

    def axes(self) -> list[np.ndarray]:
        out = [np.linspace(lo, hi, n) for (lo, hi), n in zip(self.cross_section, self.nx_cross)]
        out.append(self.z)
        return out

    def mesh(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*self.axes(), indexing="ij"))

    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        for ax in range(self.dim):
            idx = [slice(None)] * self.dim
            idx[ax] = 0
            mask[tuple(idx)] = True
            idx[ax] = -1
            mask[tuple(idx)] = True
        return mask

    def is_box(self) -> bool:
        return True


def domain_measure(spec: DomainSpec) -> float:
    """Product of the cross-section side lengths times ``b - a``."""
    m = spec.axial[1] - spec.axial[0]
    for lo, hi in spec.cross_section:
        m *= hi - lo
    return float(m)


@dataclass(frozen=True)
class Decomposition:
    """Overlapping bands, stored as inclusive axial node index pairs."""

    spec: DomainSpec
    index_bands: tuple[tuple[int, int], ...]

    def __post_init__(self):
        bands = self.index_bands
        if not bands:
            raise GeometryError("decomposition needs at least one band")
        if bands[0][0] != 0 or bands[-1][1] != self.spec.nz - 1:
            raise GeometryError("first band must start at a and last band must end at b")
        for j, (lo, hi) in enumerate(bands):
            if not lo < hi:
                raise GeometryError(f"band {j + 1} is empty: nodes ({lo}, {hi})")
        for j in range(len(bands) - 1):
            (a0, b0), (a1, b1) = bands[j], bands[j + 1]
            if not (a0 < a1 < b0 < b1):
                raise GeometryError(
                    f"bands {j + 1} and {j + 2} violate a_j < a_(j+1) < b_j < b_(j+1): "
                    f"nodes {bands[j]} and {bands[j + 1]}"
                )

    @property
    def count(self) -> int:
        return len(self.index_bands)

    @property
    def bands(self) -> list[tuple[float, float]]:
        z = self.spec.z
        return [(float(z[lo]), float(z[hi])) for lo, hi in self.index_bands]

    @property
    def lengths(self) -> list[float]:
        h = self.spec.hz
        return [(hi - lo) * h for lo, hi in self.index_bands]

    @property
    def overlaps(self) -> list[float]:
        h = self.spec.hz
        b = self.index_bands
        return [(b[j][1] - b[j + 1][0]) * h for j in range(len(b) - 1)]

    def band_shape(self, j: int) -> tuple[int, ...]:
        lo, hi = self.index_bands[j]
        return self.spec.cross_shape + (hi - lo + 1,)

    def band_measure(self, j: int) -> float:
        m = self.lengths[j]
        for lo, hi in self.spec.cross_section:
            m *= hi - lo
        return m

    def restrict(self, values: np.ndarray, j: int) -> np.ndarray:
        """Slice a global array (axial axis last) to band ``j``."""
        lo, hi = self.index_bands[j]
        return values[..., lo:hi + 1]


def build_decomposition(spec: DomainSpec, count: int, overlap_fraction: float) -> Decomposition:
    """Split ``(a, b)`` into ``count`` near-equal bands.

    Each overlap is ``overlap_fraction * (b - a) / count`` snapped to a whole
    number of axial cells and centred on the equal-split cut points.
    """
    if count < 1:
        raise GeometryError(f"band count must be >= 1, got {count}")
    if count == 1:
        return Decomposition(spec, ((0, spec.nz - 1),))
    if not 0 < overlap_fraction < 1:
        raise GeometryError(f"overlap fraction must lie in (0, 1), got {overlap_fraction}")
    cells = spec.nz - 1
    s = int(round(overlap_fraction * cells / count))
    if s <= 0:
        raise GeometryError(
            f"overlap {overlap_fraction * (spec.axial[1] - spec.axial[0]) / count:g} "
            f"snaps to zero cells at hz={spec.hz:g}"
        )
    cuts = [int(round(i * cells / count)) for i in range(1, count)]
    lefts = [0] + [c - s // 2 for c in cuts]
    rights = [c - s // 2 + s for c in cuts] + [cells]
    bands = tuple(zip(lefts, rights))
    for lo, hi in bands:
        if lo < 0 or hi > cells:
            raise GeometryError(f"overlap of {s} cells does not fit in {cells} cells")
    return Decomposition(spec, bands)


def decomposition_from_bands(spec: DomainSpec, bands: Sequence[tuple[float, float]]) -> Decomposition:
    """Explicit bands given in coordinates; endpoints must sit on grid nodes."""
    a, h = spec.axial[0], spec.hz
    index_bands = []
    for lo, hi in bands:
        pair = []
        for zval in (lo, hi):
            k = (zval - a) / h
            if abs(k - round(k)) > 1e-9:
                raise GeometryError(f"band endpoint {zval} is not an axial grid node")
            pair.append(int(round(k)))
        index_bands.append(tuple(pair))
    return Decomposition(spec, tuple(index_bands))


# --- data presets -----------------------------------------------------------

def _box_sides(spec: DomainSpec):
    return list(spec.cross_section) + [spec.axial]


def preset_field(spec: DomainSpec, preset: str, **params) -> np.ndarray:
    """Analytic grid function on the full grid.

    ``constant``: value. ``gaussian``: amplitude * exp(-|x - center|^2 / (2 width^2)).
    ``sines``: amplitude * prod_i sin(mode_i * pi * (x_i - lo_i) / (hi_i - lo_i)).
    """
    coords = spec.mesh()
    if preset == "constant":
        return np.full(spec.shape, float(params.get("value", 0.0)))
    if preset == "gaussian":
        sides = _box_sides(spec)
        center = params.get("center") or [(lo + hi) / 2 for lo, hi in sides]
        width = float(params.get("width", 0.1))
        r2 = sum((x - c) ** 2 for x, c in zip(coords, center))
        return float(params.get("amplitude", 1.0)) * np.exp(-r2 / (2 * width**2))
    if preset == "sines":
        modes = params.get("modes") or [1] * spec.dim
        if len(modes) != spec.dim:
            raise ConfigError(f"sines preset needs {spec.dim} modes, got {len(modes)}")
        out = np.full(spec.shape, float(params.get("amplitude", 1.0)))
        for x, (lo, hi), k in zip(coords, _box_sides(spec), modes):
            out = out * np.sin(k * math.pi * (x - lo) / (hi - lo))
        # sin(k*pi) is not exactly 0 in floating point
        out[spec.boundary_mask()] = 0.0
        return out
    raise ConfigError(f"unknown data preset {preset!r}")


@dataclass
class ProblemData:
    """Initial data, Dirichlet data and per-band initial interface guesses.

    ``g`` is a full space-time array ``(nt + 1, *shape)``; only its entries on
    boundary nodes are used. ``initial_guesses[j]`` is the pair of left/right
    traces ``(nt + 1, *cross_shape)`` imposed on band ``j`` at step 0.
    """

    spec: DomainSpec
    u0: np.ndarray
    g: np.ndarray
    initial_guesses: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)

    def check_compatibility(self, decomp: Decomposition | None = None) -> list[str]:
        """Every nodewise violation of the t = 0 compatibility conditions."""
        out = []
        mask = self.spec.boundary_mask()
        bad = np.argwhere(mask & (self.u0 != self.g[0]))
        for idx in bad[:20]:
            out.append(f"u0 != g at t=0 on boundary node {tuple(int(i) for i in idx)}")
        if len(bad) > 20:
            out.append(f"... {len(bad) - 20} more boundary mismatches")
        if decomp is not None and self.initial_guesses:
            if len(self.initial_guesses) != decomp.count:
                out.append(
                    f"{len(self.initial_guesses)} initial guesses for {decomp.count} bands"
                )
                return out
            for j, ((left, right), (lo, hi)) in enumerate(
                zip(self.initial_guesses, decomp.index_bands)
            ):
                if not np.array_equal(left[0], self.u0[..., lo]):
                    out.append(f"band {j + 1}: initial guess g_j^0 at t=0 differs from u0 at a_j")
                if not np.array_equal(right[0], self.u0[..., hi]):
                    out.append(f"band {j + 1}: initial guess h_j^0 at t=0 differs from u0 at b_j")
        return out

    def sup_norm(self) -> float:
        """max(|u0|, |g| on the boundary, |guesses|)."""
        mask = self.spec.boundary_mask()
        vals = [np.abs(self.u0).max(), np.abs(self.g[:, mask]).max()]
        for left, right in self.initial_guesses:
            vals += [np.abs(left).max(), np.abs(right).max()]
        return float(max(vals))


def default_guesses(spec: DomainSpec, u0: np.ndarray, decomp: Decomposition):
    """Constant-in-time extension of the initial data at each band's ends."""
    reps = (spec.nt + 1,) + (1,) * (spec.dim - 1)
    return [
        (np.tile(u0[..., lo], reps), np.tile(u0[..., hi], reps))
        for lo, hi in decomp.index_bands
    ]


def boundary_data(spec: DomainSpec, preset: str, u0: np.ndarray | None = None, **params) -> np.ndarray:
    """Space-time Dirichlet data: ``zero``, ``constant`` or ``u0`` (time-invariant trace)."""
    if preset == "zero":
        return np.zeros((spec.nt + 1,) + spec.shape)
    if preset == "constant":
        return np.full((spec.nt + 1,) + spec.shape, float(params.get("value", 0.0)))
    if preset == "u0":
        if u0 is None:
            raise ConfigError("boundary preset 'u0' needs initial data")
        return np.broadcast_to(u0, (spec.nt + 1,) + spec.shape).copy()
    raise ConfigError(f"unknown boundary preset {preset!r}")


def make_problem(spec: DomainSpec, u0: np.ndarray, g: np.ndarray,
                 decomp: Decomposition | None = None, guesses=None) -> ProblemData:
    """Assemble and check problem data; guesses default to the u0 extension."""
    if guesses is None and decomp is not None:
        guesses = default_guesses(spec, u0, decomp)
    data = ProblemData(spec, np.asarray(u0, float), np.asarray(g, float), list(guesses or []))
    problems = data.check_compatibility(decomp)
    if problems:
        raise CompatibilityError(problems)
    return data
