"""Space-time solvers for one Dirichlet problem and the spectral oracles.

Fields are stored whole: ``values[n]`` is the grid function at ``t = n*dt``,
with the axial coordinate on the last axis.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.fft
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigError, GridMismatch
from .model import Decomposition, DomainSpec, Nonlinearity, ProblemData

NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 25
DIVERGENCE_THRESHOLD = 1e6
COMPAT_TOL = 1e-12
SCHEMES = ("bdf2", "euler", "imex")


@dataclass
class SpaceTimeField:
    """Discrete field on one (sub)domain grid times the time axis.

    ``diverged_step`` is the first time step at which the solve failed; rows
    from that step on are NaN.
    """

    values: np.ndarray
    dt: float
    spacing: tuple[float, ...]
    z_offset: int = 0
    diverged_step: int | None = None

    @property
    def diverged(self) -> bool:
        return self.diverged_step is not None

    @property
    def nt(self) -> int:
        return self.values.shape[0] - 1

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.nt + 1) * self.dt

    @property
    def divergence_time(self) -> float | None:
        return None if self.diverged_step is None else self.diverged_step * self.dt

    def same_grid(self, other: "SpaceTimeField") -> bool:
        return (
            self.values.shape == other.values.shape
            and self.dt == other.dt
            and self.spacing == other.spacing
            and self.z_offset == other.z_offset
        )

    def trace(self, k: int) -> "BoundaryTrace":
        """Restriction to the axial plane at local node ``k``."""
        return BoundaryTrace(plane=self.z_offset + k, values=self.values[..., k].copy())


@dataclass
class BoundaryTrace:
    """Dirichlet data on the cross-section plane at global axial node ``plane``."""

    plane: int
    values: np.ndarray


# --- finite differences ------------------------------------------------------

def _second_difference(n: int, h: float) -> sp.csr_matrix:
    """1D centred second difference on ``n`` interior nodes."""
    main = np.full(n, -2.0 / h**2)
    off = np.full(n - 1, 1.0 / h**2)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr")


def laplacian_interior(shape: Sequence[int], spacing: Sequence[float]) -> sp.csr_matrix:
    """Kronecker-sum Laplacian acting on interior nodes in C order."""
    inner = [n - 2 for n in shape]
    total = None
    for ax, (n, h) in enumerate(zip(inner, spacing)):
        parts = [sp.identity(m, format="csr") for m in inner]
        parts[ax] = _second_difference(n, h)
        term = parts[0]
        for q in parts[1:]:
            term = sp.kron(term, q, format="csr")
        total = term if total is None else total + term
    return total.tocsr()


def apply_laplacian(u: np.ndarray, spacing: Sequence[float]) -> np.ndarray:
    """Centred Laplacian of a full-grid array, evaluated on interior nodes."""
    core = tuple(slice(1, -1) for _ in u.shape)
    out = np.zeros(tuple(n - 2 for n in u.shape))
    for ax, h in enumerate(spacing):
        up = list(core)
        dn = list(core)
        up[ax] = slice(2, None)
        dn[ax] = slice(None, -2)
        out += (u[tuple(up)] - 2.0 * u[core] + u[tuple(dn)]) / h**2
    return out


class _StepOperator:
    """Implicit step matrix ``I - dt*A - dt*diag(d)`` on interior unknowns."""

    def __init__(self, shape, spacing, dt):
        self.shape = tuple(shape)
        self.spacing = tuple(spacing)
        self.dt = dt
        self.inner = tuple(n - 2 for n in shape)
        self.size = int(np.prod(self.inner))
        self.one_d = len(shape) == 1
        if self.one_d:
            h2 = spacing[0] ** 2
            n = self.inner[0]
            self._off = -dt / h2
            self._main = 1.0 + 2.0 * dt / h2
            self._ab = np.zeros((3, n))
        else:
            A = laplacian_interior(shape, spacing)
            self._base = (sp.identity(self.size, format="csc") - dt * A).tocsc()
        self._lu_const = None

    def solve(self, diag_extra: np.ndarray | None, rhs: np.ndarray) -> np.ndarray:
        """Solve ``(I - dt*A - dt*diag(diag_extra)) x = rhs``."""
        if self.one_d:
            ab = self._ab
            ab[0, 1:] = self._off
            ab[2, :-1] = self._off
            ab[1, :] = self._main
            if diag_extra is not None:
                ab[1, :] -= self.dt * diag_extra
            return scipy.linalg.solve_banded((1, 1), ab, rhs, overwrite_ab=False,
                                             overwrite_b=False, check_finite=False)
        if diag_extra is None:
            if self._lu_const is None:
                self._lu_const = spla.splu(self._base)
            return self._lu_const.solve(rhs)
        J = (self._base - self.dt * sp.diags(diag_extra, 0, format="csc")).tocsc()
        return spla.spsolve(J, rhs)


@dataclass
class SolverOptions:
    scheme: str = "bdf2"
    newton_tol: float = NEWTON_TOL
    newton_max_iter: int = NEWTON_MAX_ITER
    divergence_threshold: float = DIVERGENCE_THRESHOLD

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown time scheme {self.scheme!r}; choose from {SCHEMES}")


def _interior(arr: np.ndarray) -> np.ndarray:
    return arr[tuple(slice(1, -1) for _ in arr.shape)]


def solve_boundary_problem(boundary: np.ndarray, u0: np.ndarray, f: Nonlinearity, dt: float,
                           spacing: Sequence[float], options: SolverOptions | None = None,
                           source: np.ndarray | None = None, z_offset: int = 0) -> SpaceTimeField:
    """Implicit time stepping for ``u_t - Lap u = f(u) + source`` with Dirichlet rows.

    ``boundary`` has shape ``(nt + 1, *shape)`` and supplies the Dirichlet
    value on every boundary node at every step. Interior values are ignored.
    BDF2 starts with one backward Euler step.
    """
    opts = options or SolverOptions()
    shape = u0.shape
    nt = boundary.shape[0] - 1
    if boundary.shape[1:] != shape:
        raise ConfigError(f"boundary data shape {boundary.shape[1:]} != grid shape {shape}")
    if len(spacing) != len(shape):
        raise ConfigError("spacing does not match the grid dimension")
    if any(n < 3 for n in shape):
        raise ConfigError(f"grid {shape} has no interior nodes")

    values = np.empty((nt + 1,) + shape)
    values[0] = u0
    core = tuple(slice(1, -1) for _ in shape)
    euler = _StepOperator(shape, spacing, dt)
    bdf2 = _StepOperator(shape, spacing, 2.0 * dt / 3.0) if opts.scheme == "bdf2" else None
    diverged = None
    x = _interior(u0).reshape(-1).copy()
    x_old = None
    frame = np.empty(shape)

    for n in range(nt):
        if bdf2 is not None and n > 0:
            op = bdf2
            base = (4.0 * x - x_old) / 3.0
        else:
            op = euler
            base = x
        h = op.dt
        frame[...] = boundary[n + 1]
        frame[core] = 0.0
        rhs_fixed = base + h * apply_laplacian(frame, spacing).reshape(-1)
        if source is not None:
            rhs_fixed += h * _interior(source[n + 1]).reshape(-1)

        if f.is_zero:
            x_new = op.solve(None, rhs_fixed)
        elif opts.scheme == "imex":
            x_new = op.solve(None, rhs_fixed + h * f.eval(x))
        else:
            x_new, ok = _newton_step(op, f, x, rhs_fixed, opts)
            if not ok:
                diverged = n + 1
                break
        if not np.all(np.isfinite(x_new)) or np.max(np.abs(x_new)) > opts.divergence_threshold:
            diverged = n + 1
            break
        x_old, x = x, x_new
        frame[core] = x.reshape(op.inner)
        values[n + 1] = frame

    if diverged is not None:
        values[diverged:] = np.nan
    return SpaceTimeField(values, dt, tuple(spacing), z_offset, diverged)


def _newton_step(op: _StepOperator, f: Nonlinearity, x_prev: np.ndarray, rhs_fixed: np.ndarray,
                 opts: SolverOptions):
    # residual (I - h*A) x - h*f(x) - rhs_fixed, h the operator's step
    x = x_prev.copy()
    for _ in range(opts.newton_max_iter):
        res = _apply_base(op, x) - op.dt * f.eval(x) - rhs_fixed
        delta = op.solve(f.deriv(x), -res)
        if not np.all(np.isfinite(delta)):
            return x, False
        x = x + delta
        if np.max(np.abs(x)) > opts.divergence_threshold:
            return x, False
        if np.max(np.abs(delta)) <= opts.newton_tol * max(1.0, np.max(np.abs(x))):
            return x, True
    return x, False


def _apply_base(op: _StepOperator, x: np.ndarray) -> np.ndarray:
    """``(I - dt*A) x`` on interior unknowns (zero Dirichlet contribution)."""
    full = np.zeros(op.shape)
    core = tuple(slice(1, -1) for _ in op.shape)
    full[core] = x.reshape(op.inner)
    return x - op.dt * apply_laplacian(full, op.spacing).reshape(-1)


def solve_dirichlet(spec: DomainSpec, band: tuple[int, int], f: Nonlinearity,
                    left: BoundaryTrace, right: BoundaryTrace, lateral: np.ndarray | None,
                    u0: np.ndarray, horizon: float | None = None,
                    options: SolverOptions | None = None,
                    source: np.ndarray | None = None) -> SpaceTimeField:
    """Solve the semilinear heat equation on the band ``z in [z_lo, z_hi]``.

    ``left``/``right`` are the traces at the band's axial ends, ``lateral``
    the band's space-time data (only cross-section boundary nodes are read;
    may be None for ``dim == 1``) and ``u0`` the band's initial slice.
    """
    lo, hi = band
    shape = spec.cross_shape + (hi - lo + 1,)
    nt = spec.nt
    if horizon is not None and not math.isclose(horizon, spec.horizon, rel_tol=1e-12):
        raise ConfigError(f"horizon {horizon} is not the grid horizon {spec.horizon}")
    if u0.shape != shape:
        raise ConfigError(f"initial slice shape {u0.shape} != band shape {shape}")
    for name, tr, plane in (("left", left, lo), ("right", right, hi)):
        if tr.values.shape != (nt + 1,) + spec.cross_shape:
            raise ConfigError(f"{name} trace has shape {tr.values.shape}")
        if tr.plane != plane:
            raise ConfigError(f"{name} trace sits at node {tr.plane}, band end is {plane}")
    if lateral is not None and lateral.shape != (nt + 1,) + shape:
        raise ConfigError(f"lateral data shape {lateral.shape} != {(nt + 1,) + shape}")
    mismatch = max(
        np.max(np.abs(left.values[0] - u0[..., 0])),
        np.max(np.abs(right.values[0] - u0[..., -1])),
    )
    if mismatch > COMPAT_TOL:
        raise ConfigError(f"traces and initial slice disagree at t=0 by {mismatch:.3g}")

    boundary = np.zeros((nt + 1,) + shape) if lateral is None else lateral.copy()
    boundary[..., 0] = left.values
    boundary[..., -1] = right.values
    return solve_boundary_problem(boundary, u0, f, spec.dt, spec.spacing, options,
                                  source=source, z_offset=lo)


def monolithic_solve(spec: DomainSpec, f: Nonlinearity, data: ProblemData,
                     options: SolverOptions | None = None) -> SpaceTimeField:
    """Reference solution on the whole cylinder."""
    g = data.g
    left = BoundaryTrace(0, g[..., 0].copy())
    right = BoundaryTrace(spec.nz - 1, g[..., -1].copy())
    return solve_dirichlet(spec, (0, spec.nz - 1), f, left, right, g, data.u0, options=options)


def phi_m_solve(spec: DomainSpec, f: Nonlinearity, M: float, horizon: float | None = None,
                decomp: Decomposition | None = None, options: SolverOptions | None = None,
                require_positive: bool = True):
    """Barrier solution with data identically ``M``.

    Returns ``(field, m_underbar)`` where ``m_underbar`` is the maximum of the
    barrier over the boundary of the cylinder and of every band. With
    ``horizon`` the solve runs on ``[0, horizon]`` at the grid's ``dt``.
    """
    if require_positive and not f.sign_positive:
        raise ConfigError(f"barrier comparison needs a nonnegative nonlinearity, got {f.name}")
    if horizon is not None and not math.isclose(horizon, spec.horizon, rel_tol=1e-12):
        nt = max(1, int(round(horizon / spec.dt)))
        spec = DomainSpec(spec.dim, spec.axial, spec.nz, nt, nt * spec.dt,
                          spec.cross_section, spec.nx_cross)
    boundary = np.full((spec.nt + 1,) + spec.shape, float(M))
    field = solve_boundary_problem(boundary, np.full(spec.shape, float(M)), f, spec.dt,
                                   spec.spacing, options)
    vals = field.values
    mask = spec.boundary_mask()
    parts = [vals[:, mask]]
    if decomp is not None:
        for lo, hi in decomp.index_bands:
            parts.append(vals[..., lo])
            parts.append(vals[..., hi])
    m_underbar = float(max(np.max(p) for p in parts))
    return field, m_underbar


# --- spectral oracles on boxes ----------------------------------------------

def _box_lengths(spec: DomainSpec) -> list[float]:
    return [hi - lo for lo, hi in spec.cross_section] + [spec.axial[1] - spec.axial[0]]


def _eigenvalues(spec: DomainSpec, modes: int | None) -> tuple[np.ndarray, np.ndarray]:
    """Continuous Dirichlet eigenvalues on the interior DST index grid and a truncation mask."""
    inner = [n - 2 for n in spec.shape]
    lam = np.zeros(inner)
    keep = np.ones(inner, dtype=bool)
    for ax, (m, L) in enumerate(zip(inner, _box_lengths(spec))):
        k = np.arange(1, m + 1)
        shp = [1] * len(inner)
        shp[ax] = m
        lam = lam + ((k * math.pi / L) ** 2).reshape(shp)
        if modes is not None:
            keep = keep & (k <= modes).reshape(shp)
    return lam, keep


def _dst(a):
    return scipy.fft.dstn(a, type=1, norm="ortho")


def spectral_semigroup_apply(zeta0: np.ndarray, t: float, spec: DomainSpec,
                             modes: int | None = 64) -> np.ndarray:
    """Heat semigroup with homogeneous Dirichlet data applied to a grid function.

    Expands the interior values in the discrete sine basis, damps mode ``k`` by
    ``exp(-t*lambda_k)`` and resynthesizes. Modes above ``modes`` per axis are
    dropped; ``modes=None`` keeps all.
    """
    if zeta0.shape != spec.shape:
        raise ConfigError(f"grid function shape {zeta0.shape} != domain shape {spec.shape}")
    if t < 0:
        raise ConfigError(f"semigroup time must be >= 0, got {t}")
    lam, keep = _eigenvalues(spec, modes)
    coef = _dst(_interior(zeta0)) * np.exp(-t * lam) * keep
    out = np.zeros(spec.shape)
    out[tuple(slice(1, -1) for _ in spec.shape)] = _dst(coef)
    return out


def duhamel_solve(g_source: np.ndarray, rho0: np.ndarray, spec: DomainSpec,
                  horizon: float | None = None, modes: int | None = 64) -> SpaceTimeField:
    """Variation-of-constants solution with a piecewise-linear-in-time source.

    Each sine coefficient obeys ``c' = -lambda c + s(t)``; with ``s`` linear on
    every step the update is exact:
    ``c1 = e c0 + s0 phi1 + (s1 - s0) phi2``.
    """
    nt = spec.nt
    if g_source.shape != (nt + 1,) + spec.shape:
        raise ConfigError(f"source shape {g_source.shape} != {(nt + 1,) + spec.shape}")
    if horizon is not None and not math.isclose(horizon, spec.horizon, rel_tol=1e-12):
        raise ConfigError(f"horizon {horizon} is not the grid horizon {spec.horizon}")
    dt = spec.dt
    lam, keep = _eigenvalues(spec, modes)
    x = lam * dt
    decay = np.exp(-x)
    phi1 = -np.expm1(-x) / lam
    # (x - 1 + e^-x) / (lam^2 dt) = (x + expm1(-x)) / (lam * x)
    phi2 = (x + np.expm1(-x)) / (lam * x)

    core = tuple(slice(1, -1) for _ in spec.shape)
    values = np.zeros((nt + 1,) + spec.shape)
    c = _dst(_interior(rho0)) * keep
    values[0][core] = _dst(c)
    s_prev = _dst(g_source[0][core]) * keep
    for n in range(nt):
        s_next = _dst(g_source[n + 1][core]) * keep
        c = decay * c + s_prev * phi1 + (s_next - s_prev) * phi2
        values[n + 1][core] = _dst(c)
        s_prev = s_next
    return SpaceTimeField(values, dt, spec.spacing)


@dataclass
class PicardResult:
    field: SpaceTimeField
    ratios: list[float] = field(default_factory=list)
    differences: list[float] = field(default_factory=list)
    converged: bool = False
    no_contraction: bool = False

    @property
    def iterations(self) -> int:
        return len(self.differences)


def picard_solve(v, f: Nonlinearity, spec: DomainSpec, horizon: float | None = None,
                 max_iter: int = 50, tol: float = 1e-12, modes: int | None = None) -> PicardResult:
    """Fixed-point iteration ``w <- int_0^t S(t-s) f(w + v)(s) ds`` from ``w = 0``.

    ``v`` is a scalar or a space-time array. Ratios are successive sup-norm
    differences ``d_k / d_(k-1)``; three consecutive ratios above 1 set
    ``no_contraction``.
    """
    nt = spec.nt
    shape = (nt + 1,) + spec.shape
    vfield = np.broadcast_to(np.asarray(v, float), shape)
    zero0 = np.zeros(spec.shape)
    w = np.zeros(shape)
    result = PicardResult(SpaceTimeField(w, spec.dt, spec.spacing))
    above = 0
    for _ in range(max_iter):
        new = duhamel_solve(f.eval(w + vfield), zero0, spec, horizon, modes).values
        diff = float(np.max(np.abs(new - w)))
        if result.differences:
            prev = result.differences[-1]
            ratio = diff / prev if prev > 0 else 0.0
            result.ratios.append(ratio)
            above = above + 1 if ratio > 1 else 0
            if above >= 3:
                result.no_contraction = True
        result.differences.append(diff)
        w = new
        if diff <= tol:
            result.converged = True
            break
    result.field = SpaceTimeField(w, spec.dt, spec.spacing)
    return result


# --- export ------------------------------------------------------------------

MAGIC = b"SWRF"
VERSION = 1


def write_field(path, fld: SpaceTimeField) -> None:
    """Flat binary layout, little endian.

    Header: magic ``SWRF``, uint32 version, uint32 rank ``r`` (number of array
    axes including time), ``r`` uint64 extents, float64 dt, ``r - 1`` float64
    spacings, int64 z offset, int64 diverged step (-1 if none).
    Payload: float64 values in row-major order, time-major.
    """
    vals = np.ascontiguousarray(fld.values, dtype="<f8")
    rank = vals.ndim
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, rank))
        fh.write(struct.pack(f"<{rank}Q", *vals.shape))
        fh.write(struct.pack("<d", fld.dt))
        fh.write(struct.pack(f"<{rank - 1}d", *fld.spacing))
        step = -1 if fld.diverged_step is None else fld.diverged_step
        fh.write(struct.pack("<qq", fld.z_offset, step))
        fh.write(vals.tobytes())


def read_field(path) -> SpaceTimeField:
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise GridMismatch(f"{path} is not a field file")
        version, rank = struct.unpack("<II", fh.read(8))
        if version != VERSION:
            raise GridMismatch(f"unsupported field version {version}")
        shape = struct.unpack(f"<{rank}Q", fh.read(8 * rank))
        (dt,) = struct.unpack("<d", fh.read(8))
        spacing = struct.unpack(f"<{rank - 1}d", fh.read(8 * (rank - 1)))
        z_offset, step = struct.unpack("<qq", fh.read(16))
        vals = np.frombuffer(fh.read(), dtype="<f8").reshape(shape).copy()
    return SpaceTimeField(vals, dt, tuple(spacing), z_offset, None if step < 0 else step)
