"""Parallel (Jacobi) Schwarz waveform relaxation on overlapping bands."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import CompatibilityError, ConfigError
from .model import Decomposition, DomainSpec, Nonlinearity, ProblemData
from .solver import BoundaryTrace, SolverOptions, SpaceTimeField, solve_dirichlet

log = logging.getLogger(__name__)


@dataclass
class SwrState:
    """Iterates ``u_j^k`` of all bands at one iteration ``k``.

    ``traces[j]`` is the (left, right) pair band ``j`` was solved with.
    ``diverged`` holds ``(band, step)`` of the first failed subdomain solve.
    """

    k: int
    fields: list[SpaceTimeField]
    traces: list[tuple[BoundaryTrace, BoundaryTrace]]
    diverged: tuple[int, int] | None = None


@dataclass
class SwrProblem:
    spec: DomainSpec
    f: Nonlinearity
    data: ProblemData
    decomp: Decomposition
    options: SolverOptions = field(default_factory=SolverOptions)


def _map(fn, items, workers: int):
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _solve_band(problem: SwrProblem, j: int, left: BoundaryTrace, right: BoundaryTrace):
    lo, hi = problem.decomp.index_bands[j]
    data = problem.data
    lateral = data.g[..., lo:hi + 1] if problem.spec.dim > 1 else None
    return solve_dirichlet(problem.spec, (lo, hi), problem.f, left, right, lateral,
                           data.u0[..., lo:hi + 1], options=problem.options)


def _first_divergence(fields):
    for j, fl in enumerate(fields):
        if fl.diverged:
            return (j, fl.diverged_step)
    return None


def init_iterates(problem: SwrProblem, workers: int = 1) -> SwrState:
    """Step-0 solves with the initial interface guesses.

    The outer ends of the first and last band always carry the boundary data.
    """
    spec, data, decomp = problem.spec, problem.data, problem.decomp
    problems = data.check_compatibility(decomp)
    if not data.initial_guesses:
        problems.append("no initial guesses supplied")
    if problems:
        raise CompatibilityError(problems)
    traces = []
    for j, (lo, hi) in enumerate(decomp.index_bands):
        left, right = data.initial_guesses[j]
        if j == 0:
            left = data.g[..., 0]
        if j == decomp.count - 1:
            right = data.g[..., -1]
        traces.append((BoundaryTrace(lo, np.array(left)), BoundaryTrace(hi, np.array(right))))
    fields = _map(lambda j: _solve_band(problem, j, *traces[j]), list(range(decomp.count)), workers)
    return SwrState(0, fields, traces, _first_divergence(fields))


def interface_traces(problem: SwrProblem, state: SwrState):
    """Traces for the next sweep, read from iteration ``k`` only."""
    decomp, g = problem.decomp, problem.data.g
    bands = decomp.index_bands
    out = []
    for j, (lo, hi) in enumerate(bands):
        if j == 0:
            left = BoundaryTrace(lo, g[..., 0].copy())
        else:
            left = state.fields[j - 1].trace(lo - bands[j - 1][0])
        if j == decomp.count - 1:
            right = BoundaryTrace(hi, g[..., -1].copy())
        else:
            right = state.fields[j + 1].trace(hi - bands[j + 1][0])
        out.append((left, right))
    return out


def sweep(problem: SwrProblem, state: SwrState, workers: int = 1) -> SwrState:
    """One Jacobi sweep: every band solves with neighbour traces from iteration ``k``."""
    traces = interface_traces(problem, state)
    fields = _map(lambda j: _solve_band(problem, j, *traces[j]), list(range(len(traces))), workers)
    return SwrState(state.k + 1, fields, traces, _first_divergence(fields))


def overlap_update(decomp: Decomposition, old: SwrState, new: SwrState) -> float:
    """``max_j`` sup over band ``j``'s overlap nodes of ``|u_j^(k+1) - u_j^k|``."""
    bands = decomp.index_bands
    worst = 0.0
    for j, (lo, hi) in enumerate(bands):
        diff = np.abs(new.fields[j].values - old.fields[j].values)
        if decomp.count == 1:
            worst = max(worst, float(np.max(diff)))
            continue
        if j > 0:
            worst = max(worst, float(np.max(diff[..., : bands[j - 1][1] - lo + 1])))
        if j < decomp.count - 1:
            worst = max(worst, float(np.max(diff[..., bands[j + 1][0] - lo:])))
    return worst


@dataclass
class SwrConfig:
    max_sweeps: int = 100
    stop_tol: float = 1e-10
    workers: int = 1

    def __post_init__(self):
        problems = []
        if self.max_sweeps < 1:
            problems.append(f"max_sweeps must be >= 1, got {self.max_sweeps}")
        if not self.stop_tol > 0:
            problems.append(f"stop_tol must be > 0, got {self.stop_tol}")
        if self.workers < 1:
            problems.append(f"workers must be >= 1, got {self.workers}")
        if problems:
            raise ConfigError(problems)


@dataclass
class SwrRun:
    state: SwrState
    updates: list[float]
    stop_reason: str

    @property
    def sweeps(self) -> int:
        return self.state.k


def run(problem: SwrProblem, config: SwrConfig | None = None,
        callback: Callable[[SwrState], None] | None = None) -> SwrRun:
    """Iterate until the overlap update drops below ``stop_tol``.

    ``callback`` sees the initial state and every subsequent one. Stops with
    ``converged``, ``max_sweeps`` or ``diverged``.
    """
    cfg = config or SwrConfig()
    state = init_iterates(problem, cfg.workers)
    if callback is not None:
        callback(state)
    updates: list[float] = []
    if state.diverged is not None:
        return SwrRun(state, updates, "diverged")
    reason = "max_sweeps"
    for _ in range(cfg.max_sweeps):
        new = sweep(problem, state, cfg.workers)
        if callback is not None:
            callback(new)
        if new.diverged is not None:
            state, reason = new, "diverged"
            log.warning("band %d diverged at step %d in sweep %d", new.diverged[0] + 1,
                        new.diverged[1], new.k)
            break
        updates.append(overlap_update(problem.decomp, state, new))
        state = new
        if updates[-1] <= cfg.stop_tol:
            reason = "converged"
            break
    return SwrRun(state, updates, reason)
