"""Assemble problems, theory reports and SWR experiments from a resolved configuration."""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np

from . import monitor, swr, theory
from .errors import InsufficientData, RangeError, SwrError
from .model import (
    Decomposition, DomainSpec, Nonlinearity, ProblemData, boundary_data, build_decomposition,
    decomposition_from_bands, domain_measure, make_nonlinearity, make_problem, preset_field,
)
from .solver import SolverOptions, SpaceTimeField, monolithic_solve, phi_m_solve


@dataclass
class Experiment:
    cfg: dict
    spec: DomainSpec
    f: Nonlinearity
    data: ProblemData
    decomp: Decomposition
    options: SolverOptions
    control: monitor.ControllingFunction

    @property
    def swr_problem(self) -> swr.SwrProblem:
        return swr.SwrProblem(self.spec, self.f, self.data, self.decomp, self.options)


def _params(block: dict, skip: tuple) -> dict:
    return {k: v for k, v in block.items() if k not in skip and v is not None}


def build(cfg: dict) -> Experiment:
    pr = cfg["problem"]
    spec = DomainSpec(
        dim=pr["dim"], axial=tuple(pr["axial"]), nz=pr["nz"], nt=pr["nt"], horizon=pr["horizon"],
        cross_section=tuple(tuple(s) for s in pr["cross_section"]),
        nx_cross=tuple(pr["nx_cross"]),
    )
    f = make_nonlinearity(pr["f"]["name"], **_params(pr["f"], ("name",)))
    if pr["f"]["name"] == "square":
        f = make_nonlinearity("square")
    u0 = preset_field(spec, pr["u0"]["preset"], **_params(pr["u0"], ("preset",)))
    g = boundary_data(spec, pr["g"]["preset"], u0, **_params(pr["g"], ("preset",)))
    dc = cfg["decomposition"]
    if dc["bands"] is not None:
        decomp = decomposition_from_bands(spec, [tuple(b) for b in dc["bands"]])
    else:
        decomp = build_decomposition(spec, dc["count"], dc["overlap_fraction"])
    data = make_problem(spec, u0, g, decomp)
    al = cfg["algorithm"]
    options = SolverOptions(
        scheme=al["scheme"], newton_tol=al["newton_tol"], newton_max_iter=al["newton_max_iter"],
        divergence_threshold=al["divergence_threshold"],
    )
    control = monitor.power_control(float(cfg["theory"]["control_power"]))
    return Experiment(cfg, spec, f, data, decomp, options, control)


def _l2_norm(spec: DomainSpec, values: np.ndarray) -> float:
    # nodal quadrature with the cell volume as weight
    return float(np.sqrt(np.sum(values**2) * math.prod(spec.spacing)))


def theory_report(exp: Experiment) -> theory.TheoryReport:
    """Every constant that can be computed; failures are recorded per entry."""
    cfg, spec, f, decomp = exp.cfg, exp.spec, exp.f, exp.decomp
    th = cfg["theory"]
    rep = theory.TheoryReport()
    M = float(th["M"])
    t0 = float(th["t0"] if th["t0"] is not None else spec.horizon)
    measure = domain_measure(spec)
    band_measures = [decomp.band_measure(j) for j in range(decomp.count)]
    error_bound = float(th["error_bound"] if th["error_bound"] is not None else M)
    prov = {
        "f": f.name, "p": f.p, "c_f": f.c_f, "M": M, "t0": t0, "dim": spec.dim,
        "measure": measure, "band_measures": band_measures, "bands": decomp.bands,
        "overlaps": decomp.overlaps, "lengths": decomp.lengths, "error_bound": error_bound,
        "margin": float(th["margin"]), "control": exp.control.name,
        "window": th["window"], "m_star_variant": th["m_star_variant"],
        "data_sup_norm": exp.data.sup_norm(),
    }
    rep.provenance = prov
    if spec.dim != 3:
        rep.notes.append(
            f"dimension {spec.dim}: the existence constants are derived for three space "
            "dimensions and are reported here as formulas evaluated outside that setting"
        )
    if not exp.data.sup_norm() < M:
        rep.notes.append(f"M = {M} does not exceed the data sup norm {exp.data.sup_norm()}")

    def attempt(name, fn):
        try:
            val = fn()
        except SwrError as exc:
            rep.errors[name] = f"{type(exc).__name__}: {exc}"
            return None
        setattr(rep, name, val)
        return val

    gp = None
    if not f.in_scope or f.p is None:
        for name in ("r1", "r2", "tau", "t_star", "t_star_common", "m_star"):
            rep.errors[name] = f"ParamError: {f.name} is outside the polynomial growth class"
    else:
        gp = theory.growth_params(f.p)
        prov.update(p1=gp.p1, alpha=gp.alpha, l1=gp.l1, l2=gp.l2,
                    tau_denominator=gp.tau_denominator)
        m = M ** (gp.p - 1.0) * measure ** ((gp.p - 1.0) / (2.0 * gp.p))
        r1 = attempt("r1", lambda: theory.r1(M, f, measure, t0, gp))
        attempt("r2", lambda: theory.r2(_l2_norm(spec, f.eval(exp.data.u0)), t0, gp))
        if r1 is not None:
            attempt("tau", lambda: theory.tau(r1, m, gp, f.c_f))
        ts = attempt("t_star", lambda: theory.t_star(M, f, measure, t0, gp, f.c_f))
        if ts is None:
            rep.errors.setdefault("m_star", "needs t_star")
            rep.errors.setdefault("t_star_common", "needs t_star")
        else:
            attempt("m_star", lambda: theory.m_star(ts, M, measure, f, gp, f.c_f,
                                                    th["m_star_variant"]))
            if not f.sign_positive:
                rep.errors["t_star_common"] = (
                    "ParamError: barrier comparison needs a nonnegative nonlinearity"
                )
            else:
                barrier, m_under = phi_m_solve(spec, f, M, t0, decomp, exp.options)
                if barrier.diverged:
                    rep.errors["t_star_common"] = (
                        f"DomainError: barrier solution diverged at t={barrier.divergence_time}"
                    )
                else:
                    prov["M_underbar"] = m_under
                    attempt("t_star_common", lambda: theory.t_star_common(
                        m_under, band_measures, f, gp, f.c_f, t0, ts, measure))
    gamma = attempt("gamma", lambda: theory.choose_gamma(error_bound, f, exp.control,
                                                         float(th["margin"])))
    if gamma is not None:
        attempt("epsilon_bar", lambda: theory.epsilon_bar(gamma, decomp))
    return rep


def certified_time(rep: theory.TheoryReport) -> float | None:
    return rep.t_star_common


@dataclass
class SwrOutcome:
    run: swr.SwrRun
    reference: SpaceTimeField
    series: monitor.ErrorSeries
    windowed: list[float]
    gamma: float
    epsilon_bar: float | None
    bound: monitor.BoundReport | None
    fit: monitor.DecayFit | None
    barrier: list[monitor.BarrierReport]
    warnings: list[str] = field(default_factory=list)

    def metrics_rows(self, count: int) -> list[list]:
        """Rows ``k, err_1..err_I, E, Ebar, bound, margin`` with blanks where undefined."""
        rows = []
        for k, errs in enumerate(self.series.band_errors):
            row = [k] + list(errs) + [self.series.weighted[k]]
            if k < len(self.windowed):
                row.append(self.windowed[k])
                if self.bound is not None:
                    row += [self.bound.bounds[k], self.bound.margins[k]]
                else:
                    row += [None, None]
            else:
                row += [None, None, None]
            rows.append(row)
        return rows


def run_swr(exp: Experiment, workers: int = 1, rep: theory.TheoryReport | None = None) -> SwrOutcome:
    cfg = exp.cfg
    th, al = cfg["theory"], cfg["algorithm"]
    warnings = []
    if rep is None:
        rep = theory_report(exp)
    gamma = rep.gamma if rep.gamma is not None else 0.0
    reference = monolithic_solve(exp.spec, exp.f, exp.data, exp.options)
    if reference.diverged:
        warnings.append(f"reference solution diverged at t={reference.divergence_time}")
    ts = certified_time(rep)
    if ts is None:
        warnings.append("WARNING: certified existence time unavailable; convergence not certified")
    elif exp.spec.horizon > ts:
        warnings.append(
            f"WARNING: horizon T={exp.spec.horizon} exceeds certified time T*={ts}; "
            "convergence not certified"
        )
    barrier_fn = None
    if exp.f.sign_positive and exp.f.in_scope:
        phi, _ = phi_m_solve(exp.spec, exp.f, float(th["M"]), None, exp.decomp, exp.options)
        if not phi.diverged:
            M = float(th["M"])
            barrier_fn = lambda state: monitor.barrier_check(state, phi, M, exp.decomp)
    tracker = monitor.ErrorTracker(reference, exp.decomp, exp.control, gamma, barrier_fn)
    result = swr.run(exp.swr_problem,
                     swr.SwrConfig(al["max_sweeps"], al["stop_tol"], workers), tracker)
    if result.stop_reason == "diverged":
        j, n = result.state.diverged
        warnings.append(f"band {j + 1} diverged at step {n} in sweep {result.state.k}")
    windowed = monitor.windowed_series(tracker.series.weighted, exp.decomp.count, th["window"])
    bound = fit = None
    eps = rep.epsilon_bar
    if eps is not None and windowed:
        try:
            bound = monitor.check_linear_bound(windowed, eps, exp.decomp.count - 1)
        except RangeError as exc:
            warnings.append(f"bound check skipped: {exc}")
    try:
        fit = monitor.fit_decay_rate(windowed, th["fit_burn_in"], th["fit_stop"])
    except InsufficientData as exc:
        warnings.append(f"decay fit skipped: {exc}")
    return SwrOutcome(result, reference, tracker.series, windowed, gamma, eps, bound, fit,
                      tracker.barrier_reports, warnings)


def sweep_study(cfg: dict, workers: int = 1) -> list[dict]:
    """Fitted and predicted rates across ``study.overlap_fractions``."""
    rows = []
    for frac in cfg["study"]["overlap_fractions"]:
        sub = copy.deepcopy(cfg)
        sub["decomposition"]["overlap_fraction"] = frac
        sub["decomposition"]["bands"] = None
        exp = build(sub)
        rep = theory_report(exp)
        out = run_swr(exp, workers, rep)
        rows.append({
            "overlap_fraction": frac,
            "S": min(exp.decomp.overlaps),
            "fitted_rate": out.fit.rate if out.fit else None,
            "r_squared": out.fit.r_squared if out.fit else None,
            "predicted_epsilon_bar": rep.epsilon_bar,
            "sweeps": out.run.sweeps,
            "stop_reason": out.run.stop_reason,
        })
    return rows
