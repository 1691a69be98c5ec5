import math

import numpy as np
import pytest

from swrheat import swr
from swrheat.errors import CompatibilityError, ConfigError
from swrheat.model import (
    DomainSpec, boundary_data, build_decomposition, default_guesses, make_problem,
    preset_field, square, zero,
)
from swrheat.monitor import restrict
from swrheat.solver import monolithic_solve


def setup(nz=101, nt=50, horizon=0.05, count=2, frac=0.2, f=None, amp=0.5, dim=1):
    if dim == 1:
        spec = DomainSpec(1, (0.0, 1.0), nz, nt, horizon)
    else:
        spec = DomainSpec(2, (0.0, 1.0), nz, nt, horizon, ((0.0, 1.0),), (11,))
    decomp = build_decomposition(spec, count, frac)
    u0 = preset_field(spec, "sines", amplitude=amp)
    data = make_problem(spec, u0, boundary_data(spec, "zero"), decomp)
    return swr.SwrProblem(spec, f or square(), data, decomp)


def test_zero_problem_stops_after_one_sweep():
    prob = setup(amp=0.0, f=zero())
    out = swr.run(prob)
    assert out.stop_reason == "converged" and out.sweeps == 1
    assert all(np.all(fl.values == 0.0) for fl in out.state.fields)


def test_single_band_equals_monolithic_bitwise():
    prob = setup(count=1)
    state = swr.init_iterates(prob)
    ref = monolithic_solve(prob.spec, prob.f, prob.data)
    assert state.fields[0].values.tobytes() == ref.values.tobytes()
    out = swr.run(prob)
    assert out.state.fields[0].values.tobytes() == ref.values.tobytes()


def test_incompatible_guess_names_band():
    prob = setup(count=3, frac=0.3)
    guesses = default_guesses(prob.spec, prob.data.u0, prob.decomp)
    guesses[2] = (guesses[2][0] + 0.1, guesses[2][1])
    prob.data.initial_guesses = guesses
    with pytest.raises(CompatibilityError, match="band 3"):
        swr.init_iterates(prob)


def test_traces_come_from_previous_iterate():
    prob = setup(count=3, frac=0.3)
    s0 = swr.init_iterates(prob)
    s1 = swr.sweep(prob, s0)
    bands = prob.decomp.index_bands
    g = prob.data.g
    assert np.array_equal(s1.traces[0][0].values, g[:, 0])
    assert np.array_equal(s1.traces[-1][1].values, g[:, -1])
    for j in range(1, 3):
        lo = bands[j][0]
        assert np.array_equal(s1.traces[j][0].values, s0.fields[j - 1].values[:, lo - bands[j - 1][0]])
    for j in range(2):
        hi = bands[j][1]
        assert np.array_equal(s1.traces[j][1].values, s0.fields[j + 1].values[:, hi - bands[j + 1][0]])


@pytest.mark.parametrize("f", [zero(), square()])
def test_monolithic_solution_is_a_fixed_point(f):
    prob = setup(count=3, frac=0.3, f=f)
    ref = monolithic_solve(prob.spec, f, prob.data)
    fields = [restrict(ref, prob.decomp, j) for j in range(prob.decomp.count)]
    state = swr.SwrState(0, fields, [])
    out = swr.sweep(prob, state)
    for a, b in zip(out.fields, fields):
        assert np.max(np.abs(a.values - b.values)) <= 1e-9


def test_interface_error_decreases_linear():
    spec = DomainSpec(1, (0.0, 1.0), 41, 20, 0.1)
    decomp = build_decomposition(spec, 2, 0.2)
    u0 = np.zeros(spec.shape)
    t = spec.times
    bump = np.sin(math.pi * t / t[-1]) ** 2
    guesses = default_guesses(spec, u0, decomp)
    guesses[0] = (guesses[0][0], bump.copy())
    guesses[1] = (bump.copy(), guesses[1][1])
    data = make_problem(spec, u0, boundary_data(spec, "zero"), decomp, guesses)
    prob = swr.SwrProblem(spec, zero(), data, decomp)
    s0 = swr.init_iterates(prob)
    s1 = swr.sweep(prob, s0)

    def interface_error(state):
        return max(np.max(np.abs(fl.values)) for fl in state.fields)

    assert interface_error(s1) < interface_error(s0)
    tr0 = max(np.max(np.abs(a.values)) + np.max(np.abs(b.values)) for a, b in s0.traces)
    tr1 = max(np.max(np.abs(a.values)) + np.max(np.abs(b.values)) for a, b in s1.traces)
    assert tr1 < tr0


def test_scheduling_independence():
    prob = setup(count=4, frac=0.3, nz=81, nt=20)
    a = swr.run(prob, swr.SwrConfig(max_sweeps=8, workers=1))
    b = swr.run(prob, swr.SwrConfig(max_sweeps=8, workers=4))
    for x, y in zip(a.state.fields, b.state.fields):
        assert x.values.tobytes() == y.values.tobytes()
    assert a.updates == b.updates


def test_two_dimensional_run_converges():
    prob = setup(nz=41, nt=10, horizon=0.02, count=2, frac=0.3, dim=2)
    out = swr.run(prob, swr.SwrConfig(max_sweeps=60, stop_tol=1e-10))
    assert out.stop_reason == "converged"
    ref = monolithic_solve(prob.spec, prob.f, prob.data)
    for j, fl in enumerate(out.state.fields):
        assert np.max(np.abs(fl.values - restrict(ref, prob.decomp, j).values)) <= 1e-8


def test_linear_canonical_budget():
    spec = DomainSpec(1, (0.0, 1.0), 201, 100, 0.1)
    decomp = build_decomposition(spec, 2, 0.2)
    u0 = preset_field(spec, "sines", amplitude=0.5)
    data = make_problem(spec, u0, boundary_data(spec, "zero"), decomp)
    out = swr.run(swr.SwrProblem(spec, zero(), data, decomp),
                  swr.SwrConfig(max_sweeps=40, stop_tol=1e-8))
    assert out.stop_reason == "converged" and out.sweeps <= 40


def test_blow_up_stops_with_divergence():
    spec = DomainSpec(1, (0.0, 1.0), 101, 100, 0.2)
    decomp = build_decomposition(spec, 2, 0.2)
    u0 = np.full(spec.shape, 10.0)
    data = make_problem(spec, u0, boundary_data(spec, "constant", value=10.0), decomp)
    out = swr.run(swr.SwrProblem(spec, square(), data, decomp))
    assert out.stop_reason == "diverged"
    band, step = out.state.diverged
    # bands are shorter than the domain, so diffusion delays their blow-up past the
    # monolithic time; the spatially constant ODE still bounds it from below
    assert band in (0, 1) and 0.1 <= step * spec.dt <= spec.horizon


def test_config_validation():
    with pytest.raises(ConfigError) as exc:
        swr.SwrConfig(max_sweeps=0, stop_tol=0.0, workers=0)
    assert len(exc.value.problems) == 3
