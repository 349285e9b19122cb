import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import gen, make_chain
from oracles import straight_line_residuals
from poolrelax.model import (ALL_FAMILIES, DYNAMICS_FAMILIES, Arc, Instance, ModelError, Schedule, mix_forward,
                             objective, residuals, simulate, stocks_from_flows, sucs_ratio)


def test_mixing_step_weighted_average():
    # tank holds 1 unit at quality 2 and receives 1 unit at quality 4
    inst = make_chain(MT=1, SA=0.0, SQ=0.0, p1=(1.0, 1.0), q1=(4.0, 2.0))
    a = np.array([[1.0, 0.0]])
    s = simulate(inst, a)
    assert s.p[1, 1] == 2.0
    assert s.q[1, 1] == 3.0
    rep = residuals(inst, s)
    assert rep.dynamics_max() == 0.0
    # the emptied source takes quality 0
    assert s.p[1, 0] == 0.0 and s.q[1, 0] == 0.0


def test_zero_flows_full_shortage():
    inst = make_chain(MT=2, RQ=2.5)
    s = simulate(inst, np.zeros((2, 2)))
    assert np.all(s.q[:2, 2] == 0.0)
    np.testing.assert_array_equal(s.v, np.full((2, 1), 2.5))
    assert residuals(inst, s).families["shortage"].max() == 0.0


def perturbed(inst, seed):
    rng = np.random.default_rng(seed)
    s = simulate(inst, rng.uniform(0, 1, (inst.MT, inst.n_arcs)) * inst.U)
    s.p += rng.normal(scale=0.1, size=s.p.shape)
    s.q += rng.normal(scale=0.1, size=s.q.shape)
    s.a += rng.normal(scale=0.1, size=s.a.shape)
    s.v = np.abs(s.v + rng.normal(scale=0.1, size=s.v.shape))
    s.u = rng.integers(0, 2, s.u.shape).astype(np.int8)
    return s


@pytest.mark.parametrize("seed", range(6))
def test_residuals_match_straight_line_evaluator(seed):
    inst = gen((1, 2, 1, 3), seed=seed)
    s = perturbed(inst, seed)
    got = residuals(inst, s).family_max()
    want = straight_line_residuals(inst, s)
    for fam in want:
        if fam == "one_pipeline":
            # binaries here are exact 0/1, so only the count part can be violated
            assert got[fam] == pytest.approx(want[fam], abs=1e-12)
        else:
            assert got[fam] == pytest.approx(want[fam], rel=1e-12, abs=1e-12), fam
    assert set(got) == set(ALL_FAMILIES)


def nonnegative_flows(inst, rng):
    """Random flows that never ship more than a node holds at the start of a step."""
    a = np.zeros((inst.MT, inst.n_arcs))
    p = inst.p1.copy()
    for t in range(inst.MT):
        for i in inst.storage_nodes:
            outs = list(inst.out_arcs[i])
            if outs and p[i] > 0:
                share = rng.dirichlet(np.ones(len(outs))) * rng.uniform(0, 0.9) * p[i]
                a[t, outs] = np.minimum(share, inst.U[outs])
        net = np.zeros(inst.V)
        np.add.at(net, inst.head, a[t])
        np.subtract.at(net, inst.tail, a[t])
        p = p + net
        p[: inst.n_source] += inst.SA[:, t]
    return a


@given(st.integers(0, 10_000), st.sampled_from([(1, 2, 1, 2), (2, 3, 1, 3), (1, 3, 2, 2)]))
def test_forward_simulation_has_zero_dynamics_residual(seed, shape):
    inst = gen(shape, seed=seed % 7)
    s = simulate(inst, nonnegative_flows(inst, np.random.default_rng(seed)))
    rep = residuals(inst, s)
    # q is computed by division, so the products match to rounding only
    assert rep.dynamics_max() <= 1e-9 * (1 + np.abs(s.p).max() * np.abs(s.q).max())
    assert rep.families["shortage"].max() == 0.0
    assert rep.families["source_nonneg"].max() == 0.0


def test_residuals_deterministic():
    inst = gen((1, 2, 1, 3), seed=1)
    s = perturbed(inst, 1)
    r1, r2 = residuals(inst, s), residuals(inst, s)
    for k in r1.families:
        np.testing.assert_array_equal(r1.families[k], r2.families[k])


def test_sucs_examples():
    inst = make_chain(MT=4, RQ=25.0)
    s = Schedule.zeros(inst)
    assert sucs_ratio(inst, s) == 1.0
    s.v[:] = 1.25
    assert sucs_ratio(inst, s) == pytest.approx(0.95)
    s.v[:] = 25.0
    assert sucs_ratio(inst, s) == 0.0


def test_sucs_undefined_without_requirement():
    inst = make_chain(MT=1, RQ=0.0)
    with pytest.raises(ModelError):
        sucs_ratio(inst, Schedule.zeros(inst))


@given(st.lists(st.floats(0, 3), min_size=4, max_size=4), st.integers(0, 3), st.floats(0, 2))
def test_sucs_monotone_in_shortage(v, k, bump):
    inst = make_chain(MT=4, RQ=3.0)
    s = Schedule.zeros(inst)
    s.v[:, 0] = v
    before = sucs_ratio(inst, s)
    s.v[k, 0] += bump
    assert sucs_ratio(inst, s) <= before


def test_objective_is_transport_plus_penalty():
    inst = make_chain(MT=2, RC=2.0, CQ=10.0, CA=(1.0, 3.0))
    s = Schedule.zeros(inst)
    s.a[:] = [[1.0, 2.0], [0.5, 0.0]]
    s.v[:] = [[0.5], [0.0]]
    assert objective(inst, s) == pytest.approx(1.0 + 6.0 + 0.5 + 10.0 * 2.0 * 0.5)


def test_stocks_and_mixing_helpers_agree_with_simulate(small_instance):
    inst = small_instance
    a = np.full((inst.MT, inst.n_arcs), 0.5)
    p = stocks_from_flows(inst, a)
    q, v = mix_forward(inst, a, p)
    s = simulate(inst, a)
    np.testing.assert_array_equal(s.p, p)
    np.testing.assert_array_equal(s.q, q)
    np.testing.assert_array_equal(s.v, v)


def test_mix_forward_reports_emptied_nodes():
    # the source ships more than it holds, so its next stock is zero with leftover mass
    inst = make_chain(MT=1, SA=0.0, p1=(1.0, 1.0), q1=(4.0, 2.0))
    a = np.array([[1.0, 0.0]])
    p = stocks_from_flows(inst, a)
    diag = []
    mix_forward(inst, a, p, diagnostics=diag)
    assert diag == []
    p[1, 0] = 0.0
    p[1, 1] = 0.0
    mix_forward(inst, a, p, diagnostics=diag)
    assert diag and diag[0][0] == "empty_node"


@pytest.mark.parametrize("arcs, msg", [
    ([Arc(2, 0, 0, 1, 1)], "runs"),
    ([Arc(0, 1, 2, 1, 1)], "bounds"),
    ([Arc(0, 0, 0, 1, 1)], "endpoints"),
    ([Arc(0, 5, 0, 1, 1)], "endpoints"),
])
def test_invalid_arcs_rejected(arcs, msg):
    with pytest.raises(ModelError, match=msg):
        Instance(1, 1, 1, arcs, 1, [1], [1], [1], [1], [1], [0] * 3, [0] * 3, [0] * 3, [1] * 3)


@pytest.mark.parametrize("field, value", [("RC", 0.0), ("SA", -1.0), ("CQ", np.nan)])
def test_invalid_constants_rejected(field, value):
    kw = dict(SA=[1.0], SQ=[1.0], RC=[1.0], RQ=[1.0], CQ=[1.0])
    kw[field] = [value]
    with pytest.raises(ModelError):
        Instance(1, 1, 1, [Arc(0, 1, 0, 1, 1)], 1, kw["SA"], kw["SQ"], kw["RC"], kw["RQ"], kw["CQ"],
                 [0] * 3, [0] * 3, [0] * 3, [1] * 3)


def test_pmin_above_pmax_rejected():
    with pytest.raises(ModelError):
        Instance(1, 1, 1, [Arc(0, 1, 0, 1, 1)], 1, [1], [1], [1], [1], [1], [0] * 3, [0] * 3, [0, 2, 0], [1] * 3)


def test_adjacency_consistent(small_instance):
    inst = small_instance
    for e, arc in enumerate(inst.arcs):
        assert e in inst.out_arcs[arc.tail] and e in inst.in_arcs[arc.head]
        assert inst.arc_index(arc.tail, arc.head) == e
    assert sum(map(len, inst.in_arcs)) == inst.n_arcs == sum(map(len, inst.out_arcs))


def test_instance_is_read_only(small_instance):
    with pytest.raises(ValueError):
        small_instance.SA[0, 0] = 1.0


def test_window_shapes(small_instance):
    inst = small_instance
    sub = inst.window(1, inst.p1 + 1, inst.q1)
    assert sub.MT == inst.MT - 1
    np.testing.assert_array_equal(sub.SA, inst.SA[:, 1:])
    np.testing.assert_array_equal(sub.p1, inst.p1 + 1)
    with pytest.raises(ModelError):
        inst.window(inst.MT, inst.p1, inst.q1)


def test_schedule_dimension_check(small_instance):
    s = Schedule.zeros(small_instance)
    s.v = np.zeros((1, 1))
    with pytest.raises(ModelError):
        residuals(small_instance, s)


def test_dynamics_families_are_named():
    assert set(DYNAMICS_FAMILIES) <= set(ALL_FAMILIES)
