import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import gen, make_chain
from poolrelax.ffs import FfsError, Ffs1Model, branch_and_bound, enumerate_ffs1, ffs, ffs1, ffs2
from poolrelax.model import objective, residuals, stocks_from_flows
from poolrelax.qcqp import build_qcqp
from poolrelax.relax import LP, solve_relaxation


def relaxation_point(inst):
    qp = build_qcqp(inst)
    rr = solve_relaxation(qp, LP)
    ref = qp.meta["varmap"].from_x(rr.x[: qp.n])
    return ref.p, ref.q


def test_single_chain_serves_plant_through_tank():
    # the tank cannot fill and drain in one step, so only the tank-to-plant arc runs
    inst = make_chain(MT=1, RC=2.0, p1=(0.0, 4.0))
    p_ref = stocks_from_flows(inst, np.array([[0.0, 2.0]]))
    s, res = ffs1(inst, p_ref, np.tile(inst.q1, (2, 1)))
    np.testing.assert_array_equal(s.u, [[0, 1]])
    np.testing.assert_allclose(s.a, [[0.0, 2.0]], atol=1e-9)
    assert res.status == "optimal"


def test_zero_quality_requirement_needs_no_extra_flow():
    inst = make_chain(MT=2, RC=2.0, RQ=0.0, p1=(0.0, 10.0))
    a = np.array([[0.0, 2.0], [0.0, 2.0]])
    out = ffs(inst, stocks_from_flows(inst, a), np.tile(inst.q1, (3, 1)))
    np.testing.assert_allclose(out.schedule.a, a, atol=1e-9)
    np.testing.assert_array_equal(out.schedule.v, 0.0)
    assert out.bnb.objective == pytest.approx(objective(inst, out.schedule), abs=1e-7)


@pytest.mark.parametrize("seed", range(3))
def test_branch_and_bound_matches_enumeration(seed):
    inst = gen((2, 2, 1, 2), seed=seed)
    p_ref, q_ref = relaxation_point(inst)
    _, res = ffs1(inst, p_ref, q_ref)
    best, count = enumerate_ffs1(inst, p_ref, q_ref)
    assert count > 1
    assert res.objective == pytest.approx(best, abs=1e-6)
    assert res.gap <= 1e-6


def test_tank_mixing_weighted_average():
    inst = make_chain(MT=1, SA=0.0, p1=(1.0, 1.0), q1=(4.0, 2.0))
    a = np.array([[1.0, 0.0]])
    q, v = ffs2(inst, a, np.array([[1, 0]]), stocks_from_flows(inst, a))
    assert q[1, 1] == 3.0


@pytest.mark.parametrize("q_tank, RQ, short", [(3.0, 2.0, 0.0), (1.5, 2.0, 0.5)])
def test_plant_single_feeder(q_tank, RQ, short):
    inst = make_chain(MT=1, RC=2.0, RQ=RQ, p1=(0.0, 4.0), q1=(0.0, q_tank))
    a = np.array([[0.0, 2.0]])
    q, v = ffs2(inst, a, np.array([[0, 1]]), stocks_from_flows(inst, a))
    assert q[0, 2] == q_tank
    assert v[0, 0] == pytest.approx(short)


@pytest.fixture(scope="module")
def recovered():
    inst = gen((1, 2, 1, 3), seed=2)
    p_ref, q_ref = relaxation_point(inst)
    return inst, p_ref, q_ref, ffs(inst, p_ref, q_ref)


def test_recursion_output_meets_dynamics(recovered):
    inst, _, _, out = recovered
    rep = residuals(inst, out.schedule)
    assert rep.dynamics_max() <= 1e-8
    assert rep.max(["flow_bounds", "one_pipeline", "storage", "shortage"]) <= 1e-8


def test_recursion_is_idempotent(recovered):
    inst, _, _, out = recovered
    s = out.schedule
    q, v = ffs2(inst, s.a, s.u, s.p, s.q, s.v)
    np.testing.assert_array_equal(q, s.q)
    np.testing.assert_array_equal(v, s.v)


def test_recursion_is_deterministic(recovered):
    inst, p_ref, q_ref, out = recovered
    again = ffs(inst, p_ref, q_ref)
    np.testing.assert_array_equal(again.schedule.a, out.schedule.a)
    np.testing.assert_array_equal(again.schedule.q, out.schedule.q)


def test_search_histories_and_bounds(recovered):
    _, _, _, out = recovered
    res = out.bnb
    assert res.incumbent_history == sorted(res.incumbent_history, reverse=True)
    assert res.objective == res.incumbent_history[-1]
    assert res.objective >= res.root_bound - 1e-7
    assert res.gap <= 1e-6 and res.status == "optimal"


@settings(max_examples=10)
@given(st.integers(0, 1000))
def test_integer_optimum_never_beats_root_bound(seed):
    inst = gen((1, 2, 1, 2), seed=seed)
    p_ref, q_ref = relaxation_point(inst)
    try:
        _, res = ffs1(inst, p_ref, q_ref)
    except FfsError:
        return
    assert res.objective >= res.root_bound - 1e-7 * (1 + abs(res.root_bound))
    assert np.all(np.diff(res.incumbent_history) < 0)


def test_unmeetable_demand_names_family():
    inst = make_chain(MT=1, RC=2.0, U=(10.0, 1.0))
    with pytest.raises(FfsError) as err:
        ffs1(inst, np.zeros((2, 3)), np.zeros((2, 3)))
    assert err.value.family is not None


def test_alpha_must_be_positive(chain):
    with pytest.raises(ValueError):
        Ffs1Model(chain, np.zeros((2, 3)), np.zeros((2, 3)), alpha=0.0)


def test_node_limit_reports_status_or_error():
    inst = gen((2, 2, 1, 2), seed=0)
    p_ref, q_ref = relaxation_point(inst)
    model = Ffs1Model(inst, p_ref, q_ref)
    try:
        res = branch_and_bound(model, node_limit=1)
    except FfsError as exc:
        assert "node limit" in str(exc)
    else:
        assert res.status in ("node_limit", "optimal")
        assert res.bound <= res.objective
