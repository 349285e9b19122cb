import importlib

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import gen, make_chain
from oracles import monotone_matchings
from poolrelax.model import Schedule, residuals, simulate
from poolrelax.report import COMPLETE, UNREPAIRABLE
from poolrelax.reschedule import (ABORTED, CASE_I, CASE_II, NO_MATCH, REPAIRED, RescheduleState, case_select,
                                  match_plants, match_plants_exhaustive, repair_case1, repair_case2, repair_tables,
                                  repair_window, reschedule)

# the package re-exports the function under the module's name
rs = importlib.import_module("poolrelax.reschedule")


def state_schedule(inst, a, q_plant=None):
    """Schedule with given step-0 flows, the instance's start state and optional plant qualities."""
    s = simulate(inst, np.asarray(a, dtype=float))
    if q_plant is not None:
        s.q[0, inst.n_source + inst.n_inter:] = q_plant
    return s


def test_excess_supply_flow_reduction():
    # a = 10, RC = 2, recovered plant quality 5, RQ = 4, feeder quality 2: 10 - 2 * 1 / 2 = 9
    inst = make_chain(MT=1, RC=2.0, RQ=4.0, p1=(0.0, 20.0), q1=(0.0, 2.0), U=(10.0, 20.0), pmax=30.0)
    xplus = state_schedule(inst, [[0.0, 10.0]], q_plant=5.0)
    xplus.u[0] = [0, 1]
    a, u = rs._case1_flows(inst, xplus, 0, inst.p1.copy(), inst.q1.copy())
    assert a[1] == 9.0
    assert u.tolist() == [0, 1]


def test_excess_supply_source_refill_empties_source():
    # source holds 3, arc capacity 5, tank headroom 10: ships 3 and ends empty at quality 0
    inst = make_chain(MT=1, SA=0.0, p1=(3.0, 10.0), q1=(2.0, 3.0), U=(5.0, 10.0), pmax=20.0)
    xplus = state_schedule(inst, [[1.0, 0.0]])
    xplus.u[0] = [1, 0]
    p, q = inst.p1.copy(), inst.q1.copy()
    a, _ = rs._case1_flows(inst, xplus, 0, p, q)
    assert a[0] == 3.0
    p_next, q_next, _, _ = rs._advance(inst, 0, a, p, q)
    assert p_next[0] == 0.0 and q_next[0] == 0.0
    assert p_next[1] == 13.0


def two_plants():
    return gen((1, 3, 2, 2), seed=0)


@pytest.mark.parametrize("delta, case", [((0.0, 0.0), CASE_I), ((0.5, 1.0), CASE_I), ((-0.1, 0.0), CASE_II),
                                         ((0.5, -1e-9), CASE_II)])
def test_case_selection(delta, case):
    inst = two_plants()
    s = Schedule.zeros(inst)
    s.q[0, inst.n_source + inst.n_inter:] = inst.RQ[:, 0] + np.array(delta)
    assert case_select(inst, s, 0) == case


@given(st.integers(1, 4), st.integers(1, 6), st.integers(0, 2**24))
def test_greedy_matching_is_first_monotone_matching(n_plants, n_tanks, bits):
    plants = list(range(100, 100 + n_plants))
    tanks = list(range(n_tanks))
    table = {(j, i): bool(bits >> (j * n_plants + (i - 100)) & 1) for j in tanks for i in plants}

    def ok(j, i):
        return table[(j, i)]

    greedy = match_plants(None, plants, tanks, ok)
    every = monotone_matchings(plants, tanks, ok)
    assert (greedy is None) == (not every)
    if every:
        assert greedy == every[0] == match_plants_exhaustive(plants, tanks, ok)


def test_single_tank_matching_pins_plant():
    inst = make_chain(MT=1, RC=2.0, RQ=2.0, p1=(0.0, 10.0), q1=(0.0, 3.0), U=(10.0, 10.0))
    xplus = state_schedule(inst, [[0.0, 0.0]])
    assert xplus.v[0, 0] > 0
    res = repair_case2(inst, xplus, range(0, 1))
    assert res.status == REPAIRED
    assert res.tables[0].A_IP == [(1, 2)]
    assert res.schedule.q[0, 2] == pytest.approx(2.0, rel=1e-14)
    assert res.schedule.v[0, 0] == 0.0


def test_weak_tanks_leave_input_untouched():
    inst = gen((1, 3, 2, 2), seed=1, family="starved")
    xplus = simulate(inst, np.zeros((inst.MT, inst.n_arcs)))
    tab = repair_tables(inst, 0, inst.p1, inst.q1)
    assert all(s < min(tab.D.values()) for s in tab.S.values())
    res = repair_case2(inst, xplus, range(0, 2))
    assert res.status == NO_MATCH
    for name in ("a", "p", "q", "u", "v"):
        np.testing.assert_array_equal(getattr(res.schedule, name), getattr(xplus, name))


def test_empty_feeder_aborts_window():
    inst = make_chain(MT=1, RC=2.0, RQ=1.0, p1=(0.0, 4.0), q1=(0.0, 0.0))
    xplus = state_schedule(inst, [[0.0, 2.0]], q_plant=3.0)
    xplus.u[0] = [0, 1]
    res = repair_case1(inst, xplus, range(0, 1))
    assert res.status == ABORTED
    np.testing.assert_array_equal(res.schedule.a, xplus.a)


def test_tables_are_sorted_descending_with_id_ties():
    inst = gen((2, 4, 2, 2), seed=3)
    tab = repair_tables(inst, 0, inst.p1, inst.q1)
    assert [tab.D[i] for i in tab.plant_order] == sorted(tab.D.values(), reverse=True)
    assert [tab.S[j] for j in tab.tank_order] == sorted(tab.S.values(), reverse=True)
    assert tab.M_bar == min(inst.n_source, inst.n_inter - inst.n_plant, len(tab.J))
    assert len(tab.A_SI) <= tab.M_bar


def test_no_shortage_finishes_in_one_iteration():
    inst = make_chain(MT=2, RC=2.0, RQ=1.0, p1=(0.0, 10.0), q1=(0.0, 3.0))
    x, rep = reschedule(inst)
    assert rep.iterations == 1 and rep.termination == COMPLETE
    assert rep.history[0]["t_plus"] is None
    assert np.all(x.v == 0.0) and rep.sucs_ratio == 1.0


class RecordingState(RescheduleState):
    snapshots = []

    def accept(self, window, t_end):
        before = self.x_star.copy()
        t0 = self.t_hat
        super().accept(window, t_end)
        RecordingState.snapshots.append((t0, before, self.x_star.copy()))


@pytest.mark.parametrize("seed", range(6))
def test_loop_invariants_on_slack_instances(seed, monkeypatch):
    inst = gen((1, 3, 2, 3), seed=seed, family="slack")
    RecordingState.snapshots = []
    monkeypatch.setattr(rs, "RescheduleState", RecordingState)
    x, rep = reschedule(inst)
    hats = [h["t_hat"] for h in rep.history]
    assert hats == sorted(set(hats)) and len(hats) <= inst.MT
    # accepted steps never change afterwards
    for t0, before, after in RecordingState.snapshots:
        np.testing.assert_array_equal(after.a[:t0], before.a[:t0])
        np.testing.assert_array_equal(after.p[: t0 + 1], before.p[: t0 + 1])
        np.testing.assert_array_equal(after.v[:t0], before.v[:t0])
    res = residuals(inst, x)
    assert res.dynamics_max() <= 1e-6
    assert res.max(["storage", "flow_bounds", "one_pipeline"]) <= 1e-9
    assert rep.termination == COMPLETE and rep.sucs_ratio == 1.0
    assert np.all(x.v == 0.0)
    for h in rep.history:
        if h["outcome"] == REPAIRED:
            assert set(h["cases"]) <= {CASE_I, CASE_II, CASE_I + "->" + CASE_II}


def test_repaired_window_has_no_shortage_and_respects_storage():
    inst = gen((1, 3, 2, 3), seed=2, family="slack")
    from poolrelax.pipeline import run_pipeline

    _, xplus, _ = run_pipeline(inst, mode="ffs")
    t_plus = int(rs.shortage_steps(xplus.v, inst.RQ)[0])
    res = repair_window(inst, xplus, 0, t_plus + 1)
    assert res.status == REPAIRED
    out = res.schedule
    assert np.all(out.v[: t_plus + 1] == 0.0)
    tanks = slice(inst.n_source, inst.n_source + inst.n_inter)
    p = out.p[: t_plus + 2, tanks]
    assert np.all(p >= inst.pmin[tanks] - 1e-9) and np.all(p <= inst.pmax[tanks] + 1e-9)


def test_starved_instances_stop_unrepairable():
    inst = gen((1, 3, 2, 3), seed=0, family="starved")
    x, rep = reschedule(inst)
    assert rep.termination == UNREPAIRABLE
    assert rep.sucs_ratio < 1.0
    assert residuals(inst, x).dynamics_max() <= 1e-6


def test_restart_must_move_forward(small_instance):
    st_ = RescheduleState(Schedule.zeros(small_instance))
    st_.init_mask(small_instance)
    with pytest.raises(rs.RescheduleError):
        st_.accept(Schedule.zeros(small_instance), 0)


@pytest.mark.slow
def test_large_shape_reaches_full_service():
    inst = gen((10, 18, 7, 2), seed=0, family="slack")
    x, rep = reschedule(inst)
    assert rep.sucs_ratio == 1.0
    rows = residuals(inst, x).families
    assert max(rows["plant_quality"].max(), rows["shortage"].max()) <= 1e-6
    assert rep.max_residual <= 1e-6
