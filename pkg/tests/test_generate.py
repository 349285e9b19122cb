import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import gen
from poolrelax.generate import (FAMILIES, GRID, REFERENCE_SHAPES, GeneratorSpec, family_spec, generate,
                                reference_spec)
from poolrelax.io import dumps
from poolrelax.qcqp import VarMap


def test_reference_shape_one_has_six_arcs():
    inst = generate(reference_spec(1))
    assert (inst.n_source, inst.n_inter, inst.n_plant, inst.MT) == (1, 2, 1, 10)
    # 2 source arcs, 2 tank-to-tank arcs, 2 tank-to-plant arcs
    assert inst.n_arcs == 6


def test_largest_reference_shape_flow_count():
    inst = generate(reference_spec(9))
    assert REFERENCE_SHAPES[8] == (10, 18, 7, 2)
    # (10*18 + 18*17 + 18*7) arcs over 2 steps
    assert VarMap(inst).n_a == 1224


@given(st.integers(0, 2**31), st.sampled_from(FAMILIES))
def test_same_seed_same_bits(seed, family):
    a = gen((2, 3, 1, 3), seed=seed, family=family)
    b = gen((2, 3, 1, 3), seed=seed, family=family)
    assert dumps(a) == dumps(b)


def test_different_seeds_differ():
    assert dumps(gen((1, 2, 1, 3), seed=0)) != dumps(gen((1, 2, 1, 3), seed=1))


@given(st.integers(0, 10_000), st.sampled_from(FAMILIES))
def test_values_on_grid_and_supply_covers_demand(seed, family):
    inst = gen((2, 3, 2, 4), seed=seed, family=family)
    for arr in (inst.RC, inst.RQ, inst.SQ, inst.U, inst.CA, inst.pmax, inst.p1):
        assert np.allclose(np.round(arr * GRID), arr * GRID, atol=1e-9)
    slack = family_spec(2, 3, 2, 4, seed, family).supply_slack
    assert inst.SA.sum() + inst.p1.sum() >= (1 + slack) * inst.RC.sum() - 1e-9


@given(st.integers(0, 10_000))
def test_slack_family_tanks_feed_any_plant(seed):
    inst = gen((1, 3, 2, 3), seed=seed, family="slack")
    need = inst.RC.sum(axis=1).max()
    tanks = slice(inst.n_source, inst.n_source + inst.n_inter)
    assert np.all(inst.p1[tanks] >= need - 1e-9)
    assert np.all(inst.p1[tanks] <= inst.pmax[tanks])
    for e in range(inst.n_arcs):
        if inst.head[e] in inst.plants:
            assert inst.U[e] >= inst.RC.max()


@given(st.integers(0, 10_000))
def test_starved_family_mass_below_every_requirement(seed):
    inst = gen((1, 3, 2, 3), seed=seed, family="starved")
    best_mass = inst.U.max() * max(inst.SQ.max(), inst.q1.max())
    assert best_mass < (inst.RC * inst.RQ).min()


def test_warns_when_tanks_do_not_outnumber_plants():
    with pytest.warns(UserWarning, match="more tanks than plants"):
        generate(family_spec(1, 2, 2, 1, seed=0))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        generate(family_spec(1, 3, 2, 1, seed=0))


@pytest.mark.parametrize("kw", [dict(n_source=0), dict(MT=0), dict(family="bogus")])
def test_bad_spec_rejected(kw):
    base = dict(n_source=1, n_inter=2, n_plant=1, MT=1)
    base.update(kw)
    with pytest.raises(ValueError):
        GeneratorSpec(**base)
