import os
import sys
import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

from poolrelax.generate import family_spec, generate  # noqa: E402
from poolrelax.model import Arc, Instance  # noqa: E402

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: runs for a minute or more")


def make_chain(MT=1, SA=5.0, SQ=3.0, RC=2.0, RQ=2.0, CQ=100.0, p1=(0.0, 4.0), q1=(0.0, 3.0),
               U=(10.0, 10.0), CA=(1.0, 1.0), pmax=20.0, name="chain"):
    """Source -> tank -> plant with constant data over ``MT`` steps."""
    arcs = [Arc(0, 1, 0.0, U[0], CA[0]), Arc(1, 2, 0.0, U[1], CA[1])]
    return Instance(1, 1, 1, arcs, MT, np.full((1, MT), SA), np.full((1, MT), SQ), np.full((1, MT), RC),
                    np.full((1, MT), RQ), [CQ], [p1[0], p1[1], 0.0], [q1[0], q1[1], 0.0], [0.0] * 3,
                    [1e3, pmax, 0.0], name=name)


def gen(shape, seed=0, family="default"):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return generate(family_spec(*shape, seed=seed, family=family))


@pytest.fixture
def chain():
    return make_chain()


@pytest.fixture(scope="session")
def small_instance():
    return gen((1, 2, 1, 3), seed=0)


# one line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
