import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import gen, make_chain
from poolrelax.io import HEADER, ParseError, dump, dumps, load, loads

FIELDS = ("SA", "SQ", "RC", "RQ", "CQ", "p1", "q1", "pmin", "pmax", "L", "U", "CA", "tail", "head")


def assert_same_instance(a, b):
    assert (a.n_source, a.n_inter, a.n_plant, a.MT, a.name) == (b.n_source, b.n_inter, b.n_plant, b.MT, b.name)
    for f in FIELDS:
        np.testing.assert_array_equal(getattr(a, f), getattr(b, f), err_msg=f)


@given(st.sampled_from([(1, 2, 1, 2), (2, 3, 2, 3), (1, 4, 1, 1)]), st.integers(0, 10_000),
       st.sampled_from(["default", "slack", "starved"]))
def test_round_trip_is_exact(shape, seed, family):
    inst = gen(shape, seed=seed, family=family)
    text = dumps(inst)
    back = loads(text)
    assert_same_instance(inst, back)
    assert dumps(back) == text


def test_round_trip_keeps_awkward_floats():
    inst = make_chain(SA=0.1 + 0.2, SQ=1 / 3, p1=(1e-300, 4.0))
    assert_same_instance(inst, loads(dumps(inst)))


def test_file_round_trip(tmp_path, small_instance):
    path = tmp_path / "inst.txt"
    dump(small_instance, path)
    assert_same_instance(small_instance, load(path))


def test_comments_and_blank_lines_ignored(chain):
    lines = dumps(chain).splitlines()
    noisy = [lines[0], "", "# a comment"] + [ln + "   # trailing" for ln in lines[1:]]
    assert_same_instance(chain, loads("\n".join(noisy)))


def replace_line(text, index, new):
    lines = text.splitlines()
    lines[index] = new
    return "\n".join(lines) + "\n"


def line_of(text, start):
    return next(k for k, ln in enumerate(text.splitlines()) if ln.startswith(start))


@pytest.mark.parametrize("edit, line, column", [
    # wrong header
    (lambda t: replace_line(t, 0, "poolrelax-instance 2"), 1, 1),
    # non-numeric pmax on the first node row
    (lambda t: replace_line(t, 4, "1 source 0.0 0.0 0.0 lots"), 5, 22),
    # unknown node kind
    (lambda t: replace_line(t, 4, "1 sink 0.0 0.0 0.0 1.0"), 5, 3),
    # arc row with a missing field
    (lambda t: replace_line(t, line_of(t, "arcs") + 1, "1 2 0.0 10.0"), None, 1),
    # arc to a node that does not exist
    (lambda t: replace_line(t, line_of(t, "arcs") + 1, "1 9 0.0 10.0 1.0"), None, 3),
    # supply step outside the horizon
    (lambda t: replace_line(t, line_of(t, "supply") + 1, "1 7 5.0 3.0"), None, 3),
    # infinite value where a finite one is required
    (lambda t: replace_line(t, line_of(t, "supply") + 1, "1 1 inf 3.0"), None, 5),
])
def test_parse_errors_report_position(chain, edit, line, column):
    text = dumps(chain)
    bad = edit(text)
    if line is None:
        line = next(k + 1 for k, (a, b) in enumerate(zip(text.splitlines(), bad.splitlines())) if a != b)
    with pytest.raises(ParseError) as err:
        loads(bad)
    assert (err.value.line, err.value.column) == (line, column)
    assert f"line {line}" in str(err.value)


@pytest.mark.parametrize("edit, match", [
    (lambda t: t.replace("end\n", ""), "missing 'end'"),
    (lambda t: t + "nodes\n", "after 'end'"),
    (lambda t: t.replace("horizon 1\n", ""), "horizon"),
    (lambda t: "\n".join(ln for ln in t.splitlines() if not ln.startswith("3 1 ")) + "\n", "missing demand"),
])
def test_structural_errors(chain, edit, match):
    with pytest.raises(ParseError, match=match):
        loads(edit(dumps(chain)))


def test_duplicate_supply_row(chain):
    text = dumps(chain)
    k = line_of(text, "supply") + 1
    lines = text.splitlines()
    lines.insert(k, lines[k])
    with pytest.raises(ParseError, match="duplicate"):
        loads("\n".join(lines))


def test_model_errors_become_parse_errors(chain):
    text = replace_line(dumps(chain), line_of(dumps(chain), "demand") + 1, "3 1 0.0 2.0 100.0")
    with pytest.raises(ParseError):
        loads(text)


def test_empty_text():
    with pytest.raises(ParseError, match=HEADER):
        loads("")
