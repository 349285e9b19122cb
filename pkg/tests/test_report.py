import pytest

from poolrelax.report import (COMPLETE, CSV_HEADER, RECOVERED, RELAXED, UNREPAIRABLE, SolveReport, from_row,
                              read_csv, to_csv, to_table)


def relax_only(kind="LP", obj=-1.25):
    return SolveReport("inst_a", kind, "relax", relax_obj_start=obj, times={"relax": 0.5, "total": 0.5},
                       termination=RELAXED)


def rescheduled():
    return SolveReport("inst_b", "SOCP", "reschedule", relax_obj_start=3.0, relax_obj_final=3.5, recovered_obj=4.0,
                       sucs_ratio=0.875, times={"relax": 1.0, "ffs": 0.25, "reschedule": 2.0, "total": 3.0},
                       termination=UNREPAIRABLE, iterations=3, max_residual=1e-9)


def test_single_row_layout():
    text = to_csv([relax_only()])
    lines = text.splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    cells = lines[1].split(",")
    assert len(cells) == len(CSV_HEADER)
    row = dict(zip(CSV_HEADER, cells))
    assert row["method"] == "LP" and row["mode"] == "relax"
    # no re-solve: the final relaxation value stays blank
    assert row["relax_obj_final"] == "" and row["sucs_ratio_pct"] == "" and row["time_recover"] == ""
    assert float(row["relax_obj_start"]) == -1.25


def test_lp_and_socp_rows_differ_only_by_method():
    rows = read_csv(to_csv([relax_only("LP"), relax_only("SOCP")]))
    assert [r["method"] for r in rows] == ["LP", "SOCP"]
    for k in CSV_HEADER:
        if k != "method":
            assert rows[0][k] == rows[1][k]


def test_round_trip_through_csv():
    orig = [relax_only(), rescheduled()]
    back = [from_row(r) for r in read_csv(to_csv(orig))]
    assert to_csv(back) == to_csv(orig)
    b = back[1]
    assert b.method == "SOCP+reschedule" and b.unrepairable
    assert b.sucs_ratio == pytest.approx(0.875)
    assert b.times["reschedule"] == 2.0


def test_percent_column():
    row = dict(zip(CSV_HEADER, to_csv([rescheduled()]).splitlines()[1].split(",")))
    assert float(row["sucs_ratio_pct"]) == 87.5
    assert float(row["time_recover"]) == 2.0


def test_ffs_time_used_when_no_reschedule():
    r = SolveReport("x", "LP", "ffs", times={"ffs": 0.75}, termination=RECOVERED)
    assert r.row()[CSV_HEADER.index("time_recover")] == 0.75


def test_header_mismatch_rejected():
    text = to_csv([relax_only()]).replace("instance,method", "name,method", 1)
    with pytest.raises(ValueError, match="header"):
        read_csv(text)


def test_table_has_one_line_per_report():
    table = to_table([relax_only(), rescheduled()])
    lines = table.splitlines()
    assert len(lines) == 4
    assert len({len(ln) for ln in lines}) == 1
    assert "87.5000" in lines[3] and COMPLETE not in table


@pytest.mark.parametrize("fn", [to_csv, to_table])
def test_empty_input_rejected(fn):
    with pytest.raises(ValueError):
        fn([])
