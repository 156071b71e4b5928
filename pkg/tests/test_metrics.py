import math

import numpy as np
import pytest

from zapp.metrics import CSV_HEADER, MetricsRow, MetricsTable, compute_metrics
from zapp.simulator import EpisodeLog, SolveRecord


def synthetic_log(xs, times, outcome="goal", solve_times=(0.1,), variant="zapp"):
    states = np.zeros((len(xs), 1, 4))
    states[:, 0, 0] = xs
    solves = [SolveRecord(0.0, st, True, False, 3, 10, 1.0, np.zeros((5, 2)), True, np.zeros((2, 17, 2)), None)
              for st in solve_times]
    return EpisodeLog(0, variant, np.asarray(times, float), states, np.zeros((len(xs), 2)), solves,
                      outcome, float(times[-1]), float(xs[0]))


def test_three_step_log_by_hand():
    # 0 -> 0.5 -> 1.5 -> 2.4 m in 0.6 s
    log = synthetic_log([0.0, 0.5, 1.5, 2.4], [0.0, 0.2, 0.4, 0.6], solve_times=(0.2, 0.4))
    assert log.distance == pytest.approx(2.4)
    assert log.avg_speed == pytest.approx(4.0)
    row = compute_metrics([log])
    assert row.goals_pct == 100.0 and row.crashes_pct == 0.0
    assert row.avg_speed_mean == pytest.approx(4.0) and row.avg_speed_std == 0.0
    assert row.solve_time_mean == pytest.approx(0.3)
    assert row.solve_time_std == pytest.approx(0.1)


def test_constant_speed_log():
    t = np.arange(0, 10.01, 0.02)
    row = compute_metrics([synthetic_log(3.0 * t, t)])
    assert f"{row.avg_speed_mean:.2f}" == "3.00"


def test_crashes_excluded_from_speed():
    fast = synthetic_log([0.0, 10.0], [0.0, 1.0], outcome="crash")
    slow = synthetic_log([0.0, 2.0], [0.0, 1.0])
    timeout = synthetic_log([0.0, 1.0], [0.0, 1.0], outcome="timeout")
    row = compute_metrics([fast, slow, timeout])
    assert row.crashes_pct == pytest.approx(100 / 3)
    assert row.goals_pct == pytest.approx(100 / 3)
    assert row.avg_speed_mean == pytest.approx(1.5)


def test_all_crash_gives_nan_speed():
    row = compute_metrics([synthetic_log([0.0, 1.0], [0.0, 1.0], outcome="crash")])
    assert row.crashes_pct == 100.0
    assert math.isnan(row.avg_speed_mean)


def test_empty_input_rejected():
    with pytest.raises(ValueError):
        compute_metrics([])


def test_csv_header_and_round_trip():
    rows = [MetricsRow("zapp", 96.66666666666667, 3.3333333333333335, 3.8012, 0.1, 0.123456789, 0.01),
            MetricsRow("discrete-baseline", 70.0, 30.0, 3.81, 0.2, 0.05, 0.001)]
    text = MetricsTable(rows).to_csv()
    assert text.splitlines()[0] == ",".join(CSV_HEADER)
    assert CSV_HEADER == ("variant", "goals_pct", "crashes_pct", "avg_speed_mean", "avg_speed_std",
                          "solve_time_mean", "solve_time_std")
    back = MetricsTable.from_csv(text)
    assert back.rows == rows


def test_csv_with_wrong_header_rejected():
    with pytest.raises(ValueError):
        MetricsTable.from_csv("variant,goals\nzapp,1\n")


def test_text_table_column_order():
    text = MetricsTable([MetricsRow("zapp", 96.7, 3.3, 3.8, 0.2, 0.5, 0.1)]).to_text()
    head = text.splitlines()[0]
    assert head.index("G/C [%]") < head.index("AS [m/s]") < head.index("ST [s]")
    assert "96.7 / 3.3" in text
    assert "3.80 ± 0.20" in text
