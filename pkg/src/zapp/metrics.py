"""Episode metrics in the goals/crashes, average speed, solve time format."""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, fields
from typing import Sequence

import numpy as np

CSV_HEADER = (
    "variant",
    "goals_pct",
    "crashes_pct",
    "avg_speed_mean",
    "avg_speed_std",
    "solve_time_mean",
    "solve_time_std",
)


@dataclass(frozen=True)
class MetricsRow:
    variant: str
    goals_pct: float
    crashes_pct: float
    avg_speed_mean: float
    avg_speed_std: float
    solve_time_mean: float
    solve_time_std: float


def compute_metrics(logs: Sequence, variant: str | None = None) -> MetricsRow:
    """Aggregate episode logs.

    Average speed is distance toward the goal over elapsed time and only
    counts crash-free episodes. Solve time statistics pool every solve.
    """
    logs = list(logs)
    if not logs:
        raise ValueError("need at least one episode log")
    n = len(logs)
    goals = sum(lg.outcome == "goal" for lg in logs)
    crashes = sum(lg.outcome == "crash" for lg in logs)
    speeds = np.array([lg.avg_speed for lg in logs if lg.outcome != "crash"])
    st = np.concatenate([lg.solve_times for lg in logs]) if logs else np.zeros(0)
    return MetricsRow(
        variant if variant is not None else logs[0].variant,
        100.0 * goals / n,
        100.0 * crashes / n,
        float(speeds.mean()) if speeds.size else float("nan"),
        float(speeds.std()) if speeds.size else float("nan"),
        float(st.mean()) if st.size else float("nan"),
        float(st.std()) if st.size else float("nan"),
    )


class MetricsTable:
    def __init__(self, rows: Sequence[MetricsRow] = ()):
        self.rows = list(rows)

    def add(self, row: MetricsRow) -> None:
        self.rows.append(row)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            d = asdict(r)
            w.writerow([d["variant"]] + [repr(float(d[k])) for k in CSV_HEADER[1:]])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "MetricsTable":
        reader = csv.DictReader(io.StringIO(text))
        if tuple(reader.fieldnames or ()) != CSV_HEADER:
            raise ValueError(f"unexpected metrics header {reader.fieldnames}")
        rows = []
        for d in reader:
            rows.append(MetricsRow(d["variant"], *(float(d[k]) for k in CSV_HEADER[1:])))
        return cls(rows)

    def to_text(self) -> str:
        """Fixed-width table with columns G/C [%], AS [m/s], ST [s] (wall clock)."""
        name_w = max([len("variant")] + [len(r.variant) for r in self.rows])
        head = f"{'variant':<{name_w}}  {'G/C [%]':>13}  {'AS [m/s]':>13}  {'ST [s] (wall)':>15}"
        lines = [head, "-" * len(head)]
        for r in self.rows:
            gc = f"{r.goals_pct:.1f} / {r.crashes_pct:.1f}"
            sp = f"{r.avg_speed_mean:.2f} ± {r.avg_speed_std:.2f}"
            st = f"{r.solve_time_mean:.3f} ± {r.solve_time_std:.3f}"
            lines.append(f"{r.variant:<{name_w}}  {gc:>13}  {sp:>13}  {st:>15}")
        return "\n".join(lines) + "\n"

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)


__all__ = ["CSV_HEADER", "MetricsRow", "MetricsTable", "compute_metrics"]
assert tuple(f.name for f in fields(MetricsRow)) == CSV_HEADER
