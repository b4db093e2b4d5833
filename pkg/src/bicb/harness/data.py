"""Traffic CSV files: ``period_id,step,pctr,wp,obj`` with a header row."""
from __future__ import annotations

import csv
from typing import Iterable

import numpy as np

from ..allocator import TrafficSlice

TRAFFIC_HEADER = ["period_id", "step", "pctr", "wp", "obj"]


class TrafficFormatError(ValueError):
    pass


def load_traffic(path, n_steps: int = 48) -> list:
    """Read a traffic file into ``[(period_id, TrafficSlice), ...]`` in order of first appearance.

    Steps must lie in [0, n_steps).  Errors name the offending line.
    """
    cols = {}
    order = []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != TRAFFIC_HEADER:
            raise TrafficFormatError(f"{path}:1: expected header {','.join(TRAFFIC_HEADER)}, "
                                     f"got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise TrafficFormatError(f"{path}:{lineno}: expected 5 fields, got {len(row)}")
            pid = row[0]
            try:
                step = int(row[1])
                pctr, wp, obj = float(row[2]), float(row[3]), float(row[4])
            except ValueError as e:
                raise TrafficFormatError(f"{path}:{lineno}: {e}") from None
            if not 0 <= step < n_steps:
                raise TrafficFormatError(f"{path}:{lineno}: step {step} outside [0, {n_steps})")
            if not 0.0 <= pctr <= 1.0:
                raise TrafficFormatError(f"{path}:{lineno}: pctr {pctr} outside [0, 1]")
            if not wp > 0.0:
                raise TrafficFormatError(f"{path}:{lineno}: wp must be positive, got {wp}")
            if not obj >= 0.0:
                raise TrafficFormatError(f"{path}:{lineno}: obj must be nonnegative, got {obj}")
            c = cols.get(pid)
            if c is None:
                c = cols[pid] = ([], [], [], [])
                order.append(pid)
            c[0].append(step)
            c[1].append(pctr)
            c[2].append(wp)
            c[3].append(obj)
    return [(pid, TrafficSlice(*cols[pid], step_range=(0, n_steps - 1), validate=False))
            for pid in order]


def write_traffic(path, periods: Iterable):
    """Write ``[(period_id, TrafficSlice), ...]``; floats use shortest round-trip repr."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write(",".join(TRAFFIC_HEADER) + "\n")
        for pid, sl in periods:
            if len(sl) == 0:
                continue
            lines = [f"{pid},{s},{c!r},{w!r},{o!r}\n" for s, c, w, o in
                     zip(sl.step.tolist(), sl.pctr.tolist(), sl.wp.tolist(), sl.obj.tolist())]
            f.writelines(lines)
