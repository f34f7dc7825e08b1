"""Timing harness comparing local correlation against the dense non-local volume."""

from __future__ import annotations

import csv
import io
import statistics
import time
from dataclasses import astuple, dataclass, fields
from typing import Iterable

import numpy as np

from .correlation import (
    _local_corr,
    _nonlocal,
    caption_ratio,
    flops_local_correlation,
    flops_nonlocal,
    flops_ratio,
)
from .errors import InvalidArgumentError

__all__ = ["BenchRow", "bench_operator", "memory_estimate", "rows_to_csv", "CSV_COLUMNS"]

OPERATORS = ("local_correlation", "non_local")


@dataclass(frozen=True)
class BenchRow:
    operator: str
    h: int
    w: int
    c: int
    r: int
    flops: int
    params: int
    median_ns: int
    mem_bytes: int


CSV_COLUMNS = tuple(f.name for f in fields(BenchRow))
RATIO_COLUMNS = ("flops_ratio", "caption_ratio")


def memory_estimate(which: str, h: int, w: int, r: int, itemsize: int = 8) -> int:
    """Bytes held by the correlation volume the operator allocates."""
    if which == "local_correlation":
        return h * w * (2 * r + 1) ** 2 * itemsize
    if which == "non_local":
        return (h * w) ** 2 * itemsize
    raise InvalidArgumentError(f"unknown operator {which!r}")


def _median_ns(fn, repeats: int) -> int:
    fn()  # warm-up: page in buffers before timing
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter_ns()
        fn()
        times.append(time.perf_counter_ns() - t0)
    return int(statistics.median(times))


def bench_operator(which: str, sizes: Iterable[tuple[int, int, int, int]], repeats: int = 5,
                   seed: int = 0, dtype=np.float64, dilation: int = 1) -> list[BenchRow]:
    """Time ``which`` over ``(h, w, c, r)`` sizes; one :class:`BenchRow` per size.

    Inputs are drawn from a seeded generator so every run sees the same data.
    FLOPs and parameters assume ``cin == cinter == c`` and a single frame.
    """
    if which not in OPERATORS:
        raise InvalidArgumentError(f"operator must be one of {OPERATORS}, got {which!r}")
    if repeats < 3:
        raise InvalidArgumentError(f"repeats must be >= 3, got {repeats}")
    itemsize = np.dtype(dtype).itemsize
    rows = []
    for h, w, c, r in sizes:
        rng = np.random.default_rng(seed)
        q = rng.standard_normal((c, h, w)).astype(dtype)
        ref = rng.standard_normal((c, h, w)).astype(dtype)
        if which == "local_correlation":
            report = flops_local_correlation(c, c, 1, h, w, r)
            elapsed = _median_ns(lambda: _local_corr(q, ref, r, dilation), repeats)
        else:
            report = flops_nonlocal(c, c, 1, h, w)
            elapsed = _median_ns(lambda: _nonlocal(q), repeats)
        rows.append(BenchRow(which, h, w, c, r, report.flops, report.params, elapsed,
                             memory_estimate(which, h, w, r, itemsize)))
    return rows


def rows_to_csv(rows: Iterable[BenchRow], with_ratios: bool = False) -> str:
    """CSV text with the fixed column order; ratio columns are analytic."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS + (RATIO_COLUMNS if with_ratios else ()))
    for row in rows:
        values = list(astuple(row))
        if with_ratios:
            cap = caption_ratio(row.h, row.w, row.r)
            values += [f"{float(flops_ratio(row.h, row.w, row.r)):.4f}",
                       "" if cap is None else f"{float(cap):.4f}"]
        writer.writerow(values)
    return buf.getvalue()
