import csv
import io

import numpy as np
import pytest

from corrtrack.bench import CSV_COLUMNS, RATIO_COLUMNS, bench_operator, memory_estimate, rows_to_csv
from corrtrack.errors import InvalidArgumentError


def test_memory_estimates():
    assert memory_estimate("local_correlation", 8, 8, 1) == 4_608
    assert memory_estimate("non_local", 8, 8, 1) == 32_768
    assert memory_estimate("local_correlation", 8, 8, 1, itemsize=4) == 2_304
    with pytest.raises(InvalidArgumentError):
        memory_estimate("dense", 8, 8, 1)


def test_rows_and_csv():
    rows = bench_operator("local_correlation", [(8, 8, 2, 1), (8, 8, 2, 2)], repeats=3)
    assert [r.r for r in rows] == [1, 2]
    assert rows[0].flops == 2 * 9 * 64 and rows[0].params == 2 * 2 * 2 + 9 * 2
    assert all(r.median_ns > 0 for r in rows)
    parsed = list(csv.reader(io.StringIO(rows_to_csv(rows, with_ratios=True))))
    assert tuple(parsed[0]) == CSV_COLUMNS + RATIO_COLUMNS
    assert parsed[1][-2:] == ["7.1111", "64.0000"]
    assert len(parsed) == 3


def test_dtype_changes_memory():
    (row,) = bench_operator("non_local", [(4, 4, 2, 1)], repeats=3, dtype=np.float32)
    assert row.mem_bytes == 256 * 4


@pytest.mark.parametrize("kw", [dict(repeats=2), dict(which="conv")])
def test_invalid(kw):
    args = dict(which="local_correlation", sizes=[(4, 4, 1, 1)], repeats=3) | kw
    with pytest.raises(InvalidArgumentError):
        bench_operator(**args)
