"""CLEAR-MOT and identity metrics (MOTA, IDF1, MT, ML, FP, FN, IDSW)."""

from __future__ import annotations

import csv
import io
import json
from collections import defaultdict
from dataclasses import asdict, dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import InvalidArgumentError
from .io_formats import MotRow
from .tracker import hungarian_solve, iou

__all__ = [
    "MotMetrics",
    "clear_mot_evaluate",
    "idf1",
    "evaluate_sequences",
    "metrics_to_json",
    "metrics_to_csv",
    "CSV_HEADER",
]

CSV_HEADER = ("MOTA", "IDF1", "MT", "ML", "FP", "FN", "IDSW")
MOSTLY_TRACKED = 0.8
MOSTLY_LOST = 0.2


@dataclass(frozen=True)
class MotMetrics:
    mota: float
    idf1: float
    mt: int
    ml: int
    fp: int
    fn: int
    idsw: int
    gt_total: int
    matches: int = 0
    idtp: int = 0
    idfp: int = 0
    idfn: int = 0

    def table_row(self) -> tuple:
        return (self.mota, self.idf1, self.mt, self.ml, self.fp, self.fn, self.idsw)


def _by_frame(rows: Sequence[MotRow]) -> dict[int, list[MotRow]]:
    out = defaultdict(list)
    for row in rows:
        out[row.frame].append(row)
    for frame in out:
        out[frame].sort(key=lambda r: r.id)
    return out


def _iou_matrix(gts, hyps) -> np.ndarray:
    return np.array([[iou(g.box, h.box) for h in hyps] for g in gts]).reshape(len(gts), len(hyps))


def _identity_counts(gt, hyp, thr):
    """Frames where each (gt id, hyp id) pair overlaps by at least ``thr``."""
    g_frames, h_frames = _by_frame(gt), _by_frame(hyp)
    counts = defaultdict(int)
    for frame, gts in g_frames.items():
        hyps = h_frames.get(frame, [])
        if not hyps:
            continue
        ious = _iou_matrix(gts, hyps)
        for a, g in enumerate(gts):
            for b, h in enumerate(hyps):
                if ious[a, b] >= thr:
                    counts[g.id, h.id] += 1
    return counts


def idf1(gt: Sequence[MotRow], hyp: Sequence[MotRow], iou_threshold: float = 0.5) -> float:
    """F1 of the identity-level matching that maximizes identity true positives."""
    return _idf1_counts(gt, hyp, iou_threshold)[0]


def _idf1_counts(gt, hyp, thr):
    if not gt:
        raise InvalidArgumentError("ground truth is empty")
    counts = _identity_counts(gt, hyp, thr)
    idtp = 0
    if counts:
        g_ids = sorted({g for g, _ in counts})
        h_ids = sorted({h for _, h in counts})
        tp = np.zeros((len(g_ids), len(h_ids)))
        for (g, h), n in counts.items():
            tp[g_ids.index(g), h_ids.index(h)] = n
        rows, cols = linear_sum_assignment(tp, maximize=True)
        idtp = int(tp[rows, cols].sum())
    idfn = len(gt) - idtp
    idfp = len(hyp) - idtp
    return 2 * idtp / (2 * idtp + idfp + idfn), idtp, idfp, idfn


def clear_mot_evaluate(gt: Sequence[MotRow], hyp: Sequence[MotRow], iou_threshold: float = 0.5) -> MotMetrics:
    """CLEAR-MOT counts with match carry-over, plus IDF1.

    A ground-truth object keeps its previous hypothesis whenever that pair
    still overlaps by at least ``iou_threshold``; remaining objects are
    matched by Hungarian assignment on ``1 - IoU``.  An identity switch is
    counted when an object is matched to a hypothesis other than the one it
    was last matched to.
    """
    if not gt:
        raise InvalidArgumentError("ground truth is empty")
    g_frames, h_frames = _by_frame(gt), _by_frame(hyp)
    link: dict[int, int] = {}
    fp = fn = idsw = n_match = 0
    present = defaultdict(int)
    tracked = defaultdict(int)

    for frame in sorted(set(g_frames) | set(h_frames)):
        gts = g_frames.get(frame, [])
        hyps = h_frames.get(frame, [])
        ious = _iou_matrix(gts, hyps)
        h_index = {h.id: b for b, h in enumerate(hyps)}
        used_g, used_h = set(), set()
        pairs = []
        for a, g in enumerate(gts):
            b = h_index.get(link.get(g.id))
            if b is not None and b not in used_h and ious[a, b] >= iou_threshold:
                pairs.append((a, b))
                used_g.add(a)
                used_h.add(b)
        free_g = [a for a in range(len(gts)) if a not in used_g]
        free_h = [b for b in range(len(hyps)) if b not in used_h]
        if free_g and free_h:
            sub = ious[np.ix_(free_g, free_h)]
            assignment = hungarian_solve(1.0 - sub, admissible=sub >= iou_threshold)
            for i, j in assignment.matches:
                a, b = free_g[i], free_h[j]
                g, h = gts[a], hyps[b]
                if g.id in link and link[g.id] != h.id:
                    idsw += 1
                pairs.append((a, b))
                used_g.add(a)
                used_h.add(b)
        for a, b in pairs:
            link[gts[a].id] = hyps[b].id
            tracked[gts[a].id] += 1
        for g in gts:
            present[g.id] += 1
        n_match += len(pairs)
        fn += len(gts) - len(pairs)
        fp += len(hyps) - len(pairs)

    ratios = [tracked[g] / present[g] for g in present]
    mt = sum(r >= MOSTLY_TRACKED for r in ratios)
    ml = sum(r <= MOSTLY_LOST for r in ratios)
    f1, idtp, idfp, idfn = _idf1_counts(gt, hyp, iou_threshold)
    return MotMetrics(
        mota=1.0 - (fp + fn + idsw) / len(gt),
        idf1=f1,
        mt=mt,
        ml=ml,
        fp=fp,
        fn=fn,
        idsw=idsw,
        gt_total=len(gt),
        matches=n_match,
        idtp=idtp,
        idfp=idfp,
        idfn=idfn,
    )


def evaluate_sequences(sequences: Mapping[str, tuple], iou_threshold: float = 0.5):
    """Evaluate ``{name: (gt, hyp)}``; returns ``(overall, per_sequence)``.

    The overall entry sums counts across sequences, as benchmark summaries do.
    """
    per = {name: clear_mot_evaluate(g, h, iou_threshold) for name, (g, h) in sequences.items()}
    if not per:
        raise InvalidArgumentError("no sequences to evaluate")
    tot = {k: sum(getattr(m, k) for m in per.values())
           for k in ("mt", "ml", "fp", "fn", "idsw", "gt_total", "matches", "idtp", "idfp", "idfn")}
    overall = MotMetrics(
        mota=1.0 - (tot["fp"] + tot["fn"] + tot["idsw"]) / tot["gt_total"],
        idf1=2 * tot["idtp"] / (2 * tot["idtp"] + tot["idfp"] + tot["idfn"]),
        **tot,
    )
    return overall, per


def metrics_to_json(overall: MotMetrics, per_sequence: Mapping[str, MotMetrics] | None = None) -> str:
    doc = {"overall": asdict(overall)}
    if per_sequence is not None:
        doc["sequences"] = {name: asdict(m) for name, m in per_sequence.items()}
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def metrics_to_csv(rows: Mapping[str, MotMetrics] | MotMetrics) -> str:
    """Summary table in the usual MOTA, IDF1, MT, ML, FP, FN, IDSW column order."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    items = [rows] if isinstance(rows, MotMetrics) else list(rows.values())
    for m in items:
        writer.writerow([f"{m.mota:.6f}", f"{m.idf1:.6f}", m.mt, m.ml, m.fp, m.fn, m.idsw])
    return buf.getvalue()
