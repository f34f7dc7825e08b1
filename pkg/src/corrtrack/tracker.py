"""Tracking by detection: affinity, Hungarian assignment and the track lifecycle.

New tracks start ``INACTIVE`` and are confirmed ``ACTIVE`` when matched on a
later frame; an inactive track that misses its confirmation frame is removed.
Active tracks that go unmatched become ``LOST`` and are removed once their
consecutive miss count exceeds ``tau_loss``; a match before that restores
them with their original id.  Only active tracks report results.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import (
    ConsistencyError,
    DegenerateFeatureError,
    FeatureError,
    InvalidArgumentError,
    InvalidBoxError,
    OrderingError,
)
from .io_formats import MotRow
from .kalman import KalmanFilter, KalmanState

__all__ = [
    "Detection",
    "TrackState",
    "Track",
    "TrackerConfig",
    "Assignment",
    "Tracker",
    "ALLOWED_TRANSITIONS",
    "iou",
    "affinity_matrix",
    "hungarian_solve",
    "feature_ema_update",
    "lifecycle_step",
    "track_sequence",
    "detections_from_rows",
]


def _unit(vec, what="feature") -> np.ndarray:
    vec = np.asarray(vec, dtype=np.float64).ravel()
    norm = np.linalg.norm(vec)
    if not np.isfinite(norm) or norm == 0.0:
        raise DegenerateFeatureError(f"{what} has zero or non-finite norm")
    return vec / norm


@dataclass(frozen=True, eq=False)
class Detection:
    """A detector output; ``box`` is top-left ``(x, y, w, h)`` in pixels."""

    frame: int
    box: tuple[float, float, float, float]
    confidence: float = 1.0
    feature: np.ndarray | None = None

    def __post_init__(self):
        box = tuple(float(v) for v in self.box)
        if len(box) != 4 or box[2] <= 0 or box[3] <= 0:
            raise InvalidBoxError(f"invalid box {self.box!r}")
        object.__setattr__(self, "box", box)
        if self.feature is not None:
            object.__setattr__(self, "feature", _unit(self.feature))


class TrackState(enum.Enum):
    INACTIVE = "inactive"
    ACTIVE = "active"
    LOST = "lost"
    REMOVED = "removed"


ALLOWED_TRANSITIONS = {
    TrackState.INACTIVE: {TrackState.ACTIVE, TrackState.REMOVED},
    TrackState.ACTIVE: {TrackState.ACTIVE, TrackState.LOST},
    TrackState.LOST: {TrackState.LOST, TrackState.ACTIVE, TrackState.REMOVED},
    TrackState.REMOVED: set(),
}


@dataclass(eq=False)
class Track:
    id: int
    state: TrackState
    kalman: KalmanState
    feature: np.ndarray | None
    last_box: tuple[float, float, float, float]
    t_loss: int = 0
    history: list = field(default_factory=list)

    def transition(self, new: TrackState):
        if new not in ALLOWED_TRANSITIONS[self.state]:
            raise ConsistencyError(f"track {self.id}: illegal transition {self.state.value} -> {new.value}")
        self.state = new

    def predicted_box(self) -> np.ndarray:
        return self.kalman.box()


@dataclass(frozen=True)
class TrackerConfig:
    alpha: float = 0.5
    tau_loss: int = 30
    ema_beta: float = 0.1
    gate: float = 0.7
    min_confidence: float = 0.4

    def __post_init__(self):
        if self.alpha < 0:
            raise InvalidArgumentError(f"alpha must be >= 0, got {self.alpha}")
        if self.tau_loss < 0:
            raise InvalidArgumentError(f"tau_loss must be >= 0, got {self.tau_loss}")
        if not 0.0 <= self.ema_beta <= 1.0:
            raise InvalidArgumentError(f"ema_beta must lie in [0, 1], got {self.ema_beta}")
        if self.gate < 0:
            raise InvalidArgumentError(f"gate must be >= 0, got {self.gate}")
        if not 0.0 <= self.min_confidence <= 1.0:
            raise InvalidArgumentError(f"min_confidence must lie in [0, 1], got {self.min_confidence}")


def iou(a, b) -> float:
    """Intersection over union of two top-left ``(x, y, w, h)`` boxes."""
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    iw = min(ax + aw, bx + bw) - max(ax, bx)
    ih = min(ay + ah, by + bh) - max(ay, by)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (aw * ah + bw * bh - inter)


def affinity_matrix(dets: Sequence[Detection], tracks: Sequence[Track], cfg: TrackerConfig) -> np.ma.MaskedArray:
    """Detection x track matching cost ``(1 - cos) + alpha * (1 - IoU)``.

    The IoU term uses each track's Kalman-predicted box.  Entries above
    ``cfg.gate`` are masked as inadmissible.
    """
    n, m = len(dets), len(tracks)
    cost = np.zeros((n, m))
    any_track_feat = any(t.feature is not None for t in tracks)
    if n and any_track_feat and any(d.feature is None for d in dets):
        raise FeatureError("tracks carry appearance features but some detections do not")
    for j, trk in enumerate(tracks):
        pred = trk.predicted_box()
        for i, det in enumerate(dets):
            app = 0.0
            if trk.feature is not None and det.feature is not None:
                if trk.feature.shape != det.feature.shape:
                    raise FeatureError(
                        f"feature dims differ: detection {det.feature.shape[0]}, track {trk.feature.shape[0]}"
                    )
                app = 1.0 - float(det.feature @ trk.feature)
            cost[i, j] = app + cfg.alpha * (1.0 - iou(det.box, pred))
    return np.ma.masked_array(cost, mask=cost > cfg.gate)


class Assignment(NamedTuple):
    matches: list[tuple[int, int]]
    unmatched_rows: list[int]
    unmatched_cols: list[int]

    def total_cost(self, cost) -> float:
        cost = np.ma.getdata(cost)
        return float(sum(cost[i, j] for i, j in self.matches))


def hungarian_solve(cost, admissible=None) -> Assignment:
    """Optimal one-to-one assignment over admissible entries.

    ``cost`` may be a masked array (masked = inadmissible) or a plain array
    with an optional boolean ``admissible`` mask.  The matching first
    maximizes the number of admissible pairs, then minimizes their total cost.
    """
    data = np.asarray(np.ma.getdata(cost), dtype=np.float64)
    if data.ndim != 2:
        raise InvalidArgumentError(f"cost must be 2-d, got shape {data.shape}")
    ok = ~np.ma.getmaskarray(cost) if np.ma.isMaskedArray(cost) else np.ones(data.shape, bool)
    if admissible is not None:
        ok &= np.asarray(admissible, dtype=bool)
    n, m = data.shape
    if n == 0 or m == 0 or not ok.any():
        return Assignment([], list(range(n)), list(range(m)))
    if not np.all(np.isfinite(data[ok])):
        raise InvalidArgumentError("admissible costs must be finite")
    work = data.copy()
    if not ok.all():
        # one inadmissible pair costs more than any all-admissible matching
        big = 2.0 * np.abs(data[ok]).sum() + 1.0
        work[~ok] = big
    rows, cols = linear_sum_assignment(work)
    matches = [(int(i), int(j)) for i, j in zip(rows, cols) if ok[i, j]]
    mr = {i for i, _ in matches}
    mc = {j for _, j in matches}
    return Assignment(matches, [i for i in range(n) if i not in mr], [j for j in range(m) if j not in mc])


def feature_ema_update(f_hat, f_new, beta: float) -> np.ndarray:
    """``normalize((1 - beta) * f_hat + beta * f_new)``."""
    f_hat = np.asarray(f_hat, dtype=np.float64)
    f_new = np.asarray(f_new, dtype=np.float64)
    if f_hat.shape != f_new.shape:
        raise FeatureError(f"feature dims differ: {f_hat.shape} vs {f_new.shape}")
    return _unit((1.0 - beta) * f_hat + beta * f_new, "EMA feature")


class LifecycleResult(NamedTuple):
    tracks: list[Track]  # live tracks, in id order
    removed: list[Track]  # tracks removed during this step
    rows: list[MotRow]
    next_id: int


def lifecycle_step(tracks: Sequence[Track], dets: Sequence[Detection], assignment: Assignment,
                   cfg: TrackerConfig, frame: int, next_id: int = 1,
                   kf: KalmanFilter | None = None) -> LifecycleResult:
    """Apply one frame's assignment to the track set.

    Tracks are updated in place; the returned lists describe the new set.
    """
    kf = kf or KalmanFilter()
    n, m = len(dets), len(tracks)
    seen_r, seen_c = set(), set()
    for i, j in assignment.matches:
        if not (0 <= i < n and 0 <= j < m) or i in seen_r or j in seen_c:
            raise ConsistencyError(f"assignment pair ({i}, {j}) is out of range or repeated")
        seen_r.add(i)
        seen_c.add(j)
    if any(t.state is TrackState.REMOVED for t in tracks):
        raise ConsistencyError("removed tracks cannot take part in matching")

    matched_tracks = set()
    for i, j in assignment.matches:
        trk, det = tracks[j], dets[i]
        trk.kalman = kf.update(trk.kalman, det.box)
        if det.feature is not None:
            trk.feature = (det.feature.copy() if trk.feature is None
                           else feature_ema_update(trk.feature, det.feature, cfg.ema_beta))
        trk.last_box = det.box
        trk.t_loss = 0
        trk.history.append((frame, det.box))
        trk.transition(TrackState.ACTIVE)
        matched_tracks.add(j)

    removed = []
    for j, trk in enumerate(tracks):
        if j in matched_tracks:
            continue
        if trk.state is TrackState.INACTIVE:
            trk.transition(TrackState.REMOVED)
        else:
            trk.transition(TrackState.LOST)
            trk.t_loss += 1
            if trk.t_loss > cfg.tau_loss:
                trk.transition(TrackState.REMOVED)
        if trk.state is TrackState.REMOVED:
            removed.append(trk)

    live = [t for t in tracks if t.state is not TrackState.REMOVED]
    matched_conf = {tracks[j].id: dets[i].confidence for i, j in assignment.matches}
    for i, det in enumerate(dets):
        if i in seen_r:
            continue
        feat = None if det.feature is None else det.feature.copy()
        live.append(Track(next_id, TrackState.INACTIVE, kf.initiate(det.box), feat, det.box,
                          history=[(frame, det.box)]))
        next_id += 1

    live.sort(key=lambda t: t.id)
    rows = [MotRow(frame, t.id, *t.last_box, conf=matched_conf[t.id])
            for t in live if t.state is TrackState.ACTIVE and t.id in matched_conf]
    return LifecycleResult(live, removed, rows, next_id)


class Tracker:
    """Online tracker for a single sequence; feed frames in increasing order."""

    def __init__(self, cfg: TrackerConfig | None = None, kf: KalmanFilter | None = None):
        self.cfg = cfg or TrackerConfig()
        self.kf = kf or KalmanFilter()
        self.tracks: list[Track] = []
        self.removed: list[Track] = []
        self.next_id = 1
        self.frame: int | None = None
        self.created = 0

    def step(self, frame: int, dets: Iterable[Detection]) -> list[MotRow]:
        if self.frame is not None and frame <= self.frame:
            raise OrderingError(f"frame {frame} does not follow frame {self.frame}")
        self.frame = frame
        dets = [d for d in dets if d.confidence >= self.cfg.min_confidence]
        for trk in self.tracks:
            trk.kalman = self.kf.predict(trk.kalman)
        assignment = hungarian_solve(affinity_matrix(dets, self.tracks, self.cfg))
        before = self.next_id
        result = lifecycle_step(self.tracks, dets, assignment, self.cfg, frame, self.next_id, self.kf)
        self.created += result.next_id - before
        self.tracks = result.tracks
        self.removed.extend(result.removed)
        self.next_id = result.next_id
        return result.rows


def track_sequence(dets_by_frame, cfg: TrackerConfig | None = None,
                   kf: KalmanFilter | None = None, tracker: Tracker | None = None) -> list[MotRow]:
    """Run the tracker over ``(frame, detections)`` pairs (or a frame-keyed mapping).

    Frames absent from the input between two given frames are processed as
    empty so that miss counters advance.
    """
    tracker = tracker or Tracker(cfg, kf)
    items = dets_by_frame.items() if isinstance(dets_by_frame, Mapping) else dets_by_frame
    rows = []
    for frame, dets in items:
        if tracker.frame is not None:
            if frame <= tracker.frame:
                raise OrderingError(f"frame {frame} does not follow frame {tracker.frame}")
            for gap in range(tracker.frame + 1, frame):
                rows.extend(tracker.step(gap, []))
        rows.extend(tracker.step(frame, dets))
    return rows


def detections_from_rows(rows: Sequence[MotRow], features=None) -> dict[int, list[Detection]]:
    """Group detection rows by frame, attaching per-row features when given."""
    if features is not None and len(features) != len(rows):
        raise FeatureError(f"{len(features)} feature rows for {len(rows)} detections")
    out: dict[int, list[Detection]] = {}
    for k, row in enumerate(rows):
        feat = None if features is None else features[k]
        out.setdefault(row.frame, []).append(Detection(row.frame, (row.x, row.y, row.w, row.h), row.conf, feat))
    return dict(sorted(out.items()))
