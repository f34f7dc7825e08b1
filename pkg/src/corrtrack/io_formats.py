"""MOTChallenge text rows, feature sidecars and synthetic scenarios."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, TextIO

import numpy as np

from .errors import InvalidRowError, ParseError, ScenarioSpecError

__all__ = [
    "MotRow",
    "MotRows",
    "ScenarioSpec",
    "parse_mot_file",
    "write_mot_results",
    "write_mot_detections",
    "read_features",
    "write_features",
    "generate_scenario",
    "crossing_scenario",
    "parse_scenario_config",
    "format_scenario_config",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MotRow:
    frame: int
    id: int
    x: float
    y: float
    w: float
    h: float
    conf: float = 1.0
    cls: int = 1
    visibility: float = 1.0

    @property
    def box(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)


class MotRows(list):
    """Parsed rows; ``rejected`` holds ``(lineno, text)`` of rows dropped for bad geometry."""

    def __init__(self, rows=(), rejected=()):
        super().__init__(rows)
        self.rejected = list(rejected)


def parse_mot_file(stream: TextIO | Iterable[str]) -> MotRows:
    """Parse comma-separated MOTChallenge rows.

    Missing trailing fields default to ``conf=1``, ``class=1``,
    ``visibility=1``.  Rows with non-positive width or height are dropped and
    counted; a non-numeric field raises :class:`ParseError`.
    """
    rows = MotRows()
    for lineno, line in enumerate(stream, start=1):
        text = line.strip()
        if not text:
            continue
        parts = [p.strip() for p in text.split(",")]
        if len(parts) < 6:
            raise ParseError(f"expected at least 6 fields, got {len(parts)}", lineno)
        try:
            nums = [float(p) for p in parts[:9]]
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
        if not all(np.isfinite(nums)):
            raise ParseError("non-finite field", lineno)
        frame, ident = nums[0], nums[1]
        if frame != int(frame) or ident != int(ident) or frame < 1:
            raise ParseError("frame must be a positive integer and id an integer", lineno)
        if nums[4] <= 0 or nums[5] <= 0:
            rows.rejected.append((lineno, text))
            continue
        nums += [1.0, 1.0, 1.0][len(nums) - 6:]
        rows.append(MotRow(int(frame), int(ident), nums[2], nums[3], nums[4], nums[5],
                           nums[6], int(nums[7]), nums[8]))
    if rows.rejected:
        log.warning("rejected %d row(s) with non-positive width or height", len(rows.rejected))
    return rows


def write_mot_results(rows: Iterable[MotRow]) -> str:
    """Canonical result text ``frame,id,x,y,w,h,conf,-1,-1,-1`` sorted by ``(frame, id)``."""
    rows = list(rows)
    for row in rows:
        if row.id < 1:
            raise InvalidRowError(f"result rows need id >= 1, got {row.id} at frame {row.frame}")
    lines = [
        f"{r.frame},{r.id},{r.x:.2f},{r.y:.2f},{r.w:.2f},{r.h:.2f},{r.conf:.2f},-1,-1,-1\n"
        for r in sorted(rows, key=lambda r: (r.frame, r.id))
    ]
    return "".join(lines)


def write_mot_detections(rows: Iterable[MotRow]) -> str:
    """Detection text ``frame,-1,x,y,w,h,conf,-1,-1,-1`` in input order (feature sidecars align by row)."""
    return "".join(
        f"{r.frame},-1,{r.x:.2f},{r.y:.2f},{r.w:.2f},{r.h:.2f},{r.conf:.2f},-1,-1,-1\n" for r in rows
    )


def read_features(stream: TextIO | Iterable[str]) -> np.ndarray:
    """One comma-separated feature vector per line, in detection-file order."""
    vecs = []
    for lineno, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            vecs.append([float(v) for v in line.split(",")])
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
    if vecs and len({len(v) for v in vecs}) != 1:
        raise ParseError("feature rows have differing lengths")
    return np.array(vecs, dtype=np.float64)


def write_features(features) -> str:
    return "".join(",".join(repr(float(v)) for v in vec) + "\n" for vec in np.asarray(features))


FEATURE_MODES = ("orthogonal", "identical", "noisy")


@dataclass(frozen=True)
class ScenarioSpec:
    """Synthetic linear-motion scene.

    ``starts`` and ``velocities`` hold one ``(x, y)`` pair per object (top-left
    corner at frame 1, px per frame).  ``miss_frames`` maps an object index to
    frames where its detection is dropped.  Detections in each frame are
    emitted left to right, as a detector with no notion of identity would.
    """

    n_objects: int
    n_frames: int
    starts: tuple
    velocities: tuple
    box_size: tuple = (40.0, 80.0)
    feature_dim: int = 8
    feature_mode: str = "orthogonal"
    sigma: float = 0.0
    miss_frames: dict = field(default_factory=dict)
    ids: tuple | None = None
    seed: int = 0

    def __post_init__(self):
        if self.n_objects < 1 or self.n_frames < 1:
            raise ScenarioSpecError("need at least one object and one frame")
        if len(self.starts) != self.n_objects or len(self.velocities) != self.n_objects:
            raise ScenarioSpecError("starts and velocities need one entry per object")
        if self.feature_mode not in FEATURE_MODES:
            raise ScenarioSpecError(f"feature_mode must be one of {FEATURE_MODES}")
        if self.feature_mode in ("orthogonal", "noisy") and self.feature_dim < self.n_objects:
            raise ScenarioSpecError("orthogonal features need feature_dim >= n_objects")
        if self.feature_dim < 1:
            raise ScenarioSpecError("feature_dim must be >= 1")
        if self.sigma < 0:
            raise ScenarioSpecError("sigma must be >= 0")
        if self.box_size[0] <= 0 or self.box_size[1] <= 0:
            raise ScenarioSpecError("box_size must be positive")
        ids = tuple(range(1, self.n_objects + 1)) if self.ids is None else tuple(self.ids)
        if len(ids) != self.n_objects or len(set(ids)) != len(ids) or min(ids) < 1:
            raise ScenarioSpecError(f"object ids must be {self.n_objects} distinct positive integers, got {ids}")
        object.__setattr__(self, "ids", ids)
        for obj in self.miss_frames:
            if not 0 <= obj < self.n_objects:
                raise ScenarioSpecError(f"miss_frames refers to unknown object {obj}")


def generate_scenario(spec: ScenarioSpec):
    """Return ``(gt_rows, det_rows, features)``; ``features[k]`` belongs to ``det_rows[k]``.

    Randomness (noisy features only) comes from a PCG64 generator seeded with
    ``spec.seed``.
    """
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    w, h = spec.box_size
    base = np.zeros((spec.n_objects, spec.feature_dim))
    if spec.feature_mode == "identical":
        base[:, 0] = 1.0
    else:
        base[np.arange(spec.n_objects), np.arange(spec.n_objects)] = 1.0

    gt, dets, feats = [], [], []
    for frame in range(1, spec.n_frames + 1):
        t = frame - 1
        present = []
        for k in range(spec.n_objects):
            x = spec.starts[k][0] + spec.velocities[k][0] * t
            y = spec.starts[k][1] + spec.velocities[k][1] * t
            gt.append(MotRow(frame, spec.ids[k], x, y, w, h, 1.0, 1, 1.0))
            if frame not in spec.miss_frames.get(k, ()):
                present.append((x, y, k))
        for x, y, k in sorted(present):
            feat = base[k].copy()
            if spec.feature_mode == "noisy":
                feat = feat + spec.sigma * rng.standard_normal(spec.feature_dim)
                feat /= np.linalg.norm(feat)
            dets.append(MotRow(frame, -1, x, y, w, h, 1.0, 1, 1.0))
            feats.append(feat)
    return gt, dets, np.array(feats).reshape(-1, spec.feature_dim)


def crossing_scenario(feature_mode="orthogonal", n_frames=20, gap=100.0, seed=0, sigma=0.0) -> ScenarioSpec:
    """Two objects swapping horizontal positions; their boxes coincide at frame ``n_frames // 2 + 1``."""
    speed = gap / n_frames
    return ScenarioSpec(
        n_objects=2,
        n_frames=n_frames,
        starts=((100.0, 100.0), (100.0 + gap, 100.0)),
        velocities=((speed, 0.0), (-speed, 0.0)),
        feature_mode=feature_mode,
        sigma=sigma,
        seed=seed,
    )


def _pairs(text):
    return tuple(tuple(float(v) for v in item.split(",")) for item in text.split(";") if item.strip())


def parse_scenario_config(text: str) -> ScenarioSpec:
    """Parse a flat ``key=value`` scenario description.

    Pair lists use ``x,y;x,y``; ``miss_frames`` uses ``obj:f,f;obj:f``.
    """
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError("expected key=value", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        values[key] = value
    try:
        kw = dict(
            n_objects=int(values.pop("n_objects")),
            n_frames=int(values.pop("n_frames")),
            starts=_pairs(values.pop("starts")),
            velocities=_pairs(values.pop("velocities")),
        )
        if "box_size" in values:
            kw["box_size"] = _pairs(values.pop("box_size"))[0]
        for key, conv in (("feature_dim", int), ("feature_mode", str), ("sigma", float), ("seed", int)):
            if key in values:
                kw[key] = conv(values.pop(key))
        if "ids" in values:
            kw["ids"] = tuple(int(v) for v in values.pop("ids").split(","))
        if "miss_frames" in values:
            misses = {}
            for item in values.pop("miss_frames").split(";"):
                if item.strip():
                    obj, frames = item.split(":")
                    misses[int(obj)] = frozenset(int(f) for f in frames.split(",") if f.strip())
            kw["miss_frames"] = misses
    except KeyError as exc:
        raise ParseError(f"missing key {exc.args[0]}") from None
    except ValueError as exc:
        raise ParseError(str(exc)) from None
    if values:
        raise ParseError(f"unknown keys: {', '.join(sorted(values))}")
    return ScenarioSpec(**kw)


def format_scenario_config(spec: ScenarioSpec) -> str:
    def pairs(items):
        return ";".join(",".join(repr(float(v)) for v in p) for p in items)

    lines = [
        f"n_objects={spec.n_objects}",
        f"n_frames={spec.n_frames}",
        f"starts={pairs(spec.starts)}",
        f"velocities={pairs(spec.velocities)}",
        f"box_size={pairs([spec.box_size])}",
        f"feature_dim={spec.feature_dim}",
        f"feature_mode={spec.feature_mode}",
        f"sigma={spec.sigma!r}",
        f"ids={','.join(str(i) for i in spec.ids)}",
        f"seed={spec.seed}",
    ]
    if spec.miss_frames:
        lines.append("miss_frames=" + ";".join(
            f"{obj}:{','.join(str(f) for f in sorted(frames))}" for obj, frames in sorted(spec.miss_frames.items())
        ))
    return "\n".join(lines) + "\n"
