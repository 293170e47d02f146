"""Tracklet-level correction of tracking output.

The whole edit vocabulary operates on tracklets — merge, split, delete,
reassign — never on individual boxes, so a reviewer fixes identity errors
without redrawing anything.  Edits are pure functions from TrackSet to
TrackSet and are recorded in an EditLog pinned to a digest of the base
TrackSet, giving cheap optimistic concurrency: a log replays atomically
onto the exact base it was recorded against or not at all.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from .track import CONFIRMED, TrackSet, Tracklet

KINDS = ("merge", "split", "delete", "reassign")


class UnknownId(ValueError):
    """Edit references a tracklet id that does not exist."""


class FrameConflict(ValueError):
    """Edit would give one tracklet two states in the same frame."""


class InvalidRange(ValueError):
    """Split point or reassign range does not select a valid non-empty span."""


class DigestMismatch(ValueError):
    """Edit log was recorded against a different base TrackSet."""


@dataclass(frozen=True)
class EditOp:
    """One tracklet-level correction.

    Field use by kind:
      merge    — from_id, into_id
      split    — id, at_frame (states >= at_frame move to a fresh id)
      delete   — id
      reassign — id, from_frame, to_frame, new_id (None allocates a
                 fresh id; an existing id receives the moved states)
    """

    kind: str
    author: str = ""
    timestamp: str = ""
    id: int | None = None
    from_id: int | None = None
    into_id: int | None = None
    at_frame: int | None = None
    from_frame: int | None = None
    to_frame: int | None = None
    new_id: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown edit kind {self.kind!r}")
        required = {
            "merge": ("from_id", "into_id"),
            "split": ("id", "at_frame"),
            "delete": ("id",),
            "reassign": ("id", "from_frame", "to_frame"),
        }[self.kind]
        missing = [f for f in required if getattr(self, f) is None]
        if missing:
            raise ValueError(f"{self.kind} op missing fields: {missing}")

    @classmethod
    def merge(cls, from_id, into_id, **kw):
        return cls(kind="merge", from_id=from_id, into_id=into_id, **kw)

    @classmethod
    def split(cls, id, at_frame, **kw):
        return cls(kind="split", id=id, at_frame=at_frame, **kw)

    @classmethod
    def delete(cls, id, **kw):
        return cls(kind="delete", id=id, **kw)

    @classmethod
    def reassign(cls, id, from_frame, to_frame, new_id=None, **kw):
        return cls(
            kind="reassign", id=id, from_frame=from_frame, to_frame=to_frame,
            new_id=new_id, **kw,
        )

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "author": self.author, "timestamp": self.timestamp}
        for f in ("id", "from_id", "into_id", "at_frame", "from_frame",
                  "to_frame", "new_id"):
            v = getattr(self, f)
            if v is not None:
                d[f] = v
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EditOp":
        return cls(**{k: d[k] for k in d if k in cls.__dataclass_fields__})


@dataclass
class EditLog:
    base_digest: str
    ops: list[EditOp] = field(default_factory=list)


def track_set_digest(track_set: TrackSet) -> str:
    """sha256 over the observable track content (ids, statuses, states)
    plus the id counter, which replay determinism depends on."""
    payload = {
        "next_id": track_set.next_id,
        "tracklets": [
            {
                "id": t.id,
                "status": t.status,
                "states": [
                    [s.frame_index, s.world_xy[0], s.world_xy[1], s.height_mm,
                     s.score, s.matched]
                    for s in t.states
                ],
            }
            for t in sorted(track_set.tracklets.values(), key=lambda t: t.id)
        ],
    }
    blob = json.dumps(payload, separators=(",", ":"), sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()


def _copy_set(track_set: TrackSet) -> TrackSet:
    # state objects are shared; edits move them between tracklets but
    # never mutate them
    return TrackSet(
        tracklets={
            i: Tracklet(
                id=t.id, states=list(t.states), status=t.status,
                misses=t.misses, hit_streak=t.hit_streak,
            )
            for i, t in track_set.tracklets.items()
        },
        next_id=track_set.next_id,
        frame_cursor=track_set.frame_cursor,
    )


def _get(track_set: TrackSet, tid: int) -> Tracklet:
    t = track_set.tracklets.get(tid)
    if t is None:
        raise UnknownId(f"no tracklet with id {tid}")
    return t


def apply_edit(track_set: TrackSet, op: EditOp) -> TrackSet:
    """Apply one correction, returning a new TrackSet; the input is
    untouched.  All TrackSet invariants (unique ids, at most one state
    per frame per tracklet, never-reused ids) hold on the result."""
    out = _copy_set(track_set)
    if op.kind == "merge":
        _merge(out, op.from_id, op.into_id)
    elif op.kind == "split":
        _split(out, op.id, op.at_frame)
    elif op.kind == "delete":
        _get(out, op.id)
        del out.tracklets[op.id]
    else:
        _reassign(out, op.id, op.from_frame, op.to_frame, op.new_id)
    return out


def _merge(out: TrackSet, from_id: int, into_id: int):
    src = _get(out, from_id)
    dst = _get(out, into_id)
    if from_id == into_id:
        raise FrameConflict(f"cannot merge tracklet {from_id} into itself")
    dst_frames = {s.frame_index for s in dst.states}
    overlap = sorted(dst_frames & {s.frame_index for s in src.states})
    if overlap:
        raise FrameConflict(
            f"merge {from_id}->{into_id} duplicates frames {overlap[:5]}"
        )
    dst.states = sorted(dst.states + src.states, key=lambda s: s.frame_index)
    if src.status == CONFIRMED:
        dst.status = CONFIRMED
    del out.tracklets[from_id]


def _split(out: TrackSet, tid: int, at_frame: int):
    t = _get(out, tid)
    if not t.first_frame < at_frame <= t.last_frame:
        raise InvalidRange(
            f"split point {at_frame} not strictly inside span "
            f"[{t.first_frame}, {t.last_frame}] of tracklet {tid}"
        )
    head = [s for s in t.states if s.frame_index < at_frame]
    tail = [s for s in t.states if s.frame_index >= at_frame]
    new_id = out.new_id()
    t.states = head
    out.tracklets[new_id] = Tracklet(id=new_id, states=tail, status=t.status)


def _reassign(out: TrackSet, tid: int, from_frame: int, to_frame: int,
              new_id: int | None):
    if from_frame > to_frame:
        raise InvalidRange(f"reassign range [{from_frame}, {to_frame}] is empty")
    t = _get(out, tid)
    moved = [s for s in t.states if from_frame <= s.frame_index <= to_frame]
    if not moved:
        raise InvalidRange(
            f"tracklet {tid} has no states in [{from_frame}, {to_frame}]"
        )
    if new_id is None:
        target = Tracklet(id=out.new_id(), status=t.status)
        out.tracklets[target.id] = target
    else:
        if new_id == tid:
            raise InvalidRange(f"reassign of {tid} onto itself")
        target = _get(out, new_id)
        overlap = sorted(
            {s.frame_index for s in target.states}
            & {s.frame_index for s in moved}
        )
        if overlap:
            raise FrameConflict(
                f"reassign {tid}->{new_id} duplicates frames {overlap[:5]}"
            )
    target.states = sorted(target.states + moved, key=lambda s: s.frame_index)
    t.states = [s for s in t.states if not from_frame <= s.frame_index <= to_frame]
    if not t.states:
        del out.tracklets[tid]


def replay_edit_log(base: TrackSet, log: EditLog) -> TrackSet:
    """Apply a recorded log to its base.  Fails atomically: the base is
    never modified, and the first bad op aborts the whole replay with its
    index in the message."""
    actual = track_set_digest(base)
    if actual != log.base_digest:
        raise DigestMismatch(
            f"log recorded against digest {log.base_digest[:12]}..., "
            f"base has {actual[:12]}..."
        )
    current = base
    for i, op in enumerate(log.ops):
        try:
            current = apply_edit(current, op)
        except (UnknownId, FrameConflict, InvalidRange) as exc:
            raise type(exc)(f"edit {i} ({op.kind}): {exc}") from exc
    return current
