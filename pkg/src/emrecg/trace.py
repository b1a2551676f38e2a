"""Run one EMRE record through the t0 -> t1 -> t2 common-ground updates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .common_ground import (
    CommonGroundState,
    CommunicativeAct,
    EmbeddingSpace,
    Gesture,
    UpdateEvent,
    apply_act,
    event_to_dict,
    initialize_common_ground,
    mark_target,
    state_to_dict,
)
from .dataset import EMRERecord, Modality
from .parser import Lexicon, align, gesture_act, parse_re, resolve, scene_from_coordinates, speech_act


@dataclass(frozen=True)
class RecordTrace:
    record_id: str
    initial: CommonGroundState
    targeted: CommonGroundState
    final: CommonGroundState
    act: CommunicativeAct
    act_events: tuple[UpdateEvent, ...]

    def to_json(self) -> dict:
        return {
            "record_id": self.record_id,
            "configuration": self.act.configuration,
            "speech": self.act.speech.to_json() if self.act.speech is not None else None,
            "gesture": None if self.act.gesture is None else {
                "kind": self.act.gesture.kind,
                "direction": list(self.act.gesture.direction),
                "obj": self.act.gesture.obj,
            },
            "alignment": list(self.act.alignment) if self.act.alignment else None,
            "continuations": [[c.name, c.var] for c in self.act.continuations or ()],
            "events": [event_to_dict(ev) for ev in self.final.timeline],
            "final_state": state_to_dict(self.final),
        }


def pointing_gesture(rec: EMRERecord, space: EmbeddingSpace) -> Gesture:
    target = np.asarray(rec.object_coordinates[rec.target_object], dtype=float)
    d = target - np.asarray(space.agent_position, dtype=float)
    norm = float(np.linalg.norm(d))
    direction = tuple(float(v) for v in (d / norm if norm > 0 else d))
    return Gesture(rec.target_object, direction)


def build_act(rec: EMRERecord, lex: Lexicon, space: EmbeddingSpace | None = None) -> CommunicativeAct:
    space = space or EmbeddingSpace()
    scene = scene_from_coordinates(rec.object_coordinates)
    if rec.modality is Modality.GESTURE:
        return gesture_act(pointing_gesture(rec, space))
    parsed = resolve(parse_re(rec.utterance, lex), scene, rec.target_object)
    if rec.modality is Modality.LANGUAGE:
        return speech_act(parsed)
    return align(parsed, pointing_gesture(rec, space), [e.label for e in scene])


def trace_record(rec: EMRERecord, lex: Lexicon, space: EmbeddingSpace | None = None) -> RecordTrace:
    space = space or EmbeddingSpace()
    scene = scene_from_coordinates(rec.object_coordinates)
    labels = {e.label for e in scene}
    relations = [r for r in rec.relation_set if r[1] in labels and r[2] in labels]
    s0 = initialize_common_ground(scene, relations, space)
    s1 = mark_target(s0, rec.target_object)
    act = build_act(rec, lex, space)
    s2, events = apply_act(s1, act)
    return RecordTrace(rec.video_id, s0, s1, s2, act, tuple(events))
