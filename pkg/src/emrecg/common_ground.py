"""Common-ground state monad: agents, belief space, perceived scene, embedding space.

Every update returns a new :class:`CommonGroundState`; nothing is mutated.
``holds`` is a syntactic check over the belief space and the perceived
entities, not a possible-worlds model checker.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Iterable, Sequence

from . import logic as L
from .logic import (
    AVATAR,
    OBSERVER,
    And,
    Announce,
    Box,
    Knows,
    Not,
    PerceptionClosure,
    Perceives,
    Proposition,
    Top,
)

if TYPE_CHECKING:
    from .parser import ParsedRE


class CommonGroundError(Exception):
    pass


class ConstructionError(CommonGroundError):
    pass


class UnknownEntityError(CommonGroundError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "unknown entity"


class StateError(CommonGroundError):
    """Update applied out of the t0 -> t1 -> t2 order."""


class MalformedActError(CommonGroundError):
    pass


class Role(str, enum.Enum):
    AVATAR = "avatar"
    OBSERVER = "observer"


@dataclass(frozen=True)
class Agent:
    id: str
    role: Role


DEFAULT_AGENTS = (Agent(AVATAR, Role.AVATAR), Agent(OBSERVER, Role.OBSERVER))


class Clock(str, enum.Enum):
    T0 = "t0"
    T1 = "t1"
    T2 = "t2"

    @property
    def offset(self) -> float:
        return _OFFSETS[self]


# scene shown 1.5 s, target circle held 1.5 s, act 0.5 s after that
_OFFSETS = {Clock.T0: 0.0, Clock.T1: 1.5, Clock.T2: 3.5}


@dataclass(frozen=True)
class Entity:
    label: str
    position: tuple[float, float, float]
    attributes: frozenset[str] = frozenset()
    kind: str = ""

    def __post_init__(self) -> None:
        pos = tuple(float(v) for v in self.position)
        if len(pos) != 3:
            raise ConstructionError(f"{self.label}: position must be a 3-vector, got {self.position}")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "attributes", frozenset(self.attributes))


@dataclass(frozen=True)
class EmbeddingSpace:
    """The table surface and where its near region ends.

    Positions are world units; ``near_far_boundary`` is a distance from
    ``agent_position`` along the ground plane.
    """

    surface: str = L.SURFACE
    extent: tuple[tuple[float, float], tuple[float, float]] = ((-0.8, -0.5), (0.8, 0.5))
    near_far_boundary: float = 0.9
    agent_position: tuple[float, float, float] = (0.0, 0.8, -1.0)

    def region(self, position: Sequence[float]) -> str:
        dx = position[0] - self.agent_position[0]
        dz = position[2] - self.agent_position[2]
        return "near" if (dx * dx + dz * dz) ** 0.5 <= self.near_far_boundary else "far"


@dataclass(frozen=True)
class Gesture:
    obj: str | None
    direction: tuple[float, float, float] = (0.0, 0.0, 1.0)
    kind: str = "Point_g"


@dataclass(frozen=True)
class Continuation:
    name: str
    var: str


@dataclass(frozen=True)
class CommunicativeAct:
    speaker: Agent
    speech: "ParsedRE | None" = None
    gesture: Gesture | None = None
    alignment: tuple[str, str] | None = None
    continuations: tuple[Continuation, Continuation] | None = None

    def __post_init__(self) -> None:
        if self.speech is None and self.gesture is None:
            raise MalformedActError("communicative act has neither speech nor gesture")
        if self.speech is not None and self.gesture is not None and self.alignment is None:
            raise MalformedActError("co-gestural speech requires an alignment link")

    @property
    def configuration(self) -> str:
        if self.speech is not None and self.gesture is not None:
            return "S,G"
        return "S" if self.speech is not None else "G"


@dataclass(frozen=True)
class UpdateEvent:
    time: Clock
    offset_seconds: float
    formula: Proposition
    added: frozenset = frozenset()


@dataclass(frozen=True)
class CommonGroundState:
    agents: tuple[Agent, Agent]
    delta: frozenset
    entities: tuple[Entity, ...]
    relations: frozenset
    space: EmbeddingSpace
    per_agent_view: tuple[tuple[str, tuple[Proposition, ...]], ...]
    timeline: tuple[UpdateEvent, ...]
    clock: Clock
    _labels: frozenset = field(default=frozenset(), repr=False, compare=False)

    @property
    def perceived(self) -> frozenset[str]:
        return self._labels

    def entity(self, label: str) -> Entity:
        for e in self.entities:
            if e.label == label:
                return e
        raise UnknownEntityError(f"unknown entity {label!r}")

    def view(self, agent: str) -> tuple[Proposition, ...]:
        for a, props in self.per_agent_view:
            if a == agent:
                return props
        raise KeyError(agent)

    @property
    def agent_ids(self) -> tuple[str, ...]:
        return tuple(a.id for a in self.agents)


def _with_facts(state: CommonGroundState, event: UpdateEvent, clock: Clock) -> CommonGroundState:
    new = [p for p in sorted(event.added, key=L.sort_key) if p not in state.delta]
    views = dict(state.per_agent_view)
    for p in new:
        holder = L.leading_agent(p)
        if holder in views:
            views[holder] = views[holder] + (p,)
    return replace(
        state,
        delta=state.delta | event.added,
        per_agent_view=tuple((a.id, views[a.id]) for a in state.agents),
        timeline=state.timeline + (event,),
        clock=clock,
    )


def initialize_common_ground(
    scene: Iterable[Entity],
    relations: Iterable[tuple[str, str, str]] = (),
    space: EmbeddingSpace | None = None,
    agents: tuple[Agent, Agent] = DEFAULT_AGENTS,
) -> CommonGroundState:
    """Populate P with the scene and close perception over both agents (t0)."""
    scene = tuple(scene)
    labels = [e.label for e in scene]
    dupes = sorted({b for b in labels if labels.count(b) > 1})
    if dupes:
        raise ConstructionError(f"duplicate entity labels: {', '.join(dupes)}")
    if sorted(a.role for a in agents) != sorted(Role):
        raise ConstructionError("need exactly one avatar and one observer")
    relations = frozenset(tuple(r) for r in relations)
    for rel in relations:
        for b in rel[1:]:
            if b not in labels:
                raise ConstructionError(f"relation {rel} mentions unknown entity {b!r}")

    ids = [a.id for a in agents]
    facts = set()
    for b in labels:
        for x in ids:
            for y in ids:
                if x != y:
                    facts.add(Knows(x, Perceives(y, L.entity(b))))
    event = UpdateEvent(
        Clock.T0,
        Clock.T0.offset,
        PerceptionClosure(tuple(ids), L.conj(L.entity(b) for b in sorted(labels))),
        frozenset(facts),
    )
    empty = CommonGroundState(
        agents=tuple(agents),
        delta=frozenset(),
        entities=tuple(sorted(scene, key=lambda e: e.label)),
        relations=relations,
        space=space or EmbeddingSpace(),
        per_agent_view=tuple((i, ()) for i in ids),
        timeline=(),
        clock=Clock.T0,
        _labels=frozenset(labels),
    )
    return _with_facts(empty, event, Clock.T0)


def _role(state: CommonGroundState, role: Role) -> str:
    return next(a.id for a in state.agents if a.role is role)


def mark_target(state: CommonGroundState, b: str) -> CommonGroundState:
    """Circle ``b``: the observer now knows it is the target, the avatar's knowledge is open."""
    if b not in state.perceived:
        raise UnknownEntityError(f"unknown entity {b!r}")
    if state.clock is not Clock.T0 or any(e.time is Clock.T1 for e in state.timeline):
        raise StateError(f"mark_target requires clock t0, state is at {state.clock.value}")
    h, a = _role(state, Role.OBSERVER), _role(state, Role.AVATAR)
    knows_target = Knows(h, L.target(b))
    open_question = Not(Box(Knows(h, Knows(a, L.target(b)))))
    event = UpdateEvent(Clock.T1, Clock.T1.offset, And(knows_target, open_question),
                        frozenset({knows_target, open_question}))
    return _with_facts(state, event, Clock.T1)


def _speech_facts(state: CommonGroundState, act: CommunicativeAct) -> set[Proposition]:
    p = act.speech
    h, a = _role(state, Role.OBSERVER), _role(state, Role.AVATAR)
    for np_ in p.relata():
        if np_.resolved_entity is not None and np_.resolved_entity not in state.perceived:
            raise UnknownEntityError(f"unknown entity {np_.resolved_entity!r}")
    facts = {Knows(h, Knows(a, L.meaning(u))) for u in p.meaning_terms()}
    if p.other_flag and p.referent is not None and p.competitor is not None:
        b1, b2 = p.referent, p.competitor
        for b in (b1, b2):
            if b not in state.perceived:
                raise UnknownEntityError(f"unknown entity {b!r}")
        content = L.conj(
            [L.attr(t, b1) for t in p.attributes]
            + [L.attr(t, b2) for t in p.attributes]
            + [L.distinct(b1, b2)]
        )
        facts.add(Knows(h, Knows(a, content)))
    if act.gesture is not None and act.gesture.kind == "Point_g" and "this" in p.surface_tokens:
        facts.add(Knows(h, Knows(a, L.near_far(state.space.surface))))
    return facts


def apply_act(state: CommonGroundState, act: CommunicativeAct) -> tuple[CommonGroundState, list[UpdateEvent]]:
    """Apply the avatar's act at t2: pointing first, then the utterance."""
    if act.speech is None and act.gesture is None:
        raise MalformedActError("communicative act has neither speech nor gesture")
    if state.clock is not Clock.T1:
        raise StateError(f"apply_act requires clock t1, state is at {state.clock.value}")
    h, a = _role(state, Role.OBSERVER), _role(state, Role.AVATAR)
    events: list[UpdateEvent] = []
    if act.gesture is not None:
        b = act.gesture.obj
        if b is None or b not in state.perceived:
            raise UnknownEntityError(f"unknown entity {b!r}")
        fact = Knows(h, Knows(a, And(L.points(b), L.target(b))))
        events.append(UpdateEvent(Clock.T2, Clock.T2.offset, Announce(L.points(b), fact), frozenset({fact})))
    if act.speech is not None:
        facts = _speech_facts(state, act)
        formula = Announce(L.Atom(L.AtomKind.UTTERS, (act.speech.surface,)),
                           L.conj(sorted(facts, key=L.sort_key)))
        events.append(UpdateEvent(Clock.T2, Clock.T2.offset, formula, frozenset(facts)))
    for ev in events:
        state = _with_facts(state, ev, Clock.T2)
    return state, events


def announce(state: CommonGroundState, phi: Proposition) -> CommonGroundState:
    """Public announcement of ``phi``: every agent comes to know it."""
    L.check_well_formed(phi, state.agent_ids, state.perceived)
    facts = frozenset(Knows(x, phi) for x in state.agent_ids)
    if facts <= state.delta:
        return state
    event = UpdateEvent(state.clock, state.clock.offset, Announce(phi, L.conj(sorted(facts, key=L.sort_key))), facts)
    return _with_facts(state, event, state.clock)


# -- entailment ---------------------------------------------------------------

def _entails(d: Proposition, phi: Proposition) -> bool:
    """Does the stored fact ``d`` syntactically give ``phi``?

    Uses conjunction elimination, monotonicity of each modality over its
    body, and veridicality of knowledge (K_x psi gives psi).
    """
    if d == phi:
        return True
    if isinstance(d, And):
        return _entails(d.left, phi) or _entails(d.right, phi)
    if isinstance(d, L.Modal):
        if type(phi) is type(d) and phi.agent == d.agent and _entails(d.body, phi.body):
            return True
        if isinstance(d, Knows):
            return _entails(d.body, phi)
    return False


def _perceptual(state: CommonGroundState, phi: Proposition) -> bool:
    ent = L.AtomKind.ENTITY
    if isinstance(phi, L.Atom) and phi.kind is ent:
        return phi.args[0] in state.perceived
    if isinstance(phi, Perceives) and phi.agent in state.agent_ids:
        body = phi.body
        return isinstance(body, L.Atom) and body.kind is ent and body.args[0] in state.perceived
    if isinstance(phi, Knows) and isinstance(phi.body, Perceives):
        return phi.agent != phi.body.agent and phi.agent in state.agent_ids and _perceptual(state, phi.body)
    return False


def _derived(state: CommonGroundState, phi: Proposition) -> bool:
    if phi in state.delta or _perceptual(state, phi):
        return True
    if isinstance(phi, L.Modal) and isinstance(phi.body, And):
        cls = type(phi)
        if _derived(state, cls(phi.agent, phi.body.left)) and _derived(state, cls(phi.agent, phi.body.right)):
            return True
    return any(_entails(d, phi) for d in state.delta)


def holds(state: CommonGroundState, phi: Proposition) -> bool:
    if isinstance(phi, Top):
        return True
    if isinstance(phi, And):
        return holds(state, phi.left) and holds(state, phi.right)
    if isinstance(phi, Not):
        # stored negations (including ~[]psi) are taken at face value
        return _derived(state, phi) or not holds(state, phi.body)
    if isinstance(phi, Announce):
        if not holds(state, phi.announcement):
            return True
        return holds(announce(state, phi.announcement), phi.body)
    if isinstance(phi, PerceptionClosure):
        if isinstance(phi.body, And):
            return all(holds(state, PerceptionClosure(phi.agents, c)) for c in L.conjuncts(phi.body))
        if not holds(state, phi.body):
            return False
        return all(
            holds(state, Knows(x, Perceives(y, phi.body)))
            for x in phi.agents for y in phi.agents if x != y
        )
    return _derived(state, phi)


# -- JSON ---------------------------------------------------------------------

def _props(ps: Iterable[Proposition]) -> list[dict]:
    return [L.to_dict(p) for p in sorted(ps, key=L.sort_key)]


def event_to_dict(ev: UpdateEvent) -> dict:
    return {
        "time": ev.time.value,
        "offset_seconds": ev.offset_seconds,
        "formula": L.to_dict(ev.formula),
        "formula_text": str(ev.formula),
        "added": _props(ev.added),
        "added_text": sorted(str(p) for p in ev.added),
    }


def state_to_dict(state: CommonGroundState) -> dict:
    return {
        "agents": [{"id": a.id, "role": a.role.value} for a in state.agents],
        "clock": state.clock.value,
        "delta": _props(state.delta),
        "perceived": [
            {"label": e.label, "position": list(e.position), "attributes": sorted(e.attributes), "kind": e.kind}
            for e in state.entities
        ],
        "relations": sorted(list(r) for r in state.relations),
        "space": {
            "surface": state.space.surface,
            "extent": [list(p) for p in state.space.extent],
            "near_far_boundary": state.space.near_far_boundary,
            "agent_position": list(state.space.agent_position),
        },
        "per_agent_view": {a: [str(p) for p in props] for a, props in state.per_agent_view},
        "timeline": [event_to_dict(ev) for ev in state.timeline],
    }


def dumps(obj: CommonGroundState | UpdateEvent, **kw) -> str:
    d = state_to_dict(obj) if isinstance(obj, CommonGroundState) else event_to_dict(obj)
    return json.dumps(d, sort_keys=True, **kw)
