"""Epistemic formulas used to label common-ground updates.

Formulas are immutable, hashable trees so they can live in frozensets
(the belief space) and be compared structurally.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Iterator, Union

AVATAR = "alpha_a"
OBSERVER = "alpha_h"
AGENT_SYMBOLS = (AVATAR, OBSERVER)

SURFACE = "sfc"
REFERENT_VAR = "x"


class FormulaError(ValueError):
    """A formula refers to unknown agents/objects or is structurally invalid."""


class AtomKind(str, enum.Enum):
    TARGET = "target"                     # target(b)
    POINTS = "points"                     # Point_g -> Dir d, Obj b
    KNOWS_MEANING = "knows_meaning"       # [[T]] under (M, cg)
    ENTITY = "perceives_obj"              # the perceivable object b itself
    DISTINCT = "distinct"                 # b1 != b2
    NEAR_FAR_DISTINCT = "near_far_distinct"
    ATTR_HOLDS = "attr_holds"             # Att(b)
    CATEGORY = "category"                 # head noun predicate, block(x)
    SPATIAL = "spatial"                   # in_front(x, k, v)
    UTTERS = "utters"                     # C = S, the utterance act itself


# argument positions that must name an entity in P (or the referent variable)
_OBJECT_SLOTS: dict[AtomKind, tuple[int, ...]] = {
    AtomKind.TARGET: (0,),
    AtomKind.POINTS: (0,),
    AtomKind.ENTITY: (0,),
    AtomKind.DISTINCT: (0, 1),
    AtomKind.ATTR_HOLDS: (1,),
    AtomKind.CATEGORY: (1,),
    AtomKind.SPATIAL: (1, 2),
}

_ARITY: dict[AtomKind, int] = {
    AtomKind.TARGET: 1,
    AtomKind.POINTS: 1,
    AtomKind.KNOWS_MEANING: 1,
    AtomKind.ENTITY: 1,
    AtomKind.DISTINCT: 2,
    AtomKind.NEAR_FAR_DISTINCT: 1,
    AtomKind.ATTR_HOLDS: 2,
    AtomKind.CATEGORY: 2,
    AtomKind.SPATIAL: 4,
    AtomKind.UTTERS: 1,
}


@dataclass(frozen=True)
class Top:
    def __str__(self) -> str:
        return "T"


@dataclass(frozen=True)
class Atom:
    kind: AtomKind
    args: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", AtomKind(self.kind))
        object.__setattr__(self, "args", tuple(str(a) for a in self.args))

    def __str__(self) -> str:
        if self.kind is AtomKind.KNOWS_MEANING:
            return f"[[{self.args[0]}]]"
        if self.kind is AtomKind.ENTITY:
            return self.args[0]
        if self.kind is AtomKind.DISTINCT:
            return f"{self.args[0]} != {self.args[1]}"
        if self.kind is AtomKind.NEAR_FAR_DISTINCT:
            return f"[[near({self.args[0]})]] != [[far({self.args[0]})]]"
        if self.kind in (AtomKind.ATTR_HOLDS, AtomKind.CATEGORY, AtomKind.SPATIAL):
            return f"{self.args[0]}({', '.join(self.args[1:])})"
        if self.kind is AtomKind.POINTS:
            return f"Point_g({self.args[0]})"
        return f"{self.kind.value}({', '.join(self.args)})"


@dataclass(frozen=True)
class Knows:
    agent: str
    body: "Proposition"

    def __str__(self) -> str:
        return f"K_{_short(self.agent)} {_wrap(self.body)}"


@dataclass(frozen=True)
class Believes:
    agent: str
    body: "Proposition"

    def __str__(self) -> str:
        return f"L_{_short(self.agent)} {_wrap(self.body)}"


@dataclass(frozen=True)
class Perceives:
    agent: str
    body: "Proposition"

    def __str__(self) -> str:
        return f"P_{_short(self.agent)} {_wrap(self.body)}"


@dataclass(frozen=True)
class Not:
    body: "Proposition"

    def __str__(self) -> str:
        return f"~{_wrap(self.body)}"


@dataclass(frozen=True)
class And:
    left: "Proposition"
    right: "Proposition"

    def __str__(self) -> str:
        return f"({self.left} & {self.right})"


@dataclass(frozen=True)
class Announce:
    """``[announcement!] body``."""

    announcement: "Proposition"
    body: "Proposition"

    def __str__(self) -> str:
        return f"[{self.announcement}!]{_wrap(self.body)}"


@dataclass(frozen=True)
class Box:
    body: "Proposition"

    def __str__(self) -> str:
        return f"[]{_wrap(self.body)}"


@dataclass(frozen=True)
class PerceptionClosure:
    """``[(P_a1 u P_a2 ...)*] body``."""

    agents: tuple[str, ...]
    body: "Proposition"

    def __str__(self) -> str:
        union = " u ".join(f"P_{_short(a)}" for a in self.agents)
        return f"[({union})*]{_wrap(self.body)}"


Proposition = Union[Top, Atom, Knows, Believes, Perceives, Not, And, Announce, Box, PerceptionClosure]
Modal = (Knows, Believes, Perceives)


def _short(agent: str) -> str:
    return agent.split("_", 1)[1] if agent.startswith("alpha_") else agent


def _wrap(p: Proposition) -> str:
    s = str(p)
    return s if isinstance(p, (Atom, Top, And)) or " " not in s else f"({s})"


def conj(props: Iterable[Proposition]) -> Proposition:
    """Right-nested conjunction; the empty conjunction is ``Top``."""
    items = list(props)
    if not items:
        return Top()
    out = items[-1]
    for p in reversed(items[:-1]):
        out = And(p, out)
    return out


def conjuncts(p: Proposition) -> Iterator[Proposition]:
    if isinstance(p, And):
        yield from conjuncts(p.left)
        yield from conjuncts(p.right)
    else:
        yield p


def subformulas(p: Proposition) -> Iterator[Proposition]:
    yield p
    if isinstance(p, (Knows, Believes, Perceives, Not, Box, PerceptionClosure)):
        yield from subformulas(p.body)
    elif isinstance(p, And):
        yield from subformulas(p.left)
        yield from subformulas(p.right)
    elif isinstance(p, Announce):
        yield from subformulas(p.announcement)
        yield from subformulas(p.body)


def leading_agent(p: Proposition) -> str | None:
    """Agent of the outermost modality, looking through negation and box."""
    while isinstance(p, (Not, Box)):
        p = p.body
    if isinstance(p, Modal):
        return p.agent
    return None


def check_well_formed(
    p: Proposition,
    agents: Iterable[str],
    objects: Iterable[str],
    variables: Iterable[str] = (REFERENT_VAR,),
) -> None:
    """Raise :class:`FormulaError` unless every symbol in ``p`` resolves."""
    agents = set(agents)
    allowed = set(objects) | set(variables)
    for node in subformulas(p):
        if isinstance(node, Atom):
            if len(node.args) != _ARITY[node.kind]:
                raise FormulaError(f"{node.kind.value} expects {_ARITY[node.kind]} args, got {node.args}")
            for i in _OBJECT_SLOTS.get(node.kind, ()):
                if node.args[i] not in allowed:
                    raise FormulaError(f"unknown object {node.args[i]!r} in {node}")
            if node.kind is AtomKind.SPATIAL and node.args[3] not in agents:
                raise FormulaError(f"unknown frame-of-reference agent {node.args[3]!r}")
        elif isinstance(node, Modal):
            if node.agent not in agents:
                raise FormulaError(f"unknown agent {node.agent!r}")
        elif isinstance(node, PerceptionClosure):
            unknown = set(node.agents) - agents
            if unknown or not node.agents:
                raise FormulaError(f"bad perception-closure agents {node.agents}")
        elif not isinstance(node, (Top, Not, And, Announce, Box)):
            raise FormulaError(f"not a formula: {node!r}")


# -- JSON ---------------------------------------------------------------------

def to_dict(p: Proposition) -> dict:
    if isinstance(p, Top):
        return {"op": "top"}
    if isinstance(p, Atom):
        return {"op": "atom", "kind": p.kind.value, "args": list(p.args)}
    if isinstance(p, Modal):
        return {"op": type(p).__name__.lower(), "agent": p.agent, "body": to_dict(p.body)}
    if isinstance(p, (Not, Box)):
        return {"op": type(p).__name__.lower(), "body": to_dict(p.body)}
    if isinstance(p, And):
        return {"op": "and", "left": to_dict(p.left), "right": to_dict(p.right)}
    if isinstance(p, Announce):
        return {"op": "announce", "announcement": to_dict(p.announcement), "body": to_dict(p.body)}
    if isinstance(p, PerceptionClosure):
        return {"op": "closure", "agents": list(p.agents), "body": to_dict(p.body)}
    raise FormulaError(f"not a formula: {p!r}")


_MODAL_OPS = {"knows": Knows, "believes": Believes, "perceives": Perceives}


def from_dict(d: dict) -> Proposition:
    op = d.get("op")
    try:
        if op == "top":
            return Top()
        if op == "atom":
            return Atom(AtomKind(d["kind"]), tuple(d["args"]))
        if op in _MODAL_OPS:
            return _MODAL_OPS[op](d["agent"], from_dict(d["body"]))
        if op == "not":
            return Not(from_dict(d["body"]))
        if op == "box":
            return Box(from_dict(d["body"]))
        if op == "and":
            return And(from_dict(d["left"]), from_dict(d["right"]))
        if op == "announce":
            return Announce(from_dict(d["announcement"]), from_dict(d["body"]))
        if op == "closure":
            return PerceptionClosure(tuple(d["agents"]), from_dict(d["body"]))
    except (KeyError, TypeError, ValueError) as e:
        raise FormulaError(f"malformed formula record {d!r}: {e}") from e
    raise FormulaError(f"unknown formula op {op!r}")


def sort_key(p: Proposition) -> str:
    return str(p)


# -- constructors used throughout ---------------------------------------------

def entity(b: str) -> Atom:
    return Atom(AtomKind.ENTITY, (b,))


def target(b: str) -> Atom:
    return Atom(AtomKind.TARGET, (b,))


def points(b: str) -> Atom:
    return Atom(AtomKind.POINTS, (b,))


def meaning(term: str) -> Atom:
    return Atom(AtomKind.KNOWS_MEANING, (term,))


def attr(att: str, b: str) -> Atom:
    return Atom(AtomKind.ATTR_HOLDS, (att, b))


def distinct(b1: str, b2: str) -> Atom:
    return Atom(AtomKind.DISTINCT, (b1, b2))


def near_far(surface: str = SURFACE) -> Atom:
    return Atom(AtomKind.NEAR_FAR_DISTINCT, (surface,))
