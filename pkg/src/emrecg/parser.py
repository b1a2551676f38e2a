"""Referring-expression parsing and language/gesture alignment.

EMRE utterances are templatic, so a greedy longest-match segmenter over a
closed lexicon is enough:

    [demonstrative] [other] attribute* head (spatial-term relatum-NP)*
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from . import logic as L
from .common_ground import (
    DEFAULT_AGENTS,
    CommunicativeAct,
    Continuation,
    Entity,
    Gesture,
)
from .dataset import Dataset, tokenize

DEMONSTRATIVES = ("this", "that", "the")
DIFFERENTIATORS = ("other",)
COLOR_TERMS = (
    "red", "green", "purple", "blue", "yellow", "orange", "white", "black",
    "brown", "pink", "gray", "grey", "silver", "gold",
)
SEED_NOUNS = ("block", "cup", "knife", "plate", "table", "bowl", "spoon", "fork", "mug", "bottle", "book")
SPATIAL_TERMS = {
    "in front of": "in_front",
    "behind": "behind",
    "left of": "left",
    "to the left of": "left",
    "right of": "right",
    "to the right of": "right",
    "near": "near",
    "next to": "next_to",
    "on": "on",
    "on top of": "on",
    "touching": "touching",
}


class ParserError(Exception):
    pass


class LexiconError(ParserError):
    pass


class LexiconAmbiguityError(LexiconError):
    pass


class EmptyUtteranceError(ParserError):
    pass


class ParseError(ParserError):
    def __init__(self, token: str, position: int, expected: str):
        super().__init__(f"unexpected token {token!r} at position {position} (expected {expected})")
        self.token = token
        self.position = position


class ResolutionError(ParserError):
    pass


class AlignmentError(ParserError):
    pass


_CAMEL = re.compile(r"[A-Z]+(?![a-z])|[A-Z]?[a-z]+|\d+")


def split_label(label: str, colors: Iterable[str] = COLOR_TERMS) -> tuple[frozenset[str], str]:
    """``PurpleBlock2`` -> ({purple}, block); ``red_block_1`` works too."""
    words = [w.lower() for chunk in re.split(r"[\s_\-]+", label) for w in _CAMEL.findall(chunk)]
    words = [w for w in words if not w.isdigit()]
    if not words:
        return frozenset(), label.lower()
    colors = set(colors)
    rest = [w for w in words if w not in colors]
    if not rest:
        # a label made only of colour words names its kind with the last one
        return frozenset(w for w in words[:-1] if w in colors), words[-1]
    return frozenset(w for w in words if w in colors), rest[-1]


def entity_from_label(label: str, position: Sequence[float]) -> Entity:
    attrs, kind = split_label(label)
    return Entity(label, tuple(position), attrs, kind)


def scene_from_coordinates(coords: Mapping[str, Sequence[float]]) -> list[Entity]:
    return [entity_from_label(k, v) for k, v in sorted(coords.items())]


@dataclass(frozen=True)
class Lexicon:
    demonstratives: frozenset[str] = frozenset(DEMONSTRATIVES)
    attributives: frozenset[str] = frozenset()
    head_nouns: frozenset[str] = frozenset()
    spatial_terms: Mapping[str, str] = field(default_factory=lambda: dict(SPATIAL_TERMS))
    differentiators: frozenset[str] = frozenset(DIFFERENTIATORS)
    unknown_tokens: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        classes = {
            "demonstratives": set(self.demonstratives),
            "attributives": set(self.attributives),
            "head_nouns": set(self.head_nouns),
            "spatial_terms": set(self.spatial_terms),
            "differentiators": set(self.differentiators),
        }
        names = list(classes)
        for i, a in enumerate(names):
            for b in names[i + 1:]:
                clash = classes[a] & classes[b]
                if clash:
                    raise LexiconAmbiguityError(f"tokens in both {a} and {b}: {sorted(clash)}")
        # longest phrases first for greedy matching
        phrases = sorted((tuple(s.split()) for s in self.spatial_terms), key=lambda t: (-len(t), t))
        object.__setattr__(self, "_phrases", tuple(phrases))

    def canonical_relation(self, surface: str) -> str:
        return self.spatial_terms[surface]

    def match_spatial(self, tokens: Sequence[str], pos: int) -> str | None:
        for ph in self._phrases:
            if tuple(tokens[pos:pos + len(ph)]) == ph:
                return " ".join(ph)
        return None

    def to_json(self) -> dict:
        return {
            "demonstratives": sorted(self.demonstratives),
            "attributives": sorted(self.attributives),
            "head_nouns": sorted(self.head_nouns),
            "spatial_terms": dict(sorted(self.spatial_terms.items())),
            "differentiators": sorted(self.differentiators),
            "unknown_tokens": list(self.unknown_tokens),
        }

    @classmethod
    def from_json(cls, d: dict) -> "Lexicon":
        return cls(
            demonstratives=frozenset(d["demonstratives"]),
            attributives=frozenset(d["attributives"]),
            head_nouns=frozenset(d["head_nouns"]),
            spatial_terms=dict(d["spatial_terms"]),
            differentiators=frozenset(d["differentiators"]),
            unknown_tokens=tuple(d.get("unknown_tokens", ())),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2, sort_keys=True), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Lexicon":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def build_lexicon(ds: Dataset) -> Lexicon:
    """Seed word classes, extended from object labels and the utterance vocabulary.

    Tokens that fit no class and are not part of a spatial phrase are
    reported in ``unknown_tokens``.
    """
    attributives: set[str] = set()
    nouns: set[str] = set()
    for label in sorted(ds.object_inventory):
        attrs, kind = split_label(label)
        attributives |= attrs
        nouns.add(kind)
    vocab = ds.term_vocabulary
    attributives |= vocab & set(COLOR_TERMS)
    nouns |= vocab & set(SEED_NOUNS)

    clash = attributives & nouns
    if clash:
        raise LexiconAmbiguityError(f"tokens classified as both attributive and head noun: {sorted(clash)}")

    covered = set(DEMONSTRATIVES) | set(DIFFERENTIATORS) | attributives | nouns
    for phrase in SPATIAL_TERMS:
        covered.update(phrase.split())
    unknown = tuple(sorted(vocab - covered))
    return Lexicon(
        attributives=frozenset(attributives),
        head_nouns=frozenset(nouns),
        unknown_tokens=unknown,
    )


@dataclass(frozen=True)
class ParsedNP:
    determiner: str | None
    attributes: tuple[str, ...]
    head: str
    resolved_entity: str | None = None

    def tokens(self) -> list[str]:
        return ([self.determiner] if self.determiner else []) + list(self.attributes) + [self.head]


@dataclass(frozen=True)
class ParsedRE:
    demonstrative: str
    attributes: tuple[str, ...]
    head: str
    spatial_pps: tuple[tuple[str, ParsedNP], ...] = ()
    other_flag: bool = False
    surface_tokens: tuple[str, ...] = ()
    referent_var: str = L.REFERENT_VAR
    frame_of_reference: str = L.AVATAR
    relations: tuple[str, ...] = ()  # canonical names, parallel to spatial_pps
    referent: str | None = None
    competitor: str | None = None

    @property
    def surface(self) -> str:
        return " ".join(self.surface_tokens)

    def tokens(self) -> list[str]:
        """Canonical regeneration of the utterance from the parsed fields."""
        out = [] if self.demonstrative == "none" else [self.demonstrative]
        if self.other_flag:
            out.append("other")
        out += list(self.attributes) + [self.head]
        for term, np_ in self.spatial_pps:
            out += term.split() + np_.tokens()
        return out

    def relata(self) -> list[ParsedNP]:
        return [np_ for _, np_ in self.spatial_pps]

    def meaning_terms(self) -> list[str]:
        """Demonstrative, attributives, head, spatial relations and relatum nouns.

        Articles inside spatial PPs and the differentiator are not terms.
        """
        terms = [] if self.demonstrative == "none" else [self.demonstrative]
        terms += list(self.attributes) + [self.head]
        for rel, np_ in zip(self.relations, self.relata()):
            terms.append(rel)
            terms += list(np_.attributes) + [np_.head]
        return list(dict.fromkeys(terms))

    def spatial_relations(self) -> list[str]:
        return list(dict.fromkeys(self.relations))

    def attributive_terms(self) -> list[str]:
        terms = list(self.attributes)
        for np_ in self.relata():
            terms += list(np_.attributes)
        return list(dict.fromkeys(terms))

    def to_json(self) -> dict:
        return {
            "referent_var": self.referent_var,
            "demonstrative": self.demonstrative,
            "other": self.other_flag,
            "attributes": list(self.attributes),
            "head": self.head,
            "pps": [
                {
                    "relation": rel,
                    "surface": term,
                    "relatum": {
                        "determiner": np_.determiner,
                        "attributes": list(np_.attributes),
                        "head": np_.head,
                        "resolved_entity": np_.resolved_entity,
                    },
                }
                for rel, (term, np_) in zip(self.relations, self.spatial_pps)
            ],
            "frame_of_reference": self.frame_of_reference,
            "surface_tokens": list(self.surface_tokens),
            "referent": self.referent,
            "competitor": self.competitor,
        }


def parse_re(u: str, lex: Lexicon) -> ParsedRE:
    toks = tokenize(u)
    if not toks:
        raise EmptyUtteranceError("empty utterance")
    if not lex.head_nouns:
        raise LexiconError("lexicon has no head nouns; build it from a non-empty dataset")
    n = len(toks)
    pos = 0

    def expect(what: str):
        tok = toks[pos] if pos < n else "<end>"
        raise ParseError(tok, pos, what)

    dem = "none"
    if toks[pos] in lex.demonstratives:
        dem = toks[pos]
        pos += 1
    other = False
    if pos < n and toks[pos] in lex.differentiators:
        other = True
        pos += 1
    attrs = []
    while pos < n and toks[pos] in lex.attributives:
        attrs.append(toks[pos])
        pos += 1
    if pos >= n or toks[pos] not in lex.head_nouns:
        expect("head noun")
    head = toks[pos]
    pos += 1
    if other and not attrs:
        raise ParseError("other", pos, "an attribute after 'other'")

    pps: list[tuple[str, ParsedNP]] = []
    while pos < n:
        term = lex.match_spatial(toks, pos)
        if term is None:
            expect("spatial term")
        pos += len(term.split())
        det = None
        if pos < n and toks[pos] in lex.demonstratives:
            det = toks[pos]
            pos += 1
        np_attrs = []
        while pos < n and toks[pos] in lex.attributives:
            np_attrs.append(toks[pos])
            pos += 1
        if pos >= n or toks[pos] not in lex.head_nouns:
            expect("relatum head noun")
        pps.append((term, ParsedNP(det, tuple(np_attrs), toks[pos])))
        pos += 1

    return ParsedRE(
        demonstrative=dem,
        attributes=tuple(attrs),
        head=head,
        spatial_pps=tuple(pps),
        other_flag=other,
        surface_tokens=tuple(toks),
        relations=tuple(lex.canonical_relation(t) for t, _ in pps),
    )


def _dist(a: Entity, b: Entity) -> float:
    return math.dist(a.position, b.position)


def _pick(cands: list[Entity], anchor: Entity | None, what: str) -> Entity:
    if len(cands) == 1:
        return cands[0]
    if anchor is None:
        raise ResolutionError(f"{what} is ambiguous among {[c.label for c in cands]} and there is no anchor")
    return min(cands, key=lambda c: (_dist(c, anchor), c.label))


def resolve(p: ParsedRE, scene: Sequence[Entity], target: str | None = None) -> ParsedRE:
    """Ground relatum NPs and the ``other`` competitor against the scene.

    Same-description candidates are disambiguated by distance to the target.
    """
    by_label = {e.label: e for e in scene}
    anchor = by_label.get(target) if target is not None else None
    if target is not None and anchor is None:
        raise ResolutionError(f"target {target!r} is not in the scene")

    pps = []
    for term, np_ in p.spatial_pps:
        cands = [
            e for e in scene
            if e.kind == np_.head and set(np_.attributes) <= e.attributes and e.label != target
        ]
        if not cands:
            raise ResolutionError(f"no entity matches relatum {' '.join(np_.tokens())!r}")
        pps.append((term, replace(np_, resolved_entity=_pick(cands, anchor, "relatum").label)))

    competitor = None
    if p.other_flag and anchor is not None:
        rivals = [
            e for e in scene
            if e.label != target and e.kind == p.head and set(p.attributes) <= e.attributes
        ]
        if rivals:
            competitor = _pick(rivals, anchor, "competitor").label
    return replace(p, spatial_pps=tuple(pps), referent=target, competitor=competitor)


def _continuations(p: ParsedRE | None) -> tuple[Continuation, Continuation]:
    var = p.referent_var if p is not None else L.REFERENT_VAR
    return Continuation("k_s", var), Continuation("k_g", var)


def align(p: ParsedRE, g: Gesture, scene: Iterable[str]) -> CommunicativeAct:
    """Co-gestural speech: link the demonstrative NP to the pointed-at object."""
    labels = set(scene)
    if g is None or g.obj is None:
        raise AlignmentError("gesture has no object to align with")
    if g.obj not in labels:
        raise AlignmentError(f"gesture object {g.obj!r} is not in the scene")
    return CommunicativeAct(
        speaker=DEFAULT_AGENTS[0],
        speech=p,
        gesture=g,
        alignment=("Dem_O", g.obj),
        continuations=_continuations(p),
    )


def speech_act(p: ParsedRE) -> CommunicativeAct:
    return CommunicativeAct(DEFAULT_AGENTS[0], speech=p, continuations=_continuations(p))


def gesture_act(g: Gesture) -> CommunicativeAct:
    return CommunicativeAct(DEFAULT_AGENTS[0], gesture=g, continuations=_continuations(None))


def to_logical_form(p: ParsedRE) -> list[L.Atom]:
    """Conjuncts of the restrictor, e.g. block(x), red(x), in_front(x, Knife, alpha_a)."""
    x = p.referent_var
    atoms = [L.Atom(L.AtomKind.CATEGORY, (p.head, x))]
    atoms += [L.attr(a, x) for a in p.attributes]
    for rel, np_ in zip(p.relations, p.relata()):
        if np_.resolved_entity is None:
            raise ResolutionError(f"relatum {' '.join(np_.tokens())!r} is unresolved")
        atoms.append(L.Atom(L.AtomKind.SPATIAL, (rel, x, np_.resolved_entity, p.frame_of_reference)))
    if p.other_flag and p.referent is not None and p.competitor is not None:
        atoms.append(L.distinct(p.referent, p.competitor))
    return atoms
