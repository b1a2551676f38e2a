"""Raw, sentence-embedding and formal (common-ground) feature segments.

A :class:`FeatureSchema` fixes the column layout: groups in the order
raw, formal, embedding; descriptors sorted by name within each group.
Every descriptor carries the modality it depends on so that ablations can
keep only language-dependent columns.
"""

from __future__ import annotations

import csv
import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import logic as L
from .common_ground import Clock, CommonGroundState, CommunicativeAct, EmbeddingSpace
from .dataset import Dataset, DistinctionScope, EMRERecord, Modality, tokenize
from .embeddings import WordVectors, sentence_vector
from .parser import Lexicon, build_lexicon
from .trace import trace_record


class FeatureError(Exception):
    pass


class SchemaError(FeatureError):
    pass


class SequencingError(FeatureError):
    pass


class ConfigError(FeatureError):
    pass


class Group(str, enum.Enum):
    RAW = "raw"
    FORMAL = "formal"
    EMBEDDING = "embedding"


GROUP_ORDER = (Group.RAW, Group.FORMAL, Group.EMBEDDING)
GROUP_ALIASES = {"raw": Group.RAW, "formal": Group.FORMAL, "form": Group.FORMAL,
                 "embedding": Group.EMBEDDING, "se": Group.EMBEDDING}


class Dependence(str, enum.Enum):
    LINGUISTIC = "linguistic"
    GESTURAL = "gestural"
    EMBODIED = "embodied"
    GLOBAL = "global"


@dataclass(frozen=True)
class FeatureDescriptor:
    name: str
    group: Group
    dependence: Dependence
    width: int = 1
    categories: tuple[str, ...] = ()


@dataclass(frozen=True)
class FeatureSchema:
    descriptors: tuple[FeatureDescriptor, ...]

    def __post_init__(self) -> None:
        names = [d.name for d in self.descriptors]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate feature names")
        expected = sorted(self.descriptors, key=lambda d: (GROUP_ORDER.index(d.group), d.name))
        if list(self.descriptors) != expected:
            raise SchemaError("descriptors must be grouped raw/formal/embedding and sorted by name")

    @property
    def width(self) -> int:
        return sum(d.width for d in self.descriptors)

    def select(self, groups: Iterable[Group], dependence: str = "all") -> "FeatureSchema":
        groups = set(groups)
        keep = [
            d for d in self.descriptors
            if d.group in groups and (dependence == "all" or d.dependence is Dependence.LINGUISTIC)
        ]
        return FeatureSchema(tuple(keep))

    def offsets(self) -> dict[str, slice]:
        out, i = {}, 0
        for d in self.descriptors:
            out[d.name] = slice(i, i + d.width)
            i += d.width
        return out

    def group(self, g: Group) -> "FeatureSchema":
        return self.select([g])

    def column_names(self) -> list[str]:
        cols = []
        for d in self.descriptors:
            if d.width == 1:
                cols.append(d.name)
            elif d.categories:
                cols += [f"{d.name}={c}" for c in d.categories]
            else:
                cols += [f"{d.name}[{i}]" for i in range(d.width)]
        return cols

    def to_json(self) -> dict:
        return {
            "width": self.width,
            "descriptors": [
                {"name": d.name, "group": d.group.value, "modality_dependence": d.dependence.value,
                 "width": d.width, "categories": list(d.categories)}
                for d in self.descriptors
            ],
        }


@dataclass(frozen=True)
class FeatureVector:
    schema: FeatureSchema
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.values.shape != (self.schema.width,):
            raise SchemaError(f"vector of shape {self.values.shape} for schema width {self.schema.width}")


class ModalitySubset(str, enum.Enum):
    ALL = "all"
    LANGUAGE_ONLY = "language_only"
    ENSEMBLE_ONLY = "ensemble_only"

    def includes(self, m: Modality) -> bool:
        if self is ModalitySubset.ALL:
            return True
        return m is (Modality.LANGUAGE if self is ModalitySubset.LANGUAGE_ONLY else Modality.ENSEMBLE)


@dataclass(frozen=True)
class AblationSpec:
    groups: frozenset[Group]
    modality_subset: ModalitySubset = ModalitySubset.ALL
    dependence: str = "all"  # or "linguistic_only"

    def __post_init__(self) -> None:
        groups = frozenset(GROUP_ALIASES[g] if isinstance(g, str) and g in GROUP_ALIASES else Group(g)
                           for g in self.groups)
        if not groups:
            raise ConfigError("an ablation needs at least one feature group")
        if self.dependence not in ("all", "linguistic_only"):
            raise ConfigError(f"bad dependence filter {self.dependence!r}")
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "modality_subset", ModalitySubset(self.modality_subset))

    @property
    def label(self) -> str:
        g = self.groups
        if g == {Group.FORMAL}:
            return "Formal only"
        parts = []
        if Group.RAW in g:
            parts.append("Raw")
        if Group.FORMAL in g:
            parts.append("form.")
        if Group.EMBEDDING in g:
            parts.append("SE")
        if parts == ["Raw"]:
            return "Raw features"
        if parts == ["Raw", "SE"]:
            return "Raw feat. + SE"
        return " + ".join(parts)

    def to_json(self) -> dict:
        return {
            "groups": sorted(g.value for g in self.groups),
            "modality_subset": self.modality_subset.value,
            "dependence": self.dependence,
        }

    @classmethod
    def from_json(cls, d: Mapping) -> "AblationSpec":
        return cls(frozenset(d["groups"]), d.get("modality_subset", "all"), d.get("dependence", "all"))


# -- raw ------------------------------------------------------------------------

MODALITY_CATS = tuple(m.value for m in (Modality.GESTURE, Modality.LANGUAGE, Modality.ENSEMBLE))
SCOPE_CATS = tuple(s.value for s in (DistinctionScope.SIMILAR_OBJECTS, DistinctionScope.ENTIRE_WORLD,
                                     DistinctionScope.NOT_APPLICABLE))


@dataclass(frozen=True)
class RawStats:
    inventory: tuple[str, ...]
    distance_mean: float
    distance_std: float

    @classmethod
    def from_dataset(cls, ds: Dataset) -> "RawStats":
        d = np.array([r.agent_distance for r in ds.records], dtype=float)
        mean = float(d.mean()) if len(d) else 0.0
        std = float(d.std()) if len(d) else 0.0
        return cls(tuple(sorted(ds.object_inventory)), mean, std)

    def descriptors(self) -> list[FeatureDescriptor]:
        return [
            FeatureDescriptor("agent_distance", Group.RAW, Dependence.EMBODIED),
            FeatureDescriptor("distance_distinction", Group.RAW, Dependence.LINGUISTIC),
            FeatureDescriptor("distinction_scope", Group.RAW, Dependence.LINGUISTIC, 3, SCOPE_CATS),
            FeatureDescriptor("modality", Group.RAW, Dependence.GLOBAL, 3, MODALITY_CATS),
            FeatureDescriptor("target_object", Group.RAW, Dependence.GLOBAL, len(self.inventory), self.inventory),
        ]


def _one_hot(cats: Sequence[str], value: str, what: str) -> np.ndarray:
    out = np.zeros(len(cats))
    try:
        out[cats.index(value)] = 1.0
    except ValueError:
        raise SchemaError(f"{what} {value!r} is outside the known categories") from None
    return out


def _raw_segment(rec: EMRERecord, stats: RawStats) -> np.ndarray:
    z = (rec.agent_distance - stats.distance_mean) / stats.distance_std if stats.distance_std > 0 else 0.0
    return np.concatenate([
        [z],
        [1.0 if rec.uses_distance_distinction else 0.0],
        _one_hot(SCOPE_CATS, rec.distinction_scope.value, "distinction scope"),
        _one_hot(MODALITY_CATS, rec.modality.value, "modality"),
        _one_hot(stats.inventory, rec.target_object, "target object"),
    ])


def extract_raw(rec: EMRERecord, ds: Dataset) -> np.ndarray:
    """Raw segment in schema order; distance is z-scored over ``ds``."""
    return _raw_segment(rec, RawStats.from_dataset(ds))


# -- sentence embeddings ----------------------------------------------------------

EMBEDDING_DIM = 200


def embedding_descriptors(dim: int = EMBEDDING_DIM) -> list[FeatureDescriptor]:
    return [
        FeatureDescriptor("se_utterance", Group.EMBEDDING, Dependence.LINGUISTIC, dim),
        FeatureDescriptor("se_utterance_descriptors", Group.EMBEDDING, Dependence.LINGUISTIC, dim),
    ]


def extract_embedding(rec: EMRERecord, wv: WordVectors) -> np.ndarray:
    """Utterance vector followed by the mean of the relational-descriptor vectors."""
    utt = sentence_vector(rec.tokens, wv)
    if rec.relational_descriptors:
        desc = np.mean([sentence_vector(tokenize(d), wv) for d in rec.relational_descriptors], axis=0)
    else:
        desc = np.zeros(wv.dim)
    return np.concatenate([utt, desc])


# -- formal -----------------------------------------------------------------------

POINT_SLOT = "point"


def formal_witnesses(state: CommonGroundState, act: CommunicativeAct) -> dict[str, L.Proposition]:
    """Formal slots this act switches on, each with the proposition it stands for."""
    if state.clock is not Clock.T2:
        raise SequencingError(f"formal features need the t2 state, got {state.clock.value}")
    a, h = L.AVATAR, L.OBSERVER
    out: dict[str, L.Proposition] = {}
    p = act.speech
    if p is not None:
        for t in p.spatial_relations():
            out[f"sp:{t}"] = L.Knows(a, L.meaning(t))
        for t in p.attributive_terms():
            out[f"att:{t}"] = L.Knows(a, L.meaning(t))
        for np_ in p.relata():
            if np_.resolved_entity is not None:
                out[f"perceives:{np_.resolved_entity}"] = L.Perceives(a, L.entity(np_.resolved_entity))
        if p.other_flag and p.referent is not None and p.competitor is not None:
            b1, b2 = p.referent, p.competitor
            for t in p.attributes:
                out[f"other:att_b1:{t}"] = L.Knows(a, L.attr(t, b1))
                out[f"other:att_b2:{t}"] = L.Knows(a, L.attr(t, b2))
            out["other:distinct"] = L.Knows(a, L.distinct(b1, b2))
        if act.gesture is not None and act.gesture.kind == "Point_g" and "this" in p.surface_tokens:
            out[f"near_far:{state.space.surface}"] = L.Knows(a, L.near_far(state.space.surface))
    if act.gesture is not None and act.gesture.obj is not None:
        b = act.gesture.obj
        out[POINT_SLOT] = L.Knows(h, L.Knows(a, L.And(L.points(b), L.target(b))))
    return out


def formal_descriptor(slot: str) -> FeatureDescriptor:
    dep = Dependence.GESTURAL if slot == POINT_SLOT else Dependence.LINGUISTIC
    return FeatureDescriptor(slot, Group.FORMAL, dep)


def extract_formal(state: CommonGroundState, act: CommunicativeAct, schema: FeatureSchema) -> np.ndarray:
    """One-hot formal segment over the formal descriptors of ``schema``.

    Slots that are not in the schema's dictionary are dropped.
    """
    slots = formal_witnesses(state, act)
    formal = schema.group(Group.FORMAL)
    return np.array([1.0 if d.name in slots else 0.0 for d in formal.descriptors])


# -- assembly ---------------------------------------------------------------------

@dataclass
class Featurizer:
    """Frozen dictionary + statistics fitted in one pass over a dataset."""

    dataset: Dataset
    lexicon: Lexicon | None = None
    wv: WordVectors | None = None
    space: EmbeddingSpace = field(default_factory=EmbeddingSpace)
    embedding_dim: int = EMBEDDING_DIM

    def __post_init__(self) -> None:
        if self.lexicon is None:
            self.lexicon = build_lexicon(self.dataset)
        if self.wv is not None:
            self.embedding_dim = self.wv.dim
        self.stats = RawStats.from_dataset(self.dataset)
        self._traces = {}
        slots: set[str] = set()
        for rec in self.dataset.records:
            tr = self.trace(rec)
            slots |= set(formal_witnesses(tr.final, tr.act))
        descs = self.stats.descriptors() + [formal_descriptor(s) for s in sorted(slots)]
        descs += embedding_descriptors(self.embedding_dim)
        self.schema = FeatureSchema(tuple(sorted(descs, key=lambda d: (GROUP_ORDER.index(d.group), d.name))))

    def trace(self, rec: EMRERecord):
        tr = self._traces.get(rec.video_id)
        if tr is None or tr.record_id != rec.video_id:
            tr = trace_record(rec, self.lexicon, self.space)
            self._traces[rec.video_id] = tr
        return tr

    def segments(self, rec: EMRERecord, groups: Iterable[Group]) -> dict[Group, np.ndarray]:
        groups = set(groups)
        out = {}
        if Group.RAW in groups:
            out[Group.RAW] = _raw_segment(rec, self.stats)
        if Group.FORMAL in groups:
            tr = self.trace(rec)
            out[Group.FORMAL] = extract_formal(tr.final, tr.act, self.schema)
        if Group.EMBEDDING in groups:
            if self.wv is None:
                raise ConfigError("embedding features requested but no word vectors were trained")
            out[Group.EMBEDDING] = extract_embedding(rec, self.wv)
        return out

    def assemble(self, rec: EMRERecord, spec: AblationSpec) -> FeatureVector:
        segs = self.segments(rec, spec.groups)
        full = self.schema
        offsets = full.offsets()
        group_start = {}
        for g in GROUP_ORDER:
            sub = full.group(g)
            if sub.descriptors:
                group_start[g] = offsets[sub.descriptors[0].name].start
        target = full.select(spec.groups, spec.dependence)
        parts = []
        for d in target.descriptors:
            sl = offsets[d.name]
            base = group_start[d.group]
            parts.append(segs[d.group][sl.start - base:sl.stop - base])
        values = np.concatenate(parts) if parts else np.zeros(0)
        return FeatureVector(target, values)

    def records_for(self, subset: ModalitySubset) -> list[EMRERecord]:
        return [r for r in self.dataset.records if subset.includes(r.modality)]

    def matrix(self, spec: AblationSpec, records: Sequence[EMRERecord] | None = None) -> tuple[np.ndarray, FeatureSchema]:
        records = self.records_for(spec.modality_subset) if records is None else records
        schema = self.schema.select(spec.groups, spec.dependence)
        if not records:
            return np.zeros((0, schema.width)), schema
        return np.stack([self.assemble(r, spec).values for r in records]), schema


def assemble(rec: EMRERecord, config: AblationSpec, featurizer: Featurizer) -> FeatureVector:
    return featurizer.assemble(rec, config)


def write_matrix_csv(path: str | Path, ids: Sequence[str], x: np.ndarray, schema: FeatureSchema) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["video_id", *schema.column_names()])
        for vid, row in zip(ids, x):
            w.writerow([vid, *(repr(float(v)) for v in row)])


def write_schema_json(path: str | Path, schema: FeatureSchema) -> None:
    Path(path).write_text(json.dumps(schema.to_json(), indent=2, sort_keys=True), encoding="utf-8")
