"""Load EMRE records from flat CSV/TSV exports of the annotation database."""

from __future__ import annotations

import csv
import enum
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

N_ANNOTATORS = 8
SCORE_RANGE = (1, 5)

_TOKEN_RE = re.compile(r"[a-z0-9]+(?:'[a-z]+)?")


def tokenize(text: str) -> list[str]:
    """Lowercase word tokens; underscores split words (``in_front`` -> in, front)."""
    return _TOKEN_RE.findall(text.lower().replace("_", " "))


class DatasetError(Exception):
    pass


class SchemaError(DatasetError):
    pass


class ValidationError(DatasetError):
    def __init__(self, message: str, record_id: str | None = None):
        super().__init__(f"{record_id}: {message}" if record_id else message)
        self.record_id = record_id


class Modality(str, enum.Enum):
    GESTURE = "gesture"
    LANGUAGE = "language"
    ENSEMBLE = "ensemble"


class DistinctionScope(str, enum.Enum):
    SIMILAR_OBJECTS = "similar_objects"
    ENTIRE_WORLD = "entire_world"
    NOT_APPLICABLE = "not_applicable"


@dataclass(frozen=True)
class EMRERecord:
    video_id: str
    target_object: str
    modality: Modality
    agent_distance: float
    uses_distance_distinction: bool
    distinction_scope: DistinctionScope
    utterance: str
    relational_descriptors: tuple[str, ...]
    object_coordinates: Mapping[str, tuple[float, float, float]]
    relation_set: tuple[tuple[str, str, str], ...]
    scores: tuple[int, ...]

    @property
    def tokens(self) -> list[str]:
        return tokenize(self.utterance)

    def labels(self) -> set[str]:
        out = {self.target_object, *self.object_coordinates}
        for _, a, b in self.relation_set:
            out.update((a, b))
        return out


@dataclass(frozen=True)
class Dataset:
    records: tuple[EMRERecord, ...]
    object_inventory: frozenset[str]
    term_vocabulary: frozenset[str]

    @classmethod
    def from_records(cls, records: Iterable[EMRERecord]) -> "Dataset":
        records = tuple(records)
        inventory: set[str] = set()
        vocab: set[str] = set()
        for r in records:
            inventory |= r.labels()
            vocab.update(r.tokens)
        return cls(records, frozenset(inventory), frozenset(vocab))

    def __len__(self) -> int:
        return len(self.records)

    def by_id(self, video_id: str) -> EMRERecord:
        for r in self.records:
            if r.video_id == video_id:
                return r
        raise KeyError(f"no record with video_id {video_id!r}")


@dataclass(frozen=True)
class Violation:
    record_id: str
    message: str

    def __str__(self) -> str:
        return f"{self.record_id}: {self.message}"


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    def __bool__(self) -> bool:
        return bool(self.violations)

    def __len__(self) -> int:
        return len(self.violations)

    def __iter__(self):
        return iter(self.violations)


def validate(ds: Dataset) -> ValidationReport:
    report = ValidationReport()

    def bad(rid: str, msg: str) -> None:
        report.violations.append(Violation(rid, msg))

    lo, hi = SCORE_RANGE
    for r in ds.records:
        rid = r.video_id
        if r.modality is Modality.GESTURE and r.utterance.strip():
            bad(rid, "gesture-only record has a non-empty utterance")
        if (r.distinction_scope is DistinctionScope.NOT_APPLICABLE) == bool(r.uses_distance_distinction):
            bad(rid, "distinction_scope must be not_applicable exactly when no distance distinction is used")
        if len(r.scores) != N_ANNOTATORS:
            bad(rid, f"expected {N_ANNOTATORS} scores, got {len(r.scores)}")
        out_of_range = [s for s in r.scores if not lo <= s <= hi]
        if out_of_range:
            bad(rid, f"scores outside {lo}..{hi}: {out_of_range}")
        if r.target_object not in r.object_coordinates:
            bad(rid, f"target {r.target_object!r} has no coordinates")
        if not math.isfinite(r.agent_distance):
            bad(rid, "agent_distance is not finite")
        missing = r.labels() - ds.object_inventory
        if missing:
            bad(rid, f"labels missing from object inventory: {sorted(missing)}")
        oov = set(r.tokens) - ds.term_vocabulary
        if oov:
            bad(rid, f"utterance tokens missing from vocabulary: {sorted(oov)}")
    return report


# -- column mapping -------------------------------------------------------------

FIELDS = (
    "video_id",
    "target_object",
    "modality",
    "agent_distance",
    "uses_distance_distinction",
    "distinction_scope",
    "utterance",
    "relational_descriptors",
    "object_coordinates",
    "relation_set",
    "scores",
)


@dataclass(frozen=True)
class ColumnMapping:
    """Maps record fields to export columns.

    ``scores`` may map to a single delimited column or to a list of
    ``N_ANNOTATORS`` columns. ``value_aliases`` rewrites raw enum cells,
    e.g. ``{"modality": {"Gestural": "gesture"}}``.
    """

    columns: Mapping[str, str | Sequence[str]] = field(default_factory=lambda: {f: f for f in FIELDS})
    list_delimiter: str = ";"
    value_aliases: Mapping[str, Mapping[str, str]] = field(default_factory=dict)

    @classmethod
    def from_json(cls, path: str | Path) -> "ColumnMapping":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        cols = {f: f for f in FIELDS}
        cols.update(raw.get("columns", {}))
        unknown = set(cols) - set(FIELDS)
        if unknown:
            raise SchemaError(f"column mapping names unknown fields: {sorted(unknown)}")
        return cls(cols, raw.get("list_delimiter", ";"), raw.get("value_aliases", {}))

    def to_json(self) -> dict:
        return {
            "columns": {k: (list(v) if not isinstance(v, str) else v) for k, v in self.columns.items()},
            "list_delimiter": self.list_delimiter,
            "value_aliases": {k: dict(v) for k, v in self.value_aliases.items()},
        }

    def required_columns(self) -> list[tuple[str, str]]:
        out = []
        for f in FIELDS:
            col = self.columns.get(f, f)
            for c in ([col] if isinstance(col, str) else col):
                out.append((f, c))
        return out


_TRUE = {"1", "true", "t", "yes", "y"}
_FALSE = {"0", "false", "f", "no", "n", ""}
_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_VEC_RE = re.compile(rf"^\s*[(<\[]?\s*({_NUM})\s*[,; ]\s*({_NUM})\s*[,; ]\s*({_NUM})\s*[)>\]]?\s*$")
_REL_RE = re.compile(r"^\s*([A-Za-z_][\w ]*?)\s*\(\s*([^,()]+?)\s*,\s*([^,()]+?)\s*\)\s*$")


def parse_vector(text: str) -> tuple[float, float, float]:
    if isinstance(text, (list, tuple)):
        if len(text) != 3:
            raise ValueError(f"expected 3 components, got {text!r}")
        return tuple(float(v) for v in text)
    m = _VEC_RE.match(text)
    if not m:
        raise ValueError(f"unparseable 3-vector {text!r}")
    return tuple(float(g) for g in m.groups())


def parse_coordinates(cell: str, delimiter: str = ";") -> dict[str, tuple[float, float, float]]:
    """``Cup:(0.1,0.8,0.2);Knife:(...)`` or a JSON object of label -> [x, y, z]."""
    cell = cell.strip()
    if not cell:
        return {}
    if cell.startswith("{"):
        raw = json.loads(cell)
        return {str(k): parse_vector(v) for k, v in raw.items()}
    out = {}
    for part in _split_top(cell, delimiter):
        label, sep, vec = part.partition(":")
        if not sep:
            raise ValueError(f"coordinate entry {part!r} lacks 'label:' prefix")
        out[label.strip()] = parse_vector(vec)
    return out


def parse_relations(cell: str, delimiter: str = ";") -> tuple[tuple[str, str, str], ...]:
    """``left(Cup,Knife);on(Cup,Table)`` or a JSON list of triples."""
    cell = cell.strip()
    if not cell:
        return ()
    if cell.startswith("["):
        return tuple(tuple(str(x) for x in t) for t in json.loads(cell))
    out = []
    for part in _split_top(cell, delimiter):
        m = _REL_RE.match(part)
        if not m:
            raise ValueError(f"unparseable relation {part!r}")
        out.append((m.group(1).strip(), m.group(2).strip(), m.group(3).strip()))
    return tuple(out)


def _split_top(cell: str, delimiter: str) -> list[str]:
    """Split on ``delimiter`` outside brackets, so vectors may use it internally."""
    parts, depth, cur = [], 0, []
    for ch in cell:
        if ch in "([<":
            depth += 1
        elif ch in ")]>":
            depth -= 1
        if ch == delimiter and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    parts.append("".join(cur))
    return [p.strip() for p in parts if p.strip()]


def _enum(cls, raw: str, aliases: Mapping[str, str], rid: str, name: str):
    value = aliases.get(raw, raw).strip().lower().replace(" ", "_").replace("-", "_")
    if cls is DistinctionScope and value in ("n/a", "na", "none", ""):
        value = "not_applicable"
    try:
        return cls(value)
    except ValueError:
        raise ValidationError(f"bad {name} value {raw!r}", rid) from None


def _row_to_record(row: Mapping[str, str], mapping: ColumnMapping, rownum: int) -> EMRERecord:
    cols = mapping.columns
    delim = mapping.list_delimiter
    aliases = mapping.value_aliases

    def cell(f: str) -> str:
        return row[cols.get(f, f)] or ""

    rid = cell("video_id").strip() or f"row{rownum}"

    score_col = cols.get("scores", "scores")
    if isinstance(score_col, str):
        raw_scores = [s for s in re.split(rf"[{re.escape(delim)},\s]+", row[score_col] or "") if s]
    else:
        raw_scores = [row[c] for c in score_col if (row[c] or "").strip()]
    try:
        scores = tuple(int(float(s)) for s in raw_scores)
    except ValueError:
        raise ValidationError(f"non-numeric score in {raw_scores}", rid) from None
    if len(scores) != N_ANNOTATORS:
        raise ValidationError(f"expected {N_ANNOTATORS} scores, got {len(scores)}", rid)
    lo, hi = SCORE_RANGE
    for s in scores:
        if not lo <= s <= hi:
            raise ValidationError(f"score {s} outside {lo}..{hi}", rid)

    try:
        coords = parse_coordinates(cell("object_coordinates"), delim)
    except (ValueError, json.JSONDecodeError) as e:
        raise ValidationError(f"bad object_coordinates: {e}", rid) from None
    try:
        relations = parse_relations(cell("relation_set"), delim)
    except (ValueError, json.JSONDecodeError) as e:
        raise ValidationError(f"bad relation_set: {e}", rid) from None
    try:
        distance = float(cell("agent_distance"))
    except ValueError:
        raise ValidationError(f"bad agent_distance {cell('agent_distance')!r}", rid) from None

    uses = cell("uses_distance_distinction").strip().lower()
    if uses in _TRUE:
        uses_dd = True
    elif uses in _FALSE:
        uses_dd = False
    else:
        raise ValidationError(f"bad uses_distance_distinction {uses!r}", rid)

    return EMRERecord(
        video_id=rid,
        target_object=aliases.get("target_object", {}).get(cell("target_object"), cell("target_object")).strip(),
        modality=_enum(Modality, cell("modality"), aliases.get("modality", {}), rid, "modality"),
        agent_distance=distance,
        uses_distance_distinction=uses_dd,
        distinction_scope=_enum(
            DistinctionScope, cell("distinction_scope"), aliases.get("distinction_scope", {}), rid, "distinction_scope"
        ),
        utterance=cell("utterance").strip(),
        relational_descriptors=tuple(d.strip() for d in cell("relational_descriptors").split(delim) if d.strip()),
        object_coordinates=coords,
        relation_set=relations,
        scores=scores,
    )


def load_dataset(
    path: str | Path,
    format: str | None = None,
    mapping: ColumnMapping | None = None,
) -> Dataset:
    """Read a CSV/TSV export into a validated :class:`Dataset`.

    Raises :class:`SchemaError` for a missing column and
    :class:`ValidationError` (carrying the record id) for bad cells or any
    record-level invariant violation.
    """
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".") or "csv").lower()
    if fmt not in ("csv", "tsv"):
        raise SchemaError(f"unsupported format {fmt!r}")
    mapping = mapping or ColumnMapping()
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh, delimiter="\t" if fmt == "tsv" else ",")
        header = reader.fieldnames or []
        for fname, col in mapping.required_columns():
            if col not in header:
                raise SchemaError(f"missing column {col!r} (field {fname})")
        records = [_row_to_record(row, mapping, i) for i, row in enumerate(reader, start=1)]
    ds = Dataset.from_records(records)
    report = validate(ds)
    if report:
        v = report.violations[0]
        raise ValidationError(v.message, v.record_id)
    return ds


def _format_vec(v: Sequence[float]) -> str:
    return "(" + ",".join(repr(float(x)) for x in v) + ")"


def write_dataset(ds: Dataset | Iterable[EMRERecord], path: str | Path, format: str | None = None) -> None:
    """Write records in the default column layout (the inverse of ``load_dataset``)."""
    path = Path(path)
    records = ds.records if isinstance(ds, Dataset) else tuple(ds)
    fmt = (format or path.suffix.lstrip(".") or "csv").lower()
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter="\t" if fmt == "tsv" else ",", lineterminator="\n")
        w.writerow(FIELDS)
        for r in records:
            w.writerow([
                r.video_id,
                r.target_object,
                r.modality.value,
                repr(float(r.agent_distance)),
                "true" if r.uses_distance_distinction else "false",
                r.distinction_scope.value,
                r.utterance,
                ";".join(r.relational_descriptors),
                ";".join(f"{k}:{_format_vec(v)}" for k, v in r.object_coordinates.items()),
                ";".join(f"{rel}({a},{b})" for rel, a, b in r.relation_set),
                ";".join(str(s) for s in r.scores),
            ])
