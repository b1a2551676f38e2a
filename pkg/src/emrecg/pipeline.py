"""Pipeline stages with content-hash caching and a reproducibility manifest."""

from __future__ import annotations

import hashlib
import json
import logging
import platform
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from . import __version__
from .dataset import Dataset, ColumnMapping, load_dataset, tokenize, validate
from .embeddings import SkipGramConfig, WordVectors, train_skipgram
from .evaluation import (
    QUINTILE_RULES,
    JudgmentDistribution,
    ResultsTable,
    expand_judgments,
    run_ablations,
)
from .features import AblationSpec, ConfigError, Featurizer, Group
from .mlp import HIDDEN, TrainConfig, init_model, save_model, train
from .synthetic import generate_dataset

log = logging.getLogger(__name__)

SYNTHETIC_PREFIX = "synthetic"


@dataclass(frozen=True)
class PipelineConfig:
    data: str | None = None
    mapping: str | None = None
    seed: int = 0
    out: str = "emrecg-out"
    embedding: SkipGramConfig = SkipGramConfig()
    train: TrainConfig = TrainConfig()
    hidden: tuple[int, ...] = HIDDEN
    rule: str = "median"

    def __post_init__(self) -> None:
        if self.rule not in QUINTILE_RULES:
            raise ConfigError(f"unknown quintile rule {self.rule!r}")

    @classmethod
    def from_json(cls, d: Mapping[str, Any]) -> "PipelineConfig":
        known = {"data", "mapping", "seed", "out", "embedding", "train", "hidden", "rule"}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        try:
            emb = SkipGramConfig(**d.get("embedding", {}))
            tr = TrainConfig(**d.get("train", {}))
        except TypeError as e:
            raise ConfigError(f"bad config section: {e}") from None
        return cls(d.get("data"), d.get("mapping"), int(d.get("seed", 0)), d.get("out", "emrecg-out"),
                   emb, tr, tuple(d.get("hidden", HIDDEN)), d.get("rule", "median"))

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        try:
            return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e})") from None

    def to_json(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    def with_seed(self, seed: int) -> "PipelineConfig":
        return replace(self, seed=seed, embedding=replace(self.embedding, seed=seed),
                       train=replace(self.train, seed=seed))


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def content_key(*parts: Any) -> str:
    blob = json.dumps(parts, sort_keys=True, default=str).encode()
    return sha256_bytes(blob)[:16]


class Pipeline:
    """Stages share one output directory; expensive artifacts live under ``cache/``."""

    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        self.out = Path(cfg.out)
        self._dataset: Dataset | None = None
        self._wv: WordVectors | None = None
        self._featurizer: Featurizer | None = None
        self.inputs: dict[str, str] = {}
        self.artifacts: dict[str, str] = {}

    # -- inputs ---------------------------------------------------------------

    def _check_paths(self) -> None:
        if self.cfg.data is None:
            raise ConfigError("no dataset given (use --data PATH or --data synthetic:N)")
        if not self.cfg.data.startswith(SYNTHETIC_PREFIX) and not Path(self.cfg.data).is_file():
            raise ConfigError(f"dataset not found: {self.cfg.data}")
        if self.cfg.mapping is not None and not Path(self.cfg.mapping).is_file():
            raise ConfigError(f"column mapping not found: {self.cfg.mapping}")

    def data_key(self) -> str:
        self._check_paths()
        if self.cfg.data.startswith(SYNTHETIC_PREFIX):
            h = sha256_bytes(self.cfg.data.encode())
        else:
            h = sha256_file(self.cfg.data)
        self.inputs[self.cfg.data] = h
        if self.cfg.mapping:
            mh = sha256_file(self.cfg.mapping)
            self.inputs[self.cfg.mapping] = mh
            h = sha256_bytes((h + mh).encode())
        return h

    def dataset(self) -> Dataset:
        if self._dataset is None:
            self._check_paths()
            spec = self.cfg.data
            if spec.startswith(SYNTHETIC_PREFIX):
                _, _, n = spec.partition(":")
                try:
                    count = int(n) if n else 200
                except ValueError:
                    raise ConfigError(f"bad synthetic dataset size in {spec!r}") from None
                self._dataset = generate_dataset(count, self.cfg.seed)
            else:
                mapping = ColumnMapping.from_json(self.cfg.mapping) if self.cfg.mapping else None
                self._dataset = load_dataset(spec, mapping=mapping)
            self.data_key()
        return self._dataset

    # -- stages ---------------------------------------------------------------

    def _cache(self, name: str) -> Path:
        p = self.out / "cache" / name
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def word_vectors(self) -> WordVectors:
        if self._wv is None:
            ds = self.dataset()
            key = content_key(self.data_key(), asdict(self.cfg.embedding))
            path = self._cache(f"wordvectors-{key}.json")
            if path.is_file():
                log.info("using cached word vectors %s", path)
                self._wv = WordVectors.load(path)
            else:
                self._wv = train_skipgram(embedding_corpus(ds), self.cfg.embedding)
                self._wv.save(path)
            self._record(path)
        return self._wv

    def featurizer(self, need_embeddings: bool = True) -> Featurizer:
        if self._featurizer is None or (need_embeddings and self._featurizer.wv is None):
            wv = self.word_vectors() if need_embeddings else None
            self._featurizer = Featurizer(self.dataset(), wv=wv)
        return self._featurizer

    def ablate(self, specs: Sequence[AblationSpec], name: str) -> ResultsTable:
        needs_se = any(Group.EMBEDDING in s.groups for s in specs)
        key = content_key(self.data_key(), self.cfg.to_json(), [s.to_json() for s in specs],
                          asdict(self.cfg.embedding) if needs_se else None)
        path = self._cache(f"results-{key}.json")
        if path.is_file():
            log.info("using cached results %s", path)
            table = ResultsTable.load(path)
        else:
            table = run_ablations(self.featurizer(needs_se), specs, self.cfg.train, self.cfg.seed,
                                  self.cfg.hidden, self.cfg.rule, progress=log.info)
            table.save(path)
        self._record(path)
        out_json = self.out / f"{name}.json"
        out_csv = self.out / f"{name}.csv"
        table.save(out_json)
        out_csv.write_text(table.to_csv(), encoding="utf-8")
        self._record(out_json)
        self._record(out_csv)
        return table

    def train_full(self, spec: AblationSpec) -> tuple[Path, list[float]]:
        """Fit one model on every judgment of the selected videos."""
        fz = self.featurizer(Group.EMBEDDING in spec.groups)
        recs = fz.records_for(spec.modality_subset)
        x, schema = fz.matrix(spec, recs)
        if schema.width == 0:
            raise ConfigError("the selected feature configuration has no columns")
        xt, yt = expand_judgments(x, [JudgmentDistribution.from_scores(r.scores) for r in recs])
        model = init_model(schema.width, self.cfg.seed, self.cfg.hidden)
        history = train(model, xt, yt, self.cfg.train)
        path = self.out / "model.emlp"
        self.out.mkdir(parents=True, exist_ok=True)
        save_model(model, path)
        (self.out / "loss_history.json").write_text(json.dumps(history), encoding="utf-8")
        (self.out / "model_schema.json").write_text(json.dumps(schema.to_json(), indent=2), encoding="utf-8")
        for p in ("model.emlp", "loss_history.json", "model_schema.json"):
            self._record(self.out / p)
        return path, history

    # -- manifest -------------------------------------------------------------

    def _record(self, path: Path) -> None:
        if path.is_file():
            self.artifacts[str(path.relative_to(self.out))] = sha256_file(path)

    def record(self, path: str | Path) -> None:
        self._record(Path(path))

    def write_manifest(self, command: str, argv: Sequence[str], extra: Mapping[str, Any] | None = None) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        manifest = {
            "command": command,
            "argv": list(argv),
            "config": self.cfg.to_json(),
            "seed": self.cfg.seed,
            "inputs": dict(sorted(self.inputs.items())),
            "artifacts": dict(sorted(self.artifacts.items())),
            "versions": {
                "emrecg": __version__,
                "python": platform.python_version(),
                "numpy": np.__version__,
            },
        }
        if extra:
            manifest.update(extra)
        path = self.out / "manifest.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")
        return path


def embedding_corpus(ds: Dataset) -> list[list[str]]:
    """Utterances plus relational descriptors, tokenized; empty sentences dropped."""
    sents = [r.tokens for r in ds.records]
    sents += [tokenize(d) for r in ds.records for d in r.relational_descriptors]
    return [s for s in sents if s]


def dataset_summary(ds: Dataset) -> dict:
    report = validate(ds)
    by_mod: dict[str, int] = {}
    for r in ds.records:
        by_mod[r.modality.value] = by_mod.get(r.modality.value, 0) + 1
    return {
        "records": len(ds),
        "modalities": dict(sorted(by_mod.items())),
        "object_inventory": sorted(ds.object_inventory),
        "term_vocabulary": sorted(ds.term_vocabulary),
        "violations": [str(v) for v in report],
    }


__all__ = [
    "Pipeline", "PipelineConfig", "content_key", "dataset_summary", "embedding_corpus",
    "sha256_file",
]
