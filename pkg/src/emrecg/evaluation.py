"""Quintile scoring, video-grouped 7-fold cross-validation and ablation tables."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .dataset import EMRERecord
from .features import AblationSpec, ConfigError, Featurizer, ModalitySubset
from .mlp import HIDDEN, N_CLASSES, TrainConfig, init_model, train

log = logging.getLogger(__name__)

N_FOLDS = 7
SCORES = (1, 2, 3, 4, 5)


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class JudgmentDistribution:
    """Counts of annotator scores 1..5."""

    counts: tuple[int, ...]

    def __post_init__(self) -> None:
        counts = tuple(int(c) for c in self.counts)
        if len(counts) != 5 or any(c < 0 for c in counts):
            raise EvaluationError(f"need 5 non-negative counts, got {self.counts}")
        object.__setattr__(self, "counts", counts)

    @classmethod
    def from_scores(cls, scores: Sequence[int]) -> "JudgmentDistribution":
        counts = [0] * 5
        for s in scores:
            if s not in SCORES:
                raise EvaluationError(f"score {s} outside 1..5")
            counts[s - 1] += 1
        return cls(tuple(counts))

    @property
    def total(self) -> int:
        return sum(self.counts)

    def cdf(self) -> list[float]:
        n, acc, out = self.total, 0, []
        for c in self.counts:
            acc += c
            out.append(acc / n)
        return out

    def samples(self) -> list[int]:
        """Class indices 0..4, one per judgment."""
        return [i for i, c in enumerate(self.counts) for _ in range(c)]


def _median_label(dist: JudgmentDistribution, strict: bool) -> int:
    # smallest score whose cumulative count passes half of the judgments
    n, acc = dist.total, 0
    for s, c in zip(SCORES, dist.counts):
        acc += c
        if (2 * acc > n) if strict else (2 * acc >= n):
            return s
    raise AssertionError("unreachable")


def _argmax_label(dist: JudgmentDistribution) -> int:
    return SCORES[int(np.argmax(dist.counts))]


def _top2_labels(dist: JudgmentDistribution) -> set[int]:
    order = sorted(range(5), key=lambda i: (-dist.counts[i], i))
    return {SCORES[i] for i in order[:2] if dist.counts[i] > 0}


QUINTILE_RULES = ("median", "lower_median", "argmax", "top2")


def quintile_correct(predicted: int, dist: JudgmentDistribution, rule: str = "median") -> bool:
    """Whether ``predicted`` falls in the correct fifth of the 1..5 scale.

    ``median`` takes the smallest score s with F(s) > 1/2; ``lower_median``
    uses F(s) >= 1/2; ``argmax`` is the mode (lowest on ties); ``top2``
    accepts either of the two most frequent scores.
    """
    if dist.total == 0:
        raise EvaluationError("empty judgment distribution")
    if predicted not in SCORES:
        raise EvaluationError(f"prediction {predicted} outside 1..5")
    if rule == "median":
        return predicted == _median_label(dist, strict=True)
    if rule == "lower_median":
        return predicted == _median_label(dist, strict=False)
    if rule == "argmax":
        return predicted == _argmax_label(dist)
    if rule == "top2":
        return predicted in _top2_labels(dist)
    raise EvaluationError(f"unknown quintile rule {rule!r}; choose from {QUINTILE_RULES}")


def assign_folds(n_videos: int, seed: int, k: int = N_FOLDS) -> list[np.ndarray]:
    """Seeded permutation of video indices split into k near-equal folds."""
    if n_videos < k:
        raise EvaluationError(f"need at least {k} videos for {k}-fold cross-validation, got {n_videos}")
    perm = np.random.default_rng(seed).permutation(n_videos)
    return [np.sort(f) for f in np.array_split(perm, k)]


def expand_judgments(x: np.ndarray, dists: Sequence[JudgmentDistribution]) -> tuple[np.ndarray, np.ndarray]:
    """One training row per judgment, with a one-hot target."""
    rows, targets = [], []
    for i, d in enumerate(dists):
        for cls in d.samples():
            rows.append(i)
            t = np.zeros(N_CLASSES)
            t[cls] = 1.0
            targets.append(t)
    return x[rows], np.asarray(targets).reshape(-1, N_CLASSES)


@dataclass(frozen=True)
class FoldResult:
    fold: int
    accuracy: float
    n_test: int
    loss_history: tuple[float, ...]


@dataclass(frozen=True)
class CVResult:
    mean: float
    std: float
    folds: tuple[FoldResult, ...]

    @property
    def accuracies(self) -> list[float]:
        return [f.accuracy for f in self.folds]


def _run_fold(
    i: int,
    x: np.ndarray,
    dists: Sequence[JudgmentDistribution],
    test_idx: np.ndarray,
    cfg: TrainConfig,
    fold_seed: int,
    hidden: Sequence[int],
    rule: str,
) -> FoldResult:
    test = set(test_idx.tolist())
    train_idx = np.array([j for j in range(len(x)) if j not in test], dtype=int)
    xt, yt = expand_judgments(x[train_idx], [dists[j] for j in train_idx])
    model = init_model(x.shape[1], seed=fold_seed, hidden=hidden)
    fold_cfg = TrainConfig(cfg.epochs, cfg.batch_size, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps,
                           fold_seed, cfg.shuffle)
    history = train(model, xt, yt, fold_cfg)
    # all judgments of a video share its features, so the mean softmax is the row's softmax
    probs = model.forward(x[test_idx])
    preds = np.argmax(probs, axis=1) + 1
    hits = sum(quintile_correct(int(p), dists[j], rule) for p, j in zip(preds, test_idx))
    return FoldResult(i, hits / len(test_idx), len(test_idx), tuple(history))


def fold_seeds(seed: int, k: int = N_FOLDS) -> list[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(k)]


def crossvalidate(
    x: np.ndarray,
    dists: Sequence[JudgmentDistribution],
    cfg: TrainConfig = TrainConfig(),
    seed: int = 0,
    hidden: Sequence[int] = HIDDEN,
    rule: str = "median",
    k: int = N_FOLDS,
) -> CVResult:
    """Video-grouped k-fold CV; returns mean, population sigma and per-fold results."""
    x = np.asarray(x, dtype=np.float64)
    if len(x) != len(dists):
        raise EvaluationError("features and judgment distributions differ in length")
    if x.ndim != 2 or x.shape[1] == 0:
        raise ConfigError("the selected feature configuration has no columns")
    folds = assign_folds(len(x), seed, k)
    seeds = fold_seeds(seed, k)
    results = [_run_fold(i, x, dists, f, cfg, s, hidden, rule) for i, (f, s) in enumerate(zip(folds, seeds))]
    results.sort(key=lambda r: r.fold)
    acc = np.array([r.accuracy for r in results])
    return CVResult(float(acc.mean()), float(acc.std()), tuple(results))


# -- ablation tables ------------------------------------------------------------

def _spec(groups: set[str], subset: str = "all", dep: str = "all") -> AblationSpec:
    return AblationSpec(frozenset(groups), ModalitySubset(subset), dep)


def _table(subset: str, dep: str) -> list[AblationSpec]:
    return [
        _spec({"raw"}, subset, dep),
        _spec({"raw", "embedding"}, subset, dep),
        _spec({"raw", "formal"}, subset, dep),
        _spec({"raw", "formal", "embedding"}, subset, dep),
        _spec({"formal"}, subset, dep),
    ]


TABLE_PRESETS: dict[int, list[AblationSpec]] = {
    1: _table("all", "all"),
    2: _table("language_only", "linguistic_only"),
    3: _table("ensemble_only", "all"),
}

TABLE_TITLES = {
    1: "All referring expressions",
    2: "Language-only expressions, linguistic features",
    3: "Ensemble expressions",
}


@dataclass(frozen=True)
class ResultRow:
    spec: AblationSpec
    mean: float
    std: float
    folds: tuple[float, ...]
    seed: int
    n_videos: int
    n_features: int

    @property
    def label(self) -> str:
        return self.spec.label

    def to_json(self) -> dict:
        return {
            "spec": self.spec.to_json(),
            "label": self.label,
            "mean": self.mean,
            "std": self.std,
            "folds": list(self.folds),
            "seed": self.seed,
            "n_videos": self.n_videos,
            "n_features": self.n_features,
        }

    @classmethod
    def from_json(cls, d: Mapping) -> "ResultRow":
        return cls(AblationSpec.from_json(d["spec"]), float(d["mean"]), float(d["std"]),
                   tuple(float(v) for v in d["folds"]), int(d["seed"]), int(d["n_videos"]),
                   int(d["n_features"]))


@dataclass(frozen=True)
class ResultsTable:
    rows: tuple[ResultRow, ...] = ()
    config: Mapping[str, object] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.rows)

    def find(self, groups: set[str], subset: str = "all", dep: str = "all") -> ResultRow | None:
        return self.find_spec(_spec(groups, subset, dep))

    def find_spec(self, want: AblationSpec) -> ResultRow | None:
        for r in self.rows:
            if r.spec == want:
                return r
        return None

    def to_json(self) -> dict:
        return {"config": dict(self.config), "rows": [r.to_json() for r in self.rows]}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, d: Mapping) -> "ResultsTable":
        return cls(tuple(ResultRow.from_json(r) for r in d["rows"]), d.get("config", {}))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "ResultsTable":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["label", "groups", "modality_subset", "dependence", "mean", "std", "seed",
                    "n_videos", "n_features", *(f"fold{i}" for i in range(N_FOLDS))])
        for r in self.rows:
            s = r.spec.to_json()
            w.writerow([r.label, "+".join(s["groups"]), s["modality_subset"], s["dependence"],
                        f"{r.mean:.6f}", f"{r.std:.6f}", r.seed, r.n_videos, r.n_features,
                        *(f"{a:.6f}" for a in r.folds)])
        return buf.getvalue()


def train_config_from_json(d: Mapping) -> TrainConfig:
    return TrainConfig(**{k: d[k] for k in asdict(TrainConfig()) if k in d})


def _records_and_dists(featurizer: Featurizer, spec: AblationSpec) -> tuple[list[EMRERecord], list[JudgmentDistribution]]:
    recs = featurizer.records_for(spec.modality_subset)
    return recs, [JudgmentDistribution.from_scores(r.scores) for r in recs]


def run_ablations(
    featurizer: Featurizer,
    specs: Sequence[AblationSpec],
    cfg: TrainConfig = TrainConfig(),
    seed: int = 0,
    hidden: Sequence[int] = HIDDEN,
    rule: str = "median",
    progress: Callable[[str], None] | None = None,
) -> ResultsTable:
    config = {"train": asdict(cfg), "seed": seed, "hidden": list(hidden), "rule": rule, "folds": N_FOLDS}
    rows = []
    for spec in specs:
        recs, dists = _records_and_dists(featurizer, spec)
        x, schema = featurizer.matrix(spec, recs)
        if progress:
            progress(f"{spec.label} [{spec.modality_subset.value}/{spec.dependence}]: "
                     f"{len(recs)} videos x {schema.width} features")
        res = crossvalidate(x, dists, cfg, seed, hidden, rule)
        rows.append(ResultRow(spec, res.mean, res.std, tuple(res.accuracies), seed, len(recs), schema.width))
    return ResultsTable(tuple(rows), config)


def replay(table: ResultsTable, featurizer: Featurizer) -> ResultsTable:
    """Re-run every row with its recorded seed and configuration."""
    c = table.config
    cfg = train_config_from_json(c.get("train", {}))
    hidden = tuple(c.get("hidden", HIDDEN))
    rule = c.get("rule", "median")
    rows = []
    for row in table.rows:
        rows.append(run_ablations(featurizer, [row.spec], cfg, row.seed, hidden, rule).rows[0])
    return ResultsTable(tuple(rows), dict(c))


# -- reporting ------------------------------------------------------------------

def ordering_checks(table: ResultsTable) -> dict[str, bool | None]:
    """Qualitative claims about feature groups; None where a needed row is absent."""

    def m(groups: set[str], subset: str = "all", dep: str = "all") -> float | None:
        r = table.find(groups, subset, dep)
        return None if r is None else r.mean

    def cmp(a: float | None, b: float | None, op: Callable[[float, float], bool]) -> bool | None:
        return None if a is None or b is None else op(a, b)

    out: dict[str, bool | None] = {}
    out["a: formal only > raw (all)"] = cmp(m({"formal"}), m({"raw"}), lambda a, b: a > b)
    b1 = cmp(m({"raw", "embedding"}), m({"raw"}), lambda a, b: a <= b)
    b2 = cmp(m({"raw", "formal", "embedding"}), m({"raw", "formal"}), lambda a, b: a <= b)
    out["b: adding SE does not help (all)"] = None if b1 is None or b2 is None else (b1 and b2)
    t2 = [table.find_spec(s) for s in TABLE_PRESETS[2]]
    key = "c1: formal only is the best language-only cell"
    out[key] = None if any(r is None for r in t2) else t2[-1].mean == max(r.mean for r in t2)
    out["c2: formal only > raw (ensemble)"] = cmp(m({"formal"}, "ensemble_only"), m({"raw"}, "ensemble_only"),
                                                  lambda a, b: a > b)
    return out


@dataclass(frozen=True)
class Report:
    text: str
    csv: str
    checks: Mapping[str, bool | None]


def report(table: ResultsTable) -> Report:
    if not table.rows:
        raise EvaluationError("nothing to report: the results table is empty")
    head = ("configuration", "subset", "features", "mean acc", "sd acc", "videos")
    body = []
    for r in table.rows:
        # recompute from the folds rather than trusting stored aggregates
        acc = np.array(r.folds)
        body.append((r.label, r.spec.modality_subset.value, r.spec.dependence,
                     f"{acc.mean():.4f}", f"{acc.std():.4f}", str(r.n_videos)))
    widths = [max(len(h), *(len(row[i]) for row in body)) for i, h in enumerate(head)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(head, widths)),
             "  ".join("-" * w for w in widths)]
    lines += ["  ".join(c.ljust(w) for c, w in zip(row, widths)) for row in body]
    checks = ordering_checks(table)
    known = {k: v for k, v in checks.items() if v is not None}
    if known:
        lines.append("")
        lines += [f"[{'ok' if v else 'FAIL'}] {k}" for k, v in known.items()]
    return Report("\n".join(lines) + "\n", table.to_csv(), checks)


def recompute_ok(row: ResultRow) -> bool:
    acc = np.array(row.folds)
    return len(row.folds) == N_FOLDS and math.isclose(float(acc.mean()), row.mean, rel_tol=0, abs_tol=1e-12) \
        and math.isclose(float(acc.std()), row.std, rel_tol=0, abs_tol=1e-12)


__all__ = [
    "CVResult", "EvaluationError", "FoldResult", "JudgmentDistribution", "QUINTILE_RULES", "Report",
    "ResultRow", "ResultsTable", "TABLE_PRESETS", "TABLE_TITLES", "assign_folds", "crossvalidate",
    "expand_judgments", "fold_seeds", "ordering_checks", "quintile_correct", "recompute_ok", "replay",
    "report", "run_ablations",
]
