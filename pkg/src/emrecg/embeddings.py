"""Skip-Gram with negative sampling, and mean-composed sentence vectors."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

log = logging.getLogger(__name__)

FORMAT = "emrecg-wordvectors"
VERSION = 1


class EmbeddingError(Exception):
    pass


class OutOfVocabularyError(EmbeddingError, LookupError):
    pass


@dataclass(frozen=True)
class SkipGramConfig:
    dim: int = 200
    window: int = 2
    negatives: int = 5
    epochs: int = 100
    lr: float = 0.025
    min_lr: float = 1e-4
    seed: int = 0


@dataclass(frozen=True)
class WordVectors:
    dim: int
    table: Mapping[str, np.ndarray]
    training_meta: Mapping[str, object] = field(default_factory=dict)

    def __getitem__(self, token: str) -> np.ndarray:
        try:
            return self.table[token]
        except KeyError:
            raise OutOfVocabularyError(f"token {token!r} not in vocabulary") from None

    def __contains__(self, token: str) -> bool:
        return token in self.table

    @property
    def vocabulary(self) -> frozenset[str]:
        return frozenset(self.table)

    def save(self, path: str | Path) -> None:
        payload = {
            "format": FORMAT,
            "version": VERSION,
            "dim": self.dim,
            "training_meta": dict(self.training_meta),
            "vectors": {t: self.table[t].tolist() for t in sorted(self.table)},
        }
        Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "WordVectors":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        if payload.get("format") != FORMAT or payload.get("version") != VERSION:
            raise EmbeddingError(f"{path}: not a version-{VERSION} word-vector file")
        dim = int(payload["dim"])
        table = {t: np.asarray(v, dtype=np.float64) for t, v in payload["vectors"].items()}
        return cls(dim, table, payload.get("training_meta", {}))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def sgns_step(
    w_in: np.ndarray,
    w_out: np.ndarray,
    centers: np.ndarray,
    contexts: np.ndarray,
    negatives: np.ndarray,
    lr: float,
) -> float:
    """One SGD step on a batch of (center, context, negatives); updates in place.

    Returns the summed loss of the batch before the update:
    ``-log s(v.u_o) - sum_k log s(-v.u_k)``.
    """
    v = w_in[centers]                       # (P, d)
    u_pos = w_out[contexts]                 # (P, d)
    u_neg = w_out[negatives]                # (P, K, d)
    pos = np.einsum("pd,pd->p", v, u_pos)
    neg = np.einsum("pd,pkd->pk", v, u_neg)
    s_pos, s_neg = _sigmoid(pos), _sigmoid(neg)
    loss = float(np.sum(np.logaddexp(0.0, -pos)) + np.sum(np.logaddexp(0.0, neg)))

    g_pos = s_pos - 1.0                     # dL/d(pos)
    grad_v = g_pos[:, None] * u_pos + np.einsum("pk,pkd->pd", s_neg, u_neg)
    grad_pos = g_pos[:, None] * v
    grad_neg = s_neg[:, :, None] * v[:, None, :]

    np.add.at(w_in, centers, -lr * grad_v)
    np.add.at(w_out, contexts, -lr * grad_pos)
    np.add.at(w_out, negatives.reshape(-1), -lr * grad_neg.reshape(-1, w_out.shape[1]))
    return loss


def _pairs(ids: Sequence[int], window: int) -> tuple[np.ndarray, np.ndarray]:
    c, o = [], []
    for i, w in enumerate(ids):
        for j in range(max(0, i - window), min(len(ids), i + window + 1)):
            if j != i:
                c.append(w)
                o.append(ids[j])
    return np.asarray(c, dtype=np.int64), np.asarray(o, dtype=np.int64)


def train_skipgram(corpus: Iterable[Sequence[str]], cfg: SkipGramConfig = SkipGramConfig()) -> WordVectors:
    """Train word vectors; one SGD step per sentence, linearly decayed rate."""
    sentences = [list(s) for s in corpus if len(s)]
    if not sentences:
        raise EmbeddingError("empty corpus")
    vocab = sorted({t for s in sentences for t in s})
    index = {t: i for i, t in enumerate(vocab)}
    ids = [[index[t] for t in s] for s in sentences]

    counts = np.bincount(np.concatenate([np.asarray(s) for s in ids]), minlength=len(vocab)).astype(float)
    noise = counts ** 0.75
    cdf = np.cumsum(noise / noise.sum())
    cdf[-1] = 1.0

    rng = np.random.default_rng(cfg.seed)
    d = cfg.dim
    w_in = rng.uniform(-0.5 / d, 0.5 / d, size=(len(vocab), d))
    w_out = np.zeros((len(vocab), d))

    batches = [_pairs(s, cfg.window) for s in ids]
    batches = [b for b in batches if len(b[0])]
    total = max(1, cfg.epochs * len(batches))
    step = 0
    history = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(batches))
        loss, n = 0.0, 0
        for bi in order:
            centers, contexts = batches[bi]
            neg = np.searchsorted(cdf, rng.random((len(centers), cfg.negatives)), side="right")
            lr = max(cfg.min_lr, cfg.lr * (1.0 - step / total))
            loss += sgns_step(w_in, w_out, centers, contexts, neg, lr)
            n += len(centers)
            step += 1
        history.append(loss / n if n else 0.0)
        log.debug("skipgram epoch %d loss %.5f", epoch, history[-1])
    if not np.all(np.isfinite(w_in)):
        raise EmbeddingError("non-finite word vectors after training")

    meta = asdict(cfg) | {"loss_history": history, "vocab_size": len(vocab)}
    return WordVectors(d, {t: w_in[i].copy() for t, i in index.items()}, meta)


def sentence_vector(tokens: Sequence[str], wv: WordVectors) -> np.ndarray:
    """Unweighted mean of the word vectors; zeros for an empty sentence."""
    if not tokens:
        return np.zeros(wv.dim)
    return np.mean([wv[t] for t in tokens], axis=0)
