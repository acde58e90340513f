"""Diagnostic classifiers over discrete codes.

Three probes are provided:

* :func:`fit_closed_form`: a logistic classifier on one-hot codes whose
  weights are the log empirical conditionals ``ln P(label | code)``. Its
  cross-entropy on the data it was fitted to is exactly ``H(label | code)``.
* :func:`train_logistic`: multinomial logistic regression on one-hot codes,
  trained by full-batch gradient descent.
* :func:`speaker_probe`: the same regression on per-utterance code
  frequency vectors, predicting the speaker.
"""

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Hashable, List, Optional, Sequence

import numpy as np
from scipy.special import log_softmax

from .corpus import CodeSequence, split_halves
from .infometrics import JointHistogram

PROBE_FORMAT = "codeprobe-probe"
PROBE_VERSION = 1

# log-probability charged for a label the probe has never seen
_UNSEEN_LABEL_LOGP = float(np.log(1e-12))


@dataclass(frozen=True)
class TrainerConfig:
    learning_rate: float = 0.1
    epochs: int = 200
    l2: float = 1e-4
    seed: int = 0


class _CodeProbe:
    """Shared prediction logic for probes over one-hot code inputs."""

    classes: List[Hashable]

    def _lookup(self, codes):
        raise NotImplementedError

    def log_proba(self, codes) -> np.ndarray:
        """(n_frames, n_labels) log-probabilities; unseen codes get a uniform row."""
        codes = np.asarray(codes)
        cols, seen = self._lookup(codes)
        table = self._log_table()
        out = np.full((codes.shape[0], len(self.classes)), -np.log(len(self.classes)))
        out[seen] = table[cols[seen]]
        return out

    def predict(self, codes) -> List[Hashable]:
        idx = np.argmax(self.log_proba(codes), axis=1)
        return [self.classes[i] for i in idx]

    def _log_table(self) -> np.ndarray:
        raise NotImplementedError


@dataclass(eq=False)
class ClosedFormProbe(_CodeProbe):
    """weights[y, x] = ln P(Y=y | X=x), floored at ln(epsilon)."""

    weights: np.ndarray
    classes: List[Hashable]
    code_values: List[Hashable]
    support: np.ndarray = None

    def __post_init__(self):
        self._index = {c: i for i, c in enumerate(self.code_values)}
        if self.support is None:
            self.support = np.ones(len(self.code_values), dtype=bool)

    def _lookup(self, codes):
        cols = np.fromiter((self._index.get(c, -1) for c in codes.tolist()),
                           dtype=np.int64, count=codes.shape[0])
        seen = cols >= 0
        seen[seen] = self.support[cols[seen]]
        return cols, seen

    def _log_table(self):
        return log_softmax(self.weights.T, axis=1)


def fit_closed_form(h: JointHistogram, epsilon: float = 1e-12) -> ClosedFormProbe:
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    c = h.counts.astype(np.float64)
    row = c.sum(axis=1)
    support = row > 0
    cond = c / np.where(support, row, 1.0)[:, None]
    with np.errstate(divide="ignore"):
        w = np.log(np.maximum(cond, epsilon)) if epsilon > 0 else np.log(cond)
    return ClosedFormProbe(w.T.copy(), list(h.label_values), list(h.code_values), support)


@dataclass(eq=False)
class TrainedProbe(_CodeProbe):
    """Multinomial logistic regression; ``weights`` is (n_labels, n_inputs)."""

    weights: np.ndarray
    bias: np.ndarray
    classes: List[Hashable]
    config: TrainerConfig
    seen: Optional[np.ndarray] = None
    loss_history: List[float] = field(default_factory=list)

    def _lookup(self, codes):
        codes = codes.astype(np.int64)
        n_inputs = self.weights.shape[1]
        inside = (codes >= 0) & (codes < n_inputs)
        cols = np.where(inside, codes, 0)
        seen = inside & self.seen[cols]
        return cols, seen

    def _log_table(self):
        return log_softmax(self.weights.T + self.bias, axis=1)

    def dense_log_proba(self, features) -> np.ndarray:
        z = np.asarray(features, dtype=np.float64) @ self.weights.T + self.bias
        return log_softmax(z, axis=1)

    def dense_predict(self, features) -> List[Hashable]:
        return [self.classes[i] for i in np.argmax(self.dense_log_proba(features), axis=1)]


def _label_indices(classes, labels):
    index = {y: i for i, y in enumerate(classes)}
    return np.fromiter((index.get(y, -1) for y in labels), dtype=np.int64, count=len(labels))


def cross_entropy(probe: _CodeProbe, codes, labels) -> float:
    """Mean negative log-probability of the true label, in nats.

    Labels the probe never saw are charged ``-ln(1e-12)``.
    """
    if len(codes) == 0:
        raise ValueError("cross_entropy needs at least one frame")
    if len(codes) != len(labels):
        raise ValueError("codes and labels differ in length")
    logp = probe.log_proba(codes)
    y = _label_indices(probe.classes, labels)
    picked = np.where(y >= 0, logp[np.arange(len(y)), np.maximum(y, 0)], _UNSEEN_LABEL_LOGP)
    return float(-np.mean(picked))


def accuracy(probe: _CodeProbe, codes, labels) -> float:
    if len(codes) == 0:
        raise ValueError("accuracy needs at least one frame")
    pred = np.argmax(probe.log_proba(codes), axis=1)
    return float(np.mean(pred == _label_indices(probe.classes, labels)))


def _fit_softmax(features: Optional[np.ndarray], targets: np.ndarray,
                 n_inputs: int, config: TrainerConfig):
    """Full-batch gradient descent on mean cross-entropy + (l2/2)||V||^2.

    ``targets`` is (n_rows, n_labels) of label counts per input row. With
    ``features=None`` row r is the one-hot vector for input r, which lets
    one-hot training run on the joint histogram instead of on frames.

    Each input column is divided by its root-mean-square over the training
    rows before descent and V is the weight matrix in those scaled units;
    the returned weights are mapped back to raw inputs. Without this a
    one-hot column's gradient shrinks with the code's frequency and rare
    codes barely move in 200 epochs.
    """
    n_rows, n_labels = targets.shape
    total = targets.sum()
    row_weight = targets.sum(axis=1, keepdims=True)
    if features is None:
        mean_sq = row_weight[:, 0] / total
    else:
        mean_sq = (row_weight[:, 0] @ features ** 2) / total
    scale = np.where(mean_sq > 0, 1.0 / np.sqrt(np.where(mean_sq > 0, mean_sq, 1.0)), 1.0)
    x = None if features is None else features * scale
    v = np.zeros((n_labels, n_inputs))
    b = np.zeros(n_labels)
    history = []

    def logits():
        return ((v * scale).T if x is None else x @ v.T) + b

    def loss(logp):
        return float(-np.sum(targets * logp) / total + 0.5 * config.l2 * np.sum(v * v))

    for _ in range(config.epochs):
        logp = log_softmax(logits(), axis=1)
        history.append(loss(logp))
        grad_z = (np.exp(logp) * row_weight - targets) / total
        grad_v = (grad_z.T * scale if x is None else grad_z.T @ x) + config.l2 * v
        v -= config.learning_rate * grad_v
        b -= config.learning_rate * grad_z.sum(axis=0)
    history.append(loss(log_softmax(logits(), axis=1)))
    return v * scale, b, history


def train_logistic(codes, labels, config: TrainerConfig = TrainerConfig(),
                   n_codes: Optional[int] = None) -> TrainedProbe:
    """Multinomial logistic regression from one-hot codes to labels.

    Zero-initialised, full-batch, so the result is fully determined by the
    data and ``config``. Codes absent from training predict uniformly.
    """
    codes = np.asarray(codes, dtype=np.int64)
    if codes.size == 0:
        raise ValueError("training set is empty")
    if len(codes) != len(labels):
        raise ValueError("codes and labels differ in length")
    if codes.min() < 0:
        raise ValueError("codes must be non-negative")
    classes = sorted(set(labels), key=lambda v: (type(v).__name__, v))
    if len(classes) < 2:
        raise ValueError("degenerate labels: need at least 2 distinct labels")
    n_codes = int(codes.max()) + 1 if n_codes is None else n_codes
    y = _label_indices(classes, labels)
    targets = np.zeros((n_codes, len(classes)))
    np.add.at(targets, (codes, y), 1.0)
    w, b, history = _fit_softmax(None, targets, n_codes, config)
    seen = targets.sum(axis=1) > 0
    return TrainedProbe(w, b, classes, config, seen, history)


def train_logistic_dense(features, labels, config: TrainerConfig = TrainerConfig()) -> TrainedProbe:
    features = np.asarray(features, dtype=np.float64)
    if features.shape[0] == 0:
        raise ValueError("training set is empty")
    classes = sorted(set(labels), key=lambda v: (type(v).__name__, v))
    if len(classes) < 2:
        raise ValueError("degenerate labels: need at least 2 distinct labels")
    targets = np.zeros((features.shape[0], len(classes)))
    targets[np.arange(features.shape[0]), _label_indices(classes, labels)] = 1.0
    w, b, history = _fit_softmax(features, targets, features.shape[1], config)
    return TrainedProbe(w, b, classes, config, np.ones(features.shape[1], bool), history)


def code_frequencies(seq: CodeSequence, normalize: bool = True) -> np.ndarray:
    counts = np.bincount(seq.codes, minlength=seq.codebook_size).astype(np.float64)
    return counts / counts.sum() if normalize else counts


def speaker_probe(corpus: Sequence[CodeSequence], split_seed: int,
                  config: TrainerConfig = TrainerConfig(), stratify: bool = False) -> float:
    """Held-out accuracy of predicting the speaker from code frequencies."""
    speakers = {s.speaker_id for s in corpus}
    if len(speakers) < 2:
        raise ValueError("speaker probe needs at least 2 speakers")
    train, held = split_halves(corpus, split_seed,
                               stratify=(lambda s: s.speaker_id) if stratify else None)
    missing = speakers - {s.speaker_id for s in train} or speakers - {s.speaker_id for s in held}
    if missing:
        raise ValueError(
            f"speaker(s) {sorted(missing)[:5]} absent from one half of the split; "
            "use a stratified split (stratify=True) and drop speakers with a single utterance"
        )
    x_train = np.stack([code_frequencies(s) for s in train])
    x_held = np.stack([code_frequencies(s) for s in held])
    probe = train_logistic_dense(x_train, [s.speaker_id for s in train], config)
    pred = probe.dense_predict(x_held)
    return float(np.mean([p == s.speaker_id for p, s in zip(pred, held)]))


def save_probe(probe, path) -> None:
    if isinstance(probe, ClosedFormProbe):
        payload = {
            "kind": "closed_form",
            "weights": probe.weights.tolist(),
            "classes": probe.classes,
            "code_values": probe.code_values,
            "support": probe.support.tolist(),
        }
    else:
        payload = {
            "kind": "trained",
            "weights": probe.weights.tolist(),
            "bias": probe.bias.tolist(),
            "classes": probe.classes,
            "seen": probe.seen.tolist(),
            "config": asdict(probe.config),
        }
    payload = {"format": PROBE_FORMAT, "version": PROBE_VERSION, **payload}
    Path(path).write_text(json.dumps(payload, allow_nan=False), encoding="utf-8")


def load_probe(path):
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("format") != PROBE_FORMAT:
        raise ValueError(f"{path}: not a probe file")
    if payload.get("version") != PROBE_VERSION:
        raise ValueError(f"{path}: unsupported probe version {payload.get('version')}")
    if payload["kind"] == "closed_form":
        return ClosedFormProbe(np.asarray(payload["weights"]), payload["classes"],
                               payload["code_values"], np.asarray(payload["support"], bool))
    return TrainedProbe(np.asarray(payload["weights"]), np.asarray(payload["bias"]),
                        payload["classes"], TrainerConfig(**payload["config"]),
                        np.asarray(payload["seen"], bool))
