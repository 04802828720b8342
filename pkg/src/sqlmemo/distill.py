"""Dual-teacher distillation losses over an abstract token-distribution
sequence model, plus a small trainable reference model and SGD training.

The toy model stands in for the seq2seq backbone: it only has to expose
per-position vocabulary distributions and exact gradients so the loss
contracts (cross-entropy terms, teacher-student KL, their weighted total)
can be verified numerically.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAX_INPUT_LEN = 512
MAX_TARGET_LEN = 256

PAD, BOS, EOS, UNK = "<pad>", "<bos>", "<eos>", "<unk>"
SPECIALS = [PAD, BOS, EOS, UNK]

_WORD_RE = re.compile(r"\[(?:COL|TAB|VAL)\d*\]|[A-Za-z_][A-Za-z0-9_]*|\d+\.\d+|\d+|[^\sA-Za-z0-9_]")


def word_tokenize(text: str) -> list[str]:
    return _WORD_RE.findall(text)


class Vocabulary:
    def __init__(self, tokens: list[str]):
        self.itos = SPECIALS + sorted(set(tokens) - set(SPECIALS))
        self.stoi = {t: i for i, t in enumerate(self.itos)}

    def __len__(self):
        return len(self.itos)

    def encode(self, text: str) -> list[int]:
        unk = self.stoi[UNK]
        return [self.stoi.get(t, unk) for t in word_tokenize(text)]

    @classmethod
    def from_texts(cls, texts: list[str]) -> "Vocabulary":
        tokens: list[str] = []
        for t in texts:
            tokens.extend(word_tokenize(t))
        tokens.extend(["[COL]", "[TAB]", "[VAL]"])
        return cls(tokens)


@dataclass(frozen=True)
class BatchItem:
    input_ids: tuple[int, ...]
    target_ids: tuple[int, ...]
    source: str  # labeled | cfg | ske


@dataclass(frozen=True)
class TrainingBatch:
    items: tuple[BatchItem, ...]

    def __post_init__(self):
        for item in self.items:
            if not item.input_ids or not item.target_ids:
                raise ValueError("empty sequence in batch")
            if len(item.input_ids) > MAX_INPUT_LEN or len(item.target_ids) > MAX_TARGET_LEN:
                raise ValueError("sequence exceeds configured maximum length")

    def filter(self, source: str) -> "TrainingBatch":
        return TrainingBatch(tuple(i for i in self.items if i.source == source))

    def __len__(self):
        return len(self.items)


class SequenceModel:
    """Abstract teacher-forced distribution model over a flat parameter vector."""

    vocab_size: int

    def distributions(self, input_ids, target_ids) -> np.ndarray:
        """(len(target_ids), V) matrix; row j is P(token_j | input, target_<j)."""
        raise NotImplementedError

    def get_params(self) -> np.ndarray:
        raise NotImplementedError

    def set_params(self, theta: np.ndarray) -> None:
        raise NotImplementedError


class ToyModel(SequenceModel):
    """Embedding + linear softmax model with exact analytic gradients.

    The input is encoded as the mean of its token embeddings; position j's
    logits come from that mean plus the embedding of the previous target
    token (BOS at j=0), through a linear output layer.
    """

    def __init__(self, vocab_size: int, dim: int = 16, seed: int = 0, scale: float = 0.1):
        rng = np.random.RandomState(seed)
        self.vocab_size = vocab_size
        self.dim = dim
        self.E = rng.randn(vocab_size, dim) * scale
        self.W = rng.randn(dim, vocab_size) * scale
        self.b = np.zeros(vocab_size)
        self.bos_id = 1

    # --- flat parameter view -------------------------------------------------

    def get_params(self) -> np.ndarray:
        return np.concatenate([self.E.ravel(), self.W.ravel(), self.b])

    def set_params(self, theta: np.ndarray) -> None:
        ne, nw = self.E.size, self.W.size
        self.E = theta[:ne].reshape(self.E.shape).copy()
        self.W = theta[ne:ne + nw].reshape(self.W.shape).copy()
        self.b = theta[ne + nw:].copy()

    def clone(self) -> "ToyModel":
        other = ToyModel(self.vocab_size, self.dim, seed=0)
        other.set_params(self.get_params())
        return other

    # --- forward -------------------------------------------------------------

    def _contexts(self, input_ids, target_ids) -> np.ndarray:
        mean_in = self.E[list(input_ids)].mean(axis=0)
        prev = [self.bos_id] + list(target_ids[:-1])
        return mean_in[None, :] + self.E[prev]

    def distributions(self, input_ids, target_ids) -> np.ndarray:
        h = self._contexts(input_ids, target_ids)
        logits = h @ self.W + self.b
        logits -= logits.max(axis=1, keepdims=True)
        exp = np.exp(logits)
        return exp / exp.sum(axis=1, keepdims=True)

    # --- backward ------------------------------------------------------------

    def backprop_logit_grads(self, input_ids, target_ids, dlogits: np.ndarray,
                             grads: dict) -> None:
        """Accumulate parameter gradients given dLoss/dlogits per position."""
        h = self._contexts(input_ids, target_ids)
        grads["W"] += h.T @ dlogits
        grads["b"] += dlogits.sum(axis=0)
        dh = dlogits @ self.W.T
        prev = [self.bos_id] + list(target_ids[:-1])
        for j, p in enumerate(prev):
            grads["E"][p] += dh[j]
        mean_grad = dh.sum(axis=0) / len(input_ids)
        for tok in input_ids:
            grads["E"][tok] += mean_grad

    def zero_grads(self) -> dict:
        return {"E": np.zeros_like(self.E), "W": np.zeros_like(self.W),
                "b": np.zeros_like(self.b)}

    def flat_grads(self, grads: dict) -> np.ndarray:
        return np.concatenate([grads["E"].ravel(), grads["W"].ravel(), grads["b"]])

    def apply_grads(self, grads: dict, lr: float) -> None:
        self.E -= lr * grads["E"]
        self.W -= lr * grads["W"]
        self.b -= lr * grads["b"]

    # --- persistence ---------------------------------------------------------

    def save(self, path: str | Path, vocab: Vocabulary | None = None) -> None:
        obj = {"vocab_size": self.vocab_size, "dim": self.dim,
               "params": self.get_params().tolist()}
        if vocab is not None:
            obj["itos"] = vocab.itos
        Path(path).write_text(json.dumps(obj, sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> tuple["ToyModel", Vocabulary | None]:
        obj = json.loads(Path(path).read_text())
        model = cls(obj["vocab_size"], obj["dim"], seed=0)
        model.set_params(np.asarray(obj["params"]))
        vocab = None
        if "itos" in obj:
            vocab = Vocabulary.__new__(Vocabulary)
            vocab.itos = obj["itos"]
            vocab.stoi = {t: i for i, t in enumerate(vocab.itos)}
        return model, vocab


# --- losses ------------------------------------------------------------------

def ce_loss(model: SequenceModel, batch: TrainingBatch,
            grads: dict | None = None, weight: float = 1.0) -> float:
    """Mean over items of the summed per-token negative log probability."""
    if len(batch) == 0:
        raise ValueError("ce_loss on empty batch")
    total = 0.0
    for item in batch.items:
        probs = model.distributions(item.input_ids, item.target_ids)
        p = probs[np.arange(len(item.target_ids)), list(item.target_ids)]
        total += -np.log(np.maximum(p, 1e-300)).sum()
        if grads is not None:
            dlogits = probs.copy()
            dlogits[np.arange(len(item.target_ids)), list(item.target_ids)] -= 1.0
            model.backprop_logit_grads(item.input_ids, item.target_ids,
                                       dlogits * (weight / len(batch)), grads)
    return total / len(batch)


def kl_loss(prev_model: SequenceModel, cur_model: SequenceModel,
            batch: TrainingBatch, grads: dict | None = None,
            weight: float = 1.0) -> float:
    """Mean over items of the per-position KL from the frozen previous model
    to the current one; gradients flow to the current model only."""
    if prev_model.vocab_size != cur_model.vocab_size:
        raise ValueError("vocabulary size mismatch between teacher and student")
    if len(batch) == 0:
        return 0.0
    total = 0.0
    for item in batch.items:
        p_prev = prev_model.distributions(item.input_ids, item.target_ids)
        p_cur = cur_model.distributions(item.input_ids, item.target_ids)
        ratio = np.log(np.maximum(p_prev, 1e-300)) - np.log(np.maximum(p_cur, 1e-300))
        total += float((p_prev * ratio).sum())
        if grads is not None:
            dlogits = p_cur - p_prev  # d KL(p'||softmax(z)) / dz
            cur_model.backprop_logit_grads(item.input_ids, item.target_ids,
                                           dlogits * (weight / len(batch)), grads)
    return total / len(batch)


def total_loss(model: SequenceModel, prev_model: SequenceModel | None,
               batch: TrainingBatch, lam: float, task_index: int,
               grads: dict | None = None) -> float:
    """L_task + L_cur + L_past + lam * KL(previous model, current model).

    The KL term is dropped on the first task or without a previous model;
    absent sources contribute zero.
    """
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    loss = 0.0
    for source in ("labeled", "cfg", "ske"):
        sub = batch.filter(source)
        if len(sub):
            loss += ce_loss(model, sub, grads)
    ske = batch.filter("ske")
    if task_index > 1 and prev_model is not None and len(ske):
        loss += lam * kl_loss(prev_model, model, ske, grads, weight=lam)
    return loss


def component_losses(model: SequenceModel, prev_model: SequenceModel | None,
                     batch: TrainingBatch, task_index: int) -> dict:
    out = {}
    for name, source in (("task", "labeled"), ("cur", "cfg"), ("past", "ske")):
        sub = batch.filter(source)
        out[name] = ce_loss(model, sub) if len(sub) else 0.0
    ske = batch.filter("ske")
    out["kl_past"] = kl_loss(prev_model, model, ske) \
        if task_index > 1 and prev_model is not None and len(ske) else 0.0
    return out


def combine_losses(parts: dict, lam: float) -> float:
    return parts["task"] + parts["cur"] + parts["past"] + lam * parts["kl_past"]


def train_task(student: ToyModel, prev_student: ToyModel | None,
               batch: TrainingBatch, lam: float, task_index: int,
               epochs: int = 50, lr: float = 0.5, seed: int = 0) -> ToyModel:
    """Full-batch SGD on the total loss; the previous student is frozen."""
    for epoch in range(epochs):
        grads = student.zero_grads()
        loss = total_loss(student, prev_student, batch, lam, task_index, grads)
        if not np.isfinite(loss):
            raise RuntimeError(
                f"training diverged at epoch {epoch}: loss={loss}, "
                f"|theta|={np.linalg.norm(student.get_params()):.3g}")
        student.apply_grads(grads, lr)
    return student


def greedy_decode(model: ToyModel, vocab: Vocabulary, input_ids: list[int],
                  max_len: int = 40) -> str:
    """Argmax decoding until EOS; used only to fill the accuracy matrix."""
    eos = vocab.stoi[EOS]
    out: list[int] = []
    for _ in range(max_len):
        probs = model.distributions(input_ids, tuple(out) + (eos,))
        nxt = int(np.argmax(probs[-1]))
        if nxt == eos:
            break
        out.append(nxt)
    return " ".join(vocab.itos[i] for i in out)
