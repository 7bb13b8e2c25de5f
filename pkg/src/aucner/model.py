"""Windowed feed-forward tagger with an entity head, a begin head and a 3-class head.

Each token is represented by the concatenated embeddings of the tokens at
offsets ``-k..+k`` (row 0, the unknown-word row, pads positions outside the
sentence), passed through one tanh layer. The resulting representation is
shared by three linear heads: two sigmoid scores used by the two-task
objectives and a softmax over (B, I, O) used by CE, CRF and the CE half of
compositional training.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .rng import make_rng

CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    emb_dim: int = 32
    window: int = 2
    hidden_dim: int = 64
    init_scale: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if min(self.vocab_size, self.emb_dim, self.hidden_dim) < 1 or self.window < 0:
            raise ValueError(f"invalid model dimensions: {self}")
        if self.init_scale < 0:
            raise ValueError("init_scale must be >= 0")

    @property
    def input_dim(self) -> int:
        return (2 * self.window + 1) * self.emb_dim


@dataclass
class ModelParams:
    emb: np.ndarray    # (V, d)
    W1: np.ndarray     # ((2k+1)d, H)
    b1: np.ndarray     # (H,)
    w_en: np.ndarray   # (H,)
    c_en: np.ndarray   # (1,)
    w_be: np.ndarray   # (H,)
    c_be: np.ndarray   # (1,)
    W3: np.ndarray     # (H, 3)
    b3: np.ndarray     # (3,)

    def items(self) -> Iterator[tuple[str, np.ndarray]]:
        for f in fields(self):
            yield f.name, getattr(self, f.name)

    def copy(self) -> "ModelParams":
        return ModelParams(**{k: v.copy() for k, v in self.items()})

    def zeros_like(self) -> "ModelParams":
        return ModelParams(**{k: np.zeros_like(v) for k, v in self.items()})

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for _, v in self.items())

    @property
    def window(self) -> int:
        return (self.W1.shape[0] // self.emb.shape[1] - 1) // 2


ParamGradients = ModelParams


def init_params(config: ModelConfig) -> ModelParams:
    """Uniform(-init_scale, init_scale) weights, zero biases."""
    rng = make_rng(config.seed, "init_params")
    s = config.init_scale
    V, d, H = config.vocab_size, config.emb_dim, config.hidden_dim

    def u(*shape):
        return rng.uniform(-s, s, size=shape) if s > 0 else np.zeros(shape)

    return ModelParams(
        emb=u(V, d),
        W1=u(config.input_dim, H),
        b1=np.zeros(H),
        w_en=u(H),
        c_en=np.zeros(1),
        w_be=u(H),
        c_be=np.zeros(1),
        W3=u(H, 3),
        b3=np.zeros(3),
    )


def window_indices(token_indices: np.ndarray, k: int) -> np.ndarray:
    """(l, 2k+1) matrix of context indices for one sentence, padded with 0."""
    idx = np.asarray(token_indices, dtype=np.int64)
    padded = np.concatenate([np.zeros(k, np.int64), idx, np.zeros(k, np.int64)])
    return np.lib.stride_tricks.sliding_window_view(padded, 2 * k + 1).copy()


def _sigmoid(z):
    # two-branch form avoids overflow in exp for large |z|
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class ForwardTrace:
    windows: np.ndarray   # (T, 2k+1)
    lengths: tuple[int, ...]
    X: np.ndarray         # (T, (2k+1)d)
    r: np.ndarray         # (T, H)
    s_en: np.ndarray      # (T,)
    h_en: np.ndarray
    s_be: np.ndarray
    h_be: np.ndarray
    logits: np.ndarray    # (T, 3)
    p: np.ndarray

    def split(self, arr: np.ndarray) -> list[np.ndarray]:
        """Cut a per-token array back into per-sentence pieces."""
        return np.split(arr, np.cumsum(self.lengths)[:-1])


def forward(params: ModelParams, token_indices, k: int | None = None) -> ForwardTrace:
    """Run the tagger on one sentence or a batch of sentences.

    ``token_indices`` is either a 1-D index sequence (one sentence) or a list
    of them; sentences are processed independently (no context crosses a
    sentence boundary) and the trace stacks their tokens.
    """
    if k is None:
        k = params.window
    if len(token_indices) and np.ndim(token_indices[0]) == 0:
        token_indices = [token_indices]
    wins = [window_indices(s, k) for s in token_indices]
    return forward_windows(params, np.concatenate(wins), tuple(len(w) for w in wins))


def forward_windows(params: ModelParams, windows: np.ndarray, lengths: Sequence[int]) -> ForwardTrace:
    V, d = params.emb.shape
    if windows.size and (windows.min() < 0 or windows.max() >= V):
        raise IndexError(f"token index out of range [0, {V})")
    X = params.emb[windows].reshape(len(windows), -1)
    r = np.tanh(X @ params.W1 + params.b1)
    s_en = r @ params.w_en + params.c_en[0]
    s_be = r @ params.w_be + params.c_be[0]
    logits = r @ params.W3 + params.b3
    return ForwardTrace(
        windows=windows,
        lengths=tuple(lengths),
        X=X,
        r=r,
        s_en=s_en,
        h_en=_sigmoid(s_en),
        s_be=s_be,
        h_be=_sigmoid(s_be),
        logits=logits,
        p=_softmax(logits),
    )


@dataclass
class HeadGrads:
    """Loss gradients w.r.t. head outputs; any field may be left as None.

    Sigmoid heads accept gradients either w.r.t. the score ``h`` or the
    pre-sigmoid logit ``s``; the 3-class head w.r.t. probabilities ``p`` or
    logits. Contributions given at both levels are added.
    """

    h_en: np.ndarray | None = None
    s_en: np.ndarray | None = None
    h_be: np.ndarray | None = None
    s_be: np.ndarray | None = None
    p: np.ndarray | None = None
    logits: np.ndarray | None = None


def _check(name, g, shape):
    if g is not None and np.shape(g) != shape:
        raise ValueError(f"gradient {name} has shape {np.shape(g)}, expected {shape}")


def backward(params: ModelParams, trace: ForwardTrace, grads: HeadGrads) -> ParamGradients:
    T = len(trace.windows)
    for name in ("h_en", "s_en", "h_be", "s_be"):
        _check(name, getattr(grads, name), (T,))
    _check("p", grads.p, (T, 3))
    _check("logits", grads.logits, (T, 3))

    out = params.zeros_like()
    dr = np.zeros_like(trace.r)

    for task in ("en", "be"):
        dh = getattr(grads, "h_" + task)
        dsl = getattr(grads, "s_" + task)
        if dh is None and dsl is None:
            continue
        ds = np.zeros(T)
        if dh is not None:
            h = getattr(trace, "h_" + task)
            ds = ds + dh * h * (1.0 - h)
        if dsl is not None:
            ds = ds + dsl
        getattr(out, "w_" + task)[:] = trace.r.T @ ds
        getattr(out, "c_" + task)[:] = ds.sum()
        dr += np.outer(ds, getattr(params, "w_" + task))

    if grads.p is not None or grads.logits is not None:
        dz = np.zeros((T, 3))
        if grads.p is not None:
            p = trace.p
            dz = dz + p * (grads.p - (grads.p * p).sum(axis=1, keepdims=True))
        if grads.logits is not None:
            dz = dz + grads.logits
        out.W3[:] = trace.r.T @ dz
        out.b3[:] = dz.sum(axis=0)
        dr += dz @ params.W3.T

    dz1 = dr * (1.0 - trace.r**2)
    out.W1[:] = trace.X.T @ dz1
    out.b1[:] = dz1.sum(axis=0)
    dX = dz1 @ params.W1.T
    d = params.emb.shape[1]
    np.add.at(out.emb, trace.windows.ravel(), dX.reshape(-1, d))
    return out


def save_checkpoint(path, params: ModelParams, config: ModelConfig, vocab_hash: str = "", extra: dict | None = None) -> None:
    doc = {
        "version": CHECKPOINT_VERSION,
        "config": asdict(config),
        "vocab_hash": vocab_hash,
        "params": {k: v.tolist() for k, v in params.items()},
    }
    if extra:
        doc["extra"] = extra
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_checkpoint(path) -> tuple[ModelParams, ModelConfig, dict]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    version = doc.get("version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version!r}")
    config = ModelConfig(**doc["config"])
    names = [f.name for f in fields(ModelParams)]
    missing = set(names) - set(doc["params"])
    if missing:
        raise CheckpointError(f"checkpoint lacks tensors {sorted(missing)}")
    params = ModelParams(**{k: np.asarray(doc["params"][k], dtype=float) for k in names})
    return params, config, doc
