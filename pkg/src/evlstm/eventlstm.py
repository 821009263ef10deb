"""Per-pixel LSTM autoencoder whose encoder state fills the LSTM time surface.

One encoder/decoder pair is shared by every pixel. The encoder reads a
pixel's normalized timestamps; its final hidden state is the pixel feature.
The decoder starts with both h and c set to that feature (or, with
``carry_cell``, c set to the encoder's final cell state), is driven by zero
inputs, and a linear head maps each decoder hidden state to a timestamp.
The reconstruction target is the input sequence reversed.

Everything is float64 numpy with hand-written backpropagation through time.
Gate blocks in the stacked weight matrices are ordered input, forget,
candidate, output.
"""
from __future__ import annotations

import concurrent.futures as cf
import os
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .events import SensorGeometry, _atomic_write
from .surfaces import Grid
from .windowing import Norm, Window, per_pixel_sequences

FORMAT_VERSION = 1
MODEL_MAGIC = b"EVLSTMAE"
_MODEL_HEADER = struct.Struct("<8sIIIII")
_FLAG_CARRY_CELL = 1


class ModelFormatError(ValueError):
    pass


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _rowdot(a: np.ndarray, m: np.ndarray) -> np.ndarray:
    # a @ m.T computed row by row, so a row's result never depends on batch size
    return (a[:, None, :] * m[None, :, :]).sum(axis=-1)


@dataclass(eq=False)
class LstmCellParams:
    W: np.ndarray  # (4H, input_size)
    U: np.ndarray  # (4H, H)
    b: np.ndarray  # (4H,)

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.U = np.asarray(self.U, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        four_h = self.U.shape[0]
        if four_h % 4 or self.U.shape != (four_h, four_h // 4):
            raise ValueError(f"recurrent matrix must be (4H, H), got {self.U.shape}")
        if self.W.ndim != 2 or self.W.shape[0] != four_h:
            raise ValueError(f"input matrix must be (4H, input_size), got {self.W.shape}")
        if self.b.shape != (four_h,):
            raise ValueError(f"bias must be (4H,), got {self.b.shape}")

    @property
    def hidden_size(self) -> int:
        return self.U.shape[1]

    @property
    def input_size(self) -> int:
        return self.W.shape[1]

    def gate(self, name: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(W, U, b) slices of one gate: 'i', 'f', 'g' or 'o'."""
        k = "ifgo".index(name)
        H = self.hidden_size
        s = slice(k * H, (k + 1) * H)
        return self.W[s], self.U[s], self.b[s]

    @classmethod
    def zeros(cls, input_size: int, hidden_size: int) -> "LstmCellParams":
        H = hidden_size
        return cls(np.zeros((4 * H, input_size)), np.zeros((4 * H, H)), np.zeros(4 * H))

    @classmethod
    def uniform(cls, input_size: int, hidden_size: int, rng: np.random.Generator) -> "LstmCellParams":
        H = hidden_size
        k = 1.0 / np.sqrt(H)
        return cls(
            rng.uniform(-k, k, (4 * H, input_size)),
            rng.uniform(-k, k, (4 * H, H)),
            rng.uniform(-k, k, 4 * H),
        )


def lstm_step(params: LstmCellParams, x, h, c):
    """One LSTM step. Accepts single vectors or (batch, dim) arrays."""
    x = np.asarray(x, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    single = x.ndim == 1
    x2, h2, c2 = np.atleast_2d(x), np.atleast_2d(h), np.atleast_2d(c)
    H = params.hidden_size
    if x2.shape[1] != params.input_size or h2.shape[1] != H or c2.shape[1] != H:
        raise ValueError(
            f"shape mismatch: x {x.shape}, h {h.shape}, c {c.shape} for input_size "
            f"{params.input_size}, hidden {H}"
        )
    h_new, c_new, _ = _cell_forward(params, x2, h2, c2)
    if single:
        return h_new[0], c_new[0]
    return h_new, c_new


def _cell_forward(p: LstmCellParams, x, h, c):
    H = p.hidden_size
    z = _rowdot(x, p.W) + _rowdot(h, p.U) + p.b
    i = sigmoid(z[:, :H])
    f = sigmoid(z[:, H:2 * H])
    g = np.tanh(z[:, 2 * H:3 * H])
    o = sigmoid(z[:, 3 * H:])
    c_new = f * c + i * g
    tc = np.tanh(c_new)
    h_new = o * tc
    return h_new, c_new, (x, h, c, i, f, g, o, tc)


def _cell_backward(p: LstmCellParams, cache, dh, dc, grads):
    """Backprop one step. Accumulates into ``grads`` = (dW, dU, db); returns (dh_prev, dc_prev)."""
    x, h_prev, c_prev, i, f, g, o, tc = cache
    do = dh * tc
    dct = dc + dh * o * (1.0 - tc * tc)
    di = dct * g
    dg = dct * i
    df = dct * c_prev
    dc_prev = dct * f
    dz = np.concatenate(
        [di * i * (1.0 - i), df * f * (1.0 - f), dg * (1.0 - g * g), do * o * (1.0 - o)], axis=1
    )
    dW, dU, db = grads
    dW += dz.T @ x
    dU += dz.T @ h_prev
    db += dz.sum(axis=0)
    dh_prev = dz @ p.U
    return dh_prev, dc_prev


@dataclass(eq=False)
class AutoencoderModel:
    encoder: LstmCellParams
    decoder: LstmCellParams
    head_w: np.ndarray  # (H,)
    head_b: np.ndarray  # (1,)
    max_seq_len: int = 64
    carry_cell: bool = False  # decoder c0: encoder c_T if True, else the code h_T
    format_version: int = FORMAT_VERSION

    def __post_init__(self):
        self.head_w = np.asarray(self.head_w, dtype=np.float64).reshape(-1)
        self.head_b = np.asarray(self.head_b, dtype=np.float64).reshape(1)
        H = self.encoder.hidden_size
        if self.decoder.hidden_size != H or self.head_w.shape != (H,):
            raise ValueError("encoder, decoder and head must share the hidden size")
        if self.decoder.input_size != 1:
            raise ValueError("decoder input size must be 1")
        if self.max_seq_len < 1:
            raise ValueError("max_seq_len must be >= 1")

    @property
    def hidden_size(self) -> int:
        return self.encoder.hidden_size

    @property
    def input_size(self) -> int:
        return self.encoder.input_size

    @classmethod
    def zeros(cls, hidden_size: int = 16, max_seq_len: int = 64, input_size: int = 1,
              carry_cell: bool = False) -> "AutoencoderModel":
        return cls(
            LstmCellParams.zeros(input_size, hidden_size),
            LstmCellParams.zeros(1, hidden_size),
            np.zeros(hidden_size),
            np.zeros(1),
            max_seq_len,
            carry_cell,
        )

    @classmethod
    def initialize(cls, hidden_size: int = 16, max_seq_len: int = 64, input_size: int = 1,
                   seed: int = 0, carry_cell: bool = False) -> "AutoencoderModel":
        """Uniform init in [-1/sqrt(H), 1/sqrt(H)] for every parameter."""
        rng = np.random.default_rng(seed)
        k = 1.0 / np.sqrt(hidden_size)
        enc = LstmCellParams.uniform(input_size, hidden_size, rng)
        dec = LstmCellParams.uniform(1, hidden_size, rng)
        return cls(enc, dec, rng.uniform(-k, k, hidden_size), rng.uniform(-k, k, 1), max_seq_len, carry_cell)

    def parameters(self) -> dict[str, np.ndarray]:
        """Named parameter arrays in checkpoint order (live references)."""
        return {
            "encoder.W": self.encoder.W,
            "encoder.U": self.encoder.U,
            "encoder.b": self.encoder.b,
            "decoder.W": self.decoder.W,
            "decoder.U": self.decoder.U,
            "decoder.b": self.decoder.b,
            "head.w": self.head_w,
            "head.b": self.head_b,
        }

    def copy(self) -> "AutoencoderModel":
        return AutoencoderModel(
            LstmCellParams(self.encoder.W.copy(), self.encoder.U.copy(), self.encoder.b.copy()),
            LstmCellParams(self.decoder.W.copy(), self.decoder.U.copy(), self.decoder.b.copy()),
            self.head_w.copy(),
            self.head_b.copy(),
            self.max_seq_len,
            self.carry_cell,
            self.format_version,
        )

    def equals(self, other: "AutoencoderModel") -> bool:
        if (self.max_seq_len, self.carry_cell, self.format_version) != (
            other.max_seq_len, other.carry_cell, other.format_version
        ):
            return False
        a, b = self.parameters(), other.parameters()
        return all(a[k].shape == b[k].shape and np.array_equal(a[k], b[k]) for k in a)


# ---------------------------------------------------------------- batching


def _as_steps(seq, input_size: int) -> np.ndarray:
    a = np.asarray(seq, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.shape[1] != input_size:
        raise ValueError(f"sequence feature size {a.shape[1]} != model input size {input_size}")
    return a


def prepare(seq, model: AutoencoderModel) -> np.ndarray:
    """Coerce to (length, input_size) and keep the most recent ``max_seq_len`` steps."""
    a = _as_steps(seq, model.input_size)
    if len(a) == 0:
        raise ValueError("empty sequence")
    return a[-model.max_seq_len:]


def pad_batch(seqs: Sequence[np.ndarray], input_size: int):
    lengths = np.array([len(s) for s in seqs], dtype=np.int64)
    S = int(lengths.max())
    X = np.zeros((len(seqs), S, input_size))
    for k, s in enumerate(seqs):
        X[k, : len(s)] = s
    mask = np.arange(S)[None, :] < lengths[:, None]
    return X, lengths, mask


def reversed_targets(X: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    """Timestamp channel of each sequence reversed within its true length; zero padded."""
    B, S = X.shape[:2]
    T = np.zeros((B, S), dtype=X.dtype)
    for k, n in enumerate(lengths.tolist()):
        T[k, :n] = X[k, n - 1::-1, 0]
    return T


# ---------------------------------------------------------------- forward / backward


def _encode_batch(model: AutoencoderModel, X, mask, keep_cache=False):
    B, S, _ = X.shape
    H = model.hidden_size
    h = np.zeros((B, H), dtype=X.dtype)
    c = np.zeros((B, H), dtype=X.dtype)
    caches = []
    for t in range(S):
        h_new, c_new, cache = _cell_forward(model.encoder, X[:, t], h, c)
        m = mask[:, t][:, None]
        h = np.where(m, h_new, h)
        c = np.where(m, c_new, c)
        if keep_cache:
            caches.append(cache)
    return h, c, caches


def _decode_batch(model: AutoencoderModel, h, c, n_steps, keep_cache=False):
    B = h.shape[0]
    zero_in = np.zeros((B, 1), dtype=h.dtype)
    Y = np.zeros((B, n_steps), dtype=h.dtype)
    hs, caches = [], []
    for _ in range(n_steps):
        h, c, cache = _cell_forward(model.decoder, zero_in, h, c)
        Y[:, len(hs)] = h @ model.head_w + model.head_b[0]
        hs.append(h)
        if keep_cache:
            caches.append(cache)
    return Y, hs, caches


def _loss_terms(Y, T, mask, lengths, kind):
    r = (Y - T) * mask
    per_seq_len = lengths.astype(Y.dtype)
    if kind == "l1":
        per = np.abs(r).sum(axis=1) / per_seq_len
        dY = np.sign(r) / per_seq_len[:, None]
    else:
        per = (r * r).sum(axis=1) / per_seq_len
        dY = 2.0 * r / per_seq_len[:, None]
    B = len(lengths)
    return per.mean(), dY * mask / B


def loss_and_grads(model: AutoencoderModel, seqs: Sequence, kind: str = "l2"):
    """Mean per-sequence reconstruction error and its gradient w.r.t. every parameter."""
    seqs = [prepare(s, model) for s in seqs]
    X, lengths, mask = pad_batch(seqs, model.input_size)
    S = X.shape[1]
    T = reversed_targets(X, lengths)
    h, c, enc_caches = _encode_batch(model, X, mask, keep_cache=True)
    Y, hs, dec_caches = _decode_batch(model, h, c if model.carry_cell else h, S, keep_cache=True)
    loss, dY = _loss_terms(Y, T, mask, lengths, kind)
    loss = float(loss)

    grads = {k: np.zeros_like(v) for k, v in model.parameters().items()}
    dec_g = (grads["decoder.W"], grads["decoder.U"], grads["decoder.b"])
    enc_g = (grads["encoder.W"], grads["encoder.U"], grads["encoder.b"])
    B, H = h.shape
    dh = np.zeros((B, H))
    dc = np.zeros((B, H))
    for j in range(S - 1, -1, -1):
        grads["head.w"] += dY[:, j] @ hs[j]
        grads["head.b"][0] += dY[:, j].sum()
        dh = dh + dY[:, j][:, None] * model.head_w[None, :]
        dh, dc = _cell_backward(model.decoder, dec_caches[j], dh, dc, dec_g)
    if not model.carry_cell:
        dh, dc = dh + dc, np.zeros_like(dc)
    for t in range(S - 1, -1, -1):
        m = mask[:, t][:, None]
        dh_step, dc_step = _cell_backward(model.encoder, enc_caches[t], dh * m, dc * m, enc_g)
        dh = np.where(m, dh_step, dh)
        dc = np.where(m, dc_step, dc)
    return loss, grads


def loss(model: AutoencoderModel, seqs: Sequence, kind: str = "l2", dtype=np.float64) -> float:
    """Mean over the batch of per-sequence mean error against the reversed input.

    ``dtype=np.longdouble`` evaluates the forward pass in extended precision.
    """
    seqs = [prepare(s, model) for s in seqs]
    X, lengths, mask = pad_batch(seqs, model.input_size)
    X = X.astype(dtype)
    T = reversed_targets(X, lengths)
    h, c, _ = _encode_batch(model, X, mask)
    Y, _, _ = _decode_batch(model, h, c if model.carry_cell else h, X.shape[1])
    value = _loss_terms(Y, T, mask, lengths, kind)[0]
    return float(value) if dtype == np.float64 else value


def encode_many(model: AutoencoderModel, seqs: Sequence) -> np.ndarray:
    """Final encoder hidden state per sequence, shape (n, H)."""
    if len(seqs) == 0:
        return np.zeros((0, model.hidden_size))
    seqs = [prepare(s, model) for s in seqs]
    X, _, mask = pad_batch(seqs, model.input_size)
    h, _, _ = _encode_batch(model, X, mask)
    return h


def encode(model: AutoencoderModel, sequence) -> np.ndarray:
    return encode_many(model, [sequence])[0]


def encode_state(model: AutoencoderModel, sequence) -> tuple[np.ndarray, np.ndarray]:
    seq = prepare(sequence, model)
    X, _, mask = pad_batch([seq], model.input_size)
    h, c, _ = _encode_batch(model, X, mask)
    return h[0], c[0]


def reconstruct(model: AutoencoderModel, code, length: int, cell=None) -> np.ndarray:
    """Decode ``length`` steps from ``code``.

    The decoder starts at h = code and c = ``cell`` if given, else c = code.
    The output is in reversed order relative to the encoded sequence.
    """
    if length < 1:
        raise ValueError("length must be >= 1")
    h = np.asarray(code, dtype=np.float64)[None, :]
    c = h.copy() if cell is None else np.asarray(cell, dtype=np.float64)[None, :]
    Y, _, _ = _decode_batch(model, h, c, length)
    return Y[0]


def autoencode(model: AutoencoderModel, sequence) -> np.ndarray:
    """Encode then decode; returns the reconstruction in input order."""
    seq = prepare(sequence, model)
    h, c = encode_state(model, seq)
    return reconstruct(model, h, len(seq), cell=c if model.carry_cell else None)[::-1]


# ---------------------------------------------------------------- gradient check


def _stacked_losses(model: AutoencoderModel, sequence, stacks: dict[str, np.ndarray], kind: str, dtype) -> np.ndarray:
    """Loss of one sequence under P parameter sets at once.

    ``stacks`` maps each parameter name to a (P, *shape) array. This is a
    separate forward implementation from the training path, with row p of
    every array belonging to parameter set p.
    """
    X = prepare(sequence, model).astype(dtype)
    n = len(X)
    H = model.hidden_size
    st = {k: v.astype(dtype) for k, v in stacks.items()}
    P = st["head.b"].shape[0]

    def step(cell, x, h, c):
        z = (np.einsum("pij,pj->pi", st[cell + ".W"], x) + np.einsum("pij,pj->pi", st[cell + ".U"], h)
             + st[cell + ".b"])
        i, f, o = sigmoid(z[:, :H]), sigmoid(z[:, H:2 * H]), sigmoid(z[:, 3 * H:])
        c = f * c + i * np.tanh(z[:, 2 * H:3 * H])
        return o * np.tanh(c), c

    h = np.zeros((P, H), dtype=dtype)
    c = np.zeros((P, H), dtype=dtype)
    for t in range(n):
        h, c = step("encoder", np.broadcast_to(X[t], (P, X.shape[1])), h, c)
    if not model.carry_cell:
        c = h
    zero = np.zeros((P, 1), dtype=dtype)
    target = X[::-1, 0]
    total = np.zeros(P, dtype=dtype)
    for t in range(n):
        h, c = step("decoder", zero, h, c)
        r = (h * st["head.w"]).sum(axis=1) + st["head.b"][:, 0] - target[t]
        total += np.abs(r) if kind == "l1" else r * r
    return total / n


def grad_check(model: AutoencoderModel, sequence, epsilon: float = 1e-5, kind: str = "l2",
               fd_dtype=np.longdouble, block: int = 512) -> float:
    """Max relative error between analytic and central-difference gradients.

    The analytic side is the float64 backward pass. The finite differences
    evaluate the loss in ``fd_dtype`` (extended precision by default) so that
    round-off does not swamp gradients near the 1e-8 denominator floor. All
    perturbed parameter sets are evaluated together, ``block`` at a time.
    """
    _, analytic = loss_and_grads(model, [sequence], kind)
    params = model.parameters()
    slots = [(name, k) for name, p in params.items() for k in range(p.size)]
    worst = 0.0
    for lo in range(0, len(slots), block):
        chunk = slots[lo:lo + block]
        plus = {k: np.repeat(v[None], len(chunk), axis=0) for k, v in params.items()}
        minus = {k: v.copy() for k, v in plus.items()}
        for r, (name, k) in enumerate(chunk):
            plus[name][r].reshape(-1)[k] += epsilon
            minus[name][r].reshape(-1)[k] -= epsilon
        # the realised float64 step, not the nominal 2 * epsilon
        step = np.array([plus[name][r].reshape(-1)[k] for r, (name, k) in enumerate(chunk)], dtype=fd_dtype)
        step -= np.array([minus[name][r].reshape(-1)[k] for r, (name, k) in enumerate(chunk)], dtype=fd_dtype)
        lp = _stacked_losses(model, sequence, plus, kind, fd_dtype)
        lm = _stacked_losses(model, sequence, minus, kind, fd_dtype)
        gn = ((lp - lm) / step).astype(np.float64)
        ga = np.array([analytic[name].reshape(-1)[k] for name, k in chunk])
        rel = np.abs(ga - gn) / np.maximum(np.maximum(np.abs(ga), np.abs(gn)), 1e-8)
        worst = max(worst, float(rel.max()))
    return worst


# ---------------------------------------------------------------- training


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.02
    epochs: int = 10
    batch_size: int = 32
    grad_clip_norm: float = 1.0
    seed: int = 0
    min_seq_len: int = 2
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    hidden_size: int = 16
    max_seq_len: int = 64
    loss: str = "l2"
    use_polarity: bool = False
    carry_cell: bool = False

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.hidden_size < 1 or self.max_seq_len < 1:
            raise ValueError("hidden_size and max_seq_len must be >= 1")
        if self.min_seq_len < 1:
            raise ValueError("min_seq_len must be >= 1")
        if self.loss not in ("l1", "l2"):
            raise ValueError("loss must be 'l1' or 'l2'")


@dataclass
class TrainingReport:
    epoch_loss: list[float] = field(default_factory=list)
    n_sequences: int = 0
    n_batches_per_epoch: int = 0
    wall_time: float = 0.0

    def to_dict(self, include_time: bool = False) -> dict:
        d = {
            "epoch_loss": self.epoch_loss,
            "n_sequences": self.n_sequences,
            "n_batches_per_epoch": self.n_batches_per_epoch,
        }
        if include_time:
            d["wall_time"] = self.wall_time
        return d


def collect_sequences(dataset: Iterable, min_seq_len: int = 1, max_seq_len: int | None = None) -> list[np.ndarray]:
    """Flatten PixelSequences dicts (or raw sequences) into a list, in a stable order."""
    out = []
    for item in dataset:
        seqs = [item[k] for k in sorted(item)] if isinstance(item, Mapping) else [item]
        for s in seqs:
            a = np.asarray(s, dtype=np.float64)
            if len(a) >= min_seq_len:
                out.append(a if max_seq_len is None else a[-max_seq_len:])
    return out


def clip_by_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


def train(dataset: Iterable, cfg: TrainConfig | None = None,
          model: AutoencoderModel | None = None) -> tuple[AutoencoderModel, TrainingReport]:
    cfg = cfg or TrainConfig()
    seqs = collect_sequences(dataset, cfg.min_seq_len, cfg.max_seq_len)
    if not seqs:
        raise ValueError(f"no training sequences with length >= {cfg.min_seq_len}")
    input_size = 2 if cfg.use_polarity else 1
    if model is None:
        model = AutoencoderModel.initialize(cfg.hidden_size, cfg.max_seq_len, input_size, cfg.seed,
                                           cfg.carry_cell)
    else:
        model = model.copy()
    rng = np.random.default_rng([cfg.seed, 1])
    params = model.parameters()
    m = {k: np.zeros_like(v) for k, v in params.items()}
    v = {k: np.zeros_like(v) for k, v in params.items()}
    step = 0
    report = TrainingReport(n_sequences=len(seqs))
    started = time.perf_counter()
    n = len(seqs)
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        total, batches = 0.0, 0
        for lo in range(0, n, cfg.batch_size):
            batch = [seqs[k] for k in order[lo:lo + cfg.batch_size]]
            value, grads = loss_and_grads(model, batch, cfg.loss)
            clip_by_global_norm(grads, cfg.grad_clip_norm)
            step += 1
            bc1 = 1.0 - cfg.beta1**step
            bc2 = 1.0 - cfg.beta2**step
            for k, p in params.items():
                g = grads[k]
                m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g
                v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g
                p -= cfg.learning_rate * (m[k] / bc1) / (np.sqrt(v[k] / bc2) + cfg.adam_eps)
            total += value
            batches += 1
        report.epoch_loss.append(total / batches)
        report.n_batches_per_epoch = batches
    report.wall_time = time.perf_counter() - started
    return model, report


# ---------------------------------------------------------------- grid extraction


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("EVLSTM_THREADS", "1")))
    except ValueError:
        return 1


def window_sequences(window: Window, norm: Norm | str | None = None, use_polarity: bool = False):
    """Per-pixel model inputs for a window, optionally with polarity as a second feature."""
    seqs = per_pixel_sequences(window, norm or Norm.WINDOW_SPAN)
    if not use_polarity:
        return seqs
    ev = window.events
    pix = ev.pixel_index
    order = np.argsort(pix, kind="stable")
    out = {}
    w = window.geometry.width
    for (x, y), tn in seqs.items():
        sel = order[pix[order] == y * w + x]
        out[(x, y)] = np.stack([tn, ev.p[sel].astype(np.float64)], axis=1)
    return out


def extract_grid(window: Window, model: AutoencoderModel, geometry: SensorGeometry | None = None,
                 norm: Norm | str | None = None, workers: int | None = None,
                 chunk_size: int = 256) -> Grid:
    """LSTM time surface: encoder feature at every active pixel, zeros elsewhere."""
    geometry = geometry or window.geometry
    grid = np.zeros((geometry.height, geometry.width, model.hidden_size))
    if len(window) == 0:
        return Grid(grid)
    seqs = window_sequences(window, norm, use_polarity=model.input_size == 2)
    keys = sorted(seqs, key=lambda k: (k[1], k[0]))
    chunks = [keys[i:i + chunk_size] for i in range(0, len(keys), chunk_size)]
    workers = workers or _threads()

    def run(chunk):
        return chunk, encode_many(model, [seqs[k] for k in chunk])

    if workers > 1 and len(chunks) > 1:
        with cf.ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, chunks))
    else:
        results = [run(ch) for ch in chunks]
    for chunk, feats in results:
        for (x, y), f in zip(chunk, feats):
            grid[y, x] = f
    return Grid(grid)


# ---------------------------------------------------------------- checkpoints


def encode_model(model: AutoencoderModel) -> bytes:
    head = _MODEL_HEADER.pack(
        MODEL_MAGIC, model.format_version, model.hidden_size, model.max_seq_len, model.input_size,
        _FLAG_CARRY_CELL if model.carry_cell else 0,
    )
    body = b"".join(np.ascontiguousarray(p, dtype="<f8").tobytes() for p in model.parameters().values())
    return head + body


def decode_model(data: bytes) -> AutoencoderModel:
    if len(data) < _MODEL_HEADER.size:
        raise ModelFormatError("truncated checkpoint header")
    magic, version, H, s_max, input_size, flags = _MODEL_HEADER.unpack_from(data)
    if magic != MODEL_MAGIC:
        raise ModelFormatError(f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"checkpoint version {version} != supported version {FORMAT_VERSION}")
    if H < 1 or input_size < 1 or s_max < 1:
        raise ModelFormatError("invalid checkpoint dimensions")
    if flags & ~_FLAG_CARRY_CELL:
        raise ModelFormatError(f"unknown checkpoint flags {flags:#x}")
    template = AutoencoderModel.zeros(H, s_max, input_size, bool(flags & _FLAG_CARRY_CELL))
    need = sum(p.size for p in template.parameters().values()) * 8
    body = data[_MODEL_HEADER.size:]
    if len(body) != need:
        raise ModelFormatError(f"checkpoint body has {len(body)} bytes, expected {need}")
    values = np.frombuffer(body, dtype="<f8")
    off = 0
    for p in template.parameters().values():
        p.reshape(-1)[:] = values[off:off + p.size]
        off += p.size
    return template


def save_model(model: AutoencoderModel, path) -> None:
    _atomic_write(path, encode_model(model))


def load_model(path) -> AutoencoderModel:
    return decode_model(Path(path).read_bytes())
