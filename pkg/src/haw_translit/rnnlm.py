"""Stacked LSTM character language model in numpy.

Forward and backward passes are written out by hand. Training is plain
SGD with truncated backpropagation through time, a global gradient-norm
cap and inverted dropout on the input, between layers and after the top
layer. A BOS input resets the recurrent state, so streaming training over
concatenated lines matches per-line inference from a zero state.
"""

from __future__ import annotations

import json
import logging
import math
import struct
from dataclasses import dataclass, field
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np

from .wfst import BOS, EOS, SymbolTable

log = logging.getLogger(__name__)

MAGIC = b"HAWLSTM\x00"
VERSION = 1
INIT_SCALE = 0.08


@dataclass(frozen=True)
class LstmConfig:
    vocab: int
    layers: int = 3
    hidden: int = 200
    dropout: float = 0.2

    def __post_init__(self):
        if self.layers < 1 or self.hidden < 1 or self.vocab < 1:
            raise ValueError("layers, hidden and vocab must be >= 1")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must be in [0, 1)")


@dataclass(frozen=True)
class TrainConfig:
    batch: int = 30
    lr: float = 10.0
    tbptt: int = 45
    clip_norm: float | None = 1.0
    epochs: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.batch < 1 or self.tbptt < 1 or self.epochs < 0:
            raise ValueError("batch and tbptt must be positive, epochs non-negative")
        if self.lr < 0:
            raise ValueError("learning rate must be non-negative")


@dataclass
class LstmParams:
    """Weights for every layer plus embedding and softmax projection.

    Gate columns are ordered input, forget, candidate, output.
    """

    config: LstmConfig
    embed: np.ndarray  # (vocab, hidden)
    W: list[np.ndarray]  # (in, 4H) per layer
    U: list[np.ndarray]  # (H, 4H) per layer
    b: list[np.ndarray]  # (4H,) per layer
    out_W: np.ndarray  # (hidden, vocab)
    out_b: np.ndarray  # (vocab,)
    symbols: list[str] = field(default_factory=list)

    def groups(self) -> list[tuple[str, np.ndarray]]:
        """Parameter blocks in serialisation order."""
        out = [("embed", self.embed)]
        for i in range(self.config.layers):
            out += [(f"W{i}", self.W[i]), (f"U{i}", self.U[i]), (f"b{i}", self.b[i])]
        out += [("out_W", self.out_W), ("out_b", self.out_b)]
        return out

    def copy(self) -> "LstmParams":
        return LstmParams(self.config, self.embed.copy(), [w.copy() for w in self.W],
                          [u.copy() for u in self.U], [b.copy() for b in self.b],
                          self.out_W.copy(), self.out_b.copy(), list(self.symbols))

    def zeros_like(self) -> "LstmParams":
        z = self.copy()
        for _, arr in z.groups():
            arr[...] = 0.0
        return z

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(to_bytes(self))

    @classmethod
    def load(cls, path) -> "LstmParams":
        with open(path, "rb") as fh:
            return from_bytes(fh.read())


class RnnState(NamedTuple):
    h: tuple[np.ndarray, ...]
    c: tuple[np.ndarray, ...]


def init_params(config: LstmConfig, seed: int = 0, scale: float = INIT_SCALE,
                symbols: Sequence[str] = ()) -> LstmParams:
    """Uniform(-scale, scale) weights, zero biases, forget-gate bias 1."""
    rng = np.random.default_rng(seed)
    H, V = config.hidden, config.vocab

    def uni(*shape):
        return rng.uniform(-scale, scale, size=shape)

    W, U, b = [], [], []
    for _ in range(config.layers):
        W.append(uni(H, 4 * H))
        U.append(uni(H, 4 * H))
        bias = np.zeros(4 * H)
        bias[H:2 * H] = 1.0
        b.append(bias)
    return LstmParams(config, uni(V, H), W, U, b, uni(H, V), np.zeros(V), list(symbols))


def zero_state(config: LstmConfig, batch: int | None = None) -> RnnState:
    shape = (config.hidden,) if batch is None else (batch, config.hidden)
    zeros = tuple(np.zeros(shape) for _ in range(config.layers))
    return RnnState(zeros, tuple(np.zeros(shape) for _ in range(config.layers)))


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _log_softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def step_batch(params: LstmParams, state: RnnState, symbols: np.ndarray) -> tuple[RnnState, np.ndarray]:
    """One inference step for a batch of states, shape (B, H) per layer."""
    cfg = params.config
    symbols = np.asarray(symbols)
    if symbols.size and (symbols.min() < 0 or symbols.max() >= cfg.vocab):
        raise ValueError("symbol id outside the model vocabulary")
    keep = (symbols != BOS).astype(float)[:, None]
    x = params.embed[symbols]
    H = cfg.hidden
    hs, cs = [], []
    for layer in range(cfg.layers):
        h_prev = state.h[layer] * keep
        c_prev = state.c[layer] * keep
        z = x @ params.W[layer] + h_prev @ params.U[layer] + params.b[layer]
        i = _sigmoid(z[:, :H])
        f = _sigmoid(z[:, H:2 * H])
        g = np.tanh(z[:, 2 * H:3 * H])
        o = _sigmoid(z[:, 3 * H:])
        c = f * c_prev + i * g
        h = o * np.tanh(c)
        hs.append(h)
        cs.append(c)
        x = h
    logp = _log_softmax(x @ params.out_W + params.out_b)
    return RnnState(tuple(hs), tuple(cs)), logp


def step(params: LstmParams, state: RnnState, symbol: int) -> tuple[RnnState, np.ndarray]:
    """Feed one symbol; return the new state and log-distribution of the next one."""
    if not 0 <= symbol < params.config.vocab:
        raise ValueError(f"symbol id {symbol} outside vocabulary of {params.config.vocab}")
    batched = RnnState(tuple(h[None] for h in state.h), tuple(c[None] for c in state.c))
    new, logp = step_batch(params, batched, np.array([symbol]))
    return RnnState(tuple(h[0] for h in new.h), tuple(c[0] for c in new.c)), logp[0]


def initial(params: LstmParams) -> tuple[RnnState, np.ndarray]:
    """State and predictive distribution after feeding BOS to a zero state."""
    return step(params, zero_state(params.config), BOS)


# Training-time forward/backward over a (T, B) block.


def _gate_grads(dc, dh, cache):
    """Gradients w.r.t. pre-activations of one LSTM cell.

    ``dh`` is the loss gradient at the cell output and ``dc`` the gradient
    flowing into the cell state from the next step.
    """
    i, f, g, o, c_prev, tanh_c = cache
    do = dh * tanh_c
    dc = dc + dh * o * (1.0 - tanh_c ** 2)
    di = dc * g
    df = dc * c_prev
    dg = dc * i
    dz = np.concatenate([di * i * (1 - i), df * f * (1 - f), dg * (1 - g ** 2), do * o * (1 - o)], axis=1)
    return dz, dc * f


def _dropout_mask(rng, shape, p):
    if rng is None or p == 0:
        return None
    return (rng.random(shape) >= p) / (1.0 - p)


def loss_and_grads(params: LstmParams, inputs: np.ndarray, targets: np.ndarray,
                   weights: np.ndarray, state: RnnState | None = None,
                   rng: np.random.Generator | None = None,
                   dropout: float | None = None) -> tuple[float, LstmParams, RnnState]:
    """Mean weighted NLL of ``targets`` given ``inputs`` (both (T, B)).

    Returns the loss, gradients (as an ``LstmParams``) and the final state.
    Dropout is applied only when an ``rng`` is passed.

    The block is processed layer by layer: only the recurrent products run
    per time step, while input projections, weight gradients and the output
    layer are single matrix products over all T*B positions.
    """
    cfg = params.config
    T, B = inputs.shape
    H, L = cfg.hidden, cfg.layers
    p = cfg.dropout if dropout is None else dropout
    if state is None:
        state = zero_state(cfg, B)
    grads = params.zeros_like()
    norm = weights.sum()
    if T == 0 or norm == 0:
        return 0.0, grads, state

    keep = (inputs != BOS).astype(float)[:, :, None]
    x = params.embed[inputs]
    m_in = _dropout_mask(rng, x.shape, p)
    layer_inputs = [x * m_in if m_in is not None else x]
    masks = [m_in]
    caches = []
    h_last, c_last = [], []
    for layer in range(L):
        X = layer_inputs[-1]
        zx = (X.reshape(T * B, -1) @ params.W[layer] + params.b[layer]).reshape(T, B, 4 * H)
        U = params.U[layer]
        acts = np.empty((T, B, 4 * H))
        c_prevs = np.empty((T, B, H))
        h_prevs = np.empty((T, B, H))
        tanh_cs = np.empty((T, B, H))
        hs = np.empty((T, B, H))
        h, c = state.h[layer], state.c[layer]
        for t in range(T):
            h_prev = h * keep[t]
            c_prev = c * keep[t]
            z = zx[t] + h_prev @ U
            a = acts[t]
            a[:, :2 * H] = _sigmoid(z[:, :2 * H])
            a[:, 2 * H:3 * H] = np.tanh(z[:, 2 * H:3 * H])
            a[:, 3 * H:] = _sigmoid(z[:, 3 * H:])
            c = a[:, H:2 * H] * c_prev + a[:, :H] * a[:, 2 * H:3 * H]
            tanh_cs[t] = np.tanh(c)
            h = a[:, 3 * H:] * tanh_cs[t]
            c_prevs[t], h_prevs[t], hs[t] = c_prev, h_prev, h
        h_last.append(h)
        c_last.append(c)
        m = _dropout_mask(rng, hs.shape, p)
        masks.append(m)
        layer_inputs.append(hs * m if m is not None else hs)
        caches.append((acts, c_prevs, tanh_cs, h_prevs))

    top = layer_inputs[-1].reshape(T * B, H)
    logp = _log_softmax(top @ params.out_W + params.out_b)
    rows = np.arange(T * B)
    flat_t, flat_w = targets.reshape(-1), weights.reshape(-1)
    loss = -float((logp[rows, flat_t] * flat_w).sum()) / norm

    dlogits = np.exp(logp)
    dlogits[rows, flat_t] -= 1.0
    dlogits *= (flat_w / norm)[:, None]
    grads.out_W += top.T @ dlogits
    grads.out_b += dlogits.sum(axis=0)
    dx = (dlogits @ params.out_W.T).reshape(T, B, H)
    for layer in reversed(range(L)):
        acts, c_prevs, tanh_cs, h_prevs = caches[layer]
        m = masks[layer + 1]
        dhs = dx * m if m is not None else dx
        U_T = params.U[layer].T
        dz_all = np.empty((T, B, 4 * H))
        dh_next = np.zeros((B, H))
        dc_next = np.zeros((B, H))
        for t in reversed(range(T)):
            a = acts[t]
            cache = (a[:, :H], a[:, H:2 * H], a[:, 2 * H:3 * H], a[:, 3 * H:], c_prevs[t], tanh_cs[t])
            dz, dc_prev = _gate_grads(dc_next, dhs[t] + dh_next, cache)
            dz_all[t] = dz
            dh_next = (dz @ U_T) * keep[t]
            dc_next = dc_prev * keep[t]
        dz_flat = dz_all.reshape(T * B, 4 * H)
        X = layer_inputs[layer]
        grads.W[layer] += X.reshape(T * B, -1).T @ dz_flat
        grads.U[layer] += h_prevs.reshape(T * B, H).T @ dz_flat
        grads.b[layer] += dz_flat.sum(axis=0)
        dx = (dz_flat @ params.W[layer].T).reshape(T, B, -1)
    if masks[0] is not None:
        dx = dx * masks[0]
    np.add.at(grads.embed, inputs.reshape(-1), dx.reshape(T * B, -1))
    return loss, grads, RnnState(tuple(h_last), tuple(c_last))


def grad_norm(grads: LstmParams) -> float:
    return math.sqrt(sum(float((g * g).sum()) for _, g in grads.groups()))


def make_stream(lines: Iterable[Sequence[int]]) -> np.ndarray:
    """Concatenate encoded lines as BOS c1 .. cn EOS BOS ..."""
    out: list[int] = []
    for ids in lines:
        out.append(BOS)
        out.extend(ids)
        out.append(EOS)
    return np.array(out, dtype=np.int64)


def _batchify(stream: np.ndarray, batch: int) -> tuple[np.ndarray, np.ndarray]:
    inputs, targets = stream[:-1], stream[1:]
    length = len(inputs) // batch
    if length == 0:
        raise ValueError(f"corpus too small for batch size {batch}")
    n = length * batch
    return inputs[:n].reshape(batch, length).T, targets[:n].reshape(batch, length).T


def train(corpus: Sequence[Sequence[int]], lstm_config: LstmConfig, train_config: TrainConfig,
          symbols: Sequence[str] = (), params: LstmParams | None = None,
          on_step: Callable[[int, float], None] | None = None,
          on_epoch: Callable[[int, float, LstmParams], None] | None = None) -> LstmParams:
    """SGD with truncated BPTT over encoded lines (lists of symbol ids).

    Line order is reshuffled every epoch from the seed; the stream is cut
    into ``batch`` contiguous rows and state is carried between unrolls.
    """
    if not corpus:
        raise ValueError("empty training corpus")
    rng = np.random.default_rng(train_config.seed)
    if params is None:
        params = init_params(lstm_config, int(rng.integers(2 ** 31)), symbols=symbols)
    else:
        params = params.copy()
    cfg = params.config
    step_no = 0
    for epoch in range(train_config.epochs):
        order = rng.permutation(len(corpus))
        inputs, targets = _batchify(make_stream(corpus[i] for i in order), train_config.batch)
        weights = (targets != BOS).astype(float)
        state = zero_state(cfg, train_config.batch)
        losses = []
        for start in range(0, inputs.shape[0], train_config.tbptt):
            sl = slice(start, start + train_config.tbptt)
            loss, grads, state = loss_and_grads(params, inputs[sl], targets[sl], weights[sl], state, rng)
            if not math.isfinite(loss):
                raise FloatingPointError(f"non-finite loss {loss} at epoch {epoch} step {step_no}")
            norm = grad_norm(grads)
            if not math.isfinite(norm):
                raise FloatingPointError(f"non-finite gradient norm at epoch {epoch} step {step_no}")
            scale = train_config.lr
            if train_config.clip_norm and norm > train_config.clip_norm:
                scale *= train_config.clip_norm / norm
            for (_, p), (_, g) in zip(params.groups(), grads.groups()):
                p -= scale * g
            losses.append(loss)
            if on_step:
                on_step(step_no, loss)
            step_no += 1
        mean = float(np.mean(losses)) if losses else float("nan")
        log.info("epoch %d: mean loss %.4f", epoch + 1, mean)
        if on_epoch:
            on_epoch(epoch + 1, mean, params)
    return params


def sequence_logprob(params: LstmParams, ids: Sequence[int]) -> float:
    """Log probability of ``ids`` followed by EOS, stepping from BOS."""
    state, logp = initial(params)
    total = 0.0
    for sym in list(ids) + [EOS]:
        total += float(logp[sym])
        if sym != EOS:
            state, logp = step(params, state, sym)
    return total


def line_logprobs(params: LstmParams, lines: Sequence[Sequence[int]], batch: int = 64) -> list[float]:
    """Batched equivalent of :func:`sequence_logprob` for many lines."""
    out = []
    for start in range(0, len(lines), batch):
        chunk = lines[start:start + batch]
        T = max(len(x) for x in chunk) + 1
        B = len(chunk)
        inputs = np.full((T, B), EOS, dtype=np.int64)
        targets = np.full((T, B), EOS, dtype=np.int64)
        mask = np.zeros((T, B))
        for j, ids in enumerate(chunk):
            seq = [BOS] + list(ids)
            inputs[:len(seq), j] = seq
            targets[:len(seq), j] = list(ids) + [EOS]
            mask[:len(seq), j] = 1.0
        state = zero_state(params.config, B)
        totals = np.zeros(B)
        for t in range(T):
            state, logp = step_batch(params, state, inputs[t])
            totals += logp[np.arange(B), targets[t]] * mask[t]
        out.extend(totals.tolist())
    return out


def perplexity(params: LstmParams, lines: Sequence[Sequence[int]]) -> float:
    """Per-symbol perplexity over encoded lines, EOS included."""
    if not lines:
        raise ValueError("no lines to score")
    total = sum(line_logprobs(params, lines))
    events = sum(len(x) + 1 for x in lines)
    return math.exp(-total / events)


def gradient_check(config: LstmConfig | None = None, seed: int = 0, length: int = 6,
                   batch: int = 2, h: float = 1e-5, scale: float = 0.5) -> float:
    """Max relative error between analytic and central-difference gradients.

    Every entry of every parameter block is checked, dropout off, starting
    from a random non-zero state so the recurrent paths are exercised.
    """
    config = config or LstmConfig(vocab=7, layers=2, hidden=5, dropout=0.0)
    rng = np.random.default_rng(seed)
    params = init_params(config, seed, scale=scale)
    for _, arr in params.groups():
        arr += rng.uniform(-0.1, 0.1, size=arr.shape)
    inputs = rng.integers(0, config.vocab, size=(length, batch))
    if length > 2:
        inputs[length // 2, 0] = BOS
    targets = rng.integers(0, config.vocab, size=(length, batch))
    weights = rng.uniform(0.5, 1.5, size=(length, batch))
    state = RnnState(tuple(rng.normal(size=(batch, config.hidden)) * 0.5 for _ in range(config.layers)),
                     tuple(rng.normal(size=(batch, config.hidden)) * 0.5 for _ in range(config.layers)))

    def loss_of(p):
        return loss_and_grads(p, inputs, targets, weights, state, dropout=0.0)[0]

    _, grads, _ = loss_and_grads(params, inputs, targets, weights, state, dropout=0.0)
    worst = 0.0
    for (name, arr), (_, garr) in zip(params.groups(), grads.groups()):
        flat = arr.reshape(-1)
        gflat = garr.reshape(-1)
        for k in range(flat.size):
            old = flat[k]
            flat[k] = old + h
            up = loss_of(params)
            flat[k] = old - h
            down = loss_of(params)
            flat[k] = old
            numeric = (up - down) / (2 * h)
            analytic = gflat[k]
            # central differences carry ~1e-11 roundoff at h=1e-5, so tiny
            # entries are compared on an absolute 1e-6 scale instead
            denom = max(abs(numeric), abs(analytic), 1e-6)
            worst = max(worst, abs(numeric - analytic) / denom)
    return worst


# Serialisation


def to_bytes(params: LstmParams) -> bytes:
    cfg = params.config
    syms = json.dumps(params.symbols, ensure_ascii=False).encode("utf-8")
    header = MAGIC + struct.pack("<IIIId", VERSION, cfg.layers, cfg.hidden, cfg.vocab, cfg.dropout)
    header += struct.pack("<I", len(syms)) + syms
    blocks = [np.ascontiguousarray(arr, dtype="<f8").tobytes() for _, arr in params.groups()]
    return header + b"".join(blocks)


def from_bytes(data: bytes) -> LstmParams:
    if not data.startswith(MAGIC):
        raise ValueError("not an LSTM model file (bad magic)")
    off = len(MAGIC)
    version, layers, hidden, vocab, dropout = struct.unpack_from("<IIIId", data, off)
    if version != VERSION:
        raise ValueError(f"unsupported model version {version}")
    off += struct.calcsize("<IIIId")
    (nsym,) = struct.unpack_from("<I", data, off)
    off += 4
    symbols = json.loads(data[off:off + nsym].decode("utf-8"))
    off += nsym
    config = LstmConfig(vocab=vocab, layers=layers, hidden=hidden, dropout=dropout)
    params = init_params(config, 0, scale=0.0, symbols=symbols)
    for _, arr in params.groups():
        n = arr.size * 8
        if off + n > len(data):
            raise ValueError("truncated model file")
        arr[...] = np.frombuffer(data, dtype="<f8", count=arr.size, offset=off).reshape(arr.shape)
        off += n
    if off != len(data):
        raise ValueError("trailing bytes in model file")
    return params


def check_symbols(params: LstmParams, syms: SymbolTable) -> None:
    if params.symbols and params.symbols != syms.symbols():
        raise ValueError("LSTM model symbol table does not match")
    if params.config.vocab != len(syms):
        raise ValueError(f"LSTM vocab {params.config.vocab} != symbol table size {len(syms)}")
