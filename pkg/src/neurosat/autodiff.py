"""Small reverse-mode autodiff over float64 numpy arrays.

A :class:`Tape` owns one forward computation.  Each op method computes its
value eagerly and records a closure that pushes the output gradient back to
its inputs; :meth:`Tape.backward` runs the closures in reverse.  Parameters
are ordinary :class:`Tensor` leaves with ``requires_grad=True`` whose grads
accumulate across tapes until the optimizer consumes them.
"""

from __future__ import annotations

import json
import struct
from collections import OrderedDict
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np
import scipy.sparse as sp

DTYPE = np.float64
LN_EPS = 1e-6


class Tensor:
    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=DTYPE)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def zero_grad(self) -> None:
        self.grad = None

    def _acc(self, g: np.ndarray) -> None:
        # grads are never mutated in place, so sharing ``g`` is safe
        self.grad = g if self.grad is None else self.grad + g

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # exp(-|x|) never overflows
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


class Tape:
    """Records backward closures; ``Tape(grad=False)`` evaluates without recording."""

    def __init__(self, grad: bool = True):
        self.grad = grad
        self._ops: list[Callable[[], None]] = []

    def __len__(self) -> int:
        return len(self._ops)

    def _out(self, data: np.ndarray, *inputs: Tensor) -> Tensor:
        return Tensor(data, self.grad and any(t.requires_grad for t in inputs))

    def backward(self, loss: Tensor) -> None:
        if loss.data.size != 1:
            raise ValueError("backward needs a scalar loss")
        loss.grad = np.ones_like(loss.data)
        for fn in reversed(self._ops):
            fn()
        self._ops.clear()

    # -- linear algebra ---------------------------------------------------

    def matmul(self, a: Tensor, b: Tensor) -> Tensor:
        if a.shape[-1] != b.shape[0]:
            raise ValueError(f"matmul shape mismatch {a.shape} @ {b.shape}")
        out = self._out(a.data @ b.data, a, b)
        if out.requires_grad:
            def back():
                g = out.grad
                if g is None:
                    return
                if a.requires_grad:
                    a._acc(g @ b.data.T)
                if b.requires_grad:
                    b._acc(a.data.T @ g)
            self._ops.append(back)
        return out

    def linear(self, x: Tensor, w: Tensor, b: Tensor) -> Tensor:
        """``x @ w + b`` with ``b`` added to every row."""
        if x.shape[-1] != w.shape[0] or b.shape != (w.shape[1],):
            raise ValueError(f"linear shape mismatch {x.shape}, {w.shape}, {b.shape}")
        out = self._out(x.data @ w.data + b.data, x, w, b)
        if out.requires_grad:
            def back():
                g = out.grad
                if g is None:
                    return
                if x.requires_grad:
                    x._acc(g @ w.data.T)
                if w.requires_grad:
                    w._acc(x.data.T @ g)
                if b.requires_grad:
                    b._acc(g.sum(axis=0))
            self._ops.append(back)
        return out

    def spmm(self, m: sp.csr_matrix, x: Tensor, mt: sp.csr_matrix | None = None) -> Tensor:
        """Sparse ``m @ x``; ``mt`` is an optional precomputed transpose for the backward pass."""
        if m.shape[1] != x.shape[0]:
            raise ValueError(f"spmm shape mismatch {m.shape} @ {x.shape}")
        out = self._out(np.asarray(m @ x.data), x)
        if out.requires_grad:
            mt_ = mt if mt is not None else m.T.tocsr()

            def back():
                if out.grad is not None:
                    x._acc(np.asarray(mt_ @ out.grad))
            self._ops.append(back)
        return out

    # -- elementwise ------------------------------------------------------

    def add(self, a: Tensor, b: Tensor) -> Tensor:
        if a.shape != b.shape:
            raise ValueError(f"add shape mismatch {a.shape}, {b.shape}")
        out = self._out(a.data + b.data, a, b)
        if out.requires_grad:
            def back():
                if out.grad is None:
                    return
                if a.requires_grad:
                    a._acc(out.grad)
                if b.requires_grad:
                    b._acc(out.grad)
            self._ops.append(back)
        return out

    def mul(self, a: Tensor, b: Tensor) -> Tensor:
        if a.shape != b.shape:
            raise ValueError(f"mul shape mismatch {a.shape}, {b.shape}")
        out = self._out(a.data * b.data, a, b)
        if out.requires_grad:
            def back():
                if out.grad is None:
                    return
                if a.requires_grad:
                    a._acc(out.grad * b.data)
                if b.requires_grad:
                    b._acc(out.grad * a.data)
            self._ops.append(back)
        return out

    def scale(self, a: Tensor, c: float) -> Tensor:
        out = self._out(a.data * c, a)
        if out.requires_grad:
            def back():
                if out.grad is not None:
                    a._acc(out.grad * c)
            self._ops.append(back)
        return out

    def _unary(self, a: Tensor, value: np.ndarray, dfn: Callable[[np.ndarray], np.ndarray]) -> Tensor:
        out = self._out(value, a)
        if out.requires_grad:
            def back():
                if out.grad is not None:
                    a._acc(out.grad * dfn(value))
            self._ops.append(back)
        return out

    def relu(self, a: Tensor) -> Tensor:
        mask = a.data > 0
        return self._unary(a, np.where(mask, a.data, 0.0), lambda v: mask)

    def sigmoid(self, a: Tensor) -> Tensor:
        return self._unary(a, _sigmoid(a.data), lambda s: s * (1.0 - s))

    def tanh(self, a: Tensor) -> Tensor:
        return self._unary(a, np.tanh(a.data), lambda t: 1.0 - t * t)

    # -- shape ------------------------------------------------------------

    def concat_cols(self, parts: Sequence[Tensor]) -> Tensor:
        out = self._out(np.concatenate([p.data for p in parts], axis=1), *parts)
        if out.requires_grad:
            bounds = np.cumsum([0] + [p.shape[1] for p in parts])

            def back():
                if out.grad is None:
                    return
                for p, lo, hi in zip(parts, bounds[:-1], bounds[1:]):
                    if p.requires_grad:
                        p._acc(out.grad[:, lo:hi])
            self._ops.append(back)
        return out

    def split_cols(self, a: Tensor, k: int) -> list[Tensor]:
        """Split columns into ``k`` equal blocks."""
        d = a.shape[1]
        if d % k:
            raise ValueError(f"cannot split {d} columns into {k} blocks")
        w = d // k
        outs = [self._out(a.data[:, i * w:(i + 1) * w], a) for i in range(k)]
        if outs[0].requires_grad:
            def back():
                grads = [o.grad if o.grad is not None else np.zeros_like(o.data) for o in outs]
                a._acc(np.concatenate(grads, axis=1))
            self._ops.append(back)
        return outs

    def flip(self, a: Tensor) -> Tensor:
        """Half rotation of the rows: literal rows swap with their negations."""
        r = a.shape[0]
        if r % 2:
            raise ValueError("flip needs an even number of rows")
        h = r // 2
        out = self._out(np.concatenate([a.data[h:], a.data[:h]]), a)
        if out.requires_grad:
            def back():
                if out.grad is not None:
                    g = out.grad
                    a._acc(np.concatenate([g[h:], g[:h]]))
            self._ops.append(back)
        return out

    def tile(self, v: Tensor, rows: int) -> Tensor:
        """Stack a length-d vector into a ``rows x d`` matrix."""
        out = self._out(np.tile(v.data, (rows, 1)), v)
        if out.requires_grad:
            def back():
                if out.grad is not None:
                    v._acc(out.grad.sum(axis=0))
            self._ops.append(back)
        return out

    # -- normalization & reductions ---------------------------------------

    def layernorm(self, x: Tensor, gain: Tensor, bias: Tensor, groups: int = 1, eps: float = LN_EPS) -> Tensor:
        """Normalize each row within ``groups`` equal column blocks, then apply gain and bias."""
        r, d = x.shape
        if d % groups or gain.shape != (d,) or bias.shape != (d,):
            raise ValueError(f"layernorm shape mismatch {x.shape}, {gain.shape}, {bias.shape}")
        w = d // groups
        xs = x.data.reshape(r, groups, w)
        mu = xs.mean(axis=2, keepdims=True)
        xc = xs - mu
        inv = 1.0 / np.sqrt((xc * xc).mean(axis=2, keepdims=True) + eps)
        xhat = (xc * inv).reshape(r, d)
        out = self._out(xhat * gain.data + bias.data, x, gain, bias)
        if out.requires_grad:
            def back():
                g = out.grad
                if g is None:
                    return
                if gain.requires_grad:
                    gain._acc((g * xhat).sum(axis=0))
                if bias.requires_grad:
                    bias._acc(g.sum(axis=0))
                if x.requires_grad:
                    dxh = (g * gain.data).reshape(r, groups, w)
                    xh = xhat.reshape(r, groups, w)
                    dx = inv * (dxh - dxh.mean(axis=2, keepdims=True) - xh * (dxh * xh).mean(axis=2, keepdims=True))
                    x._acc(dx.reshape(r, d))
            self._ops.append(back)
        return out

    def segment_mean(self, x: Tensor, seg: np.ndarray, n_seg: int) -> Tensor:
        """Mean of the entries of ``x`` (shape ``[r]`` or ``[r, 1]``) grouped by ``seg``."""
        flat = x.data.reshape(-1)
        counts = np.bincount(seg, minlength=n_seg).astype(DTYPE)
        if np.any(counts == 0):
            raise ValueError("empty segment in segment_mean")
        sums = np.zeros(n_seg)
        np.add.at(sums, seg, flat)
        out = self._out(sums / counts, x)
        if out.requires_grad:
            def back():
                if out.grad is not None:
                    x._acc((out.grad / counts)[seg].reshape(x.shape))
            self._ops.append(back)
        return out

    def sigmoid_ce(self, logits: Tensor, labels: np.ndarray) -> Tensor:
        """Mean over entries of ``softplus(z) - y * z``."""
        z = logits.data
        y = np.asarray(labels, dtype=DTYPE).reshape(z.shape)
        per = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
        out = self._out(np.asarray(per.mean()), logits)
        if out.requires_grad:
            def back():
                if out.grad is not None:
                    logits._acc(out.grad * (_sigmoid(z) - y) / z.size)
            self._ops.append(back)
        return out

    def sum_squares(self, tensors: Sequence[Tensor]) -> Tensor:
        out = self._out(np.asarray(sum(float(np.sum(t.data * t.data)) for t in tensors)), *tensors)
        if out.requires_grad:
            def back():
                if out.grad is None:
                    return
                for t in tensors:
                    if t.requires_grad:
                        t._acc(2.0 * out.grad * t.data)
            self._ops.append(back)
        return out

    def add_scalars(self, a: Tensor, b: Tensor) -> Tensor:
        out = self._out(np.asarray(a.data + b.data), a, b)
        if out.requires_grad:
            def back():
                if out.grad is None:
                    return
                for t in (a, b):
                    if t.requires_grad:
                        t._acc(out.grad)
            self._ops.append(back)
        return out


def sigmoid_ce_loss(logit: float, label: int) -> float:
    z = float(logit)
    return max(z, 0.0) - z * label + float(np.log1p(np.exp(-abs(z))))


# --- parameters, optimizer, clipping ----------------------------------------

class ParamTree:
    """Named parameter leaves with Adam moments, iterated in sorted-name order."""

    def __init__(self, leaves: dict[str, np.ndarray] | None = None):
        self._leaves: OrderedDict[str, Tensor] = OrderedDict()
        self.adam_m: dict[str, np.ndarray] = {}
        self.adam_v: dict[str, np.ndarray] = {}
        self.step = 0
        for name in sorted(leaves or {}):
            self.add(name, leaves[name])

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._leaves:
            raise KeyError(f"duplicate parameter {name}")
        t = Tensor(np.array(value, dtype=DTYPE), requires_grad=True)
        self._leaves[name] = t
        self._leaves = OrderedDict(sorted(self._leaves.items()))
        self.adam_m[name] = np.zeros_like(t.data)
        self.adam_v[name] = np.zeros_like(t.data)
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._leaves[name]

    def __contains__(self, name: str) -> bool:
        return name in self._leaves

    def __iter__(self) -> Iterator[str]:
        return iter(self._leaves)

    def __len__(self) -> int:
        return len(self._leaves)

    def items(self) -> Iterable[tuple[str, Tensor]]:
        return self._leaves.items()

    def tensors(self) -> list[Tensor]:
        return list(self._leaves.values())

    def subtree(self, prefix: str) -> dict[str, Tensor]:
        p = prefix + "."
        return {k[len(p):]: v for k, v in self._leaves.items() if k.startswith(p)}

    def zero_grad(self) -> None:
        for t in self._leaves.values():
            t.grad = None

    def grads(self) -> dict[str, np.ndarray]:
        return {k: (t.grad if t.grad is not None else np.zeros_like(t.data)) for k, t in self._leaves.items()}

    def n_params(self) -> int:
        return sum(t.data.size for t in self._leaves.values())

    def values(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self._leaves.items()}


def global_norm(params: ParamTree) -> float:
    total = 0.0
    for t in params.tensors():
        if t.grad is not None:
            total += float(np.sum(t.grad * t.grad))
    return float(np.sqrt(total))


def clip_global_norm(params: ParamTree, ratio: float = 0.65) -> float:
    """Rescale all grads so their joint L2 norm is at most ``ratio``; returns the pre-clip norm."""
    g = global_norm(params)
    if g > ratio:
        s = ratio / g
        for t in params.tensors():
            if t.grad is not None:
                t.grad = t.grad * s
    return g


def adam_step(params: ParamTree, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """One bias-corrected Adam update; grads are cleared afterwards."""
    params.step += 1
    t = params.step
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name, p in params.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        m = params.adam_m[name] = beta1 * params.adam_m[name] + (1.0 - beta1) * g
        v = params.adam_v[name] = beta2 * params.adam_v[name] + (1.0 - beta2) * g * g
        p.data = p.data - lr * (m / c1) / (np.sqrt(v / c2) + eps)
        p.grad = None


# --- building blocks --------------------------------------------------------

def init_mlp(params: ParamTree, prefix: str, d_in: int, d_hidden: int, d_out: int, n_hidden: int, rng: np.random.Generator) -> None:
    dims = [d_in] + [d_hidden] * n_hidden + [d_out]
    for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
        params.add(f"{prefix}.w{i}", rng.normal(0.0, 1.0 / np.sqrt(a), size=(a, b)))
        params.add(f"{prefix}.b{i}", np.zeros(b))


def mlp_forward(tape: Tape, p: dict[str, Tensor], x: Tensor) -> Tensor:
    """(Linear -> ReLU) for every hidden layer, then a final Linear."""
    n_layers = sum(1 for k in p if k.startswith("w"))
    h = x
    for i in range(n_layers):
        h = tape.linear(h, p[f"w{i}"], p[f"b{i}"])
        if i < n_layers - 1:
            h = tape.relu(h)
    return h


def init_lstm(params: ParamTree, prefix: str, d_in: int, d: int, rng: np.random.Generator, forget_bias: float = 1.0) -> None:
    params.add(f"{prefix}.wx", rng.normal(0.0, 1.0 / np.sqrt(d_in), size=(d_in, 4 * d)))
    params.add(f"{prefix}.wh", rng.normal(0.0, 1.0 / np.sqrt(d), size=(d, 4 * d)))
    params.add(f"{prefix}.gate_gain", np.ones(4 * d))
    bias = np.zeros(4 * d)
    bias[d:2 * d] = forget_bias
    params.add(f"{prefix}.gate_bias", bias)
    params.add(f"{prefix}.cell_gain", np.ones(d))
    params.add(f"{prefix}.cell_bias", np.zeros(d))


def lstm_cell(tape: Tape, p: dict[str, Tensor], x: Tensor, h: Tensor, c: Tensor) -> tuple[Tensor, Tensor]:
    """Layer-norm LSTM step; gate blocks are ordered (input, forget, output, candidate).

    Each gate block of ``x Wx + h Wh`` is normalized separately, and the new
    cell state is normalized before the output tanh.
    """
    pre = tape.add(tape.matmul(x, p["wx"]), tape.matmul(h, p["wh"]))
    pre = tape.layernorm(pre, p["gate_gain"], p["gate_bias"], groups=4)
    i, f, o, g = tape.split_cols(pre, 4)
    c_new = tape.add(tape.mul(tape.sigmoid(f), c), tape.mul(tape.sigmoid(i), tape.tanh(g)))
    h_new = tape.mul(tape.sigmoid(o), tape.tanh(tape.layernorm(c_new, p["cell_gain"], p["cell_bias"])))
    return h_new, c_new


# --- checkpoints ------------------------------------------------------------

CKPT_MAGIC = b"NSATCKPT"
CKPT_VERSION = 1


def save_checkpoint(params: ParamTree, hyper: dict) -> bytes:
    """Serialize: magic, u32 version, u32 header length, JSON header, float64 LE leaf data."""
    header = {
        "hyperparams": hyper,
        "leaves": [{"name": k, "shape": list(t.shape)} for k, t in params.items()],
        "step": params.step,
    }
    hb = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("ascii")
    parts = [CKPT_MAGIC, struct.pack("<II", CKPT_VERSION, len(hb)), hb]
    parts += [np.ascontiguousarray(t.data, dtype="<f8").tobytes() for _, t in params.items()]
    return b"".join(parts)


def load_checkpoint(blob: bytes) -> tuple[ParamTree, dict]:
    if blob[:8] != CKPT_MAGIC:
        raise ValueError("not a checkpoint (bad magic)")
    version, hlen = struct.unpack("<II", blob[8:16])
    if version != CKPT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    header = json.loads(blob[16:16 + hlen].decode("ascii"))
    off = 16 + hlen
    leaves = {}
    for leaf in header["leaves"]:
        shape = tuple(leaf["shape"])
        size = int(np.prod(shape)) if shape else 1
        leaves[leaf["name"]] = np.frombuffer(blob, dtype="<f8", count=size, offset=off).reshape(shape).astype(DTYPE)
        off += 8 * size
    if off != len(blob):
        raise ValueError("trailing bytes in checkpoint")
    params = ParamTree(leaves)
    params.step = int(header.get("step", 0))
    return params, header["hyperparams"]
