"""Dense float64 tensors with reverse-mode differentiation.

Every model quantity lives in a :class:`Tensor`.  Operations on tensors that
require gradients record their parents and a backward closure; calling
:func:`backward` on a scalar walks the recorded graph in reverse topological
order (the :class:`Tape`) and accumulates gradients.

The numeric work is delegated to numpy; the autodiff bookkeeping is ours.
"""

from __future__ import annotations

import contextlib
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "ShapeError",
    "Tensor",
    "Tape",
    "tensor",
    "parameter",
    "no_grad",
    "is_grad_enabled",
    "matmul",
    "einsum",
    "logsumexp",
    "log_softmax",
    "softmax",
    "concat",
    "stack",
    "take",
    "flip",
    "relu",
    "dropout",
    "lstm",
    "backward",
    "build_tape",
    "grad_errors",
    "grad_check",
    "save_parameters",
    "load_parameters",
]

DTYPE = np.float64
_GRAD_ENABLED = True


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def is_grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op", "name")

    __array_priority__ = 100  # make ndarray <op> Tensor dispatch to Tensor

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data, dtype=DTYPE)
        if arr.ndim > 0 and 0 in arr.shape:
            raise ShapeError(f"tensor extents must be positive, got {arr.shape}")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self.op = "leaf"
        self.name = name

    # -- introspection -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def T(self) -> Tensor:
        return self.transpose()

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self.op}{tag})"

    def __len__(self) -> int:
        return self.shape[0]

    # -- arithmetic ----------------------------------------------------
    def __add__(self, other):
        other = _lift(other)
        return _make(
            self.data + other.data,
            (self, other),
            lambda g: (_unbroadcast(g, self.shape), _unbroadcast(g, other.shape)),
            "add",
        )

    __radd__ = __add__

    def __sub__(self, other):
        other = _lift(other)
        return _make(
            self.data - other.data,
            (self, other),
            lambda g: (_unbroadcast(g, self.shape), _unbroadcast(-g, other.shape)),
            "sub",
        )

    def __rsub__(self, other):
        return _lift(other) - self

    def __mul__(self, other):
        other = _lift(other)
        a, b = self.data, other.data
        return _make(
            a * b,
            (self, other),
            lambda g: (_unbroadcast(g * b, self.shape), _unbroadcast(g * a, other.shape)),
            "mul",
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _lift(other)
        a, b = self.data, other.data
        return _make(
            a / b,
            (self, other),
            lambda g: (
                _unbroadcast(g / b, self.shape),
                _unbroadcast(-g * a / (b * b), other.shape),
            ),
            "div",
        )

    def __rtruediv__(self, other):
        return _lift(other) / self

    def __neg__(self):
        return _make(-self.data, (self,), lambda g: (-g,), "neg")

    def __pow__(self, p: float):
        if isinstance(p, Tensor):
            raise TypeError("only scalar exponents are supported")
        a = self.data
        return _make(a**p, (self,), lambda g: (g * p * a ** (p - 1),), "pow")

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        src_shape = self.shape

        def bw(g):
            out = np.zeros(src_shape, dtype=DTYPE)
            np.add.at(out, index, g)
            return (out,)

        return _make(self.data[index], (self,), bw, "getitem")

    # -- unary maps ----------------------------------------------------
    def exp(self) -> Tensor:
        out = np.exp(self.data)
        return _make(out, (self,), lambda g: (g * out,), "exp")

    def log(self) -> Tensor:
        a = self.data
        with np.errstate(divide="ignore"):
            out = np.log(a)
        return _make(out, (self,), lambda g: (g / a,), "log")

    def tanh(self) -> Tensor:
        out = np.tanh(self.data)
        return _make(out, (self,), lambda g: (g * (1.0 - out * out),), "tanh")

    def sigmoid(self) -> Tensor:
        out = _sigmoid(self.data)
        return _make(out, (self,), lambda g: (g * out * (1.0 - out),), "sigmoid")

    def sum(self, axis=None, keepdims: bool = False) -> Tensor:
        src_shape = self.shape

        def bw(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, src_shape).copy(),)

        return _make(self.data.sum(axis=axis, keepdims=keepdims), (self,), bw, "sum")

    def mean(self, axis=None, keepdims: bool = False) -> Tensor:
        count = self.size if axis is None else np.prod([self.shape[a] for a in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def reshape(self, *shape) -> Tensor:
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        src_shape = self.shape
        return _make(self.data.reshape(shape), (self,), lambda g: (g.reshape(src_shape),), "reshape")

    def transpose(self, *axes) -> Tensor:
        if not axes:
            axes = tuple(range(self.ndim - 2)) + (self.ndim - 1, self.ndim - 2)
        elif len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        inv = np.argsort(axes)
        return _make(self.data.transpose(axes), (self,), lambda g: (g.transpose(inv),), "transpose")


def tensor(data, requires_grad: bool = False, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, name=name)


def parameter(data, name: str | None = None) -> Tensor:
    """A leaf tensor that requires gradients."""
    return Tensor(np.array(data, dtype=DTYPE), requires_grad=True, name=name)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _sigmoid(a: np.ndarray) -> np.ndarray:
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ea = np.exp(a[~pos])
    out[~pos] = ea / (1.0 + ea)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _make(data, parents, bw, op) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = np.asarray(data, dtype=DTYPE)
    out.grad = None
    out.op = op
    out.name = None
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = bw
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


# ---------------------------------------------------------------------------
# structured operations


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _lift(a), _lift(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    A, B = a.data, b.data

    def bw(g):
        ga = g @ np.swapaxes(B, -1, -2)
        gb = np.swapaxes(A, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _make(A @ B, (a, b), bw, "matmul")


def einsum(subscripts: str, *operands: Tensor) -> Tensor:
    """Explicit-output einsum without repeated indices inside one operand."""
    ops = [_lift(o) for o in operands]
    lhs, out_subs = subscripts.replace(" ", "").split("->")
    in_subs = lhs.split(",")
    if len(in_subs) != len(ops):
        raise ValueError("subscript/operand count mismatch")
    for s in in_subs:
        if len(set(s)) != len(s):
            raise ValueError(f"repeated index in operand {s!r}")
    arrays = [o.data for o in ops]
    try:
        result = np.einsum(subscripts, *arrays, optimize=True)
    except ValueError as exc:
        raise ShapeError(f"einsum {subscripts}: {[o.shape for o in ops]}") from exc

    def bw(g):
        grads = []
        for k, subs in enumerate(in_subs):
            others = [(s, arr) for j, (s, arr) in enumerate(zip(in_subs, arrays)) if j != k]
            present = set(out_subs).union(*(set(s) for s, _ in others))
            kept = "".join(ch for ch in subs if ch in present)
            expr = ",".join([out_subs] + [s for s, _ in others]) + "->" + kept
            gk = np.einsum(expr, g, *[arr for _, arr in others], optimize=True)
            if kept != subs:
                for ax, ch in enumerate(subs):
                    if ch not in present:
                        gk = np.expand_dims(gk, ax)
                gk = np.broadcast_to(gk, arrays[k].shape).copy()
            grads.append(gk)
        return grads

    return _make(result, tuple(ops), bw, "einsum")


def logsumexp(x: Tensor, axis: int = -1, keepdims: bool = False) -> Tensor:
    """log(sum(exp(x))) along ``axis`` with max-shift stabilisation."""
    x = _lift(x)
    if x.ndim == 0:
        raise ShapeError("logsumexp needs at least one axis")
    ax = axis % x.ndim
    a = x.data
    m = np.max(a, axis=ax, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out_k = np.log(np.sum(np.exp(a - m), axis=ax, keepdims=True)) + m
    out = out_k if keepdims else np.squeeze(out_k, axis=ax)

    def bw(g):
        gk = g if keepdims else np.expand_dims(g, ax)
        with np.errstate(invalid="ignore"):
            w = np.exp(a - out_k)
        w = np.where(np.isfinite(out_k), w, 0.0)
        return (gk * w,)

    return _make(out, (x,), bw, "logsumexp")


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    return x - logsumexp(x, axis=axis, keepdims=True)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    return log_softmax(x, axis=axis).exp()


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    ts = [_lift(t) for t in tensors]
    ax = axis % ts[0].ndim
    sizes = [t.shape[ax] for t in ts]
    rest = {t.shape[:ax] + t.shape[ax + 1 :] for t in ts}
    if len(rest) > 1 or len({t.ndim for t in ts}) > 1:
        raise ShapeError(f"cannot concatenate shapes {[t.shape for t in ts]} along axis {axis}")
    bounds = np.cumsum([0] + sizes)

    def bw(g):
        return [np.take(g, range(bounds[i], bounds[i + 1]), axis=ax) for i in range(len(ts))]

    return _make(np.concatenate([t.data for t in ts], axis=ax), tuple(ts), bw, "concat")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    ts = [_lift(t) for t in tensors]

    def bw(g):
        return [np.take(g, i, axis=axis) for i in range(len(ts))]

    return _make(np.stack([t.data for t in ts], axis=axis), tuple(ts), bw, "stack")


def take(table: Tensor, indices) -> Tensor:
    """Row lookup ``table[indices]`` (embedding gather)."""
    idx = np.asarray(indices, dtype=np.int64)
    shape = table.shape

    def bw(g):
        out = np.zeros(shape, dtype=DTYPE)
        np.add.at(out, idx, g)
        return (out,)

    return _make(table.data[idx], (table,), bw, "take")


def flip(x: Tensor, axis: int) -> Tensor:
    return _make(np.flip(x.data, axis=axis).copy(), (x,), lambda g: (np.flip(g, axis=axis).copy(),), "flip")


def relu(x: Tensor) -> Tensor:
    a = x.data
    mask = a > 0
    return _make(np.where(mask, a, 0.0), (x,), lambda g: (g * mask,), "relu")


def dropout(x: Tensor, rate: float, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout; identity when ``rate`` is 0 or no generator is given."""
    if rate <= 0.0 or rng is None:
        return x
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return _make(x.data * keep, (x,), lambda g: (g * keep,), "dropout")


def lstm(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Unidirectional LSTM over ``x`` of shape (batch, time, in).

    ``w`` has shape (in + hidden, 4 * hidden), gate blocks ordered
    input, forget, candidate, output.  Returns all hidden states,
    shape (batch, time, hidden).  Zero initial state.
    """
    X, W, bias = x.data, w.data, b.data
    if X.ndim != 3:
        raise ShapeError(f"lstm expects (batch, time, in), got {X.shape}")
    n_b, n_t, n_in = X.shape
    H = W.shape[1] // 4
    if W.shape[0] != n_in + H or bias.shape != (4 * H,):
        raise ShapeError(f"lstm weight {W.shape}/bias {bias.shape} incompatible with input {X.shape}")

    hs = np.zeros((n_t + 1, n_b, H))
    cs = np.zeros((n_t + 1, n_b, H))
    gates = np.empty((n_t, n_b, 4 * H))
    for t in range(n_t):
        z = np.concatenate([X[:, t, :], hs[t]], axis=1) @ W + bias
        i = _sigmoid(z[:, :H])
        f = _sigmoid(z[:, H : 2 * H])
        g = np.tanh(z[:, 2 * H : 3 * H])
        o = _sigmoid(z[:, 3 * H :])
        gates[t] = np.concatenate([i, f, g, o], axis=1)
        cs[t + 1] = f * cs[t] + i * g
        hs[t + 1] = o * np.tanh(cs[t + 1])
    out = np.ascontiguousarray(hs[1:].transpose(1, 0, 2))

    def bw(grad):
        gX = np.zeros_like(X)
        gW = np.zeros_like(W)
        gb = np.zeros_like(bias)
        dh_next = np.zeros((n_b, H))
        dc_next = np.zeros((n_b, H))
        for t in range(n_t - 1, -1, -1):
            i, f, g, o = (gates[t][:, k * H : (k + 1) * H] for k in range(4))
            tc = np.tanh(cs[t + 1])
            dh = grad[:, t, :] + dh_next
            dc = dc_next + dh * o * (1.0 - tc * tc)
            dz = np.concatenate(
                [
                    dc * g * i * (1.0 - i),
                    dc * cs[t] * f * (1.0 - f),
                    dc * i * (1.0 - g * g),
                    dh * tc * o * (1.0 - o),
                ],
                axis=1,
            )
            inp = np.concatenate([X[:, t, :], hs[t]], axis=1)
            gW += inp.T @ dz
            gb += dz.sum(axis=0)
            dinp = dz @ W.T
            gX[:, t, :] = dinp[:, :n_in]
            dh_next = dinp[:, n_in:]
            dc_next = dc * f
        return gX, gW, gb

    return _make(out, (x, w, b), bw, "lstm")


# ---------------------------------------------------------------------------
# differentiation


@dataclass
class Tape:
    """Operations reachable from a loss, in topological order (inputs first)."""

    nodes: list[Tensor] = field(default_factory=list)

    def leaves(self) -> list[Tensor]:
        return [n for n in self.nodes if n._backward is None and n.requires_grad]


def build_tape(loss: Tensor) -> Tape:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack_: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack_:
        node, expanded = stack_.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack_.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack_.append((p, False))
    return Tape(order)


def backward(loss: Tensor, params: Iterable[Tensor] | None = None) -> dict[Tensor, np.ndarray]:
    """Accumulate d loss / d leaf into ``.grad`` and return the gradient map.

    Parameters listed in ``params`` that the loss does not reach map to zeros.
    """
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {}
    result: dict[Tensor, np.ndarray] = {}
    if loss.requires_grad:
        tape = build_tape(loss)
        grads[id(loss)] = np.ones_like(loss.data)
        for node in reversed(tape.nodes):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                result[node] = node.grad
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                if id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + pg
                else:
                    grads[id(parent)] = np.asarray(pg, dtype=DTYPE)
    for p in params or ():
        if p not in result:
            if p.grad is None:
                p.grad = np.zeros_like(p.data)
            result[p] = p.grad
    return result


def grad_errors(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    eps: float = 1e-5,
    max_coords: int | None = None,
    seed: int = 0,
    floor: float = 1e-8,
    relative_floor: float = 1e-6,
) -> dict[str, float]:
    """Compare reverse-mode gradients with central differences.

    Returns the worst ``relative`` error, |g_ad - g_fd| / max(floor, |g_ad| + |g_fd|),
    and the worst ``scaled`` error, whose denominator is additionally bounded
    below by ``relative_floor * max(1, |f|)``.  Central differences carry
    rounding noise proportional to |f|, so the bare ratio is dominated by that
    noise on components far below the objective's scale; the scaled figure
    discounts exactly that regime.  ``worst_abs`` is the largest |g_ad - g_fd|.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    for p in params:
        p.zero_grad()
    loss = f()
    scale = relative_floor * max(1.0, abs(loss.item()))
    grads = backward(loss, params)
    rng = np.random.default_rng(seed)
    out = {"relative": 0.0, "scaled": 0.0, "worst_abs": 0.0, "coords": 0}
    for p in params:
        g_ad = grads[p]
        flat = p.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = rng.choice(flat.size, size=max_coords, replace=False)
        for c in coords:
            orig = flat[c]
            with no_grad():
                flat[c] = orig + eps
                up = f().item()
                flat[c] = orig - eps
                down = f().item()
            flat[c] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise FloatingPointError(f"non-finite objective while perturbing {p.name or p}[{c}]")
            g_fd = (up - down) / (2 * eps)
            ga = g_ad.reshape(-1)[c]
            diff = abs(ga - g_fd)
            out["relative"] = max(out["relative"], diff / max(floor, abs(ga) + abs(g_fd)))
            out["scaled"] = max(out["scaled"], diff / max(floor, scale, abs(ga) + abs(g_fd)))
            out["worst_abs"] = max(out["worst_abs"], diff)
            out["coords"] += 1
    return out


def grad_check(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    eps: float = 1e-5,
    max_coords: int | None = None,
    seed: int = 0,
    floor: float = 1e-8,
) -> float:
    """Max over sampled coordinates of |g_ad - g_fd| / max(floor, |g_ad| + |g_fd|).

    ``f`` is re-evaluated with each sampled coordinate nudged by +-eps, so it
    must be deterministic (fix any noise outside of it).
    """
    return grad_errors(f, params, eps, max_coords, seed, floor, 0.0)["relative"]


# ---------------------------------------------------------------------------
# checkpoints
#
# layout (little-endian):
#   magic b"LAMR" | u32 version | u32 count
#   per parameter: u32 name_len | name utf-8 | u32 ndim | u64 * ndim extents | f64 * prod(extents)

_MAGIC = b"LAMR"
_VERSION = 1


def save_parameters(path: str | Path, params: Mapping[str, Tensor | np.ndarray]) -> None:
    chunks = [_MAGIC, struct.pack("<II", _VERSION, len(params))]
    for name in sorted(params):
        value = params[name]
        arr = np.asarray(value.data if isinstance(value, Tensor) else value, dtype="<f8", order="C")
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)) + raw)
        chunks.append(struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(arr.tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_parameters(path: str | Path) -> dict[str, np.ndarray]:
    buf = Path(path).read_bytes()
    if buf[:4] != _MAGIC:
        raise ValueError(f"{path}: not a parameter checkpoint")
    version, count = struct.unpack_from("<II", buf, 4)
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    pos = 12
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (n,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        name = buf[pos : pos + n].decode("utf-8")
        pos += n
        (ndim,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        shape = struct.unpack_from(f"<{ndim}Q", buf, pos)
        pos += 8 * ndim
        size = int(np.prod(shape)) if ndim else 1
        out[name] = np.frombuffer(buf, dtype="<f8", count=size, offset=pos).reshape(shape).astype(DTYPE)
        pos += 8 * size
    return out
