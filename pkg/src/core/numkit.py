# =============================================================================
# File 3: src/core/numkit.py
# =============================================================================

"""
Motore numerico minimale: valori differenziabili, operazioni con aggiunti,
gradient checker a differenze centrali e ottimizzatore Adam.

Tutto il resto del modello è costruito solo con queste operazioni.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

DTYPE = np.float64
L1_EPS = 1e-12
LOG_EPS = 1e-12
# Sotto questo errore relativo un elemento non viene esaminato come kink
KINK_REL_FLOOR = 1e-6


# -----------------------------------------------------------------------------
# Errori
# -----------------------------------------------------------------------------

class NumkitError(Exception):
    """Errore base del motore numerico"""


class DimensionError(NumkitError, ValueError):
    """Forme incompatibili"""


class DegenerateInputError(NumkitError, ValueError):
    """Input degenerato (es. normalizzazione l1 di una fetta nulla)"""


class ContractError(NumkitError, RuntimeError):
    """Violazione di un contratto d'uso"""


class NonFiniteError(NumkitError, FloatingPointError):
    """NaN/Inf al confine di un'operazione"""


# Moltiplicatori di aggiunti per fault injection (solo test/diagnostica)
_ADJOINT_FAULTS: Dict[str, float] = {}


@contextlib.contextmanager
def inject_adjoint_fault(op_name: str, scale: float = 1.5) -> Iterator[None]:
    """Scala l'aggiunto dell'operazione `op_name` finché il contesto è attivo"""
    _ADJOINT_FAULTS[op_name] = scale
    try:
        yield
    finally:
        _ADJOINT_FAULTS.pop(op_name, None)


# -----------------------------------------------------------------------------
# Valori
# -----------------------------------------------------------------------------

class DiffValue:
    """Array denso float64 che partecipa a un grafo di calcolo registrato"""

    __slots__ = ('data', 'node', 'requires_grad')

    def __init__(self, data, node: Optional['Function'] = None, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=DTYPE)
        self.node = node
        self.requires_grad = requires_grad or node is not None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self) -> str:
        return f"DiffValue(shape={self.shape}, requires_grad={self.requires_grad})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() su valore non scalare di forma {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> 'DiffValue':
        return DiffValue(self.data)

    # Operatori
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def backward(self) -> None:
        """Propaga l'aggiunto di una loss scalare fino ai Parameter"""
        if self.data.size != 1:
            raise ContractError(f"backward richiede una loss scalare, forma {self.shape}")
        backward(self)


class Parameter(DiffValue):
    """Peso apprendibile con accumulatore di gradiente della stessa forma"""

    __slots__ = ('name', 'grad')

    def __init__(self, data, name: str = ''):
        super().__init__(np.array(data, dtype=DTYPE, copy=True), requires_grad=True)
        self.name = name
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape})"

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    @classmethod
    def uniform(cls, rng: np.random.Generator, shape: Sequence[int], fan_in: int,
                name: str = '') -> 'Parameter':
        bound = 1.0 / np.sqrt(max(fan_in, 1))
        return cls(rng.uniform(-bound, bound, size=tuple(shape)), name=name)

    @classmethod
    def zeros(cls, shape: Sequence[int], name: str = '') -> 'Parameter':
        return cls(np.zeros(tuple(shape)), name=name)

    @classmethod
    def ones(cls, shape: Sequence[int], name: str = '') -> 'Parameter':
        return cls(np.ones(tuple(shape)), name=name)


ValueLike = Union[DiffValue, np.ndarray, float, int]


def as_value(x: ValueLike) -> DiffValue:
    return x if isinstance(x, DiffValue) else DiffValue(x)


def _check_finite(arr: np.ndarray, where: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"valori non finiti in uscita da '{where}'")


# -----------------------------------------------------------------------------
# Registrazione del grafo e backward
# -----------------------------------------------------------------------------

class Function:
    """Operazione differenziabile: forward su ndarray, backward sugli aggiunti"""

    parents: Tuple[DiffValue, ...] = ()

    @classmethod
    def apply(cls, *args: ValueLike, **kwargs) -> DiffValue:
        fn = cls()
        fn.parents = tuple(as_value(a) for a in args)
        out = fn.forward(*[p.data for p in fn.parents], **kwargs)
        _check_finite(out, cls.__name__)
        if any(p.requires_grad for p in fn.parents):
            return DiffValue(out, node=fn)
        return DiffValue(out)

    def forward(self, *args, **kwargs) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        raise NotImplementedError


def _topological_order(root: DiffValue) -> List[DiffValue]:
    order: List[DiffValue] = []
    visited = set()
    stack: List[Tuple[DiffValue, bool]] = [(root, False)]
    while stack:
        value, expanded = stack.pop()
        if expanded:
            order.append(value)
            continue
        if id(value) in visited:
            continue
        visited.add(id(value))
        stack.append((value, True))
        if value.node is not None:
            for parent in value.node.parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
    return order


def backward(root: DiffValue) -> None:
    grads: Dict[int, np.ndarray] = {id(root): np.ones_like(root.data)}
    for value in reversed(_topological_order(root)):
        grad = grads.pop(id(value), None)
        if grad is None:
            continue
        if isinstance(value, Parameter):
            # Parametri riferiti più volte sommano i contributi
            value.grad = value.grad + grad
        node = value.node
        if node is None:
            continue
        parent_grads = node.backward(grad)
        fault = _ADJOINT_FAULTS.get(type(node).__name__)
        for parent, pg in zip(node.parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            if fault is not None:
                pg = pg * fault
            key = id(parent)
            grads[key] = grads[key] + pg if key in grads else pg


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    for i, dim in enumerate(shape):
        if dim == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad


def _broadcast_shape(a: np.ndarray, b: np.ndarray, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: forme incompatibili {a.shape} e {b.shape}") from None


# -----------------------------------------------------------------------------
# Operazioni elementari
# -----------------------------------------------------------------------------

class Add(Function):
    def forward(self, x, y):
        _broadcast_shape(x, y, 'add')
        return x + y

    def backward(self, g):
        x, y = self.parents
        return _unbroadcast(g, x.shape), _unbroadcast(g, y.shape)


class Sub(Function):
    def forward(self, x, y):
        _broadcast_shape(x, y, 'sub')
        return x - y

    def backward(self, g):
        x, y = self.parents
        return _unbroadcast(g, x.shape), _unbroadcast(-g, y.shape)


class Mul(Function):
    def forward(self, x, y):
        _broadcast_shape(x, y, 'mul')
        return x * y

    def backward(self, g):
        x, y = self.parents
        return _unbroadcast(g * y.data, x.shape), _unbroadcast(g * x.data, y.shape)


class Scale(Function):
    def forward(self, x, factor=1.0):
        self.factor = factor
        return x * factor

    def backward(self, g):
        return (g * self.factor,)


class Relu(Function):
    def forward(self, x):
        self.mask = x > 0
        return np.where(self.mask, x, 0.0)

    def backward(self, g):
        return (g * self.mask,)


class Sigmoid(Function):
    def forward(self, x):
        # Forma stabile per argomenti molto negativi
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        self.out = out
        return out

    def backward(self, g):
        return (g * self.out * (1.0 - self.out),)


class Tanh(Function):
    def forward(self, x):
        self.out = np.tanh(x)
        return self.out

    def backward(self, g):
        return (g * (1.0 - self.out ** 2),)


class Exp(Function):
    def forward(self, x):
        self.out = np.exp(x)
        return self.out

    def backward(self, g):
        return (g * self.out,)


class Log(Function):
    def forward(self, x, eps=LOG_EPS):
        self.clamped = np.maximum(x, eps)
        self.active = x > eps
        return np.log(self.clamped)

    def backward(self, g):
        return (g * self.active / self.clamped,)


class Square(Function):
    def forward(self, x):
        return x * x

    def backward(self, g):
        return (2.0 * g * self.parents[0].data,)


class Threshold(Function):
    """Azzera le entrate sotto tau; la maschera è costante per il backward"""

    def forward(self, x, tau=0.0):
        self.keep = x >= tau
        return np.where(self.keep, x, 0.0)

    def backward(self, g):
        return (g * self.keep,)


def add(a: ValueLike, b: ValueLike) -> DiffValue:
    return Add.apply(a, b)


def sub(a: ValueLike, b: ValueLike) -> DiffValue:
    return Sub.apply(a, b)


def mul(a: ValueLike, b: ValueLike) -> DiffValue:
    return Mul.apply(a, b)


def scale(x: ValueLike, factor: float) -> DiffValue:
    return Scale.apply(x, factor=float(factor))


def relu(x: ValueLike) -> DiffValue:
    return Relu.apply(x)


def sigmoid(x: ValueLike) -> DiffValue:
    return Sigmoid.apply(x)


def tanh(x: ValueLike) -> DiffValue:
    return Tanh.apply(x)


def exp(x: ValueLike) -> DiffValue:
    return Exp.apply(x)


def log(x: ValueLike, eps: float = LOG_EPS) -> DiffValue:
    return Log.apply(x, eps=eps)


def square(x: ValueLike) -> DiffValue:
    return Square.apply(x)


def threshold(x: ValueLike, tau: float) -> DiffValue:
    return Threshold.apply(x, tau=float(tau))


_ELEMENTWISE = {
    'add': add, 'sub': sub, 'mul': mul, 'relu': relu,
    'sigmoid': sigmoid, 'tanh': tanh, 'scale': scale,
}


def elementwise(op: str, *args, **kwargs) -> DiffValue:
    """Dispatcher per nome: elementwise('mul', a, b), elementwise('scale', x, 2.0)"""
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ContractError(f"operazione elementwise sconosciuta: {op}") from None
    return fn(*args, **kwargs)


# -----------------------------------------------------------------------------
# Algebra lineare e forme
# -----------------------------------------------------------------------------

class MatMul(Function):
    def forward(self, a, b):
        if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
            raise DimensionError(f"matmul: forme incompatibili {a.shape} e {b.shape}")
        try:
            return np.matmul(a, b)
        except ValueError:
            raise DimensionError(f"matmul: forme incompatibili {a.shape} e {b.shape}") from None

    def backward(self, g):
        a, b = self.parents
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)


class Transpose(Function):
    def forward(self, x, axes=None):
        self.axes = axes
        return np.transpose(x, axes)

    def backward(self, g):
        if self.axes is None:
            return (np.transpose(g),)
        return (np.transpose(g, np.argsort(self.axes)),)


class Reshape(Function):
    def forward(self, x, shape=()):
        self.in_shape = x.shape
        try:
            return np.reshape(x, shape)
        except ValueError:
            raise DimensionError(f"reshape: {x.shape} non compatibile con {shape}") from None

    def backward(self, g):
        return (np.reshape(g, self.in_shape),)


class GetItem(Function):
    def forward(self, x, idx=None):
        self.idx = idx
        return np.array(x[idx], dtype=DTYPE)

    def backward(self, g):
        x = self.parents[0]
        out = np.zeros_like(x.data)
        np.add.at(out, self.idx, g)
        return (out,)


class Stack(Function):
    def forward(self, *xs, axis=0):
        self.axis = axis
        try:
            return np.stack(xs, axis=axis)
        except ValueError:
            raise DimensionError(f"stack: forme incompatibili {[x.shape for x in xs]}") from None

    def backward(self, g):
        return tuple(np.take(g, i, axis=self.axis) for i in range(len(self.parents)))


class Concat(Function):
    def forward(self, *xs, axis=-1):
        self.axis = axis
        self.sizes = [x.shape[axis] for x in xs]
        try:
            return np.concatenate(xs, axis=axis)
        except ValueError:
            raise DimensionError(f"concat: forme incompatibili {[x.shape for x in xs]}") from None

    def backward(self, g):
        cuts = np.cumsum(self.sizes)[:-1]
        return tuple(np.split(g, cuts, axis=self.axis))


def matmul(a: ValueLike, b: ValueLike) -> DiffValue:
    return MatMul.apply(a, b)


def transpose(x: ValueLike, axes: Optional[Sequence[int]] = None) -> DiffValue:
    return Transpose.apply(x, axes=None if axes is None else tuple(axes))


def reshape(x: ValueLike, shape: Sequence[int]) -> DiffValue:
    return Reshape.apply(x, shape=tuple(shape))


def getitem(x: ValueLike, idx) -> DiffValue:
    return GetItem.apply(x, idx=idx)


def stack(values: Sequence[ValueLike], axis: int = 0) -> DiffValue:
    return Stack.apply(*values, axis=axis)


def concat(values: Sequence[ValueLike], axis: int = -1) -> DiffValue:
    return Concat.apply(*values, axis=axis)


# -----------------------------------------------------------------------------
# Riduzioni e normalizzazioni
# -----------------------------------------------------------------------------

def _check_axis(x: np.ndarray, axis: Optional[int], op: str) -> None:
    if axis is not None and not -x.ndim <= axis < x.ndim:
        raise DimensionError(f"{op}: asse {axis} non valido per forma {x.shape}")


class Sum(Function):
    def forward(self, x, axis=None, keepdims=False):
        _check_axis(x, axis, 'sum')
        self.axis, self.keepdims = axis, keepdims
        return np.asarray(np.sum(x, axis=axis, keepdims=keepdims))

    def backward(self, g):
        x = self.parents[0]
        if self.axis is not None and not self.keepdims:
            g = np.expand_dims(g, self.axis)
        return (np.broadcast_to(g, x.shape).copy(),)


class Mean(Function):
    def forward(self, x, axis=None, keepdims=False):
        _check_axis(x, axis, 'mean')
        self.axis, self.keepdims = axis, keepdims
        self.count = x.size if axis is None else x.shape[axis]
        return np.asarray(np.mean(x, axis=axis, keepdims=keepdims))

    def backward(self, g):
        x = self.parents[0]
        if self.axis is not None and not self.keepdims:
            g = np.expand_dims(g, self.axis)
        return (np.broadcast_to(g / self.count, x.shape).copy(),)


class Max(Function):
    """Massimo lungo un asse; il gradiente va al primo argmax"""

    def forward(self, x, axis=-1, keepdims=False):
        _check_axis(x, axis, 'max')
        self.axis, self.keepdims = axis, keepdims
        self.arg = np.argmax(x, axis=axis)
        return np.asarray(np.max(x, axis=axis, keepdims=keepdims))

    def backward(self, g):
        x = self.parents[0]
        if self.keepdims:
            g = np.squeeze(g, axis=self.axis)
        out = np.zeros_like(x.data)
        np.put_along_axis(out, np.expand_dims(self.arg, self.axis),
                          np.expand_dims(g, self.axis), axis=self.axis)
        return (out,)


class Softmax(Function):
    def forward(self, x, axis=-1):
        _check_axis(x, axis, 'softmax')
        self.axis = axis
        shifted = x - np.max(x, axis=axis, keepdims=True)
        e = np.exp(shifted)
        self.out = e / np.sum(e, axis=axis, keepdims=True)
        return self.out

    def backward(self, g):
        y = self.out
        return (y * (g - np.sum(g * y, axis=self.axis, keepdims=True)),)


class LogSoftmax(Function):
    def forward(self, x, axis=-1):
        _check_axis(x, axis, 'log_softmax')
        self.axis = axis
        shifted = x - np.max(x, axis=axis, keepdims=True)
        out = shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))
        self.soft = np.exp(out)
        return out

    def backward(self, g):
        return (g - self.soft * np.sum(g, axis=self.axis, keepdims=True),)


class L1Normalize(Function):
    def forward(self, x, axis=-1, allow_zero=False, eps=L1_EPS):
        _check_axis(x, axis, 'l1_normalize')
        self.axis = axis
        norm = np.sum(np.abs(x), axis=axis, keepdims=True)
        self.live = norm > eps
        if not allow_zero and not np.all(self.live):
            raise DegenerateInputError("l1_normalize: fetta con norma l1 nulla")
        self.norm = np.where(self.live, norm, 1.0)
        return np.where(self.live, x / self.norm, 0.0)

    def backward(self, g):
        x = self.parents[0].data
        n = self.norm
        inner = np.sum(g * x, axis=self.axis, keepdims=True)
        gx = g / n - np.sign(x) * inner / (n * n)
        return (np.where(self.live, gx, 0.0),)


class LayerNorm(Function):
    """Normalizza l'ultimo asse a media zero / varianza unitaria, poi affine"""

    def forward(self, x, gain, shift, eps=1e-5):
        if gain.shape != (x.shape[-1],) or shift.shape != (x.shape[-1],):
            raise DimensionError(
                f"layer_norm: gain {gain.shape}/shift {shift.shape} vs ultimo asse {x.shape[-1]}")
        mu = np.mean(x, axis=-1, keepdims=True)
        var = np.var(x, axis=-1, keepdims=True)
        self.inv_std = 1.0 / np.sqrt(var + eps)
        self.xhat = (x - mu) * self.inv_std
        return self.xhat * gain + shift

    def backward(self, g):
        _, gain, _ = self.parents
        n = self.xhat.shape[-1]
        reduce_axes = tuple(range(g.ndim - 1))
        g_gain = np.sum(g * self.xhat, axis=reduce_axes)
        g_shift = np.sum(g, axis=reduce_axes)
        gx_hat = g * gain.data
        gx = (self.inv_std / n) * (
            n * gx_hat
            - np.sum(gx_hat, axis=-1, keepdims=True)
            - self.xhat * np.sum(gx_hat * self.xhat, axis=-1, keepdims=True)
        )
        return gx, g_gain, g_shift


def reduce_sum(x: ValueLike, axis: Optional[int] = None, keepdims: bool = False) -> DiffValue:
    return Sum.apply(x, axis=axis, keepdims=keepdims)


def reduce_mean(x: ValueLike, axis: Optional[int] = None, keepdims: bool = False) -> DiffValue:
    return Mean.apply(x, axis=axis, keepdims=keepdims)


def reduce_max(x: ValueLike, axis: int = -1, keepdims: bool = False) -> DiffValue:
    return Max.apply(x, axis=axis, keepdims=keepdims)


def reductions(op: str, x: ValueLike, axis: Optional[int] = None, keepdims: bool = False) -> DiffValue:
    table = {'sum': reduce_sum, 'mean': reduce_mean, 'max': reduce_max}
    if op not in table:
        raise ContractError(f"riduzione sconosciuta: {op}")
    if op == 'max' and axis is None:
        x = reshape(x, (-1,))
        axis = 0
    return table[op](x, axis=axis, keepdims=keepdims)


def softmax(x: ValueLike, axis: int = -1) -> DiffValue:
    return Softmax.apply(x, axis=axis)


def log_softmax(x: ValueLike, axis: int = -1) -> DiffValue:
    return LogSoftmax.apply(x, axis=axis)


def l1_normalize(x: ValueLike, axis: int = -1, allow_zero: bool = False) -> DiffValue:
    """Normalizzazione l1; una fetta nulla è errore salvo allow_zero (resta nulla)"""
    return L1Normalize.apply(x, axis=axis, allow_zero=allow_zero)


def layer_norm(x: ValueLike, gain: ValueLike, shift: ValueLike, eps: float = 1e-5) -> DiffValue:
    return LayerNorm.apply(x, gain, shift, eps=eps)


def bce(p: ValueLike, target: ValueLike, eps: float = LOG_EPS) -> DiffValue:
    """Binary cross entropy elemento per elemento, target anche frazionari"""
    target = as_value(target)
    pos = mul(target, log(p, eps))
    neg = mul(sub(1.0, target), log(sub(1.0, p), eps))
    return scale(add(pos, neg), -1.0)


# -----------------------------------------------------------------------------
# Convoluzione e pooling temporali
# -----------------------------------------------------------------------------

def same_padding(k: int) -> Tuple[int, int]:
    """Padding simmetrico; con k pari il pad in più va a destra"""
    left = (k - 1) // 2
    return left, k - 1 - left


class Conv1d(Function):
    """Cross-correlazione lungo l'ultimo asse, stride 1; x: (B, c_in, L)"""

    def forward(self, x, kernel, bias, padding='same'):
        if x.ndim != 3 or kernel.ndim != 3 or x.shape[1] != kernel.shape[1]:
            raise DimensionError(f"conv1d: input {x.shape} e kernel {kernel.shape} incompatibili")
        if bias.shape != (kernel.shape[0],):
            raise DimensionError(f"conv1d: bias {bias.shape} per {kernel.shape[0]} canali")
        k = kernel.shape[2]
        if padding == 'same':
            self.pad = same_padding(k)
        elif padding == 'valid':
            self.pad = (0, 0)
        else:
            raise ContractError(f"conv1d: padding sconosciuto {padding}")
        length = x.shape[2]
        if k > length + sum(self.pad):
            raise DimensionError(f"conv1d: kernel {k} più lungo dell'input con padding ({length})")
        xp = np.pad(x, ((0, 0), (0, 0), self.pad))
        # cols: (B, c_in, L', k)
        self.cols = np.lib.stride_tricks.sliding_window_view(xp, k, axis=2)
        self.padded_len = xp.shape[2]
        return np.einsum('bctj,ocj->bot', self.cols, kernel) + bias[None, :, None]

    def backward(self, g):
        x, kernel, _ = self.parents
        k = kernel.shape[2]
        g_kernel = np.einsum('bot,bctj->ocj', g, self.cols)
        g_bias = g.sum(axis=(0, 2))
        g_cols = np.einsum('bot,ocj->bctj', g, kernel.data)
        out_len = g.shape[2]
        gxp = np.zeros((x.shape[0], x.shape[1], self.padded_len))
        for j in range(k):
            gxp[:, :, j:j + out_len] += g_cols[:, :, :, j]
        left, right = self.pad
        gx = gxp[:, :, left:self.padded_len - right]
        return gx, g_kernel, g_bias


def conv1d(x: ValueLike, kernel: ValueLike, bias: ValueLike, padding: str = 'same') -> DiffValue:
    x = as_value(x)
    if x.ndim == 2:
        out = Conv1d.apply(reshape(x, (1,) + x.shape), kernel, bias, padding=padding)
        return reshape(out, out.shape[1:])
    return Conv1d.apply(x, kernel, bias, padding=padding)


class MaxPool1d(Function):
    """Massimo per finestra lungo l'ultimo asse; pareggi al primo indice"""

    def forward(self, x, window=2, stride=2):
        length = x.shape[-1]
        if length < window:
            raise DimensionError(f"maxpool1d: lunghezza {length} < finestra {window}")
        windows = np.lib.stride_tricks.sliding_window_view(x, window, axis=-1)[..., ::stride, :]
        self.window, self.stride = window, stride
        self.arg = np.argmax(windows, axis=-1)
        return np.max(windows, axis=-1)

    def backward(self, g):
        x = self.parents[0]
        out = np.zeros_like(x.data)
        n_out = g.shape[-1]
        positions = np.arange(n_out) * self.stride + self.arg
        np.add.at(out.reshape(-1, out.shape[-1]),
                  (np.arange(out.size // out.shape[-1])[:, None], positions.reshape(-1, n_out)),
                  g.reshape(-1, n_out))
        return (out,)


def maxpool1d(x: ValueLike, window: int = 2, stride: int = 2) -> DiffValue:
    return MaxPool1d.apply(x, window=window, stride=stride)


# -----------------------------------------------------------------------------
# Dropout
# -----------------------------------------------------------------------------

def dropout(x: ValueLike, rate: float, training: bool, rng: Optional[np.random.Generator]) -> DiffValue:
    """Inverted dropout; in valutazione restituisce l'input invariato"""
    if not 0.0 <= rate < 1.0:
        from ..utils.config import ConfigError
        raise ConfigError(f"dropout: rate {rate} fuori da [0, 1)")
    x = as_value(x)
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ContractError("dropout in training richiede un generatore esplicito")
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return mul(x, keep)


# -----------------------------------------------------------------------------
# Moduli e parametri
# -----------------------------------------------------------------------------

class Module:
    """Contenitore di Parameter e sotto-moduli con nomi stabili"""

    def named_parameters(self, prefix: str = '') -> List[Tuple[str, Parameter]]:
        seen = set()
        found: List[Tuple[str, Parameter]] = []
        self._collect(prefix, seen, found)
        return found

    def _collect(self, prefix: str, seen: set, found: list) -> None:
        for key, value in vars(self).items():
            name = f"{prefix}.{key}" if prefix else key
            items = value if isinstance(value, (list, tuple)) else [value]
            for i, item in enumerate(items):
                item_name = f"{name}.{i}" if isinstance(value, (list, tuple)) else name
                if isinstance(item, Parameter):
                    if id(item) not in seen:
                        seen.add(id(item))
                        found.append((item_name, item))
                elif isinstance(item, Module):
                    if id(item) not in seen:
                        seen.add(id(item))
                        item._collect(item_name, seen, found)

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def zero_grads(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters()))


class Linear(Module):
    """x·W (+ b) sull'ultimo asse"""

    def __init__(self, rng: np.random.Generator, d_in: int, d_out: int, bias: bool = True):
        self.weight = Parameter.uniform(rng, (d_in, d_out), fan_in=d_in)
        self.bias = Parameter.zeros((d_out,)) if bias else None

    def __call__(self, x: ValueLike) -> DiffValue:
        out = matmul(x, self.weight)
        return add(out, self.bias) if self.bias is not None else out


class LayerNormParams(Module):
    def __init__(self, dim: int):
        self.gain = Parameter.ones((dim,))
        self.shift = Parameter.zeros((dim,))

    def __call__(self, x: ValueLike) -> DiffValue:
        return layer_norm(x, self.gain, self.shift)


def zero_grads(params: Iterable[Parameter]) -> None:
    for p in params:
        p.zero_grad()


# -----------------------------------------------------------------------------
# Ottimizzatore
# -----------------------------------------------------------------------------

class Adam:
    """Adam con correzione del bias; un contatore di passi condiviso"""

    def __init__(self, params: Sequence[Parameter], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for i, p in enumerate(self.params):
            g = p.grad
            _check_finite(g, f"grad di {p.name or i}")
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            m_hat = self.m[i] / c1
            v_hat = self.v[i] / c2
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
            _check_finite(p.data, f"parametro {p.name or i}")

    def zero_grad(self) -> None:
        zero_grads(self.params)

    def state_dict(self) -> Dict[str, object]:
        return {'t': self.t, 'lr': self.lr, 'm': [m.copy() for m in self.m],
                'v': [v.copy() for v in self.v]}

    def load_state_dict(self, state: Dict[str, object]) -> None:
        self.t = int(state['t'])
        self.lr = float(state['lr'])
        self.m = [np.array(m, dtype=DTYPE) for m in state['m']]
        self.v = [np.array(v, dtype=DTYPE) for v in state['v']]


def adam_step(optimizer: Adam) -> None:
    optimizer.step()


# -----------------------------------------------------------------------------
# Gradient check
# -----------------------------------------------------------------------------

@dataclass
class GradCheckReport:
    max_rel_error: float = 0.0
    max_abs_error: float = 0.0
    worst_param: str = ''
    per_param: Dict[str, float] = field(default_factory=dict)
    n_checked: int = 0
    n_kinks: int = 0

    def passed(self, tol: float) -> bool:
        return self.max_rel_error < tol


def check_gradients(loss_fn: Callable[[], DiffValue], params: Sequence[Parameter],
                    h: float = 1e-5, atol: float = 1e-9, max_elements: Optional[int] = None,
                    seed: int = 0, names: Optional[Sequence[str]] = None,
                    skip_kinks: bool = True) -> GradCheckReport:
    """
    Confronta i gradienti registrati con differenze centrali (f(θ+h)−f(θ−h))/2h.

    Con `skip_kinks` un elemento il cui scarto è spiegato dal disaccordo tra
    le differenze unilaterali (passo attraverso un punto non derivabile di
    relu/max/soglia) non viene contato; il numero finisce in `n_kinks`.
    """
    names = list(names) if names is not None else [p.name or f"param{i}" for i, p in enumerate(params)]
    zero_grads(params)
    loss = loss_fn()
    if not isinstance(loss, DiffValue) or loss.size != 1:
        raise ContractError("check_gradients: la loss deve essere scalare")
    f_zero = loss.item()
    loss.backward()
    analytic = [p.grad.copy() for p in params]

    def evaluate() -> float:
        value = loss_fn()
        if value.size != 1:
            raise ContractError("check_gradients: la loss deve essere scalare")
        return value.item()

    rng = np.random.default_rng(seed)
    report = GradCheckReport()
    for name, p, ga in zip(names, params, analytic):
        flat = p.data.reshape(-1)
        indices = np.arange(flat.size)
        if max_elements is not None and flat.size > max_elements:
            indices = np.sort(rng.choice(flat.size, size=max_elements, replace=False))
        worst = 0.0
        for idx in indices:
            original = flat[idx]
            flat[idx] = original + h
            f_plus = evaluate()
            flat[idx] = original - h
            f_minus = evaluate()
            flat[idx] = original
            numeric = (f_plus - f_minus) / (2.0 * h)
            a = ga.reshape(-1)[idx]
            diff = abs(a - numeric)
            report.max_abs_error = max(report.max_abs_error, diff)
            report.n_checked += 1
            if diff < atol:
                continue
            rel = diff / max(abs(a), abs(numeric), 1e-8)
            if skip_kinks and rel > KINK_REL_FLOOR:
                gap = abs((f_plus - f_zero) / h - (f_zero - f_minus) / h)
                if diff <= gap:
                    report.n_kinks += 1
                    continue
            worst = max(worst, rel)
        report.per_param[name] = worst
        if worst >= report.max_rel_error:
            report.max_rel_error = worst
            report.worst_param = name
    zero_grads(params)
    return report
