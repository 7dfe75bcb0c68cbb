# -*- coding: utf-8 -*-

"""A module of dense tensors with reverse-mode gradients and a finite-difference checker"""

from collections import OrderedDict
import contextlib
import hashlib
import logging
import threading

import numpy as np
from scipy.special import erf, expit

logger = logging.getLogger(__name__)

_PRECISION = {'dtype': np.float32}
_LOCAL = threading.local()

_SQRT_2 = float(np.sqrt(2.))
_SQRT_2PI = float(np.sqrt(2. * np.pi))


class NumericError(ArithmeticError):
    """Raised when a primitive or a gradient produces a non-finite value"""
    pass


class ShapeError(ValueError):
    """Raised for shape mismatches outside trailing-vector application"""
    pass


def set_precision(dtype):
    """
    Set the floating point precision of newly constructed tensors

    Parameters
    ----------
    dtype: str, type
        Either 'float32' (training) or 'float64' (verification)
    """
    dtype = np.dtype(dtype).type
    if dtype not in (np.float32, np.float64):
        raise ValueError("{}: Not a valid precision. Please use {}".format(dtype, ['float32', 'float64']))

    _PRECISION['dtype'] = dtype


def get_precision():
    """Return the current floating point type"""
    return _PRECISION['dtype']


@contextlib.contextmanager
def precision(dtype):
    """Temporarily switch the global precision"""
    previous = get_precision()
    set_precision(dtype)
    try:
        yield
    finally:
        set_precision(previous)


def _active_record():
    """Return the innermost computation record of this thread, if any"""
    stack = getattr(_LOCAL, 'records', None)
    return stack[-1] if stack else None


class Tensor:
    """
    An immutable dense array of reals, optionally a trainable parameter
    """
    __slots__ = ('_data', 'name', 'trainable', '_record', '__weakref__')

    def __init__(self, data, name=None, trainable=False, dtype=None, op='tensor'):
        """
        Initialize the Tensor

        Parameters
        ----------
        data: array-like
            The element values
        name: str (optional)
            A name, required for trainable tensors
        trainable: bool
            Whether gradients are collected for this tensor
        dtype: type (optional)
            The float type, the global precision by default
        op: str
            The primitive that produced the values, used in error messages
        """
        array = np.array(data, dtype=dtype or get_precision())
        if not np.all(np.isfinite(array)):
            raise NumericError("Non-finite value produced by '{}'".format(op))

        if trainable and not name:
            raise ValueError("Trainable tensors must be named")

        array.setflags(write=False)
        self._data = array
        self.name = name
        self.trainable = trainable
        self._record = None

    @property
    def data(self):
        """The read-only element array"""
        return self._data

    @property
    def shape(self):
        return self._data.shape

    @property
    def ndim(self):
        return self._data.ndim

    @property
    def size(self):
        return self._data.size

    @property
    def dtype(self):
        return self._data.dtype

    @property
    def requires_grad(self):
        """Whether a gradient can flow into this tensor"""
        return self.trainable or self._record is not None

    def numpy(self):
        """Return a writable copy of the elements"""
        return np.array(self._data)

    def item(self):
        """Return the single element as a float"""
        if self.size != 1:
            raise ShapeError("item() needs a single element, shape is {}".format(self.shape))

        return float(self._data.reshape(-1)[0])

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.)

    def __repr__(self):
        label = " '{}'".format(self.name) if self.name else ''
        return "<Tensor{} shape={} dtype={}>".format(label, self.shape, self.dtype.name)


class Application:
    """One recorded use of a primitive"""
    __slots__ = ('op', 'output', 'inputs', 'backward')

    def __init__(self, op, output, inputs, backward):
        self.op = op
        self.output = output
        self.inputs = inputs
        self.backward = backward


class ComputationRecord:
    """
    The ordered record of primitive applications made during one forward pass

    Used as a context manager; primitives applied inside the block are
    recorded so that `gradients` can replay the chain rule backward.
    """
    def __init__(self):
        """Initialize an empty record"""
        self.applications = []

    def __enter__(self):
        stack = getattr(_LOCAL, 'records', None)
        if stack is None:
            stack = _LOCAL.records = []
        stack.append(self)
        return self

    def __exit__(self, *exc):
        _LOCAL.records.pop()
        return False

    def __len__(self):
        return len(self.applications)

    def append(self, op, output, inputs, backward):
        """Add an application to the end of the record"""
        self.applications.append(Application(op, output, inputs, backward))
        output._record = self


def as_tensor(value):
    """Wrap a constant array or scalar as a Tensor"""
    if isinstance(value, Tensor):
        return value

    return Tensor(value, op='constant')


def _apply(op, data, inputs, backward):
    """
    Build the output of a primitive and record it when a gradient can flow

    Parameters
    ----------
    op: str
        The primitive name
    data: np.ndarray
        The computed output values
    inputs: sequence
        The input tensors
    backward: callable
        Maps the output gradient to a tuple of input gradients

    Returns
    -------
    Tensor
        The output tensor
    """
    out = Tensor(data, dtype=get_precision(), op=op)
    record = _active_record()
    if record is not None and any(t.requires_grad for t in inputs):
        record.append(op, out, tuple(inputs), backward)

    return out


def _sum_to_vector(grad, size):
    """Reduce a gradient over all leading axes"""
    return grad.reshape(-1, size).sum(axis=0)


def _pair(a, b, op):
    """Validate a binary elementwise pair, returning (a, b, trailing)"""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape == b.shape:
        return a, b, False

    if b.ndim == 1 and a.ndim >= 1 and a.shape[-1] == b.shape[0]:
        return a, b, True

    raise ShapeError("{}: shapes {} and {} are not equal and the second is not a trailing vector".format(op, a.shape, b.shape))


def add(a, b):
    """Elementwise sum, or a trailing vector added to every row"""
    a, b, trailing = _pair(a, b, 'add')

    def backward(g):
        return g, _sum_to_vector(g, b.size) if trailing else g

    return _apply('add', a.data + b.data, (a, b), backward)


def sub(a, b):
    """Elementwise difference, or a trailing vector subtracted from every row"""
    a, b, trailing = _pair(a, b, 'sub')

    def backward(g):
        return g, -_sum_to_vector(g, b.size) if trailing else -g

    return _apply('sub', a.data - b.data, (a, b), backward)


def mul(a, b):
    """Elementwise product, or every row scaled by a trailing vector"""
    a, b, trailing = _pair(a, b, 'mul')

    def backward(g):
        gb = g * a.data
        return g * b.data, _sum_to_vector(gb, b.size) if trailing else gb

    return _apply('mul', a.data * b.data, (a, b), backward)


def scale(x, factor):
    """Multiply by a constant scalar"""
    x = as_tensor(x)
    factor = float(factor)
    return _apply('scale', x.data * factor, (x,), lambda g: (g * factor,))


def add_scalar(x, value):
    """Add a constant scalar"""
    x = as_tensor(x)
    return _apply('add_scalar', x.data + float(value), (x,), lambda g: (g,))


def scale_rows(x, factors):
    """
    Multiply every trailing row of x by one factor

    Parameters
    ----------
    x: Tensor
        The values, shape (..., n)
    factors: Tensor, array-like
        One factor per row, shape (...)
    """
    x, factors = as_tensor(x), as_tensor(factors)
    if factors.shape != x.shape[:-1]:
        raise ShapeError("scale_rows: factors of shape {} do not match rows of {}".format(factors.shape, x.shape))

    def backward(g):
        return g * factors.data[..., None], (g * x.data).sum(axis=-1)

    return _apply('scale_rows', x.data * factors.data[..., None], (x, factors), backward)


def matmul(a, b):
    """
    Matrix product over the last two axes

    The right operand is either a single matrix applied to every leading
    index of the left one, or a stack with the same leading extents.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul: shapes {} and {} are not aligned".format(a.shape, b.shape))

    shared = b.ndim == 2
    if not shared and a.shape[:-2] != b.shape[:-2]:
        raise ShapeError("matmul: leading extents {} and {} differ".format(a.shape[:-2], b.shape[:-2]))

    def backward(g):
        if shared:
            ga = g @ b.data.T
            gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        else:
            ga = g @ np.swapaxes(b.data, -1, -2)
            gb = np.swapaxes(a.data, -1, -2) @ g
        return ga, gb

    return _apply('matmul', a.data @ b.data, (a, b), backward)


def transpose(x, axes=None):
    """Permute axes, swapping the last two by default"""
    x = as_tensor(x)
    if axes is None:
        axes = list(range(x.ndim))
        axes[-2], axes[-1] = axes[-1], axes[-2]

    inverse = np.argsort(axes)
    return _apply('transpose', np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inverse),))


def reshape(x, shape):
    """Give the elements a new shape"""
    x = as_tensor(x)
    return _apply('reshape', x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def gelu(x):
    """The Gaussian-error linear unit, x * Phi(x)"""
    x = as_tensor(x)
    cdf = 0.5 * (1. + erf(x.data / _SQRT_2))
    pdf = np.exp(-0.5 * x.data ** 2) / _SQRT_2PI
    return _apply('gelu', x.data * cdf, (x,), lambda g: (g * (cdf + x.data * pdf),))


def logistic(x):
    """The logistic sigmoid"""
    x = as_tensor(x)
    out = expit(x.data)
    return _apply('logistic', out, (x,), lambda g: (g * out * (1. - out),))


def tanh(x):
    """The hyperbolic tangent"""
    x = as_tensor(x)
    out = np.tanh(x.data)
    return _apply('tanh', out, (x,), lambda g: (g * (1. - out ** 2),))


def log(x):
    """The natural logarithm, defined for positive values only"""
    x = as_tensor(x)
    with np.errstate(all='ignore'):
        out = np.log(x.data)

    return _apply('log', out, (x,), lambda g: (g / x.data,))


def sqrt(x):
    """The square root; the derivative at zero is taken from a tiny floor"""
    x = as_tensor(x)
    with np.errstate(all='ignore'):
        out = np.sqrt(x.data)

    floor = np.finfo(get_precision()).tiny
    return _apply('sqrt', out, (x,), lambda g: (0.5 * g / np.sqrt(np.maximum(x.data, floor)),))


def take_rows(table, ids):
    """
    Gather rows of a 2D table, as an embedding lookup

    Parameters
    ----------
    table: Tensor
        The table, shape (rows, width)
    ids: array-like
        Integer row indices of any shape

    Returns
    -------
    Tensor
        Shape ids.shape + (width,)
    """
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    if table.ndim != 2:
        raise ShapeError("take_rows: table must be 2D, shape is {}".format(table.shape))

    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        bad = ids[(ids < 0) | (ids >= table.shape[0])][0]
        raise IndexError("{}: id out of range for a table of {} rows".format(bad, table.shape[0]))

    def backward(g):
        grad = np.zeros(table.shape, dtype=g.dtype)
        np.add.at(grad, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        return (grad,)

    return _apply('take_rows', table.data[ids], (table,), backward)


def select(x, index):
    """
    Fancy-index the leading axes of x

    Parameters
    ----------
    x: Tensor
        The values
    index: tuple
        Integer index arrays, one per indexed leading axis
    """
    x = as_tensor(x)
    index = tuple(np.asarray(i, dtype=np.int64) for i in index)

    def backward(g):
        grad = np.zeros(x.shape, dtype=g.dtype)
        np.add.at(grad, index, g)
        return (grad,)

    return _apply('select', x.data[index], (x,), backward)


def concat(tensors, axis=-1):
    """Join tensors along an axis"""
    tensors = [as_tensor(t) for t in tensors]
    axis = axis % tensors[0].ndim
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _apply('concat', np.concatenate([t.data for t in tensors], axis=axis), tensors, backward)


def reduce_sum(x, axis=None):
    """Sum over one axis, or over all elements when axis is None"""
    x = as_tensor(x)

    def backward(g):
        if axis is None:
            return (np.full(x.shape, g, dtype=g.dtype),)
        return (np.broadcast_to(np.expand_dims(g, axis), x.shape).copy(),)

    return _apply('sum', x.data.sum(axis=axis), (x,), backward)


def reduce_mean(x, axis=None):
    """Mean over one axis, or over all elements when axis is None"""
    x = as_tensor(x)
    count = x.size if axis is None else x.shape[axis]
    return scale(reduce_sum(x, axis), 1. / count)


def masked_sum(x, mask, axis=None):
    """Sum of the elements where mask is 1"""
    return reduce_sum(mul(x, np.asarray(mask, dtype=get_precision())), axis)


def masked_mean(x, mask, axis=None):
    """Mean of the elements where mask is 1; empty selections are an error"""
    mask = np.asarray(mask, dtype=get_precision())
    count = mask.sum(axis=axis)
    if np.any(count == 0):
        raise ValueError("masked_mean: empty selection")

    total = masked_sum(x, mask, axis)
    return mul(total, 1. / count) if axis is not None else scale(total, 1. / count)


def _guarded_exp(values, axis, mask):
    """Shifted exponentials and their sum along an axis, skipping masked entries"""
    if values.shape[axis] == 0:
        raise ValueError("softmax over an empty axis")

    if mask is None:
        peak = values.max(axis=axis, keepdims=True)
        exps = np.exp(values - peak)
    else:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), values.shape)
        peak = np.where(mask, values, -np.inf).max(axis=axis, keepdims=True)
        if not np.all(np.isfinite(peak)):
            raise ValueError("softmax with every entry of an axis masked")
        exps = np.where(mask, np.exp(np.where(mask, values - peak, 0.)), 0.)

    return exps, peak, exps.sum(axis=axis, keepdims=True)


def softmax(x, axis=-1, mask=None):
    """
    Normalized exponentials along an axis, guarded against overflow

    Parameters
    ----------
    x: Tensor
        The scores
    axis: int
        The axis to normalize
    mask: array-like (optional)
        Boolean, broadcastable to x; False entries get probability zero

    Returns
    -------
    Tensor
        Probabilities summing to one along the axis
    """
    x = as_tensor(x)
    exps, _, total = _guarded_exp(x.data, axis, mask)
    probs = exps / total

    def backward(g):
        return (probs * (g - (g * probs).sum(axis=axis, keepdims=True)),)

    return _apply('softmax', probs, (x,), backward)


def cross_entropy(logits, labels):
    """
    Cross-entropy of integer labels under softmax(logits), one value per row

    Parameters
    ----------
    logits: Tensor
        Shape (rows, classes)
    labels: array-like
        Integer class per row

    Returns
    -------
    Tensor
        Shape (rows,)
    """
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != logits.shape[:1]:
        raise ShapeError("cross_entropy: logits {} and labels {} do not align".format(logits.shape, labels.shape))

    exps, peak, total = _guarded_exp(logits.data, -1, None)
    rows = np.arange(labels.size)
    losses = np.log(total[:, 0]) + peak[:, 0] - logits.data[rows, labels]
    probs = exps / total

    def backward(g):
        grad = np.array(probs)
        grad[rows, labels] -= 1.
        return (grad * g[:, None],)

    return _apply('cross_entropy', losses, (logits,), backward)


def layer_normalize(states, gain, shift, epsilon=1e-12):
    """
    Normalize every trailing row to zero mean and unit variance, then scale and shift

    Parameters
    ----------
    states: Tensor
        The values, shape (..., n)
    gain: Tensor
        Shape (n,)
    shift: Tensor
        Shape (n,)
    epsilon: float
        Added to the variance

    Returns
    -------
    Tensor
        (x - mean) / sqrt(variance + epsilon) * gain + shift
    """
    states, gain, shift = as_tensor(states), as_tensor(gain), as_tensor(shift)
    width = states.shape[-1]
    if gain.shape != (width,) or shift.shape != (width,):
        raise ShapeError("layer_normalize: gain {} and shift {} do not match width {}".format(gain.shape, shift.shape, width))

    if epsilon <= 0:
        raise ValueError("layer_normalize: epsilon must be positive")

    centered = states.data - states.data.mean(axis=-1, keepdims=True)
    inverse = 1. / np.sqrt((centered ** 2).mean(axis=-1, keepdims=True) + epsilon)
    normed = centered * inverse

    def backward(g):
        gn = g * gain.data
        gx = inverse * (gn - gn.mean(axis=-1, keepdims=True) - normed * (gn * normed).mean(axis=-1, keepdims=True))
        return gx, _sum_to_vector(g * normed, width), _sum_to_vector(g, width)

    return _apply('layer_normalize', normed * gain.data + shift.data, (states, gain, shift), backward)


def gradients(loss, parameters=None):
    """
    Replay the record backward from a scalar loss

    Parameters
    ----------
    loss: Tensor
        A single-element result of recorded primitives
    parameters: sequence (optional)
        The tensors to return gradients for, in order

    Returns
    -------
    list, dict
        One gradient array per requested parameter (zeros when the loss does
        not depend on it), or a name to gradient mapping of every trainable
        tensor reached when no parameters are given
    """
    if loss.size != 1:
        raise ShapeError("gradients: loss must be a scalar, shape is {}".format(loss.shape))

    grads = {id(loss): np.ones(loss.shape, dtype=loss.dtype)}
    reached = OrderedDict()
    if loss.trainable:
        reached[id(loss)] = loss

    record = loss._record
    for app in reversed(record.applications if record is not None else []):
        upstream = grads.pop(id(app.output), None)
        if upstream is None:
            continue

        for tensor, grad in zip(app.inputs, app.backward(upstream)):
            if grad is None or not tensor.requires_grad:
                continue

            if not np.all(np.isfinite(grad)):
                raise NumericError("Non-finite gradient in the backward pass of '{}'".format(app.op))

            key = id(tensor)
            grads[key] = grads[key] + grad if key in grads else np.asarray(grad)
            if tensor.trainable:
                reached[key] = tensor

    if parameters is None:
        return OrderedDict((tensor.name, grads[key]) for key, tensor in reached.items())

    return [grads.get(id(p), np.zeros(p.shape, dtype=p.dtype)) for p in parameters]


def finite_difference_check(function, parameters, step=1e-5, analytic=None, coordinates=None, seed=0):
    """
    Compare recorded gradients with central differences

    Parameters
    ----------
    function: callable
        Maps a list of parameter tensors to a scalar Tensor
    parameters: sequence
        The trainable tensors to perturb
    step: float
        The central difference half-width, in [1e-7, 1e-4]
    analytic: sequence (optional)
        Gradients to check instead of the recorded ones
    coordinates: int (optional)
        Check at most this many randomly chosen coordinates per tensor
    seed: int
        Seed for the coordinate choice

    Returns
    -------
    float
        The maximum over coordinates of |a - c| / max(|a|, |c|, 1e-8)
    """
    if get_precision() is not np.float64:
        raise ValueError("finite_difference_check needs 64-bit precision; use precision('float64')")

    if not 1e-7 <= step <= 1e-4:
        raise ValueError("{}: step must be in [1e-7, 1e-4]".format(step))

    parameters = list(parameters)
    if analytic is None:
        with ComputationRecord():
            loss = function(parameters)
        analytic = gradients(loss, parameters)

    rng = np.random.default_rng(seed)
    worst = 0.
    for n, (param, grad) in enumerate(zip(parameters, analytic)):
        base = param.numpy()
        flat = np.asarray(grad).reshape(-1)
        indices = np.arange(base.size)
        if coordinates is not None and coordinates < base.size:
            indices = np.sort(rng.choice(base.size, coordinates, replace=False))

        for i in indices:
            values = []
            for delta in (step, -step):
                moved = base.copy()
                moved.reshape(-1)[i] += delta
                trial = list(parameters)
                trial[n] = Tensor(moved, name=param.name, trainable=True)
                try:
                    values.append(function(trial).item())
                except NumericError as err:
                    raise NumericError("Non-finite function value while perturbing '{}': {}".format(param.name, err))

            central = (values[0] - values[1]) / (2 * step)
            error = abs(flat[i] - central) / max(abs(flat[i]), abs(central), 1e-8)
            worst = max(worst, error)

    logger.debug("finite difference check over %i tensors: max relative error %.3g", len(parameters), worst)

    return worst


class ParameterStore:
    """
    An ordered registry of named trainable tensors

    Reads are safe from several threads; replacing tensors holds a lock.
    """
    def __init__(self, tensors=None):
        """
        Initialize the store

        Parameters
        ----------
        tensors: dict (optional)
            Name to array or Tensor mapping, in registration order
        """
        self._tensors = OrderedDict()
        self._lock = threading.RLock()
        for name, value in (tensors or {}).items():
            self.register(name, value)

    def register(self, name, value, dtype=None):
        """Add a new named parameter"""
        if name in self._tensors:
            raise ValueError("{}: parameter already registered".format(name))

        data = value.data if isinstance(value, Tensor) else value
        self._tensors[name] = Tensor(data, name=name, trainable=True, dtype=dtype, op=name)

    def update(self, arrays):
        """
        Replace parameter values in one exclusive step

        Parameters
        ----------
        arrays: dict
            Name to new array mapping; shapes must be unchanged
        """
        with self._lock:
            for name, data in arrays.items():
                if np.shape(data) != self[name].shape:
                    raise ShapeError("{}: new shape {} differs from {}".format(name, np.shape(data), self[name].shape))

                self._tensors[name] = Tensor(data, name=name, trainable=True, op=name)

    def replaced(self, tensors):
        """Return a new store sharing all tensors except the given ones"""
        store = ParameterStore()
        store._tensors = OrderedDict(self._tensors)
        for tensor in tensors:
            if tensor.name not in store._tensors:
                raise KeyError(tensor.name)
            store._tensors[tensor.name] = tensor

        return store

    def astype(self, dtype):
        """Return a copy with every tensor cast to the given float type"""
        store = ParameterStore()
        for name, tensor in self._tensors.items():
            store.register(name, tensor.data, dtype=np.dtype(dtype).type)

        return store

    def __getitem__(self, name):
        return self._tensors[name]

    def __contains__(self, name):
        return name in self._tensors

    def __iter__(self):
        return iter(self._tensors)

    def __len__(self):
        return len(self._tensors)

    def names(self):
        return list(self._tensors)

    def tensors(self):
        return list(self._tensors.values())

    def items(self):
        return list(self._tensors.items())

    def count(self):
        """The total number of trainable scalars"""
        return int(sum(t.size for t in self._tensors.values()))

    def checksum(self):
        """A SHA-256 digest over names, shapes and 32-bit values"""
        digest = hashlib.sha256()
        for name, tensor in self._tensors.items():
            digest.update(name.encode('utf-8'))
            digest.update(str(tensor.shape).encode('utf-8'))
            digest.update(tensor.data.astype('<f4').tobytes())

        return digest.hexdigest()
