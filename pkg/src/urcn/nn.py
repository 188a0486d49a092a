"""Trainable parameter registry and 3x3 convolution blocks."""
from __future__ import annotations

from collections import OrderedDict

import numpy as np

from . import autodiff as ad
from .errors import ShapeError


class ParameterStore:
    """Ordered name -> leaf :class:`~urcn.autodiff.Tensor` registry."""

    def __init__(self):
        self._params = OrderedDict()

    def add(self, name, value):
        if name in self._params:
            raise KeyError(f"parameter {name!r} already registered")
        t = ad.Tensor(np.array(value, dtype=np.float64), requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __iter__(self):
        return iter(self._params)

    def __len__(self):
        return len(self._params)

    def items(self):
        return self._params.items()

    def names(self):
        return list(self._params)

    def count(self, prefix=""):
        """Number of scalar entries, optionally restricted to a name prefix."""
        return int(sum(t.size for n, t in self._params.items() if n.startswith(prefix)))

    def zero_grad(self, set_to_none=True):
        """Clear gradients; ``set_to_none=False`` fills explicit zeros instead.

        Zero-filling before a backward pass gives parameters that do not
        reach the loss (for example the extrapolation weight of a last
        stage) a genuine zero gradient rather than none.
        """
        for t in self._params.values():
            t.grad = None if set_to_none else np.zeros_like(t.data)

    def grad_norm(self):
        total = 0.0
        for t in self._params.values():
            if t.grad is not None:
                total += float(np.sum(t.grad * t.grad))
        return float(np.sqrt(total))

    def state_dict(self):
        """Deep copy of all values."""
        return OrderedDict((n, t.data.copy()) for n, t in self._params.items())

    def load_state_dict(self, state, strict=True):
        if strict:
            missing = set(self._params) - set(state)
            extra = set(state) - set(self._params)
            if missing or extra:
                raise KeyError(f"state mismatch: missing={sorted(missing)}, unexpected={sorted(extra)}")
        for name, value in state.items():
            if name not in self._params:
                continue
            t = self._params[name]
            value = np.asarray(value, dtype=np.float64)
            if value.shape != t.shape:
                raise ShapeError(f"{name}: shape {value.shape} != {t.shape}")
            t.data = value.copy()


def glorot_uniform(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class ConvBlock:
    """Stack of 3x3 convolutions with ReLU between layers.

    ``channels`` lists the channel count at every layer boundary, so
    ``[2, 32, 32, 2]`` is three convolutions. With ``residual=True`` the
    block returns ``x[..., :c_out] + body(x)``; when the input carries extra
    conditioning channels (e.g. measured data) only the leading ``c_out``
    channels are carried through the skip connection.
    """

    def __init__(self, store, prefix, channels, residual=False, rng=None):
        if len(channels) < 2:
            raise ValueError("ConvBlock needs at least one layer")
        if residual and channels[0] < channels[-1]:
            raise ShapeError("residual block cannot have more output than input channels")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.prefix = prefix
        self.channels = [int(c) for c in channels]
        self.residual = residual
        self.kernels = []
        self.biases = []
        for i, (cin, cout) in enumerate(zip(self.channels, self.channels[1:])):
            k = glorot_uniform(rng, (3, 3, cin, cout), 9 * cin, 9 * cout)
            self.kernels.append(store.add(f"{prefix}.conv{i}.weight", k))
            self.biases.append(store.add(f"{prefix}.conv{i}.bias", np.zeros(cout)))

    @property
    def n_layers(self):
        return len(self.kernels)

    @property
    def c_in(self):
        return self.channels[0]

    @property
    def c_out(self):
        return self.channels[-1]

    def parameter_count(self):
        return int(sum(k.size + b.size for k, b in zip(self.kernels, self.biases)))

    def __call__(self, x):
        x = ad.as_tensor(x)
        if x.shape[-1] != self.c_in:
            raise ShapeError(f"{self.prefix}: expected {self.c_in} input channels, got {x.shape[-1]}")
        h = x
        last = self.n_layers - 1
        for i, (k, b) in enumerate(zip(self.kernels, self.biases)):
            h = ad.conv2d(h, k, b)
            if i < last:
                h = ad.relu(h)
        if self.residual:
            skip = x if self.c_in == self.c_out else ad.slice_channels(x, 0, self.c_out)
            h = ad.add(skip, h)
        return h

    def set_identity(self):
        """Zero the last layer so a residual block passes its skip through."""
        if not self.residual:
            raise ValueError(f"{self.prefix}: only residual blocks have an identity setting")
        self.kernels[-1].data = np.zeros_like(self.kernels[-1].data)
        self.biases[-1].data = np.zeros_like(self.biases[-1].data)

    def set_linear(self, matrix, offset=None):
        """Make the body compute an exact per-pixel linear map.

        ``matrix`` has shape ``(c_in, c_out)``; the body output becomes
        ``x @ matrix + offset``. Each input channel is split into its positive
        and negative parts by the first layer and recombined by the last, so
        the ReLUs pass the signal unchanged. Needs ``2 * c_in`` hidden
        channels in every hidden layer. Used to freeze learned blocks to
        analytic formulas.
        """
        matrix = np.asarray(matrix, dtype=np.float64)
        cin, cout = self.c_in, self.c_out
        if matrix.shape != (cin, cout):
            raise ShapeError(f"matrix must be {(cin, cout)}, got {matrix.shape}")
        hidden = self.channels[1:-1]
        if any(hc < 2 * cin for hc in hidden):
            raise ShapeError(f"{self.prefix}: hidden widths {hidden} too narrow for a linear pass-through")
        for k, b in zip(self.kernels, self.biases):
            k.data = np.zeros_like(k.data)
            b.data = np.zeros_like(b.data)
        if self.n_layers == 1:
            self.kernels[0].data[1, 1] = matrix
        else:
            split = np.zeros((cin, 2 * cin))
            split[np.arange(cin), np.arange(cin)] = 1.0
            split[np.arange(cin), cin + np.arange(cin)] = -1.0
            self.kernels[0].data[1, 1, :, :2 * cin] = split
            eye = np.eye(2 * cin)
            for k in self.kernels[1:-1]:
                k.data[1, 1, :2 * cin, :2 * cin] = eye
            self.kernels[-1].data[1, 1, :2 * cin, :] = np.vstack([matrix, -matrix])
        if offset is not None:
            self.biases[-1].data = np.broadcast_to(np.asarray(offset, dtype=np.float64), (cout,)).copy()

    def set_soft_threshold(self, threshold):
        """Make a residual block compute ``soft(x, threshold)`` exactly.

        The body returns ``relu(x - t) - relu(-x - t) - relu(x) + relu(-x)``,
        which the skip turns into the soft threshold. Needs ``4 * c``
        channels in every hidden layer.
        """
        c = self.c_in
        if not self.residual or self.c_out != c or self.n_layers < 2:
            raise ValueError(f"{self.prefix}: soft threshold needs a residual block with equal in/out channels")
        if any(hc < 4 * c for hc in self.channels[1:-1]):
            raise ShapeError(f"{self.prefix}: hidden widths too narrow for a soft threshold")
        if threshold < 0:
            raise ValueError("threshold must be >= 0")
        for k, b in zip(self.kernels, self.biases):
            k.data = np.zeros_like(k.data)
            b.data = np.zeros_like(b.data)
        eye = np.eye(c)
        self.kernels[0].data[1, 1, :, :4 * c] = np.hstack([eye, -eye, eye, -eye])
        self.biases[0].data[:2 * c] = -float(threshold)
        for k in self.kernels[1:-1]:
            k.data[1, 1, :4 * c, :4 * c] = np.eye(4 * c)
        self.kernels[-1].data[1, 1, :4 * c, :] = np.vstack([eye, -eye, -eye, eye])


def conv_parameter_count(channels):
    """Weights plus biases of a 3x3 block with the given channel boundaries."""
    return int(sum(9 * a * b + b for a, b in zip(channels, channels[1:])))
