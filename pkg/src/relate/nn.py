"""Minimal differentiable-network engine with hand-written backprop.

Layers are stateless at inference: ``forward`` returns ``(output, cache)`` and
``backward`` consumes the cache, so trained networks can be shared across
threads. Everything is float64 so input gradients match central finite
differences tightly.
"""

from __future__ import annotations

import numpy as np


class Layer:
    def params(self) -> list:
        return []

    def grads_zero(self) -> list:
        return [np.zeros_like(p) for p in self.params()]

    def forward(self, x, train=False, rng=None):
        raise NotImplementedError

    def backward(self, grad_out, cache):
        """Returns (grad_in, [grad per param])."""
        raise NotImplementedError


class Flatten(Layer):
    def forward(self, x, train=False, rng=None):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, grad_out, cache):
        return grad_out.reshape(cache), []


class Dense(Layer):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        scale = np.sqrt(2.0 / n_in)
        self.w = rng.standard_normal((n_in, n_out)) * scale
        self.b = np.zeros(n_out)

    def params(self):
        return [self.w, self.b]

    def forward(self, x, train=False, rng=None):
        return x @ self.w + self.b, x

    def backward(self, grad_out, cache):
        x = cache
        return grad_out @ self.w.T, [x.T @ grad_out, grad_out.sum(axis=0)]


class ReLU(Layer):
    def forward(self, x, train=False, rng=None):
        mask = x > 0
        return x * mask, mask

    def backward(self, grad_out, cache):
        return grad_out * cache, []


class Conv1d(Layer):
    """1-D convolution over (N, C, L) with same-length output.

    ``causal=True`` pads only on the left, giving dilated causal convolutions.
    """

    def __init__(self, c_in: int, c_out: int, kernel: int, rng: np.random.Generator,
                 dilation: int = 1, causal: bool = False):
        scale = np.sqrt(2.0 / (c_in * kernel))
        self.w = rng.standard_normal((c_out, c_in, kernel)) * scale
        self.b = np.zeros(c_out)
        self.kernel = kernel
        self.dilation = dilation
        self.causal = causal

    def params(self):
        return [self.w, self.b]

    def _padding(self):
        span = self.dilation * (self.kernel - 1)
        if self.causal:
            return span, 0
        return span // 2, span - span // 2

    def forward(self, x, train=False, rng=None):
        left, right = self._padding()
        xp = np.pad(x, ((0, 0), (0, 0), (left, right)))
        n, c, _ = xp.shape
        length = x.shape[2]
        s0, s1, s2 = xp.strides
        windows = np.lib.stride_tricks.as_strided(
            xp,
            shape=(n, c, length, self.kernel),
            strides=(s0, s1, s2, s2 * self.dilation),
            writeable=False,
        )
        # im2col matmul: (n*L, c*k) @ (c*k, f)
        cols = windows.transpose(0, 2, 1, 3).reshape(n * length, c * self.kernel)
        w2d = self.w.reshape(self.w.shape[0], -1).T
        out = (cols @ w2d).reshape(n, length, -1).transpose(0, 2, 1)
        out += self.b[None, :, None]
        return out, (cols, x.shape, (left, right))

    def backward(self, grad_out, cache):
        cols, x_shape, (left, right) = cache
        n, c, length = x_shape
        f = grad_out.shape[1]
        g2d = grad_out.transpose(0, 2, 1).reshape(n * length, f)
        grad_w = (g2d.T @ cols).reshape(f, c, self.kernel)
        grad_b = grad_out.sum(axis=(0, 2))
        gcols = (g2d @ self.w.reshape(f, -1)).reshape(n, length, c, self.kernel)
        gcols = gcols.transpose(0, 2, 1, 3)  # (n, c, L, k)
        grad_xp = np.zeros((n, c, length + left + right))
        # Scatter each kernel tap back as a shifted slice; kernel is small.
        for k in range(self.kernel):
            off = k * self.dilation
            grad_xp[:, :, off:off + length] += gcols[:, :, :, k]
        grad_x = grad_xp[:, :, left:left + length]
        return grad_x, [grad_w, grad_b]


class GlobalMaxPool(Layer):
    """Max over the temporal axis: (N, C, L) -> (N, C)."""

    def forward(self, x, train=False, rng=None):
        idx = np.argmax(x, axis=2)
        out = np.take_along_axis(x, idx[:, :, None], axis=2)[:, :, 0]
        return out, (idx, x.shape)

    def backward(self, grad_out, cache):
        idx, shape = cache
        grad_x = np.zeros(shape)
        np.put_along_axis(grad_x, idx[:, :, None], grad_out[:, :, None], axis=2)
        return grad_x, []


class AdaptiveMaxPool(Layer):
    """Max over ``out_len`` contiguous windows: (N, C, L) -> (N, C, out_len)."""

    def __init__(self, out_len: int):
        self.out_len = out_len

    def forward(self, x, train=False, rng=None):
        n, c, length = x.shape
        if length < self.out_len:
            raise ValueError(f"cannot pool length {length} to {self.out_len}")
        bounds = [(i * length) // self.out_len for i in range(self.out_len + 1)]
        out = np.empty((n, c, self.out_len))
        idx = np.empty((n, c, self.out_len), dtype=np.int64)
        for i in range(self.out_len):
            lo, hi = bounds[i], bounds[i + 1]
            win = x[:, :, lo:hi]
            local = np.argmax(win, axis=2)
            idx[:, :, i] = local + lo
            out[:, :, i] = np.take_along_axis(win, local[:, :, None], axis=2)[:, :, 0]
        return out, (idx, x.shape)

    def backward(self, grad_out, cache):
        idx, shape = cache
        grad_x = np.zeros(shape)
        n, c, _ = shape
        ii = np.arange(n)[:, None, None]
        cc = np.arange(c)[None, :, None]
        np.add.at(grad_x, (ii, cc, idx), grad_out)
        return grad_x, []


class TemporalMean(Layer):
    """Mean over the temporal axis: (N, C, L) -> (N, C)."""

    def forward(self, x, train=False, rng=None):
        return x.mean(axis=2), x.shape

    def backward(self, grad_out, cache):
        shape = cache
        return np.repeat(grad_out[:, :, None], shape[2], axis=2) / shape[2], []


class Dropout(Layer):
    """Inverted dropout; identity at inference."""

    def __init__(self, rate: float):
        self.rate = rate

    def forward(self, x, train=False, rng=None):
        if not train or self.rate <= 0.0:
            return x, None
        keep = 1.0 - self.rate
        mask = (rng.random(x.shape) < keep) / keep
        return x * mask, mask

    def backward(self, grad_out, cache):
        if cache is None:
            return grad_out, []
        return grad_out * cache, []


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Per-sample CE losses and the per-sample gradient wrt logits."""
    z = logits - logits.max(axis=-1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=-1))
    losses = logsumexp - z[np.arange(len(labels)), labels]
    grad = softmax(logits)
    grad[np.arange(len(labels)), labels] -= 1.0
    return losses, grad


class Network:
    """A plain layer stack ending in class logits."""

    def __init__(self, layers: list, input_shape: tuple, num_classes: int):
        self.layers = layers
        self.input_shape = tuple(input_shape)
        self.num_classes = num_classes

    def _check_shape(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 2
        if single:
            x = x[None]
        if x.shape[1:] != self.input_shape:
            raise ValueError(f"input shape {x.shape[1:]} does not match model {self.input_shape}")
        return x if not single else x

    def forward_cached(self, x, train=False, rng=None):
        caches = []
        out = x
        for layer in self.layers:
            out, cache = layer.forward(out, train=train, rng=rng)
            caches.append(cache)
        return out, caches

    def logits(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 2
        if squeeze:
            x = x[None]
        if x.shape[1:] != self.input_shape:
            raise ValueError(f"input shape {x.shape[1:]} does not match model {self.input_shape}")
        out, _ = self.forward_cached(x)
        return out[0] if squeeze else out

    def backward_input(self, grad_logits, caches):
        """Backpropagate to the input; parameter gradients are discarded."""
        grad = grad_logits
        for layer, cache in zip(reversed(self.layers), reversed(caches)):
            grad, _ = layer.backward(grad, cache)
        return grad

    def backward_full(self, grad_logits, caches):
        grad = grad_logits
        param_grads = []
        for layer, cache in zip(reversed(self.layers), reversed(caches)):
            grad, g = layer.backward(grad, cache)
            param_grads.append(g)
        return grad, list(reversed(param_grads))

    def params(self) -> list:
        out = []
        for layer in self.layers:
            out.extend(layer.params())
        return out

    def get_flat_params(self) -> np.ndarray:
        ps = self.params()
        return np.concatenate([p.reshape(-1) for p in ps]) if ps else np.zeros(0)

    def set_flat_params(self, flat: np.ndarray) -> None:
        off = 0
        for p in self.params():
            size = p.size
            p[...] = flat[off:off + size].reshape(p.shape)
            off += size
        if off != flat.size:
            raise ValueError(f"parameter vector size {flat.size} does not match model ({off})")


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch: int):
        super().__init__(f"training diverged: non-finite loss at epoch {epoch}")
        self.epoch = epoch


def train_sgd(net: Network, x_train, y_train, x_val, y_val, *, lr: float, epochs: int,
              seed: int, batch_size: int = 16, momentum: float = 0.9):
    """Mini-batch SGD with momentum; keeps the best-validation-accuracy epoch.

    Deterministic under ``seed``. Raises :class:`TrainingDivergedError` on a
    non-finite loss. With ``epochs=0`` the freshly initialized parameters are
    returned untouched.
    """
    rng = np.random.default_rng(seed)
    params = net.params()
    velocity = [np.zeros_like(p) for p in params]
    best = net.get_flat_params().copy()
    best_acc = -1.0
    n = len(x_train)
    for epoch in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            xb, yb = x_train[idx], y_train[idx]
            logits, caches = net.forward_cached(xb, train=True, rng=rng)
            losses, grad_logits = cross_entropy(logits, yb)
            if not np.all(np.isfinite(losses)):
                raise TrainingDivergedError(epoch)
            _, param_grads = net.backward_full(grad_logits / len(idx), caches)
            flat_grads = [g for layer_g in param_grads for g in layer_g]
            for p, v, g in zip(params, velocity, flat_grads):
                v *= momentum
                v -= lr * g
                p += v
        val_logits, _ = net.forward_cached(x_val)
        acc = float(np.mean(val_logits.argmax(axis=1) == y_val))
        if acc > best_acc:
            best_acc = acc
            best = net.get_flat_params().copy()
    net.set_flat_params(best)
    return net, best_acc
