"""A small fully connected network in numpy with backprop and Adam."""
from __future__ import annotations

import numpy as np

from .common import TrainingFault


class Mlp:
    """ReLU hidden layers, linear output; one output per action."""

    def __init__(self, sizes, rng: np.random.Generator, activation: str = "relu"):
        self.sizes = tuple(int(s) for s in sizes)
        if len(self.sizes) < 2:
            raise ValueError("need input and output sizes")
        self.activation = activation
        self.weights, self.biases = [], []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            limit = np.sqrt(6.0 / fan_in) if activation == "relu" else np.sqrt(3.0 / fan_in)
            self.weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))
        self._bind(np.concatenate([p.ravel() for p in self.params]))

    def _bind(self, flat: np.ndarray):
        # weights and biases become views into one contiguous vector
        self.flat = flat
        self.grad_flat = np.zeros_like(flat)
        self.weights, self.biases, self.grads = [], [], []
        k = 0
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            for shape in ((fan_in, fan_out), (fan_out,)):
                size = int(np.prod(shape))
                view = flat[k:k + size].reshape(shape)
                (self.weights if len(shape) == 2 else self.biases).append(view)
                self.grads.append(self.grad_flat[k:k + size].reshape(shape))
                k += size

    # parameters as a flat list of arrays (weights then bias per layer)
    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    def copy_from(self, other: "Mlp"):
        self.flat[:] = other.flat

    def clone(self) -> "Mlp":
        c = object.__new__(Mlp)
        c.sizes, c.activation = self.sizes, self.activation
        c._bind(self.flat.copy())
        return c

    def _act(self, z):
        return np.maximum(z, 0.0) if self.activation == "relu" else np.tanh(z)

    def _dact(self, z, h):
        return (z > 0).astype(z.dtype) if self.activation == "relu" else 1.0 - h * h

    def forward(self, x: np.ndarray):
        h = np.atleast_2d(np.asarray(x, dtype=float))
        cache = [(None, h)]
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            h = z if i == last else self._act(z)
            cache.append((z, h))
        return h, cache

    def predict(self, x) -> np.ndarray:
        return self.forward(x)[0]

    def gradients(self, x, actions, targets):
        """Loss 0.5 * mean((Q(x)[a] - target)^2) and its parameter gradients.

        The returned gradient arrays are views into ``grad_flat`` and are
        overwritten by the next call.
        """
        out, cache = self.forward(x)
        n = out.shape[0]
        rows = np.arange(n)
        err = out[rows, actions] - targets
        loss = 0.5 * float(np.mean(err * err))
        delta = np.zeros_like(out)
        delta[rows, actions] = err / n
        grads = self.grads
        for i in range(len(self.weights) - 1, -1, -1):
            h_prev = cache[i][1]
            np.matmul(h_prev.T, delta, out=grads[2 * i])
            np.sum(delta, axis=0, out=grads[2 * i + 1])
            if i > 0:
                z, h = cache[i]
                delta = (delta @ self.weights[i].T) * self._dact(z, h)
        return loss, grads


class Adam:
    """Adam on a flat parameter vector, with global-norm gradient clipping."""

    def __init__(self, params: np.ndarray, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8,
                 clip_norm=10.0):
        self.params = params
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.clip_norm = clip_norm
        self.m = np.zeros_like(params)
        self.v = np.zeros_like(params)
        self.t = 0

    def step(self, grad: np.ndarray):
        if self.clip_norm:
            norm = float(np.sqrt(grad @ grad))
            if norm > self.clip_norm:
                grad = grad * (self.clip_norm / norm)
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        self.m *= self.b1
        self.m += (1 - self.b1) * grad
        self.v *= self.b2
        self.v += (1 - self.b2) * grad * grad
        self.params -= (self.lr / c1) * self.m / (np.sqrt(self.v / c2) + self.eps)


def train_step(net: Mlp, opt: Adam, x, actions, targets) -> float:
    loss, _ = net.gradients(x, actions, targets)
    if not np.isfinite(loss) or not np.isfinite(net.grad_flat).all():
        raise TrainingFault("non-finite loss or gradient")
    opt.step(net.grad_flat)
    return loss


def numeric_gradients(net: Mlp, x, actions, targets, h: float = 1e-5) -> list[np.ndarray]:
    """Central finite differences of the same loss, parameter by parameter."""
    out = []
    for p in net.params:
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            old = p[idx]
            p[idx] = old + h
            lp, _ = net.gradients(x, actions, targets)
            p[idx] = old - h
            lm, _ = net.gradients(x, actions, targets)
            p[idx] = old
            g[idx] = (lp - lm) / (2 * h)
        out.append(g)
    return out


def gradient_check(net: Mlp, x, actions, targets, h: float = 1e-5) -> float:
    """Largest relative error between analytic and numeric gradients."""
    _, ana = net.gradients(x, actions, targets)
    ana = [g.copy() for g in ana]
    num = numeric_gradients(net, x, actions, targets, h)
    worst = 0.0
    for a, n in zip(ana, num):
        denom = np.maximum(np.abs(a) + np.abs(n), 1e-6)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst
