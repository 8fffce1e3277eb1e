"""Dense feed-forward networks with hand-written backprop.

Everything downstream (gate policies, masking agents, team Q-networks,
attackers) runs on this substrate.  No autodiff: gradients are computed
explicitly so they can be validated against central finite differences,
and all arithmetic is float64 so seeded runs replay bitwise.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

CHECKPOINT_VERSION = 1


class ShapeError(ValueError):
    """Input or gradient shape inconsistent with the network."""


class NumericError(FloatingPointError):
    """A non-finite value appeared where a finite one is required."""


def _check_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values in {what}")


class DenseNetwork:
    """MLP with ReLU hidden layers and an identity output layer.

    Weights are uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)], drawn from
    the given seed, so two networks built with identical arguments are
    identical.
    """

    def __init__(self, layer_sizes: list[int], seed: int = 0):
        if len(layer_sizes) < 2 or any(int(s) <= 0 for s in layer_sizes):
            raise ShapeError(f"bad layer sizes: {layer_sizes}")
        self.layer_sizes = [int(s) for s in layer_sizes]
        self.seed = int(seed)
        rng = np.random.default_rng(self.seed)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            self.weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
            self.biases.append(rng.uniform(-bound, bound, size=fan_out))

    @property
    def in_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def out_dim(self) -> int:
        return self.layer_sizes[-1]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def parameters(self) -> list[np.ndarray]:
        """Flat parameter list, weights and biases interleaved per layer."""
        out = []
        for W, b in zip(self.weights, self.biases):
            out.append(W)
            out.append(b)
        return out

    def _prep_input(self, x: np.ndarray) -> tuple[np.ndarray, bool]:
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ShapeError(
                f"input of width {x.shape[-1]} fed to net expecting {self.in_dim}"
            )
        return x, squeeze

    def forward(self, x: np.ndarray) -> np.ndarray:
        x, squeeze = self._prep_input(x)
        a = x
        for layer, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ W.T + b
            a = z if layer == self.n_layers - 1 else np.maximum(z, 0.0)
        return a[0] if squeeze else a

    def _forward_cached(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        # Returns the output and the post-activation of every layer
        # (including the input), as needed by backward.
        acts = [x]
        a = x
        for layer, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ W.T + b
            a = z if layer == self.n_layers - 1 else np.maximum(z, 0.0)
            acts.append(a)
        return a, acts

    def backward(self, x: np.ndarray, output_gradient: np.ndarray) -> list[np.ndarray]:
        """Gradients of sum(output * output_gradient) w.r.t. all parameters.

        Accepts single vectors or batches; batch gradients are summed.
        Returned list mirrors :meth:`parameters`.
        """
        x, squeeze = self._prep_input(x)
        g = np.asarray(output_gradient, dtype=np.float64)
        if squeeze:
            g = g[None, :]
        if g.shape != (x.shape[0], self.out_dim):
            raise ShapeError(
                f"output gradient shape {g.shape} does not match ({x.shape[0]}, {self.out_dim})"
            )
        _, acts = self._forward_cached(x)
        grads: list[np.ndarray] = [None] * (2 * self.n_layers)  # type: ignore[list-item]
        gz = g
        for layer in range(self.n_layers - 1, -1, -1):
            a_prev = acts[layer]
            grads[2 * layer] = gz.T @ a_prev
            grads[2 * layer + 1] = gz.sum(axis=0)
            if layer > 0:
                gz = (gz @ self.weights[layer]) * (acts[layer] > 0)
        for arr in grads:
            _check_finite(arr, "parameter gradients")
        return grads

    def copy(self) -> "DenseNetwork":
        net = DenseNetwork.__new__(DenseNetwork)
        net.layer_sizes = list(self.layer_sizes)
        net.seed = self.seed
        net.weights = [W.copy() for W in self.weights]
        net.biases = [b.copy() for b in self.biases]
        return net

    def digest(self) -> str:
        h = hashlib.sha256()
        for p in self.parameters():
            h.update(np.ascontiguousarray(p).tobytes())
        return h.hexdigest()

    def save(self, path: str | Path) -> None:
        doc = {
            "version": CHECKPOINT_VERSION,
            "layer_sizes": self.layer_sizes,
            "seed": self.seed,
            "weights": [W.ravel().tolist() for W in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }
        Path(path).write_text(json.dumps(doc))

    @classmethod
    def load(cls, path: str | Path) -> "DenseNetwork":
        doc = json.loads(Path(path).read_text())
        if doc.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version: {doc.get('version')}")
        net = cls(doc["layer_sizes"], seed=doc["seed"])
        for layer, flat in enumerate(doc["weights"]):
            net.weights[layer] = np.array(flat, dtype=np.float64).reshape(
                net.weights[layer].shape
            )
        for layer, flat in enumerate(doc["biases"]):
            net.biases[layer] = np.array(flat, dtype=np.float64)
        return net


class Optimizer:
    """Parameter updater: adaptive-moment mode by default, plain SGD for
    analytic tests."""

    def __init__(self, lr: float = 5e-4, mode: str = "adam",
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        if mode not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer mode: {mode}")
        self.lr = float(lr)
        self.mode = mode
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._m: list[np.ndarray] | None = None
        self._v: list[np.ndarray] | None = None

    def step(self, net: DenseNetwork, grads: list[np.ndarray]) -> None:
        params = net.parameters()
        if len(grads) != len(params) or any(
            g.shape != p.shape for g, p in zip(grads, params)
        ):
            raise ShapeError("gradient shapes do not mirror parameter shapes")
        self.step_count += 1
        if self.mode == "sgd":
            for p, g in zip(params, grads):
                p -= self.lr * g
            return
        if self._m is None:
            self._m = [np.zeros_like(p) for p in params]
            self._v = [np.zeros_like(p) for p in params]
        t = self.step_count
        for p, g, m, v in zip(params, grads, self._m, self._v):
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            m_hat = m / (1 - self.beta1 ** t)
            v_hat = v / (1 - self.beta2 ** t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class TargetCopy:
    """Frozen snapshot of a network, refreshed on an explicit schedule."""

    def __init__(self, net: DenseNetwork):
        self.net = net.copy()
        self.staleness = 0

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self.net.forward(x)

    def sync(self, net: DenseNetwork) -> None:
        self.net.weights = [W.copy() for W in net.weights]
        self.net.biases = [b.copy() for b in net.biases]
        self.staleness = 0

    def tick(self) -> None:
        self.staleness += 1


def finite_difference_grads(net: DenseNetwork, x: np.ndarray,
                            output_gradient: np.ndarray,
                            step: float = 1e-5) -> list[np.ndarray]:
    """Central-difference gradients of sum(forward(x) * output_gradient).

    Independent oracle for :meth:`DenseNetwork.backward`.
    """
    g = np.asarray(output_gradient, dtype=np.float64)

    def loss() -> float:
        out = net.forward(x)
        return float(np.sum(out * g))

    grads = []
    for p in net.parameters():
        fd = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            orig = p[idx]
            p[idx] = orig + step
            up = loss()
            p[idx] = orig - step
            down = loss()
            p[idx] = orig
            fd[idx] = (up - down) / (2 * step)
            it.iternext()
        grads.append(fd)
    return grads
