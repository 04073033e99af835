"""Logistic MLP with Bernoulli dropout on layer inputs, trained by minibatch SGD on cross-entropy."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, log_softmax

from ..seeding import derive_rng


@dataclass(frozen=True)
class NetConfig:
    layer_sizes: tuple = (20, 64, 64, 64, 4)
    p_out: tuple | float = 0.8
    learning_rate: float = 0.1
    epochs: int = 60
    batch_size: int = 32
    seed: int = 0
    early_stop_patience: int = 0  # 0 disables early stopping
    ic_subsample: int = 500

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 3:
            raise ValueError("network needs at least one hidden layer")
        if min(sizes) < 1:
            raise ValueError("layer sizes must be positive")
        hidden = len(sizes) - 2
        p = self.p_out
        p = tuple([float(p)] * hidden) if np.isscalar(p) else tuple(float(v) for v in p)
        if len(p) != hidden:
            raise ValueError(f"need one p_out per hidden layer ({hidden})")
        if any(not 0.0 <= v <= 1.0 for v in p):
            raise ValueError("p_out must lie in [0,1]")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.early_stop_patience < 0 or self.ic_subsample < 1:
            raise ValueError("early_stop_patience must be >= 0 and ic_subsample >= 1")
        object.__setattr__(self, "layer_sizes", sizes)
        object.__setattr__(self, "p_out", p)

    @property
    def hidden_layers(self) -> int:
        return len(self.layer_sizes) - 2

    def to_dict(self) -> dict:
        return {
            "layer_sizes": list(self.layer_sizes), "p_out": list(self.p_out),
            "learning_rate": self.learning_rate, "epochs": self.epochs,
            "batch_size": self.batch_size, "seed": self.seed,
            "early_stop_patience": self.early_stop_patience, "ic_subsample": self.ic_subsample,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetConfig":
        return cls(**{k: (tuple(v) if isinstance(v, list) else v) for k, v in d.items()})


@dataclass
class Mlp:
    weights: list  # weights[k]: (n_in, n_out)
    biases: list
    p_out: tuple  # keep probability on the inputs of each hidden layer

    @classmethod
    def init(cls, sizes, p_out, rng: np.random.Generator) -> "Mlp":
        ws, bs = [], []
        for a, b in zip(sizes[:-1], sizes[1:]):
            ws.append(rng.normal(0.0, 1.0 / np.sqrt(a), size=(a, b)))
            bs.append(np.zeros(b))
        return cls(ws, bs, tuple(p_out))

    @classmethod
    def zeros(cls, sizes, p_out) -> "Mlp":
        return cls([np.zeros((a, b)) for a, b in zip(sizes[:-1], sizes[1:])],
                   [np.zeros(b) for b in sizes[1:]], tuple(p_out))

    def copy(self) -> "Mlp":
        return Mlp([w.copy() for w in self.weights], [b.copy() for b in self.biases], self.p_out)

    @property
    def hidden_layers(self) -> int:
        return len(self.weights) - 1

    def hidden_inputs(self, x) -> list:
        """Mean-field inputs of every hidden layer: x, then p-scaled activations."""
        a = np.asarray(x, dtype=float)
        out = []
        for k in range(self.hidden_layers):
            out.append(a)
            a = expit((a * self.p_out[k]) @ self.weights[k] + self.biases[k])
        out.append(a)  # input of the softmax layer
        return out

    def log_probs(self, x) -> np.ndarray:
        """Test-time prediction: inputs of hidden layer k scaled by p_out[k]."""
        a = self.hidden_inputs(x)[-1]
        return log_softmax(a @ self.weights[-1] + self.biases[-1], axis=1)


def cross_entropy(logp: np.ndarray, y) -> float:
    return float(-np.mean(logp[np.arange(len(y)), y]))


def misclassification(logp: np.ndarray, y) -> float:
    return float(np.mean(np.argmax(logp, axis=1) != y))


def loss_and_grads(net: Mlp, x, y, masks=None):
    """Cross-entropy of one batch and its gradients; masks[k] multiplies the inputs of hidden layer k."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y)
    inputs, acts = [], []
    a = x
    for k in range(net.hidden_layers):
        inp = a if masks is None else a * masks[k]
        inputs.append(inp)
        a = expit(inp @ net.weights[k] + net.biases[k])
        acts.append(a)
    logp = log_softmax(a @ net.weights[-1] + net.biases[-1], axis=1)
    n = x.shape[0]
    loss = -np.mean(logp[np.arange(n), y])
    d = np.exp(logp)
    d[np.arange(n), y] -= 1.0
    d /= n
    gw = [None] * len(net.weights)
    gb = [None] * len(net.biases)
    gw[-1] = a.T @ d
    gb[-1] = d.sum(axis=0)
    da = d @ net.weights[-1].T
    for k in reversed(range(net.hidden_layers)):
        dz = da * acts[k] * (1.0 - acts[k])
        gw[k] = inputs[k].T @ dz
        gb[k] = dz.sum(axis=0)
        if k > 0:
            da = dz @ net.weights[k].T
            if masks is not None:
                da = da * masks[k]
    return float(loss), gw, gb


def draw_masks(net: Mlp, batch: int, rng: np.random.Generator) -> list:
    return [(rng.random((batch, w.shape[0])) < p).astype(float) for w, p in zip(net.weights, net.p_out)]


def sgd_epoch(net: Mlp, x, y, lr: float, batch_size: int, rng: np.random.Generator) -> float:
    """One pass over a shuffled order; returns the mean training batch loss."""
    order = rng.permutation(len(y))
    total = 0.0
    for start in range(0, len(order), batch_size):
        idx = order[start:start + batch_size]
        masks = draw_masks(net, len(idx), rng)
        loss, gw, gb = loss_and_grads(net, x[idx], y[idx], masks)
        if not np.isfinite(loss):
            return loss
        for k in range(len(net.weights)):
            net.weights[k] -= lr * gw[k]
            net.biases[k] -= lr * gb[k]
        total += loss * len(idx)
    return total / len(order)


def gradient_check(net: Mlp, x, y, step: float = 1e-5) -> float:
    """||analytic - central difference|| / (||analytic|| + ||central difference||), no dropout."""
    _, gw, gb = loss_and_grads(net, x, y)
    ana, num = [], []
    for params, grads in ((net.weights, gw), (net.biases, gb)):
        for p, g in zip(params, grads):
            for i in np.ndindex(p.shape):
                old = p[i]
                p[i] = old + step
                up = loss_and_grads(net, x, y)[0]
                p[i] = old - step
                dn = loss_and_grads(net, x, y)[0]
                p[i] = old
                num.append((up - dn) / (2 * step))
                ana.append(g[i])
    ana, num = np.array(ana), np.array(num)
    denom = np.linalg.norm(ana) + np.linalg.norm(num)
    return float(np.linalg.norm(ana - num) / denom) if denom > 0 else 0.0


def new_network(config: NetConfig) -> Mlp:
    return Mlp.init(config.layer_sizes, config.p_out, derive_rng(config.seed, "init"))
