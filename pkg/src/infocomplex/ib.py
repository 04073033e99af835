"""Information-bottleneck style objective, its minimization and related surrogates."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .prob import (
    Channel, LabeledDataset, _kl_rows, _mat, _vec, compose, conditional_kl,
    empirical_joint, mutual_information,
)


@dataclass(frozen=True)
class IbConfig:
    lam: float
    u_size: int | None = None
    init_seed: int = 0
    max_iter: int = 500
    tol: float = 1e-10
    restarts: int = 8

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.restarts < 1:
            raise ValueError("restarts must be at least 1")
        if self.u_size is not None and self.u_size < 1:
            raise ValueError("u_size must be positive")


@dataclass(frozen=True)
class IbTerms:
    value: float
    h_term: float
    ic_term: float


def _terms(w: np.ndarray, joint: np.ndarray, lam: float) -> IbTerms:
    px = joint.sum(axis=1)
    quy = w.T @ joint  # (U, Y)
    qu = quy.sum(axis=1)
    # H(Y|U) under the representation joint
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = np.where(quy > 0, quy / qu[:, None], 1.0)
        h = float(max(0.0, -np.sum(np.where(quy > 0, quy * np.log(cond), 0.0))))
    ic = mutual_information(px, w)
    return IbTerms(float(h + lam * ic), h, float(ic))


def ib_objective(encoder, data: LabeledDataset, lam: float) -> IbTerms:
    """H(Q_{Y|U} | Q_U) + lam * I(P_X; Q_{U|X}) with all Q's built from the empirical joint."""
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    return _terms(_mat(encoder), empirical_joint(data).probs, lam)


@dataclass
class IbResult:
    encoder: Channel
    trace: list
    converged: bool
    seed: int
    restart_values: list = field(default_factory=list)

    @property
    def value(self) -> float:
        return self.trace[-1].value

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iter", "value", "h_term", "ic_term"])
        for i, t in enumerate(self.trace):
            w.writerow([i, repr(t.value), repr(t.h_term), repr(t.ic_term)])
        return buf.getvalue()


def _encoder_update(w, joint, lam):
    """One self-consistent step: refresh Q_U and Q_{Y|U}, then the encoder rows."""
    px = joint.sum(axis=1)
    live = px > 0
    p_y_x = joint[live] / px[live, None]
    qu = px @ w
    quy = w.T @ joint
    with np.errstate(invalid="ignore", divide="ignore"):
        q_y_u = np.where(qu[:, None] > 0, quy / np.where(qu > 0, qu, 1.0)[:, None], 1.0 / joint.shape[1])
    div = _kl_rows(p_y_x[:, None, :], q_y_u[None, :, :])  # (live x, U)
    new = np.tile(qu, (w.shape[0], 1))
    if lam == 0:
        best = div <= div.min(axis=1, keepdims=True) + 1e-12
        rows = np.where(best, qu, 0.0)
        # every argmin symbol may carry zero marginal mass; fall back to the first argmin
        empty = rows.sum(axis=1) == 0
        rows[empty, np.argmax(best[empty], axis=1)] = 1.0
    else:
        with np.errstate(divide="ignore"):
            logits = np.log(qu)[None, :] - div / lam
        logits -= logits.max(axis=1, keepdims=True)
        rows = np.exp(logits)
    new[live] = rows / rows.sum(axis=1, keepdims=True)
    return new


def _run(joint, nx, nu, lam, seed, max_iter, tol):
    rng = np.random.default_rng(seed)
    w = rng.dirichlet(np.ones(nu), size=nx)
    cur = _terms(w, joint, lam)
    trace = [cur]
    converged = False
    for _ in range(max_iter):
        cand = _encoder_update(w, joint, lam)
        t = _terms(cand, joint, lam)
        if t.value > cur.value + 1e-12:
            converged = True  # numerical floor reached; refuse the uphill step
            break
        w, prev, cur = cand, cur, t
        trace.append(cur)
        if abs(prev.value - cur.value) < tol:
            converged = True
            break
    return w, trace, converged


def ib_optimize(data: LabeledDataset, config: IbConfig) -> IbResult:
    """Alternating minimization with seeded restarts; best restart by (value, seed)."""
    joint = empirical_joint(data).probs
    nx = data.x_alphabet.size
    nu = config.u_size or nx
    best = None
    values = []
    for r in range(config.restarts):
        seed = config.init_seed + r
        w, trace, conv = _run(joint, nx, nu, config.lam, seed, config.max_iter, config.tol)
        values.append(trace[-1].value)
        key = (trace[-1].value, seed)
        if best is None or key < best[0]:
            best = (key, w, trace, conv, seed)
    _, w, trace, conv, seed = best
    return IbResult(Channel(w, data.x_alphabet), trace, conv, seed, values)


def va_surrogate(encoder, data: LabeledDataset, prior, lam: float) -> float:
    """H(Q_{Y|U} | Q_U) + lam * sqrt(D(Q_{U|X} || prior | P_X))."""
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    joint = empirical_joint(data).probs
    w = _mat(encoder)
    h = _terms(w, joint, 0.0).h_term
    div = conditional_kl(w, _vec(prior), joint.sum(axis=1))
    return h + lam * math.sqrt(div) if math.isfinite(div) else math.inf


@dataclass(frozen=True)
class LayerStack:
    layers: tuple
    weights: tuple | None = None

    def __post_init__(self):
        layers = tuple(l if isinstance(l, Channel) else Channel(l) for l in self.layers)
        if not layers:
            raise ValueError("stack needs at least one layer")
        for a, b in zip(layers, layers[1:]):
            if a.shape[1] != b.shape[0]:
                raise ValueError("layers are not composable")
        object.__setattr__(self, "layers", layers)
        wts = self.weights
        if wts is None:
            wts = tuple([1.0 / len(layers)] * len(layers))
        wts = tuple(float(v) for v in wts)
        if len(wts) != len(layers) or min(wts) < 0 or abs(sum(wts) - 1.0) > 1e-9:
            raise ValueError("weights must be a convex combination over layers")
        object.__setattr__(self, "weights", wts)

    def end_to_end(self) -> Channel:
        out = self.layers[0]
        for l in self.layers[1:]:
            out = compose(out, l)
        return out


def multilayer_ic_bound(stack: LayerStack, px):
    """Per-layer I(Q_{U_{k-1}}; Q_{U_k|U_{k-1}}) with the marginal propagated; aggregate = min."""
    p = _vec(px)
    if p.size != stack.layers[0].shape[0]:
        raise ValueError("input pmf does not match the first layer")
    per_layer = []
    for layer in stack.layers:
        per_layer.append(mutual_information(p, layer.matrix))
        p = p @ layer.matrix
    return per_layer, min(per_layer)


def weighted_ic_bound(stack: LayerStack, px) -> float:
    per_layer, _ = multilayer_ic_bound(stack, px)
    return float(np.dot(stack.weights, per_layer))
