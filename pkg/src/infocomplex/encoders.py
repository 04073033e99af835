"""Randomized encoders with closed-form IC bounds: dropout RBM layers, the CLT
approximation of a dropout feed-forward layer, and the GAN encoder."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import expit, log_softmax, ndtr

from .prob import _kl_rows, _vec

log = logging.getLogger(__name__)

MATERIALIZE_MAX_UNITS = 16
DEFAULT_GRID = tuple(np.round(np.arange(0, 21) * 0.05, 10))


@dataclass(frozen=True)
class DropoutEncoderSpec:
    weights: np.ndarray  # (m, d), row i is w_i
    biases: np.ndarray  # (m,)
    p_out: float = 1.0

    def __post_init__(self):
        w = np.atleast_2d(np.asarray(self.weights, dtype=float))
        b = np.asarray(self.biases, dtype=float).reshape(-1)
        if b.size != w.shape[0]:
            raise ValueError("need one bias per hidden unit")
        if not 0.0 <= self.p_out <= 1.0:
            raise ValueError("p_out must lie in [0,1]")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "biases", b)

    @property
    def hidden_units(self) -> int:
        return self.weights.shape[0]

    @property
    def input_bits(self) -> int:
        return self.weights.shape[1]

    def with_p(self, p: float) -> "DropoutEncoderSpec":
        return DropoutEncoderSpec(self.weights, self.biases, float(p))

    def to_dict(self) -> dict:
        return {"w": self.weights.tolist(), "b": self.biases.tolist(), "p_out": self.p_out}

    @classmethod
    def from_dict(cls, d: dict) -> "DropoutEncoderSpec":
        return cls(np.asarray(d["w"], dtype=float), np.asarray(d["b"], dtype=float), float(d.get("p_out", 1.0)))


def _inputs(spec: DropoutEncoderSpec, inputs) -> np.ndarray:
    x = np.atleast_2d(np.asarray(inputs, dtype=float))
    if x.shape[1] != spec.input_bits:
        raise ValueError(f"inputs must have length {spec.input_bits}")
    return x


def rbm_channel(spec: DropoutEncoderSpec, inputs) -> np.ndarray:
    """table[i, k] = p_out * sigmoid(b_i + <w_i, x_k>)."""
    x = _inputs(spec, inputs)
    return spec.p_out * expit(spec.biases[:, None] + spec.weights @ x.T)


def hidden_configs(m: int) -> np.ndarray:
    """All 2^m binary configurations; row j has unit i equal to bit i of j."""
    j = np.arange(2 ** m)
    return ((j[:, None] >> np.arange(m)) & 1).astype(float)


def product_channel(table: np.ndarray) -> np.ndarray:
    """Materialize Q(u|x) = prod_i Bern(u_i; table[i, x]) as an (N, 2^m) matrix."""
    m = table.shape[0]
    if m > MATERIALIZE_MAX_UNITS:
        raise ValueError(f"refusing to materialize 2^{m} configurations (limit m <= {MATERIALIZE_MAX_UNITS})")
    u = hidden_configs(m) > 0  # (C, m)
    q = np.ones((table.shape[1], u.shape[0]))
    for i in range(m):
        t = table[i][:, None]
        q *= np.where(u[None, :, i], t, 1.0 - t)
    return q


def bernoulli_kl(a, b) -> np.ndarray:
    a, b = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
    return _kl_rows(np.stack([a, 1 - a], axis=-1), np.stack([b, 1 - b], axis=-1))


def bernoulli_ic_bound(table: np.ndarray, input_pmf) -> float:
    """sum_i E_x KL(Bern(table[i,x]) || Bern(E_x table[i,x])): IC bound of a product channel."""
    p = _vec(input_pmf)
    mean = table @ p
    # units that never vary contribute exactly zero, not rounding residue
    flat = np.all(table == table[:, :1], axis=1)
    mean[flat] = table[flat, 0]
    return float(np.sum(bernoulli_kl(table, mean[:, None]) @ p))


def rbm_ic_bound(spec: DropoutEncoderSpec, inputs, input_pmf) -> float:
    return bernoulli_ic_bound(rbm_channel(spec, inputs), input_pmf)


def sample_rbm_units(spec: DropoutEncoderSpec, x, rng: np.random.Generator, draws: int) -> np.ndarray:
    """Draw hidden vectors z * Bern(sigmoid(.)) with dropout masks z ~ Bern(p_out)."""
    prob = expit(spec.biases + spec.weights @ np.asarray(x, float))
    masks = rng.random((draws, spec.hidden_units)) < spec.p_out
    fire = rng.random((draws, spec.hidden_units)) < prob
    return (masks & fire).astype(np.int8)


# -- feed-forward layer, CLT approximation ------------------------------------

def ff_clt_channel(spec: DropoutEncoderSpec, inputs) -> np.ndarray:
    """Normal approximation of P(b_i + <w_i, x*Z> > 0) with Z_j ~ Bern(p_out) i.i.d."""
    x = _inputs(spec, inputs)
    p = spec.p_out
    num = spec.biases[:, None] + p * (spec.weights @ x.T)
    var = p * (1.0 - p) * ((spec.weights ** 2) @ (x ** 2).T)
    out = np.where(num > 0, 1.0, np.where(num < 0, 0.0, 0.5))
    pos = var > 0
    out[pos] = ndtr(num[pos] / np.sqrt(var[pos]))
    return out


def ff_exact_firing(spec: DropoutEncoderSpec, inputs) -> np.ndarray:
    """Exact P(b_i + <w_i, x*Z> > 0) by enumerating the 2^d masks (small d only)."""
    x = _inputs(spec, inputs)
    d = spec.input_bits
    if d > 20:
        raise ValueError("mask enumeration limited to d <= 20")
    z = hidden_configs(d)  # (2^d, d)
    k = z.sum(axis=1)
    pz = spec.p_out ** k * (1 - spec.p_out) ** (d - k)
    pre = spec.biases[:, None, None] + np.einsum("id,kd,md->ikm", spec.weights, x, z)
    return (pre > 0).astype(float) @ pz


# -- p_out scan ------------------------------------------------------------

@dataclass(frozen=True)
class SoftmaxDecoderSpec:
    a: np.ndarray  # (|Y|, m)

    def __post_init__(self):
        object.__setattr__(self, "a", np.atleast_2d(np.asarray(self.a, dtype=float)))

    def log_probs(self, u: np.ndarray) -> np.ndarray:
        """log Q(y|u) for each configuration row of u; shape (C, |Y|)."""
        return log_softmax(u @ self.a.T, axis=1)

    def to_dict(self) -> dict:
        return {"a": self.a.tolist()}


@dataclass(frozen=True)
class ScanResult:
    grid: tuple
    loss: tuple
    ic_bound: tuple
    J: tuple
    p_grid: float
    p_star: float
    J_star: float
    condition_ok: bool

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["p", "loss", "ic_bound", "J"])
        for row in zip(self.grid, self.loss, self.ic_bound, self.J):
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()

    @property
    def interior(self) -> bool:
        return self.J_star < min(self.J[0], self.J[-1]) - 1e-9


def _scan_parts(spec, decoder, inputs, joint):
    x = _inputs(spec, inputs)
    j = np.asarray(joint, dtype=float)  # (N, |Y|)
    px = j.sum(axis=1)
    u = hidden_configs(spec.hidden_units)
    logq = decoder.log_probs(u)  # (C, Y)
    # f[x, u] = E_{Y|x}[-log Q(Y|u)]
    with np.errstate(invalid="ignore"):
        cond = np.where(px[:, None] > 0, j / np.where(px > 0, px, 1.0)[:, None], 0.0)
    f = -cond @ logq.T
    return x, px, f


def _cost(spec, p, x, px, f, lam):
    table = rbm_channel(spec.with_p(p), x)
    q = product_channel(table)  # (N, C)
    loss = float(np.sum(px[:, None] * q * f))
    ic = bernoulli_ic_bound(table, px)
    return loss, ic, loss + lam * math.sqrt(ic)


def dropout_cost_scan(spec: DropoutEncoderSpec, decoder: SoftmaxDecoderSpec, inputs, joint,
                      lam: float, grid=DEFAULT_GRID, refine_tol: float = 1e-4) -> ScanResult:
    """J(p) = L(p) + lam * sqrt(IC bound(p)) over a p_out grid, refined near the grid minimum.

    joint[k, y] is the probability of input vector k with label y.
    """
    if spec.hidden_units > MATERIALIZE_MAX_UNITS:
        raise ValueError("exact scan needs m <= 16")
    x, px, f = _scan_parts(spec, decoder, inputs, joint)
    n_labels = np.asarray(joint).shape[1]
    live = px > 0
    condition_ok = bool(np.all(f[live] <= math.log(n_labels) + 1e-9))
    if not condition_ok:
        log.warning("dropout_cost_scan: decoder loss exceeds log|Y| at some (x, u)")
    grid = tuple(float(g) for g in grid)
    rows = [_cost(spec, p, x, px, f, lam) for p in grid]
    loss, ic, J = (tuple(r[i] for r in rows) for i in range(3))
    k = int(np.argmin(J))
    p_star, j_star = grid[k], J[k]
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    if hi > lo:
        res = minimize_scalar(lambda p: _cost(spec, p, x, px, f, lam)[2], bounds=(lo, hi),
                              method="bounded", options={"xatol": refine_tol})
        if res.fun < j_star:
            p_star, j_star = float(res.x), float(res.fun)
    return ScanResult(grid, loss, ic, J, grid[k], p_star, j_star, condition_ok)


# -- GAN encoder ------------------------------------------------------------

@dataclass(frozen=True)
class GanModel:
    data_pmf: np.ndarray
    generator: np.ndarray
    discriminator: np.ndarray  # probability of label 0 (real) for each u

    def __post_init__(self):
        for name in ("data_pmf", "generator", "discriminator"):
            object.__setattr__(self, name, np.asarray(_vec(getattr(self, name)), dtype=float))
        if not (self.data_pmf.size == self.generator.size == self.discriminator.size):
            raise ValueError("data pmf, generator and discriminator must share one alphabet")
        for name in ("data_pmf", "generator"):
            v = getattr(self, name)
            if np.any(v < 0) or abs(v.sum() - 1.0) > 1e-9:
                raise ValueError(f"{name} must be a pmf")
        if np.any(self.discriminator < 0) or np.any(self.discriminator > 1):
            raise ValueError("discriminator values must lie in [0,1]")

    @classmethod
    def from_dict(cls, d: dict) -> "GanModel":
        return cls(np.asarray(d["data_pmf"]), np.asarray(d["generator"]), np.asarray(d["discriminator"]))


@dataclass(frozen=True)
class GanResult:
    loss: float
    ic_bound: float
    penalized: float

    def to_json(self) -> str:
        return json.dumps({k: (v if math.isfinite(v) else str(v)) for k, v in self.__dict__.items()}, indent=2)


def _expect_neglog(p, v):
    live = p > 0
    if np.any(v[live] <= 0):
        return math.inf
    return float(-np.dot(p[live], np.log(v[live])))


def gan_objective(model: GanModel, lam: float) -> GanResult:
    loss = 0.5 * _expect_neglog(model.data_pmf, model.discriminator) + \
        0.5 * _expect_neglog(model.generator, 1.0 - model.discriminator)
    ic = 0.5 * _expect_neglog(model.data_pmf, model.generator)
    return GanResult(loss, ic, loss + lam * math.sqrt(ic))


def gan_channel(model: GanModel):
    """Input pmf over (x, y) pairs (index 2x + y) and the encoder: u = x if y = 0, u ~ G if y = 1."""
    n = model.data_pmf.size
    pin = np.zeros(2 * n)
    pin[0::2] = 0.5 * model.data_pmf
    pin[1::2] = 0.5 * model.data_pmf
    ch = np.zeros((2 * n, n))
    ch[0::2] = np.eye(n)
    ch[1::2] = model.generator
    return pin, ch
