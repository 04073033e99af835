"""Finite-alphabet pmfs, channels and the basic information measures.

All logarithms are natural, so every quantity is in nats. Functions accept
either the typed objects defined here or plain array-likes; alphabet checks
only happen when both operands carry an alphabet.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, NamedTuple, Sequence

import numpy as np

PROB_TOL = 1e-9


class AlphabetMismatch(ValueError):
    pass


@dataclass(frozen=True)
class Alphabet:
    symbols: tuple

    def __post_init__(self):
        syms = tuple(self.symbols)
        if len(syms) == 0:
            raise ValueError("alphabet must contain at least one symbol")
        if len(set(syms)) != len(syms):
            raise ValueError("alphabet labels must be unique")
        object.__setattr__(self, "symbols", syms)

    @property
    def size(self) -> int:
        return len(self.symbols)

    def __len__(self):
        return len(self.symbols)

    def index(self, symbol) -> int:
        return self.symbols.index(symbol)

    @classmethod
    def of_size(cls, n: int) -> "Alphabet":
        return cls(tuple(range(int(n))))


def _as_alphabet(a, n: int) -> Alphabet:
    if a is None:
        return Alphabet.of_size(n)
    if isinstance(a, Alphabet):
        alph = a
    elif isinstance(a, (int, np.integer)):
        alph = Alphabet.of_size(int(a))
    else:
        alph = Alphabet(tuple(a))
    if alph.size != n:
        raise AlphabetMismatch(f"alphabet has {alph.size} symbols, data has {n}")
    return alph


def _check_stochastic(m: np.ndarray, what: str) -> np.ndarray:
    """Validate that the last axis sums to one; renormalize small drift."""
    m = np.array(m, dtype=float)
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{what} has non-finite entries")
    if np.any(m < -PROB_TOL):
        raise ValueError(f"{what} has negative entries")
    m = np.clip(m, 0.0, None)
    s = m.sum(axis=-1, keepdims=True)
    if np.any(np.abs(s - 1.0) > PROB_TOL):
        raise ValueError(f"{what} does not sum to 1 (max deviation {np.max(np.abs(s - 1.0)):.3g})")
    m = m / s
    m.setflags(write=False)
    return m


class Pmf:
    """Probability vector over a labeled alphabet."""

    def __init__(self, probs, alphabet=None):
        p = np.asarray(probs, dtype=float)
        if p.ndim != 1:
            raise ValueError("pmf must be a vector")
        self.probs = _check_stochastic(p, "pmf")
        self.alphabet = _as_alphabet(alphabet, p.size)

    @classmethod
    def uniform(cls, n: int, alphabet=None) -> "Pmf":
        return cls(np.full(n, 1.0 / n), alphabet)

    @property
    def size(self) -> int:
        return self.probs.size

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.probs > 0)

    def to_dict(self) -> dict:
        return {"alphabet": list(self.alphabet.symbols), "probs": self.probs.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Pmf":
        return cls(d["probs"], d.get("alphabet"))

    def __repr__(self):
        return f"Pmf({np.array2string(self.probs, precision=4)})"


class Channel:
    """Row-stochastic matrix; row x is the conditional pmf of the output given x."""

    def __init__(self, matrix, source=None, target=None):
        m = np.asarray(matrix, dtype=float)
        if m.ndim != 2:
            raise ValueError("channel must be a matrix")
        self.matrix = _check_stochastic(m, "channel row")
        self.source = _as_alphabet(source, m.shape[0])
        self.target = _as_alphabet(target, m.shape[1])

    @classmethod
    def identity(cls, n: int) -> "Channel":
        return cls(np.eye(n))

    @classmethod
    def constant(cls, row, n_in: int) -> "Channel":
        return cls(np.tile(np.asarray(row, dtype=float), (n_in, 1)))

    @property
    def shape(self):
        return self.matrix.shape

    def row(self, i: int) -> Pmf:
        return Pmf(self.matrix[i], self.target)

    def then(self, other: "Channel") -> "Channel":
        """Cascade self followed by other."""
        if self.target.size != other.source.size:
            raise AlphabetMismatch("channels are not composable")
        return Channel(self.matrix @ other.matrix, self.source, other.target)

    def to_dict(self) -> dict:
        return {
            "alphabet": [list(self.source.symbols), list(self.target.symbols)],
            "probs": self.matrix.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Channel":
        alph = d.get("alphabet")
        src, tgt = (alph if alph is not None else (None, None))
        return cls(d["probs"], src, tgt)

    def __repr__(self):
        return f"Channel({self.matrix.shape[0]}x{self.matrix.shape[1]})"


class JointPmf:
    """Joint pmf over a product alphabet, stored as a matrix probs[x, y]."""

    def __init__(self, probs, x_alphabet=None, y_alphabet=None):
        m = np.asarray(probs, dtype=float)
        if m.ndim != 2:
            raise ValueError("joint pmf must be a matrix")
        flat = _check_stochastic(m.ravel(), "joint pmf")
        self.probs = flat.reshape(m.shape)
        self.probs.setflags(write=False)
        self.x_alphabet = _as_alphabet(x_alphabet, m.shape[0])
        self.y_alphabet = _as_alphabet(y_alphabet, m.shape[1])

    @classmethod
    def from_marginal(cls, px, channel) -> "JointPmf":
        p, w = _vec(px), _mat(channel)
        return cls(p[:, None] * w, _alph(px), _alph_target(channel))

    def marginal_x(self) -> Pmf:
        return Pmf(self.probs.sum(axis=1), self.x_alphabet)

    def marginal_y(self) -> Pmf:
        return Pmf(self.probs.sum(axis=0), self.y_alphabet)

    def conditional(self) -> Channel:
        """Channel x -> y; rows with no mass fall back to uniform."""
        return Channel(_normalize_rows(self.probs), self.x_alphabet, self.y_alphabet)

    def transpose(self) -> "JointPmf":
        return JointPmf(self.probs.T, self.y_alphabet, self.x_alphabet)

    def to_dict(self) -> dict:
        return {
            "alphabet": [list(self.x_alphabet.symbols), list(self.y_alphabet.symbols)],
            "probs": self.probs.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "JointPmf":
        alph = d.get("alphabet")
        xa, ya = (alph if alph is not None else (None, None))
        return cls(d["probs"], xa, ya)


class LabeledDataset:
    """Sequence of (x index, y index) pairs over declared alphabets."""

    def __init__(self, pairs, x_alphabet, y_alphabet):
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        if pairs.shape[0] < 1:
            raise ValueError("dataset must contain at least one pair")
        nx = x_alphabet if isinstance(x_alphabet, (int, np.integer)) else len(x_alphabet)
        ny = y_alphabet if isinstance(y_alphabet, (int, np.integer)) else len(y_alphabet)
        self.x_alphabet = _as_alphabet(x_alphabet, int(nx))
        self.y_alphabet = _as_alphabet(y_alphabet, int(ny))
        if pairs.min() < 0 or pairs[:, 0].max() >= self.x_alphabet.size or pairs[:, 1].max() >= self.y_alphabet.size:
            raise ValueError("pair index outside alphabet")
        pairs.setflags(write=False)
        self.pairs = pairs

    @classmethod
    def from_arrays(cls, xs, ys, x_alphabet=None, y_alphabet=None) -> "LabeledDataset":
        xs, ys = np.asarray(xs), np.asarray(ys)
        if x_alphabet is None:
            x_alphabet = int(xs.max()) + 1
        if y_alphabet is None:
            y_alphabet = int(ys.max()) + 1
        return cls(np.stack([xs, ys], axis=1), x_alphabet, y_alphabet)

    @property
    def n(self) -> int:
        return self.pairs.shape[0]

    @property
    def xs(self) -> np.ndarray:
        return self.pairs[:, 0]

    @property
    def ys(self) -> np.ndarray:
        return self.pairs[:, 1]

    def counts(self) -> np.ndarray:
        c = np.zeros((self.x_alphabet.size, self.y_alphabet.size))
        np.add.at(c, (self.xs, self.ys), 1.0)
        return c

    def to_dict(self) -> dict:
        return {
            "x_alphabet": list(self.x_alphabet.symbols),
            "y_alphabet": list(self.y_alphabet.symbols),
            "pairs": self.pairs.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LabeledDataset":
        return cls(d["pairs"], tuple(d["x_alphabet"]), tuple(d["y_alphabet"]))


@dataclass(frozen=True)
class ModelAssumptions:
    eta: float
    enforce: bool = True

    def __post_init__(self):
        if not 0.0 < self.eta < 1.0:
            raise ValueError("eta must lie in (0,1)")


# -- helpers ---------------------------------------------------------------

def _vec(p) -> np.ndarray:
    return p.probs if isinstance(p, Pmf) else np.asarray(p, dtype=float)


def _mat(c) -> np.ndarray:
    if isinstance(c, Channel):
        return c.matrix
    if isinstance(c, JointPmf):
        return c.probs
    return np.asarray(c, dtype=float)


def _alph(p):
    return p.alphabet if isinstance(p, Pmf) else None


def _alph_target(c):
    return c.target if isinstance(c, Channel) else None


def _same_alphabet(a, b):
    if isinstance(a, Alphabet) and isinstance(b, Alphabet) and a != b:
        raise AlphabetMismatch(f"alphabets differ: {a.symbols} vs {b.symbols}")


def _normalize_rows(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    s = m.sum(axis=1, keepdims=True)
    out = np.full_like(m, 1.0 / m.shape[1])
    nz = s[:, 0] > 0
    out[nz] = m[nz] / s[nz]
    return out


def xlogy_safe(x, y):
    """x*log(y) with 0*log(anything) = 0."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    out = np.zeros(np.broadcast(x, y).shape)
    x, y = np.broadcast_arrays(x, y)
    pos = x > 0
    with np.errstate(divide="ignore"):
        out[pos] = x[pos] * np.log(y[pos])
    return out


# -- measures ---------------------------------------------------------------

def entropy(p) -> float:
    q = _vec(p)
    return float(max(0.0, -xlogy_safe(q, q).sum()))


def binary_entropy(t) -> float:
    t = float(t)
    return entropy([t, 1.0 - t])


def _kl_rows(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Row-wise KL of broadcastable arrays along the last axis."""
    p, q = np.broadcast_arrays(np.asarray(p, float), np.asarray(q, float))
    bad = np.any((p > 0) & (q <= 0), axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * (np.log(np.where(p > 0, p, 1.0)) - np.log(np.where(q > 0, q, 1.0))), 0.0)
    out = np.maximum(terms.sum(axis=-1), 0.0)
    return np.where(bad, np.inf, out)


def kl_divergence(p, q) -> float:
    if isinstance(p, Pmf) and isinstance(q, Pmf):
        _same_alphabet(p.alphabet, q.alphabet)
    a, b = _vec(p), _vec(q)
    if a.shape != b.shape:
        raise AlphabetMismatch("pmfs have different lengths")
    return float(_kl_rows(a, b))


def conditional_kl(w, v, px) -> float:
    """D(W || V | P_X) = sum_x P_X(x) D(W(.|x) || V(.|x)); V may be a single row."""
    wm, pv = _mat(w), _vec(px)
    vm = _vec(v) if isinstance(v, Pmf) else _mat(v)
    if wm.shape[0] != pv.size:
        raise AlphabetMismatch("channel rows do not match the input pmf")
    rows = _kl_rows(wm, vm)
    live = pv > 0
    if np.any(np.isinf(rows[live])):
        return float("inf")
    return float(np.dot(pv[live], rows[live]))


def mutual_information(px, channel) -> float:
    """I(P_X; Q_{U|X}) = D(Q_{U|X} || Q_U | P_X)."""
    if isinstance(px, Pmf) and isinstance(channel, Channel):
        _same_alphabet(px.alphabet, channel.source)
    p, w = _vec(px), _mat(channel)
    if w.shape[0] != p.size:
        raise AlphabetMismatch("channel rows do not match the input pmf")
    # sum over the joint: every term with p(x) w(u|x) > 0 has q(u) >= that mass > 0, so an
    # underflowing p(x) w(u|x) cannot leave q(u) = 0 under a live w(u|x)
    j = p[:, None] * w
    q = j.sum(axis=0)
    live = j > 0
    with np.errstate(divide="ignore"):
        terms = j[live] * (np.log(w[live]) - np.log(q[np.nonzero(live)[1]]))
    return float(max(0.0, terms.sum()))


def conditional_entropy(px, channel) -> float:
    """H(U|X) for X ~ px and U|X ~ channel."""
    p, w = _vec(px), _mat(channel)
    return float(max(0.0, -(p[:, None] * xlogy_safe(w, w)).sum()))


class PushForward(NamedTuple):
    marginal: Pmf
    joint: JointPmf
    bayes_inverse: Channel


def push_forward(px, channel) -> PushForward:
    """Output marginal, input-output joint and Bayes inverse of a channel."""
    if isinstance(px, Pmf) and isinstance(channel, Channel):
        _same_alphabet(px.alphabet, channel.source)
    p, w = _vec(px), _mat(channel)
    src = _alph(px)
    tgt = _alph_target(channel)
    joint = p[:, None] * w
    marg = Pmf(joint.sum(axis=0), tgt)
    inv = Channel(_normalize_rows(joint.T), tgt, src)
    return PushForward(marg, JointPmf(joint, src, tgt), inv)


def compose(first, second) -> Channel:
    a = first if isinstance(first, Channel) else Channel(first)
    b = second if isinstance(second, Channel) else Channel(second)
    return a.then(b)


def empirical_joint(data: LabeledDataset) -> JointPmf:
    return JointPmf(data.counts() / data.n, data.x_alphabet, data.y_alphabet)


def representation_joint(encoder, joint_xy) -> JointPmf:
    """Joint of (U, Y) when U is drawn from encoder given X and (X, Y) ~ joint_xy."""
    w, j = _mat(encoder), _mat(joint_xy)
    tgt = _alph_target(encoder)
    ya = joint_xy.y_alphabet if isinstance(joint_xy, JointPmf) else None
    return JointPmf(w.T @ j, tgt, ya)


# -- model class checks -----------------------------------------------------

@dataclass(frozen=True)
class FloorCheck:
    name: str
    passed: bool
    observed: float
    symbol: Any


@dataclass(frozen=True)
class AssumptionReport:
    eta: float
    checks: tuple

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name) -> FloorCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def validate_assumptions(joint: JointPmf, decoder, a: ModelAssumptions) -> AssumptionReport:
    """Check the floor eta on the decoder entries and on both marginals."""
    dec = _mat(decoder)
    if dec.shape[1] != joint.probs.shape[1]:
        raise AlphabetMismatch("decoder output alphabet differs from label alphabet")
    px = joint.probs.sum(axis=1)
    py = joint.probs.sum(axis=0)
    checks = []
    u, y = np.unravel_index(np.argmin(dec), dec.shape)
    checks.append(FloorCheck("decoder", bool(dec[u, y] >= a.eta), float(dec[u, y]), (int(u), int(y))))
    i = int(np.argmin(px))
    checks.append(FloorCheck("px", bool(px[i] >= a.eta), float(px[i]), joint.x_alphabet.symbols[i]))
    j = int(np.argmin(py))
    checks.append(FloorCheck("py", bool(py[j] >= a.eta), float(py[j]), joint.y_alphabet.symbols[j]))
    return AssumptionReport(a.eta, tuple(checks))


# -- json -----------------------------------------------------------------

_KINDS = {"pmf": Pmf, "channel": Channel, "joint": JointPmf, "dataset": LabeledDataset}


def load_object(d: dict, kind: str):
    return _KINDS[kind].from_dict(d)


def dumps(obj) -> str:
    return json.dumps(obj.to_dict())


def pmf_or_array(x, n: int | None = None) -> Pmf:
    if isinstance(x, Pmf):
        return x
    if isinstance(x, dict):
        return Pmf.from_dict(x)
    return Pmf(x)


def channel_or_array(x) -> Channel:
    if isinstance(x, Channel):
        return x
    if isinstance(x, dict):
        return Channel.from_dict(x)
    return Channel(x)


def random_pmf(rng: np.random.Generator, n: int, alpha: float = 1.0) -> np.ndarray:
    return rng.dirichlet(np.full(n, alpha))


def random_channel(rng: np.random.Generator, n_in: int, n_out: int, alpha: float = 1.0) -> np.ndarray:
    return rng.dirichlet(np.full(n_out, alpha), size=n_in)


__all__ = [
    "Alphabet", "AlphabetMismatch", "AssumptionReport", "Channel", "JointPmf",
    "LabeledDataset", "ModelAssumptions", "Pmf", "PushForward", "binary_entropy",
    "compose", "conditional_entropy", "conditional_kl", "empirical_joint", "entropy",
    "kl_divergence", "mutual_information", "push_forward", "representation_joint",
    "validate_assumptions",
]
