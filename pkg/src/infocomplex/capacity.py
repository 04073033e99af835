"""Encoder capacity, the Fano-type sandwich around it and two IC upper bounds."""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .prob import Channel, LabeledDataset, Pmf, _kl_rows, _mat, _vec, binary_entropy, mutual_information

GINV_TOL = 1e-10
EXHAUSTIVE_COVER_MAX = 12


@dataclass(frozen=True)
class MlDecoder:
    psi: tuple  # psi[u] = index into the encoder's input alphabet
    success_mass: float
    sample_set: tuple


@dataclass(frozen=True)
class CapacityReport:
    capacity: float
    epsilon: float
    fano_lower: float
    half_upper: float
    ic: float
    # (log|A| - I) / (2 log 2): the upper bound with the entropy/error inequality taken in nats
    upper_nats: float = float("nan")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def _sample_set(sample_set, n_inputs: int) -> np.ndarray:
    if isinstance(sample_set, Pmf):
        a = sample_set.support
    elif isinstance(sample_set, LabeledDataset):
        a = np.unique(sample_set.xs)
    else:
        a = np.unique(np.asarray(sample_set, dtype=np.int64))
    if a.size == 0:
        raise ValueError("sample set is empty")
    if a.max() >= n_inputs or a.min() < 0:
        raise ValueError("sample set is not inside the encoder input alphabet")
    return a


def ml_decoder(encoder, sample_set) -> MlDecoder:
    """Maximum-likelihood map psi(u) = argmax_{x in A} Q(u|x); ties go to the smallest index."""
    w = _mat(encoder)
    a = _sample_set(sample_set, w.shape[0])
    sub = w[a]  # (|A|, |U|)
    best = np.argmax(sub, axis=0)  # first maximum wins
    psi = tuple(int(a[i]) for i in best)
    mass = float(sub[best, np.arange(w.shape[1])].sum())
    return MlDecoder(psi, mass, tuple(int(x) for x in a))


def fano_g(t: float, size: int) -> float:
    """g(t) = t log(size - 1) + h(t)."""
    if size < 2:
        return 0.0
    return t * math.log(size - 1) + binary_entropy(t)


def fano_g_inverse(value: float, size: int, tol: float = GINV_TOL) -> float:
    """Inverse of g on [0, 1 - 1/size]; 0 for non-positive arguments.

    Returns the lower end of the final bracket, so the result never exceeds the true inverse.
    """
    if size < 2 or value <= 0:
        return 0.0
    hi = 1.0 - 1.0 / size
    if value >= fano_g(hi, size):
        return hi
    lo = 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if fano_g(mid, size) < value:
            lo = mid
        else:
            hi = mid
    return lo


def _report(w: np.ndarray, a: np.ndarray, weights: np.ndarray) -> CapacityReport:
    dec = ml_decoder(w, a)
    px = np.zeros(w.shape[0])
    px[a] = weights
    ic = mutual_information(px, w)
    slack = math.log(a.size) - ic
    return CapacityReport(
        capacity=math.log(dec.success_mass),
        epsilon=max(0.0, 1.0 - dec.success_mass / a.size),
        fano_lower=fano_g_inverse(slack, a.size),
        half_upper=0.5 * slack,
        ic=ic,
        upper_nats=0.5 * slack / math.log(2.0),
    )


def encoder_capacity(encoder, sample_set) -> CapacityReport:
    """C_e = log sum_u Q(u|psi(u)) and eps = 1 - success/|A|, with A weighted uniformly."""
    w = _mat(encoder)
    a = _sample_set(sample_set, w.shape[0])
    return _report(w, a, np.full(a.size, 1.0 / a.size))


def fano_sandwich(encoder, px_hat) -> CapacityReport:
    """Capacity, epsilon and g^-1(log|A| - I) <= eps <= (log|A| - I)/2 with A = supp(px_hat).

    I is computed under px_hat itself.
    """
    w = _mat(encoder)
    p = _vec(px_hat)
    a = np.flatnonzero(p > 0)
    return _report(w, a, p[a])


_MAPS_CACHE: dict = {}


def brute_force_epsilon(encoder, sample_set) -> float:
    """min over all maps psi: U -> A of the average misidentification mass."""
    w = _mat(encoder)
    a = _sample_set(sample_set, w.shape[0])
    nu = w.shape[1]
    key = (a.size, nu)
    if key not in _MAPS_CACHE:
        _MAPS_CACHE[key] = np.array(list(itertools.product(range(a.size), repeat=nu)), dtype=np.int64).reshape(-1, nu)
    maps = _MAPS_CACHE[key]
    sub = w[a]
    success = sub[maps, np.arange(nu)].sum(axis=1)
    return float(1.0 - success.max() / a.size)


# -- IC upper bounds ----------------------------------------------------------

def _sample_weights(dataset: LabeledDataset, n_inputs: int):
    counts = np.bincount(dataset.xs, minlength=n_inputs).astype(float)
    support = np.flatnonzero(counts)
    return support, counts[support] / dataset.n


def _pairwise_kl(rows: np.ndarray) -> np.ndarray:
    """K[i, j] = D(rows[i] || rows[j])."""
    return _kl_rows(rows[:, None, :], rows[None, :, :])


def pairwise_kl_bound(encoder, dataset: LabeledDataset) -> float:
    """(1/n^2) sum_i sum_j D(Q(.|x_i) || Q(.|x_j)); +inf when some pair diverges."""
    w = _mat(encoder)
    support, wts = _sample_weights(dataset, w.shape[0])
    kl = _pairwise_kl(w[support])
    if np.any(np.isinf(kl)):
        return float("inf")
    return float(wts @ kl @ wts)


@dataclass(frozen=True)
class CoverResult:
    bound: float
    cover_size: int
    cover: tuple
    exhaustive: bool


def _cover_value(kl, cover):
    return float(np.max(np.min(kl[:, cover], axis=1)))


def covering_bound(encoder, dataset: LabeledDataset, epsilon: float, exhaustive: bool | None = None) -> CoverResult:
    """log|G| + max_i min_{x' in G} D(Q(.|x_i) || Q(.|x')) for an epsilon-cover G of the samples.

    G has minimum size among epsilon-covers (ties resolved by the smaller
    max-min divergence) when searched exhaustively, else it is built greedily.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    w = _mat(encoder)
    support, _ = _sample_weights(dataset, w.shape[0])
    kl = _pairwise_kl(w[support])
    covered = kl <= epsilon + 1e-12  # covered[i, j]: sample i is within epsilon of centre j
    k = support.size
    if exhaustive is None:
        exhaustive = k <= EXHAUSTIVE_COVER_MAX
    if exhaustive:
        best = None
        for size in range(1, k + 1):
            for cover in itertools.combinations(range(k), size):
                c = list(cover)
                if not np.all(covered[:, c].any(axis=1)):
                    continue
                v = _cover_value(kl, c)
                if best is None or v < best[0]:
                    best = (v, c)
            if best is not None:
                break
        value, cover = best
    else:
        cover, todo = [], np.ones(k, dtype=bool)
        while todo.any():
            gain = covered[todo].sum(axis=0)
            j = int(np.argmax(gain))
            cover.append(j)
            todo &= ~covered[:, j]
        value = _cover_value(kl, cover)
    return CoverResult(math.log(len(cover)) + value, len(cover), tuple(int(support[j]) for j in cover), exhaustive)
