"""Generalization-gap bound evaluation, decoder efficiency and misclassification bounds."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .prob import (
    Channel, JointPmf, LabeledDataset, ModelAssumptions, _mat, _normalize_rows, _vec,
    empirical_joint, mutual_information, push_forward,
)
from .rate_distortion import RdCurve, distortion_rate_inverse, rd_inverse_derivative

DECODER_FLOOR = 1e-12


def _check_delta(delta: float):
    if not (0.0 < delta < 1.0):
        raise ValueError("delta must lie in (0,1)")


def empirical_decoder(encoder, data: LabeledDataset, alpha: float = 0.0) -> Channel:
    """Bayes inverse of the encoder through the empirical joint, with additive smoothing alpha."""
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    w = _mat(encoder)
    if w.shape[0] != data.x_alphabet.size:
        raise ValueError("encoder input alphabet does not match the dataset")
    quy = w.T @ data.counts() + alpha
    return Channel(_normalize_rows(quy), getattr(encoder, "target", None), data.y_alphabet)


def loss_matrix(encoder, decoder) -> np.ndarray:
    """l[x, y] = -sum_u Q(u|x) log Q(y|u); +inf where a used entry of the decoder is zero."""
    w, dec = _mat(encoder), _mat(decoder)
    with np.errstate(divide="ignore"):
        logd = np.log(dec)
    out = np.zeros((w.shape[0], dec.shape[1]))
    for x in range(w.shape[0]):
        used = w[x] > 0
        out[x] = -(w[x, used] @ logd[used])
    return out


def cross_entropy_risk(encoder, decoder, joint) -> float:
    """E_{(X,Y)~joint} sum_u Q(u|X) (-log Q(Y|u))."""
    j = _mat(joint)
    l = loss_matrix(encoder, decoder)
    live = j > 0
    if np.any(np.isinf(l[live])):
        return float("inf")
    return float(np.sum(j[live] * l[live]))


def floor_decoder(decoder, floor: float = DECODER_FLOOR):
    """Floor entries at `floor` and renormalize; returns (channel, fired)."""
    d = _mat(decoder)
    if np.all(d >= floor):
        return (decoder if isinstance(decoder, Channel) else Channel(d)), False
    d = np.maximum(d, floor)
    return Channel(d / d.sum(axis=1, keepdims=True)), True


@dataclass(frozen=True)
class LossTable:
    delta: np.ndarray
    loss_decoder: np.ndarray
    loss_empirical: np.ndarray
    smoothing_fired: bool = False


def loss_table(encoder, emp_decoder, decoder) -> LossTable:
    ed, f1 = floor_decoder(emp_decoder)
    dd, f2 = floor_decoder(decoder)
    ld = loss_matrix(encoder, dd)
    le = loss_matrix(encoder, ed)
    return LossTable(ld - le, ld, le, f1 or f2)


def decoder_efficiency(encoder, emp_decoder, decoder) -> float:
    """Lambda = sqrt( (1/(|X||Y|)) sum_{(x,y)} sum_{(x',y')} [D(x,y) - D(x',y')]^2 )."""
    return _lambda_from_delta(loss_table(encoder, emp_decoder, decoder).delta)


def _lambda_from_delta(delta: np.ndarray) -> float:
    d = delta.ravel()
    # the double sum equals 2 N sum (d - mean)^2 with N = |X||Y|
    return float(math.sqrt(2.0 * np.sum((d - d.mean()) ** 2)))


# -- gap bound ---------------------------------------------------------------

def b_delta(n_labels: int, delta: float) -> float:
    _check_delta(delta)
    return 1.0 + math.sqrt(math.log((n_labels + 4) / delta))


def a_delta(n_labels: int, n_inputs: int, px_min: float, delta: float) -> float:
    return math.sqrt(2.0) * b_delta(n_labels, delta) / px_min * (1.0 + math.sqrt(1.0 / n_inputs))


def c_delta(n_labels: int, n_reps: int, py_min: float, delta: float) -> float:
    return 2.0 * n_reps / math.e + b_delta(n_labels, delta) * math.sqrt(n_labels) * math.log(n_reps / py_min)


def e_delta(n_inputs: int, n_labels: int, py_min: float, delta: float) -> float:
    _check_delta(delta)
    return (1.0 + math.sqrt(math.log(1.0 / delta))) * math.sqrt(n_inputs * n_labels) * (math.log(1.0 / py_min) - 1.0)


@dataclass(frozen=True)
class GapBoundReport:
    n: int
    delta: float
    A_delta: float
    B_delta: float
    C_delta: float
    ic: float
    ic_term: float
    lambda_eff: float
    lambda_term: float
    c_term: float
    total_bound: float
    residual: float
    floors: tuple
    floors_from_eta: bool
    smoothing_fired: bool
    empirical_risk: float
    true_risk: float | None = None
    observed_gap: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(_jsonable(self.to_dict()), indent=2)


def _jsonable(d):
    if isinstance(d, dict):
        return {k: _jsonable(v) for k, v in d.items()}
    if isinstance(d, (list, tuple)):
        return [_jsonable(v) for v in d]
    if isinstance(d, float) and not math.isfinite(d):
        return str(d)
    if isinstance(d, (np.floating, np.integer)):
        return _jsonable(d.item())
    return d


def _floors(data: LabeledDataset, assumptions: ModelAssumptions | None):
    if assumptions is not None and assumptions.enforce:
        return (assumptions.eta, assumptions.eta), True
    joint = empirical_joint(data).probs
    return (float(joint.sum(axis=1).min()), float(joint.sum(axis=0).min())), False


def _ic_term(a: float, ic: float, n: int) -> float:
    return a * math.sqrt(ic) * math.log(n) / math.sqrt(n)


def gap_bound(encoder, decoder, data: LabeledDataset, delta: float,
                   assumptions: ModelAssumptions | None = None,
                   true_joint: JointPmf | None = None) -> GapBoundReport:
    """Evaluate every term of the gap bound; decoder=None uses the empirical decoder."""
    _check_delta(delta)
    n = data.n
    if n < 2:
        raise ValueError("need at least two samples")
    w = _mat(encoder)
    nx, nu = w.shape
    ny = data.y_alphabet.size
    emp = empirical_decoder(encoder, data)
    if decoder is None:
        decoder = emp
    (px_min, py_min), from_eta = _floors(data, assumptions)

    px_hat = empirical_joint(data).marginal_x().probs
    ic = mutual_information(px_hat, w)
    A = a_delta(ny, nx, px_min, delta) if px_min > 0 else math.inf
    B = b_delta(ny, delta)
    C = c_delta(ny, nu, py_min, delta) if py_min > 0 else math.inf

    table = loss_table(encoder, emp, decoder)
    lam = _lambda_from_delta(table.delta)
    ic_term = _ic_term(A, ic, n) if ic > 0 else 0.0
    lambda_term = B * lam / math.sqrt(n)
    c_term = C / math.sqrt(n)
    residual = nx * ny * math.log(n + 1) / n + math.log((ny + 4) / delta) / n

    dec_used, fired = floor_decoder(decoder)
    emp_risk = cross_entropy_risk(w, dec_used, empirical_joint(data))
    true_risk = gap = None
    if true_joint is not None:
        true_risk = cross_entropy_risk(w, dec_used, true_joint)
        gap = abs(emp_risk - true_risk)
    return GapBoundReport(
        n=n, delta=delta, A_delta=A, B_delta=B, C_delta=C, ic=ic,
        ic_term=ic_term, lambda_eff=lam, lambda_term=lambda_term, c_term=c_term,
        total_bound=ic_term + lambda_term + c_term, residual=residual,
        floors=(px_min, py_min), floors_from_eta=from_eta,
        smoothing_fired=table.smoothing_fired or fired,
        empirical_risk=emp_risk, true_risk=true_risk, observed_gap=gap,
    )


SWEEP_COLUMNS = ("n", "delta", "ic", "lambda", "bound", "gap")


def sweep_rows_csv(reports) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(SWEEP_COLUMNS)
    for r in reports:
        gap = "" if r.observed_gap is None else repr(r.observed_gap)
        wr.writerow([r.n, repr(r.delta), repr(r.ic), repr(r.lambda_eff), repr(r.total_bound), gap])
    return buf.getvalue()


# -- misclassification --------------------------------------------------------

@dataclass(frozen=True)
class MisclassSandwich:
    lower: float
    upper: float
    E_delta: float
    risk_empirical: float
    ic: float
    lower_base: float = 0.0
    correction: float = 0.0
    ic_labels: float = 0.0
    derivative_defined: bool = True

    def to_json(self) -> str:
        return json.dumps(_jsonable(asdict(self)), indent=2)


def misclass_sandwich(encoder, decoder, data: LabeledDataset, delta: float, rd: RdCurve,
                      assumptions: ModelAssumptions | None = None) -> MisclassSandwich:
    """Two-sided bound on the misclassification probability.

    lower = R^-1(I(P_X;Q)) + (|E_delta|/sqrt n) dR^-1/dI evaluated at I(P_Y; Q_{U|Y});
    upper = 1 - exp(-L_emp - ic_term).
    """
    _check_delta(delta)
    n = data.n
    w = _mat(encoder)
    nx = w.shape[0]
    ny = data.y_alphabet.size
    joint = empirical_joint(data)
    py_hat = joint.marginal_y().probs
    if rd.problem.py.size != ny or np.max(np.abs(rd.problem.py.probs - py_hat)) > 1e-9:
        raise ValueError("rate-distortion curve must be built from the empirical label marginal")

    px_hat = joint.marginal_x().probs
    ic = mutual_information(px_hat, w)
    (px_min, py_min), _ = _floors(data, assumptions)
    E = e_delta(nx, ny, py_min, delta) if py_min > 0 else math.inf

    # Q_{U|Y}: encoder composed with the empirical inverse of the label channel
    p_x_given_y = push_forward(px_hat, joint.conditional()).bayes_inverse.matrix
    ic_y = mutual_information(py_hat, p_x_given_y @ w)

    base = distortion_rate_inverse(rd, ic)
    try:
        deriv = rd_inverse_derivative(rd, ic_y, step=1e-4)
        defined = True
    except ValueError:
        deriv, defined = 0.0, False
    # the norm bound behind E_delta must be non-negative for the correction to be valid
    correction = abs(E) / math.sqrt(n) * deriv if deriv != 0.0 else 0.0
    lower = min(1.0, max(0.0, base + correction))

    dec_used, _ = floor_decoder(decoder)
    risk = cross_entropy_risk(w, dec_used, joint)
    A = a_delta(ny, nx, px_min, delta) if px_min > 0 else math.inf
    ic_term = _ic_term(A, ic, n) if ic > 0 else 0.0
    upper = min(1.0, max(0.0, 1.0 - math.exp(-risk - ic_term)))
    return MisclassSandwich(lower, upper, E, risk, ic, base, correction, ic_y, defined)


# -- auxiliary inequalities ------------------------------------------------

def dispersion(values) -> float:
    """V(a) = ||a - mean(a)||^2."""
    a = np.asarray(values, dtype=float)
    return float(np.sum((a - a.mean()) ** 2))


def variance_sum_check(encoder, px):
    """(sum_u sqrt V({Q(u|x)}_x), sqrt2/P_X(x_min) (1 + sqrt(1/|X|)) sqrt I)."""
    w, p = _mat(encoder), _vec(px)
    if np.any(p <= 0):
        raise ValueError("px must have full support")
    vsum = float(np.sum(np.sqrt(((w - w.mean(axis=0)) ** 2).sum(axis=0))))
    ic = mutual_information(p, w)
    rhs = math.sqrt(2.0) / p.min() * (1.0 + math.sqrt(1.0 / w.shape[0])) * math.sqrt(ic)
    return vsum, rhs


def phi(x: float) -> float:
    """0 for x <= 0, -x log x on (0, 1/e), 1/e from 1/e on."""
    if x <= 0:
        return 0.0
    if x < math.exp(-1):
        return -x * math.log(x)
    return math.exp(-1)


def phi_bound_holds(a: float, n: int) -> bool | None:
    """phi(a/sqrt n) <= (a/2) log n / sqrt n + 1/(e sqrt n), defined for n >= a^2 e^2."""
    if n < a * a * math.e ** 2:
        return None
    lhs = phi(a / math.sqrt(n))
    rhs = 0.5 * a * math.log(n) / math.sqrt(n) + math.exp(-1) / math.sqrt(n)
    return lhs <= rhs + 1e-15


def pinsker_holds(p, q) -> bool:
    """Standard Pinsker: (sum |p - q|)^2 <= 2 D(p||q)."""
    from .prob import kl_divergence
    l1 = float(np.abs(_vec(p) - _vec(q)).sum())
    return l1 ** 2 <= 2.0 * kl_divergence(p, q) + 1e-12
