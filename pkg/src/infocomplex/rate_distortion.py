"""Rate-distortion function for the decoder-induced distortion d(y,u) = 1 - Q(y|u).

R(D) is computed by Blahut-Arimoto at fixed Lagrange slope. Curves are
sampled by refining slopes until the requested number of points is reached,
and the distortion-rate inverse is read off a piecewise-linear interpolation.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass

import numpy as np

from .prob import Channel, Pmf, channel_or_array, pmf_or_array

log = logging.getLogger(__name__)

BA_TOL = 1e-10
BA_MAX_ITER = 10_000
INVERSE_TOL = 1e-9
GAP_TOL = 1e-8
_SAME_D = 1e-9


class RdConvergenceError(RuntimeError):
    def __init__(self, msg, last=None):
        super().__init__(msg)
        self.last = last


@dataclass(frozen=True)
class RdProblem:
    py: Pmf
    decoder: Channel  # U -> Y

    def __post_init__(self):
        object.__setattr__(self, "py", pmf_or_array(self.py))
        object.__setattr__(self, "decoder", channel_or_array(self.decoder))
        if self.decoder.shape[1] != self.py.size:
            raise ValueError("decoder output alphabet must match the label alphabet")

    @property
    def distortion(self) -> np.ndarray:
        """d[y, u] = 1 - Q(y|u)."""
        return 1.0 - self.decoder.matrix.T


@dataclass(frozen=True)
class RdPoint:
    distortion: float
    rate: float
    slope: float


@dataclass(frozen=True)
class RdExtremes:
    d_min: float
    d_max: float
    r_max: float
    r_min: float = 0.0


@dataclass(frozen=True)
class RdCurve:
    problem: RdProblem
    points: tuple
    extremes: RdExtremes

    @property
    def distortions(self) -> np.ndarray:
        return np.array([p.distortion for p in self.points])

    @property
    def rates(self) -> np.ndarray:
        return np.array([p.rate for p in self.points])

    @property
    def degenerate(self) -> bool:
        return len(self.points) == 1

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["D", "R", "slope"])
        for p in self.points:
            w.writerow([repr(p.distortion), repr(p.rate), repr(p.slope)])
        return buf.getvalue()


def _live(prob: RdProblem):
    py = prob.py.probs
    keep = py > 0
    return py[keep], prob.distortion[keep]


def _best_constant(py, d):
    avg = py @ d
    u = int(np.argmin(avg))
    return u, float(avg[u])


def rd_extremes(prob: RdProblem) -> RdExtremes:
    py, d = _live(prob)
    d_min = float(py @ d.min(axis=1))
    _, d_max = _best_constant(py, d)
    if d_max - d_min <= 1e-12:
        return RdExtremes(d_min, d_max, 0.0, 0.0)
    return RdExtremes(d_min, d_max, _min_rate_on_argmin(py, d), 0.0)


def _ba_iterate(py, kernel, r, tol, max_iter):
    """Blahut-Arimoto on a fixed kernel K[y,u] >= 0 (exp(slope*d) or a 0/1 mask).

    Returns the output marginal r, the iteration count and a convergence flag.
    Stops once the rate change falls below tol with the Blahut duality gap
    below GAP_TOL. Near slopes where a reproduction symbol enters or leaves the
    support plain iteration is sublinear, so every few iterations an active-set
    Newton solve on the apparent support is tried and kept if KKT-certified.
    """
    prev_rate = None
    next_polish = 16
    for it in range(1, max_iter + 1):
        z = kernel @ r
        c = (py / z) @ kernel
        r_new = r * c
        r_new /= r_new.sum()
        rate = _rate(py, kernel * r_new / (kernel @ r_new)[:, None], r_new)
        r = r_new
        if prev_rate is not None and abs(rate - prev_rate) < tol and _duality_gap(py, kernel, r) < GAP_TOL:
            return r, it, True
        prev_rate = rate
        if it == next_polish:
            next_polish *= 2
            polished = _newton_polish(py, kernel, r, tol)
            if polished is not None:
                return polished, it, True
    polished = _newton_polish(py, kernel, r, tol)
    if polished is not None:
        return polished, max_iter, True
    return r, max_iter, False


def _duality_gap(py, kernel, r):
    c = (py / (kernel @ r)) @ kernel
    with np.errstate(divide="ignore"):
        logc = np.log(c)
    live = r > 0
    return float(np.max(logc[c > 0]) - np.dot(r[live], logc[live]))


def _newton_polish(py, kernel, r, tol):
    """Active-set Newton solve of min_r -sum_y p(y) log (K r)(y) on the simplex.

    Starts from the apparent support of r, drops components that reach zero
    and adds symbols with c(u) > 1 until the KKT conditions hold.
    """
    S = r > 1e-3 * r.max()
    x = np.where(S, r, 0.0)
    x /= x.sum()
    for _ in range(4 * kernel.shape[1] + 4):
        for _ in range(60):
            idx = np.flatnonzero(S)
            K = kernel[:, idx]
            xs = x[idx]
            z = K @ xs
            g = -(py / z) @ K
            H = (K * (py / z**2)[:, None]).T @ K
            k = idx.size
            A = np.zeros((k + 1, k + 1))
            A[:k, :k] = H
            A[:k, k] = A[k, :k] = 1.0
            step = np.linalg.lstsq(A, np.concatenate([-g, [0.0]]), rcond=None)[0][:k]
            neg = step < 0
            t = 1.0
            if np.any(neg):
                ratios = -xs[neg] / step[neg]
                t = min(1.0, float(ratios.min()))
            xs = xs + t * step
            if t < 1.0:
                hit = idx[np.flatnonzero(neg)[np.argmin(ratios)]]
                xs[idx == hit] = 0.0
                S[hit] = False
            x = np.zeros_like(x)
            x[idx] = np.clip(xs, 0.0, None)
            x /= x.sum()
            if t == 1.0 and np.max(np.abs(step)) < 1e-14:
                break
        c = (py / (kernel @ x)) @ kernel
        outside = np.flatnonzero(~S)
        if outside.size and np.max(c[outside]) > 1.0 + 0.1 * tol:
            S[outside[np.argmax(c[outside])]] = True
            continue
        if _duality_gap(py, kernel, x) < tol:
            return x
        return None
    return None


def _test_channel(kernel, r):
    return kernel * r / (kernel @ r)[:, None]


def _rate(py, q, r):
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        t = np.where(q > 0, q * np.log(np.where(q > 0, q, 1.0) / np.where(r > 0, r, 1.0)), 0.0)
    return float(max(0.0, py @ t.sum(axis=1)))


def _min_rate_on_argmin(py, d, tol=BA_TOL, max_iter=BA_MAX_ITER):
    """min I(Y;U) over test channels supported on argmin_u d(y,u), i.e. R(D_min)."""
    mask = (d <= d.min(axis=1, keepdims=True) + 1e-12).astype(float)
    if np.all(mask.sum(axis=1) == 1):
        r = py @ mask
        nz = r[r > 0]
        return float(-np.dot(nz, np.log(nz)))
    r = np.full(d.shape[1], 1.0 / d.shape[1])
    r, _, _ = _ba_iterate(py, mask, r, tol, max_iter)
    return _rate(py, _test_channel(mask, r), r)


def _zero_rate_optimal(py, d, slope) -> bool:
    """KKT check: the best constant reproduction solves the slope problem."""
    u, _ = _best_constant(py, d)
    with np.errstate(over="ignore"):
        c = py @ np.exp(slope * (d - d[:, [u]]))
    return bool(np.all(c <= 1.0 + 1e-12))


def critical_slope(prob: RdProblem) -> float:
    """Steepest slope at which the zero-rate point is still optimal (<= 0)."""
    py, d = _live(prob)
    if _zero_rate_optimal(py, d, -1e-12) is False:
        return 0.0
    lo, hi = -1.0, 0.0
    while _zero_rate_optimal(py, d, lo):
        hi = lo
        lo *= 2.0
        if lo < -1e6:
            return lo
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if _zero_rate_optimal(py, d, mid):
            hi = mid
        else:
            lo = mid
    return hi


def blahut_arimoto_point(prob: RdProblem, slope: float, tol: float = BA_TOL, max_iter: int = BA_MAX_ITER) -> RdPoint:
    if slope > 0:
        raise ValueError("slope must be non-positive")
    if tol <= 0:
        raise ValueError("tol must be positive")
    py, d = _live(prob)
    u0, d_const = _best_constant(py, d)
    if _zero_rate_optimal(py, d, slope):
        return RdPoint(d_const, 0.0, float(slope))
    kernel = np.exp(slope * (d - d.min(axis=1, keepdims=True)))
    r = np.full(d.shape[1], 1.0 / d.shape[1])
    r, it, ok = _ba_iterate(py, kernel, r, tol, max_iter)
    q = _test_channel(kernel, r)
    point = RdPoint(float(py @ (q * d).sum(axis=1)), _rate(py, q, r), float(slope))
    if not ok:
        raise RdConvergenceError(f"Blahut-Arimoto did not converge in {max_iter} iterations at slope {slope}", point)
    return point


def rd_curve(prob: RdProblem, num_points: int = 65, tol: float = BA_TOL, max_iter: int = BA_MAX_ITER) -> RdCurve:
    """Sample num_points points of R(D) including both endpoints."""
    if num_points < 2:
        raise ValueError("num_points must be at least 2")
    ext = rd_extremes(prob)
    if ext.d_max - ext.d_min <= 1e-12:
        return RdCurve(prob, (RdPoint(ext.d_max, 0.0, 0.0),), ext)

    s_c = critical_slope(prob)
    # points carry tau = s_c - slope; tau = inf at D_min and 0 at D_max
    pts = [(math.inf, RdPoint(ext.d_min, ext.r_max, -math.inf)), (0.0, RdPoint(ext.d_max, 0.0, s_c))]
    d_span = ext.d_max - ext.d_min
    r_span = ext.r_max if ext.r_max > 0 else 1.0
    exhausted = set()

    def solve(tau):
        return blahut_arimoto_point(prob, s_c - tau, tol, max_iter)

    def split(a, b):
        """Find a new point strictly between a and b (a has the larger tau)."""
        ta, tb = a[0], b[0]
        for _ in range(60):
            if math.isinf(ta):
                tau = 1.0 if tb == 0 else 4.0 * tb
            elif tb == 0:
                tau = ta / 4.0
            else:
                tau = math.sqrt(ta * tb)
            p = solve(tau)
            if p.distortion <= a[1].distortion + _SAME_D:
                ta = tau
            elif p.distortion >= b[1].distortion - _SAME_D:
                tb = tau
            else:
                return tau, p
            if not math.isinf(ta) and ta > 0 and tb > 0 and ta / tb < 1 + 1e-12:
                break
            if math.isinf(ta) and tb > 1e9:
                break
        return None

    while len(pts) < num_points:
        best, best_gap = None, -1.0
        for i in range(len(pts) - 1):
            if i in exhausted:
                continue
            a, b = pts[i][1], pts[i + 1][1]
            g = math.hypot((b.distortion - a.distortion) / d_span, (a.rate - b.rate) / r_span)
            if g > best_gap:
                best, best_gap = i, g
        if best is None:
            break
        res = split(pts[best], pts[best + 1])
        if res is None:
            # a linear piece of R: points on the chord are achievable by time sharing
            a, b = pts[best][1], pts[best + 1][1]
            chord = (b.rate - a.rate) / (b.distortion - a.distortion)
            mid = RdPoint(0.5 * (a.distortion + b.distortion), 0.5 * (a.rate + b.rate), chord)
            res = (math.sqrt(pts[best][0] * pts[best + 1][0]) if not math.isinf(pts[best][0]) else 2 * pts[best + 1][0] + 1, mid)
            log.debug("rd_curve: inserted chord midpoint at D=%.6g", mid.distortion)
        pts.insert(best + 1, res)
        exhausted = {i if i < best else i + 1 for i in exhausted}

    points = sorted((p for _, p in pts), key=lambda p: p.distortion)
    # BA noise can leave rates a hair out of order
    fixed, run = [], math.inf
    for p in points:
        run = min(run, p.rate)
        fixed.append(RdPoint(p.distortion, run, p.slope))
    curve = RdCurve(prob, tuple(fixed), ext)
    bad = convexity_violation(curve)
    if bad > 1e-6:
        log.warning("rd_curve: convexity violated by %.3g on sampled points", bad)
    return curve


def convexity_violation(curve: RdCurve) -> float:
    """Largest amount by which a sampled point sits above the chord of its neighbours."""
    d, r = curve.distortions, curve.rates
    if len(d) < 3:
        return 0.0
    span = d[2:] - d[:-2]
    ok = span > 0
    t = np.where(ok, (d[1:-1] - d[:-2]) / np.where(ok, span, 1.0), 0.0)
    above = r[1:-1] - ((1 - t) * r[:-2] + t * r[2:])
    return float(max(0.0, np.max(np.where(ok, above, 0.0))))


def _interp_rate(curve: RdCurve, dist):
    return np.interp(dist, curve.distortions, curve.rates)


def distortion_rate_inverse(curve: RdCurve, rate: float) -> float:
    """inf{D : R(D) <= rate} on the interpolated curve."""
    if rate < 0:
        raise ValueError("rate must be non-negative")
    ext = curve.extremes
    if curve.degenerate:
        return curve.points[0].distortion
    if rate >= ext.r_max:
        return ext.d_min
    if rate <= 0:
        return ext.d_max
    lo, hi = ext.d_min, ext.d_max  # R(lo) > rate >= R(hi)
    while hi - lo > INVERSE_TOL:
        mid = 0.5 * (lo + hi)
        if _interp_rate(curve, mid) <= rate:
            hi = mid
        else:
            lo = mid
    return hi


def rd_inverse_derivative(curve: RdCurve, rate: float, step: float = 1e-4) -> float:
    """Central difference of the distortion-rate function at rate."""
    if step <= 0:
        raise ValueError("step must be positive")
    if curve.degenerate:
        raise ValueError("derivative undefined on a degenerate (single point) curve")
    ext = curve.extremes
    if not ext.r_min < rate < ext.r_max:
        raise ValueError(f"rate {rate} outside the open interval ({ext.r_min}, {ext.r_max})")
    up = distortion_rate_inverse(curve, rate + step)
    down = distortion_rate_inverse(curve, max(rate - step, 0.0))
    return (up - down) / (rate + step - max(rate - step, 0.0))


def binary_hamming_problem() -> RdProblem:
    return RdProblem(Pmf([0.5, 0.5]), Channel(np.eye(2)))
