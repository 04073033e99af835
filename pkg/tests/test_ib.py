import itertools
import math

import numpy as np
import pytest

from infocomplex.ib import IbConfig, LayerStack, ib_objective, ib_optimize, multilayer_ic_bound, va_surrogate, weighted_ic_bound
from infocomplex.prob import (
    LabeledDataset, compose, conditional_entropy, empirical_joint, entropy, mutual_information, push_forward,
    random_channel, random_pmf,
)


def _data(rng, nx, ny, n):
    return LabeledDataset.from_arrays(rng.integers(0, nx, n), rng.integers(0, ny, n), nx, ny)


def test_objective_collapse_and_identity(rng):
    data = _data(rng, 3, 2, 30)
    py = empirical_joint(data).marginal_y()
    t = ib_objective(np.tile([0.5, 0.5], (3, 1)), data, 2.0)
    assert t.ic_term == pytest.approx(0.0, abs=1e-15)
    assert t.h_term == pytest.approx(entropy(py), abs=1e-12)
    det = LabeledDataset.from_arrays([0, 1, 2, 2, 1], [0, 1, 1, 1, 1], 3, 2)
    t = ib_objective(np.eye(3), det, 0.7)
    assert t.h_term == pytest.approx(0.0, abs=1e-15)
    assert t.ic_term == pytest.approx(entropy(empirical_joint(det).marginal_x()), abs=1e-12)
    assert t.value == pytest.approx(0.7 * t.ic_term)


def test_objective_push_forward_oracle(rng):
    data = _data(rng, 3, 3, 40)
    w = random_channel(rng, 3, 3)
    joint = empirical_joint(data)
    t = ib_objective(w, data, 0.3)
    # Q_U from pushing P_X through the encoder, Q_{Y|U} from pushing the U-marginal through the inverse then P_{Y|X}
    px = joint.marginal_x()
    pf = push_forward(px, w)
    q_y_u = pf.bayes_inverse.matrix @ joint.conditional().matrix
    assert t.h_term == pytest.approx(conditional_entropy(pf.marginal, q_y_u), abs=1e-12)
    assert t.ic_term == pytest.approx(mutual_information(px, w), abs=1e-14)
    assert t.h_term <= entropy(joint.marginal_y()) + 1e-9


def test_objective_rejects_negative_lambda(rng):
    with pytest.raises(ValueError):
        ib_objective(np.eye(2), _data(rng, 2, 2, 5), -1.0)
    with pytest.raises(ValueError):
        IbConfig(lam=-0.1)
    with pytest.raises(ValueError):
        IbConfig(lam=1.0, restarts=0)


def test_lambda_zero_identity_coupling():
    data = LabeledDataset.from_arrays([0, 1, 0, 1], [0, 1, 0, 1], 2, 2)
    # exhaustive over the four deterministic 2 -> 2 encoders
    best = min(ib_objective(np.eye(2)[list(m)], data, 0.0).value for m in itertools.product(range(2), repeat=2))
    assert best == 0.0
    res = ib_optimize(data, IbConfig(lam=0.0, u_size=2))
    assert res.value <= 1e-6


def test_large_lambda_collapses(rng):
    data = _data(rng, 4, 3, 40)
    lam = 10 * math.log(4) + 1
    res = ib_optimize(data, IbConfig(lam=lam))
    final = res.trace[-1]
    assert final.ic_term < 1e-3
    assert res.value == pytest.approx(entropy(empirical_joint(data).marginal_y()), abs=1e-3)


def test_monotone_traces(rng):
    for _ in range(50):
        nx, ny = rng.integers(2, 5, size=2)
        data = _data(rng, nx, ny, 25)
        res = ib_optimize(data, IbConfig(lam=float(rng.uniform(0, 2)), restarts=2, max_iter=200))
        vals = [t.value for t in res.trace]
        assert np.all(np.diff(vals) <= 1e-9)
        assert res.value == min(res.restart_values)


def test_lambda_zero_lower_bound(rng):
    for _ in range(20):
        data = _data(rng, 3, 3, 30)
        joint = empirical_joint(data)
        bayes = conditional_entropy(joint.marginal_x(), joint.conditional())
        assert ib_objective(random_channel(rng, 3, 4), data, 0.0).value >= bayes - 1e-9


def test_trace_csv(rng):
    res = ib_optimize(_data(rng, 3, 2, 20), IbConfig(lam=0.5, restarts=1))
    lines = res.trace_csv().splitlines()
    assert lines[0] == "iter,value,h_term,ic_term" and len(lines) == len(res.trace) + 1


def test_optimize_deterministic(rng):
    data = _data(rng, 3, 2, 20)
    a = ib_optimize(data, IbConfig(lam=0.5, init_seed=4))
    b = ib_optimize(data, IbConfig(lam=0.5, init_seed=4))
    assert np.array_equal(a.encoder.matrix, b.encoder.matrix)


def test_va_surrogate(rng):
    data = _data(rng, 3, 2, 30)
    w = random_channel(rng, 3, 4)
    px = empirical_joint(data).marginal_x().probs
    qu = px @ w
    h = ib_objective(w, data, 0.0).h_term
    at_marginal = va_surrogate(w, data, qu, 1.5)
    assert at_marginal == pytest.approx(h + 1.5 * math.sqrt(mutual_information(px, w)), abs=1e-12)
    for _ in range(20):
        assert va_surrogate(w, data, random_pmf(rng, 4), 1.5) >= at_marginal - 1e-9
    row = [0.1, 0.2, 0.3, 0.4]
    assert va_surrogate(np.tile(row, (3, 1)), data, row, 2.0) == pytest.approx(
        entropy(empirical_joint(data).marginal_y()), abs=1e-12)
    assert va_surrogate(np.eye(3), data, [1.0, 0.0, 0.0], 1.0) == math.inf


def test_multilayer_examples(rng):
    px = random_pmf(rng, 3)
    a = random_channel(rng, 3, 4)
    per, agg = multilayer_ic_bound(LayerStack([a]), px)
    assert agg == per[0] == pytest.approx(mutual_information(px, a))
    per, agg = multilayer_ic_bound(LayerStack([a, np.tile([0.5, 0.5], (4, 1))]), px)
    assert agg == pytest.approx(0.0, abs=1e-15)
    layers = [random_channel(rng, 3, 3) for _ in range(3)]
    stack = LayerStack(layers)
    _, agg = multilayer_ic_bound(stack, px)
    assert mutual_information(px, stack.end_to_end()) <= agg + 1e-9


def test_multilayer_dominance(rng):
    for _ in range(200):
        k = rng.integers(1, 5)
        sizes = rng.integers(2, 5, size=k + 1)
        layers = [random_channel(rng, sizes[i], sizes[i + 1]) for i in range(k)]
        px = random_pmf(rng, sizes[0])
        stack = LayerStack(layers, tuple(rng.dirichlet(np.ones(k))))
        per, agg = multilayer_ic_bound(stack, px)
        e2e = mutual_information(px, stack.end_to_end())
        assert all(e2e <= v + 1e-9 for v in per)
        assert agg <= weighted_ic_bound(stack, px) + 1e-12


def test_stack_validation(rng):
    with pytest.raises(ValueError):
        LayerStack([random_channel(rng, 2, 3), random_channel(rng, 2, 2)])
    with pytest.raises(ValueError):
        LayerStack([np.eye(2)], (0.5,))
    with pytest.raises(ValueError):
        multilayer_ic_bound(LayerStack([np.eye(2)]), [0.2, 0.3, 0.5])
