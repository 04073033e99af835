import itertools
import json
import math

import numpy as np
import pytest

from conftest import loop_mi
from infocomplex.capacity import (
    brute_force_epsilon, covering_bound, encoder_capacity, fano_g, fano_g_inverse, fano_sandwich, ml_decoder,
    pairwise_kl_bound,
)
from infocomplex.prob import LabeledDataset, Pmf, binary_entropy, kl_divergence, mutual_information, random_channel

FLIP = [[0.8, 0.2], [0.2, 0.8]]


def test_ml_decoder_examples():
    dec = ml_decoder(np.eye(3), [0, 1, 2])
    assert dec.psi == (0, 1, 2) and dec.success_mass == 3.0
    const = np.tile([1.0, 0.0, 0.0], (3, 1))
    assert ml_decoder(const, [0, 1, 2]).success_mass == 1.0
    dec = ml_decoder(FLIP, [0, 1])
    assert dec.psi == (0, 1) and dec.success_mass == pytest.approx(1.6)
    # exhaustive over the four maps psi
    best = max(sum(FLIP[psi[u]][u] for u in range(2)) for psi in itertools.product(range(2), repeat=2))
    assert dec.success_mass == pytest.approx(best)


def test_ml_decoder_ties_go_to_smallest_index():
    w = np.array([[0.5, 0.5], [0.5, 0.5], [0.1, 0.9]])
    assert ml_decoder(w, [0, 1, 2]).psi == (0, 2)
    assert ml_decoder(w[[1, 0, 2]], [0, 1, 2]).success_mass == ml_decoder(w, [0, 1, 2]).success_mass


def test_ml_decoder_empty():
    with pytest.raises(ValueError):
        ml_decoder(np.eye(2), [])


def test_capacity_examples():
    rep = encoder_capacity(np.eye(4), range(4))
    assert rep.capacity == pytest.approx(math.log(4)) and rep.epsilon == 0.0
    rep = encoder_capacity(np.tile([0.0, 1.0], (4, 1)), range(4))
    assert rep.capacity == 0.0 and rep.epsilon == pytest.approx(0.75)
    rep = encoder_capacity(FLIP, [0, 1])
    assert rep.epsilon == pytest.approx(0.2, abs=1e-12)
    assert rep.capacity == pytest.approx(math.log(1.6), abs=1e-12)
    assert rep.capacity == pytest.approx(0.470004, abs=1e-6)


def test_capacity_identity(rng):
    for _ in range(200):
        nx, nu = rng.integers(1, 7, size=2)
        rep = encoder_capacity(random_channel(rng, nx, nu), range(nx))
        assert rep.capacity == pytest.approx(math.log(nx) - math.log(1 / (1 - rep.epsilon)), abs=1e-9)


def test_fano_sandwich_flip():
    rep = fano_sandwich(FLIP, Pmf.uniform(2))
    assert rep.ic == pytest.approx(0.192745, abs=1e-6)
    assert rep.ic == pytest.approx(loop_mi([0.5, 0.5], FLIP), abs=1e-14)
    assert binary_entropy(0.2) == pytest.approx(0.500402, abs=1e-6)
    assert rep.fano_lower == pytest.approx(0.2, abs=1e-9)
    assert rep.half_upper == pytest.approx(0.250201, abs=1e-6)
    assert brute_force_epsilon(FLIP, [0, 1]) == pytest.approx(0.2)


def test_fano_sandwich_identity():
    rep = fano_sandwich(np.eye(3), Pmf.uniform(3))
    assert rep.ic == pytest.approx(math.log(3))
    assert rep.fano_lower == 0.0 and rep.half_upper == pytest.approx(0.0, abs=1e-15) and rep.epsilon == 0.0


def test_fano_sandwich_uses_support_of_pmf():
    w = random_channel(np.random.default_rng(0), 4, 3)
    rep = fano_sandwich(w, [0.5, 0.0, 0.5, 0.0])
    assert rep.capacity == pytest.approx(encoder_capacity(w, [0, 2]).capacity)


def test_g_inverse_negative_is_zero():
    assert fano_g_inverse(-0.3, 5) == 0.0
    assert fano_g_inverse(0.0, 5) == 0.0


def test_g_shape():
    for size in (2, 3, 6):
        top = 1 - 1 / size
        ts = np.linspace(0, top, 200)
        g = [fano_g(t, size) for t in ts]
        assert np.all(np.diff(g) > 0)
        assert fano_g(0.0, size) == 0.0
        assert fano_g(top, size) == pytest.approx(math.log(size), abs=1e-12)
        for t in ts[1:-1:20]:
            assert fano_g_inverse(fano_g(t, size), size) == pytest.approx(t, abs=1e-9)


def test_report_json_has_five_fields():
    d = json.loads(encoder_capacity(FLIP, [0, 1]).to_json())
    assert {"capacity", "epsilon", "fano_lower", "half_upper", "ic"} <= set(d)


def _data(xs, nx=None):
    return LabeledDataset.from_arrays(xs, np.zeros(len(xs), dtype=int), nx, 1)


def test_pairwise_kl_examples(rng):
    w = random_channel(rng, 3, 3)
    assert pairwise_kl_bound(w, _data([1, 1, 1], 3)) == 0.0
    assert pairwise_kl_bound(np.tile([0.2, 0.8], (3, 1)), _data([0, 1, 2])) == pytest.approx(0.0, abs=1e-15)
    xs = [0, 2, 1, 2]
    direct = sum(kl_divergence(w[i], w[j]) for i in xs for j in xs) / 16
    assert pairwise_kl_bound(w, _data(xs, 3)) == pytest.approx(direct, abs=1e-14)
    assert pairwise_kl_bound(np.eye(2), _data([0, 1])) == math.inf


def test_pairwise_kl_dominates_ic(rng):
    for _ in range(200):
        nx = rng.integers(2, 6)
        w = random_channel(rng, nx, rng.integers(2, 5))
        xs = rng.integers(0, nx, size=rng.integers(1, 10))
        data = _data(xs, nx)
        px = np.bincount(xs, minlength=nx) / len(xs)
        assert pairwise_kl_bound(w, data) >= mutual_information(px, w) - 1e-9


def test_covering_examples(rng):
    w = random_channel(rng, 3, 3)
    res = covering_bound(w, _data([2, 2, 2], 3), 0.0)
    assert res.bound == 0.0 and res.cover_size == 1
    res = covering_bound(np.eye(4), _data([0, 1, 3, 3], 4), 0.0)
    assert res.cover_size == 3 and res.bound == pytest.approx(math.log(3))


def test_covering_greedy_vs_exhaustive(rng):
    for _ in range(30):
        w = random_channel(rng, 5, 3, alpha=0.7)
        data = _data([0, 1, 2, 3, 4], 5)
        ic = mutual_information(np.full(5, 0.2), w)
        ex = covering_bound(w, data, 0.1, exhaustive=True)
        gr = covering_bound(w, data, 0.1, exhaustive=False)
        assert ex.cover_size <= gr.cover_size
        assert ex.bound >= ic - 1e-9 and gr.bound >= ic - 1e-9
        # an extra centre costs log((k+1)/k) >= log(6/5) > epsilon here, so greedy can never win
        assert gr.bound >= ex.bound - 1e-12


def test_covering_rejects_negative_epsilon():
    with pytest.raises(ValueError):
        covering_bound(np.eye(2), _data([0, 1]), -0.1)
