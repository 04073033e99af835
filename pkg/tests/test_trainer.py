import gzip
import math
import struct
from dataclasses import replace

import numpy as np
import pytest

from infocomplex.encoders import DropoutEncoderSpec, ff_clt_channel, ff_exact_firing, product_channel
from infocomplex.prob import mutual_information
from infocomplex.trainer import (
    DataSplits, IdxFormatError, LabelCorruption, Mlp, NetConfig, SweepBase, SynthConfig, TrainingDiverged,
    gradient_check, layer_ic, load_idx, sweep, synth_dataset, synth_splits, train_mlp,
)
from infocomplex.trainer.network import draw_masks, loss_and_grads
from infocomplex.trainer.tracking import ic_subsample, track_ic_and_gap

SMALL_DATA = SynthConfig(classes=3, dim=8, n_train=150, n_val=40, n_test=150, separation=0.6, seed=1)


def small_net(**kw):
    base = dict(layer_sizes=(8, 6, 5, 3), p_out=0.8, epochs=4, seed=2)
    base.update(kw)
    return NetConfig(**base)


# -- data ------------------------------------------------------------------------

def test_synth_deterministic():
    a = synth_dataset(4, 20, 300, 0.5, seed=9)
    b = synth_dataset(4, 20, 300, 0.5, seed=9)
    assert a.features.tobytes() == b.features.tobytes() and a.labels.tobytes() == b.labels.tobytes()
    c = synth_dataset(4, 20, 300, 0.5, seed=10)
    assert c.features.tobytes() != a.features.tobytes()


def test_synth_separation_zero_is_label_free():
    d = synth_dataset(4, 20, 20000, 0.0, seed=0)
    for k in range(4):
        rows = d.features[d.labels == k]
        assert np.all(np.abs(rows.mean(axis=0) - 0.5) < 0.05)


def test_synth_separation_one_is_noiseless():
    d = synth_dataset(4, 20, 500, 1.0, seed=0)
    for k in range(4):
        rows = d.features[d.labels == k]
        assert np.all(rows == rows[0])


def test_synth_is_a_labeled_dataset():
    d = synth_dataset(3, 5, 50, 0.5, seed=0)
    assert d.n == 50 and d.y_alphabet.size == 3
    assert all(len(s) == 5 for s in d.x_alphabet.symbols)
    for i in range(5):
        assert d.x_alphabet.symbols[d.xs[i]] == "".join(map(str, d.features[i]))


def test_synth_preconditions():
    with pytest.raises(ValueError):
        synth_dataset(1, 5, 10, 0.5, 0)
    with pytest.raises(ValueError):
        synth_dataset(3, 1, 10, 0.5, 0)


def _idx_images(images, magic=0x803):
    n, r, c = images.shape
    return struct.pack(">IIII", magic, n, r, c) + images.astype(np.uint8).tobytes()


def _idx_labels(labels, magic=0x801):
    return struct.pack(">II", magic, len(labels)) + bytes(labels)


def test_idx_fixture(tmp_path):
    imgs = np.array([[[0, 255], [128, 127]], [[200, 10], [0, 255]]])
    (tmp_path / "img").write_bytes(_idx_images(imgs))
    with gzip.open(tmp_path / "lab.gz", "wb") as fh:
        fh.write(_idx_labels([3, 7]))
    d = load_idx(tmp_path / "img", tmp_path / "lab.gz", limit=5)
    assert d.n == 2
    assert d.features.tolist() == [[0, 1, 1, 0], [1, 0, 0, 1]]
    assert d.labels.tolist() == [3, 7]
    assert load_idx(tmp_path / "img", tmp_path / "lab.gz", limit=1).n == 1


def test_idx_errors(tmp_path):
    imgs = np.zeros((2, 2, 2))
    (tmp_path / "img").write_bytes(_idx_images(imgs))
    (tmp_path / "lab").write_bytes(_idx_labels([0, 1]))
    with pytest.raises(ValueError, match="empty"):
        load_idx(tmp_path / "img", tmp_path / "lab", limit=0)
    (tmp_path / "bad").write_bytes(_idx_labels([0, 1], magic=0x803))
    with pytest.raises(IdxFormatError, match="bad magic"):
        load_idx(tmp_path / "img", tmp_path / "bad")
    (tmp_path / "three").write_bytes(_idx_labels([0, 1, 1]))
    with pytest.raises(IdxFormatError, match="count mismatch"):
        load_idx(tmp_path / "img", tmp_path / "three")
    (tmp_path / "short").write_bytes(_idx_images(imgs)[:-3])
    with pytest.raises(IdxFormatError, match="truncated"):
        load_idx(tmp_path / "short", tmp_path / "lab")
    (tmp_path / "stub").write_bytes(b"\x00\x00")
    with pytest.raises(IdxFormatError, match="truncated"):
        load_idx(tmp_path / "stub", tmp_path / "lab")


# -- network -------------------------------------------------------------------------

def test_config_validation():
    with pytest.raises(ValueError):
        NetConfig(layer_sizes=(4, 2))
    with pytest.raises(ValueError):
        NetConfig(layer_sizes=(4, 0, 2))
    with pytest.raises(ValueError):
        NetConfig(layer_sizes=(4, 3, 2), p_out=(0.5, 0.5))
    with pytest.raises(ValueError):
        NetConfig(layer_sizes=(4, 3, 2), p_out=1.2)
    cfg = NetConfig(layer_sizes=(4, 3, 3, 2), p_out=0.6)
    assert cfg.p_out == (0.6, 0.6)
    assert NetConfig.from_dict(cfg.to_dict()) == cfg


def test_gradient_check_2_2_2(rng):
    worst = 0.0
    for _ in range(50):
        net = Mlp([rng.normal(size=(2, 2)), rng.normal(size=(2, 2))], [rng.normal(size=2), rng.normal(size=2)], (1.0,))
        x = rng.integers(0, 2, size=(5, 2)).astype(float)
        y = rng.integers(0, 2, size=5)
        worst = max(worst, gradient_check(net, x, y))
    assert worst < 1e-4


def test_gradients_with_masks_match_finite_differences(rng):
    net = Mlp.init((4, 3, 3, 2), (0.7, 0.5), rng)
    x = rng.integers(0, 2, size=(6, 4)).astype(float)
    y = rng.integers(0, 2, size=6)
    masks = draw_masks(net, 6, rng)
    _, gw, _ = loss_and_grads(net, x, y, masks)
    h = 1e-6
    for k in range(3):
        i = (0, 0)
        old = net.weights[k][i]
        net.weights[k][i] = old + h
        up = loss_and_grads(net, x, y, masks)[0]
        net.weights[k][i] = old - h
        dn = loss_and_grads(net, x, y, masks)[0]
        net.weights[k][i] = old
        assert gw[k][i] == pytest.approx((up - dn) / (2 * h), abs=1e-7)


def test_mask_firing_frequency(rng):
    # a frozen unit driven through the training masks fires at the exact dropout probability
    w = np.array([0.8, -1.1, 0.6])
    net = Mlp([w[:, None], np.zeros((1, 2))], [np.array([0.2]), np.zeros(2)], (0.6,))
    x = np.ones(3)
    masks = draw_masks(net, 100_000, rng)[0]
    freq = np.mean(0.2 + (masks * x) @ w > 0)
    p = ff_exact_firing(DropoutEncoderSpec(w[None, :], [0.2], 0.6), x[None, :])[0, 0]
    assert abs(freq - p) < 3 * math.sqrt(p * (1 - p) / 100_000)


# -- training ------------------------------------------------------------------------

def test_history_invariants():
    h = train_mlp(small_net(), synth_splits(SMALL_DATA))
    assert len(h.records) == 4
    for r in h.records:
        assert r.gap == pytest.approx(abs(r.test_risk - r.train_risk), abs=1e-12)
        assert r.ic_aggregate == min(r.ic_layers)
        assert r.ic_surrogate == pytest.approx(math.sqrt(r.ic_aggregate))
    header = h.to_csv().splitlines()[0].split(",")
    assert header[:6] == ["epoch", "train_risk", "test_risk", "gap", "ic_layer_1", "ic_layer_2"]
    assert header[6] == "ic_aggregate"
    assert h.ic_subsample == 150


def test_training_deterministic():
    a = train_mlp(small_net(), synth_splits(SMALL_DATA))
    b = train_mlp(small_net(), synth_splits(SMALL_DATA))
    assert a.to_csv() == b.to_csv()
    assert all(np.array_equal(u, v) for u, v in zip(a.network.weights, b.network.weights))


def test_separable_data_is_learned():
    data = SynthConfig(classes=4, dim=20, n_train=400, n_val=50, n_test=200, separation=1.0, seed=3)
    h = train_mlp(NetConfig(layer_sizes=(20, 16, 4), p_out=1.0, epochs=60, seed=0), synth_splits(data))
    assert h.final.train_misclass < 0.05


def test_random_labels_leave_chance_accuracy():
    # averaged over corruption seeds: with clustered inputs a single run inherits the
    # per-cluster majority of its random labels, which is a coarse random variable
    data = SynthConfig(classes=4, dim=20, n_train=600, n_val=50, n_test=2000, separation=0.3, seed=5)
    splits = synth_splits(data)
    cfg = NetConfig(layer_sizes=(20, 16, 4), epochs=20, seed=1)
    err = [train_mlp(cfg, splits, LabelCorruption("random", seed=k)).final.test_misclass for k in range(6)]
    assert np.mean(err) == pytest.approx(0.75, abs=0.05)


def test_label_corruption_modes():
    y = np.array([0, 1, 2, 3, 3])
    assert LabelCorruption("roll").apply(y, 4).tolist() == [1, 2, 3, 0, 0]
    assert LabelCorruption("normal").apply(y, 4).tolist() == y.tolist()
    r = LabelCorruption("random", seed=1).apply(np.zeros(4000, dtype=int), 4)
    assert np.allclose(np.bincount(r) / 4000, 0.25, atol=0.03)
    with pytest.raises(ValueError):
        LabelCorruption("shuffle")


def test_divergence_reports_epoch():
    splits = synth_splits(SMALL_DATA)
    net = Mlp.init((8, 6, 3), (0.8,), np.random.default_rng(0))
    net.weights[0][0, 0] = np.nan
    with pytest.raises(TrainingDiverged) as e:
        train_mlp(small_net(layer_sizes=(8, 6, 3)), splits, network=net, epoch_offset=3)
    assert e.value.epoch == 4


def test_early_stopping():
    splits = synth_splits(SMALL_DATA)
    with pytest.raises(ValueError):
        train_mlp(small_net(early_stop_patience=2), DataSplits(splits.train, None, splits.test))
    h = train_mlp(small_net(epochs=200, early_stop_patience=3), splits)
    assert h.stopped_early and len(h.records) < 200
    assert len(h.records) - h.best_epoch == 3
    best = h.best
    assert best.val_misclass == min(r.val_misclass for r in h.records)


def test_mismatched_dimensions():
    with pytest.raises(ValueError):
        train_mlp(small_net(layer_sizes=(5, 4, 3)), synth_splits(SMALL_DATA))


# -- tracking ----------------------------------------------------------------------

def test_zero_p_layer_has_zero_surrogate(rng):
    net = Mlp.init((6, 5, 4, 3), (0.8, 0.0), rng)
    snap = layer_ic(net, rng.integers(0, 2, size=(30, 6)).astype(float))
    assert snap.per_layer[1] == 0.0 and snap.aggregate == 0.0
    assert snap.per_layer[0] > 0


def test_zero_weight_network_has_zero_surrogates(rng):
    net = Mlp.zeros((6, 5, 4, 3), (0.8, 0.5))
    snap = layer_ic(net, rng.integers(0, 2, size=(30, 6)).astype(float))
    assert snap.per_layer == (0.0, 0.0) and snap.surrogate == 0.0


def test_surrogate_dominates_product_channel_information(rng):
    for _ in range(20):
        m = int(rng.integers(1, 11))
        net = Mlp.init((5, m, 2), (float(rng.uniform(0.3, 0.9)),), rng)
        net.weights[0] *= 3
        x = rng.integers(0, 2, size=(12, 5)).astype(float)
        snap = layer_ic(net, x)
        spec = DropoutEncoderSpec(net.weights[0].T, net.biases[0], net.p_out[0])
        table = ff_clt_channel(spec, x)
        exact = mutual_information(np.full(12, 1 / 12), product_channel(table))
        assert exact <= snap.per_layer[0] + 1e-9


def test_ic_subsample_is_capped():
    train = synth_dataset(3, 6, 900, 0.5, seed=0)
    assert ic_subsample(train, 500, seed=1).shape == (500, 6)
    assert ic_subsample(train, 5000, seed=1).shape == (900, 6)


# -- sweep -------------------------------------------------------------------------

def test_sweep_single_cell_matches_direct_run():
    base = SweepBase(net=small_net(layer_sizes=(8, 6, 3)), data=SMALL_DATA)
    tab = sweep("hidden_units", [5], base, repeats=1)
    direct = train_mlp(replace(base.net, layer_sizes=(8, 5, 3)), synth_splits(SMALL_DATA))
    row = tab.rows[0]
    assert row["gap_mean"] == direct.final.gap
    assert row["ic_mean"] == direct.final.ic_surrogate
    assert row["gap_std"] == 0.0


def test_sweep_p_out_holds_width_times_p():
    base = SweepBase(net=small_net(layer_sizes=(8, 8, 8, 8, 3), p_out=0.5, epochs=1), data=SMALL_DATA)
    tab = sweep("p_out", [0.25, 1.0], base, repeats=1)
    assert tab.rows[0]["hidden_sizes"] == "16-16-8"
    assert tab.rows[1]["hidden_sizes"] == "4-4-8"


def test_sweep_validation():
    with pytest.raises(ValueError):
        sweep("depth", [1])
    with pytest.raises(ValueError):
        sweep("hidden_units", [], repeats=1)


def test_corruption_phase_sweep():
    base = SweepBase(net=small_net(layer_sizes=(8, 6, 3)), data=SMALL_DATA, phase_epochs=10)
    tab = sweep("corruption_phase", ["random"], base, repeats=2)
    row = tab.rows[0]
    assert {"pre_mean", "pre_std", "post_mean", "z_mean", "change_points"} <= set(row)
    run = tab.cells[0][2]
    assert run.switch_epoch == 20 and len(run.history) == 30
    assert [r.epoch for r in run.history] == list(range(1, 31))
    trace = tab.trace_csv().splitlines()
    assert len(trace) == 1 + 2 * 30
