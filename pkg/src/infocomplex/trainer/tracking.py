"""Per-layer IC surrogate of a trained dropout network and the per-epoch training loop."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from ..encoders import DropoutEncoderSpec, bernoulli_ic_bound, ff_clt_channel
from ..seeding import derive_rng
from .data import BinaryDataset, DataSplits
from .network import Mlp, NetConfig, cross_entropy, misclassification, new_network, sgd_epoch

CORRUPTION_MODES = ("normal", "roll", "random")


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int):
        super().__init__(f"non-finite training loss at epoch {epoch}")
        self.epoch = epoch


@dataclass(frozen=True)
class LabelCorruption:
    mode: str = "normal"
    seed: int = 0

    def __post_init__(self):
        if self.mode not in CORRUPTION_MODES:
            raise ValueError(f"corruption mode must be one of {CORRUPTION_MODES}")

    def apply(self, labels, classes: int) -> np.ndarray:
        labels = np.asarray(labels, dtype=np.int64)
        if self.mode == "roll":
            return (labels + 1) % classes
        if self.mode == "random":
            return derive_rng(self.seed, "random-labels").integers(0, classes, size=labels.size)
        return labels.copy()


@dataclass(frozen=True)
class IcSnapshot:
    per_layer: tuple
    aggregate: float

    @property
    def surrogate(self) -> float:
        return math.sqrt(max(self.aggregate, 0.0))


def layer_ic(net: Mlp, x) -> IcSnapshot:
    """Bernoulli-KL bound of each hidden layer's normal-approximation channel, on mean-field layer inputs."""
    inputs = net.hidden_inputs(x)
    n = inputs[0].shape[0]
    pmf = np.full(n, 1.0 / n)
    vals = []
    for k in range(net.hidden_layers):
        spec = DropoutEncoderSpec(net.weights[k].T, net.biases[k], net.p_out[k])
        vals.append(bernoulli_ic_bound(ff_clt_channel(spec, inputs[k]), pmf))
    return IcSnapshot(tuple(vals), min(vals))


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_risk: float
    val_risk: float
    test_risk: float
    gap: float
    train_misclass: float
    val_misclass: float
    test_misclass: float
    ic_layers: tuple
    ic_aggregate: float
    ic_surrogate: float


def track_ic_and_gap(net: Mlp, train: BinaryDataset, test: BinaryDataset, ic_x, val=None, epoch: int = 0,
                     train_labels=None) -> EpochRecord:
    ytr = train.labels if train_labels is None else train_labels
    lp_tr = net.log_probs(train.features)
    lp_te = net.log_probs(test.features)
    tr, te = cross_entropy(lp_tr, ytr), cross_entropy(lp_te, test.labels)
    if val is not None:
        lp_va = net.log_probs(val.features)
        va, va_m = cross_entropy(lp_va, val.labels), misclassification(lp_va, val.labels)
    else:
        va = va_m = float("nan")
    ic = layer_ic(net, ic_x)
    return EpochRecord(epoch, tr, va, te, abs(te - tr), misclassification(lp_tr, ytr), va_m,
                       misclassification(lp_te, test.labels), ic.per_layer, ic.aggregate, ic.surrogate)


def _fmt(v) -> str:
    return repr(float(v))


@dataclass
class TrainHistory:
    records: list
    best_epoch: int
    stopped_early: bool
    network: Mlp
    best_network: Mlp
    ic_subsample: int
    config: NetConfig | None = None

    @property
    def final(self) -> EpochRecord:
        return self.records[-1]

    @property
    def best(self) -> EpochRecord:
        return next(r for r in self.records if r.epoch == self.best_epoch)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def to_csv(self) -> str:
        k = len(self.records[0].ic_layers) if self.records else 0
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "train_risk", "test_risk", "gap"] + [f"ic_layer_{i + 1}" for i in range(k)]
                   + ["ic_aggregate", "ic_surrogate", "val_risk", "train_misclass", "val_misclass", "test_misclass"])
        for r in self.records:
            w.writerow([r.epoch, _fmt(r.train_risk), _fmt(r.test_risk), _fmt(r.gap)]
                       + [_fmt(v) for v in r.ic_layers]
                       + [_fmt(r.ic_aggregate), _fmt(r.ic_surrogate), _fmt(r.val_risk),
                          _fmt(r.train_misclass), _fmt(r.val_misclass), _fmt(r.test_misclass)])
        return buf.getvalue()

    def summary(self) -> dict:
        """Final-epoch and best-validation-epoch values side by side."""
        out = {"epochs": len(self.records), "best_epoch": self.best_epoch, "stopped_early": self.stopped_early,
               "ic_subsample": self.ic_subsample}
        for tag, r in (("final", self.final), ("best", self.best)):
            for name in ("train_risk", "test_risk", "gap", "ic_aggregate", "ic_surrogate", "test_misclass"):
                out[f"{tag}_{name}"] = getattr(r, name)
        return out


def ic_subsample(train: BinaryDataset, size: int, seed: int) -> np.ndarray:
    n = train.features.shape[0]
    idx = derive_rng(seed, "ic-subsample").permutation(n)[:min(size, n)]
    return train.features[np.sort(idx)].astype(float)


def train_mlp(config: NetConfig, splits: DataSplits, corruption: LabelCorruption | None = None,
              network: Mlp | None = None, epoch_offset: int = 0, stream: str = "sgd") -> TrainHistory:
    """SGD with fresh dropout masks per batch; every epoch is tracked on the weight-scaled network.

    `network` continues training an existing model; `stream` labels the SGD random stream so
    consecutive phases of one run draw independent masks and orders.
    """
    corruption = corruption or LabelCorruption()
    if config.early_stop_patience > 0 and splits.val is None:
        raise ValueError("early stopping needs a validation split")
    train = splits.train
    if train.features.shape[1] != config.layer_sizes[0] or train.classes > config.layer_sizes[-1]:
        raise ValueError("data dimensions do not match layer_sizes")
    ytr = corruption.apply(train.labels, train.classes)
    x = train.features.astype(float)
    net = network.copy() if network is not None else new_network(config)
    rng = derive_rng(config.seed, stream, epoch_offset)
    ic_x = ic_subsample(train, config.ic_subsample, config.seed)
    records, best, best_net, since = [], None, net.copy(), 0
    stopped = False
    for e in range(config.epochs):
        epoch = epoch_offset + e + 1
        loss = sgd_epoch(net, x, ytr, config.learning_rate, config.batch_size, rng)
        if not np.isfinite(loss) or not all(np.all(np.isfinite(w)) for w in net.weights):
            raise TrainingDiverged(epoch)
        rec = track_ic_and_gap(net, train, splits.test, ic_x, splits.val, epoch, ytr)
        records.append(rec)
        score = rec.val_misclass if splits.val is not None else -epoch
        if best is None or score < best[0]:
            best, best_net, since = (score, epoch), net.copy(), 0
        else:
            since += 1
        if config.early_stop_patience and since >= config.early_stop_patience:
            stopped = True
            break
    return TrainHistory(records, best[1], stopped, net, best_net, ic_x.shape[0], config)
