"""Hyperparameter sweeps over hidden width, dropout rate and the label-corruption phase protocol."""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .data import DataSplits, SynthConfig, synth_splits
from .network import NetConfig
from .tracking import LabelCorruption, TrainHistory, train_mlp

SWEEP_AXES = ("hidden_units", "p_out", "corruption_phase")
WINDOW = 10  # epochs on either side of the corruption switch


@dataclass(frozen=True)
class SweepBase:
    net: NetConfig = NetConfig(layer_sizes=(20, 64, 4), epochs=600)
    data: SynthConfig = SynthConfig(separation=0.3)
    phase_epochs: int = 30
    workers: int = 1


def net_for(axis: str, value, base: NetConfig) -> NetConfig:
    sizes = list(base.layer_sizes)
    if axis == "hidden_units":
        m = int(value)
        return replace(base, layer_sizes=tuple([sizes[0]] + [m] * base.hidden_layers + [sizes[-1]]))
    if axis == "p_out":
        p = float(value)
        if not 0.0 < p <= 1.0:
            raise ValueError("p_out sweep values must lie in (0,1]")
        # hold width * p_out fixed on the first two hidden layers
        for k in range(1, min(2, base.hidden_layers) + 1):
            sizes[k] = max(1, int(round(sizes[k] * base.p_out[k - 1] / p)))
        ps = list(base.p_out)
        ps = [p] * len(ps)
        return replace(base, layer_sizes=tuple(sizes), p_out=tuple(ps))
    if axis == "corruption_phase":
        if value not in ("normal", "roll", "random"):
            raise ValueError("corruption_phase values must be corruption modes")
        return base
    raise ValueError(f"axis must be one of {SWEEP_AXES}")


@dataclass(frozen=True)
class PhaseRun:
    mode: str
    seed: int
    switch_epoch: int
    history: list  # EpochRecord over all three phases
    pre_mean: float
    pre_std: float
    post_mean: float

    @property
    def z(self) -> float:
        if self.pre_std > 0:
            return (self.post_mean - self.pre_mean) / self.pre_std
        return math.inf if self.post_mean > self.pre_mean else 0.0

    @property
    def change_point(self) -> bool:
        return self.z >= 3.0


def three_phase_run(config: NetConfig, data: SynthConfig, mode: str, phase_epochs: int) -> PhaseRun:
    """normal -> normal -> corrupted training on three disjoint training chunks, one network throughout."""
    if phase_epochs < WINDOW:
        raise ValueError(f"phase_epochs must be at least {WINDOW}")
    trains, val, test = synth_splits(data, train_parts=3)
    cfg = replace(config, epochs=phase_epochs, early_stop_patience=0)
    records, net = [], None
    for phase, train in enumerate(trains):
        corr = LabelCorruption(mode if phase == 2 else "normal", seed=config.seed)
        h = train_mlp(cfg, DataSplits(train, val, test), corr, network=net,
                      epoch_offset=phase * phase_epochs, stream=f"phase-{phase}")
        records.extend(h.records)
        net = h.network
    ic = np.array([r.ic_surrogate for r in records])
    s = 2 * phase_epochs
    pre, post = ic[s - WINDOW:s], ic[s:s + WINDOW]
    return PhaseRun(mode, config.seed, s, records, float(pre.mean()), float(pre.std(ddof=1)), float(post.mean()))


def _cell(args):
    axis, value, net, data, phase_epochs = args
    if axis == "corruption_phase":
        return three_phase_run(net, data, value, phase_epochs)
    return train_mlp(net, synth_splits(data))


@dataclass
class SweepTable:
    axis: str
    rows: list  # dicts, one per value
    cells: list = field(default_factory=list)  # (value, repeat, TrainHistory | PhaseRun)

    def to_csv(self) -> str:
        buf = io.StringIO()
        cols = list(self.rows[0].keys())
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in self.rows:
            w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in cols])
        return buf.getvalue()

    def trace_csv(self) -> str:
        """Per-epoch IC trace of every cell (all axes)."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["value", "repeat", "epoch", "train_risk", "test_risk", "gap", "ic_aggregate", "ic_surrogate"])
        for value, rep, cell in self.cells:
            recs = cell.history if isinstance(cell, PhaseRun) else cell.records
            for r in recs:
                w.writerow([value, rep, r.epoch, repr(r.train_risk), repr(r.test_risk), repr(r.gap),
                            repr(r.ic_aggregate), repr(r.ic_surrogate)])
        return buf.getvalue()


def _mean_std(v):
    v = np.asarray(v, dtype=float)
    return float(v.mean()), float(v.std(ddof=1)) if v.size > 1 else 0.0


def sweep(axis: str, values, base: SweepBase = SweepBase(), repeats: int = 1) -> SweepTable:
    """Repeat r trains with seed base.net.seed + r on the fixed dataset of base.data.

    Rows average final-epoch and best-validation-epoch gap and IC surrogate over repeats.
    """
    if axis not in SWEEP_AXES:
        raise ValueError(f"axis must be one of {SWEEP_AXES}")
    values = list(values)
    if not values or repeats < 1:
        raise ValueError("need at least one value and one repeat")
    jobs, keys = [], []
    for v in values:
        net = net_for(axis, v, base.net)
        for r in range(repeats):
            jobs.append((axis, v, replace(net, seed=base.net.seed + r), base.data, base.phase_epochs))
            keys.append((v, r))
    if base.workers > 1:
        with ProcessPoolExecutor(base.workers) as pool:
            results = list(pool.map(_cell, jobs))
    else:
        results = [_cell(j) for j in jobs]
    cells = [(v, r, res) for (v, r), res in zip(keys, results)]
    rows = []
    for v in values:
        got = [c for vv, _, c in cells if vv == v]
        row = {"value": v, "repeats": repeats}
        if axis == "corruption_phase":
            for name in ("pre_mean", "pre_std", "post_mean"):
                row[name] = float(np.mean([getattr(c, name) for c in got]))
            row["z_mean"] = float(np.mean([c.z for c in got]))
            row["change_points"] = sum(c.change_point for c in got)
            finals = [c.history[-1] for c in got]
            bests = finals
        else:
            finals = [c.final for c in got]
            bests = [c.best for c in got]
            row["hidden_sizes"] = "-".join(str(s) for s in got[0].config.layer_sizes[1:-1])
        row["gap_mean"], row["gap_std"] = _mean_std([r.gap for r in finals])
        row["ic_mean"], row["ic_std"] = _mean_std([r.ic_surrogate for r in finals])
        row["test_misclass_mean"] = float(np.mean([r.test_misclass for r in finals]))
        row["best_gap_mean"] = float(np.mean([r.gap for r in bests]))
        row["best_ic_mean"] = float(np.mean([r.ic_surrogate for r in bests]))
        rows.append(row)
    return SweepTable(axis, rows, cells)
