"""Desk-scale dropout network trainer with per-epoch gap and IC tracking."""
from .data import BinaryDataset, DataSplits, IdxFormatError, SynthConfig, load_idx, synth_dataset, synth_splits
from .network import Mlp, NetConfig, gradient_check, loss_and_grads
from .sweep import SWEEP_AXES, PhaseRun, SweepBase, SweepTable, sweep, three_phase_run
from .tracking import (
    EpochRecord, IcSnapshot, LabelCorruption, TrainHistory, TrainingDiverged, layer_ic, track_ic_and_gap,
    train_mlp,
)
