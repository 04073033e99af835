"""Finite-alphabet information measures, generalization-gap bounds and dropout information complexity."""
__version__ = "0.1.0"

from .prob import (
    Alphabet, AlphabetMismatch, Channel, JointPmf, LabeledDataset, ModelAssumptions, Pmf, binary_entropy,
    compose, conditional_entropy, conditional_kl, empirical_joint, entropy, kl_divergence, mutual_information,
    push_forward, representation_joint, validate_assumptions,
)
from .rate_distortion import (
    RdConvergenceError, RdCurve, RdProblem, blahut_arimoto_point, distortion_rate_inverse, rd_curve,
    rd_inverse_derivative,
)
from .capacity import CapacityReport, encoder_capacity, fano_sandwich, ml_decoder
from .gap_bounds import GapBoundReport, MisclassSandwich, empirical_decoder, misclass_sandwich, gap_bound
from .ib import IbConfig, LayerStack, ib_objective, ib_optimize, multilayer_ic_bound
from .encoders import (
    DropoutEncoderSpec, GanModel, SoftmaxDecoderSpec, dropout_cost_scan, ff_clt_channel, gan_objective,
    rbm_channel, rbm_ic_bound,
)
