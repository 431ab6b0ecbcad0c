"""Calibration-conditioned neural and matching decoders for repetition-code experiments."""

from .calib import (
    CalibrationSnapshot,
    ChainSpec,
    FeatureNorm,
    extract_chain_subgraph,
    fit_norm,
    normalize,
)
from .decoder import ModelParams, fold, init_params, jacobian_svd
from .match import build_detector_graph, decode_majority, decode_mwpm
from .pipeline import EvalReport, TrainConfig, evaluate, train, wilson_interval
from .sim import ExperimentConfig, build_round_noise, drifted_snapshot, simulate_shots

__version__ = "0.1.0"

__all__ = [
    "CalibrationSnapshot",
    "ChainSpec",
    "EvalReport",
    "ExperimentConfig",
    "FeatureNorm",
    "ModelParams",
    "TrainConfig",
    "build_detector_graph",
    "build_round_noise",
    "decode_majority",
    "decode_mwpm",
    "drifted_snapshot",
    "evaluate",
    "extract_chain_subgraph",
    "fit_norm",
    "fold",
    "init_params",
    "jacobian_svd",
    "normalize",
    "simulate_shots",
    "train",
    "wilson_interval",
]
