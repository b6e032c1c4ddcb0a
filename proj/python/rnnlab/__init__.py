# SPDX-License-Identifier: Apache-2.0
"""Recurrent-network training laboratory.

C++ core exposing recurrent cells (RNN/LSTM/GRU), three recurrent-dropout
schemes, exact BPTT gradients with a finite-difference oracle, and the
hidden-state decay analysis.
"""

from ._core import (  # noqa: F401
    CellState,
    DecayScenario,
    DropoutSpec,
    LstmParams,
    Mask,
    Model,
    ModelConfig,
    Rng,
    SequenceBatch,
    activation,
    affine,
    apply_dropout,
    bpc,
    closed_form,
    gen_temporal_order,
    grad_check_max_err,
    lstm_step,
    mask_plan,
    perplexity,
    sample_mask,
    sequence_loss,
    simulate_forced_gates,
)

__all__ = [
    "CellState",
    "DecayScenario",
    "DropoutSpec",
    "LstmParams",
    "Mask",
    "Model",
    "ModelConfig",
    "Rng",
    "SequenceBatch",
    "activation",
    "affine",
    "apply_dropout",
    "bpc",
    "closed_form",
    "gen_temporal_order",
    "grad_check_max_err",
    "lstm_step",
    "mask_plan",
    "perplexity",
    "sample_mask",
    "sequence_loss",
    "simulate_forced_gates",
]

__version__ = "0.1.0"
