from gridrl.nn.mlp import BatchNormState, Mlp, MlpSpec, batchnorm_apply, init_mlp_params
from gridrl.nn.optim import (
    OptimizerState,
    make_optimizer,
    optimizer_from_document,
    optimizer_step,
    optimizer_to_document,
    soft_update,
)
from gridrl.nn.recurrent import (
    GruCellParams,
    LstmCellParams,
    RecurrentNet,
    RecurrentSpec,
    RnnCellParams,
    gru_cell_backward,
    gru_cell_step,
    init_recurrent_params,
    lstm_cell_backward,
    lstm_cell_step,
    rnn_cell_backward,
    rnn_cell_step,
)
from gridrl.nn.store import GradStore, ParamStore, load_checkpoint, save_checkpoint

__all__ = [
    "BatchNormState", "Mlp", "MlpSpec", "batchnorm_apply", "init_mlp_params",
    "OptimizerState", "make_optimizer", "optimizer_step", "soft_update",
    "optimizer_to_document", "optimizer_from_document",
    "GruCellParams", "LstmCellParams", "RnnCellParams",
    "RecurrentNet", "RecurrentSpec", "init_recurrent_params",
    "lstm_cell_step", "lstm_cell_backward", "gru_cell_step", "gru_cell_backward",
    "rnn_cell_step", "rnn_cell_backward",
    "GradStore", "ParamStore", "load_checkpoint", "save_checkpoint",
]
