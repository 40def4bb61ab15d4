from .array import (
    DiffArray,
    MissingGradient,
    NonFiniteInput,
    ShapeMismatch,
    adaptive_max_pool1d,
    add,
    batch_norm,
    clamp,
    concat,
    conv1d,
    dense,
    div,
    dropout,
    exp,
    grad_reverse,
    log,
    log_softmax,
    matmul,
    max_pool1d,
    mean,
    mul,
    neg,
    no_grad,
    parameter,
    power,
    relu,
    reshape,
    sigmoid,
    softmax,
    sqrt,
    sub,
    sum_,
    transpose,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .init import xavier_uniform
from .optim import AdamState, adam_step
from .params import ROLES, ParamGroup

__all__ = [
    "DiffArray", "MissingGradient", "NonFiniteInput", "ShapeMismatch",
    "adaptive_max_pool1d", "add", "batch_norm", "clamp", "concat", "conv1d",
    "dense", "div", "dropout", "exp", "grad_reverse", "log", "log_softmax",
    "matmul", "max_pool1d", "mean", "mul", "neg", "no_grad", "parameter",
    "power", "relu", "reshape", "sigmoid", "softmax", "sqrt", "sub", "sum_",
    "transpose", "load_checkpoint", "save_checkpoint", "xavier_uniform",
    "AdamState", "adam_step", "ROLES", "ParamGroup",
]
