"""Minimal double-precision reverse-mode autodiff used by every model component."""
from . import kernels
from .gradcheck import grad_check
from .params import Linear, Module, ParamStore, glorot, rng_stream
from .tensor import (
    NonFiniteValue,
    NotScalar,
    ShapeMismatch,
    Tensor,
    add,
    as_tensor,
    backward,
    concat,
    div,
    dot,
    exp,
    gelu,
    index,
    layer_normalize,
    leaky_relu,
    log,
    log_softmax,
    matmul,
    mean,
    mul,
    no_grad,
    relu,
    reshape,
    scale,
    segment_softmax,
    segment_sum,
    softmax,
    sqrt,
    square,
    stack,
    sub,
    sum,
    take_rows,
    tanh,
    trace_kinks,
    transpose,
)

__all__ = [
    "kernels", "grad_check", "Linear", "Module", "ParamStore", "glorot", "rng_stream",
    "NonFiniteValue", "NotScalar", "ShapeMismatch", "Tensor", "add", "as_tensor", "backward",
    "concat", "div", "dot", "exp", "gelu", "index", "layer_normalize", "leaky_relu", "log",
    "log_softmax", "matmul", "mean", "mul", "no_grad", "relu", "reshape", "scale",
    "segment_softmax", "segment_sum", "softmax", "sqrt", "square", "stack", "sub", "sum",
    "take_rows", "tanh", "trace_kinks", "transpose",
]
