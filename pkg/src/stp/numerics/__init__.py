from .tensor import (
    Tensor,
    as_tensor,
    set_default_dtype,
    count_ops,
    add,
    sub,
    mul,
    matmul,
    linear,
    reshape,
    permute,
    swap_last,
    concat,
    narrow,
    tsum,
    tmean,
    relu,
    sigmoid,
    exp,
    log,
    powc,
    clamp,
    smooth_l1,
    softmax_rows,
    masked_softmax,
    log_softmax,
    gather_last,
    layer_norm,
)
from .params import ParamStore
from .gradcheck import grad_check
from . import tensor_io

__all__ = [
    "Tensor",
    "as_tensor",
    "set_default_dtype",
    "count_ops",
    "add",
    "sub",
    "mul",
    "matmul",
    "linear",
    "reshape",
    "permute",
    "swap_last",
    "concat",
    "narrow",
    "tsum",
    "tmean",
    "relu",
    "sigmoid",
    "exp",
    "log",
    "powc",
    "clamp",
    "smooth_l1",
    "softmax_rows",
    "masked_softmax",
    "log_softmax",
    "gather_last",
    "layer_norm",
    "ParamStore",
    "grad_check",
    "tensor_io",
]
