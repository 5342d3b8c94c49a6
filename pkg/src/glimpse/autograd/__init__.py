from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .functional import (
    LOG_EPS,
    add,
    concat_channels,
    conv2d,
    cross_entropy,
    detach,
    exp,
    global_avg_pool,
    index,
    log,
    mean,
    mul,
    relu,
    reshape,
    scale,
    segment_sum,
    softmax,
    softmax2d,
    sub,
    sum,
)
from .gradcheck import GradCheckResult, check_gradients
from .tensor import ConfigurationError, Graph, Tensor, UsageError, backward, is_grad_enabled, no_grad

__all__ = [
    "LOG_EPS", "CheckpointError", "ConfigurationError", "Graph", "GradCheckResult", "Tensor", "UsageError",
    "add", "backward", "check_gradients", "concat_channels", "conv2d", "cross_entropy", "detach", "exp",
    "global_avg_pool", "index", "is_grad_enabled", "load_checkpoint", "log", "mean", "mul", "no_grad",
    "relu", "reshape", "save_checkpoint", "scale", "segment_sum", "softmax", "softmax2d", "sub", "sum",
]
