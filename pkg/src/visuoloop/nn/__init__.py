from .tensor import (
    ContractViolation,
    NumericFault,
    Tensor,
    absolute,
    add,
    backward,
    clip_passthrough,
    concat,
    default_dtype,
    embedding,
    exp,
    floor_stopgrad,
    gather_last,
    is_grad_enabled,
    layer_norm,
    log,
    matmul,
    mul,
    no_grad,
    pow_const,
    reduce_mean,
    reduce_sum,
    relu,
    reshape,
    set_default_dtype,
    set_nan_checks,
    sigmoid,
    silu,
    softmax,
    softplus,
    sqrt,
    take_slice,
    tanh,
    transpose,
)
from .modules import (
    Params,
    attention,
    causal_mask,
    effective_heads,
    linear,
    mlp2,
    normal_init,
    patchify,
    stack,
    unpatchify,
    xavier_uniform,
)
from .optim import AdamW, EmaState
from .rng import RngStream
from .checkpoint import checkpoint_hash, load_checkpoint, save_checkpoint
