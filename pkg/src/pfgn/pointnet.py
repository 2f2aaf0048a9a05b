"""Segmentation-style PointNet built from the autodiff ops.

Layer widths (input -> output)::

    C_in -> 128 -> 128 | -> 128 -> 256 -> 2048 -> max-pool
                       |                              |
                       +---- 128 local features ------+-> concat 2176
    2176 -> 1024 -> 512 -> 256 -> 256 -> n_cfd

Every layer but the last is followed by ReLU and then batch norm. The last
layer is linear for the generative models and sigmoid for the baseline.
"""

import copy
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, DimensionError
from .rng import Stream

KINDS = ("flow_matching", "diffusion", "baseline")
ALIASES = {"fm": "flow_matching", "ddpm": "diffusion", "baseline": "baseline",
           "flow_matching": "flow_matching", "diffusion": "diffusion"}

ENCODER_WIDTHS = (128, 128, 128, 256, 2048)
DECODER_WIDTHS = (1024, 512, 256, 256)
LOCAL_LAYER = 1  # output of the (128, 128) block feeds the concat


def canonical_kind(kind):
    try:
        return ALIASES[kind]
    except KeyError:
        raise ConfigError(f"unknown model kind {kind!r}") from None


@dataclass
class BatchNormParams:
    scale: Tensor
    shift: Tensor
    running_mean: Tensor
    running_var: Tensor


@dataclass
class Block:
    weight: Tensor
    bias: Tensor
    bn: BatchNormParams = None

    def trainable(self):
        out = [self.weight, self.bias]
        if self.bn is not None:
            out += [self.bn.scale, self.bn.shift]
        return out

    def arrays(self):
        """Every stored array, running statistics included, in a fixed order."""
        out = [self.weight, self.bias]
        if self.bn is not None:
            out += [self.bn.scale, self.bn.shift, self.bn.running_mean, self.bn.running_var]
        return out


@dataclass
class ModelParams:
    kind: str
    d: int
    d_emb: int
    n_cfd: int
    blocks: list = field(default_factory=list)
    width_divisor: int = 1

    @property
    def input_channels(self):
        return self.blocks[0].weight.shape[0]

    @property
    def output_channels(self):
        return self.blocks[-1].weight.shape[1]

    @property
    def local_width(self):
        return self.blocks[LOCAL_LAYER].weight.shape[1]

    def trainable(self):
        return [t for b in self.blocks for t in b.trainable()]

    def arrays(self):
        return [t for b in self.blocks for t in b.arrays()]

    def astype(self, dtype):
        out = copy.deepcopy(self)
        for t in out.arrays():
            t.data = t.data.astype(dtype)
        return out

    def copy(self):
        return copy.deepcopy(self)


def layer_widths(kind, d, d_emb, n_cfd, width_divisor=1):
    """List of (c_in, c_out) per layer."""
    kind = canonical_kind(kind)
    if d < 1 or n_cfd < 1:
        raise ConfigError("d and n_cfd must be >= 1")
    if kind != "baseline" and (d_emb < 2 or d_emb % 2):
        raise ConfigError("generative models need an even d_emb >= 2")
    widths = []
    for w in ENCODER_WIDTHS + DECODER_WIDTHS:
        if w % width_divisor:
            raise ConfigError(f"width_divisor {width_divisor} does not divide {w}")
        widths.append(w // width_divisor)
    enc, dec = widths[:5], widths[5:]
    c_in = d if kind == "baseline" else d + d_emb + n_cfd
    dims = []
    for w in enc:
        dims.append((c_in, w))
        c_in = w
    c_in = enc[LOCAL_LAYER] + enc[-1]
    for w in dec:
        dims.append((c_in, w))
        c_in = w
    dims.append((c_in, n_cfd))
    return dims


def build(kind, d=2, d_emb=32, n_cfd=3, seed=0, width_divisor=1, dtype=np.float32):
    """Initialize a network: weights U(-sqrt(1/C_in), sqrt(1/C_in)), zero bias, BN scale 1 shift 0."""
    kind = canonical_kind(kind)
    dims = layer_widths(kind, d, d_emb, n_cfd, width_divisor)
    rng = Stream(seed)
    blocks = []
    for i, (c_in, c_out) in enumerate(dims):
        bound = np.sqrt(1.0 / c_in)
        w = Tensor(rng.uniform((c_in, c_out), -bound, bound), True, dtype)
        b = Tensor(np.zeros(c_out), True, dtype)
        bn = None
        if i < len(dims) - 1:
            bn = BatchNormParams(Tensor(np.ones(c_out), True, dtype), Tensor(np.zeros(c_out), True, dtype),
                                 Tensor(np.zeros(c_out), False, dtype), Tensor(np.ones(c_out), False, dtype))
        blocks.append(Block(w, b, bn))
    return ModelParams(kind, d, d_emb if kind != "baseline" else 0, n_cfd, blocks, width_divisor)


def count_parameters(params):
    """Weights + biases + BN scale/shift. Running statistics are not trainable."""
    return sum(t.size for t in params.trainable())


def _hidden(block, h, mode):
    h = ad.relu(h)
    bn = block.bn
    return ad.batch_norm(h, bn.scale, bn.shift, bn.running_mean, bn.running_var, mode)


def forward(params, x, mode="infer", reference=False):
    """Per-point outputs [B, N, n_cfd] for inputs [B, N, C_in] (or [N, C_in]).

    The concat layer is evaluated as ``local @ W[:128] + pooled @ W[128:]``,
    which equals applying W to the materialized [local | tiled global] tensor
    without building it. ``reference=True`` takes the literal concat route.
    """
    x = ad.as_tensor(x)
    single = x.data.ndim == 2
    if single:
        x = Tensor(x.data[None])
    if x.data.ndim != 3 or x.shape[-1] != params.input_channels:
        raise DimensionError(f"forward: input {x.shape}, model expects {params.input_channels} channels")
    blocks = params.blocks
    h = x
    local = None
    for i in range(len(ENCODER_WIDTHS)):
        h = _hidden(blocks[i], ad.linear_shared(h, blocks[i].weight, blocks[i].bias), mode)
        if i == LOCAL_LAYER:
            local = h
    pooled, _ = ad.max_pool_points(h)

    cat = blocks[len(ENCODER_WIDTHS)]
    c_loc = params.local_width
    if reference:
        z = ad.linear_shared(ad.concat_channels(local, ad.tile_points(pooled, x.shape[1])), cat.weight, cat.bias)
    else:
        z_local = ad.linear_shared(local, ad.slice_rows(cat.weight, 0, c_loc), cat.bias)
        z = ad.add_points(z_local, ad.matmul(pooled, ad.slice_rows(cat.weight, c_loc, cat.weight.shape[0])))
    h = _hidden(cat, z, mode)

    for block in blocks[len(ENCODER_WIDTHS) + 1:-1]:
        h = _hidden(block, ad.linear_shared(h, block.weight, block.bias), mode)
    out = ad.linear_shared(h, blocks[-1].weight, blocks[-1].bias)
    if params.kind == "baseline":
        out = ad.sigmoid(out)
    if single:
        out = Tensor(out.data[0]) if not out.requires_grad else out
    return out


def predict(params, x):
    """Inference-mode forward on a numpy array, no tape."""
    with ad.no_grad():
        return forward(params, x, "infer").data
