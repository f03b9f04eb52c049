"""Two-stage image classifiers: config, presets, builder, and accounting.

Pipeline (channels-last throughout):

  image (S, S, 3)
    → stem: conv7×7/2, two conv3×3 (each LN+GELU), 4×4 patch projection → (S/8, S/8, C1)
    → stage 1: outlook-attention blocks (or local-attention / conv swaps)
    → 2×2 patch downsample → (S/16, S/16, C2) → +learnable position table
    → stage 2: transformer blocks over the flat token list
    → class token updated by class-attention blocks → LayerNorm → linear head.

``count_params_config`` and ``analytic_madds`` account for the architecture
symbolically (no allocation); ``count_params`` counts an instantiated model
and matches the symbolic number exactly.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from . import ops
from .attention import Conv2d, _param, _zeros
from .blocks import (
    ClassAttentionBlock,
    ConvBlock,
    LayerNorm,
    LocalAttentionBlock,
    Mlp,
    OutlookerBlock,
    TransformerBlock,
    drop_path_schedule,
    mlp_hidden,
)
from .errors import ContractError, ShapeError
from .tensor import Tensor

STAGE1_KINDS = ("outlook", "lsa", "conv")
STEM_HIDDEN = 64


@dataclass
class ModelConfig:
    """One architecture: stage widths/depths/heads plus training knobs."""

    image_size: int = 224
    num_classes: int = 1000
    stage1_dim: int = 192
    stage2_dim: int = 384
    num_outlookers: int = 4
    num_transformers: int = 14
    outlooker_heads: int = 6
    transformer_heads: int = 12
    kernel: int = 3
    stride: int = 2
    outlooker_mlp_ratio: float = 3.0
    transformer_mlp_ratio: float = 3.0
    num_class_blocks: int = 2
    drop_path_rate: float = 0.0
    stage1_kind: str = "outlook"
    patch_size: int = 8
    downsample: int = 2

    def __post_init__(self):
        if self.stage1_kind not in STAGE1_KINDS:
            raise ContractError(
                f"stage1_kind {self.stage1_kind!r} not one of {STAGE1_KINDS}"
            )
        if self.image_size % 16 != 0:
            raise ShapeError(
                f"image_size must be divisible by 16 (8× patching then 2× downsample), "
                f"got {self.image_size}"
            )
        if self.stage1_dim * 2 != self.stage2_dim:
            warnings.warn(
                f"stage2_dim {self.stage2_dim} is not twice stage1_dim {self.stage1_dim}",
                stacklevel=2,
            )

    @property
    def stage1_grid(self) -> int:
        return self.image_size // self.patch_size

    @property
    def stage2_grid(self) -> int:
        return self.stage1_grid // self.downsample

    @property
    def total_layers(self) -> int:
        return self.num_outlookers + self.num_transformers

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ModelConfig":
        raw = json.loads(text)
        if not isinstance(raw, dict):
            raise ContractError("config JSON must be an object")
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ContractError(f"unknown config fields: {sorted(unknown)}")
        return cls(**raw)


def _preset(**kw) -> ModelConfig:
    return ModelConfig(**kw)


PRESETS: dict[str, ModelConfig] = {
    "d1": _preset(stage1_dim=192, stage2_dim=384, num_outlookers=4, num_transformers=14,
                  outlooker_heads=6, transformer_heads=12, outlooker_mlp_ratio=3.0,
                  transformer_mlp_ratio=3.0, drop_path_rate=0.1),
    "d2": _preset(stage1_dim=256, stage2_dim=512, num_outlookers=6, num_transformers=18,
                  outlooker_heads=8, transformer_heads=16, outlooker_mlp_ratio=3.0,
                  transformer_mlp_ratio=3.0, drop_path_rate=0.2),
    "d3": _preset(stage1_dim=256, stage2_dim=512, num_outlookers=8, num_transformers=28,
                  outlooker_heads=8, transformer_heads=16, outlooker_mlp_ratio=3.0,
                  transformer_mlp_ratio=3.0, drop_path_rate=0.5),
    "d4": _preset(stage1_dim=384, stage2_dim=768, num_outlookers=8, num_transformers=28,
                  outlooker_heads=12, transformer_heads=16, outlooker_mlp_ratio=3.0,
                  transformer_mlp_ratio=3.0, drop_path_rate=0.5),
    "d5": _preset(stage1_dim=384, stage2_dim=768, num_outlookers=12, num_transformers=36,
                  outlooker_heads=12, transformer_heads=16, outlooker_mlp_ratio=4.0,
                  transformer_mlp_ratio=4.0, drop_path_rate=0.75),
    "tiny": _preset(image_size=32, num_classes=10, stage1_dim=16, stage2_dim=32,
                    num_outlookers=2, num_transformers=2, outlooker_heads=2,
                    transformer_heads=4, outlooker_mlp_ratio=3.0, transformer_mlp_ratio=3.0,
                    drop_path_rate=0.1),
}

# Reference layout and budget targets for the d-presets.  Structure cells are
# asserted exactly; parameter counts within ±2%; multiply-adds at 224² within
# ±10% (d1, d2) and ±15% (d3-d5).
REFERENCE_LAYOUTS: dict[str, dict] = {
    "d1": dict(num_outlookers=4, num_transformers=14, total_layers=18,
               stage1_dim=192, stage2_dim=384, outlooker_heads=6, transformer_heads=12,
               kernel=3, stride=2, outlooker_mlp_ratio=3.0, transformer_mlp_ratio=3.0,
               drop_path_rate=0.1),
    "d2": dict(num_outlookers=6, num_transformers=18, total_layers=24,
               stage1_dim=256, stage2_dim=512, outlooker_heads=8, transformer_heads=16,
               kernel=3, stride=2, outlooker_mlp_ratio=3.0, transformer_mlp_ratio=3.0,
               drop_path_rate=0.2),
    "d3": dict(num_outlookers=8, num_transformers=28, total_layers=36,
               stage1_dim=256, stage2_dim=512, outlooker_heads=8, transformer_heads=16,
               kernel=3, stride=2, outlooker_mlp_ratio=3.0, transformer_mlp_ratio=3.0,
               drop_path_rate=0.5),
    "d4": dict(num_outlookers=8, num_transformers=28, total_layers=36,
               stage1_dim=384, stage2_dim=768, outlooker_heads=12, transformer_heads=16,
               kernel=3, stride=2, outlooker_mlp_ratio=3.0, transformer_mlp_ratio=3.0,
               drop_path_rate=0.5),
    "d5": dict(num_outlookers=12, num_transformers=36, total_layers=48,
               stage1_dim=384, stage2_dim=768, outlooker_heads=12, transformer_heads=16,
               kernel=3, stride=2, outlooker_mlp_ratio=4.0, transformer_mlp_ratio=4.0,
               drop_path_rate=0.75),
}
REFERENCE_PARAMS = {"d1": 26.6e6, "d2": 58.7e6, "d3": 86.3e6, "d4": 193e6, "d5": 296e6}
REFERENCE_MADDS = {"d1": 6.8e9, "d2": 14.1e9, "d3": 20.6e9, "d4": 43.8e9, "d5": 69.0e9}


class Stem:
    """conv7×7/2 → two conv3×3 (LN+GELU after each conv) → 4×4 patch projection."""

    def __init__(self, rng, out_dim: int, hidden: int = STEM_HIDDEN, dtype=np.float32, std=0.02):
        self.hidden = hidden
        self.conv1 = Conv2d(rng, 7, 3, hidden, stride=2, dtype=dtype, std=std)
        self.norm1 = LayerNorm(hidden, dtype=dtype)
        self.conv2 = Conv2d(rng, 3, hidden, hidden, dtype=dtype, std=std)
        self.norm2 = LayerNorm(hidden, dtype=dtype)
        self.conv3 = Conv2d(rng, 3, hidden, hidden, dtype=dtype, std=std)
        self.norm3 = LayerNorm(hidden, dtype=dtype)
        self.proj_w = _param(rng, (16 * hidden, out_dim), std, dtype)
        self.proj_b = _zeros(out_dim, dtype)

    def named_params(self):
        out = []
        for name in ("conv1", "norm1", "conv2", "norm2", "conv3", "norm3"):
            out += [(f"{name}.{k}", p) for k, p in getattr(self, name).named_params()]
        return out + [("proj_w", self.proj_w), ("proj_b", self.proj_b)]

    def forward(self, x: Tensor) -> Tensor:
        t = ops.gelu(self.norm1(self.conv1(x)))
        t = ops.gelu(self.norm2(self.conv2(t)))
        t = ops.gelu(self.norm3(self.conv3(t)))
        t = patchify(t, 4)
        return ops.linear(t, self.proj_w, self.proj_b)

    __call__ = forward


def patchify(t: Tensor, patch: int) -> Tensor:
    """(H, W, C) → (H/p, W/p, p²·C) by non-overlapping row-major tiling."""
    height, width, channels = t.shape
    if height % patch or width % patch:
        raise ShapeError(f"map {height}x{width} not divisible by patch {patch}")
    t = ops.reshape(t, (height // patch, patch, width // patch, patch, channels))
    t = ops.permute(t, (0, 2, 1, 3, 4))
    return ops.reshape(t, (height // patch, width // patch, patch * patch * channels))


def _stage1_block(kind: str, rng, config: ModelConfig, rate: float, dtype):
    if kind == "outlook":
        return OutlookerBlock(rng, config.stage1_dim, config.outlooker_heads,
                              config.kernel, config.stride, config.outlooker_mlp_ratio,
                              rate, dtype=dtype)
    if kind == "lsa":
        return LocalAttentionBlock(rng, config.stage1_dim, config.outlooker_heads,
                                   config.kernel, config.outlooker_mlp_ratio, rate, dtype=dtype)
    return ConvBlock(rng, config.stage1_dim, config.kernel,
                     config.outlooker_mlp_ratio, rate, dtype=dtype)


class TwoStageModel:
    """Image classifier built from a ModelConfig (see module docstring)."""

    def __init__(self, config: ModelConfig, rng: np.random.Generator, dtype=np.float32):
        self.config = config
        self.dtype = dtype
        c1, c2 = config.stage1_dim, config.stage2_dim
        rates = drop_path_schedule(config.drop_path_rate, config.total_layers)

        self.stem = Stem(rng, c1, dtype=dtype)
        self.stage1 = [
            _stage1_block(config.stage1_kind, rng, config, rates[i], dtype)
            for i in range(config.num_outlookers)
        ]
        self.down_w = _param(rng, (config.downsample ** 2 * c1, c2), 0.02, dtype)
        self.down_b = _zeros(c2, dtype)
        grid2 = config.stage2_grid
        self.pos_embed = _param(rng, (grid2 * grid2, c2), 0.02, dtype)
        self.stage2 = [
            TransformerBlock(rng, c2, config.transformer_heads, config.transformer_mlp_ratio,
                             rates[config.num_outlookers + i], dtype=dtype)
            for i in range(config.num_transformers)
        ]
        self.cls_token = _param(rng, (1, c2), 0.02, dtype)
        self.class_blocks = [
            ClassAttentionBlock(rng, c2, config.transformer_heads,
                                config.transformer_mlp_ratio, dtype=dtype)
            for _ in range(config.num_class_blocks)
        ]
        self.final_norm = LayerNorm(c2, dtype=dtype)
        self.head_w = _param(rng, (c2, config.num_classes), 0.02, dtype)
        self.head_b = _zeros(config.num_classes, dtype)

    def named_params(self):
        out = [(f"stem.{k}", p) for k, p in self.stem.named_params()]
        for i, blk in enumerate(self.stage1):
            out += [(f"stage1.{i}.{k}", p) for k, p in blk.named_params()]
        out += [("down_w", self.down_w), ("down_b", self.down_b), ("pos_embed", self.pos_embed)]
        for i, blk in enumerate(self.stage2):
            out += [(f"stage2.{i}.{k}", p) for k, p in blk.named_params()]
        out += [("cls_token", self.cls_token)]
        for i, blk in enumerate(self.class_blocks):
            out += [(f"class_blocks.{i}.{k}", p) for k, p in blk.named_params()]
        out += [(f"final_norm.{k}", p) for k, p in self.final_norm.named_params()]
        out += [("head_w", self.head_w), ("head_b", self.head_b)]
        return out

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_params()]

    def forward_one(self, image: Tensor, training: bool = False, rng=None) -> Tensor:
        """(S, S, 3) image → (1, num_classes) logits."""
        size = self.config.image_size
        if image.shape != (size, size, 3):
            raise ShapeError(
                f"expected a ({size}, {size}, 3) image (the config's resolution; "
                f"position table is not interpolated), got {image.shape}"
            )
        t = self.stem(image)
        for blk in self.stage1:
            t = blk.forward(t, training=training, rng=rng)
        t = ops.linear(patchify(t, self.config.downsample), self.down_w, self.down_b)
        grid2 = self.config.stage2_grid
        t = ops.reshape(t, (grid2 * grid2, self.config.stage2_dim))
        t = ops.add(t, self.pos_embed)
        for blk in self.stage2:
            t = blk.forward(t, training=training, rng=rng)
        cls = self.cls_token
        for blk in self.class_blocks:
            cls = blk.forward(cls, t)
        cls = self.final_norm(cls)
        return ops.linear(cls, self.head_w, self.head_b)

    def forward(self, images, training: bool = False, rng=None) -> Tensor:
        """(B, S, S, 3) images (Tensor or ndarray) → (B, num_classes) logits."""
        if not isinstance(images, Tensor):
            images = Tensor(np.asarray(images), dtype=self.dtype)
        if images.ndim != 4 or images.shape[3] != 3:
            raise ShapeError(f"expected (B, S, S, 3) images, got {images.shape}")
        rows = []
        for i in range(images.shape[0]):
            image = ops.reshape(ops.narrow(images, 0, i, 1), images.shape[1:])
            rows.append(self.forward_one(image, training=training, rng=rng))
        return rows[0] if len(rows) == 1 else ops.concat(rows, axis=0)

    __call__ = forward


def build_model(config: ModelConfig, seed: int = 0, dtype=np.float32) -> TwoStageModel:
    """Deterministically initialize a model from a config and seed."""
    return TwoStageModel(config, np.random.default_rng(seed), dtype=dtype)


def count_params(model: TwoStageModel) -> int:
    """Exact number of learnable scalars in an instantiated model."""
    return sum(p.size for p in model.parameters())


# ---------------------------------------------------------------------------
# symbolic accounting (no allocation)


def _linear_params(cin: int, cout: int, bias: bool = True) -> int:
    return cin * cout + (cout if bias else 0)


def _mlp_params(c: int, ratio: float) -> int:
    hidden = mlp_hidden(c, ratio)
    return _linear_params(c, hidden) + _linear_params(hidden, c)


def _stage1_mixer_params(config: ModelConfig) -> int:
    c, k = config.stage1_dim, config.kernel
    if config.stage1_kind == "outlook":
        return (_linear_params(c, c, bias=False)
                + _linear_params(c, config.outlooker_heads * k ** 4)
                + _linear_params(c, c))
    if config.stage1_kind == "lsa":
        return 4 * _linear_params(c, c)
    return _linear_params(k * k * c, c)  # conv


def count_params_config(config: ModelConfig) -> int:
    """Exact parameter count straight from the config (matches count_params)."""
    c1, c2 = config.stage1_dim, config.stage2_dim
    stem = (_linear_params(49 * 3, STEM_HIDDEN) + 2 * _linear_params(9 * STEM_HIDDEN, STEM_HIDDEN)
            + 3 * 2 * STEM_HIDDEN + _linear_params(16 * STEM_HIDDEN, c1))
    oblock = 2 * 2 * c1 + _stage1_mixer_params(config) + _mlp_params(c1, config.outlooker_mlp_ratio)
    tblock = 2 * 2 * c2 + 4 * _linear_params(c2, c2) + _mlp_params(c2, config.transformer_mlp_ratio)
    cablock = tblock  # same projections, norms, and MLP shape
    down = _linear_params(config.downsample ** 2 * c1, c2)
    pos = config.stage2_grid ** 2 * c2
    head = _linear_params(c2, config.num_classes)
    return (stem + config.num_outlookers * oblock + down + pos
            + config.num_transformers * tblock + c2
            + config.num_class_blocks * cablock + 2 * c2 + head)


def analytic_madds(config: ModelConfig, resolution: int | None = None) -> int:
    """Closed-form multiply-adds of one forward pass at a given resolution.

    Counts every matmul/linear sweep: stem convs and projection, stage-1
    mixers (outlook attention uses the per-layer closed form with a
    stride-adjusted window count), MLPs, downsample, transformer attention,
    class-attention blocks, and head.  Softmax/norm work is excluded, exactly
    as in the instrumented counter.
    """
    size = config.image_size if resolution is None else int(resolution)
    if size % 16 != 0:
        raise ShapeError(f"resolution must be divisible by 16, got {size}")
    g1 = size // config.patch_size
    g2 = g1 // config.downsample
    hw1, length = g1 * g1, g2 * g2
    c1, c2, k = config.stage1_dim, config.stage2_dim, config.kernel
    k2 = k * k

    half = size // 2
    stem = (half * half * (49 * 3) * STEM_HIDDEN
            + 2 * half * half * (9 * STEM_HIDDEN) * STEM_HIDDEN
            + hw1 * (16 * STEM_HIDDEN) * c1)

    if config.stage1_kind == "outlook":
        wins = ((g1 + 2 * (k // 2) - k) // config.stride + 1) ** 2
        mixer = hw1 * 2 * c1 * c1 + wins * c1 * config.outlooker_heads * k2 * k2 + wins * k2 * c1
    elif config.stage1_kind == "lsa":
        mixer = 4 * hw1 * c1 * c1 + 2 * hw1 * k2 * c1
    else:
        mixer = hw1 * k2 * c1 * c1
    h1 = mlp_hidden(c1, config.outlooker_mlp_ratio)
    stage1 = config.num_outlookers * (mixer + 2 * hw1 * c1 * h1)

    down = length * (config.downsample ** 2 * c1) * c2

    h2 = mlp_hidden(c2, config.transformer_mlp_ratio)
    sa = 4 * length * c2 * c2 + 2 * length * length * c2
    stage2 = config.num_transformers * (sa + 2 * length * c2 * h2)

    ca = (2 + 2 * (length + 1)) * c2 * c2 + 2 * c2 * (length + 1) + 2 * c2 * h2
    class_stage = config.num_class_blocks * ca

    return stem + stage1 + down + stage2 + class_stage + c2 * config.num_classes
