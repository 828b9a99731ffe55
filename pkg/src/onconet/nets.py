"""Network builders: the encoder-decoder preprocessor, the grouped-residual
classifier, the plain conv/PReLU/max-pool baseline, and the parameter ledger.

Weight init is fan-in-scaled normal (gain 1, the self-normalizing activation's
companion scheme); PReLU slopes start at 0.25 and biases at zero.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

from . import ops
from .ops import ConvParams
from .tensor import ShapeError, Tensor, read_tensor_record, write_tensor_record

__all__ = [
    "ModelVariant",
    "ModelConfig",
    "ParamLedger",
    "LedgerRow",
    "Fcn",
    "AggResClassifier",
    "BaselineClassifier",
    "SurvivalModel",
    "build_fcn",
    "build_aggres_cnn",
    "build_baseline_cnn",
    "build_model",
    "forward",
    "count_params",
    "save_checkpoint",
    "load_checkpoint",
    "load_state",
]


class ModelVariant(str, Enum):
    BASELINE_CNN = "baseline_cnn"
    AGGRES_CNN = "aggres_cnn"
    FCN_ONLY = "fcn_only"


@dataclass(frozen=True)
class ModelConfig:
    variant: ModelVariant = ModelVariant.AGGRES_CNN
    input_channels: int = 2
    input_size: int = 512
    stem_channels: int = 16
    stage_channels: tuple[int, ...] = (32, 64, 128, 256)
    blocks_per_stage: int = 2
    cardinality: int = 32
    use_fcn: bool = False
    fcn_down_channels: tuple[int, ...] = (32, 64, 128, 256)

    def __post_init__(self) -> None:
        if self.input_channels not in (1, 2):
            raise ValueError(f"input_channels must be 1 or 2, got {self.input_channels}")
        if self.input_size < 1:
            raise ValueError(f"input_size must be positive, got {self.input_size}")
        for prev, cur in zip(self.stage_channels, self.stage_channels[1:]):
            if cur != 2 * prev:
                raise ValueError(
                    f"stage_channels must double at every stage (growth factor 2), got {self.stage_channels}"
                )
        if self.blocks_per_stage < 1:
            raise ValueError("blocks_per_stage must be >= 1")
        if self.cardinality < 1:
            raise ValueError("cardinality must be >= 1")

    @property
    def feature_width(self) -> int:
        """Width of the vector entering the classification head."""
        return self.stage_channels[-1]


# -- initialization ---------------------------------------------------------------


def _fan_in_normal(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, dtype) -> Tensor:
    std = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.normal(0.0, std, size=shape).astype(dtype), requires_grad=True, dtype=dtype)


def _zeros_param(shape: tuple[int, ...], dtype) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=True, dtype=dtype)


# -- layers -------------------------------------------------------------------------


class Conv2d:
    def __init__(self, in_ch, out_ch, k, stride=1, padding=None, groups=1, *, rng, dtype=np.float32):
        if padding is None:
            padding = k // 2
        if in_ch % groups != 0 or out_ch % groups != 0:
            raise ShapeError(
                f"groups={groups} must divide in channels {in_ch} and out channels {out_ch}"
            )
        fan_in = (in_ch // groups) * k * k
        kernel = _fan_in_normal(rng, (out_ch, in_ch // groups, k, k), fan_in, dtype)
        bias = _zeros_param((out_ch,), dtype)
        self.params = ConvParams(kernel, bias, stride=stride, padding=padding, groups=groups)

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.params)

    def param_items(self):
        return [("kernel", self.params.kernel), ("bias", self.params.bias)]

    def ledger_count(self) -> int:
        return self.params.param_count

    def kernel_shape(self) -> tuple[int, ...]:
        return self.params.kernel.shape


class ConvTranspose2d:
    def __init__(self, in_ch, out_ch, k, stride=2, padding=1, *, rng, dtype=np.float32):
        fan_in = in_ch * k * k
        kernel = _fan_in_normal(rng, (in_ch, out_ch, k, k), fan_in, dtype)
        bias = _zeros_param((out_ch,), dtype)
        self.params = ConvParams(kernel, bias, stride=stride, padding=padding, groups=1)

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv2d_transpose(x, self.params)

    def param_items(self):
        return [("kernel", self.params.kernel), ("bias", self.params.bias)]

    def ledger_count(self) -> int:
        return self.params.param_count

    def kernel_shape(self) -> tuple[int, ...]:
        return self.params.kernel.shape


class Dense:
    def __init__(self, in_f, out_f, *, rng, dtype=np.float32):
        self.weight = _fan_in_normal(rng, (in_f, out_f), in_f, dtype)
        self.bias = _zeros_param((out_f,), dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return ops.dense(x, self.weight, self.bias)

    def param_items(self):
        return [("weight", self.weight), ("bias", self.bias)]

    def ledger_count(self) -> int:
        return self.weight.size + self.bias.size

    def kernel_shape(self) -> tuple[int, ...]:
        return self.weight.shape


class PReLU:
    def __init__(self, channels, *, dtype=np.float32, init_slope=0.25):
        self.slope = Tensor(np.full(channels, init_slope, dtype=dtype), requires_grad=True, dtype=dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return ops.prelu(x, self.slope)

    def param_items(self):
        return [("slope", self.slope)]

    def ledger_count(self) -> int:
        return self.slope.size

    def kernel_shape(self) -> tuple[int, ...]:
        return self.slope.shape


# -- blocks and networks --------------------------------------------------------------


def _grouping(cardinality: int, in_ch: int, out_ch: int) -> int:
    """Effective group count: the cardinality capped by what the channel counts divide."""
    g = min(cardinality, in_ch, out_ch)
    if in_ch % g != 0 or out_ch % g != 0:
        raise ShapeError(
            f"channels ({in_ch} -> {out_ch}) are not divisible by groups {g}"
        )
    return g


class AggResBlock:
    """Two grouped 3x3 convs, each with the self-normalizing activation,
    wrapped by a residual add; a strided block projects its skip with a 1x1."""

    def __init__(self, in_ch, out_ch, cardinality, stride, *, rng, dtype=np.float32):
        self.conv1 = Conv2d(
            in_ch, out_ch, 3, stride=stride, padding=1,
            groups=_grouping(cardinality, in_ch, out_ch), rng=rng, dtype=dtype,
        )
        self.conv2 = Conv2d(
            out_ch, out_ch, 3, stride=1, padding=1,
            groups=_grouping(cardinality, out_ch, out_ch), rng=rng, dtype=dtype,
        )
        self.proj = None
        if stride != 1 or in_ch != out_ch:
            self.proj = Conv2d(in_ch, out_ch, 1, stride=stride, padding=0, groups=1, rng=rng, dtype=dtype)

    def __call__(self, x: Tensor) -> Tensor:
        h = ops.selu(self.conv1(x))
        h = ops.selu(self.conv2(h))
        skip = x if self.proj is None else self.proj(x)
        return ops.add(h, skip)

    def layers(self, prefix: str):
        yield f"{prefix}.conv1", self.conv1
        yield f"{prefix}.conv2", self.conv2
        if self.proj is not None:
            yield f"{prefix}.proj", self.proj

    def main_path_depth(self) -> int:
        return 2  # the skip path is the shorter branch


class Fcn:
    """Encoder-decoder image preprocessor applied per input channel with
    shared weights; each channel's output depends only on that channel."""

    def __init__(self, cfg: ModelConfig, *, rng, dtype=np.float32):
        if cfg.input_size % 16 != 0:
            raise ShapeError(
                f"input size {cfg.input_size} must be divisible by 16 for 4 halving stages"
            )
        self.cfg = cfg
        down = cfg.fcn_down_channels
        up = tuple(ch // 2 for ch in reversed(down))
        self.encoders = []
        prev = 1
        for ch in down:
            self.encoders.append(Conv2d(prev, ch, 3, stride=2, padding=1, rng=rng, dtype=dtype))
            prev = ch
        self.decoders = []
        prev = down[-1]
        for j, ch in enumerate(up):
            in_ch = prev if j == 0 else prev + down[-1 - j]
            self.decoders.append(ConvTranspose2d(in_ch, ch, 3, stride=2, padding=1, rng=rng, dtype=dtype))
            prev = ch
        self.final = Conv2d(prev, 1, 1, stride=1, padding=0, rng=rng, dtype=dtype)

    def _run_channel(self, x: Tensor) -> Tensor:
        skips = []
        h = x
        for enc in self.encoders:
            h = ops.selu(enc(h))
            skips.append(h)
        d = skips[-1]
        for j, dec in enumerate(self.decoders):
            if j > 0:
                d = ops.concat_channels([d, skips[-1 - j]])
            d = ops.selu(dec(d))
        return self.final(d)

    def __call__(self, x: Tensor) -> Tensor:
        c = x.shape[1]
        if c == 1:
            return self._run_channel(x)
        outs = [self._run_channel(ops.slice_channels(x, i, i + 1)) for i in range(c)]
        return ops.concat_channels(outs)

    def layers(self, prefix: str = "fcn"):
        for i, enc in enumerate(self.encoders, 1):
            yield f"{prefix}.down{i}", enc
        for i, dec in enumerate(self.decoders, 1):
            yield f"{prefix}.up{i}", dec
        yield f"{prefix}.final", self.final


class AggResClassifier:
    """Stem conv, four stages of grouped-residual blocks with strided
    downsampling at each stage entry, then global average pooling and a
    softmax head.  The longest weighted path is 18 layers at the canonical
    configuration (1 stem + 16 block convs + 1 dense)."""

    def __init__(self, cfg: ModelConfig, *, rng, dtype=np.float32):
        in_ch = cfg.input_channels
        self.cfg = cfg
        self.stem = Conv2d(in_ch, cfg.stem_channels, 3, stride=1, padding=1, rng=rng, dtype=dtype)
        self.blocks: list[tuple[str, AggResBlock]] = []
        prev = cfg.stem_channels
        for s, ch in enumerate(cfg.stage_channels, 1):
            for b in range(1, cfg.blocks_per_stage + 1):
                stride = 2 if b == 1 else 1
                block = AggResBlock(prev, ch, cfg.cardinality, stride, rng=rng, dtype=dtype)
                self.blocks.append((f"stage{s}.block{b}", block))
                prev = ch
        if prev != cfg.feature_width:
            raise ShapeError(
                f"final stage width {prev} != classifier feature width {cfg.feature_width}"
            )
        self.head = Dense(cfg.feature_width, 2, rng=rng, dtype=dtype)

    def logits(self, x: Tensor) -> Tensor:
        h = ops.selu(self.stem(x))
        for _, block in self.blocks:
            h = block(h)
        pooled = ops.global_avg_pool(h)
        return self.head(pooled)

    def __call__(self, x: Tensor) -> Tensor:
        return ops.softmax(self.logits(x))

    def layers(self, prefix: str = "clf"):
        yield f"{prefix}.stem", self.stem
        for name, block in self.blocks:
            yield from block.layers(f"{prefix}.{name}")
        yield f"{prefix}.head", self.head

    def depth(self) -> int:
        """Weighted-layer count along the longest input-to-output path."""
        return 1 + sum(block.main_path_depth() for _, block in self.blocks) + 1


class BaselineClassifier:
    """Three conv/PReLU/max-pool stages followed by two fully connected
    layers and softmax.  The first conv is 5x5 with 32 filters; max pooling
    is 4x4 so three stages shrink the grid 64-fold."""

    CONV_CHANNELS = (32, 64, 128)
    CONV_KERNELS = (5, 3, 3)
    POOL = 4
    HIDDEN = 100

    def __init__(self, cfg: ModelConfig, *, rng, dtype=np.float32):
        if cfg.input_size % 64 != 0:
            raise ShapeError(
                f"input size {cfg.input_size} must be divisible by 64 for three 4x pooling stages"
            )
        self.cfg = cfg
        self.convs = []
        self.prelus = []
        prev = cfg.input_channels
        for ch, k in zip(self.CONV_CHANNELS, self.CONV_KERNELS):
            self.convs.append(Conv2d(prev, ch, k, stride=1, padding=k // 2, rng=rng, dtype=dtype))
            self.prelus.append(PReLU(ch, dtype=dtype))
            prev = ch
        side = cfg.input_size // self.POOL**3
        self.flat_features = self.CONV_CHANNELS[-1] * side * side
        self.fc1 = Dense(self.flat_features, self.HIDDEN, rng=rng, dtype=dtype)
        self.fc_act = PReLU(self.HIDDEN, dtype=dtype)
        self.fc2 = Dense(self.HIDDEN, 2, rng=rng, dtype=dtype)

    def logits(self, x: Tensor) -> Tensor:
        h = x
        for conv, act in zip(self.convs, self.prelus):
            h = ops.maxpool2d(act(conv(h)), self.POOL, self.POOL)
        h = ops.flatten2d(h)
        h = self.fc_act(self.fc1(h))
        return self.fc2(h)

    def __call__(self, x: Tensor) -> Tensor:
        return ops.softmax(self.logits(x))

    def layers(self, prefix: str = "clf"):
        for i, (conv, act) in enumerate(zip(self.convs, self.prelus), 1):
            yield f"{prefix}.conv{i}", conv
            yield f"{prefix}.act{i}", act
        yield f"{prefix}.fc1", self.fc1
        yield f"{prefix}.fc_act", self.fc_act
        yield f"{prefix}.fc2", self.fc2

    def depth(self) -> int:
        return len(self.convs) + 2


class SurvivalModel:
    """Optional preprocessor feeding a classifier; output is N x 2 softmax
    probabilities.  The preprocessor output replaces the input image."""

    def __init__(self, cfg: ModelConfig, *, rng=None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.cfg = cfg
        self.fcn = Fcn(cfg, rng=rng, dtype=dtype) if cfg.use_fcn else None
        if cfg.variant == ModelVariant.AGGRES_CNN:
            self.classifier = AggResClassifier(cfg, rng=rng, dtype=dtype)
        elif cfg.variant == ModelVariant.BASELINE_CNN:
            self.classifier = BaselineClassifier(cfg, rng=rng, dtype=dtype)
        elif cfg.variant == ModelVariant.FCN_ONLY:
            self.classifier = None
            if self.fcn is None:
                self.fcn = Fcn(cfg, rng=rng, dtype=dtype)
        else:
            raise ValueError(f"unknown variant {cfg.variant}")

    def __call__(self, x: Tensor) -> Tensor:
        if self.fcn is not None:
            x = self.fcn(x)
        if self.classifier is None:
            return x
        return self.classifier(x)

    def layers(self):
        if self.fcn is not None:
            yield from self.fcn.layers("fcn")
        if self.classifier is not None:
            yield from self.classifier.layers("clf")

    def named_params(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for name, layer in self.layers():
            for pname, tensor in layer.param_items():
                out[f"{name}.{pname}"] = tensor
        return out

    def depth(self) -> int:
        if self.classifier is None:
            raise ValueError("depth is defined for classifier variants")
        return self.classifier.depth()


# -- builders ----------------------------------------------------------------------------


def build_fcn(cfg: ModelConfig, rng=None, dtype=np.float32) -> Fcn:
    rng = rng if rng is not None else np.random.default_rng(0)
    return Fcn(cfg, rng=rng, dtype=dtype)


def build_aggres_cnn(cfg: ModelConfig, rng=None, dtype=np.float32) -> SurvivalModel:
    if cfg.variant != ModelVariant.AGGRES_CNN:
        raise ValueError(f"expected variant aggres_cnn, got {cfg.variant}")
    return SurvivalModel(cfg, rng=rng, dtype=dtype)


def build_baseline_cnn(cfg: ModelConfig, rng=None, dtype=np.float32) -> SurvivalModel:
    if cfg.variant != ModelVariant.BASELINE_CNN:
        raise ValueError(f"expected variant baseline_cnn, got {cfg.variant}")
    return SurvivalModel(cfg, rng=rng, dtype=dtype)


def build_model(cfg: ModelConfig, rng=None, dtype=np.float32) -> SurvivalModel:
    return SurvivalModel(cfg, rng=rng, dtype=dtype)


def forward(model: SurvivalModel, x: Tensor) -> Tensor:
    cfg = model.cfg
    if x.ndim != 4 or x.shape[1] != cfg.input_channels:
        raise ShapeError(
            f"input shape {x.shape} does not match (N, {cfg.input_channels}, H, W)"
        )
    if x.shape[2] != cfg.input_size or x.shape[3] != cfg.input_size:
        raise ShapeError(
            f"input spatial extent {x.shape[2:]} does not match configured size {cfg.input_size}"
        )
    return model(x)


# -- parameter ledger ----------------------------------------------------------------


@dataclass(frozen=True)
class LedgerRow:
    name: str
    kernel_shape: tuple[int, ...]
    count: int


@dataclass
class ParamLedger:
    rows: list[LedgerRow] = field(default_factory=list)

    @property
    def total(self) -> int:
        return sum(r.count for r in self.rows)

    def format(self) -> str:
        width = max([len(r.name) for r in self.rows] + [5])
        lines = [f"{'layer':<{width}}  {'kernel':<20}  params"]
        for r in self.rows:
            shape = "x".join(str(d) for d in r.kernel_shape)
            lines.append(f"{r.name:<{width}}  {shape:<20}  {r.count}")
        lines.append(f"{'total':<{width}}  {'':<20}  {self.total}")
        return "\n".join(lines)


def count_params(model) -> ParamLedger:
    """Exact per-layer parameter counts for any built network."""
    rows = []
    layer_iter = model.layers() if not isinstance(model, Fcn) else model.layers("fcn")
    for name, layer in layer_iter:
        rows.append(LedgerRow(name, tuple(layer.kernel_shape()), layer.ledger_count()))
    return ParamLedger(rows)


# -- checkpoints -------------------------------------------------------------------------


def save_checkpoint(directory, named: dict[str, Tensor], stem: str = "weights") -> None:
    """Write named tensors as consecutive binary records plus an offset index."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    index_lines = []
    with open(directory / f"{stem}.bin", "wb") as fh:
        for name in sorted(named):
            offset = write_tensor_record(fh, named[name])
            index_lines.append(f"{name}\t{offset}")
    (directory / f"{stem}.idx").write_text("\n".join(index_lines) + "\n")


def load_checkpoint(directory, stem: str = "weights") -> dict[str, Tensor]:
    directory = Path(directory)
    entries = []
    for line in (directory / f"{stem}.idx").read_text().splitlines():
        if not line.strip():
            continue
        name, offset = line.rsplit("\t", 1)
        entries.append((name, int(offset)))
    out: dict[str, Tensor] = {}
    with open(directory / f"{stem}.bin", "rb") as fh:
        for name, offset in entries:
            fh.seek(offset)
            out[name] = read_tensor_record(fh)
    return out


def load_state(model: SurvivalModel, named: dict[str, Tensor]) -> None:
    """Copy checkpoint values into a built model, enforcing matching names/shapes."""
    params = model.named_params()
    missing = sorted(set(params) - set(named))
    extra = sorted(set(named) - set(params))
    if missing or extra:
        raise ValueError(f"checkpoint mismatch: missing={missing} unexpected={extra}")
    for name, tensor in params.items():
        src = named[name]
        if src.shape != tensor.shape:
            raise ShapeError(f"parameter {name}: checkpoint shape {src.shape} != model shape {tensor.shape}")
        tensor.data[...] = src.data.astype(tensor.data.dtype)
