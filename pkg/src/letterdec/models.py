"""The four convolutional decoders, built over :mod:`letterdec.nn`.

Each builder returns a :class:`Model`: an ordered list of named blocks
followed by a flatten + dense head with one output per letter. Every model
takes ``(batch, 1, channels, time)`` input.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .nn import functional as F
from .nn.tensor import Tensor, concat, mean, mul, no_grad

ARCHITECTURES = ("DeepConvNet", "EEGNet", "EEGInception", "LMDA")
N_CLASSES = 26


class ModelBuildError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    """Hyperparameters of one architecture.

    The meaning of the shared fields per architecture:

    ======================  ===========  =========  =============  ================
    field                   DeepConvNet  EEGNet     EEGInception   LMDA
    ======================  ===========  =========  =============  ================
    ``temporal_filters``    stem depth   F1         per branch     depth multiplier
    ``temporal_kernels``    stem kernel  kernel     branch kernels kernel
    ``depth_multiplier``    -            D          D              -
    ``block_filters``       conv blocks  F2         conv blocks    spatial depth
    ``block_kernels``       conv blocks  separable  conv blocks    -
    ``pools``               per stage    per stage  per stage      after spatial
    ======================  ===========  =========  =============  ================
    """

    arch: str
    n_channels: int = 24
    n_timepoints: int = 400
    n_classes: int = N_CLASSES
    temporal_filters: int = 8
    temporal_kernels: tuple[int, ...] = (6,)
    depth_multiplier: int = 2
    block_filters: tuple[int, ...] = (16,)
    block_kernels: tuple[int, ...] = (16,)
    pools: tuple[int, ...] = (4, 4)
    dropout: float = 0.5
    ca_depth: int = 9
    depth_attention_kernel: int = 7

    def __post_init__(self):
        if self.arch not in ARCHITECTURES:
            raise ModelBuildError(f"unknown architecture {self.arch!r}; expected one of {ARCHITECTURES}")
        if self.n_classes != N_CLASSES:
            raise ModelBuildError(f"n_classes must be {N_CLASSES}, got {self.n_classes}")
        for k in self.temporal_kernels + self.block_kernels + (self.depth_attention_kernel,):
            if not 1 <= k <= self.n_timepoints:
                raise ModelBuildError(f"kernel length {k} outside 1..{self.n_timepoints}")
        if not 0 <= self.dropout < 1:
            raise ModelBuildError(f"dropout {self.dropout} outside [0, 1)")

    @classmethod
    def for_arch(cls, arch: str, **overrides) -> "ModelConfig":
        """Default configuration of ``arch`` with selected fields replaced."""
        base = dict(DEFAULTS.get(arch, {}))
        base.update(overrides)
        for key in ("temporal_kernels", "block_filters", "block_kernels", "pools"):
            if key in base:
                base[key] = tuple(base[key])
        return cls(arch=arch, **base)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


DEFAULTS: dict[str, dict] = {
    "DeepConvNet": dict(temporal_filters=25, temporal_kernels=(10,), block_filters=(50, 100),
                        block_kernels=(10, 10), pools=(4, 4, 4)),
    "EEGNet": dict(temporal_filters=8, temporal_kernels=(6,), depth_multiplier=2, block_filters=(16,),
                   block_kernels=(16,), pools=(4, 4)),
    "EEGInception": dict(temporal_filters=8, temporal_kernels=(25, 12, 6), depth_multiplier=2,
                         block_filters=(12, 6), block_kernels=(8, 4), pools=(4, 2, 2, 2)),
    "LMDA": dict(ca_depth=24, temporal_filters=1, temporal_kernels=(25,), block_filters=(9,),
                 block_kernels=(), pools=(4,), depth_attention_kernel=7),
}


@dataclass
class LayerSummary:
    name: str
    kind: str
    output_shape: tuple[int, ...]
    n_params: int
    detail: dict = field(default_factory=dict)


@dataclass
class ModelSummary:
    arch: str
    layers: list[LayerSummary]
    total_params: int

    @property
    def output_shape(self) -> tuple[int, ...]:
        return self.layers[-1].output_shape

    def to_dict(self) -> dict:
        return {
            "arch": self.arch,
            "total_params": self.total_params,
            "layers": [
                {"name": l.name, "kind": l.kind, "output_shape": list(l.output_shape),
                 "n_params": l.n_params, **({"detail": l.detail} if l.detail else {})}
                for l in self.layers
            ],
        }


class Inception(nn.Module):
    """Parallel 'same'-padded temporal convolutions concatenated along depth."""

    def __init__(self, d_in: int, filters: int, kernels, rng):
        self.kernels = tuple(kernels)
        self.branches = [nn.Conv2d(d_in, filters, (1, k), rng, padding="same") for k in self.kernels]

    def forward(self, x):
        return concat([b(x) for b in self.branches], axis=1)


class ChannelAttention(nn.Module):
    """Learned depth x channel weights; maps the single input depth to ``depth`` maps."""

    def __init__(self, depth: int, n_channels: int, rng, dtype=np.float32):
        self.depth, self.n_channels = depth, n_channels
        self.weight = Tensor(rng.uniform(-1.0, 1.0, size=(depth, n_channels)).astype(dtype), requires_grad=True)

    def forward(self, x):
        if x.shape[1] != 1:
            raise ValueError("channel attention expects a single input depth")
        w = self.weight.reshape(1, self.depth, self.n_channels, 1)
        return mul(x, w)


class DepthAttention(nn.Module):
    """Per-depth reweighting from channel-pooled features.

    A learned 1-D convolution along the depth axis scores each depth at each
    time point; scores are softmax-normalised over depth and the features are
    rescaled by ``depth * weight`` so uniform weights leave them unchanged.
    """

    def __init__(self, depth: int, kernel: int, rng):
        self.depth = depth
        self.conv = nn.Conv2d(1, 1, (kernel, 1), rng, padding="same", bias=True)
        self.last_weights: np.ndarray | None = None

    def forward(self, x):
        b, d, c, t = x.shape
        pooled = mean(x, axis=2, keepdims=True).reshape(b, 1, d, t)
        w = F.softmax(self.conv(pooled), axis=2)
        self.last_weights = w.data.reshape(b, d, t)
        return mul(x, w.reshape(b, d, 1, t) * float(d))


class Head(nn.Module):
    def __init__(self, n_in: int, n_out: int, rng):
        self.dense = nn.Dense(n_in, n_out, rng)

    def forward(self, x):
        return self.dense(F.flatten(x))


class Model(nn.Module):
    """Named feature blocks followed by a dense classification head."""

    def __init__(self, cfg: ModelConfig, blocks: list[tuple[str, nn.Module]], rng, seed: int):
        self.cfg = cfg
        self.block_names = [name for name, _ in blocks]
        self.blocks = [blk for _, blk in blocks]
        self.seed = seed
        with no_grad():
            self.eval()
            probe = self.features(Tensor(np.zeros((2, 1, cfg.n_channels, cfg.n_timepoints), np.float32)))
            self.train()
        n_feat = int(np.prod(probe.shape[1:]))
        if n_feat < 1:
            raise ModelBuildError(f"{cfg.arch}: feature map collapsed to {probe.shape}")
        self.head = Head(n_feat, cfg.n_classes, rng)
        self.reseed_dropout(seed)

    def features(self, x: Tensor, trace: list | None = None) -> Tensor:
        for name, blk in zip(self.block_names, self.blocks):
            x = blk(x)
            if trace is not None:
                trace.append((name, blk, x))
        return x

    def forward(self, x: Tensor, trace: list | None = None) -> Tensor:
        out = self.head(self.features(x, trace))
        if trace is not None:
            trace.append(("head", self.head, out))
        return out

    def reseed_dropout(self, seed) -> None:
        drops = [m for m in self.modules() if isinstance(m, nn.Dropout)]
        children = np.random.SeedSequence([int(self.seed), int(seed) & 0xFFFFFFFF]).spawn(len(drops))
        for m, ss in zip(drops, children):
            m.rng = np.random.default_rng(ss)

    def summary(self) -> ModelSummary:
        cfg = self.cfg
        was_training = self.training
        trace: list = []
        with no_grad():
            self.eval()
            self.forward(Tensor(np.zeros((1, 1, cfg.n_channels, cfg.n_timepoints), np.float32)), trace)
        self.train(was_training)
        layers = []
        for name, blk, out in trace:
            detail = {}
            if isinstance(blk, Inception):
                detail["kernels"] = list(blk.kernels)
            elif isinstance(blk, nn.Sequential):
                for sub in blk:
                    if isinstance(sub, Inception):
                        detail["kernels"] = list(sub.kernels)
            layers.append(LayerSummary(name, type(blk).__name__, tuple(out.shape), blk.n_parameters(), detail))
        return ModelSummary(cfg.arch, layers, self.n_parameters())


def _pool_drop(cfg: ModelConfig, pool: int, seed: int) -> list[nn.Module]:
    return [nn.AvgPool(pool), nn.Dropout(cfg.dropout, seed)]


def build_deepconvnet(cfg: ModelConfig, seed: int = 0) -> Model:
    """Temporal conv, full-height spatial conv, then two conv blocks."""
    if cfg.arch != "DeepConvNet":
        raise ModelBuildError(f"build_deepconvnet got arch {cfg.arch!r}")
    if len(cfg.block_filters) != 2 or len(cfg.block_kernels) != 2 or len(cfg.pools) != 3:
        raise ModelBuildError("DeepConvNet needs 2 block filters, 2 block kernels and 3 pools")
    rng = np.random.default_rng(seed)
    f0, k0 = cfg.temporal_filters, cfg.temporal_kernels[0]
    blocks: list[tuple[str, nn.Module]] = [
        ("temporal", nn.Conv2d(1, f0, (1, k0), rng, padding="same")),
        ("spatial", nn.Sequential(
            nn.Conv2d(f0, f0, (cfg.n_channels, 1), rng),
            nn.BatchNorm2d(f0), nn.ELU(), *_pool_drop(cfg, cfg.pools[0], 0))),
    ]
    d_in = f0
    for i, (f, k) in enumerate(zip(cfg.block_filters, cfg.block_kernels), start=1):
        blocks.append((f"block{i}", nn.Sequential(
            nn.Conv2d(d_in, f, (1, k), rng, padding="same"),
            nn.BatchNorm2d(f), nn.ELU(), *_pool_drop(cfg, cfg.pools[i], i))))
        d_in = f
    return Model(cfg, blocks, rng, seed)


def build_eegnet(cfg: ModelConfig, seed: int = 0) -> Model:
    """Temporal conv, depthwise spatial conv, separable conv."""
    if cfg.arch != "EEGNet":
        raise ModelBuildError(f"build_eegnet got arch {cfg.arch!r}")
    rng = np.random.default_rng(seed)
    f1, d = cfg.temporal_filters, cfg.depth_multiplier
    f2 = cfg.block_filters[0]
    blocks = [
        ("temporal", nn.Sequential(
            nn.Conv2d(1, f1, (1, cfg.temporal_kernels[0]), rng, padding="same"), nn.BatchNorm2d(f1))),
        ("spatial", nn.Sequential(
            nn.Conv2d(f1, f1 * d, (cfg.n_channels, 1), rng, groups=f1),
            nn.BatchNorm2d(f1 * d), nn.ELU(), *_pool_drop(cfg, cfg.pools[0], 0))),
        ("separable", nn.Sequential(
            nn.Conv2d(f1 * d, f1 * d, (1, cfg.block_kernels[0]), rng, groups=f1 * d, padding="same"),
            nn.Conv2d(f1 * d, f2, (1, 1), rng),
            nn.BatchNorm2d(f2), nn.ELU(), *_pool_drop(cfg, cfg.pools[1], 1))),
    ]
    return Model(cfg, blocks, rng, seed)


def build_eeginception(cfg: ModelConfig, seed: int = 0) -> Model:
    """Two Inception modules then two conv blocks."""
    if cfg.arch != "EEGInception":
        raise ModelBuildError(f"build_eeginception got arch {cfg.arch!r}")
    if len(cfg.block_filters) != 2 or len(cfg.block_kernels) != 2 or len(cfg.pools) != 4:
        raise ModelBuildError("EEGInception needs 2 block filters, 2 block kernels and 4 pools")
    rng = np.random.default_rng(seed)
    f, d = cfg.temporal_filters, cfg.depth_multiplier
    kernels = cfg.temporal_kernels
    nb = len(kernels)
    # second module sees time downsampled by the first pool
    kernels2 = tuple(max(1, k // cfg.pools[0]) for k in kernels)
    blocks = [
        ("inception1", nn.Sequential(
            Inception(1, f, kernels, rng),
            nn.Conv2d(nb * f, nb * f * d, (cfg.n_channels, 1), rng, groups=nb * f),
            nn.BatchNorm2d(nb * f * d), nn.ELU(), *_pool_drop(cfg, cfg.pools[0], 0))),
        ("inception2", nn.Sequential(
            Inception(nb * f * d, f, kernels2, rng), nn.BatchNorm2d(nb * f), nn.ELU(),
            *_pool_drop(cfg, cfg.pools[1], 1))),
    ]
    d_in = nb * f
    for i, (fo, k) in enumerate(zip(cfg.block_filters, cfg.block_kernels), start=1):
        blocks.append((f"block{i}", nn.Sequential(
            nn.Conv2d(d_in, fo, (1, k), rng, padding="same"),
            nn.BatchNorm2d(fo), nn.ELU(), *_pool_drop(cfg, cfg.pools[i + 1], i + 1))))
        d_in = fo
    return Model(cfg, blocks, rng, seed)


def build_lmda(cfg: ModelConfig, seed: int = 0) -> Model:
    """Channel attention, temporal block, depth attention, spatial block."""
    if cfg.arch != "LMDA":
        raise ModelBuildError(f"build_lmda got arch {cfg.arch!r}")
    rng = np.random.default_rng(seed)
    ca, ds = cfg.ca_depth, cfg.block_filters[0]
    dt = ca * cfg.temporal_filters
    blocks = [
        ("channel_attention", ChannelAttention(ca, cfg.n_channels, rng)),
        ("temporal", nn.Sequential(
            nn.Conv2d(ca, dt, (1, cfg.temporal_kernels[0]), rng, groups=ca, padding="same"),
            nn.BatchNorm2d(dt), nn.ELU())),
        ("depth_attention", DepthAttention(dt, cfg.depth_attention_kernel, rng)),
        ("spatial", nn.Sequential(
            nn.Conv2d(dt, ds, (1, 1), rng), nn.BatchNorm2d(ds),
            nn.Conv2d(ds, ds, (cfg.n_channels, 1), rng, groups=ds),
            nn.BatchNorm2d(ds), nn.ELU(), *_pool_drop(cfg, cfg.pools[0], 0))),
    ]
    return Model(cfg, blocks, rng, seed)


BUILDERS = {
    "DeepConvNet": build_deepconvnet,
    "EEGNet": build_eegnet,
    "EEGInception": build_eeginception,
    "LMDA": build_lmda,
}


def build_model(cfg: ModelConfig, seed: int = 0) -> Model:
    try:
        return BUILDERS[cfg.arch](cfg, seed)
    except ValueError as exc:
        if isinstance(exc, ModelBuildError):
            raise
        raise ModelBuildError(f"{cfg.arch}: {exc}") from exc


def forward_logits(model: Model, batch) -> Tensor:
    """Run ``model`` on ``(b, 1, C, T)`` input and return finite ``(b, 26)`` logits."""
    x = batch if isinstance(batch, Tensor) else Tensor(np.asarray(batch))
    cfg = model.cfg
    if x.ndim != 4 or x.shape[1:] != (1, cfg.n_channels, cfg.n_timepoints):
        raise ValueError(f"expected input (b, 1, {cfg.n_channels}, {cfg.n_timepoints}), got {x.shape}")
    if x.dtype != model.head.dense.weight.dtype:
        x = Tensor(x.data.astype(model.head.dense.weight.dtype))
    return F.check_finite(model(x), f"{cfg.arch} forward")
