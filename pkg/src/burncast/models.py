"""Segmentation models over datacube patches.

All models map input tensors to per-pixel burn logits of shape [B, 1, H, W]:

* UNet2D consumes flattened 2-D layouts (all time steps stacked as channels,
  or the ignition-day slice alone).
* UNet3D consumes the volumetric layout [B, C, T, H, W]; pooling is
  spatial-only so the temporal axis survives to a learned collapse head.
* ViTSegmenter consumes the same 2-D layouts through a patch-token
  transformer encoder.
"""

from dataclasses import asdict, dataclass

import torch
from torch import nn

from .catalog import ChannelLayout, IGNITION_DAY_2D, STACKED_2D, VOLUMETRIC_3D
from .samples import CatalogMismatchError

ARCH_UNET2D = "unet2d"
ARCH_UNET3D = "unet3d"
ARCH_VIT = "vit"
ARCHITECTURES = (ARCH_UNET2D, ARCH_UNET3D, ARCH_VIT)

# which input layouts each architecture accepts
_ARCH_LAYOUTS = {
    ARCH_UNET2D: (STACKED_2D, IGNITION_DAY_2D),
    ARCH_VIT: (STACKED_2D, IGNITION_DAY_2D),
    ARCH_UNET3D: (VOLUMETRIC_3D,),
}


def allowed_layouts(arch: str):
    if arch not in _ARCH_LAYOUTS:
        raise ValueError(f"unknown arch {arch!r}")
    return _ARCH_LAYOUTS[arch]


@dataclass(frozen=True)
class ModelConfig:
    arch: str = ARCH_UNET2D
    in_channels: int = 152
    time_depth: int = None  # volumetric input only
    base_width: int = 64
    levels: int = 2
    n_convs: int = 2
    dropout: float = 0.1
    padding_mode: str = "zeros"
    time_head: str = "conv"  # "conv" | "pool"
    # transformer settings
    patch_size: int = 8
    embed_dim: int = 256
    vit_depth: int = 6
    n_heads: int = 8
    mlp_ratio: int = 4
    vit_head: str = "upsample"  # "upsample" | "token_linear"
    seed: int = 0

    def __post_init__(self):
        if self.arch not in ARCHITECTURES:
            raise ValueError(f"unknown arch {self.arch!r}; expected one of {ARCHITECTURES}")
        if self.arch == ARCH_UNET3D and not self.time_depth:
            raise ValueError("unet3d requires time_depth")
        if self.levels < 1:
            raise ValueError("levels must be >= 1")

    @classmethod
    def for_layout(cls, arch: str, layout: ChannelLayout, **overrides) -> "ModelConfig":
        """Derive channel settings from a layout so they cannot drift apart."""
        if layout.mode not in _ARCH_LAYOUTS.get(arch, ()):
            raise ValueError(
                f"{arch} does not accept layout {layout.mode!r}; "
                f"expected one of {_ARCH_LAYOUTS[arch]}"
            )
        if layout.mode == VOLUMETRIC_3D:
            overrides.setdefault("time_depth", layout.time_depth)
        return cls(arch=arch, in_channels=layout.total_channels, **overrides)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, payload: dict) -> "ModelConfig":
        return cls(**payload)


def _conv_block(dim, in_ch, out_ch, n_convs, dropout, padding_mode):
    """n_convs of (conv3x3 -> batchnorm -> GELU), then dropout."""
    conv = nn.Conv2d if dim == 2 else nn.Conv3d
    norm = nn.BatchNorm2d if dim == 2 else nn.BatchNorm3d
    layers = []
    ch = in_ch
    for _ in range(n_convs):
        layers += [
            conv(ch, out_ch, kernel_size=3, padding=1, padding_mode=padding_mode, bias=False),
            norm(out_ch),
            nn.GELU(),
        ]
        ch = out_ch
    layers.append(nn.Dropout(dropout) if dim == 2 else nn.Dropout3d(dropout))
    return nn.Sequential(*layers)


def _check_input(x, expected_dims, expected_channels, arch):
    if x.dim() != expected_dims:
        raise ValueError(
            f"{arch} expects a {expected_dims}-D tensor "
            f"[B, C{', T' if expected_dims == 5 else ''}, H, W]; got {x.dim()}-D"
        )
    if x.shape[1] != expected_channels:
        raise ValueError(
            f"{arch} was built for {expected_channels} input channels; got {x.shape[1]}"
        )


class _UNet(nn.Module):
    """Shared encoder/decoder skeleton; dim selects 2-D or 3-D convolutions.

    3-D pooling and upsampling act on spatial axes only, so temporal length
    is preserved end to end.
    """

    def __init__(self, config: ModelConfig, dim: int):
        super().__init__()
        self.config = config
        self.dim = dim
        w = config.base_width
        widths = [w * 2 ** i for i in range(config.levels)]
        bottleneck = w * 2 ** config.levels

        def block(i, o):
            return _conv_block(dim, i, o, config.n_convs, config.dropout, config.padding_mode)

        if dim == 2:
            self.pool = nn.MaxPool2d(2)
            up_mode = "nearest"
            up_scale = 2
        else:
            self.pool = nn.MaxPool3d((1, 2, 2))
            up_mode = "nearest"
            up_scale = (1, 2, 2)

        self.encoders = nn.ModuleList()
        ch = config.in_channels
        for width in widths:
            self.encoders.append(block(ch, width))
            ch = width
        self.bottleneck = block(ch, bottleneck)

        conv = nn.Conv2d if dim == 2 else nn.Conv3d
        self.upsamples = nn.ModuleList()
        self.decoders = nn.ModuleList()
        ch = bottleneck
        for width in reversed(widths):
            self.upsamples.append(
                nn.Sequential(
                    nn.Upsample(scale_factor=up_scale, mode=up_mode),
                    conv(ch, width, kernel_size=3, padding=1,
                         padding_mode=config.padding_mode, bias=False),
                )
            )
            self.decoders.append(block(2 * width, width))
            ch = width
        self.out_width = ch

    def features(self, x):
        skips = []
        for enc in self.encoders:
            x = enc(x)
            skips.append(x)
            x = self.pool(x)
        x = self.bottleneck(x)
        for up, dec, skip in zip(self.upsamples, self.decoders, reversed(skips)):
            x = up(x)
            x = dec(torch.cat([x, skip], dim=1))
        return x


class UNet2D(_UNet):
    def __init__(self, config: ModelConfig):
        super().__init__(config, dim=2)
        self.head = nn.Conv2d(self.out_width, 1, kernel_size=1)

    def forward(self, x):
        _check_input(x, 4, self.config.in_channels, ARCH_UNET2D)
        return self.head(self.features(x))


class UNet3D(_UNet):
    def __init__(self, config: ModelConfig):
        super().__init__(config, dim=3)
        if config.time_head == "conv":
            # learned collapse over the full temporal extent
            self.collapse = nn.Conv3d(
                self.out_width, self.out_width, kernel_size=(config.time_depth, 1, 1)
            )
        elif config.time_head == "pool":
            self.collapse = None
        else:
            raise ValueError(f"unknown time_head {config.time_head!r}")
        self.head = nn.Conv2d(self.out_width, 1, kernel_size=1)

    def forward(self, x):
        _check_input(x, 5, self.config.in_channels, ARCH_UNET3D)
        if x.shape[2] != self.config.time_depth:
            raise ValueError(
                f"unet3d was built for {self.config.time_depth} time steps; got {x.shape[2]}"
            )
        feats = self.features(x)
        if self.collapse is not None:
            feats = self.collapse(feats)
            flat = feats.squeeze(2)
        else:
            flat = feats.mean(dim=2)
        return self.head(flat)


class ViTSegmenter(nn.Module):
    """Patch-token transformer encoder with a per-token mask decoder.

    The default head decodes one logit per token and upsamples the coarse
    map bilinearly; it trains much faster than the token_linear alternative,
    which predicts a full patch_size x patch_size tile per token and has to
    learn tile seams the hard way.
    """

    def __init__(self, config: ModelConfig, image_size: int = 64):
        super().__init__()
        self.config = config
        p = config.patch_size
        if image_size % p:
            raise ValueError("image_size must be divisible by patch_size")
        self.grid = image_size // p
        n_tokens = self.grid * self.grid
        # Inputs arrive as raw [0, 1] channels. The conv nets recenter them in
        # their first BatchNorm; the transformer has no equivalent, and
        # un-centered inputs leave it barely trainable, so normalize here.
        self.in_norm = nn.BatchNorm2d(config.in_channels, affine=False)
        self.embed = nn.Conv2d(config.in_channels, config.embed_dim, kernel_size=p, stride=p)
        # Position std matches token content scale; at the usual 0.02 the
        # positions are invisible next to the embedded patches and attention
        # spends most of a short run unable to route spatially.
        self.pos = nn.Parameter(0.5 * torch.randn(1, n_tokens, config.embed_dim))
        layer = nn.TransformerEncoderLayer(
            d_model=config.embed_dim,
            nhead=config.n_heads,
            dim_feedforward=config.embed_dim * config.mlp_ratio,
            dropout=config.dropout,
            activation="gelu",
            batch_first=True,
            norm_first=True,
        )
        self.encoder = nn.TransformerEncoder(
            layer, num_layers=config.vit_depth, enable_nested_tensor=False
        )
        self.norm = nn.LayerNorm(config.embed_dim)
        if config.vit_head == "token_linear":
            self.decode = nn.Linear(config.embed_dim, p * p)
        elif config.vit_head == "upsample":
            self.decode = nn.Linear(config.embed_dim, 1)
        else:
            raise ValueError(f"unknown vit_head {config.vit_head!r}")

    def forward(self, x):
        _check_input(x, 4, self.config.in_channels, ARCH_VIT)
        b, _, h, w = x.shape
        p = self.config.patch_size
        if h != w or h != self.grid * p:
            raise ValueError(f"vit was built for {self.grid * p}x{self.grid * p} inputs")
        tokens = self.embed(self.in_norm(x)).flatten(2).transpose(1, 2)  # [B, N, E]
        tokens = self.encoder(tokens + self.pos)
        tokens = self.norm(tokens)
        g = self.grid
        if self.config.vit_head == "token_linear":
            tiles = self.decode(tokens).view(b, g, g, p, p)
            logits = tiles.permute(0, 1, 3, 2, 4).reshape(b, 1, h, w)
        else:
            coarse = self.decode(tokens).view(b, 1, g, g)
            logits = nn.functional.interpolate(
                coarse, size=(h, w), mode="bilinear", align_corners=False
            )
        return logits


def build_model(config: ModelConfig) -> nn.Module:
    """Instantiate with seeded initialization; same config, same weights."""
    torch.manual_seed(config.seed)
    if config.arch == ARCH_UNET2D:
        return UNet2D(config)
    if config.arch == ARCH_UNET3D:
        return UNet3D(config)
    return ViTSegmenter(config)


def num_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


def describe(model: nn.Module) -> dict:
    cfg = getattr(model, "config", None)
    return {
        "class": type(model).__name__,
        "n_parameters": num_parameters(model),
        "config": cfg.to_dict() if cfg is not None else None,
    }


@torch.no_grad()
def predict_mask(model: nn.Module, inputs: torch.Tensor, threshold: float = 0.5):
    """Binary masks [B, H, W] uint8 from thresholded sigmoid probabilities."""
    model.eval()
    probs = torch.sigmoid(model(inputs))
    return (probs[:, 0] > threshold).to(torch.uint8)


def save_checkpoint(path, model: nn.Module, config: ModelConfig, catalog_hash: str, extra=None):
    torch.save(
        {
            "state_dict": model.state_dict(),
            "config": config.to_dict(),
            "catalog_hash": catalog_hash,
            "extra": extra or {},
        },
        path,
    )


def load_checkpoint(path, expected_catalog_hash: str = None):
    """Rebuild the model from a checkpoint.

    Refuses to load when the checkpoint was trained against a different
    variable catalog, since channel order would silently change meaning.
    """
    payload = torch.load(path, map_location="cpu", weights_only=False)
    stored_hash = payload.get("catalog_hash")
    if expected_catalog_hash is not None and stored_hash != expected_catalog_hash:
        raise CatalogMismatchError(
            f"checkpoint catalog hash {stored_hash!r} does not match "
            f"expected {expected_catalog_hash!r}"
        )
    config = ModelConfig.from_dict(payload["config"])
    model = build_model(config)
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, config, payload.get("extra", {})
