"""The four encoder-decoder architectures, all on a ResNet-50 encoder.

deeplabv3 comes straight from torchvision; the other three decoders are
built here because torchvision ships no UNet/UNet++/DeepLabV3+ variants.
Every model maps a 3xHxW image to one logit channel per class at the input
resolution.
"""

from __future__ import annotations

import torch
import torchvision
from torch import nn
from torch.nn import functional as F
from torchvision.models.segmentation.deeplabv3 import ASPP

from .errors import ConfigError


def _resnet50_backbone(pretrained: bool) -> nn.Module:
    weights = torchvision.models.ResNet50_Weights.IMAGENET1K_V1 if pretrained else None
    return torchvision.models.resnet50(weights=weights)


class ResNetEncoder(nn.Module):
    """Feature pyramid from resnet50: channels (64, 256, 512, 1024, 2048)
    at strides (2, 4, 8, 16, 32)."""

    channels = (64, 256, 512, 1024, 2048)

    def __init__(self, pretrained: bool):
        super().__init__()
        net = _resnet50_backbone(pretrained)
        self.stem = nn.Sequential(net.conv1, net.bn1, net.relu)
        self.pool = net.maxpool
        self.layer1 = net.layer1
        self.layer2 = net.layer2
        self.layer3 = net.layer3
        self.layer4 = net.layer4

    def forward(self, x) -> list[torch.Tensor]:
        c1 = self.stem(x)
        c2 = self.layer1(self.pool(c1))
        c3 = self.layer2(c2)
        c4 = self.layer3(c3)
        c5 = self.layer4(c4)
        return [c1, c2, c3, c4, c5]


def _conv_block(in_ch: int, out_ch: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(in_ch, out_ch, 3, padding=1, bias=False),
        nn.BatchNorm2d(out_ch),
        nn.ReLU(inplace=True),
        nn.Conv2d(out_ch, out_ch, 3, padding=1, bias=False),
        nn.BatchNorm2d(out_ch),
        nn.ReLU(inplace=True),
    )


def _upsample_to(x: torch.Tensor, ref: torch.Tensor) -> torch.Tensor:
    return F.interpolate(x, size=ref.shape[-2:], mode="bilinear",
                         align_corners=False)


class UNet(nn.Module):
    def __init__(self, n_classes: int, pretrained: bool):
        super().__init__()
        self.encoder = ResNetEncoder(pretrained)
        enc = self.encoder.channels
        dec = (256, 128, 64, 32)
        self.up4 = _conv_block(enc[4] + enc[3], dec[0])
        self.up3 = _conv_block(dec[0] + enc[2], dec[1])
        self.up2 = _conv_block(dec[1] + enc[1], dec[2])
        self.up1 = _conv_block(dec[2] + enc[0], dec[3])
        self.head = nn.Conv2d(dec[3], n_classes, 1)

    def forward(self, x):
        c1, c2, c3, c4, c5 = self.encoder(x)
        d = self.up4(torch.cat([_upsample_to(c5, c4), c4], dim=1))
        d = self.up3(torch.cat([_upsample_to(d, c3), c3], dim=1))
        d = self.up2(torch.cat([_upsample_to(d, c2), c2], dim=1))
        d = self.up1(torch.cat([_upsample_to(d, c1), c1], dim=1))
        return _upsample_to(self.head(d), x)


class UNetPlusPlus(nn.Module):
    """Nested dense skip decoder. Node (i, j) sits at encoder depth i and
    re-aggregates all shallower nodes on its row plus an upsampled deeper
    one; the head reads the densest top-row node."""

    def __init__(self, n_classes: int, pretrained: bool):
        super().__init__()
        self.encoder = ResNetEncoder(pretrained)
        self.lateral = nn.ModuleList([
            nn.Conv2d(ch, width, 1)
            for ch, width in zip(self.encoder.channels, (32, 64, 128, 256, 512))
        ])
        widths = (32, 64, 128, 256, 512)
        self.nodes = nn.ModuleDict()
        for i in range(4):          # row (depth)
            for j in range(1, 4 - i + 1):   # column (aggregation stage)
                in_ch = widths[i] * j + widths[i + 1]
                self.nodes[f"{i}_{j}"] = _conv_block(in_ch, widths[i])
        self.head = nn.Conv2d(widths[0], n_classes, 1)

    def forward(self, x):
        feats = self.encoder(x)
        grid = {f"{i}_0": lat(f) for i, (f, lat) in
                enumerate(zip(feats, self.lateral))}
        for j in range(1, 5):
            for i in range(0, 5 - j):
                row = [grid[f"{i}_{k}"] for k in range(j)]
                below = _upsample_to(grid[f"{i + 1}_{j - 1}"], row[0])
                grid[f"{i}_{j}"] = self.nodes[f"{i}_{j}"](
                    torch.cat(row + [below], dim=1))
        return _upsample_to(self.head(grid["0_4"]), x)


class DeepLabV3Plus(nn.Module):
    """ASPP over a dilated stride-8 backbone, refined with stride-4
    low-level features."""

    def __init__(self, n_classes: int, pretrained: bool):
        super().__init__()
        weights = (torchvision.models.ResNet50_Weights.IMAGENET1K_V1
                   if pretrained else None)
        net = torchvision.models.resnet50(
            weights=weights, replace_stride_with_dilation=[False, True, True])
        self.stem = nn.Sequential(net.conv1, net.bn1, net.relu, net.maxpool)
        self.layer1 = net.layer1
        self.layers = nn.Sequential(net.layer2, net.layer3, net.layer4)
        self.aspp = ASPP(2048, [12, 24, 36], out_channels=256)
        self.reduce = nn.Sequential(
            nn.Conv2d(256, 48, 1, bias=False),
            nn.BatchNorm2d(48),
            nn.ReLU(inplace=True),
        )
        self.fuse = _conv_block(256 + 48, 256)
        self.head = nn.Conv2d(256, n_classes, 1)

    def forward(self, x):
        low = self.layer1(self.stem(x))
        deep = self.aspp(self.layers(low))
        deep = _upsample_to(deep, low)
        d = self.fuse(torch.cat([deep, self.reduce(low)], dim=1))
        return _upsample_to(self.head(d), x)


class DeepLabV3(nn.Module):
    def __init__(self, n_classes: int, pretrained: bool):
        super().__init__()
        backbone_weights = (torchvision.models.ResNet50_Weights.IMAGENET1K_V1
                            if pretrained else None)
        self.net = torchvision.models.segmentation.deeplabv3_resnet50(
            weights=None, weights_backbone=backbone_weights,
            num_classes=n_classes)

    def forward(self, x):
        return self.net(x)["out"]


def build_model(name: str, n_classes: int, pretrained: bool = False) -> nn.Module:
    builders = {
        "deeplabv3": DeepLabV3,
        "deeplabv3plus": DeepLabV3Plus,
        "unet": UNet,
        "unetpp": UNetPlusPlus,
    }
    if name not in builders:
        raise ConfigError(f"unknown model {name!r}")
    return builders[name](n_classes, pretrained)


def freeze_batchnorm(model: nn.Module) -> None:
    """Keep normalization layers in eval mode."""
    for module in model.modules():
        if isinstance(module, nn.modules.batchnorm._BatchNorm):
            module.eval()


def freeze_pooled_batchnorm(model: nn.Module) -> bool:
    """Put norm layers inside global-pool branches in eval mode.

    Spatial batch norm copes with single-sample batches (statistics come
    from H x W), but a global-pool branch collapses that to one value per
    channel, where batch statistics are undefined. Only those layers are
    frozen; the following projection layer renormalizes their output.
    Returns whether any such branch exists.
    """
    from torchvision.models.segmentation.deeplabv3 import ASPPPooling

    found = False
    for module in model.modules():
        if isinstance(module, ASPPPooling):
            freeze_batchnorm(module)
            found = True
    return found
