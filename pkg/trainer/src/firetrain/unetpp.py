"""UNet++ segmentation network: nested, densely connected skip pathways.

Node X[i][j] at depth i and nesting step j consumes every earlier node of its
row plus the upsampled node one level below, so each skip carries
progressively refined features. The default encoder is a compact
from-scratch convolutional pyramid sized for CPU training; an
EfficientNet-B1 encoder (random init, torchvision) is available for fidelity
runs.
"""

from __future__ import annotations

import torch
from torch import nn

ENCODERS = ("small-conv", "efficientnet-b1")


class ConvBlock(nn.Module):
    def __init__(self, in_ch, out_ch):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv2d(in_ch, out_ch, 3, padding=1, bias=False),
            nn.BatchNorm2d(out_ch),
            nn.ReLU(inplace=True),
            nn.Conv2d(out_ch, out_ch, 3, padding=1, bias=False),
            nn.BatchNorm2d(out_ch),
            nn.ReLU(inplace=True),
        )

    def forward(self, x):
        return self.net(x)


class SmallConvEncoder(nn.Module):
    """Feature pyramid at strides 1, 2, 4, ... from plain conv blocks."""

    def __init__(self, in_channels, widths):
        super().__init__()
        self.widths = tuple(widths)
        blocks = [ConvBlock(in_channels, widths[0])]
        for a, b in zip(widths, widths[1:]):
            blocks.append(ConvBlock(a, b))
        self.blocks = nn.ModuleList(blocks)
        self.pool = nn.MaxPool2d(2)

    def forward(self, x):
        features = []
        for i, block in enumerate(self.blocks):
            if i > 0:
                x = self.pool(x)
            x = block(x)
            features.append(x)
        return features


class EfficientNetB1Encoder(nn.Module):
    """Torchvision EfficientNet-B1 taps at strides 2/4/8 plus a stride-1 stem.

    Weights are randomly initialized; pretrained weights are an optional
    fidelity concern, never a requirement.
    """

    def __init__(self, in_channels, depth=3):
        super().__init__()
        from torchvision.models import efficientnet_b1

        if depth != 3:
            raise ValueError("efficientnet-b1 wiring supports depth 3")
        backbone = efficientnet_b1(weights=None)
        first = backbone.features[0][0]
        backbone.features[0][0] = nn.Conv2d(
            in_channels, first.out_channels, first.kernel_size, first.stride, first.padding, bias=False
        )
        self.stem = ConvBlock(in_channels, 16)  # stride-1 features for the top row
        self.stage1 = backbone.features[:2]  # stride 2, 16 ch
        self.stage2 = backbone.features[2]  # stride 4, 24 ch
        self.stage3 = backbone.features[3]  # stride 8, 40 ch
        self.widths = (16, 16, 24, 40)

    def forward(self, x):
        f0 = self.stem(x)
        f1 = self.stage1(x)
        f2 = self.stage2(f1)
        f3 = self.stage3(f2)
        return [f0, f1, f2, f3]


class UNetPlusPlus(nn.Module):
    def __init__(self, in_channels=8, depth=3, encoder="small-conv", base_width=16):
        super().__init__()
        if encoder not in ENCODERS:
            raise ValueError(f"unknown encoder {encoder!r}; options: {ENCODERS}")
        if depth < 1:
            raise ValueError("depth must be >= 1")
        self.depth = depth
        self.encoder_name = encoder
        if encoder == "small-conv":
            widths = tuple(base_width * (2**i) for i in range(depth + 1))
            self.encoder = SmallConvEncoder(in_channels, widths)
        else:
            self.encoder = EfficientNetB1Encoder(in_channels, depth)
        widths = self.encoder.widths
        self.up = nn.Upsample(scale_factor=2, mode="nearest")
        # nodes[(i, j)] for j >= 1: inputs are j same-level maps + one upsampled map
        self.nodes = nn.ModuleDict()
        for j in range(1, depth + 1):
            for i in range(0, depth + 1 - j):
                in_ch = widths[i] * j + widths[i + 1]
                self.nodes[f"{i}_{j}"] = ConvBlock(in_ch, widths[i])
        self.head = nn.Conv2d(widths[0], 1, kernel_size=1)

    def forward(self, x):
        grid = {}
        for i, feat in enumerate(self.encoder(x)):
            grid[(i, 0)] = feat
        for j in range(1, self.depth + 1):
            for i in range(0, self.depth + 1 - j):
                skips = [grid[(i, k)] for k in range(j)]
                below = self.up(grid[(i + 1, j - 1)])
                grid[(i, j)] = self.nodes[f"{i}_{j}"](torch.cat(skips + [below], dim=1))
        return self.head(grid[(0, self.depth)]).squeeze(1)

    def predict_proba(self, x):
        with torch.no_grad():
            return torch.sigmoid(self.forward(x))


def masked_bce_loss(logits, targets, valid):
    """Cross entropy over valid pixels only; invalid labels cannot leak in."""
    per_pixel = nn.functional.binary_cross_entropy_with_logits(
        logits, targets.float(), reduction="none"
    )
    mask = valid.float()
    total = mask.sum()
    if total == 0:
        raise ValueError("batch has no valid pixels")
    return (per_pixel * mask).sum() / total
