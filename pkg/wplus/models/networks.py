"""
Torch modules behind the generator and the perceptual feature extractor.

Parameter names are the checkpoint tensor names, so ``state_dict()`` is the
checkpoint table. Every module can refill its parameters from a seeded
``torch.Generator`` via ``reset_parameters``; draws happen in float32 in
registration order so a seed always yields the same float32 weights.
"""

import math

import torch
import torch.nn.functional as F
from torch import nn

LRELU_SLOPE = 0.2
HE_GAIN = math.sqrt(2.0)
NOISE_SCALE_STD = 0.1
RGB_GAIN = 0.5


def _gaussian_(param: torch.Tensor, generator: torch.Generator, std: float) -> None:
    sample = torch.randn(param.shape, generator=generator, dtype=torch.float32) * std
    with torch.no_grad():
        param.copy_(sample.to(param.dtype))


class MappingNetwork(nn.Module):
    """Fully connected z -> w network, leaky ReLU after every layer."""

    def __init__(self, style_dim: int, num_layers: int, device=None):
        super().__init__()
        self.num_layers = num_layers
        for i in range(num_layers):
            self.add_module(f"fc{i}", nn.Linear(style_dim, style_dim, device=device))

    def reset_parameters(self, generator: torch.Generator) -> None:
        for i in range(self.num_layers):
            fc = getattr(self, f"fc{i}")
            _gaussian_(fc.weight, generator, HE_GAIN / math.sqrt(fc.in_features))
            with torch.no_grad():
                fc.bias.zero_()

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        x = z
        for i in range(self.num_layers):
            x = F.leaky_relu(getattr(self, f"fc{i}")(x), LRELU_SLOPE)
        return x


class SynthesisLayer(nn.Module):
    """
    One style-modulation site: optional nearest x2 upsample, 3x3 conv, scaled
    noise, leaky ReLU, instance norm, then per-channel scale/shift from w.
    """

    def __init__(self, in_channels: int, out_channels: int, style_dim: int, upsample: bool, style_gain: float,
                 device=None):
        super().__init__()
        self.upsample = upsample
        self.style_gain = style_gain
        self.conv = nn.Conv2d(in_channels, out_channels, kernel_size=3, padding=1, device=device)
        self.style = nn.Linear(style_dim, 2 * out_channels, device=device)
        self.noise_scale = nn.Parameter(torch.empty(out_channels, device=device))

    def reset_parameters(self, generator: torch.Generator) -> None:
        fan_in = self.conv.in_channels * 9
        _gaussian_(self.conv.weight, generator, HE_GAIN / math.sqrt(fan_in))
        _gaussian_(self.style.weight, generator, self.style_gain / math.sqrt(self.style.in_features))
        _gaussian_(self.noise_scale, generator, NOISE_SCALE_STD)
        channels = self.conv.out_channels
        with torch.no_grad():
            self.conv.bias.zero_()
            self.style.bias[:channels].fill_(1.0)
            self.style.bias[channels:].zero_()

    def forward(self, x: torch.Tensor, w: torch.Tensor, noise: torch.Tensor) -> torch.Tensor:
        if self.upsample:
            x = F.interpolate(x, scale_factor=2, mode="nearest")
        x = self.conv(x)
        x = x + self.noise_scale.view(1, -1, 1, 1) * noise
        x = F.leaky_relu(x, LRELU_SLOPE)
        x = F.instance_norm(x, eps=1e-8)
        scale, shift = self.style(w).chunk(2, dim=1)
        return x * scale[:, :, None, None] + shift[:, :, None, None]


class SynthesisNetwork(nn.Module):
    def __init__(self, channels: list[int], style_dim: int, style_gains: list[float], device=None):
        super().__init__()
        self.num_layers = len(channels)
        self.const = nn.Parameter(torch.empty(1, channels[0], 4, 4, device=device))
        in_channels = channels[0]
        for i, out_channels in enumerate(channels):
            upsample = i > 0 and i % 2 == 0
            layer = SynthesisLayer(in_channels, out_channels, style_dim, upsample, style_gains[i], device=device)
            self.add_module(f"layer{i}", layer)
            in_channels = out_channels
        self.to_rgb = nn.Conv2d(in_channels, 3, kernel_size=1, device=device)

    def reset_parameters(self, generator: torch.Generator) -> None:
        _gaussian_(self.const, generator, 1.0)
        for i in range(self.num_layers):
            getattr(self, f"layer{i}").reset_parameters(generator)
        _gaussian_(self.to_rgb.weight, generator, RGB_GAIN / math.sqrt(self.to_rgb.in_channels))
        with torch.no_grad():
            self.to_rgb.bias.zero_()

    def forward(self, rows: torch.Tensor, noise: list[torch.Tensor]) -> torch.Tensor:
        """rows: (B, L, D). Returns (B, 3, H, W) in the native [-1, 1] convention."""
        x = self.const.expand(rows.shape[0], -1, -1, -1)
        for i in range(self.num_layers):
            x = getattr(self, f"layer{i}")(x, rows[:, i], noise[i])
        return self.to_rgb(x)


class StyleGenerator(nn.Module):
    def __init__(self, style_dim: int, mapping_layers: int, channels: list[int], style_gains: list[float],
                 device=None):
        super().__init__()
        self.mapping = MappingNetwork(style_dim, mapping_layers, device=device)
        self.synthesis = SynthesisNetwork(channels, style_dim, style_gains, device=device)

    def reset_parameters(self, generator: torch.Generator) -> None:
        self.mapping.reset_parameters(generator)
        self.synthesis.reset_parameters(generator)


class FeatureStage(nn.Module):
    """Sequence of 2x average pools and 3x3 conv + ReLU blocks; the tap is the last ReLU output."""

    def __init__(self, plan: list[int | str], in_channels: int, device=None):
        super().__init__()
        self.plan = plan
        convs = 0
        for item in plan:
            if item == "pool":
                continue
            convs += 1
            self.add_module(f"conv{convs}", nn.Conv2d(in_channels, item, kernel_size=3, padding=1, device=device))
            in_channels = item
        self.num_convs = convs
        self.out_channels = in_channels

    def reset_parameters(self, generator: torch.Generator) -> None:
        for k in range(1, self.num_convs + 1):
            conv = getattr(self, f"conv{k}")
            _gaussian_(conv.weight, generator, HE_GAIN / math.sqrt(conv.in_channels * 9))
            with torch.no_grad():
                conv.bias.zero_()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        k = 0
        for item in self.plan:
            if item == "pool":
                x = F.avg_pool2d(x, 2)
            else:
                k += 1
                x = F.relu(getattr(self, f"conv{k}")(x))
        return x


class FeatureExtractorNetwork(nn.Module):
    """
    Four taps shaped like conv1_1, conv1_2, conv3_2 and conv4_2 of a VGG-16:
    two full-resolution stages, one at 1/4 and one at 1/8 of the input side.
    """

    IMAGENET_MEAN = (0.485, 0.456, 0.406)
    IMAGENET_STD = (0.229, 0.224, 0.225)

    def __init__(self, widths: tuple[int, int, int, int], device=None):
        super().__init__()
        c1, c2, c3, c4 = widths
        plans = [[c1], [c2], ["pool", max(c3 // 2, 1), "pool", c3], ["pool", c4, c4]]
        stages = {}
        in_channels = 3
        for j, plan in enumerate(plans, start=1):
            stage = FeatureStage(plan, in_channels, device=device)
            stages[f"stage{j}"] = stage
            in_channels = stage.out_channels
        self.fx = nn.ModuleDict(stages)

    def reset_parameters(self, generator: torch.Generator) -> None:
        for stage in self.fx.values():
            stage.reset_parameters(generator)

    def forward(self, image: torch.Tensor) -> list[torch.Tensor]:
        """image: (B, 3, H, W) in [0, 1]."""
        mean = image.new_tensor(self.IMAGENET_MEAN).view(1, 3, 1, 1)
        std = image.new_tensor(self.IMAGENET_STD).view(1, 3, 1, 1)
        x = (image - mean) / std
        taps = []
        for stage in self.fx.values():
            x = stage(x)
            taps.append(x)
        return taps
