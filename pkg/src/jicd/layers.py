"""Building blocks for the transforms."""

import torch
import torch.nn as nn
import torch.nn.functional as F


class GDN(nn.Module):
    """Generalized divisive normalization (or its inverse).

    ``y_c = x_c / sqrt(beta_c + sum_k gamma_ck x_k^2)``. Parameters are stored
    as square roots so both stay non-negative without clamping, which keeps the
    layer smooth for gradient checks.
    """

    def __init__(self, channels: int, inverse: bool = False, gamma_init: float = 0.1):
        super().__init__()
        self.inverse = inverse
        self.beta_sqrt = nn.Parameter(torch.ones(channels))
        self.gamma_sqrt = nn.Parameter((gamma_init ** 0.5) * torch.eye(channels))

    def forward(self, x):
        c = x.shape[1]
        beta = self.beta_sqrt ** 2 + 1e-6
        gamma = (self.gamma_sqrt ** 2).reshape(c, c, 1, 1)
        norm = torch.sqrt(F.conv2d(x * x, gamma, beta))
        return x * norm if self.inverse else x / norm


class MaskedConv2d(nn.Conv2d):
    """Convolution that only sees positions strictly before the centre in raster order."""

    def __init__(self, in_channels, out_channels, kernel_size=5):
        super().__init__(in_channels, out_channels, kernel_size, padding=kernel_size // 2)
        mask = torch.ones_like(self.weight)
        k = kernel_size // 2
        mask[:, :, k, k:] = 0
        mask[:, :, k + 1:, :] = 0
        self.register_buffer("mask", mask, persistent=False)

    def masked_weight(self):
        return self.weight * self.mask

    def forward(self, x):
        return F.conv2d(x, self.masked_weight(), self.bias, padding=self.padding)


def conv(cin, cout, kernel=5, stride=2):
    return nn.Conv2d(cin, cout, kernel, stride=stride, padding=kernel // 2)


def deconv(cin, cout, kernel=5, stride=2):
    return nn.ConvTranspose2d(cin, cout, kernel, stride=stride, padding=kernel // 2,
                              output_padding=stride - 1)


class ResidualUnit(nn.Module):
    def __init__(self, channels):
        super().__init__()
        half = max(channels // 2, 1)
        self.body = nn.Sequential(
            nn.Conv2d(channels, half, 1), nn.ReLU(),
            nn.Conv2d(half, half, 3, padding=1), nn.ReLU(),
            nn.Conv2d(half, channels, 1),
        )

    def forward(self, x):
        return F.relu(x + self.body(x))


class AttentionBlock(nn.Module):
    """Simplified attention: a trunk gated by a sigmoid mask branch, added residually."""

    def __init__(self, channels):
        super().__init__()
        self.trunk = nn.Sequential(*(ResidualUnit(channels) for _ in range(3)))
        self.mask = nn.Sequential(*(ResidualUnit(channels) for _ in range(3)),
                                  nn.Conv2d(channels, channels, 1))

    def forward(self, x):
        return x + self.trunk(x) * torch.sigmoid(self.mask(x))
