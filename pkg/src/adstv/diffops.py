"""Discrete differential operators and smoothing kernels.

Gradients use forward differences with Neumann boundaries (the difference
across the last column/row is zero).  The divergence is the exact negative
adjoint of that gradient, so <grad f, p> == <f, -div p> holds to machine
precision.  All smoothing is correlation with mirror (edge-duplicating)
extension.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .image import Image

__all__ = [
    "GradientField",
    "Kernel",
    "delta_kernel",
    "gaussian_kernel",
    "grad_forward",
    "div_backward",
    "sobel_grad",
    "convolve",
    "convolve_channel",
    "reflect_index",
]


@dataclass
class GradientField:
    """Per-pixel x and y derivative planes, each shaped (H, W)."""

    gx: np.ndarray
    gy: np.ndarray

    def __post_init__(self):
        self.gx = np.asarray(self.gx, dtype=np.float64)
        self.gy = np.asarray(self.gy, dtype=np.float64)
        if self.gx.shape != self.gy.shape or self.gx.ndim != 2:
            raise ValueError("gx and gy must be matching 2-D arrays")


@dataclass
class Kernel:
    """Nonnegative square convolution kernel with odd support and unit sum."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValueError("kernel must be square")
        if w.shape[0] % 2 == 0:
            raise ValueError("kernel support must be odd")
        if np.any(w < 0):
            raise ValueError("kernel weights must be nonnegative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("kernel weights must sum to 1")
        self.weights = w

    @property
    def support(self):
        return self.weights.shape[0]

    @property
    def radius(self):
        return self.weights.shape[0] // 2

    def taps(self):
        """Row-major list of ((dy, dx), weight) pairs."""
        r = self.radius
        out = []
        for iy in range(self.weights.shape[0]):
            for ix in range(self.weights.shape[1]):
                out.append(((iy - r, ix - r), self.weights[iy, ix]))
        return out


def delta_kernel():
    """The 1x1 identity kernel."""
    return Kernel(np.ones((1, 1)))


def gaussian_kernel(sigma, support):
    """Sampled 2-D Gaussian on a support x support grid, normalized to sum 1.

    support must be odd; support 1 returns the delta kernel regardless of
    sigma.
    """
    if support % 2 == 0 or support < 1:
        raise ValueError("support must be odd and positive")
    if support == 1:
        return delta_kernel()
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    r = support // 2
    t = np.arange(-r, r + 1, dtype=np.float64)
    g = np.exp(-(t**2) / (2.0 * sigma**2))
    w = np.outer(g, g)
    return Kernel(w / w.sum())


def grad_forward(channel):
    """Forward-difference gradient of a single channel with Neumann edges."""
    f = np.asarray(channel, dtype=np.float64)
    gx = np.zeros_like(f)
    gy = np.zeros_like(f)
    gx[:, :-1] = f[:, 1:] - f[:, :-1]
    gy[:-1, :] = f[1:, :] - f[:-1, :]
    return GradientField(gx=gx, gy=gy)


def div_backward(p):
    """Backward-difference divergence, the exact negative adjoint of
    grad_forward."""
    px, py = p.gx, p.gy
    out = np.zeros_like(px)
    # First column copies, interior differences, last column closes the
    # telescope so that the adjoint identity holds exactly.  A size-1 axis
    # has an identically zero forward difference, hence no contribution.
    if px.shape[1] > 1:
        out[:, 0] += px[:, 0]
        out[:, 1:-1] += px[:, 1:-1] - px[:, :-2]
        out[:, -1] += -px[:, -2]
    if py.shape[0] > 1:
        out[0, :] += py[0, :]
        out[1:-1, :] += py[1:-1, :] - py[:-2, :]
        out[-1, :] += -py[-2, :]
    return out


_SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])


def sobel_grad(channel):
    """Unnormalized Sobel derivatives with mirror extension."""
    f = np.asarray(channel, dtype=np.float64)
    gx = ndimage.correlate(f, _SOBEL_X, mode="reflect")
    gy = ndimage.correlate(f, _SOBEL_X.T, mode="reflect")
    return GradientField(gx=gx, gy=gy)


def convolve_channel(channel, kernel):
    """Correlate one channel with a kernel under mirror extension."""
    f = np.asarray(channel, dtype=np.float64)
    if kernel.support == 1:
        return f * kernel.weights[0, 0]
    return ndimage.correlate(f, kernel.weights, mode="reflect")


def convolve(img, kernel):
    """Kernel smoothing applied independently per channel."""
    out = np.stack([convolve_channel(img.data[c], kernel) for c in range(img.channels)])
    return Image(out)


def reflect_index(idx, n):
    """Mirror an integer index into [0, n), duplicating edge samples.

    Follows the half-sample symmetric rule: ... 2 1 0 | 0 1 2 ... n-1 | n-1
    n-2 ...  Accepts arrays.
    """
    if n <= 0:
        raise ValueError("n must be positive")
    m = np.mod(idx, 2 * n)
    return np.where(m >= n, 2 * n - 1 - m, m)
