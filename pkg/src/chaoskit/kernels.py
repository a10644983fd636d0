"""Symmetric reaction kernels on the unit torus.

Every kernel depends on the displacement only through its minimum-image
representative, so ``phi(dx) == phi(-dx)`` holds bit-for-bit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

SHAPES = ("tophat", "constant", "gaussian")

# periodic images kept per coordinate for the wrapped gaussian
GAUSSIAN_IMAGES = 3


@dataclass(frozen=True)
class Kernel:
    """Reaction-rate kernel.

    ``rate`` is the peak rate. ``radius`` is used by ``tophat`` and ``width``
    by ``gaussian``; both are in torus units (side length 1).
    """

    shape: str
    rate: float
    radius: float | None = None
    width: float | None = None

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"unknown kernel shape {self.shape!r}")
        if not (self.rate >= 0 and math.isfinite(self.rate)):
            raise ValueError(f"kernel rate must be finite and >= 0, got {self.rate}")
        if self.shape == "tophat" and not (self.radius is not None and self.radius > 0):
            raise ValueError("tophat kernel needs radius > 0")
        if self.shape == "gaussian" and not (self.width is not None and self.width > 0):
            raise ValueError("gaussian kernel needs width > 0")

    @property
    def compact(self) -> bool:
        return self.shape == "tophat"

    def describe(self) -> str:
        if self.shape == "tophat":
            return f"tophat(radius={self.radius!r}, rate={self.rate!r})"
        if self.shape == "gaussian":
            return f"gaussian(width={self.width!r}, rate={self.rate!r})"
        return f"constant(rate={self.rate!r})"


def min_image(dx):
    """Shortest periodic representative of ``dx``, componentwise in [-1/2, 1/2]."""
    dx = np.asarray(dx, dtype=float)
    return dx - np.round(dx)


def eval_kernel(kernel: Kernel, dx):
    """Evaluate the kernel at displacement(s) ``dx`` with shape ``(..., d)``.

    A scalar or 1-element sequence is treated as a point on the 1-torus.
    Returns an array of shape ``dx.shape[:-1]`` (a float for a single point).
    """
    dx = np.asarray(dx, dtype=float)
    if dx.ndim == 0:
        dx = dx[None]
    w = min_image(dx)
    if kernel.shape == "constant":
        out = np.full(w.shape[:-1], kernel.rate)
    elif kernel.shape == "tophat":
        r2 = np.sum(w * w, axis=-1)
        out = np.where(r2 <= kernel.radius**2, kernel.rate, 0.0)
    else:
        out = kernel.rate * _wrapped_gaussian(w, kernel.width)
    if out.ndim == 0:
        return float(out)
    return out


def _wrapped_gaussian(w, width):
    # product of 1-d wrapped sums; w already in [-1/2, 1/2]. The sum is even,
    # so evaluating at |w| makes w and -w bitwise equal.
    shifts = np.arange(-GAUSSIAN_IMAGES, GAUSSIAN_IMAGES + 1, dtype=float)
    z = (np.abs(w)[..., None] + shifts) / width
    per_axis = np.exp(-0.5 * z * z).sum(axis=-1)
    return np.prod(per_axis, axis=-1)


def kernel_norms(kernel: Kernel, d: int = 1) -> tuple[float, float]:
    """Closed-form ``(L1, Linf)`` norms of the kernel on the d-torus."""
    if d < 1:
        raise ValueError("dimension must be >= 1")
    rate = kernel.rate
    if kernel.shape == "constant":
        return rate, rate
    if kernel.shape == "tophat":
        return rate * _ball_cell_volume(kernel.radius, d), rate
    # full gaussian mass; images beyond the cutoff carry < 1e-9 for width <= 0.3
    l1 = rate * (math.sqrt(2.0 * math.pi) * kernel.width) ** d
    linf = rate * float(_wrapped_gaussian(np.zeros((1, 1)), kernel.width)[0]) ** d
    return l1, linf


def total_linf(kernels) -> float:
    """Sum of sup norms over a collection of kernels."""
    return float(sum(kernel_norms(k)[1] for k in kernels))


def _ball_cell_volume(r: float, d: int) -> float:
    """Volume of {x in [-1/2,1/2]^d : |x| <= r}."""
    if r <= 0.5:
        return math.pi ** (d / 2) * r**d / special.gamma(d / 2 + 1)
    if r * r >= d / 4:
        return 1.0
    if d == 1:
        return 1.0
    if d == 2:
        return _disk_square_area(r)
    if d == 3:
        # slice along one axis: each slice is a disk clipped to the unit square
        def area(x):
            return _disk_square_area(math.sqrt(max(r * r - x * x, 0.0)))

        kinks = [math.sqrt(r * r - q) for q in (0.25, 0.5) if r * r > q]
        lim = min(r, 0.5)
        pts = sorted(x for x in kinks if 0 < x < lim)
        val, _ = integrate.quad(area, 0.0, lim, points=pts or None, epsabs=1e-13, epsrel=1e-12)
        return 2.0 * val
    raise NotImplementedError("tophat radius > 1/2 only supported for d <= 3")


def _disk_square_area(rho: float) -> float:
    """Area of a disk of radius ``rho`` clipped to the centred unit square."""
    if rho <= 0.5:
        return math.pi * rho * rho
    if rho * rho >= 0.5:
        return 1.0
    seg = rho * rho * math.acos(0.5 / rho) - 0.5 * math.sqrt(rho * rho - 0.25)
    return math.pi * rho * rho - 4.0 * seg


def grid_displacements(M: int, d: int) -> np.ndarray:
    """Displacements ``c/M`` for every grid offset ``c``, shape ``(M,)*d + (d,)``."""
    axes = [np.arange(M) / M] * d
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack(mesh, axis=-1)


def kernel_table(kernel: Kernel, M: int, d: int = 1) -> np.ndarray:
    """Kernel sampled at every grid offset (circulant generator)."""
    return np.asarray(eval_kernel(kernel, grid_displacements(M, d)), dtype=float).reshape((M,) * d)


def discrete_l1(kernel: Kernel, M: int, d: int = 1) -> float:
    """Grid quadrature of the kernel; the effective mass-action constant on an M^d grid."""
    return float(kernel_table(kernel, M, d).sum()) / M**d
