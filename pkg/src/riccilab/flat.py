"""Static flat Cartesian grids: a truncated window of R^n and the flat torus.

These carry functions that are not rotationally symmetric, which the
log-Sobolev checks and the torus entropy need.  The window uses Simpson
weights and fourth-order differences; the torus uses trapezoid weights and
spectral derivatives (both are exact for the respective smooth classes up to
truncation).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GridMismatch


def _simpson_weights(n: int, h: float) -> np.ndarray:
    if n % 2 == 0:
        raise ValueError("Simpson quadrature needs an odd number of points")
    w = np.full(n, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    return w * h / 3.0


def _d1_4th(f: np.ndarray, h: float, axis: int) -> np.ndarray:
    f = np.moveaxis(f, axis, 0)
    d = np.empty_like(f)
    d[2:-2] = (f[:-4] - 8 * f[1:-3] + 8 * f[3:-1] - f[4:]) / (12 * h)
    # one-sided fourth-order closures at the two outermost rows
    d[0] = (-25 * f[0] + 48 * f[1] - 36 * f[2] + 16 * f[3] - 3 * f[4]) / (12 * h)
    d[1] = (-3 * f[0] - 10 * f[1] + 18 * f[2] - 6 * f[3] + f[4]) / (12 * h)
    d[-1] = -(-25 * f[-1] + 48 * f[-2] - 36 * f[-3] + 16 * f[-4] - 3 * f[-5]) / (12 * h)
    d[-2] = -(-3 * f[-1] - 10 * f[-2] + 18 * f[-3] - 6 * f[-4] + f[-5]) / (12 * h)
    return np.moveaxis(d, 0, axis)


@dataclass(frozen=True, eq=False)
class FlatGrid:
    """Uniform grid with ``N`` points per axis in ``dim`` dimensions.

    ``periodic=False``: the window ``[-extent, extent]^dim`` including endpoints.
    ``periodic=True``: the torus of side ``extent``.
    """

    N: int
    extent: float
    dim: int = 2
    periodic: bool = False
    t: float = 0.0

    axis: np.ndarray = field(init=False, repr=False)

    reduction = "Flat"

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError("dim must be 1, 2 or 3")
        if self.N < 5 or not self.extent > 0:
            raise ValueError("need N >= 5 and a positive extent")
        if self.periodic:
            h = self.extent / self.N
            axis = np.arange(self.N) * h
            w1 = np.full(self.N, h)
        else:
            axis = np.linspace(-self.extent, self.extent, self.N)
            h = axis[1] - axis[0]
            w1 = _simpson_weights(self.N, h)
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "h", h)
        w = w1
        for _ in range(self.dim - 1):
            w = np.multiply.outer(w, w1)
        object.__setattr__(self, "w", w)
        if self.periodic:
            k = 2 * math.pi * np.fft.fftfreq(self.N, d=h)
            object.__setattr__(self, "wavenumbers", k)

    @property
    def n(self) -> int:
        return self.dim

    @property
    def shape(self):
        return (self.N,) * self.dim

    @property
    def closed(self) -> bool:
        return self.periodic

    def coords(self):
        return np.meshgrid(*([self.axis] * self.dim), indexing="ij")

    def points(self) -> np.ndarray:
        """Array of shape ``grid + (dim,)``."""
        return np.stack(self.coords(), axis=-1)

    def radius_sq(self) -> np.ndarray:
        return sum(c * c for c in self.coords())

    def check(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape != self.shape:
            raise GridMismatch(f"grid has shape {self.shape}, got {f.shape}")
        return f

    def weights(self) -> np.ndarray:
        return self.w

    def integrate(self, f) -> float:
        return float(np.sum(self.w * f))

    def volume(self) -> float:
        return float(self.w.sum())

    def scalar(self) -> np.ndarray:
        return np.zeros(self.shape)

    def grad(self, f):
        f = self.check(f)
        if self.periodic:
            F = np.fft.fftn(f)
            out = []
            for ax in range(self.dim):
                shape = [1] * self.dim
                shape[ax] = self.N
                out.append(np.real(np.fft.ifftn(1j * self.wavenumbers.reshape(shape) * F)))
            return out
        return [_d1_4th(f, self.h, ax) for ax in range(self.dim)]

    def grad_sq(self, f) -> np.ndarray:
        return sum(g * g for g in self.grad(f))

    def laplacian(self, f) -> np.ndarray:
        f = self.check(f)
        if self.periodic:
            k2 = self.symbol()
            return np.real(np.fft.ifftn(-k2 * np.fft.fftn(f)))
        return sum(_d1_4th(g, self.h, ax) for ax, g in enumerate(self.grad(f)))

    def symbol(self) -> np.ndarray:
        """|xi|^2 on the FFT grid (periodic only)."""
        k2 = self.wavenumbers ** 2
        out = k2
        for _ in range(self.dim - 1):
            out = np.add.outer(out, k2)
        return out

    def scaled(self, lam: float) -> "FlatGrid":
        """The metric ``lam * g`` realized by stretching coordinates."""
        return FlatGrid(self.N, self.extent * math.sqrt(lam), self.dim, self.periodic, self.t)


def flat_window(N: int = 257, half_width: float = 8.0, dim: int = 2) -> FlatGrid:
    return FlatGrid(N, half_width, dim, False)


def flat_torus_grid(N: int = 64, side: float = 2 * math.pi, dim: int = 2) -> FlatGrid:
    return FlatGrid(N, side, dim, True)
