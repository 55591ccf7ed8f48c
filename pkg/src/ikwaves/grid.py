"""Periodic grids and Fourier-collocation calculus.

All fields are real double-precision arrays on a uniform periodic grid.
Derivatives are exact for the trigonometric interpolant; products are
formed pointwise on the grid and high modes are removed with the 2/3
rule where the caller asks for it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteField


@dataclass(frozen=True)
class PeriodicDomain:
    """A uniform periodic grid on a 1D or 2D torus.

    Parameters
    ----------
    lengths : tuple of float
        Period of the domain along each axis (one or two entries).
    resolution : tuple of int
        Number of grid points along each axis; at least 8 per axis,
        powers of two recommended.

    Spectral machinery (wavenumber grids, the dealias mask) is computed
    once at construction.  Instances are immutable and safe to share
    between threads; all methods are pure functions of their inputs.
    """

    lengths: tuple[float, ...]
    resolution: tuple[int, ...]

    def __post_init__(self):
        lengths = tuple(float(v) for v in self.lengths)
        resolution = tuple(int(n) for n in self.resolution)
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "resolution", resolution)
        if len(lengths) not in (1, 2):
            raise ValueError("only 1D and 2D domains are supported")
        if len(resolution) != len(lengths):
            raise ValueError("lengths and resolution must have equal rank")
        if any(v <= 0 for v in lengths):
            raise ValueError("domain lengths must be positive")
        if any(n < 8 for n in resolution):
            raise ValueError("resolution must be at least 8 per axis")

        dim = len(lengths)
        dx = tuple(L / n for L, n in zip(lengths, resolution))
        # Angular wavenumbers per axis, broadcastable to the full grid.
        axis_k = []
        deriv_k = []
        for ax in range(dim):
            n = resolution[ax]
            k = 2.0 * np.pi * np.fft.fftfreq(n, d=dx[ax])
            shape = [1] * dim
            shape[ax] = n
            axis_k.append(k.reshape(shape))
            kd = k.copy()
            if n % 2 == 0:
                kd[n // 2] = 0.0  # odd derivative of the Nyquist mode is ambiguous
            deriv_k.append(kd.reshape(shape))
        k2 = sum(k * k for k in axis_k)

        # 2/3 rule: drop any mode whose integer index exceeds floor(n/3).
        keep = np.ones(resolution, dtype=bool)
        for ax in range(dim):
            n = resolution[ax]
            idx = np.abs(np.fft.fftfreq(n, d=1.0 / n))
            shape = [1] * dim
            shape[ax] = n
            keep &= idx.reshape(shape) <= n // 3

        object.__setattr__(self, "dx", dx)
        object.__setattr__(self, "_axis_k", tuple(axis_k))
        object.__setattr__(self, "_deriv_k", tuple(deriv_k))
        object.__setattr__(self, "_k2", k2)
        object.__setattr__(self, "_dealias_keep", keep)

    # -- basic descriptors -------------------------------------------------

    @property
    def dim(self) -> int:
        return len(self.lengths)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.resolution

    @property
    def npoints(self) -> int:
        return int(np.prod(self.resolution))

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    def coords(self) -> list[np.ndarray]:
        """Full-shape coordinate arrays, one per axis."""
        axes = [np.arange(n) * d for n, d in zip(self.resolution, self.dx)]
        if self.dim == 1:
            return [axes[0]]
        return list(np.meshgrid(*axes, indexing="ij"))

    def wavenumbers(self, axis: int = 0) -> np.ndarray:
        return self._axis_k[axis]

    @property
    def k_squared(self) -> np.ndarray:
        """|k|^2 on the full grid (the negated Laplacian symbol)."""
        return self._k2

    # -- calculus ----------------------------------------------------------

    def _check_finite(self, f):
        if not np.all(np.isfinite(f)):
            raise NonFiniteField("field contains NaN or Inf")

    def spectral_derivative(self, f: np.ndarray, axis: int = 0, order: int = 1) -> np.ndarray:
        """Exact derivative of the trigonometric interpolant of ``f``.

        ``order`` must be 1 or 2.  First derivatives of a constant are
        identically zero and the result has zero mean.
        """
        if order not in (1, 2):
            raise ValueError("order must be 1 or 2")
        self._check_finite(f)
        spec = np.fft.fftn(f)
        if order == 1:
            spec = spec * (1j * self._deriv_k[axis])
        else:
            spec = spec * (-self._axis_k[axis] ** 2)
        return np.fft.ifftn(spec).real

    def gradient(self, f: np.ndarray) -> np.ndarray:
        """All first derivatives, shape ``(dim,) + grid shape``."""
        self._check_finite(f)
        spec = np.fft.fftn(f)
        out = np.empty((self.dim,) + self.shape)
        for ax in range(self.dim):
            out[ax] = np.fft.ifftn(spec * (1j * self._deriv_k[ax])).real
        return out

    def divergence(self, v: np.ndarray) -> np.ndarray:
        """Divergence of a vector field with leading component axis."""
        acc = None
        for ax in range(self.dim):
            self._check_finite(v[ax])
            term = np.fft.fftn(v[ax]) * (1j * self._deriv_k[ax])
            acc = term if acc is None else acc + term
        return np.fft.ifftn(acc).real

    def laplacian(self, f: np.ndarray) -> np.ndarray:
        self._check_finite(f)
        return np.fft.ifftn(np.fft.fftn(f) * (-self._k2)).real

    def dealias(self, f: np.ndarray) -> np.ndarray:
        """Zero every Fourier mode above 2/3 of Nyquist on any axis (idempotent)."""
        spec = np.fft.fftn(f)
        spec *= self._dealias_keep
        return np.fft.ifftn(spec).real

    # -- reductions ---------------------------------------------------------

    def integrate(self, f: np.ndarray) -> float:
        """Trapezoid-rule integral (exact for the interpolant on a torus)."""
        return float(np.mean(f) * self.volume)

    def inner(self, f: np.ndarray, g: np.ndarray) -> float:
        return self.integrate(f * g)

    def norm(self, f: np.ndarray) -> float:
        """Root-mean-square grid norm."""
        return float(np.sqrt(np.mean(np.square(f))))
