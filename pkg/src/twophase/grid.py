"""Periodic lattice and Fourier differential operators.

Fields are plain numpy arrays sampled on ``Grid.shape``.  A scalar field has
shape ``grid.shape``; a vector field has shape ``(grid.dim, *grid.shape)``.
Every operator transforms over the trailing ``dim`` axes only, so stacks of
fields (extra leading axes) are handled in a single batched FFT call.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


class NonFiniteFieldError(ValueError):
    """Raised when an operator receives NaN or Inf samples."""


class MeanNotZeroError(ValueError):
    """Raised when an operator requiring a mean-zero field gets something else."""


def _check_finite(a: np.ndarray, what: str = "field") -> None:
    if not np.all(np.isfinite(a)):
        bad = np.argwhere(~np.isfinite(a))[0]
        raise NonFiniteFieldError(f"{what} contains non-finite values (first at index {tuple(bad)})")


@dataclass(frozen=True)
class Grid:
    """Uniform periodic lattice on ``[0, L_1) x ... x [0, L_dim)``.

    ``n_points`` and ``length`` accept a scalar (applied to every axis) or one
    entry per axis.
    """

    dim: int
    n_points: tuple[int, ...]
    length: tuple[float, ...] = (1.0,)

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        n = np.atleast_1d(self.n_points).astype(int)
        ell = np.atleast_1d(np.asarray(self.length, dtype=float))
        if n.size == 1:
            n = np.repeat(n, self.dim)
        if ell.size == 1:
            ell = np.repeat(ell, self.dim)
        if n.size != self.dim or ell.size != self.dim:
            raise ValueError("n_points and length need one entry per axis")
        if np.any(n < 8) or np.any(n % 2):
            raise ValueError(f"n_points must be even and >= 8, got {tuple(n)}")
        if np.any(ell <= 0):
            raise ValueError(f"length must be positive, got {tuple(ell)}")
        object.__setattr__(self, "n_points", tuple(int(i) for i in n))
        object.__setattr__(self, "length", tuple(float(x) for x in ell))

    # -- geometry -----------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.n_points

    @property
    def axes(self) -> tuple[int, ...]:
        return tuple(range(-self.dim, 0))

    @property
    def spacing(self) -> np.ndarray:
        return np.array(self.length) / np.array(self.n_points)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def volume(self) -> float:
        return float(np.prod(self.length))

    @cached_property
    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``(dim, *shape)``."""
        axes = [np.arange(n) * h for n, h in zip(self.n_points, self.spacing)]
        return np.array(np.meshgrid(*axes, indexing="ij"))

    # -- spectral tables ----------------------------------------------------

    @cached_property
    def modes(self) -> tuple[np.ndarray, ...]:
        """Integer wavenumbers per axis in FFT layout (last axis halved by rfft)."""
        out = [np.fft.fftfreq(n, 1.0 / n) for n in self.n_points[:-1]]
        out.append(np.fft.rfftfreq(self.n_points[-1], 1.0 / self.n_points[-1]))
        return tuple(m.astype(int) for m in out)

    @cached_property
    def spectral_shape(self) -> tuple[int, ...]:
        return tuple(m.size for m in self.modes)

    @cached_property
    def wavevector(self) -> np.ndarray:
        """Angular wavevector ``2 pi k / L`` broadcast to ``(dim, *spectral_shape)``."""
        ks = [2 * np.pi * m / ell for m, ell in zip(self.modes, self.length)]
        return np.array(np.meshgrid(*ks, indexing="ij"))

    @cached_property
    def _deriv_symbol(self) -> np.ndarray:
        # i*k with the Nyquist mode of each axis removed so odd derivatives stay real
        k = self.wavevector.copy()
        for i, (m, n) in enumerate(zip(self.modes, self.n_points)):
            nyq = np.abs(m) == n // 2
            idx = [slice(None)] * self.dim
            idx[i] = nyq
            k[i][tuple(idx)] = 0.0
        return 1j * k

    @cached_property
    def k_squared(self) -> np.ndarray:
        return np.sum(self.wavevector**2, axis=0)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """True on modes kept by the two-thirds rule (every ``|k_i| <= n_i / 3``)."""
        keep = np.ones(self.spectral_shape, dtype=bool)
        grids = np.meshgrid(*self.modes, indexing="ij")
        for m, n in zip(grids, self.n_points):
            keep &= np.abs(m) <= n / 3
        return keep

    # -- transforms ---------------------------------------------------------

    def fft(self, a: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
        if self.dim == 1:
            return np.fft.rfft(a, axis=-1, out=out)
        return np.fft.rfftn(a, axes=self.axes, out=out)

    def ifft(self, a_hat: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
        if self.dim == 1:
            return np.fft.irfft(a_hat, n=self.n_points[0], axis=-1, out=out)
        return np.fft.irfftn(a_hat, s=self.shape, axes=self.axes, out=out)

    # -- quadrature ---------------------------------------------------------

    def integrate(self, a: np.ndarray) -> np.ndarray | float:
        """Cell-volume-weighted sum over the spatial axes (leading axes kept)."""
        return np.sum(a, axis=self.axes) * self.cell_volume

    def mean(self, a: np.ndarray) -> np.ndarray | float:
        return np.mean(a, axis=self.axes)

    # -- differential operators --------------------------------------------

    def gradient(self, f: np.ndarray) -> np.ndarray:
        _check_finite(f)
        f_hat = self.fft(f)
        # component axis goes right before the spatial axes
        return self.ifft(self._deriv_symbol * np.expand_dims(f_hat, -self.dim - 1))

    def divergence(self, w: np.ndarray) -> np.ndarray:
        _check_finite(w)
        comp = -self.dim - 1
        if w.ndim <= self.dim or w.shape[comp] != self.dim:
            raise ValueError(f"expected {self.dim} vector components on axis {comp}")
        return self.ifft(np.sum(self._deriv_symbol * self.fft(w), axis=comp))

    def laplacian(self, f: np.ndarray) -> np.ndarray:
        """Scalar Laplacian; applied componentwise to any stack of fields."""
        _check_finite(f)
        return self.ifft(-self.k_squared * self.fft(f))

    def lame(self, v: np.ndarray, mu: float, lam: float) -> np.ndarray:
        """``-mu lap v - (mu + lam) grad div v``."""
        if mu <= 0 or lam + 2 * mu <= 0:
            raise ValueError("Lame parameters need mu > 0 and lambda + 2 mu > 0")
        _check_finite(v)
        return self.ifft(self.lame_hat(self.fft(v), mu, lam))

    def lame_hat(self, v_hat: np.ndarray, mu: float, lam: float) -> np.ndarray:
        ik = self._deriv_symbol
        div_hat = np.sum(ik * v_hat, axis=-self.dim - 1, keepdims=True)
        return mu * self.k_squared * v_hat - (mu + lam) * ik * div_hat

    def lame_symbol(self, mu: float, lam: float) -> np.ndarray:
        """Real matrix symbol ``M[i, j]`` with ``(L v)^_i = sum_j M[i, j] v^_j``."""
        key = (float(mu), float(lam))
        cache = self.__dict__.setdefault("_lame_cache", {})
        if key not in cache:
            ik = self._deriv_symbol
            m = -(mu + lam) * (ik[:, None] * ik[None, :]).real
            m[np.arange(self.dim), np.arange(self.dim)] += mu * self.k_squared
            cache[key] = m
        return cache[key]

    def invert_laplacian_mean_zero(self, f: np.ndarray, rtol: float = 1e-12) -> np.ndarray:
        """Mean-zero solution of ``lap phi = f``."""
        _check_finite(f)
        mean = float(self.mean(f))
        scale = float(np.sqrt(self.mean(f**2)))
        if abs(mean) > rtol * max(scale, np.finfo(float).tiny):
            raise MeanNotZeroError(f"input mean {mean:.3e} exceeds {rtol:g} * ||f|| = {rtol * scale:.3e}")
        f_hat = self.fft(f)
        k2 = self.k_squared.copy()
        k2.flat[0] = 1.0
        phi_hat = -f_hat / k2
        phi_hat.flat[0] = 0.0
        return self.ifft(phi_hat)

    def dealias(self, f: np.ndarray) -> np.ndarray:
        return self.ifft(self.fft(f) * self.dealias_mask)
