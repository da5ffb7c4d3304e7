"""Horizontal Fourier / vertical Chebyshev discretization of the flat slab.

The slab is ``T^2 x [-b, 0]`` with horizontal period ``box`` (1 by default).
Fields are plain ``numpy`` arrays laid out as

* surface scalar: ``(nx, ny)``
* surface vector: ``(2, nx, ny)``
* volume scalar:  ``(nz, nx, ny)`` with level 0 at the top ``x3 = 0``
* volume vector:  ``(c, nz, nx, ny)``

Horizontal coefficients use the ``e^{2 i pi n.x'/L}`` convention normalized so
that ``cos(2 pi x1)`` has two coefficients of size 1/2.  Internally the stepper
works with the real-FFT half spectrum; :meth:`Grid.h_transform` exposes the
full spectrum for inspection.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np
import scipy.fft as sfft
from numpy.polynomial import chebyshev as cheb

Multiplier = Callable[[np.ndarray, np.ndarray], np.ndarray]


class ShapeMismatchError(ValueError):
    """A field does not match the grid it is used with."""


class PreconditionError(ValueError):
    """An operation was called outside its domain of validity."""


@dataclass(frozen=True)
class GridSpec:
    """Discretization and physical parameters of one simulation."""

    nx: int = 32
    ny: int = 32
    nz: int = 17
    b: float = 1.0
    g: float = 1.0
    f: float = 0.0
    P0: float = 0.0
    box: float = 1.0

    def __post_init__(self):
        for name in ("nx", "ny"):
            n = getattr(self, name)
            if n <= 0 or n % 2:
                raise ValueError(f"{name} must be a positive even integer, got {n}")
        if self.nz < 5:
            raise ValueError(f"nz must be >= 5, got {self.nz}")
        if not self.b > 0:
            raise ValueError(f"depth b must be positive, got {self.b}")
        if not self.g > 0:
            raise ValueError(f"gravity g must be positive, got {self.g}")
        if self.f < 0:
            raise ValueError(f"Coriolis f must be >= 0, got {self.f}")
        if not self.box >= 1:
            raise ValueError(f"box must be >= 1, got {self.box}")


def cheb_points_matrix(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Chebyshev-Gauss-Lobatto points on [-1, 1] (descending) and the
    collocation differentiation matrix (Trefethen, *Spectral Methods in MATLAB*)."""
    N = n - 1
    j = np.arange(n)
    x = np.sin(np.pi * (N - 2 * j) / (2 * N))  # symmetric to round-off
    c = np.where((j == 0) | (j == N), 2.0, 1.0) * (-1.0) ** j
    # trig form of x_i - x_j avoids cancellation for nearby nodes
    dx = 2.0 * np.sin(np.pi * (j[:, None] + j[None, :]) / (2 * N)) * np.sin(np.pi * (j[None, :] - j[:, None]) / (2 * N))
    D = np.outer(c, 1.0 / c) / (dx + np.eye(n))
    D -= np.diag(D.sum(axis=1))
    return x, D


def _cheb_integration_matrix(x: np.ndarray, scale: float) -> np.ndarray:
    # exact antiderivative (vanishing at x = -1) of the interpolating polynomial
    n = x.size
    N = n - 1
    V = cheb.chebvander(x, N)
    # closed-form inverse of the Lobatto Vandermonde matrix (a DCT-I)
    c = np.ones(n)
    c[[0, -1]] = 2.0
    Vinv = (2.0 / N) * V.T / np.outer(c, c)
    integ = np.zeros((n + 1, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        integ[:, j] = cheb.chebint(e, lbnd=-1.0, scl=scale)
    return cheb.chebvander(x, n) @ integ @ Vinv


def _drop_top_mode(x: np.ndarray) -> np.ndarray:
    # projector removing the highest Chebyshev mode from nodal values
    N = x.size - 1
    V = cheb.chebvander(x, N)
    c = np.ones(x.size)
    c[[0, -1]] = 2.0
    top_row = (2.0 / N) * V[:, N] / (c * c[-1])
    return np.eye(x.size) - np.outer(V[:, N], top_row)


class Grid:
    """Precomputed operators for a :class:`GridSpec`.

    All operations are pure; a ``Grid`` is immutable after construction.
    """

    def __init__(self, spec: GridSpec):
        self.spec = spec
        nx, ny, nz, b, L = spec.nx, spec.ny, spec.nz, spec.b, spec.box
        self.nx, self.ny, self.nz, self.b, self.box = nx, ny, nz, b, L
        self.area = L * L

        self.x1 = L * np.arange(nx) / nx
        self.x2 = L * np.arange(ny) / ny

        xi, Dref = cheb_points_matrix(nz)
        self.z = 0.5 * b * (xi - 1.0)
        self.z[0] = 0.0
        self.z[-1] = -b
        self.D = (2.0 / b) * Dref
        self.D2 = self.D @ self.D
        self.S = _cheb_integration_matrix(xi, 0.5 * b)
        self.S[-1] = 0.0  # the antiderivative vanishes at the bottom exactly
        # Clenshaw-Curtis weights: the integral over [-b, 0] is the top row of S
        self.wz = self.S[0].copy()
        # antiderivative of the interpolant without its top mode: it stays of
        # degree < nz, so D @ S_low is the identity on that subspace
        self.S_low = self.S @ _drop_top_mode(xi)
        self.S_low[-1] = 0.0

        n1 = np.fft.fftfreq(nx, 1.0 / nx)
        n2 = np.fft.rfftfreq(ny, 1.0 / ny)
        self.n1 = n1[:, None]
        self.n2 = n2[None, :]
        k1 = 2 * np.pi * self.n1 / L
        k2 = 2 * np.pi * self.n2 / L
        self.ksq = k1**2 + k2**2
        self.kabs = np.sqrt(self.ksq)
        # odd multipliers lose the unpaired Nyquist mode
        self.k1 = np.where(np.abs(self.n1) == nx // 2, 0.0, k1) * np.ones_like(k2)
        self.k2 = np.where(np.abs(self.n2) == ny // 2, 0.0, k2) * np.ones_like(k1)

        # half-spectrum multiplicity for Parseval sums
        w = np.full((1, n2.size), 2.0)
        w[0, 0] = 1.0
        if ny % 2 == 0:
            w[0, -1] = 1.0
        self.half_weights = np.broadcast_to(w, self.ksq.shape)

        keep1 = np.abs(self.n1) <= nx // 3
        keep2 = np.abs(self.n2) <= ny // 3
        self.dealias_mask = keep1 & keep2

    # ------------------------------------------------------------------ shapes
    @property
    def surface_shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def volume_shape(self) -> tuple[int, int, int]:
        return (self.nz, self.nx, self.ny)

    @cached_property
    def X1(self) -> np.ndarray:
        return np.broadcast_to(self.x1[:, None], self.surface_shape)

    @cached_property
    def X2(self) -> np.ndarray:
        return np.broadcast_to(self.x2[None, :], self.surface_shape)

    @cached_property
    def X3(self) -> np.ndarray:
        return np.broadcast_to(self.z[:, None, None], self.volume_shape)

    def _check_horizontal(self, f: np.ndarray) -> None:
        if f.ndim < 2 or f.shape[-2:] != self.surface_shape:
            raise ShapeMismatchError(
                f"field of shape {f.shape} does not match horizontal grid {self.surface_shape}"
            )

    def _check_volume(self, f: np.ndarray) -> None:
        # physical (nz, nx, ny) or half-spectrum (nz, nx, ny // 2 + 1) layout
        if f.ndim < 3 or f.shape[-3:] not in (self.volume_shape, (self.nz,) + self.ksq.shape):
            raise ShapeMismatchError(
                f"field of shape {f.shape} does not match volume grid {self.volume_shape}"
            )

    # -------------------------------------------------------------- transforms
    def fft(self, f: np.ndarray) -> np.ndarray:
        """Real-FFT half spectrum over the last two axes."""
        return sfft.rfft2(f, norm="forward")

    def ifft(self, fh: np.ndarray) -> np.ndarray:
        return sfft.irfft2(fh, s=self.surface_shape, norm="forward")

    def h_transform(self, f: np.ndarray) -> np.ndarray:
        """Full complex Fourier coefficients of a real field (last two axes)."""
        f = np.asarray(f, dtype=float)
        self._check_horizontal(f)
        return np.fft.fft2(f, norm="forward")

    def h_inverse(self, fh: np.ndarray) -> np.ndarray:
        self._check_horizontal(fh)
        return np.fft.ifft2(fh, norm="forward").real

    def full_wavenumbers(self) -> tuple[np.ndarray, np.ndarray]:
        """Wavenumbers ``2 pi n / L`` matching :meth:`h_transform` ordering."""
        n1 = np.fft.fftfreq(self.nx, 1.0 / self.nx)[:, None]
        n2 = np.fft.fftfreq(self.ny, 1.0 / self.ny)[None, :]
        k1 = 2 * np.pi * n1 / self.box * np.ones((1, self.ny))
        k2 = 2 * np.pi * n2 / self.box * np.ones((self.nx, 1))
        return k1, k2

    def apply_multiplier(self, f: np.ndarray, m: Multiplier) -> np.ndarray:
        """Apply the Fourier multiplier ``m(k1, k2)`` to a surface or volume field.

        ``m`` receives the physical wavenumbers ``2 pi n / L`` on the full
        spectrum and may return an array with extra leading axes (e.g. a
        vector-valued multiplier such as the horizontal gradient); those axes
        are prepended to the result.
        """
        fh = self.h_transform(f)
        k1, k2 = self.full_wavenumbers()
        mult = np.asarray(m(k1, k2))
        if not np.all(np.isfinite(mult)):
            raise FloatingPointError("multiplier is not finite on every resolved mode")
        extra = mult.ndim - 2
        if extra > 0:
            fh = fh[(None,) * extra]
            mult = mult.reshape(mult.shape[:extra] + (1,) * (fh.ndim - mult.ndim) + mult.shape[extra:])
        return np.fft.ifft2(mult * fh, norm="forward").real

    # ----------------------------------------------------- horizontal calculus
    def dx(self, f: np.ndarray) -> np.ndarray:
        return self.ifft(1j * self.k1 * self.fft(f))

    def dy(self, f: np.ndarray) -> np.ndarray:
        return self.ifft(1j * self.k2 * self.fft(f))

    def grad_h(self, f: np.ndarray) -> np.ndarray:
        fh = self.fft(f)
        return np.stack([self.ifft(1j * self.k1 * fh), self.ifft(1j * self.k2 * fh)])

    def lap_h(self, f: np.ndarray) -> np.ndarray:
        return self.ifft(-self.ksq * self.fft(f))

    def dealias(self, f: np.ndarray) -> np.ndarray:
        return self.ifft(self.dealias_mask * self.fft(f))

    def mean(self, f: np.ndarray) -> np.ndarray:
        """Horizontal mean (over the last two axes)."""
        return f.mean(axis=(-2, -1))

    # ------------------------------------------------------- vertical calculus
    def _vertical(self, M: np.ndarray, f: np.ndarray) -> np.ndarray:
        self._check_volume(f)
        flat = f.reshape(f.shape[:-2] + (-1,))
        return (M @ flat).reshape(f.shape)

    def vertical_diff(self, f: np.ndarray) -> np.ndarray:
        """Collocation derivative in ``x3``; exact for polynomials of degree < nz."""
        return self._vertical(self.D, f)

    def vertical_integral_from_bottom(self, f: np.ndarray, drop_top: bool = False) -> np.ndarray:
        """``x3 -> int_{-b}^{x3} f`` of the interpolating polynomial.

        With ``drop_top`` the highest Chebyshev mode of ``f`` is discarded
        first, so the result is resolved on the grid and differentiates back
        to ``f`` up to that mode.
        """
        return self._vertical(self.S_low if drop_top else self.S, f)

    def vertical_integral(self, f: np.ndarray) -> np.ndarray:
        """Full-depth integral ``int_{-b}^0 f dx3`` (Clenshaw-Curtis)."""
        self._check_volume(f)
        return np.tensordot(self.wz, f, axes=([0], [-3]))

    # ------------------------------------------------------------------- norms
    def _spectral_sq(self, fh: np.ndarray) -> np.ndarray:
        return self.half_weights * np.abs(fh) ** 2

    def surface_norm(self, f: np.ndarray, r: float, mean_tol: float = 1e-8) -> float:
        """``|f|_r``: ``sqrt(area * sum (1 + |k|^2)^r |f_n|^2)``.

        Vector fields (leading axis) contribute the sum of component squares.
        Negative ``r`` requires mean-zero components.
        """
        if r < -2:
            raise PreconditionError(f"surface norm index r={r} below -2")
        f = np.asarray(f, dtype=float)
        self._check_horizontal(f)
        fh = self.fft(f)
        if r < 0:
            scale = max(np.abs(fh).max(), 1.0)
            if np.abs(fh[..., 0, 0]).max() > mean_tol * scale:
                raise PreconditionError("negative-order surface norm of a field with nonzero mean")
        weight = (1.0 + self.ksq) ** r
        total = np.sum(weight * self._spectral_sq(fh))
        return float(np.sqrt(self.area * total))

    def volume_norm(self, f: np.ndarray, s: int) -> float:
        """Mixed-derivative ``H^s(Omega)`` norm, ``s`` in ``0..5``.

        Sum over ``a + b + c <= s`` of ``||d1^a d2^b d3^c f||^2``; horizontal
        derivatives spectral, vertical by collocation, vertical quadrature by
        Clenshaw-Curtis, horizontal quadrature by Parseval.
        """
        if s not in range(6):
            raise PreconditionError(f"volume norm order must be in 0..5, got {s}")
        f = np.asarray(f, dtype=float)
        self._check_volume(f)
        # true wavenumbers here (the derivative multipliers zero the Nyquist mode)
        k1sq = (2 * np.pi * self.n1 / self.box) ** 2 * np.ones_like(self.ksq)
        k2sq = (2 * np.pi * self.n2 / self.box) ** 2 * np.ones_like(self.ksq)
        # horizontal symbol sum_{a+b<=m} k1^{2a} k2^{2b} for m = 0..s
        horiz = []
        for m in range(s + 1):
            acc = np.zeros_like(self.ksq)
            for a in range(m + 1):
                acc = acc + k1sq**a * k2sq ** (m - a)
            horiz.append(acc)
        cum = np.cumsum(horiz, axis=0)
        total = 0.0
        g = f
        for c in range(s + 1):
            if c:
                g = self.vertical_diff(g)
            gh = self.fft(g)
            power = np.tensordot(self.wz, self._spectral_sq(gh), axes=([0], [-3]))
            total += np.sum(cum[s - c] * power)
        return float(np.sqrt(self.area * total))

    def l2_volume(self, f: np.ndarray) -> float:
        return self.volume_norm(f, 0)


def abs_grad_power(gamma: float) -> Multiplier:
    """``|grad_*|^{gamma}`` with the zero mode mapped to zero when ``gamma < 0``."""

    def m(k1, k2):
        k = np.sqrt(k1**2 + k2**2)
        with np.errstate(divide="ignore"):
            out = np.where(k > 0, k ** gamma, 0.0 if gamma < 0 else float(gamma == 0))
        return out

    return m


def eta_multiplier(k1: np.ndarray, k2: np.ndarray) -> np.ndarray:
    """Symbol of ``(1 + |grad_*|)^{3/2} grad_*`` (vector valued)."""
    k = np.sqrt(k1**2 + k2**2)
    w = (1.0 + k) ** 1.5
    return np.stack([1j * k1 * w, 1j * k2 * w])
