"""Frequency-lattice fields, physical-space transforms and dealiased products.

Fourier convention: a field on the periodic box of half-period ``L`` is
``f(x) = sum_k fhat(xi_k) exp(i x . xi_k) * dxi`` with ``xi_k = k / L`` and
cell volume ``dxi = L**-3``.  With this normalisation the transform of a
pointwise product is the lattice convolution ``dxi * sum fhat(a) ghat(k - a)``,
the discrete analogue of ``(fhat * ghat)(xi)`` on R^3 without 2*pi factors.
Arrays are stored in FFT order (index 0 is the zero mode).
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.fft as sfft

N_COMPONENTS = 4
_MAGIC = b"FBSF\x01"


class ConfigurationError(ValueError):
    """Invalid construction parameters."""


class UsageError(ValueError):
    """Operation called with inputs outside its contract."""


@dataclass(frozen=True)
class PhysicalParams:
    """Viscosity, rotation and stratification constants.

    ``nu`` must equal ``mu`` (unit Prandtl number); the semigroup used
    throughout only factorises in that case.
    """

    nu: float
    mu: float
    omega: float = 0.0
    script_n: float = 0.0
    gravity: float = 1.0

    def __post_init__(self):
        if not (self.nu > 0 and self.mu > 0):
            raise ConfigurationError("nu and mu must be positive")
        if self.nu != self.mu:
            raise ConfigurationError(
                f"Prandtl number must be 1 (nu == mu), got nu={self.nu}, mu={self.mu}")
        if self.script_n < 0:
            raise ConfigurationError("stratification must be nonnegative")
        if not self.gravity > 0:
            raise ConfigurationError("gravity must be positive")

    @property
    def n_big(self) -> float:
        return self.script_n * np.sqrt(self.gravity)

    @property
    def burger(self) -> float | None:
        if self.script_n == 0:
            return None
        return self.omega / self.script_n

    @classmethod
    def from_n(cls, nu: float, omega: float, n_big: float) -> "PhysicalParams":
        """Parameters with ``mu = nu`` and unit gravity, so that ``N = n_big``."""
        return cls(nu=nu, mu=nu, omega=omega, script_n=n_big, gravity=1.0)


@dataclass(frozen=True, eq=False)
class FrequencyGrid:
    """Cubic lattice of wavenumbers ``k / box_scale``, ``k`` in ``[-n/2, n/2)``."""

    n_per_axis: int
    box_scale: float

    def __post_init__(self):
        n = self.n_per_axis
        if int(n) != n or n < 8 or n % 2:
            raise ConfigurationError(f"n_per_axis must be an even integer >= 8, got {n}")
        if not self.box_scale > 0:
            raise ConfigurationError("box_scale must be positive")

    def __eq__(self, other):
        return (isinstance(other, FrequencyGrid) and self.n_per_axis == other.n_per_axis
                and self.box_scale == other.box_scale)

    def __hash__(self):
        return hash((self.n_per_axis, self.box_scale))

    @property
    def shape(self) -> tuple[int, int, int]:
        n = self.n_per_axis
        return (n, n, n)

    @property
    def cell_volume(self) -> float:
        return float(self.box_scale) ** -3

    @cached_property
    def indices(self) -> np.ndarray:
        """Integer wavenumber indices per axis in FFT order."""
        return np.fft.fftfreq(self.n_per_axis, 1.0 / self.n_per_axis).astype(np.int64)

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Per-axis wavenumbers in FFT order."""
        return self.indices / self.box_scale

    @property
    def sorted_wavenumbers(self) -> np.ndarray:
        return np.fft.fftshift(self.wavenumbers)

    @property
    def nyquist(self) -> float:
        return self.n_per_axis / 2 / self.box_scale

    @cached_property
    def axes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Broadcastable wavenumber arrays of shapes (n,1,1), (1,n,1), (1,1,n)."""
        k = self.wavenumbers
        return k[:, None, None], k[None, :, None], k[None, None, :]

    @cached_property
    def norm_sq(self) -> np.ndarray:
        x, y, z = self.axes
        return x * x + y * y + z * z

    @cached_property
    def norm(self) -> np.ndarray:
        return np.sqrt(self.norm_sq)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """True where every integer index satisfies ``|k| <= n/3``."""
        keep = np.abs(self.indices) <= self.n_per_axis / 3
        return keep[:, None, None] & keep[None, :, None] & keep[None, None, :]

    def index_of(self, xi) -> tuple[int, int, int]:
        """FFT-order array index of the lattice point nearest to ``xi``."""
        k = np.rint(np.asarray(xi, dtype=float) * self.box_scale).astype(int)
        n = self.n_per_axis
        if np.any(k < -n // 2) or np.any(k >= n // 2):
            raise UsageError(f"wavenumber {xi} is outside the grid")
        return tuple(int(v) % n for v in k)


def make_grid(n_per_axis: int, box_scale: float) -> FrequencyGrid:
    return FrequencyGrid(int(n_per_axis), float(box_scale))


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Four-component field of Fourier coefficients on a ``FrequencyGrid``.

    The zero-wavenumber coefficients are set to 0 on construction and the
    data array is made read-only.  ``real`` records that the field is the
    transform of a real-valued function (conjugate symmetric coefficients).
    """

    grid: FrequencyGrid
    data: np.ndarray
    real: bool = False

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.complex128, copy=True)
        if arr.shape != (N_COMPONENTS,) + self.grid.shape:
            raise UsageError(f"expected data of shape {(N_COMPONENTS,) + self.grid.shape}, got {arr.shape}")
        arr[:, 0, 0, 0] = 0.0
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @classmethod
    def zeros(cls, grid: FrequencyGrid, real: bool = True) -> "SpectralField":
        return cls(grid, np.zeros((N_COMPONENTS,) + grid.shape, dtype=np.complex128), real)

    def with_data(self, data, real: bool | None = None) -> "SpectralField":
        return SpectralField(self.grid, data, self.real if real is None else real)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        _check_same_grid(self, other)
        return SpectralField(self.grid, self.data + other.data, self.real and other.real)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        _check_same_grid(self, other)
        return SpectralField(self.grid, self.data - other.data, self.real and other.real)

    def __neg__(self) -> "SpectralField":
        return SpectralField(self.grid, -self.data, self.real)

    def scale(self, c) -> "SpectralField":
        c = complex(c)
        return SpectralField(self.grid, c * self.data, self.real and c.imag == 0)

    def __mul__(self, c) -> "SpectralField":
        return self.scale(c)

    __rmul__ = __mul__

    def modulus(self) -> np.ndarray:
        """Euclidean length of the 4-vector of coefficients at each mode."""
        d = self.data
        return np.sqrt(np.sum(d.real ** 2 + d.imag ** 2, axis=0))

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.data)))


def _check_same_grid(a: SpectralField, b: SpectralField):
    if a.grid != b.grid:
        raise UsageError("fields live on different grids")


def random_field(grid: FrequencyGrid, rng: np.random.Generator, band=(0.0, np.inf),
                 real: bool = True, slope: float = 0.0) -> SpectralField:
    """Random field with coefficients supported on ``band[0] <= |xi| <= band[1]``.

    Real fields are drawn in physical space so conjugate symmetry is exact;
    ``slope`` multiplies the amplitudes by ``|xi|**slope``.
    """
    shape = (N_COMPONENTS,) + grid.shape
    if real:
        data = from_physical(rng.standard_normal(shape), grid).data.copy()
    else:
        data = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    r = grid.norm
    mask = (r >= band[0]) & (r <= band[1])
    if np.isfinite(band[1]) and band[1] * grid.box_scale >= grid.n_per_axis / 2:
        mask &= _nyquist_free(grid)
    weight = np.where(mask, np.where(r > 0, r, 1.0) ** slope, 0.0)
    return SpectralField(grid, data * weight, real)


def _nyquist_free(grid: FrequencyGrid) -> np.ndarray:
    keep = grid.indices != -grid.n_per_axis // 2
    return keep[:, None, None] & keep[None, :, None] & keep[None, None, :]


def divergence(field: SpectralField) -> np.ndarray:
    """``i (xi1 v1 + xi2 v2 + xi3 v3)`` per lattice point."""
    x, y, z = field.grid.axes
    d = field.data
    return 1j * (x * d[0] + y * d[1] + z * d[2])


def is_conjugate_symmetric(field: SpectralField, rtol: float = 1e-12) -> bool:
    """Check ``v(-xi) == conj(v(xi))`` relative to the field's largest coefficient."""
    d = field.data
    scale = max(float(np.max(np.abs(d))), np.finfo(float).tiny)
    return float(np.max(np.abs(d - np.conj(_reflect(d))))) <= rtol * scale


def _reflect(arr: np.ndarray) -> np.ndarray:
    """``arr[..., -k1, -k2, -k3]`` with indices taken modulo n."""
    n = arr.shape[-1]
    neg = (-np.arange(n)) % n
    return arr[..., neg, :, :][..., :, neg, :][..., :, :, neg]


# physical space

def _physical_scale(grid: FrequencyGrid) -> float:
    return grid.cell_volume


def _half_to_full(half: np.ndarray, n: int) -> np.ndarray:
    """Expand an ``rfftn`` half spectrum (last axis) to the full spectrum."""
    full = np.empty(half.shape[:-1] + (n,), dtype=np.complex128)
    m = n // 2
    full[..., : m + 1] = half
    neg = (-np.arange(n)) % n
    mirror = half[..., 1:m][..., ::-1][..., neg, :, :][..., :, neg, :]
    np.conjugate(mirror, out=full[..., m + 1:])
    return full


def to_physical(field: SpectralField) -> np.ndarray:
    """Grid values of the four components, real dtype for real fields."""
    return _spectral_to_physical(field.data, field.grid, field.real)


def _spectral_to_physical(data: np.ndarray, grid: FrequencyGrid, real: bool) -> np.ndarray:
    c = _physical_scale(grid)
    axes = (-3, -2, -1)
    if real:
        m = grid.n_per_axis // 2
        return c * sfft.irfftn(data[..., : m + 1], s=grid.shape, axes=axes, norm="forward")
    return c * sfft.ifftn(data, axes=axes, norm="forward")


def _physical_to_spectral(values: np.ndarray, grid: FrequencyGrid) -> np.ndarray:
    c = 1.0 / _physical_scale(grid)
    axes = (-3, -2, -1)
    if np.isrealobj(values):
        half = sfft.rfftn(values, axes=axes, norm="forward")
        return c * _half_to_full(half, grid.n_per_axis)
    return c * sfft.fftn(values, axes=axes, norm="forward")


def from_physical(values: np.ndarray, grid: FrequencyGrid) -> SpectralField:
    """Inverse of :func:`to_physical`; real input gives a real-flagged field."""
    values = np.asarray(values)
    if values.shape != (N_COMPONENTS,) + grid.shape:
        raise UsageError("physical values must have shape (4, n, n, n)")
    return SpectralField(grid, _physical_to_spectral(values, grid), bool(np.isrealobj(values)))


# products

def _dealias_to_physical(field: SpectralField, comps: Sequence[int], real: bool) -> list:
    mask = field.grid.dealias_mask
    return [_spectral_to_physical(np.where(mask, field.data[c], 0.0), field.grid, real)
            for c in comps]


def dealiased_product(a_hat: np.ndarray, b_hat: np.ndarray, grid: FrequencyGrid,
                      real: bool) -> np.ndarray:
    """Transform of the product of two scalar spectra, 2/3-rule dealiased.

    Both inputs are truncated to ``|k| <= n/3`` per axis and so is the output,
    so the result equals the exact lattice convolution on every returned mode.
    """
    mask = grid.dealias_mask
    a = _spectral_to_physical(np.where(mask, a_hat, 0.0), grid, real)
    b = _spectral_to_physical(np.where(mask, b_hat, 0.0), grid, real)
    out = _physical_to_spectral(a * b, grid)
    out[~mask] = 0.0
    return out


class ProductTensor:
    """Lazily evaluated dealiased tensor product ``v (x) w`` of two fields.

    Entries are computed on demand; ``entry(k, l)`` is the transform of
    ``v_k w_l``.  Physical-space values of the inputs are cached.
    """

    def __init__(self, a: SpectralField, b: SpectralField):
        _check_same_grid(a, b)
        self.grid = a.grid
        self.real = a.real and b.real
        self._a = _dealias_to_physical(a, range(N_COMPONENTS), self.real)
        self._b = self._a if b is a else _dealias_to_physical(b, range(N_COMPONENTS), self.real)

    def entry(self, k: int, l: int) -> np.ndarray:
        out = _physical_to_spectral(self._a[k] * self._b[l], self.grid)
        out[~self.grid.dealias_mask] = 0.0
        out[0, 0, 0] = 0.0
        return out

    def full(self) -> np.ndarray:
        """All 16 entries as an array of shape (4, 4, n, n, n)."""
        return np.stack([np.stack([self.entry(k, l) for l in range(N_COMPONENTS)])
                         for k in range(N_COMPONENTS)])

    def hadamard(self) -> SpectralField:
        """Componentwise product ``(v_1 w_1, ..., v_4 w_4)``."""
        return SpectralField(self.grid, np.stack([self.entry(k, k) for k in range(N_COMPONENTS)]),
                             self.real)

    def divergence_rows(self) -> SpectralField:
        """``i sum_{k<=3} xi_k (v_k w_l)^`` for ``l = 1..4`` (divergence over the first index)."""
        if self.real:
            return self._divergence_rows_real()
        x, y, z = self.grid.axes
        xis = (x, y, z)
        out = np.zeros((N_COMPONENTS,) + self.grid.shape, dtype=np.complex128)
        for l in range(N_COMPONENTS):
            acc = out[l]
            for k in range(3):
                acc += xis[k] * self.entry(k, l)
            acc *= 1j
        return SpectralField(self.grid, out, self.real)

    def _divergence_rows_real(self) -> SpectralField:
        # accumulate in the rfft half spectrum and expand once per row; the
        # summand i xi_k (v_k w_l)^ is conjugate symmetric, so the expansion is exact
        grid = self.grid
        n = grid.n_per_axis
        m = n // 2
        x, y, z = grid.axes
        xis = (x, y, z[..., : m + 1])
        symmetric = self._b is self._a
        cache = {}

        def half(k, l):
            key = (min(k, l), max(k, l)) if symmetric else (k, l)
            if key not in cache:
                cache[key] = sfft.rfftn(self._a[k] * self._b[l], norm="forward")
            return cache[key]

        mask = grid.dealias_mask
        out = np.zeros((N_COMPONENTS,) + grid.shape, dtype=np.complex128)
        for l in range(N_COMPONENTS):
            acc = np.zeros((n, n, m + 1), dtype=np.complex128)
            for k in range(3):
                acc += xis[k] * half(k, l)
            acc *= 1j / _physical_scale(grid)
            full = _half_to_full(acc, n)
            full[~mask] = 0.0
            full[0, 0, 0] = 0.0
            out[l] = full
        return SpectralField(grid, out, self.real)


def pointwise_product_physical(a: SpectralField, b: SpectralField) -> ProductTensor:
    """Dealiased ``a (x) b``, returned as a lazily reduced 16-entry tensor."""
    return ProductTensor(a, b)


# serialisation

def field_to_bytes(field: SpectralField) -> bytes:
    """Flat binary snapshot: magic, header (n, L, real flag), then 4 arrays.

    Arrays are complex128 little-endian in row-major order over sorted
    wavenumbers (most negative first).
    """
    buf = io.BytesIO()
    buf.write(_MAGIC)
    buf.write(struct.pack("<IdB", field.grid.n_per_axis, field.grid.box_scale, int(field.real)))
    shifted = np.fft.fftshift(field.data, axes=(1, 2, 3))
    buf.write(np.ascontiguousarray(shifted, dtype="<c16").tobytes())
    return buf.getvalue()


def field_from_bytes(raw: bytes) -> SpectralField:
    if not raw.startswith(_MAGIC):
        raise UsageError("not a field snapshot (bad magic)")
    off = len(_MAGIC)
    n, box, real = struct.unpack_from("<IdB", raw, off)
    off += struct.calcsize("<IdB")
    grid = make_grid(n, box)
    count = N_COMPONENTS * n ** 3
    if len(raw) - off != 16 * count:
        raise UsageError("truncated or oversized field snapshot")
    arr = np.frombuffer(raw, dtype="<c16", count=count, offset=off).reshape((N_COMPONENTS,) + grid.shape)
    return SpectralField(grid, np.fft.ifftshift(arr, axes=(1, 2, 3)), bool(real))


def save_field(field: SpectralField, path) -> None:
    with open(path, "wb") as fh:
        fh.write(field_to_bytes(field))


def load_field(path) -> SpectralField:
    with open(path, "rb") as fh:
        return field_from_bytes(fh.read())


@dataclass(frozen=True)
class Trajectory:
    """Time samples ``times[0] = 0 < times[1] < ...`` with one field per sample.

    ``fields`` may be any sequence, including a lazily evaluated one.
    """

    times: np.ndarray
    fields: Sequence[SpectralField] = field(repr=False)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or len(t) == 0:
            raise UsageError("times must be a nonempty 1-D array")
        if t[0] != 0.0:
            raise UsageError("trajectories start at t = 0")
        if np.any(np.diff(t) <= 0):
            raise UsageError("times must be strictly increasing")
        if len(self.fields) != len(t):
            raise UsageError("one field per time sample is required")
        object.__setattr__(self, "times", t)

    def __len__(self):
        return len(self.times)

    @property
    def grid(self) -> FrequencyGrid:
        return self.fields[0].grid

    @property
    def t_end(self) -> float:
        return float(self.times[-1])
