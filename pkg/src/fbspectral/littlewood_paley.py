"""Dyadic Littlewood-Paley blocks and Fourier-Besov / Chemin-Lerner norms on the lattice.

The ball profile ``chi`` equals 1 on ``|xi| <= 3/4`` and 0 on ``|xi| >= 4/3``
with a C-infinity transition; the annulus profile is
``psi(xi) = chi(|xi| / 2) - chi(|xi|)`` so that block sums telescope exactly:

    sum_{j=a}^{b} psi(2^-j xi) = chi(2^-(b+1) |xi|) - chi(2^-a |xi|).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import expit

from .spectral_core import (ConfigurationError, FrequencyGrid, SpectralField, Trajectory,
                            UsageError, pointwise_product_physical, to_physical, random_field)

_INNER, _OUTER = 0.75, 4.0 / 3.0


class CoverageWarning(UserWarning):
    """Field has energy on shells not fully covered by the partition range."""


def smooth_step(x):
    """C-infinity step: 0 for x <= 0, 1 for x >= 1."""
    x = np.asarray(x, dtype=float)
    inside = (x > 0) & (x < 1)
    xs = np.where(inside, x, 0.5)
    with np.errstate(over="ignore", divide="ignore"):
        mid = expit(1.0 / (1.0 - xs) - 1.0 / xs)
    return np.where(x >= 1, 1.0, np.where(inside, mid, 0.0))


def ball_profile(radius):
    """``chi``: 1 on [0, 3/4], 0 on [4/3, inf)."""
    return 1.0 - smooth_step((np.asarray(radius, dtype=float) - _INNER) / (_OUTER - _INNER))


def annulus_profile(radius):
    """``psi = chi(r / 2) - chi(r)``, supported in [3/4, 8/3]."""
    r = np.asarray(radius, dtype=float)
    return ball_profile(r / 2) - ball_profile(r)


def _radius(xi):
    xi = np.asarray(xi, dtype=float)
    if xi.shape[-1:] != (3,):
        raise UsageError("frequencies must have shape (..., 3)")
    return np.linalg.norm(xi, axis=-1)


@dataclass(frozen=True)
class DyadicPartition:
    """Blocks ``Delta_j`` for ``j_min <= j <= j_max``."""

    j_min: int
    j_max: int

    def __post_init__(self):
        if not self.j_min < self.j_max:
            raise ConfigurationError(f"empty dyadic range [{self.j_min}, {self.j_max}]")

    @property
    def indices(self) -> range:
        return range(self.j_min, self.j_max + 1)

    def psi_hat(self, xi):
        """Annulus multiplier at frequencies ``xi`` (shape (..., 3))."""
        return annulus_profile(_radius(xi))

    def phi_hat(self, xi):
        """Ball multiplier, equal to ``sum_{j <= -1} psi(2^-j xi)`` and 1 at 0."""
        return ball_profile(_radius(xi))

    def block_weight(self, radius, j: int):
        return annulus_profile(np.asarray(radius) * 2.0 ** (-j))

    def low_weight(self, radius, j: int):
        """Multiplier of ``S_j = sum_{j_min <= k <= j-1} Delta_k`` inside the range."""
        r = np.asarray(radius)
        if j <= self.j_min:
            return np.zeros_like(r, dtype=float)
        top = min(j, self.j_max + 1)
        return ball_profile(r * 2.0 ** (-top)) - ball_profile(r * 2.0 ** (-self.j_min))

    def coverage(self, radius):
        """``sum_j psi(2^-j xi)`` over the range."""
        r = np.asarray(radius)
        return ball_profile(r * 2.0 ** (-self.j_max - 1)) - ball_profile(r * 2.0 ** (-self.j_min))

    def check_index(self, j: int):
        if not self.j_min <= j <= self.j_max:
            raise UsageError(f"block {j} outside partition range [{self.j_min}, {self.j_max}]")


def make_partition(j_min: int, j_max: int) -> DyadicPartition:
    return DyadicPartition(int(j_min), int(j_max))


def partition_for_grid(grid: FrequencyGrid, margin: int = 1) -> DyadicPartition:
    """Range whose fully covered shells contain every nonzero lattice frequency."""
    r_min = 1.0 / grid.box_scale
    r_max = math.sqrt(3.0) * grid.n_per_axis / 2 / grid.box_scale
    return partition_for_radii(r_min, r_max, margin)


def partition_for_radii(r_min: float, r_max: float, margin: int = 1) -> DyadicPartition:
    j_lo = math.floor(math.log2(_INNER * r_min))
    j_hi = math.ceil(math.log2(r_max / _OUTER))
    return DyadicPartition(j_lo - margin, j_hi + margin)


@dataclass(frozen=True)
class BesovParams:
    """Regularity ``s``, frequency integrability ``p`` and block summability ``r``."""

    s: float
    p: float = 2.0
    r: float = 2.0

    def __post_init__(self):
        if not (self.p >= 1 and self.r >= 1):
            raise ConfigurationError("Besov exponents need p >= 1 and r >= 1")


@dataclass(frozen=True)
class TimeNormParams:
    delta: float
    besov: BesovParams
    t_end: float

    def __post_init__(self):
        if not self.delta >= 1:
            raise ConfigurationError("time exponent delta must be >= 1")
        if not self.t_end > 0:
            raise ConfigurationError("t_end must be positive")


@dataclass(frozen=True)
class BlockRecord:
    j: int
    block_norm: float
    weighted: float


@dataclass(frozen=True)
class NormReport:
    blocks: tuple
    value: float


def apply_block(field: SpectralField, j: int, partition: DyadicPartition) -> SpectralField:
    """``Delta_j field``: multiply every component by ``psi(2^-j xi)``."""
    partition.check_index(j)
    w = partition.block_weight(field.grid.norm, j)
    return SpectralField(field.grid, field.data * w, field.real)


def apply_low_pass(field: SpectralField, j: int, partition: DyadicPartition) -> SpectralField:
    """``S_j field`` restricted to the partition range."""
    w = partition.low_weight(field.grid.norm, j)
    return SpectralField(field.grid, field.data * w, field.real)


def lattice_lp(values: np.ndarray, p: float, cell_volume: float) -> float:
    """Lattice ``L^p`` norm with cell-volume weights; ``p = inf`` is the max."""
    if np.isinf(p):
        return float(np.max(values)) if values.size else 0.0
    if p == 1:
        return float(np.sum(values) * cell_volume)
    if p == 2:
        return float(np.sqrt(np.sum(values * values) * cell_volume))
    return float((np.sum(values ** p) * cell_volume) ** (1.0 / p))


def ell_r(values, r: float) -> float:
    v = np.abs(np.asarray(values, dtype=float))
    if v.size == 0:
        return 0.0
    if np.isinf(r):
        return float(np.max(v))
    top = np.max(v)
    if top == 0:
        return 0.0
    return float(top * np.sum((v / top) ** r) ** (1.0 / r))


def _warn_coverage(field: SpectralField, modulus: np.ndarray, partition: DyadicPartition):
    cov = partition.coverage(field.grid.norm)
    bad = (modulus > 0) & (np.abs(cov - 1.0) > 1e-12)
    if np.any(bad):
        warnings.warn(f"{int(np.count_nonzero(bad))} nonzero modes lie outside the fully covered "
                      f"shells of blocks [{partition.j_min}, {partition.j_max}]", CoverageWarning,
                      stacklevel=3)


def block_norms(field: SpectralField, p: float, partition: DyadicPartition,
                check_coverage: bool = True) -> np.ndarray:
    """Lattice ``L^p`` norm of ``psi_j |vhat|`` for every block of the partition."""
    mod = field.modulus()
    if check_coverage:
        _warn_coverage(field, mod, partition)
    r = field.grid.norm
    dv = field.grid.cell_volume
    out = np.empty(len(partition.indices))
    for i, j in enumerate(partition.indices):
        w = partition.block_weight(r, j)
        out[i] = lattice_lp(w * mod, p, dv)
    return out


def fb_norm_report(field: SpectralField, params: BesovParams, partition: DyadicPartition) -> NormReport:
    bn = block_norms(field, params.p, partition)
    weights = 2.0 ** (params.s * np.array(partition.indices, dtype=float))
    weighted = weights * bn
    records = tuple(BlockRecord(j, float(b), float(w)) for j, b, w in zip(partition.indices, bn, weighted))
    return NormReport(records, ell_r(weighted, params.r))


def fb_norm(field: SpectralField, params: BesovParams, partition: DyadicPartition) -> float:
    """``|| { 2^{js} || psi_j vhat ||_{L^p} }_j ||_{l^r}`` with ``|.|`` the Euclidean 4-vector length."""
    return fb_norm_report(field, params, partition).value


def physical_besov_norm(field: SpectralField, params: BesovParams, partition: DyadicPartition) -> float:
    """Besov norm from physical-space block ``L^2`` norms (measure ``dx / (2 pi)^3``).

    Only ``p = 2`` is supported; it cross-checks :func:`fb_norm` through Plancherel.
    """
    if params.p != 2:
        raise UsageError("physical-space Besov norms are only provided for p = 2")
    grid = field.grid
    measure = (grid.box_scale / grid.n_per_axis) ** 3
    vals = []
    for j in partition.indices:
        phys = to_physical(apply_block(field, j, partition))
        vals.append(2.0 ** (params.s * j) * math.sqrt(float(np.sum(np.abs(phys) ** 2)) * measure))
    return ell_r(vals, params.r)


def block_norm_series(trajectory: Trajectory, p: float, partition: DyadicPartition) -> np.ndarray:
    """Block norms at every time sample, shape (n_times, n_blocks)."""
    return np.array([block_norms(f, p, partition) for f in trajectory.fields])


def time_integrated_blocks(times: np.ndarray, series: np.ndarray, delta: float) -> np.ndarray:
    """``|| block(t) ||_{L^delta(0, T)}`` per block, composite trapezoid in time."""
    if len(times) < 2:
        raise UsageError("time norms need at least 2 samples")
    if np.isinf(delta):
        return np.max(series, axis=0)
    return trapezoid(series ** delta, times, axis=0) ** (1.0 / delta)


def chemin_lerner_from_series(times, series, delta: float, s: float, r: float,
                              partition: DyadicPartition) -> float:
    per_block = time_integrated_blocks(np.asarray(times), series, delta)
    weights = 2.0 ** (s * np.array(partition.indices, dtype=float))
    return ell_r(weights * per_block, r)


def _truncate(trajectory: Trajectory, t_end: float):
    tol = 1e-12 * max(1.0, t_end)
    keep = np.nonzero(trajectory.times <= t_end + tol)[0]
    if len(keep) < 2:
        raise UsageError("time norms need at least 2 samples in [0, t_end]")
    return trajectory.times[keep], [trajectory.fields[i] for i in keep]


def chemin_lerner_norm(trajectory: Trajectory, params: TimeNormParams,
                       partition: DyadicPartition) -> float:
    """``|| { 2^{js} || psi_j vhat ||_{L^delta(0, T; L^p)} }_j ||_{l^r}``.

    Samples after ``params.t_end`` are ignored; the time integral uses the
    composite trapezoid rule on the samples.
    """
    if len(trajectory) < 2:
        raise UsageError("time norms need at least 2 samples")
    times, fields = _truncate(trajectory, params.t_end)
    series = np.array([block_norms(f, params.besov.p, partition) for f in fields])
    return chemin_lerner_from_series(times, series, params.delta, params.besov.s, params.besov.r,
                                     partition)


# Bony decomposition

def _hadamard(a: SpectralField, b: SpectralField) -> SpectralField:
    return pointwise_product_physical(a, b).hadamard()


@dataclass(frozen=True)
class BonyTerms:
    low_high: SpectralField
    high_low: SpectralField
    high_high: SpectralField

    def total(self) -> SpectralField:
        return self.low_high + self.high_low + self.high_high


def bony_split(a: SpectralField, b: SpectralField, j: int, partition: DyadicPartition,
               paraproduct_width: int = 4, remainder_offset: int = 3) -> BonyTerms:
    """Split ``Delta_j (a b)`` (componentwise product) into paraproducts and remainder.

    low-high:  sum_{|k-j| <= 4} Delta_j (S_{k-1} a  Delta_k b)
    high-low:  sum_{|k-j| <= 4} Delta_j (Delta_k a  S_{k-1} b)
    high-high: sum_{k >= j-3} sum_{|k'-k| <= 1} Delta_j (Delta_k a  Delta_k' b)

    With annulus supports in [3/4, 8/3] the pair (k, k') = (j-3, j-2) still
    reaches block j, hence the remainder starts at ``j - remainder_offset``
    with offset 3.  The three terms sum to ``Delta_j (a b)`` whenever ``a`` and
    ``b`` are covered by the partition.
    """
    if a.grid != b.grid:
        raise UsageError("fields live on different grids")
    partition.check_index(j)
    ks = [k for k in partition.indices]
    blk_a = {k: apply_block(a, k, partition) for k in ks}
    blk_b = {k: apply_block(b, k, partition) for k in ks}
    zero = SpectralField.zeros(a.grid, a.real and b.real)

    def para(high: dict, low_src: SpectralField, low_first: bool):
        acc = zero
        for k in ks:
            if abs(k - j) > paraproduct_width:
                continue
            low = apply_low_pass(low_src, k - 1, partition)
            prod = _hadamard(low, high[k]) if low_first else _hadamard(high[k], low)
            acc = acc + prod
        return apply_block(acc, j, partition)

    low_high = para(blk_b, a, True)
    high_low = para(blk_a, b, False)
    acc = zero
    for k in ks:
        if k < j - remainder_offset:
            continue
        for kp in (k - 1, k, k + 1):
            if kp in blk_b:
                acc = acc + _hadamard(blk_a[k], blk_b[kp])
    high_high = apply_block(acc, j, partition)
    return BonyTerms(low_high, high_low, high_high)


# product-law suite

@dataclass(frozen=True)
class ProductLawRecord:
    trial: int
    p: float
    r: float
    lhs: float
    rhs: float

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs if self.rhs > 0 else math.inf


def _constant_trajectory(field: SpectralField, t_end: float) -> Trajectory:
    return Trajectory(np.array([0.0, t_end]), [field, field])


def product_law_sides(f: SpectralField, g: SpectralField, p: float, r: float, alpha: float,
                      partition: DyadicPartition, t_end: float = 1.0) -> tuple[float, float]:
    """Both sides of the Chemin-Lerner product estimate for constant-in-time ``f, g``.

    ``|| f g ||_{L~1 FB^{sig}_{p,r}}`` against
    ``|| f ||_{L~(2/(1+a)) FB^{sig+a}} || g ||_{L~(2/(1-a)) FB^{sig-a}} + (f <-> g)``,
    with ``sig = 3 - 3/p``.
    """
    sig = 3.0 - 3.0 / p
    fg = _hadamard(f, g)
    tf, tg, tfg = (_constant_trajectory(x, t_end) for x in (f, g, fg))

    def cl(traj, delta, s):
        return chemin_lerner_norm(traj, TimeNormParams(delta, BesovParams(s, p, r), t_end), partition)

    hi, lo = 2.0 / (1.0 + alpha), 2.0 / (1.0 - alpha)
    lhs = cl(tfg, 1.0, sig)
    rhs = cl(tf, hi, sig + alpha) * cl(tg, lo, sig - alpha) + cl(tg, hi, sig + alpha) * cl(tf, lo, sig - alpha)
    return lhs, rhs


def random_scalar_field(grid: FrequencyGrid, rng: np.random.Generator, band, slope: float = 0.0) -> SpectralField:
    """Real scalar field carried in the first component, zero elsewhere."""
    f = random_field(grid, rng, band=band, real=True, slope=slope)
    data = np.zeros_like(f.data)
    data[0] = f.data[0]
    return SpectralField(grid, data, True)


def product_law_suite(grid: FrequencyGrid, n_trials: int, seed: int,
                      cases: Sequence[tuple[float, float]] = ((2.0, 1.0), (2.0, 2.0), (2.0, math.inf),
                                                              (math.inf, 1.0), (math.inf, 2.0),
                                                              (math.inf, math.inf), (1.0, 1.0), (1.0, 2.0)),
                      alpha: float = 0.5) -> list[ProductLawRecord]:
    """Random band-limited scalar pairs; each pair is checked for every ``(p, r)`` case.

    Inputs are limited to ``|xi| <= n / (6 L)`` so the dealiased product is exact.
    """
    rng = np.random.default_rng(seed)
    k_top = grid.n_per_axis / 6 / grid.box_scale
    k_low = 1.0 / grid.box_scale
    partition = partition_for_grid(grid)
    records = []
    for trial in range(n_trials):
        bands = []
        for _ in range(2):
            lo = k_low * 2.0 ** rng.uniform(0, max(math.log2(k_top / k_low) - 1, 0))
            hi = min(k_top, lo * 2.0 ** rng.uniform(1, 3))
            bands.append((lo, hi))
        f = random_scalar_field(grid, rng, bands[0], slope=rng.uniform(-2, 2))
        g = random_scalar_field(grid, rng, bands[1], slope=rng.uniform(-2, 2))
        for p, r in cases:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", CoverageWarning)
                lhs, rhs = product_law_sides(f, g, p, r, alpha, partition)
            records.append(ProductLawRecord(trial, p, r, lhs, rhs))
    return records
