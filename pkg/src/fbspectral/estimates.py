"""Viscosity scaling of the linear smoothing and Duhamel estimates.

For a time exponent ``delta = 2 / (1 -+ alpha)`` and regularity gain ``1 -+ alpha``
both ratios

    ||T(.) u0||_{L~delta FB^{s+1-+a}} / ||u0||_{FB^s}
    ||int_0^t T(t - s) f ds||_{L~delta FB^{s+1-+a}} / ||f||_{L~1 FB^s}

scale like ``nu^{-(1 -+ alpha)/2}``.  Here ``f`` is a short pulse, which keeps
the Duhamel integral exact per mode.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .littlewood_paley import (BesovParams, CoverageWarning, block_norms, chemin_lerner_from_series,
                               fb_norm, partition_for_grid)
from .semigroup import apply_kernel_integral, apply_semigroup, helmholtz_project
from .spectral_core import ConfigurationError, FrequencyGrid, PhysicalParams, random_field


@dataclass(frozen=True)
class ScalingRecord:
    nu: float
    sign: int          # +1 for the 2/(1+a) norm, -1 for 2/(1-a)
    ratio: float


@dataclass
class ScalingFit:
    kind: str
    alpha: float
    records: list

    def exponent(self, sign: int) -> float:
        recs = [r for r in self.records if r.sign == sign]
        nu = np.log([r.nu for r in recs])
        ratio = np.log([r.ratio for r in recs])
        return float(np.polyfit(nu, ratio, 1)[0])

    def expected(self, sign: int) -> float:
        return -(1 + sign * self.alpha) / 2

    def rows(self):
        return [(self.kind, r.nu, r.sign, r.ratio) for r in self.records]


def _time_grid(t_end: float, n_samples: int, t_min: float) -> np.ndarray:
    return np.concatenate([[0.0], np.geomspace(t_min, t_end, n_samples)])


def _solenoidal_data(grid: FrequencyGrid, seed: int, band) -> object:
    rng = np.random.default_rng(seed)
    return helmholtz_project(random_field(grid, rng, band=band, real=True))


def _cl_pair(series, times, s, r, alpha, partition):
    out = {}
    for sign in (1, -1):
        delta = 2 / (1 + sign * alpha)
        out[sign] = chemin_lerner_from_series(times, series, delta, s + 1 + sign * alpha, r, partition)
    return out


def _check(alpha, nus):
    if not 0 < alpha < 1:
        raise ConfigurationError("alpha must lie in (0, 1)")
    if len(nus) < 2 or min(nus) <= 0:
        raise ConfigurationError("need at least two positive viscosities")


def smoothing_scaling(grid: FrequencyGrid, seed: int = 0, alpha: float = 0.5,
                      nus=(1.0, 0.1, 0.01), besov: BesovParams = BesovParams(0.0, 2.0, 2.0),
                      band=(2.0, 4.0), t_end: float = 1000.0, n_samples: int = 300,
                      omega: float = 1.0, n_big: float = 1.0) -> ScalingFit:
    """Ratios of the linear flow norms to the data norm for each viscosity.

    Times are geometric from ``1e-4`` to ``t_end`` plus ``t = 0``, so every decay
    scale ``1 / (nu |xi|^2)`` is resolved.
    """
    _check(alpha, nus)
    u0 = _solenoidal_data(grid, seed, band)
    partition = partition_for_grid(grid)
    times = _time_grid(t_end, n_samples, 1e-4)
    records = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CoverageWarning)
        base = fb_norm(u0, besov, partition)
        for nu in nus:
            params = PhysicalParams.from_n(nu, omega, n_big)
            series = np.array([block_norms(apply_semigroup(u0, t, params), besov.p, partition) for t in times])
            for sign, val in _cl_pair(series, times, besov.s, besov.r, alpha, partition).items():
                records.append(ScalingRecord(nu, sign, val / base))
    return ScalingFit("smoothing", alpha, records)


def duhamel_scaling(grid: FrequencyGrid, seed: int = 0, alpha: float = 0.5,
                    nus=(1.0, 0.1, 0.01), besov: BesovParams = BesovParams(0.0, 2.0, 2.0),
                    band=(2.0, 4.0), t_end: float = 1000.0, n_samples: int = 300,
                    pulse: float = 1e-4, omega: float = 1.0, n_big: float = 1.0) -> ScalingFit:
    """Duhamel ratios for the forcing ``f(s) = f0`` on ``[0, pulse]`` and 0 after.

    The forcing norm is ``|| f ||_{L~1 FB^s} = pulse ||f0||_{FB^s}``; the integral
    is exact per mode.
    """
    _check(alpha, nus)
    f0 = _solenoidal_data(grid, seed, band)
    partition = partition_for_grid(grid)
    times = _time_grid(t_end, n_samples, pulse * 1e-2)
    records = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CoverageWarning)
        base = pulse * fb_norm(f0, besov, partition)
        for nu in nus:
            params = PhysicalParams.from_n(nu, omega, n_big)
            rows = []
            for t in times:
                b = min(t, pulse)
                field = apply_kernel_integral(f0, t, 0.0, b, params)
                rows.append(block_norms(field, besov.p, partition))
            series = np.array(rows)
            for sign, val in _cl_pair(series, times, besov.s, besov.r, alpha, partition).items():
                records.append(ScalingRecord(nu, sign, val / base))
    return ScalingFit("duhamel", alpha, records)
