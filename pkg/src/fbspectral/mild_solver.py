"""Bilinear Duhamel operator and Picard iteration for the mild formulation

    v(t) = T(t) v0 - B(v, v)(t),
    B(v, w)(t) = int_0^t T(t - s) P div(v(s) (x) w(s)) ds.

Time is discretised on a uniform grid.  On each sub-interval the flux is
frozen at the midpoint state and the semigroup factor is integrated exactly
per mode, so stiff viscous decay needs no step restriction.
"""

from __future__ import annotations

import math
import warnings
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .littlewood_paley import (BesovParams, CoverageWarning, DyadicPartition, block_norms,
                               chemin_lerner_from_series, fb_norm, partition_for_grid)
from .semigroup import apply_kernel_integral, apply_semigroup, helmholtz_project
from .spectral_core import (ConfigurationError, PhysicalParams, SpectralField, Trajectory,
                            UsageError, divergence, pointwise_product_physical)

__all__ = ["SolverConfig", "Trajectory", "nonlinear_flux", "duhamel_bilinear", "duhamel_trajectory",
           "picard_solve", "PicardDiagnostics", "wellposedness_probe", "ProbeReport", "semigroup_orbit",
           "x_norm"]


@dataclass(frozen=True)
class SolverConfig:
    params: PhysicalParams
    besov: BesovParams
    t_end: float = 1.0
    n_time: int = 16
    alpha: float = 0.5
    picard_tol: float = 1e-10
    max_iters: int = 50
    nonlinear: bool = True
    partition: DyadicPartition | None = None

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ConfigurationError("alpha must lie in (0, 1)")
        if self.n_time < 8:
            raise ConfigurationError("n_time must be >= 8")
        if not self.t_end > 0:
            raise ConfigurationError("t_end must be positive")
        if not (self.picard_tol > 0 and self.max_iters >= 1):
            raise ConfigurationError("picard_tol > 0 and max_iters >= 1 required")

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.t_end, self.n_time)


class _LazyFields(Sequence):
    """Sequence whose items are computed on access, keeping a small cache."""

    def __init__(self, n: int, make, cache_size: int = 3):
        self._n = n
        self._make = make
        self._cache: OrderedDict = OrderedDict()
        self._size = cache_size

    def __len__(self):
        return self._n

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[k] for k in range(*i.indices(self._n))]
        if i < 0:
            i += self._n
        if not 0 <= i < self._n:
            raise IndexError(i)
        if i in self._cache:
            self._cache.move_to_end(i)
            return self._cache[i]
        val = self._make(i)
        self._cache[i] = val
        if len(self._cache) > self._size:
            self._cache.popitem(last=False)
        return val


def semigroup_orbit(v0: SpectralField, times, params: PhysicalParams, lazy: bool = True) -> Trajectory:
    """``T(t) v0`` at the given times; lazily evaluated by default."""
    times = np.asarray(times, dtype=float)
    make = lambda i: apply_semigroup(v0, float(times[i]), params)
    fields = _LazyFields(len(times), make) if lazy else [make(i) for i in range(len(times))]
    return Trajectory(times, fields)


def nonlinear_flux(v: SpectralField, w: SpectralField) -> SpectralField:
    """``P (i sum_k xi_k (v_k w_l)^)_l``: projected divergence of the dealiased tensor product."""
    if v.grid != w.grid:
        raise UsageError("fields live on different grids")
    if not np.any(v.data) or not np.any(w.data):
        return SpectralField.zeros(v.grid, v.real and w.real)
    return helmholtz_project(pointwise_product_physical(v, w).divergence_rows())


def _check_pair(v: Trajectory, w: Trajectory):
    if len(v) != len(w) or np.any(v.times != w.times):
        raise UsageError("trajectories must share their time grid")


def _midpoint_flux(v: Trajectory, w: Trajectory, i: int) -> SpectralField:
    vm = (v.fields[i] + v.fields[i + 1]).scale(0.5)
    wm = vm if w is v else (w.fields[i] + w.fields[i + 1]).scale(0.5)
    return nonlinear_flux(vm, wm)


def duhamel_bilinear(v: Trajectory, w: Trajectory, t: float, config: SolverConfig) -> SpectralField:
    """``B(v, w)(t)``; ``t`` must be one of the shared sample times."""
    _check_pair(v, w)
    times = v.times
    if t < 0 or t > times[-1] * (1 + 1e-12):
        raise UsageError(f"t={t} outside trajectory range [0, {times[-1]}]")
    k = int(np.argmin(np.abs(times - t)))
    if not math.isclose(times[k], t, rel_tol=1e-12, abs_tol=1e-15):
        raise UsageError("t must coincide with a trajectory sample")
    acc = SpectralField.zeros(v.grid, v.fields[0].real and w.fields[0].real)
    for i in range(k):
        flux = _midpoint_flux(v, w, i)
        acc = acc + apply_kernel_integral(flux, times[k], times[i], times[i + 1], config.params)
    return acc


def duhamel_trajectory(v: Trajectory, w: Trajectory, config: SolverConfig) -> list[SpectralField]:
    """``B(v, w)`` at every sample, by ``B_{i+1} = T(dt) B_i + int_{t_i}^{t_{i+1}} T(t_{i+1} - s) ds F_i``."""
    _check_pair(v, w)
    times = v.times
    out = [SpectralField.zeros(v.grid, v.fields[0].real and w.fields[0].real)]
    for i in range(len(times) - 1):
        flux = _midpoint_flux(v, w, i)
        step = apply_kernel_integral(flux, times[i + 1], times[i], times[i + 1], config.params)
        prev = out[-1]
        if np.any(prev.data):
            prev = apply_semigroup(prev, times[i + 1] - times[i], config.params)
        out.append(prev + step)
    return out


def x_norm(trajectory: Trajectory, config: SolverConfig, partition: DyadicPartition) -> float:
    """Sum of the two Chemin-Lerner norms with time exponents ``2/(1 -+ alpha)``.

    Regularities are ``s + 1 -+ alpha`` where ``s`` is the data regularity in
    ``config.besov``.
    """
    b = config.besov
    a = config.alpha
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CoverageWarning)
        series = np.array([block_norms(f, b.p, partition) for f in trajectory.fields])
    lo = chemin_lerner_from_series(trajectory.times, series, 2 / (1 - a), b.s + 1 - a, b.r, partition)
    hi = chemin_lerner_from_series(trajectory.times, series, 2 / (1 + a), b.s + 1 + a, b.r, partition)
    return lo + hi


def _difference(a: Trajectory, b: Trajectory) -> Trajectory:
    return Trajectory(a.times, [x - y for x, y in zip(a.fields, b.fields)])


@dataclass
class PicardDiagnostics:
    diff_norms: list = field(default_factory=list)
    ratios: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    diverged: bool = False
    residual: float = math.nan
    contraction_ratio: float = math.nan
    message: str = ""

    def rows(self):
        """``(iter, diff_norm, ratio, residual)`` per iteration; residual only on the last row."""
        out = []
        for i, d in enumerate(self.diff_norms):
            ratio = self.ratios[i - 1] if i >= 1 else math.nan
            res = self.residual if i == len(self.diff_norms) - 1 else math.nan
            out.append((i + 1, d, ratio, res))
        return out


def _linear_part(v0: SpectralField, config: SolverConfig) -> Trajectory:
    return semigroup_orbit(v0, config.times, config.params, lazy=False)


def picard_solve(v0: SpectralField, config: SolverConfig):
    """Iterate ``v^{n+1} = T(.) v0 - B(v^n, v^n)`` from ``v^0 = T(.) v0``.

    Stops when the X-norm of the update falls below ``picard_tol``, after
    ``max_iters`` iterations, or when the update ratio is >= 1 three times in a
    row (reported as divergence, returning the last iterate).
    """
    scale = max(v0.max_abs(), 1e-300)
    div = divergence(v0)
    r = v0.grid.norm
    if np.max(np.abs(div)) > 1e-10 * scale * max(float(np.max(r)), 1.0):
        raise UsageError("initial data must be divergence free")
    partition = config.partition or partition_for_grid(v0.grid)
    diag = PicardDiagnostics()
    linear = _linear_part(v0, config)
    current = linear
    streak = 0
    for it in range(config.max_iters):
        if config.nonlinear:
            with np.errstate(over="ignore", invalid="ignore"):
                b = duhamel_trajectory(current, current, config)
            nxt = Trajectory(linear.times, [l - bb for l, bb in zip(linear.fields, b)])
        else:
            nxt = linear
        d = x_norm(_difference(nxt, current), config, partition)
        diag.diff_norms.append(d)
        diag.iterations = it + 1
        if len(diag.diff_norms) >= 2:
            prev = diag.diff_norms[-2]
            ratio = d / prev if prev > 0 else (0.0 if d == 0 else math.inf)
            diag.ratios.append(ratio)
            streak = streak + 1 if not ratio < 1 else 0
        current = nxt
        if not math.isfinite(d):
            diag.diverged = True
            diag.message = "iterates overflowed"
            break
        if d < config.picard_tol:
            diag.converged = True
            break
        if streak >= 3:
            diag.diverged = True
            diag.message = "update ratio >= 1 for 3 consecutive iterations"
            break
    finite = [x for x in diag.ratios if math.isfinite(x)]
    diag.contraction_ratio = max(finite) if finite else 0.0
    if not diag.diverged:
        diag.residual = integral_residual(current, v0, config, partition)
    if not diag.converged and not diag.diverged:
        diag.message = "max_iters reached"
    return current, diag


def integral_residual(v: Trajectory, v0: SpectralField, config: SolverConfig,
                      partition: DyadicPartition | None = None) -> float:
    """X-norm of ``v - T(.) v0 + B(v, v)``."""
    partition = partition or partition_for_grid(v0.grid)
    linear = _linear_part(v0, config)
    if config.nonlinear:
        b = duhamel_trajectory(v, v, config)
    else:
        b = [SpectralField.zeros(v0.grid, v0.real)] * len(v)
    res = Trajectory(v.times, [x - l + bb for x, l, bb in zip(v.fields, linear.fields, b)])
    return x_norm(res, config, partition)


@dataclass(frozen=True)
class ProbeRow:
    amplitude: float
    converged: bool
    diverged: bool
    iterations: int
    final_diff: float
    sup_fb_norm: float
    max_jump: float


@dataclass(frozen=True)
class ProbeReport:
    rows: tuple
    threshold: float
    bracket: tuple

    @property
    def monotone(self) -> bool:
        """Converged amplitudes all lie below non-converged ones."""
        conv = [r.amplitude for r in self.rows if r.converged]
        bad = [r.amplitude for r in self.rows if not r.converged]
        return not conv or not bad or max(conv) < min(bad)


def _probe_one(v0: SpectralField, amp: float, config: SolverConfig, partition) -> ProbeRow:
    traj, diag = picard_solve(v0.scale(amp), config)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CoverageWarning)
        with np.errstate(over="ignore", invalid="ignore"):
            norms = np.array([fb_norm(f, config.besov, partition) for f in traj.fields])
    jump = float(np.max(np.abs(np.diff(norms)))) if len(norms) > 1 else 0.0
    final = diag.diff_norms[-1] if diag.diff_norms else 0.0
    return ProbeRow(float(amp), diag.converged, diag.diverged, diag.iterations, float(final),
                    float(np.max(norms)), jump)


def wellposedness_probe(v0: SpectralField, amplitudes, config: SolverConfig,
                        refine_steps: int = 0) -> ProbeReport:
    """Run the solver on ``a * v0`` for each amplitude and locate the convergence threshold.

    The threshold is the geometric mean of the largest convergent and the
    smallest non-convergent amplitude, optionally refined by ``refine_steps``
    geometric bisections; ``inf`` if every run converged.
    """
    partition = config.partition or partition_for_grid(v0.grid)
    rows = [_probe_one(v0, a, config, partition) for a in sorted(amplitudes)]
    conv = [r.amplitude for r in rows if r.converged]
    bad = [r.amplitude for r in rows if not r.converged]
    if not bad:
        return ProbeReport(tuple(rows), math.inf, (max(conv) if conv else 0.0, math.inf))
    lo = max([a for a in conv if a < min(bad)], default=0.0)
    hi = min(bad)
    for _ in range(refine_steps):
        if lo <= 0:
            break
        mid = math.sqrt(lo * hi)
        row = _probe_one(v0, mid, config, partition)
        rows.append(row)
        if row.converged:
            lo = mid
        else:
            hi = mid
    rows.sort(key=lambda r: r.amplitude)
    threshold = math.sqrt(lo * hi) if lo > 0 else hi
    return ProbeReport(tuple(rows), threshold, (lo, hi))
