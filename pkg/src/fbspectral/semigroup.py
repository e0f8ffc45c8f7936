"""Stokes-Coriolis-stratification semigroup as a per-mode 4x4 multiplier.

For solenoidal-augmented data the linear flow is

    T(t) vhat = exp(-nu |xi|^2 t) [cos(w t) M1 + sin(w t) M2 + M3] vhat,
    w = |xi|' / |xi|,  |xi|' = sqrt(N^2 (xi1^2 + xi2^2) + Omega^2 xi3^2),

where M1 and M3 project onto the oscillating and the steady part of the
rotation/buoyancy coupling and M2 = -P B P / w is the skew generator
restricted to the solenoidal subspace.  Where ``|xi|' = 0`` the coupling
vanishes on that subspace and the fallback ``M1 = I, M2 = M3 = 0`` is used;
such points are reported through ``fallback`` masks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral_core import (PhysicalParams, SpectralField, UsageError, N_COMPONENTS)


def xi_prime(xi, params: PhysicalParams):
    """``sqrt(N^2 xi1^2 + N^2 xi2^2 + Omega^2 xi3^2)`` along the last axis of ``xi``."""
    xi = np.asarray(xi, dtype=float)
    n2 = params.n_big ** 2
    return np.sqrt(n2 * (xi[..., 0] ** 2 + xi[..., 1] ** 2) + params.omega ** 2 * xi[..., 2] ** 2)


class _Geometry:
    """Symbols needed by the multipliers at a set of frequencies (broadcastable arrays)."""

    def __init__(self, x1, x2, x3, params: PhysicalParams):
        self.x = (x1, x2, x3)
        self.params = params
        om, nb = params.omega, params.n_big
        self.h2 = x1 * x1 + x2 * x2
        self.r2 = self.h2 + x3 * x3
        self.r = np.sqrt(self.r2)
        self.rp2 = nb * nb * self.h2 + om * om * x3 * x3
        self.rp = np.sqrt(self.rp2)
        self.fallback = self.rp2 == 0
        zero = self.r2 == 0
        with np.errstate(divide="ignore", invalid="ignore"):
            self.inv_rp2 = np.where(self.fallback, 0.0, 1.0 / self.rp2)
            self.inv_rrp = np.where(self.fallback, 0.0, 1.0 / (self.r * self.rp))
            self.freq = np.where(zero, 0.0, self.rp / np.where(zero, 1.0, self.r))

    def m1(self, i, j):
        """Entry (i, j) of M1 (without the fallback identity)."""
        x1, x2, x3 = self.x
        om, nb = self.params.omega, self.params.n_big
        table = {
            (0, 0): lambda: om * om * x3 * x3, (0, 2): lambda: -nb * nb * x1 * x3,
            (0, 3): lambda: om * nb * x2 * x3,
            (1, 1): lambda: om * om * x3 * x3, (1, 2): lambda: -nb * nb * x2 * x3,
            (1, 3): lambda: -om * nb * x1 * x3,
            (2, 0): lambda: -om * om * x1 * x3, (2, 1): lambda: -om * om * x2 * x3,
            (2, 2): lambda: nb * nb * self.h2,
            (3, 0): lambda: om * nb * x2 * x3, (3, 1): lambda: -om * nb * x1 * x3,
            (3, 3): lambda: nb * nb * self.h2,
        }
        f = table.get((i, j))
        return None if f is None else f() * self.inv_rp2

    def m2(self, i, j):
        x1, x2, x3 = self.x
        om, nb = self.params.omega, self.params.n_big
        table = {
            (0, 1): lambda: om * x3 * x3, (0, 2): lambda: -om * x2 * x3, (0, 3): lambda: -nb * x1 * x3,
            (1, 0): lambda: -om * x3 * x3, (1, 2): lambda: om * x1 * x3, (1, 3): lambda: -nb * x2 * x3,
            (2, 0): lambda: om * x2 * x3, (2, 1): lambda: -om * x1 * x3, (2, 3): lambda: nb * self.h2,
            (3, 0): lambda: nb * x1 * x3, (3, 1): lambda: nb * x2 * x3, (3, 2): lambda: -nb * self.h2,
        }
        f = table.get((i, j))
        return None if f is None else f() * self.inv_rrp

    def m3(self, i, j):
        x1, x2, x3 = self.x
        om, nb = self.params.omega, self.params.n_big
        table = {
            (0, 0): lambda: nb * nb * x2 * x2, (0, 1): lambda: -nb * nb * x1 * x2,
            (0, 3): lambda: -nb * om * x2 * x3,
            (1, 0): lambda: -nb * nb * x1 * x2, (1, 1): lambda: nb * nb * x1 * x1,
            (1, 3): lambda: nb * om * x1 * x3,
            (3, 0): lambda: -nb * om * x2 * x3, (3, 1): lambda: nb * om * x1 * x3,
            (3, 3): lambda: om * om * x3 * x3,
        }
        f = table.get((i, j))
        return None if f is None else f() * self.inv_rp2

    def combine(self, coef1, coef2, coef3, vec):
        """``(coef1 M1 + coef2 M2 + coef3 M3) vec`` with the fallback identity on M1."""
        out = []
        for i in range(N_COMPONENTS):
            acc = None
            for j in range(N_COMPONENTS):
                if vec[j] is None:
                    continue
                e = None
                for coef, entry in ((coef1, self.m1(i, j)), (coef2, self.m2(i, j)), (coef3, self.m3(i, j))):
                    if entry is None:
                        continue
                    e = coef * entry if e is None else e + coef * entry
                if i == j:
                    fb = np.where(self.fallback, coef1, 0.0)
                    e = fb if e is None else e + fb
                if e is None:
                    continue
                term = e * vec[j]
                acc = term if acc is None else acc + term
            out.append(acc)
        return out


@dataclass(frozen=True)
class MultiplierMatrices:
    """M1, M2, M3 with shape ``xi.shape[:-1] + (4, 4)`` and the fallback mask."""

    m1: np.ndarray
    m2: np.ndarray
    m3: np.ndarray
    fallback: np.ndarray


def multiplier_matrices(xi, params: PhysicalParams) -> MultiplierMatrices:
    """Evaluate M1, M2, M3 at one frequency (shape (3,)) or a stack (shape (..., 3))."""
    xi = np.asarray(xi, dtype=float)
    g = _Geometry(xi[..., 0], xi[..., 1], xi[..., 2], params)
    shape = xi.shape[:-1] + (N_COMPONENTS, N_COMPONENTS)
    mats = [np.zeros(shape) for _ in range(3)]
    for i in range(N_COMPONENTS):
        for j in range(N_COMPONENTS):
            for mat, getter in zip(mats, (g.m1, g.m2, g.m3)):
                e = getter(i, j)
                if e is not None:
                    mat[..., i, j] = e
        mats[0][..., i, i] += np.where(g.fallback, 1.0, 0.0)
    return MultiplierMatrices(mats[0], mats[1], mats[2], np.asarray(g.fallback))


def printed_m2(xi, params: PhysicalParams) -> np.ndarray:
    """The sine-coefficient matrix in its commonly printed form, for comparison only.

    It differs from :func:`multiplier_matrices` by an overall sign and by
    ``xi1^2 + xi3^2`` in place of ``xi1^2 + xi2^2`` in its last two rows; with
    it ``T(s) T(t) != T(s + t)``.
    """
    xi = np.asarray(xi, dtype=float)
    x1, x2, x3 = xi[..., 0], xi[..., 1], xi[..., 2]
    om, nb = params.omega, params.n_big
    d = np.linalg.norm(xi, axis=-1) * xi_prime(xi, params)
    z = np.zeros_like(x1)
    m = np.stack([
        np.stack([z, -om * x3 ** 2, om * x2 * x3, nb * x1 * x3], -1),
        np.stack([om * x3 ** 2, z, -om * x1 * x3, nb * x2 * x3], -1),
        np.stack([-om * x2 * x3, om * x1 * x3, z, -nb * (x1 ** 2 + x3 ** 2)], -1),
        np.stack([-nb * x1 * x3, -nb * x2 * x3, nb * (x1 ** 2 + x3 ** 2), z], -1),
    ], -2)
    return m / d[..., None, None]


def time_factors(geometry: _Geometry, t: float):
    """``(cos(w t), sin(w t), 1) * exp(-nu |xi|^2 t)``."""
    decay = np.exp(-geometry.params.nu * geometry.r2 * t)
    phase = geometry.freq * t
    return np.cos(phase) * decay, np.sin(phase) * decay, decay


def phi1(w):
    """``(exp(w) - 1) / w`` for complex or real arrays, accurate near 0."""
    w = np.asarray(w)
    small = np.abs(w) < 1e-8
    safe = np.where(small, 1.0, w)
    return np.where(small, 1.0 + w / 2 + w * w / 6, np.expm1(safe) / safe)


def kernel_integrals(geometry: _Geometry, t: float, a: float, b: float):
    """Per-mode ``int_a^b (cos, sin, 1)(w (t - s)) exp(-nu |xi|^2 (t - s)) ds``.

    Evaluated in closed form via the complex exponential antiderivative;
    requires ``a <= b <= t``.
    """
    if not (a <= b <= t + 1e-14 * max(1.0, abs(t))):
        raise UsageError(f"kernel interval [{a}, {b}] must end before t={t}")
    h = b - a
    lam = -geometry.params.nu * geometry.r2
    z = lam + 1j * geometry.freq
    lag = max(t - b, 0.0)
    osc = np.exp(z * lag) * h * phi1(z * h)
    steady = np.exp(lam * lag) * h * phi1(lam * h)
    return osc.real, osc.imag, np.real(steady)


def _support(field: SpectralField):
    """Where the field is nonzero: ``("points", idx)``, ``("box", axes)`` or None when dense."""
    nz = np.any(field.data != 0, axis=0)
    count = int(np.count_nonzero(nz))
    if count <= 0.05 * nz.size:
        return "points", np.nonzero(nz)
    axes = tuple(np.nonzero(np.any(nz, axis=tuple(b for b in range(3) if b != a)))[0] for a in range(3))
    if np.prod([len(a) for a in axes]) <= 0.5 * nz.size:
        return "box", axes
    return None


def _apply(field: SpectralField, params: PhysicalParams, coefficients) -> SpectralField:
    """Apply ``c1 M1 + c2 M2 + c3 M3`` where ``coefficients(geometry)`` gives (c1, c2, c3).

    Sparse fields are evaluated on their support (scattered points or the
    bounding index box) only.
    """
    grid = field.grid
    support = _support(field)
    k = grid.wavenumbers
    if support is None:
        sub = (slice(None),) * 3
        g = _Geometry(*grid.axes, params)
    elif support[0] == "points":
        sub = support[1]
        g = _Geometry(k[sub[0]], k[sub[1]], k[sub[2]], params)
    else:
        sub = np.ix_(*support[1])
        g = _Geometry(k[sub[0]], k[sub[1]], k[sub[2]], params)
    vec = [field.data[c][sub] for c in range(N_COMPONENTS)]
    out = g.combine(*coefficients(g), vec)
    data = np.zeros_like(field.data)
    for c in range(N_COMPONENTS):
        if out[c] is not None:
            data[c][sub] = out[c]
    return SpectralField(grid, data, field.real)


def apply_semigroup(field: SpectralField, t: float, params: PhysicalParams) -> SpectralField:
    """``T(t) field``; exact per mode, zero mode stays zero."""
    if t < 0:
        raise UsageError("semigroup time must be nonnegative")
    return _apply(field, params, lambda g: time_factors(g, t))


def apply_kernel_integral(field: SpectralField, t: float, a: float, b: float,
                          params: PhysicalParams) -> SpectralField:
    """``int_a^b T(t - s) ds`` applied to ``field`` (exact per mode)."""
    return _apply(field, params, lambda g: kernel_integrals(g, t, a, b))


def helmholtz_project(field: SpectralField) -> SpectralField:
    """Leray projection ``delta_jk - xi_j xi_k / |xi|^2`` on the velocity; 4th component kept."""
    grid = field.grid
    xs = grid.axes
    r2 = np.where(grid.norm_sq == 0, 1.0, grid.norm_sq)
    d = field.data
    dot = (xs[0] * d[0] + xs[1] * d[1] + xs[2] * d[2]) / r2
    out = np.empty_like(d)
    for c in range(3):
        out[c] = d[c] - xs[c] * dot
    out[3] = d[3]
    return SpectralField(grid, out, field.real)


def project_vector(xi, vec) -> np.ndarray:
    """Leray projection of 4-vectors ``vec[..., 4]`` at frequencies ``xi[..., 3]``."""
    xi = np.asarray(xi, dtype=float)
    vec = np.asarray(vec)
    r2 = np.sum(xi * xi, axis=-1)
    dot = np.sum(xi * vec[..., :3], axis=-1) / np.where(r2 == 0, 1.0, r2)
    out = np.array(vec, copy=True)
    out[..., :3] = vec[..., :3] - xi * dot[..., None]
    return out
