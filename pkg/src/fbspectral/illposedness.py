"""Norm inflation of the second Picard iterate for high-frequency cube data.

The data ``f^M`` puts divergence-free mass ``i 2^j / sqrt(M) (xi2, -xi1, 0, 0) / |xi|``
on unit cubes centred at ``+-2^j e2`` for ``j = M..2M``.  Its
``FB^{-1}_{1,r}`` norm decays like ``M^{-1/2 + 1/r}`` while the second iterate
``A2 = B(T f, T f)`` keeps an O(1) low-frequency component, which is
detected on a small box ``E`` near the origin.

``A2`` is evaluated semi-analytically: for each frequency node in ``E`` the
convolution is a sum over pairs of cubes of Gauss quadrature in ``eta``, and
the time integral is done in closed form.  Writing every time factor as a
combination of exponentials ``exp(p t)`` with
``p in {lam + i w, lam - i w, lam}``, the double integral reduces to

    int_0^t exp(p''(t - s)) exp((p + p') s) ds
        = (exp((p + p') t) - exp(p'' t)) / (p + p' - p'').
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .littlewood_paley import annulus_profile, ell_r
from .quadrature import batched_box_rule, box_rule
from .semigroup import multiplier_matrices, project_vector, xi_prime, phi1
from .spectral_core import (ConfigurationError, FrequencyGrid, PhysicalParams, SpectralField,
                            UsageError)

DEFAULT_E = ((0.5, 0.75), (0.25, 0.5), (-0.25, 0.25))

# time-factor coefficients: cos = (e^{+} + e^{-}) / 2, sin = (e^{+} - e^{-}) / 2i, steady = e^{0}
_COEF = np.array([[0.5, 0.5, 0.0],
                  [0.5 / 1j, -0.5 / 1j, 0.0],
                  [0.0, 0.0, 1.0]], dtype=complex)


class ResolutionError(UsageError):
    """Lattice too coarse for the requested data."""


def _default_params() -> PhysicalParams:
    return PhysicalParams.from_n(1.0, 1.0, 1.0)


@dataclass(frozen=True)
class CounterexampleConfig:
    """Inflation experiment settings.

    ``t_window=None`` selects the admissible window
    ``[1 / (nu 4^M), 1 / N]``.  ``r <= 2`` is accepted as a control run.
    """

    m_big: int
    r: float = 4.0
    params: PhysicalParams = field(default_factory=_default_params)
    t_window: tuple | None = None
    quad_order_eta: int = 8
    quad_points_xi: int = 6
    e_region: tuple = DEFAULT_E
    n_times: int = 16

    def __post_init__(self):
        if int(self.m_big) != self.m_big or self.m_big < 1:
            raise ConfigurationError("M must be a positive integer")
        if not self.r >= 1:
            raise ConfigurationError("r must be >= 1")
        if self.quad_order_eta < 1 or self.quad_points_xi < 1 or self.n_times < 2:
            raise ConfigurationError("quadrature orders must be positive and n_times >= 2")
        if self.params.omega == 0:
            raise ConfigurationError("Omega = 0 is not supported: the remainder bounds divide by Omega")
        if not self.params.n_big > 0:
            raise ConfigurationError("N must be positive")
        box = np.asarray(self.e_region, dtype=float)
        if box.shape != (3, 2) or np.any(box[:, 1] <= box[:, 0]):
            raise ConfigurationError("e_region must be three increasing intervals")
        if box[0, 0] < 1e-3 or box[0, 1] > 1:
            raise ConfigurationError("e_region must satisfy 1/1000 <= xi1 <= 1")
        if math.sqrt(float(np.sum(np.max(box ** 2, axis=1)))) > 1 + 1e-12:
            raise ConfigurationError("e_region must lie inside |xi| <= 1")
        if not self.transverse_constant > 0:
            raise ConfigurationError("e_region needs inf (1 - xi1^2/|xi|^2) > 0")
        if self.t_window is not None:
            lo, hi = self.t_window
            if not 0 <= lo <= hi:
                raise ConfigurationError("t_window must satisfy 0 <= t_lo <= t_hi")

    @property
    def regime(self) -> str:
        return "stratification-dominant" if self.params.n_big >= abs(self.params.omega) else "rotation-dominant"

    @property
    def is_control(self) -> bool:
        return self.r <= 2

    @property
    def transverse_constant(self) -> float:
        """``inf_E (1 - xi1^2 / |xi|^2)``."""
        box = np.asarray(self.e_region, dtype=float)
        q_min = sum(0.0 if lo <= 0 <= hi else min(lo * lo, hi * hi) for lo, hi in box[1:])
        x1 = max(abs(box[0, 0]), abs(box[0, 1]))
        return q_min / (x1 * x1 + q_min) if q_min > 0 else 0.0

    @property
    def admissible_window(self) -> tuple[float, float]:
        nu, nb = self.params.nu, self.params.n_big
        return 1.0 / (nu * 4.0 ** self.m_big), 1.0 / nb

    @property
    def window(self) -> tuple[float, float]:
        return tuple(self.t_window) if self.t_window is not None else self.admissible_window

    def window_issue(self) -> str | None:
        """Why the window is infeasible, or None."""
        lo_adm, hi_adm = self.admissible_window
        lo, hi = self.window
        nu, nb = self.params.nu, self.params.n_big
        if self.m_big < 0.5 * math.log2(nb / nu):
            return f"M={self.m_big} below log2(N/nu)/2"
        if lo_adm > hi_adm:
            return "admissible window is empty"
        tol = 1e-12
        if lo < lo_adm * (1 - tol) or hi > hi_adm * (1 + tol) or lo > hi:
            return f"window [{lo}, {hi}] outside admissible [{lo_adm}, {hi_adm}]"
        return None

    @property
    def feasible(self) -> bool:
        return self.window_issue() is None

    def sample_times(self) -> np.ndarray:
        lo, hi = self.window
        return np.geomspace(lo, hi, self.n_times)


# data

@dataclass(frozen=True)
class CounterexampleProfile:
    """Closed-form ``f^M``; cubes are ``(j, sign)`` with centre ``sign 2^j e2``."""

    m_big: int

    @property
    def cubes(self) -> list[tuple[int, int]]:
        return [(j, s) for j in range(self.m_big, 2 * self.m_big + 1) for s in (1, -1)]

    def amplitude(self, j: int) -> float:
        return 2.0 ** j / math.sqrt(self.m_big)

    @staticmethod
    def centre(j: int, sign: int) -> np.ndarray:
        return np.array([0.0, sign * 2.0 ** j, 0.0])

    def real_profile(self, xi, j: int) -> np.ndarray:
        """``2^j / sqrt(M) (xi2, -xi1, 0, 0) / |xi|`` (without the cube indicator or the factor i)."""
        xi = np.asarray(xi, dtype=float)
        r = np.linalg.norm(xi, axis=-1)
        out = np.zeros(xi.shape[:-1] + (4,))
        out[..., 0] = xi[..., 1] / r
        out[..., 1] = -xi[..., 0] / r
        return out * self.amplitude(j)

    def __call__(self, xi, weights=None) -> np.ndarray:
        """``f^M(xi)``, shape ``xi.shape[:-1] + (4,)``; cube membership uses closed cubes."""
        xi = np.asarray(xi, dtype=float)
        out = np.zeros(xi.shape[:-1] + (4,), dtype=complex)
        for j, s in self.cubes:
            w = cube_weight(xi - self.centre(j, s)) if weights is None else weights(xi - self.centre(j, s))
            hit = w > 0
            if np.any(hit):
                out[hit] += 1j * w[hit, None] * self.real_profile(xi[hit], j)
        return out

    @property
    def max_frequency(self) -> float:
        return 2.0 ** (2 * self.m_big) + 1.0

    def sample(self, grid: FrequencyGrid) -> SpectralField:
        """Lattice samples with weight 1 inside a cube, 1/2 per axis on a face, 0 outside."""
        if grid.nyquist < self.max_frequency:
            raise ResolutionError(f"grid Nyquist {grid.nyquist} below 2^(2M)+1 = {self.max_frequency}")
        data = np.zeros((4,) + grid.shape, dtype=complex)
        k = grid.wavenumbers
        tol = 1e-9 / grid.box_scale
        for j, s in self.cubes:
            c = self.centre(j, s)
            w_ax = [_face_weight(k - c[i], tol) for i in range(3)]
            idx = [np.nonzero(w)[0] for w in w_ax]
            if any(len(i) == 0 for i in idx):
                continue
            sub = np.ix_(*idx)
            pts = np.stack(np.meshgrid(k[idx[0]], k[idx[1]], k[idx[2]], indexing="ij"), axis=-1)
            weight = np.einsum("i,j,k->ijk", w_ax[0][idx[0]], w_ax[1][idx[1]], w_ax[2][idx[2]])
            vals = 1j * weight[..., None] * self.real_profile(pts, j)
            for c_ in range(4):
                data[c_][sub] += vals[..., c_]
        if np.any(~grid.dealias_mask & np.any(data != 0, axis=0)):
            warnings.warn("sampled data extends beyond the dealiasing band", RuntimeWarning, stacklevel=2)
        return SpectralField(grid, data, real=True)


def _face_weight(offset: np.ndarray, tol: float) -> np.ndarray:
    a = np.abs(offset)
    return np.where(a < 1 - tol, 1.0, np.where(a <= 1 + tol, 0.5, 0.0))


def cube_weight(offset) -> np.ndarray:
    """Indicator of the closed unit cube ``max |offset_i| <= 1``."""
    return np.all(np.abs(np.asarray(offset)) <= 1.0, axis=-1).astype(float)


def build_counterexample(config: CounterexampleConfig, grid: FrequencyGrid | None = None):
    """Closed-form profile, plus its lattice samples when ``grid`` is given."""
    profile = CounterexampleProfile(config.m_big)
    if grid is None:
        return profile, None
    return profile, profile.sample(grid)


# norm of the data

def _cube_blocks(j: int) -> list[int]:
    """Dyadic blocks whose annulus meets the cube at ``2^j e2``."""
    c = 2.0 ** j
    r_lo = max(c - 1.0, 0.0)
    r_hi = math.sqrt((c + 1.0) ** 2 + 2.0)
    lo = math.floor(math.log2(r_lo / (8.0 / 3.0))) if r_lo > 0 else -60
    hi = math.ceil(math.log2(r_hi / 0.75))
    return [k for k in range(lo, hi + 1)
            if 0.75 * 2.0 ** k < r_hi and 8.0 / 3.0 * 2.0 ** k > r_lo]


def counterexample_blocks(config: CounterexampleConfig, order: int | None = None) -> dict[int, float]:
    """``2^-k || psi_k f^M ||_{L^1}`` per block ``k`` (Gauss quadrature on each cube)."""
    profile = CounterexampleProfile(config.m_big)
    order = order or config.quad_order_eta
    blocks: dict[int, float] = {}
    for j in range(config.m_big, 2 * config.m_big + 1):
        c = profile.centre(j, 1)
        nodes, weights = box_rule(c - 1.0, c + 1.0, order)
        r = np.linalg.norm(nodes, axis=-1)
        mag = profile.amplitude(j) * np.linalg.norm(nodes[:, :2], axis=-1) / r
        for k in _cube_blocks(j):
            # the cube at -2^j e2 contributes the same amount by symmetry
            val = 2.0 * float(np.sum(weights * annulus_profile(r * 2.0 ** -k) * mag))
            blocks[k] = blocks.get(k, 0.0) + 2.0 ** -k * val
    return dict(sorted(blocks.items()))


def counterexample_norm(config: CounterexampleConfig, order: int | None = None) -> float:
    """``|| f^M ||_{FB^{-1}_{1,r}}``."""
    return ell_r(list(counterexample_blocks(config, order).values()), config.r)


# second iterate

def contributing_pairs(config: CounterexampleConfig, box=None) -> list[tuple[tuple[int, int], tuple[int, int]]]:
    """Cube pairs ``(eta cube, xi - eta cube)`` whose convolution can reach ``box``.

    A pair is kept when ``c_eta + c_zeta + [-2, 2]^3`` meets the box; for boxes
    near the origin only opposite cubes of equal size survive.
    """
    box = np.asarray(config.e_region if box is None else box, dtype=float)
    profile = CounterexampleProfile(config.m_big)
    out = []
    for a in profile.cubes:
        for b in profile.cubes:
            s = profile.centre(*a) + profile.centre(*b)
            if np.all(s - 2.0 <= box[:, 1]) and np.all(s + 2.0 >= box[:, 0]):
                out.append((a, b))
    return out


@dataclass
class SecondIterate:
    """Fourier transform of ``A2(f^M)(t)`` at frequency nodes.

    Arrays carry a leading time axis.  ``value`` is (n_t, K, 4);
    ``k1, k2, k3`` are the main term and the two remainders, (n_t, K);
    ``k1_terms`` is (n_t, K, 3, 3) over ``(k, l)`` for the first row of the main
    term and ``j_terms`` is (n_t, K, 3, 3) over the time-factor pair ``(a, b)``
    of its ``(1, 1)`` entry; ``j133_signed`` is the signed steady-steady part.
    """

    times: np.ndarray
    xi: np.ndarray
    weights: np.ndarray
    value: np.ndarray
    k1: np.ndarray
    k2: np.ndarray
    k3: np.ndarray
    k1_terms: np.ndarray
    j_terms: np.ndarray
    j133_signed: np.ndarray

    def l1(self, values: np.ndarray) -> np.ndarray:
        """Quadrature over the nodes of ``values`` with shape (..., K)."""
        return np.sum(values * self.weights, axis=-1)

    @property
    def modulus(self) -> np.ndarray:
        return np.linalg.norm(self.value, axis=-1)

    @property
    def l1_value(self) -> np.ndarray:
        return self.l1(self.modulus)


def e_nodes(config: CounterexampleConfig) -> tuple[np.ndarray, np.ndarray]:
    """Tensor Gauss nodes and weights on ``E``."""
    box = np.asarray(config.e_region, dtype=float)
    return box_rule(box[:, 0], box[:, 1], config.quad_points_xi)


def _exponents(xi: np.ndarray, params: PhysicalParams) -> np.ndarray:
    """``(lam + i w, lam - i w, lam)`` along a new last axis."""
    r2 = np.sum(xi * xi, axis=-1)
    lam = -params.nu * r2
    w = xi_prime(xi, params) / np.sqrt(r2)
    return np.stack([lam + 1j * w, lam - 1j * w, lam + 0j], axis=-1)


def _mode_vectors(mats, profile_values, rows: int) -> np.ndarray:
    """``U_a = M_a F`` for a = 1, 2, 3, first ``rows`` components; F has only two nonzero entries."""
    f = profile_values[..., :2, None]
    return np.stack([(m[..., :rows, :2] @ f)[..., 0] for m in (mats.m1, mats.m2, mats.m3)], axis=-2)


def _time_kernel(denom, psum, pxi, w, t):
    """``w int_0^t exp(p''(t - s)) exp(P s) ds`` for all (P, p''), shape (K, Q, 9, 3)."""
    x = denom * t
    if np.min(np.abs(x)) < 1e-3:
        return w[..., None, None] * t * np.exp(pxi * t)[:, None, None, :] * phi1(x)
    return (np.exp(psum * t)[..., None] - np.exp(pxi * t)[:, None, None, :]) * (w[..., None, None] / denom)


def _pair_contribution(config, profile, xi, eta_cube, zeta_cube, times, out_kl, out_j):
    """Add one cube pair's contribution at the nodes ``xi`` (K, 3) for every time."""
    params = config.params
    ce, cz = profile.centre(*eta_cube), profile.centre(*zeta_cube)
    lower = np.maximum(ce - 1.0, xi - cz - 1.0)
    upper = np.minimum(ce + 1.0, xi - cz + 1.0)
    if np.all(np.any(upper <= lower, axis=1)):
        return
    eta, w = batched_box_rule(lower, upper, config.quad_order_eta)
    zeta = xi[:, None, :] - eta
    n_k, n_q = w.shape
    ue = _mode_vectors(multiplier_matrices(eta, params), profile.real_profile(eta, eta_cube[0]), 4)
    uz = _mode_vectors(multiplier_matrices(zeta, params), profile.real_profile(zeta, zeta_cube[0]), 3)
    # amplitudes in the exponential basis: B_sigma = sum_a c[a, sigma] U_a
    be = np.einsum("as,nqal->nqsl", _COEF, ue)
    bz = np.einsum("as,nqak->nqsk", _COEF, uz)
    z = np.einsum("nqsk,nqtl->nqstkl", bz, be).reshape(n_k, n_q * 9, 12)
    # first components per time-factor pair (a, b), for the J diagnostics
    qj = np.einsum("nqa,nqb->nqab", uz[..., 0], ue[..., 0]).reshape(n_k, n_q, 9)
    pe = _exponents(eta, params)
    pz = _exponents(zeta, params)
    pxi = _exponents(xi, params)
    psum = (pz[..., :, None] + pe[..., None, :]).reshape(n_k, n_q, 9)
    denom = psum[..., :, None] - pxi[:, None, None, :]
    for it, t in enumerate(times):
        if t == 0:
            continue
        wi = _time_kernel(denom, psum, pxi, w, t)
        out_kl[it] += np.matmul(wi.reshape(n_k, n_q * 9, 3).transpose(0, 2, 1), z)
        out_j[it] += np.matmul(wi.reshape(n_k, n_q, 27).transpose(0, 2, 1), qj)


def second_iterate(config: CounterexampleConfig, xi, weights, times) -> SecondIterate:
    """Fourier transform of ``A2(f^M)(t) = B(T f^M, T f^M)(t)`` at nodes ``xi`` (K, 3)."""
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    weights = np.broadcast_to(np.asarray(weights, dtype=float), xi.shape[:1])
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(times < 0):
        raise UsageError("times must be nonnegative")
    if np.any(np.linalg.norm(xi, axis=1) == 0):
        raise UsageError("xi = 0 is excluded")
    profile = CounterexampleProfile(config.m_big)
    n_k, n_t = xi.shape[0], len(times)
    acc_kl = np.zeros((n_t, n_k, 3, 12), dtype=complex)
    acc_j = np.zeros((n_t, n_k, 27, 9), dtype=complex)
    chunk = max(1, 32768 // config.quad_order_eta ** 3)
    box = np.stack([xi.min(axis=0), xi.max(axis=0)], axis=1)
    for eta_cube, zeta_cube in contributing_pairs(config, box):
        for s in range(0, n_k, chunk):
            sl = slice(s, s + chunk)
            _pair_contribution(config, profile, xi[sl], eta_cube, zeta_cube, times,
                               acc_kl[:, sl], acc_j[:, sl])
    return _assemble(config, xi, weights, times, acc_kl, acc_j)


def _assemble(config, xi, weights, times, acc_kl, acc_j) -> SecondIterate:
    n_t, n_k = acc_kl.shape[:2]
    # the data carries i twice and the divergence once: overall -i
    w_bar = acc_kl.reshape(n_t, n_k, 3, 3, 4)                     # (sigma'', k, l)
    vkl = -1j * np.einsum("ms,tqskl->tqmkl", _COEF, w_bar)       # (m, k, l)
    v = np.einsum("qk,tqmkl->tqml", xi, vkl)                      # (m, l)
    pv = project_vector(xi[None, :, None, :], v)
    mats = multiplier_matrices(xi, config.params)
    stack = np.stack([mats.m1, mats.m2, mats.m3], axis=1)          # (K, m, 4, 4)
    per_m = np.einsum("kmij,tkmj->tkmi", stack, pv)
    value = per_m.sum(axis=2)
    k1 = np.abs(pv[:, :, 0, 0])
    k2 = np.linalg.norm(per_m[:, :, 1], axis=-1)
    k3 = np.linalg.norm(np.einsum("kij,tkj->tki", mats.m3, pv[:, :, 2] - pv[:, :, 0]), axis=-1)
    r2 = np.sum(xi * xi, axis=1)
    proj_row = np.concatenate([(1.0 - xi[:, :1] ** 2 / r2[:, None]),
                               -xi[:, :1] * xi[:, 1:3] / r2[:, None]], axis=1)   # first row of P
    k1_terms = np.abs(proj_row[None, :, None, :] * xi[None, :, :, None] * vkl[:, :, 0, :, :3])
    # J: first components only, outer factor cos (m = 1)
    cj = np.einsum("as,bt,u->stuab", _COEF, _COEF, _COEF[0]).reshape(27, 9)
    r_ab = -np.einsum("xy,tkxy->tky", cj, acc_j).reshape(n_t, n_k, 3, 3)
    weight = (1.0 - xi[:, 0] ** 2 / r2) * xi[:, 0]
    j_signed = weight[None, :, None, None] * r_ab
    return SecondIterate(times, xi, np.asarray(weights), value, k1, k2, k3, k1_terms,
                         np.abs(j_signed), j_signed[..., 2, 2].real)


def _check_time(config: CounterexampleConfig, t: float):
    issue = config.window_issue()
    if issue is not None:
        raise UsageError(issue)
    lo, hi = config.window
    if not lo * (1 - 1e-12) <= t <= hi * (1 + 1e-12):
        raise UsageError(f"t={t} outside the window [{lo}, {hi}]")


def second_iterate_on_E(config: CounterexampleConfig, t, strict: bool = True) -> SecondIterate:
    """``A2(f^M)(t)`` on the Gauss nodes of ``E``, for one time or an array of times.

    With ``strict`` every time must lie in the admissible window; ``strict=False``
    also allows ``t = 0`` and times outside it.
    """
    times = np.atleast_1d(np.asarray(t, dtype=float))
    if strict:
        for s in times:
            _check_time(config, float(s))
    xi, w = e_nodes(config)
    return second_iterate(config, xi, w, times)


def j133_bracket(config: CounterexampleConfig) -> tuple[float, float]:
    """Range of the steady-steady integrand factor over all pairing supports reached from ``E``.

    The factor is ``g(xi - eta) g(eta)`` with
    ``g(x) = N^2 |x_h|^2 / |x|'^2 * x2 / |x|``, sampled at the quadrature nodes.
    """
    params = config.params
    profile = CounterexampleProfile(config.m_big)
    xi, _ = e_nodes(config)

    def g(x):
        h2 = x[..., 0] ** 2 + x[..., 1] ** 2
        return params.n_big ** 2 * h2 / xi_prime(x, params) ** 2 * x[..., 1] / np.linalg.norm(x, axis=-1)

    lo, hi = math.inf, -math.inf
    for eta_cube, zeta_cube in contributing_pairs(config):
        ce, cz = profile.centre(*eta_cube), profile.centre(*zeta_cube)
        lower = np.maximum(ce - 1.0, xi - cz - 1.0)
        upper = np.minimum(ce + 1.0, xi - cz + 1.0)
        eta, w = batched_box_rule(lower, upper, config.quad_order_eta)
        vals = (g(xi[:, None, :] - eta) * g(eta))[w > 0]
        if vals.size:
            lo, hi = min(lo, float(vals.min())), max(hi, float(vals.max()))
    return lo, hi


# detection constant

def e_blocks(config: CounterexampleConfig) -> list[int]:
    """Dyadic blocks whose annulus meets ``E``."""
    box = np.asarray(config.e_region, dtype=float)
    near = np.where((box[:, 0] <= 0) & (box[:, 1] >= 0), 0.0, np.min(np.abs(box), axis=1))
    r_lo = float(np.linalg.norm(near))
    r_hi = float(np.linalg.norm(np.max(np.abs(box), axis=1)))
    lo = math.floor(math.log2(r_lo / (8.0 / 3.0))) if r_lo > 0 else -60
    hi = math.ceil(math.log2(r_hi / 0.75))
    return [k for k in range(lo, hi + 1) if 0.75 * 2.0 ** k < r_hi and 8.0 / 3.0 * 2.0 ** k > r_lo]


def detection_constant(config: CounterexampleConfig) -> float:
    """``C_E`` with ``||g||_{FB^{-1}_{1,r}} >= C_E ||g||_{L^1(E)}`` for every ``r``.

    The blocks meeting ``E`` sum to one there, so the largest of
    ``2^-k ||psi_k g||_{L^1(E)}`` is at least ``2^-k_max / #blocks`` times the total.
    """
    blocks = e_blocks(config)
    return 2.0 ** -max(blocks) / len(blocks)


def block_lower_bound(result: SecondIterate, r: float) -> np.ndarray:
    """``|| {2^-k ||psi_k A2||_{L^1(E)}}_k ||_{l^r}`` per time."""
    radius = np.linalg.norm(result.xi, axis=1)
    mod = result.modulus
    out = []
    for it in range(len(result.times)):
        vals = []
        for k in range(-60, 8):
            psi = annulus_profile(radius * 2.0 ** -k)
            if np.any(psi > 0):
                vals.append(2.0 ** -k * float(np.sum(result.weights * psi * mod[it])))
        out.append(ell_r(vals, r))
    return np.array(out)


# experiment

@dataclass
class InflationRow:
    m_big: int
    feasible: bool
    note: str
    data_norm: float
    floor: float = math.nan
    t_floor: float = math.nan
    block_floor: float = math.nan
    k1: float = math.nan
    k2: float = math.nan
    k3: float = math.nan
    j133_floor: float = math.nan
    remainder_ratio: float = math.nan
    bracket: tuple = (math.nan, math.nan)


@dataclass
class InflationReport:
    rows: list
    per_time: list
    r: float
    c_e: float
    ratio_threshold: float = 1.8
    spread_limit: float = 3.0

    @property
    def data_norms(self) -> np.ndarray:
        return np.array([row.data_norm for row in self.rows])

    @property
    def floors(self) -> np.ndarray:
        return np.array([row.floor for row in self.rows])

    def checks(self) -> dict:
        rows = self.rows
        norms = self.data_norms
        floors = self.floors
        ok_rows = all(row.feasible for row in rows)
        finite = np.all(np.isfinite(floors)) and len(rows) > 0
        return {
            "all_feasible": bool(ok_rows),
            "data_norm_decreasing": bool(np.all(np.diff(norms) < 0)),
            "floor_positive": bool(finite and np.all(floors > 0)),
            "floor_spread": bool(finite and np.max(floors) <= self.spread_limit * np.min(floors)),
            "main_term_positive": bool(all(row.j133_floor > 0 for row in rows)),
            "remainder_scaling": bool(all(row.remainder_ratio >= self.ratio_threshold for row in rows)),
        }

    @property
    def verdict(self) -> bool:
        return all(self.checks().values())

    def exponent(self) -> float:
        """Least-squares slope of ``log data_norm`` against ``log M``."""
        m = np.array([row.m_big for row in self.rows], dtype=float)
        if len(np.unique(m)) < 2:
            return math.nan
        return float(np.polyfit(np.log(m), np.log(self.data_norms), 1)[0])

    def summary(self) -> str:
        failed = [k for k, v in self.checks().items() if not v]
        state = "PASS" if self.verdict else "FAIL (" + ", ".join(failed) + ")"
        floors = self.floors[np.isfinite(self.floors)]
        span = f"[{floors.min():.4g}, {floors.max():.4g}]" if floors.size else "n/a"
        return (f"inflation r={self.r:g}: data-norm exponent {self.exponent():.3f}, "
                f"floor range {span}: {state}")


def _run_one(config: CounterexampleConfig):
    norm = counterexample_norm(config)
    issue = config.window_issue()
    if issue is not None:
        return InflationRow(config.m_big, False, issue, norm), []
    times = config.sample_times()
    lo, hi = config.window
    t_mid = math.sqrt(lo * hi)
    all_times = np.concatenate([times, [t_mid, t_mid / 2]])
    res = second_iterate_on_E(config, all_times, strict=False)
    c_e = detection_constant(config)
    n = len(times)
    l1 = res.l1_value
    bound = c_e * l1
    block = block_lower_bound(res, config.r)
    k1, k2, k3 = res.l1(res.k1), res.l1(res.k2), res.l1(res.k3)
    j133 = res.l1(res.j_terms[..., 2, 2])
    per_time = [(config.m_big, float(t), float(l1[i]), float(bound[i]), float(block[i]), float(k1[i]),
                 float(k2[i]), float(k3[i]), float(j133[i])) for i, t in enumerate(times)]
    i_min = int(np.argmin(bound[:n]))
    remainder = k2 + k3
    ratio = remainder[n] / remainder[n + 1] if remainder[n + 1] > 0 else math.inf
    row = InflationRow(config.m_big, True, "", norm, float(bound[i_min]), float(times[i_min]),
                       float(np.min(block[:n])), float(k1[i_min]), float(k2[i_min]), float(k3[i_min]),
                       float(np.min(j133[:n])), float(ratio), j133_bracket(config))
    return row, per_time


def inflation_experiment(m_values: Sequence[int], template: CounterexampleConfig,
                         workers: int = 1) -> InflationReport:
    """Data norm and E-restricted floor of ``||A2(f^M)(t)||`` over the window for each ``M``.

    Rows with an infeasible window are kept and flagged.  Rows come back in the
    order of ``m_values`` whatever the worker count.
    """
    configs = [replace(template, m_big=int(m)) for m in m_values]
    if workers > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, configs))
    else:
        results = [_run_one(c) for c in configs]
    rows = [r for r, _ in results]
    per_time = [p for _, ps in results for p in ps]
    return InflationReport(rows, per_time, template.r, detection_constant(template))
