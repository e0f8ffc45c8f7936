import math
from dataclasses import replace

import numpy as np
import pytest

from fbspectral.illposedness import (CounterexampleConfig, CounterexampleProfile, ResolutionError,
                                     build_counterexample, contributing_pairs, counterexample_blocks,
                                     counterexample_norm, detection_constant, e_blocks, e_nodes,
                                     inflation_experiment, j133_bracket, second_iterate,
                                     second_iterate_on_E)
from fbspectral.littlewood_paley import BesovParams, annulus_profile, ell_r
from fbspectral.mild_solver import SolverConfig, duhamel_bilinear, semigroup_orbit
from fbspectral.quadrature import batched_box_rule
from fbspectral.semigroup import multiplier_matrices, project_vector, xi_prime
from fbspectral.spectral_core import (ConfigurationError, PhysicalParams, UsageError, divergence,
                                      is_conjugate_symmetric, make_grid)


@pytest.mark.parametrize("kw", [
    dict(m_big=0), dict(r=0.5), dict(params=PhysicalParams.from_n(1, 0, 1)),
    dict(params=PhysicalParams.from_n(1, 1, 0)), dict(e_region=((0.0, 0.5), (0.2, 0.4), (0, 0.1))),
    dict(e_region=((0.5, 0.9), (0.5, 0.9), (0, 0.1))), dict(e_region=((0.5, 0.7), (-0.1, 0.1), (-0.1, 0.1))),
    dict(t_window=(0.5, 0.1)), dict(quad_order_eta=0),
])
def test_config_rejects(kw):
    kw.setdefault("m_big", 3)
    with pytest.raises(ConfigurationError):
        CounterexampleConfig(**kw)


def test_config_window_and_constants():
    c = CounterexampleConfig(3)
    assert c.window == (1 / 64, 1.0)
    assert c.feasible and not c.is_control and c.regime == "stratification-dominant"
    assert c.transverse_constant == pytest.approx(0.1)
    assert CounterexampleConfig(3, r=2).is_control
    times = c.sample_times()
    assert times[0] == pytest.approx(1 / 64) and times[-1] == pytest.approx(1.0)
    assert "below" in CounterexampleConfig(1, params=PhysicalParams.from_n(1, 1, 16)).window_issue()
    assert "outside" in CounterexampleConfig(3, t_window=(1e-3, 1.0)).window_issue()
    assert CounterexampleConfig(2, params=PhysicalParams.from_n(1, 2, 1)).regime == "rotation-dominant"


def test_profile_shape():
    prof = CounterexampleProfile(2)
    assert prof.cubes == [(2, 1), (2, -1), (3, 1), (3, -1), (4, 1), (4, -1)]
    assert prof.max_frequency == 17
    xi = np.array([[0.3, 4.2, -0.5], [0.0, 0.0, 0.0], [0.1, -8.9, 0.9], [5.0, 5.0, 5.0]])
    vals = prof(xi)
    assert np.all(vals[1] == 0) and np.all(vals[3] == 0)
    assert np.allclose(np.einsum("ij,ij->i", vals[:, :3], xi), 0)
    assert np.allclose(vals[0].real, 0)
    assert np.allclose(prof(-xi), np.conj(vals))
    assert np.linalg.norm(vals[0]) == pytest.approx(4 / math.sqrt(2) * np.hypot(0.3, 4.2) / np.linalg.norm(xi[0]))


def test_sampled_profile_is_real_and_solenoidal():
    grid = make_grid(54, 3.5)
    prof, f = build_counterexample(CounterexampleConfig(1), grid)
    assert f.real and is_conjugate_symmetric(f)
    assert np.max(np.abs(divergence(f))) < 1e-13
    nz = np.any(f.data != 0, axis=0)
    k = np.stack(np.meshgrid(*(grid.wavenumbers,) * 3, indexing="ij"), -1)[nz]
    assert np.all(np.abs(k[:, 0]) <= 1 + 1e-12) and np.all(np.abs(k[:, 2]) <= 1 + 1e-12)
    assert np.all((np.abs(np.abs(k[:, 1]) - 2) <= 1 + 1e-12) | (np.abs(np.abs(k[:, 1]) - 4) <= 1 + 1e-12))
    inner = grid.index_of((0.0, 2.0, 0.0))
    assert np.allclose(f.data[(slice(None),) + inner], prof(np.array([0.0, 2.0, 0.0])))
    with pytest.raises(ResolutionError):
        build_counterexample(CounterexampleConfig(2), make_grid(16, 1.0))


def _midpoint_norm(m_big, r, h):
    prof = CounterexampleProfile(m_big)
    g = np.arange(-1 + h / 2, 1, h)
    x, y, z = np.meshgrid(g, g, g, indexing="ij")
    blocks = {}
    for j in range(m_big, 2 * m_big + 1):
        pts = np.stack([x, y + 2.0 ** j, z], -1).reshape(-1, 3)
        rad = np.linalg.norm(pts, axis=1)
        mag = prof.amplitude(j) * np.linalg.norm(pts[:, :2], axis=1) / rad
        for k in range(-2, 2 * m_big + 3):
            val = 2 * h ** 3 * np.sum(annulus_profile(rad * 2.0 ** -k) * mag)
            blocks[k] = blocks.get(k, 0.0) + 2.0 ** -k * val
    return ell_r(list(blocks.values()), r)


@pytest.mark.parametrize("r", [2.0, 4.0])
def test_norm_matches_midpoint_sum(r):
    c = CounterexampleConfig(3, r=r)
    assert counterexample_norm(c) == pytest.approx(_midpoint_norm(3, r, 1 / 40), rel=1e-3)


def test_norm_values_and_decrease():
    norms = [counterexample_norm(CounterexampleConfig(m)) for m in range(3, 9)]
    assert norms[0] == pytest.approx(20.52, abs=0.01)
    assert norms[-1] == pytest.approx(15.80, abs=0.01)
    assert np.all(np.diff(norms) < 0)
    assert counterexample_norm(CounterexampleConfig(3), 12) == pytest.approx(norms[0], rel=1e-8)
    assert counterexample_norm(CounterexampleConfig(5, r=2)) > norms[2]
    assert all(v > 0 for v in counterexample_blocks(CounterexampleConfig(3)).values())


def test_pairing_is_complete():
    c = CounterexampleConfig(3)
    pairs = contributing_pairs(c)
    expect = {((j, s), (j, -s)) for j in range(3, 7) for s in (1, -1)}
    assert set(pairs) == expect and len(pairs) == 8
    # brute force: which cube pairs have eta in one cube and xi - eta in the other for some xi in E
    prof = CounterexampleProfile(3)
    xi, _ = e_nodes(replace(c, quad_points_xi=3))
    g = np.linspace(-1, 1, 9)
    offs = np.stack(np.meshgrid(g, g, g, indexing="ij"), -1).reshape(-1, 3)
    found = set()
    for a in prof.cubes:
        eta = prof.centre(*a) + offs
        for b in prof.cubes:
            zeta = xi[:, None, :] - eta[None]
            if np.any(np.all(np.abs(zeta - prof.centre(*b)) <= 1, axis=-1)):
                found.add((a, b))
    assert found <= set(pairs)
    assert found == expect


def _semigroup_matrix(x, s, params):
    m = multiplier_matrices(x, params)
    r2 = np.sum(x * x, -1)
    w = xi_prime(x, params) / np.sqrt(r2)
    e = np.exp(-params.nu * r2 * s)
    return e[..., None, None] * (np.cos(w * s)[..., None, None] * m.m1
                                 + np.sin(w * s)[..., None, None] * m.m2 + m.m3)


def _tau_oracle(c, xi, t):
    """Direct time quadrature of the Duhamel integral with the same eta nodes."""
    prof = CounterexampleProfile(c.m_big)
    params = c.params
    u, wg = np.polynomial.legendre.leggauss(16)
    edges = np.concatenate([[0], t * 2.0 ** -np.arange(45)[::-1]])
    total = np.zeros(4, complex)
    for a, b in zip(edges[:-1], edges[1:]):
        for uu, ww in zip(u, wg):
            tau = (a + b) / 2 + (b - a) / 2 * uu
            flux = np.zeros(4, complex)
            for ec, zc in contributing_pairs(c, np.stack([xi, xi], 1)):
                ce, cz = prof.centre(*ec), prof.centre(*zc)
                lo = np.maximum(ce - 1, xi - cz - 1)[None]
                hi = np.minimum(ce + 1, xi - cz + 1)[None]
                eta, w = batched_box_rule(lo, hi, c.quad_order_eta)
                eta, w = eta[0], w[0]
                ve = (_semigroup_matrix(eta, tau, params) @ (1j * prof.real_profile(eta, ec[0]))[..., None])[..., 0]
                vz = (_semigroup_matrix(xi - eta, tau, params)
                      @ (1j * prof.real_profile(xi - eta, zc[0]))[..., None])[..., 0]
                flux += 1j * np.einsum("q,k,qk,ql->l", w, xi, vz[:, :3], ve)
            flux = project_vector(xi, flux)
            total += (b - a) / 2 * ww * (_semigroup_matrix(xi, t - tau, params) @ flux)
    return total


@pytest.mark.parametrize("xi,t", [((0.6, 0.3, 0.1), 1.0), ((0.7, 0.45, -0.2), 1 / 64), ((0.55, 0.3, 0.0), 0.05)])
def test_second_iterate_matches_time_quadrature(xi, t):
    c = CounterexampleConfig(3, quad_order_eta=4)
    xi = np.array(xi)
    got = second_iterate(c, xi[None], [1.0], [t]).value[0, 0]
    oracle = _tau_oracle(c, xi, t)
    assert np.linalg.norm(got - oracle) < 1e-10 * np.linalg.norm(oracle)


def test_second_iterate_decomposition():
    c = CounterexampleConfig(3, quad_order_eta=4, quad_points_xi=3)
    res = second_iterate_on_E(c, [0.0, 0.5], strict=False)
    assert np.all(res.value[0] == 0) and np.all(res.k1[0] == 0)
    # the value is solenoidal at every node
    assert np.allclose(np.einsum("tqk,qk->tq", res.value[..., :3], res.xi), 0, atol=1e-14)
    assert np.all(res.k1[1] > 0)
    assert res.l1_value[1] == pytest.approx(np.sum(res.weights * res.modulus[1]))
    signed = res.j133_signed[1]
    assert np.all(signed > 0) or np.all(signed < 0)
    assert np.allclose(np.abs(signed), res.j_terms[1, :, 2, 2])


def test_strict_time_checks():
    c = CounterexampleConfig(3, quad_order_eta=2, quad_points_xi=2)
    for t in (0.0, 2.0, [0.5, 1e-3]):
        with pytest.raises(UsageError):
            second_iterate_on_E(c, t)
    with pytest.raises(UsageError):
        second_iterate_on_E(CounterexampleConfig(3, t_window=(1e-3, 1.0), quad_order_eta=2), 0.5)


def test_eta_quadrature_converges():
    c = CounterexampleConfig(3, quad_points_xi=3)
    t = c.window[1]
    coarse = second_iterate_on_E(c, t).l1_value[0]
    fine = second_iterate_on_E(replace(c, quad_order_eta=16), t).l1_value[0]
    assert abs(coarse - fine) < 0.01 * fine


def test_steady_factor_bracket():
    c = CounterexampleConfig(3)
    lo, hi = j133_bracket(c)
    n, om = c.params.n_big, c.params.omega
    assert -n ** 4 / om ** 4 <= lo <= hi <= -1 / 256
    assert lo == pytest.approx(-0.99996, abs=1e-4)


def test_detection_constant():
    c = CounterexampleConfig(3)
    assert e_blocks(c) == [-2, -1, 0]
    assert detection_constant(c) == pytest.approx(1 / 3)


def test_lattice_duhamel_agrees_with_quadrature():
    c = CounterexampleConfig(1)
    grid = make_grid(54, 3.5)
    _, f = build_counterexample(c, grid)
    cfg = SolverConfig(c.params, BesovParams(-1, 1, 4), t_end=0.25, n_time=32)
    orb = semigroup_orbit(f, cfg.times, c.params)
    b = duhamel_bilinear(orb, orb, cfg.t_end, cfg)
    xi = np.array([2.0, 1.0, -1.0]) / 3.5
    lattice = b.data[(slice(None),) + grid.index_of(xi)]
    quad = second_iterate(c, xi[None], [1.0], [0.25]).value[0, 0]
    assert np.linalg.norm(lattice - quad) < 0.01 * np.linalg.norm(quad)


def test_small_inflation_run_flags_infeasible_rows():
    template = CounterexampleConfig(2, params=PhysicalParams.from_n(1, 1, 8), quad_order_eta=4,
                                    quad_points_xi=3, n_times=4)
    report = inflation_experiment([1, 2], template)
    bad, good = report.rows
    assert not bad.feasible and "below" in bad.note and math.isnan(bad.floor)
    assert good.feasible and good.floor > 0 and good.t_floor <= 1 / 8 * (1 + 1e-12)
    assert not report.checks()["all_feasible"] and not report.verdict
    assert len(report.per_time) == 4
    assert "FAIL" in report.summary()
