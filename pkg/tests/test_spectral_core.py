import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fbspectral.spectral_core import (ConfigurationError, PhysicalParams, SpectralField, Trajectory,
                                      UsageError, dealiased_product, divergence, field_from_bytes,
                                      field_to_bytes, from_physical, is_conjugate_symmetric, load_field,
                                      make_grid, pointwise_product_physical, random_field, save_field,
                                      to_physical)


@pytest.mark.parametrize("n", [7, 6, 9, 0])
def test_grid_rejects_bad_sizes(n):
    with pytest.raises(ConfigurationError):
        make_grid(n, 1.0)


def test_grid_rejects_nonpositive_scale():
    with pytest.raises(ConfigurationError):
        make_grid(8, 0.0)


def test_grid_basics():
    g = make_grid(8, 2.0)
    assert g.nyquist == 2.0
    assert g.cell_volume == pytest.approx(1 / 8)
    assert sorted(g.indices) == list(range(-4, 4))
    assert g.index_of((0.5, -1.0, 0.0)) == (1, 6, 0)
    with pytest.raises(UsageError):
        g.index_of((5.0, 0.0, 0.0))
    assert make_grid(8, 2.0) == g and hash(make_grid(8, 2.0)) == hash(g)


def test_params_require_unit_prandtl():
    with pytest.raises(ConfigurationError):
        PhysicalParams(nu=1.0, mu=2.0)
    p = PhysicalParams(nu=1.0, mu=1.0, omega=2.0, script_n=3.0, gravity=4.0)
    assert p.n_big == pytest.approx(6.0)
    assert p.burger == pytest.approx(2 / 3)


def test_field_zero_mode_and_readonly(small_grid, rng):
    data = rng.standard_normal((4,) + small_grid.shape) + 0j
    f = SpectralField(small_grid, data)
    assert np.all(f.data[:, 0, 0, 0] == 0)
    with pytest.raises(ValueError):
        f.data[0, 1, 1, 1] = 1.0
    with pytest.raises(UsageError):
        SpectralField(small_grid, np.zeros((3,) + small_grid.shape))


def test_field_arithmetic(small_grid, rng):
    a = random_field(small_grid, rng)
    b = random_field(small_grid, rng)
    assert np.allclose((a + b - b).data, a.data)
    assert np.allclose((2 * a).data, 2 * a.data)
    assert (a.scale(1j)).real is False
    assert np.allclose(a.modulus() ** 2, np.sum(np.abs(a.data) ** 2, axis=0))
    with pytest.raises(UsageError):
        a + SpectralField.zeros(make_grid(8, 1.0))


@pytest.mark.parametrize("real", [True, False])
def test_round_trip(small_grid, rng, real):
    f = random_field(small_grid, rng, real=real)
    back = from_physical(to_physical(f), small_grid)
    assert np.max(np.abs(back.data - f.data)) < 1e-13 * f.max_abs()
    if real:
        assert np.isrealobj(to_physical(f))
        assert back.real


def test_random_field_band_and_symmetry(small_grid, rng):
    f = random_field(small_grid, rng, band=(2.0, 5.0))
    assert is_conjugate_symmetric(f)
    nz = np.any(f.data != 0, axis=0)
    r = small_grid.norm[nz]
    assert r.min() >= 2.0 and r.max() <= 5.0


def _brute_convolution(a, b, grid):
    n = grid.n_per_axis
    keep = [k for k in range(-n // 2, n // 2) if abs(k) <= n / 3]
    out = np.zeros(grid.shape, dtype=complex)
    for kx, ky, kz in itertools.product(keep, repeat=3):
        acc = 0j
        for ax, ay, az in itertools.product(keep, repeat=3):
            bx, by, bz = kx - ax, ky - ay, kz - az
            if max(abs(bx), abs(by), abs(bz)) <= n / 3:
                acc += a[ax % n, ay % n, az % n] * b[bx % n, by % n, bz % n]
        out[kx % n, ky % n, kz % n] = acc * grid.cell_volume
    return out


@pytest.mark.parametrize("real", [True, False])
def test_dealiased_product_matches_lattice_convolution(rng, real):
    grid = make_grid(8, 1.7)
    a = random_field(grid, rng, real=real).data[0]
    b = random_field(grid, rng, real=real).data[1]
    fast = dealiased_product(a, b, grid, real)
    oracle = _brute_convolution(a, b, grid)
    assert np.max(np.abs(fast - oracle)) < 1e-13 * np.max(np.abs(oracle))


@pytest.mark.parametrize("same", [True, False])
@pytest.mark.parametrize("real", [True, False])
def test_divergence_rows_agree_with_entries(small_grid, rng, same, real):
    a = random_field(small_grid, rng, band=(0, 5), real=real)
    b = a if same else random_field(small_grid, rng, band=(0, 5), real=real)
    tensor = pointwise_product_physical(a, b)
    x, y, z = small_grid.axes
    slow = np.stack([1j * sum(xi * tensor.entry(k, l) for k, xi in enumerate((x, y, z))) for l in range(4)])
    fast = tensor.divergence_rows().data
    assert np.max(np.abs(fast - slow)) < 1e-13 * np.max(np.abs(slow))


def test_product_of_real_fields_is_real(small_grid, rng):
    a = random_field(small_grid, rng, band=(0, 5))
    h = pointwise_product_physical(a, a).hadamard()
    assert h.real and is_conjugate_symmetric(h)


def test_divergence_of_gradient(small_grid, rng):
    g = random_field(small_grid, rng).data[0]
    x, y, z = small_grid.axes
    grad = SpectralField(small_grid, 1j * np.stack([x * g, y * g, z * g, 0 * g]))
    lap = -small_grid.norm_sq * g
    lap[0, 0, 0] = 0
    assert np.allclose(divergence(grad), lap)


def test_serialization_round_trip(small_grid, rng, tmp_path):
    f = random_field(small_grid, rng)
    raw = field_to_bytes(f)
    g = field_from_bytes(raw)
    assert g.grid == f.grid and g.real == f.real
    assert np.array_equal(g.data, f.data)
    save_field(f, tmp_path / "f.fbsf")
    assert np.array_equal(load_field(tmp_path / "f.fbsf").data, f.data)
    with pytest.raises(UsageError):
        field_from_bytes(b"nope" + raw)
    with pytest.raises(UsageError):
        field_from_bytes(raw[:-16])


@pytest.mark.parametrize("times", [[0.1, 0.2], [0.0, 0.0], [0.0, 0.3, 0.2]])
def test_trajectory_validation(small_grid, times):
    z = SpectralField.zeros(small_grid)
    with pytest.raises(UsageError):
        Trajectory(np.array(times), [z] * len(times))


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_transform_is_linear(a, b):
    grid = make_grid(8, 1.0)
    rng = np.random.default_rng(0)
    u = rng.standard_normal((4,) + grid.shape)
    v = rng.standard_normal((4,) + grid.shape)
    lhs = from_physical(a * u + b * v, grid).data
    rhs = a * from_physical(u, grid).data + b * from_physical(v, grid).data
    assert np.allclose(lhs, rhs, atol=1e-12 * (1 + abs(a) + abs(b)))
