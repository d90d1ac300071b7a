import numpy as np
import numpy.testing as npt
import pytest

from kcrime.oracle import (
    encoding_matrix,
    oracle_kernel,
    oracle_power,
    oracle_power_double_sum,
    oracle_weights,
)
from kcrime.phantom import CoilModel, make_coils, uniform_coils
from kcrime.sampling import (
    GridSpec,
    full_grid,
    pattern_from_k_locations,
    pattern_from_points,
    random_pattern,
    uniform_pattern,
)


def test_single_pixel_grid_gram_is_map_power():
    grid = GridSpec((1, 1), coils=1)
    maps = np.full((1, 1, 1), 2.0 - 1.0j)
    coils = CoilModel(grid, maps, "discrete")
    pat = full_grid(grid)
    m = oracle_kernel(coils, pat, pat)
    npt.assert_allclose(m, [[5.0]], atol=1e-14)


def test_uniform_coil_gram_is_scaled_identity():
    grid = GridSpec((4, 4), coils=1)
    pat = full_grid(grid)
    m = oracle_kernel(uniform_coils(grid), pat, pat)
    npt.assert_allclose(m, 16.0 * np.eye(16), atol=1e-10)


def test_size_guard():
    grid = GridSpec((32, 32), coils=4)
    coils = uniform_coils(grid)
    with pytest.raises(ValueError, match="oracle limited"):
        encoding_matrix(coils, full_grid(grid))


def test_encoding_column_samples_inner_products():
    # f_j(x) for object rho equals <encoding column, rho>
    grid = GridSpec((4, 4), coils=2)
    coils = make_coils(grid, order=1, seed=0)
    rng = np.random.default_rng(1)
    rho = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    pat = full_grid(grid)
    e = encoding_matrix(coils, pat)
    via_oracle = e.conj().T @ rho.ravel()
    via_dft = np.stack([np.fft.fftn(coils.maps[j] * rho) for j in range(2)])
    idx = (pat.coil_array, pat.kidx_array[:, 0], pat.kidx_array[:, 1])
    npt.assert_allclose(via_oracle, via_dft[idx], atol=1e-10 * np.abs(via_dft).max())


def test_oracle_weights_pinv_and_solve_agree_on_full_rank():
    grid = GridSpec((4, 4), coils=1)
    coils = make_coils(grid, order=1, seed=2)
    s_a = uniform_pattern(grid, 2, axis=0)
    s_b = full_grid(grid)
    w0 = oracle_weights(coils, s_a, s_b, lam=0.0)
    w_eps = oracle_weights(coils, s_a, s_b, lam=1e-12)
    npt.assert_allclose(w0, w_eps, atol=1e-8 * np.abs(w0).max())


def test_oracle_power_nonnegative_and_matches_double_sum():
    grid = GridSpec((4, 4), coils=2)
    coils = make_coils(grid, order=1, seed=3)
    s_pro = uniform_pattern(grid, 2, axis=0)
    s_retro = random_pattern(grid, accel=2, seed=5)
    s_all = full_grid(grid)
    lam = 1e-4
    sweep = oracle_power(coils, s_pro, s_retro, s_all, lam)
    double = oracle_power_double_sum(coils, s_pro, s_retro, s_all, lam)
    assert sweep.min() >= 0.0
    npt.assert_allclose(sweep, double, atol=1e-10 * sweep.max())


def test_oracle_power_vanishes_when_experiment_is_trivial():
    grid = GridSpec((4, 4), coils=1)
    coils = uniform_coils(grid)
    s = uniform_pattern(grid, 2, axis=0)
    p2 = oracle_power(coils, s, s, full_grid(grid), lam=0.0)
    assert p2.max() <= 1e-10 * grid.num_k_locations


def test_oracle_power_vanishes_at_prospective_points():
    # a target that was itself acquired prospectively carries no
    # interpolation error when the retro pattern contains it too
    grid = GridSpec((4, 4), coils=1)
    coils = make_coils(grid, order=1, seed=4)
    s_pro = pattern_from_k_locations(grid, [(0, 0), (0, 2), (2, 0), (2, 2), (1, 1)])
    s_retro = s_pro
    target = pattern_from_points(grid, [((1, 1), 0)])
    p2 = oracle_power(coils, s_pro, s_retro, target, lam=0.0)
    m_pp = oracle_kernel(coils, s_pro, s_pro)
    assert p2[0] <= 1e-10 * np.trace(m_pp).real
