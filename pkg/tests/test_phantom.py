import numpy as np
import numpy.testing as npt
import pytest

from kcrime.phantom import (
    Ellipse,
    GroundTruth,
    acquire,
    default_ellipses,
    evaluate_series,
    make_coils,
    make_phantom_analytic,
    make_phantom_discrete,
    rasterize_ellipses,
    uniform_coils,
)
from kcrime.sampling import GridSpec, full_grid, pattern_from_points, random_pattern


def test_order_zero_coils_are_constant():
    grid = GridSpec((8, 8), coils=3)
    coils = make_coils(grid, order=0, seed=1)
    for j in range(3):
        npt.assert_allclose(coils.maps[j], coils.maps[j].flat[0])


def test_coeffs_reproduce_maps():
    grid = GridSpec((16, 12), coils=2)
    coils = make_coils(grid, order=3, seed=5)
    for j in range(2):
        again = evaluate_series(grid.dims, coils.coeffs[j])
        err = np.abs(again - coils.maps[j]).max() / np.abs(coils.maps[j]).max()
        assert err <= 1e-12


def test_coils_deterministic_and_independent():
    grid = GridSpec((32, 32), coils=4)
    a = make_coils(grid, order=3, seed=1)
    b = make_coils(grid, order=3, seed=1)
    npt.assert_array_equal(a.maps, b.maps)

    flat = a.maps.reshape(4, -1)
    for i in range(4):
        for k in range(i + 1, 4):
            num = abs(np.vdot(flat[i], flat[k]))
            den = np.linalg.norm(flat[i]) * np.linalg.norm(flat[k])
            assert num / den < 0.99


def test_coil_order_must_fit_grid():
    grid = GridSpec((4, 4), coils=1)
    with pytest.raises(ValueError, match="order"):
        make_coils(grid, order=2, seed=0)  # 2*2+1 = 5 > 4


def test_uniform_coils_are_ones():
    grid = GridSpec((6, 6), coils=2)
    coils = uniform_coils(grid)
    npt.assert_array_equal(coils.maps, np.ones((2, 6, 6)))
    npt.assert_allclose(evaluate_series(grid.dims, coils.coeffs[0]), 1.0)


def test_discrete_phantom_kspace_is_dft_of_weighted_object():
    grid = GridSpec((16, 16), coils=2)
    coils = make_coils(grid, order=2, seed=3)
    gt = make_phantom_discrete(coils, seed=11)
    assert gt.mode == "discrete"
    assert gt.rho_l2 > 0
    npt.assert_allclose(gt.rho_l2, np.linalg.norm(gt.rho), rtol=1e-15)
    for j in range(2):
        ref = np.fft.fftn(coils.maps[j] * gt.rho)
        err = np.abs(gt.coil_kspace[j] - ref).max() / np.abs(ref).max()
        assert err <= 1e-12


def test_discrete_phantom_reproducible():
    grid = GridSpec((16, 16), coils=1)
    coils = uniform_coils(grid)
    a = make_phantom_discrete(coils, seed=4)
    b = make_phantom_discrete(coils, seed=4)
    npt.assert_array_equal(a.coil_kspace, b.coil_kspace)


def test_delta_object_gives_flat_kspace():
    grid = GridSpec((4, 4), coils=1)
    rho = np.zeros((4, 4), dtype=np.complex128)
    rho[0, 0] = 1.0
    gt = GroundTruth(grid, "discrete", np.fft.fftn(rho)[None], rho, 1.0)
    got = acquire(gt, full_grid(grid)).values
    npt.assert_allclose(got, np.ones(16), atol=1e-15)


def test_analytic_centered_disk_is_real():
    grid = GridSpec((16, 16), coils=1)
    coils = uniform_coils(grid)
    disk = Ellipse(1.0, (0.5, 0.5), (0.2, 0.2))
    gt = make_phantom_analytic(coils, [disk])
    assert gt.rho is None
    assert np.abs(gt.coil_kspace.imag).max() <= 1e-12
    # DC value is amplitude times ellipse area
    npt.assert_allclose(gt.coil_kspace[0][0, 0], np.pi * 0.2 * 0.2, rtol=1e-12)
    npt.assert_allclose(gt.rho_l2, np.sqrt(np.pi) * 0.2, rtol=1e-12)


def test_analytic_shift_theorem():
    grid = GridSpec((12, 12), coils=1)
    coils = uniform_coils(grid)
    base = Ellipse(0.8 + 0.2j, (0.4, 0.5), (0.15, 0.1), angle=0.3)
    delta = (0.07, -0.04)
    moved = Ellipse(
        base.amplitude,
        (base.center[0] + delta[0], base.center[1] + delta[1]),
        base.semiaxes,
        base.angle,
    )
    a = make_phantom_analytic(coils, [base]).coil_kspace[0]
    b = make_phantom_analytic(coils, [moved]).coil_kspace[0]
    nu0 = np.fft.fftfreq(12, 1 / 12)[:, None]
    nu1 = np.fft.fftfreq(12, 1 / 12)[None, :]
    phase = np.exp(-2j * np.pi * (nu0 * delta[0] + nu1 * delta[1]))
    npt.assert_allclose(b, a * phase, atol=1e-10 * np.abs(a).max())


def test_analytic_linearity_in_ellipses():
    grid = GridSpec((10, 10), coils=2)
    coils = make_coils(grid, order=1, seed=2)
    e1 = Ellipse(1.0, (0.35, 0.4), (0.1, 0.15))
    e2 = Ellipse(0.5j, (0.65, 0.6), (0.12, 0.08), angle=1.0)
    both = make_phantom_analytic(coils, [e1, e2]).coil_kspace
    split = (
        make_phantom_analytic(coils, [e1]).coil_kspace
        + make_phantom_analytic(coils, [e2]).coil_kspace
    )
    npt.assert_allclose(both, split, atol=1e-10 * np.abs(both).max())


def test_analytic_image_matches_ellipse_layout():
    grid = GridSpec((32, 32), coils=1)
    coils = uniform_coils(grid)
    ellipses = default_ellipses(seed=9)
    gt = make_phantom_analytic(coils, ellipses)
    img = np.fft.ifftn(gt.coil_kspace[0]) * grid.num_k_locations
    raster = rasterize_ellipses(grid.dims, ellipses)
    corr = np.corrcoef(np.abs(img).ravel(), np.abs(raster).ravel())[0, 1]
    assert corr > 0.9


def test_analytic_rejects_plain_pixel_coils():
    grid = GridSpec((8, 8), coils=1)
    from kcrime.phantom import CoilModel

    coils = CoilModel(grid, np.ones((1, 8, 8), dtype=complex), "discrete")
    with pytest.raises(ValueError, match="bandlimited"):
        make_phantom_analytic(coils, [Ellipse(1.0, (0.5, 0.5), (0.2, 0.2))])


def test_acquire_noiseless_is_grid_lookup():
    grid = GridSpec((8, 8), coils=3)
    coils = make_coils(grid, order=1, seed=0)
    gt = make_phantom_discrete(coils, seed=1)
    pts = [((3, 5), 2), ((0, 0), 0), ((7, 1), 1)]
    data = acquire(gt, pattern_from_points(grid, pts))
    for i, (kidx, coil) in enumerate(pts):
        assert data.values[i] == gt.coil_kspace[coil][kidx]


def test_acquire_noise_reproducible_and_seeded():
    grid = GridSpec((8, 8), coils=2)
    gt = make_phantom_discrete(make_coils(grid, 1, seed=0), seed=1)
    pat = random_pattern(grid, accel=2, seed=3)
    a = acquire(gt, pat, snr_db=20.0, seed=42)
    b = acquire(gt, pat, snr_db=20.0, seed=42)
    npt.assert_array_equal(a.values, b.values)
    c = acquire(gt, pat, snr_db=20.0, seed=43)
    assert np.any(a.values != c.values)


def test_acquire_snr_calibration():
    grid = GridSpec((32, 32), coils=4)
    coils = make_coils(grid, order=3, seed=1)
    gt = make_phantom_discrete(coils, seed=2)
    pat = full_grid(grid)
    clean = acquire(gt, pat).values
    sig_power = np.mean(np.abs(gt.coil_kspace) ** 2)
    ratios = []
    for seed in range(10):
        noisy = acquire(gt, pat, snr_db=35.0, seed=seed).values
        noise_power = np.mean(np.abs(noisy - clean) ** 2)
        ratios.append(10.0 * np.log10(sig_power / noise_power))
    assert abs(np.mean(ratios) - 35.0) <= 0.5


def test_acquire_rejects_bad_inputs():
    grid = GridSpec((8, 8), coils=1)
    gt = make_phantom_discrete(uniform_coils(grid), seed=1)
    with pytest.raises(ValueError, match="finite"):
        acquire(gt, full_grid(grid), snr_db=np.inf)
    other = GridSpec((4, 4), coils=1)
    with pytest.raises(ValueError, match="grid"):
        acquire(gt, full_grid(other))
