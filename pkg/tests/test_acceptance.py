"""End-to-end acceptance checks.

Every test here guards one release criterion at its stated tolerance and
prints a single ACCEPTANCE line that stays visible under pytest's capture,
so a plain ``pytest -v`` run doubles as the acceptance report. The cheap
criteria come first; the last test runs the two shipped experiment presets
twice each and takes a few minutes.
"""

import time

import numpy as np
import pytest

from kcrime.crime import bound_sweep, delta_w, experiment_error, power_map
from kcrime.experiment import load_config, run_experiment
from kcrime.io import read_container
from kcrime.kernel import auto_lambda, build_tables, kernel_matrix, weights
from kcrime.oracle import oracle_kernel, oracle_power, oracle_weights
from kcrime.phantom import (
    acquire,
    default_ellipses,
    make_coils,
    make_phantom_analytic,
    make_phantom_discrete,
    uniform_coils,
)
from kcrime.recon import rkhs_reconstruct
from kcrime.sampling import (
    GridSpec,
    caipirinha_pattern,
    full_grid,
    parse_pattern_spec,
    random_pattern,
    uniform_pattern,
)


@pytest.fixture
def announce(capsys):
    def _announce(num: int, ok: bool, detail: str):
        with capsys.disabled():
            status = "PASS" if ok else "FAIL"
            print(f"\nACCEPTANCE {num} {status} {detail}", flush=True)

    return _announce


def test_criterion_1_oracle_equivalence(announce):
    # kernel matrices, weight solves and power maps must match the
    # brute-force encoding-vector oracles on a 4x4 two-coil grid over at
    # least 20 seeds, to 1e-10 relative to each quantity's peak, in <10 s
    t0 = time.perf_counter()
    grid = GridSpec((4, 4), coils=2)
    s_all = full_grid(grid)
    worst_kernel = worst_weights = worst_power = 0.0
    seeds = range(20)
    for seed in seeds:
        coils = make_coils(grid, order=1, seed=seed)
        tables = build_tables(coils)
        s_pro = random_pattern(grid, 2, seed=seed + 2000)
        s_retro = random_pattern(grid, 2, seed=seed + 3000)

        m = kernel_matrix(tables, s_pro, s_retro).data
        o = oracle_kernel(coils, s_pro, s_retro)
        worst_kernel = max(
            worst_kernel, float(np.abs(m - o).max() / np.abs(o).max())
        )

        # moderate regularization keeps the factored and pseudoinverse solve
        # routes equally well conditioned, so residual disagreement measures
        # convention bugs rather than roundoff amplification
        lam = auto_lambda(tables, scale=1e-2)
        w = weights(tables, s_pro, s_retro, lam).w
        ow = oracle_weights(coils, s_pro, s_retro, lam)
        worst_weights = max(
            worst_weights, float(np.abs(w - ow).max() / np.abs(ow).max())
        )

        op = delta_w(tables, s_pro, s_retro, s_all, lam)
        fast = power_map(op, kernel_matrix(tables, s_pro, s_pro)).p2
        slow = oracle_power(coils, s_pro, s_retro, s_all, lam)
        scale = max(float(slow.max()), np.finfo(float).tiny)
        worst_power = max(worst_power, float(np.abs(fast - slow).max() / scale))

    elapsed = time.perf_counter() - t0
    worst = max(worst_kernel, worst_weights, worst_power)
    ok = worst <= 1e-10 and elapsed < 10.0
    announce(
        1,
        ok,
        f"oracle equivalence: worst rel deviation {worst:.2e} "
        f"(kernel {worst_kernel:.1e}, weights {worst_weights:.1e}, "
        f"power {worst_power:.1e}; {len(seeds)} seeds, {elapsed:.1f}s)",
    )
    assert worst_kernel <= 1e-10
    assert worst_weights <= 1e-10
    assert worst_power <= 1e-10
    assert elapsed < 10.0


def test_criterion_2_bound_sweeps(announce):
    # seeded random experiments on 4x4 and 8x8 two-coil grids: the realized
    # error never exceeds rho_l2 * p(z) plus a 1e-8-of-scale slack
    t0 = time.perf_counter()
    results = {}
    for dims in ((4, 4), (8, 8)):
        reports = bound_sweep(dims, 2, range(50), tolerance=1e-8)
        failed = sum(not r.passed for r in reports)
        tightest = min(float(r.margins.min()) / r.scale for r in reports)
        results[dims] = (failed, tightest, len(reports))
    elapsed = time.perf_counter() - t0
    total_failed = sum(f for f, _, _ in results.values())
    tightest_rel = min(t for _, t, _ in results.values())
    ok = total_failed == 0 and elapsed < 120.0
    announce(
        2,
        ok,
        f"error bound sweeps: 0 violations expected, got {total_failed} "
        f"across {sum(n for _, _, n in results.values())} seeded runs, "
        f"tightest margin {tightest_rel:.2e} of scale ({elapsed:.1f}s)",
    )
    for dims, (failed, _, _) in results.items():
        assert failed == 0, f"{dims}: {failed} bound violations"
    assert elapsed < 120.0


def test_criterion_3_degenerate_configurations(announce):
    # when the retrospective pattern equals the prospective one (or the
    # target set), the two-stage and direct weights coincide and the
    # composite operator collapses
    checks = []

    # same prospective and retrospective pattern, single flat coil, lam=0
    grid1 = GridSpec((8, 8), coils=1)
    tables1 = build_tables(uniform_coils(grid1))
    s2 = uniform_pattern(grid1, 2, axis=0)
    op = delta_w(tables1, s2, s2, full_grid(grid1), lam=0.0)
    pm = power_map(op, kernel_matrix(tables1, s2, s2))
    diag_scale = float(kernel_matrix(tables1, s2, s2).data.diagonal().real.max())
    checks.append(("pro=retro C=1", np.abs(op.dw).max(), pm.p2.max() / diag_scale))

    # same patterns again with structured coils and a rank-cut solve
    grid2 = GridSpec((8, 8), coils=2)
    tables2 = build_tables(make_coils(grid2, order=1, seed=5))
    s2b = uniform_pattern(grid2, 2, axis=0)
    op2 = delta_w(tables2, s2b, s2b, full_grid(grid2), lam=0.0, rank=len(s2b))
    m2 = kernel_matrix(tables2, s2b, s2b)
    pm2 = power_map(op2, m2)
    diag2 = float(m2.data.diagonal().real.max())
    checks.append(("pro=retro C=2 rank", np.abs(op2.dw).max(), pm2.p2.max() / diag2))

    # retrospective pattern equal to the target set; the rank cutoff must
    # fit the smallest source set (the full-grid Gram has rank 64 here too)
    s_all2 = full_grid(grid2)
    op3 = delta_w(tables2, s2b, s_all2, s_all2, lam=0.0, rank=len(s2b))
    m3 = kernel_matrix(tables2, s2b, s2b)
    pm3 = power_map(op3, m3)
    diag3 = float(m3.data.diagonal().real.max())
    checks.append(("retro=all C=2 rank", np.abs(op3.dw).max(), pm3.p2.max() / diag3))

    worst_dw = max(c[1] for c in checks)
    worst_p2 = max(c[2] for c in checks)
    ok = worst_dw <= 1e-8 and worst_p2 <= 1e-10
    announce(
        3,
        ok,
        f"degenerate configurations collapse: max |dW| {worst_dw:.2e} "
        f"(tol 1e-8), max relative p^2 {worst_p2:.2e} (tol 1e-10), "
        f"{len(checks)} cases",
    )
    for name, dw_max, p2_rel in checks:
        assert dw_max <= 1e-8, f"{name}: |dW|max = {dw_max:.3e}"
        assert p2_rel <= 1e-10, f"{name}: p2/diag = {p2_rel:.3e}"


def test_criterion_4_chain_equivalence(announce):
    # applying the two weight stages in sequence minus the direct stage must
    # reproduce the composite operator's error vector on real data, for
    # small random pairs and for both shipped experiment pattern pairs
    t0 = time.perf_counter()
    cases = []

    grid_s = GridSpec((8, 8), coils=2)
    coils_s = make_coils(grid_s, order=1, seed=3)
    gt_s = make_phantom_discrete(coils_s, seed=4)
    tables_s = build_tables(coils_s)
    small_pairs = [
        (uniform_pattern(grid_s, 2, axis=0), random_pattern(grid_s, 2, seed=21)),
        (random_pattern(grid_s, 2, seed=22), uniform_pattern(grid_s, 2, axis=1)),
        (caipirinha_pattern(grid_s, 2, 2, shift=1), random_pattern(grid_s, 3, seed=23)),
    ]
    cases.extend(
        ("small", coils_s, gt_s, tables_s, pro, retro) for pro, retro in small_pairs
    )

    grid_p = GridSpec((32, 32), coils=4)
    coils_p = make_coils(grid_p, order=3, seed=1)
    gt_p = make_phantom_analytic(coils_p, default_ellipses(2, 3))
    tables_p = build_tables(coils_p)
    preset_pairs = [
        ("uniform:R=2,axis=0", "uniform:R=3,axis=0"),
        ("caipi:2x2,shift=1", "random:R=4,seed=11"),
        ("random:R=4,seed=7", "random:R=4,seed=11"),
    ]
    cases.extend(
        (
            f"{p} -> {r}",
            coils_p,
            gt_p,
            tables_p,
            parse_pattern_spec(p, grid_p),
            parse_pattern_spec(r, grid_p),
        )
        for p, r in preset_pairs
    )

    worst = 0.0
    details = []
    for name, coils, gt, tables, s_pro, s_retro in cases:
        s_all = full_grid(coils.grid)
        lam = auto_lambda(tables)
        op = delta_w(tables, s_pro, s_retro, s_all, lam)
        y = acquire(gt, s_pro)
        err = experiment_error(op, y)
        direct = op.w_pro_all.apply(y.values)
        chained = op.w_retro_all.apply(op.w_pro_retro.apply(y.values))
        disc = float(np.abs((chained - direct) - err).max())
        rel = disc / max(1.0, float(np.abs(y.values).max()))
        details.append((name, rel))
        worst = max(worst, rel)

    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-8
    announce(
        4,
        ok,
        f"chain equivalence: worst discrepancy {worst:.2e} of data scale "
        f"across {len(cases)} pattern pairs incl. both presets ({elapsed:.1f}s)",
    )
    for name, rel in details:
        assert rel <= 1e-8, f"{name}: discrepancy {rel:.3e}"


def test_criterion_6_reconstruction_sanity(announce):
    # full sampling at lam=0 is an identity, and noiseless in-span data on a
    # 2x-accelerated uniform pattern is recovered through the rank-cut solve
    grid1 = GridSpec((8, 8), coils=1)
    coils1 = uniform_coils(grid1)
    gt1 = make_phantom_discrete(coils1, seed=9)
    res1 = rkhs_reconstruct(
        coils1, acquire(gt1, full_grid(grid1)), full_grid(grid1), lam=0.0
    )
    ident = float(np.abs(res1.kspace_full - gt1.coil_kspace).max())

    grid4 = GridSpec((8, 8), coils=4)
    coils4 = make_coils(grid4, order=1, seed=3)
    gt4 = make_phantom_discrete(coils4, seed=4)
    pat = uniform_pattern(grid4, 2, axis=0)
    res4 = rkhs_reconstruct(
        coils4, acquire(gt4, pat), full_grid(grid4), lam=0.0, rank=len(pat)
    )
    rel = float(
        np.linalg.norm(res4.kspace_full - gt4.coil_kspace)
        / np.linalg.norm(gt4.coil_kspace)
    )

    ok = ident <= 1e-8 and rel <= 1e-6
    announce(
        6,
        ok,
        f"reconstruction sanity: full-grid identity residual {ident:.2e} "
        f"(tol 1e-8), in-span R=2 four-coil relative error {rel:.2e} (tol 1e-6)",
    )
    assert ident <= 1e-8
    assert rel <= 1e-6


def test_criterion_7_power_positivity_and_kernel_psd(announce):
    # pre-clamp squared power stays above -1e-9 of its scale, kernel
    # matrices are Hermitian to 1e-12 of their peak, and 100 random
    # quadratic forms stay nonnegative within the same slack
    rng = np.random.default_rng(77)
    worst_p2 = 0.0  # most negative pre-clamp value, relative to scale
    worst_herm = 0.0
    worst_quad = 0.0
    setups = [((4, 4), c) for c in (1, 2, 3)] + [((8, 8), c) for c in (1, 2)]
    quad_forms = 0
    for i, (dims, coil_count) in enumerate(setups):
        grid = GridSpec(dims, coils=coil_count)
        coils = make_coils(grid, order=1, seed=30 + i)
        tables = build_tables(coils)
        s_pro = random_pattern(grid, 2, seed=40 + i)
        s_retro = random_pattern(grid, 2, seed=50 + i)
        lam = auto_lambda(tables)
        op = delta_w(tables, s_pro, s_retro, full_grid(grid), lam)
        m_pro = kernel_matrix(tables, s_pro, s_pro)
        pm = power_map(op, m_pro)
        scale = max(float(pm.p2.max()), np.finfo(float).tiny)
        worst_p2 = max(worst_p2, float(-pm.p2_raw.min()) / scale)

        m = m_pro.data
        herm = float(np.abs(m - m.conj().T).max() / np.abs(m).max())
        worst_herm = max(worst_herm, herm)

        diag_scale = float(m.diagonal().real.max())
        for _ in range(20):
            v = rng.standard_normal(m.shape[0]) + 1j * rng.standard_normal(m.shape[0])
            q = complex(v.conj() @ (m @ v))
            energy = float(np.vdot(v, v).real) * diag_scale
            worst_quad = max(worst_quad, -q.real / energy, abs(q.imag) / energy)
            quad_forms += 1

    ok = worst_p2 <= 1e-9 and worst_herm <= 1e-12 and worst_quad <= 1e-9
    announce(
        7,
        ok,
        f"positivity: worst pre-clamp p^2 dip {worst_p2:.2e} of scale "
        f"(tol 1e-9), Hermitian residual {worst_herm:.2e} (tol 1e-12), "
        f"worst of {quad_forms} quadratic forms {worst_quad:.2e} (tol 1e-9)",
    )
    assert worst_p2 <= 1e-9
    assert worst_herm <= 1e-12
    assert worst_quad <= 1e-9


def test_criterion_5_experiment_presets(tmp_path, announce):
    # each shipped preset finishes in under ten minutes, reruns are
    # byte-identical artifact for artifact, the sheared-lattice power map
    # shows real spatial structure, and the fully-sampled-baseline
    # comparison is reported (its direction is an observation, not a gate)
    timings = {}
    manifests = {}
    for preset in ("uniform-pair", "lattice-random"):
        config = load_config(preset)
        runs = []
        for tag in ("a", "b"):
            t0 = time.perf_counter()
            manifest = run_experiment(config, tmp_path / f"{preset}-{tag}")
            runs.append((time.perf_counter() - t0, manifest))
        timings[preset] = tuple(dt for dt, _ in runs)
        manifests[preset] = tuple(m for _, m in runs)

    identical = {
        preset: pair[0].files == pair[1].files for preset, pair in manifests.items()
    }

    lattice_out = tmp_path / "lattice-random-a"
    caipi_dir = next(
        p for p in sorted(lattice_out.iterdir()) if p.is_dir() and "caipi" in p.name
    )
    power, _ = read_container(caipi_dir / "power.bin")
    vals = power.real.ravel()
    cv = float(vals.std() / vals.mean())

    base = manifests["uniform-pair"][0].summary["baseline_full_pro"]
    run_keys = [k for k in base if k != "p2_mean"]
    direction = base[run_keys[0]]["fully_sampled_pro_vs_accelerated"]

    slowest = max(max(pair) for pair in timings.values())
    ok = slowest < 600.0 and all(identical.values()) and cv > 0.1
    announce(
        5,
        ok,
        f"experiment presets: slowest run {slowest:.0f}s (limit 600s), "
        f"reruns byte-identical {identical}, sheared-lattice power CV "
        f"{cv:.2f} (tol >0.1); fully sampled prospective baseline is "
        f"{direction!r} vs the accelerated run (reported, not asserted)",
    )
    for preset, pair in timings.items():
        assert max(pair) < 600.0, f"{preset}: runs took {pair}"
    for preset, same in identical.items():
        assert same, f"{preset}: rerun artifacts differ"
    assert cv > 0.1
    assert direction in ("suppressed", "elevated")
