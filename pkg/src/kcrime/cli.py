"""Command-line entry points.

Subcommands wrap the library stages with file I/O:

    kcrime pattern     write a sampling-pattern file from a spec string
    kcrime phantom     generate coils + ground-truth k-space containers
    kcrime weights     solve interpolation weights between two patterns
    kcrime power       composite power map for a pro/retro/target triple
    kcrime recon       reconstruct sampled data (weight-based or least-squares)
    kcrime verify      seeded error-bound verification sweep
    kcrime experiment  full config-driven pipeline with manifest

Exit codes: 0 success, 1 numeric failure (factorization, violated bound,
broken positivity), 2 usage or input-format error. The KCRIME_THREADS
environment variable caps the linear-algebra thread pool.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, io
from .crime import bound_sweep, delta_w, power_map
from .experiment import (
    ExperimentError,
    PRESETS,
    load_config,
    run_experiment,
)
from .kernel import FactorizationError, auto_lambda, build_tables, kernel_matrix, weights
from .oracle import oracle_power
from .phantom import (
    CoilModel,
    GroundTruth,
    acquire,
    default_ellipses,
    make_coils,
    make_phantom_analytic,
    make_phantom_discrete,
)
from .recon import combine_image, lsq_reconstruct, rkhs_reconstruct
from .sampling import (
    GridSpec,
    full_grid,
    parse_grid_spec,
    parse_pattern_spec,
    random_pattern,
    read_pattern,
    write_pattern,
)

VERIFY_PRESETS = {
    "discrete-4x4": ((4, 4), 2),
    "discrete-8x8": ((8, 8), 2),
}


class UsageError(ValueError):
    """Input problems that are the caller's fault; exit code 2."""


@contextlib.contextmanager
def _thread_limit():
    raw = os.environ.get("KCRIME_THREADS")
    if not raw:
        yield
        return
    try:
        n = int(raw)
        if n < 1:
            raise ValueError
    except ValueError:
        raise UsageError(f"KCRIME_THREADS must be a positive integer, got {raw!r}")
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        yield
        return
    with threadpool_limits(limits=n):
        yield


def _parse_lambda(text: str):
    if text.lower() == "auto":
        return "auto"
    try:
        value = float(text)
    except ValueError:
        raise UsageError(f"--lambda must be 'auto' or a number, got {text!r}")
    if value < 0:
        raise UsageError(f"--lambda must be >= 0, got {value}")
    return value


def _resolve_lambda(policy, tables):
    return auto_lambda(tables) if policy == "auto" else float(policy)


def _load_coils(path) -> CoilModel:
    maps, mode = io.read_container(path)
    if mode != "coilmaps":
        raise UsageError(f"{path}: expected a coilmaps container, found mode {mode!r}")
    grid = GridSpec(maps.shape[1:], maps.shape[0])
    return CoilModel(grid, maps, "discrete")


def _load_pattern(arg: str, grid: GridSpec | None, what: str):
    """Pattern argument: an existing pattern file, else a spec string."""
    if Path(arg).is_file():
        pat = read_pattern(arg)
        if grid is not None and pat.grid != grid:
            raise UsageError(
                f"{what} pattern grid {pat.grid} does not match expected grid {grid}"
            )
        return pat
    if grid is None:
        raise UsageError(
            f"{what} {arg!r} is not a file; a spec string needs a grid from "
            "--grid or --coils"
        )
    return parse_pattern_spec(arg, grid)


def cmd_pattern(args) -> int:
    grid = parse_grid_spec(args.grid)
    pat = parse_pattern_spec(args.spec, grid)
    write_pattern(pat, args.out)
    print(
        f"wrote {args.out}: {len(pat)} points, "
        f"{len(pat.k_locations)} k-locations, acceleration {pat.acceleration():.3g}"
    )
    return 0


def cmd_phantom(args) -> int:
    grid = parse_grid_spec(args.grid)
    coils = make_coils(grid, args.coil_order, args.coil_seed)
    if args.mode == "analytic":
        gt = make_phantom_analytic(coils, default_ellipses(args.seed, args.ellipses))
    else:
        gt = make_phantom_discrete(coils, args.seed, args.ellipses)
    io.write_container(args.out, gt.coil_kspace, mode=gt.mode)
    print(f"wrote {args.out}: {gt.mode} ground truth on {grid}")
    if args.coils_out:
        io.write_container(args.coils_out, coils.maps, mode="coilmaps")
        print(f"wrote {args.coils_out}: coil maps")
    if args.dump_pgm:
        dump = Path(args.dump_pgm)
        dump.mkdir(parents=True, exist_ok=True)
        for j in range(grid.coils):
            io.write_pgm_log(dump / f"kspace_coil{j}.pgm", gt.coil_kspace[j])
        image, _ = combine_image(coils, gt.coil_kspace)
        io.write_pgm(dump / "image.pgm", np.abs(image))
        print(f"wrote previews under {dump}")
    return 0


def cmd_weights(args) -> int:
    coils = _load_coils(args.coils)
    src = _load_pattern(args.src, coils.grid, "--src")
    dst = _load_pattern(args.dst, coils.grid, "--dst")
    tables = build_tables(coils)
    lam = _resolve_lambda(args.lam, tables)
    w = weights(tables, src, dst, lam, args.rank)
    io.write_container(args.out, w.w[None, :, :], mode="matrix")
    print(
        f"wrote {args.out}: weights {w.w.shape[0]}x{w.w.shape[1]}, "
        f"lambda={lam:.6g}" + (f", rank={args.rank}" if args.rank else "")
    )
    return 0


def cmd_power(args) -> int:
    coils = _load_coils(args.coils)
    grid = coils.grid
    s_pro = _load_pattern(args.pro, grid, "--pro")
    s_retro = _load_pattern(args.retro, grid, "--retro")
    s_all = _load_pattern(args.all, grid, "--all")
    tables = build_tables(coils)
    lam = _resolve_lambda(args.lam, tables)
    op = delta_w(tables, s_pro, s_retro, s_all, lam, args.rank)
    m_pro = kernel_matrix(tables, s_pro, s_pro)
    pm = power_map(op, m_pro)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    coil_maps = pm.coil_maps()
    io.write_container(out / "power.bin", coil_maps.astype(complex), mode="power")
    for j in range(grid.coils):
        io.write_pgm_log(out / f"power_coil{j}.pgm", coil_maps[j])
    argmax = int(np.argmax(pm.p2))
    point = s_all.points[argmax]
    summary = {
        "mean": float(pm.p2.mean()),
        "max": float(pm.p2.max()),
        "argmax_index": argmax,
        "argmax_k": list(point.kidx),
        "argmax_coil": point.coil,
        "lambda": lam,
        "patterns": {"pro": s_pro.label, "retro": s_retro.label, "all": s_all.label},
    }
    io.write_json(out / "power.json", summary)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def cmd_recon(args) -> int:
    coils = _load_coils(args.coils)
    kspace, mode = io.read_container(args.data)
    if kspace.shape != (coils.grid.coils,) + coils.grid.dims:
        raise UsageError(
            f"{args.data}: k-space shape {kspace.shape} does not match coils "
            f"grid {coils.grid}"
        )
    gt = GroundTruth(coils.grid, mode if mode in ("discrete", "analytic") else "discrete",
                     kspace, None, 0.0)
    pattern = _load_pattern(args.pattern, coils.grid, "--pattern")
    data = acquire(gt, pattern, args.snr_db, args.noise_seed)
    tables = build_tables(coils)
    lam = _resolve_lambda(args.lam, tables)
    if args.method == "rkhs":
        res = rkhs_reconstruct(coils, data, full_grid(coils.grid), lam, args.rank, tables)
    else:
        res = lsq_reconstruct(coils, data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_container(out / "recon_kspace.bin", res.kspace_full, mode="generic")
    io.write_pgm(out / "recon_image.pgm", np.abs(res.image))
    io.write_pgm_log(out / "recon_kspace_coil0.pgm", res.kspace_full[0])
    metrics = {
        "method": res.method,
        "lambda": res.lam,
        "n_samples": len(pattern),
        **{k: v for k, v in res.metrics.items()},
    }
    io.write_json(out / "recon.json", metrics)
    print(json.dumps(metrics, indent=2, sort_keys=True))
    return 0


def cmd_verify(args) -> int:
    dims, coil_count = VERIFY_PRESETS[args.preset]
    reports = bound_sweep(dims, coil_count, range(args.seeds), tolerance=args.tolerance)
    worst = max(r.max_violation / r.scale for r in reports)
    failed = [i for i, r in enumerate(reports) if not r.passed]
    for i, r in enumerate(reports):
        status = "ok" if r.passed else "VIOLATED"
        print(
            f"seed {i:3d}: {status}  max_violation={r.max_violation:.3e} "
            f"scale={r.scale:.3e}"
        )
    print(
        f"{args.preset}: {len(reports) - len(failed)}/{len(reports)} seeds passed, "
        f"worst relative violation {worst:.3e}"
    )
    if args.oracle:
        grid = GridSpec(dims, coil_count)
        for seed in range(min(args.seeds, 5)):
            coils = make_coils(grid, order=1, seed=seed)
            tables = build_tables(coils)
            s_pro = random_pattern(grid, 2, seed=seed + 2000)
            s_retro = random_pattern(grid, 2, seed=seed + 3000)
            s_all = full_grid(grid)
            # moderate regularization keeps both solve routes well
            # conditioned, so disagreement means a real convention bug
            lam = auto_lambda(tables, scale=1e-2)
            op = delta_w(tables, s_pro, s_retro, s_all, lam)
            fast = power_map(op, kernel_matrix(tables, s_pro, s_pro)).p2
            slow = oracle_power(coils, s_pro, s_retro, s_all, lam)
            dev = np.abs(fast - slow).max() / max(slow.max(), np.finfo(float).tiny)
            print(f"oracle seed {seed}: max relative deviation {dev:.3e}")
            if dev > 1e-10:
                print("oracle disagreement beyond 1e-10", file=sys.stderr)
                return 1
    return 0 if not failed else 1


def cmd_experiment(args) -> int:
    config = load_config(args.preset or args.config, args.set or ())
    manifest = run_experiment(config, args.out)
    for note in manifest.notes:
        print(f"note: {note}")
    print(
        f"experiment complete: {len(manifest.files)} artifacts under {args.out}, "
        f"lambda={manifest.lam_value:.6g}"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kcrime",
        description="error analysis for retrospective sub-sampling experiments "
        "in parallel-imaging k-space",
    )
    parser.add_argument("--version", action="version", version=f"kcrime {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pattern", help="write a sampling-pattern file from a spec")
    p.add_argument("--spec", required=True, help="full | uniform:R=2,axis=0 | "
                   "caipi:2x2,shift=1 | random:R=4,seed=7")
    p.add_argument("--grid", required=True, help="grid as d0xd1x...xC, e.g. 32x32x4")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pattern)

    p = sub.add_parser("phantom", help="generate coils and ground-truth k-space")
    p.add_argument("--grid", required=True)
    p.add_argument("--mode", choices=("analytic", "discrete"), default="analytic")
    p.add_argument("--coil-order", type=int, default=3)
    p.add_argument("--coil-seed", type=int, default=1)
    p.add_argument("--seed", type=int, default=2, help="phantom seed")
    p.add_argument("--ellipses", type=int, default=3)
    p.add_argument("--out", required=True, help="ground-truth container path")
    p.add_argument("--coils-out", help="also write the coil maps container")
    p.add_argument("--dump-pgm", help="directory for log-magnitude previews")
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("weights", help="interpolation weights between two patterns")
    p.add_argument("--src", required=True, help="pattern file or spec string")
    p.add_argument("--dst", required=True, help="pattern file or spec string")
    p.add_argument("--coils", required=True, help="coilmaps container")
    p.add_argument("--lambda", dest="lam", type=_parse_lambda, default="auto",
                   help="'auto' (1e-6 x average eigenvalue) or a number")
    p.add_argument("--rank", type=int, help="truncated-eigenvalue solve rank")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_weights)

    p = sub.add_parser("power", help="composite power map of an experiment chain")
    p.add_argument("--pro", required=True, help="prospective pattern file or spec")
    p.add_argument("--retro", required=True, help="retrospective pattern file or spec")
    p.add_argument("--all", default="full", help="target pattern (default full grid)")
    p.add_argument("--coils", required=True)
    p.add_argument("--lambda", dest="lam", type=_parse_lambda, default="auto")
    p.add_argument("--rank", type=int)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_power)

    p = sub.add_parser("recon", help="reconstruct sampled ground-truth data")
    p.add_argument("--coils", required=True)
    p.add_argument("--data", required=True, help="ground-truth k-space container")
    p.add_argument("--pattern", required=True)
    p.add_argument("--method", choices=("rkhs", "lsq"), default="rkhs")
    p.add_argument("--lambda", dest="lam", type=_parse_lambda, default="auto")
    p.add_argument("--rank", type=int)
    p.add_argument("--snr-db", type=float, default=None)
    p.add_argument("--noise-seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_recon)

    p = sub.add_parser("verify", help="seeded error-bound verification sweep")
    p.add_argument("--preset", choices=sorted(VERIFY_PRESETS), default="discrete-4x4")
    p.add_argument("--seeds", type=int, default=50)
    p.add_argument("--tolerance", type=float, default=1e-8)
    p.add_argument("--oracle", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("experiment", help="run a full experiment config")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--preset", choices=sorted(PRESETS))
    group.add_argument("--config", help="config file path")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config key (repeatable)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_experiment)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with _thread_limit():
            return args.func(args)
    except (FactorizationError, FloatingPointError, ExperimentError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 1
    # UsageError, PatternFormatError, ConfigError and ContainerFormatError
    # are all ValueErrors, as are the argument checks in the constructors
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
