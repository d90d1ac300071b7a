"""Config-driven end-to-end experiment runs.

A run takes one declarative config (key = value lines), builds coils and a
phantom, acquires prospective data, forms the composite error operator and
its power map for each prospective pattern, reconstructs through both paths,
and writes every artifact plus a manifest with checksums and stage timings.
Given the same config, reruns produce byte-identical numeric artifacts; the
manifest is the one file allowed to differ (it records wall-clock times).

Config grammar (# starts a comment, blank lines ignored):

    grid = 32x32x4            k-extents then coil count
    coil_order = 3            Fourier-series order of the coil maps
    coil_seed = 1
    phantom = analytic        analytic | discrete
    phantom_seed = 2
    ellipse_count = 3
    snr_db = 35               or: none  (noiseless)
    noise_seed = 7
    lambda = auto             or a float
    rank = none               or an int (truncated-eigenvalue solve)
    pro = uniform:R=2,axis=0  repeatable; one sub-run per line
    retro = uniform:R=3,axis=0
    all = full
    baseline_full_pro = true  also run a fully-sampled prospective baseline
    emit = maps,report        artifact groups: maps, matrices, report
"""

from __future__ import annotations

import csv
import hashlib
import re
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .crime import delta_w, experiment_error, power_map
from .figures import save_error_figure, save_image_figure, save_power_figure
from .kernel import auto_lambda, build_tables, kernel_matrix
from .phantom import (
    AcquiredData,
    acquire,
    default_ellipses,
    make_coils,
    make_phantom_analytic,
    make_phantom_discrete,
)
from .recon import (
    ReconResult,
    combine_image,
    error_maps,
    lsq_reconstruct,
    rkhs_reconstruct,
    scatter_to_grid,
)
from .sampling import GridSpec, full_grid, parse_grid_spec, parse_pattern_spec, write_pattern

__all__ = [
    "ExperimentConfig",
    "ConfigError",
    "ExperimentError",
    "RunManifest",
    "PRESETS",
    "parse_config_text",
    "load_config",
    "run_experiment",
]


class ConfigError(ValueError):
    """Bad or missing config entries."""


class ExperimentError(RuntimeError):
    """A pipeline stage failed; carries the stage name."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage


@dataclass(frozen=True)
class ExperimentConfig:
    grid: GridSpec
    pro_specs: tuple[str, ...]
    retro_spec: str
    all_spec: str = "full"
    coil_order: int = 3
    coil_seed: int = 1
    phantom_mode: str = "analytic"
    phantom_seed: int = 2
    ellipse_count: int = 3
    snr_db: float | None = 35.0
    noise_seed: int = 7
    lam: float | str = "auto"
    rank: int | None = None
    baseline_full_pro: bool = False
    emit: tuple[str, ...] = ("maps", "report")

    def __post_init__(self):
        if not self.pro_specs:
            raise ConfigError("need at least one prospective pattern (pro = ...)")
        if self.phantom_mode not in ("analytic", "discrete"):
            raise ConfigError(f"phantom must be analytic or discrete, got {self.phantom_mode!r}")
        bad = set(self.emit) - {"maps", "matrices", "report"}
        if bad:
            raise ConfigError(f"unknown emit groups: {sorted(bad)}")
        if isinstance(self.lam, str) and self.lam != "auto":
            raise ConfigError(f"lambda must be 'auto' or a number, got {self.lam!r}")

    def describe(self) -> dict:
        return {
            "grid": str(self.grid),
            "pro": list(self.pro_specs),
            "retro": self.retro_spec,
            "all": self.all_spec,
            "coil_order": self.coil_order,
            "coil_seed": self.coil_seed,
            "phantom": self.phantom_mode,
            "phantom_seed": self.phantom_seed,
            "ellipse_count": self.ellipse_count,
            "snr_db": self.snr_db,
            "noise_seed": self.noise_seed,
            "lambda": self.lam,
            "rank": self.rank,
            "baseline_full_pro": self.baseline_full_pro,
            "emit": list(self.emit),
        }


PRESETS = {
    # uniform pair: prospective R=2 turned into retrospective R=3, with the
    # fully sampled prospective baseline for comparison
    "uniform-pair": """
        grid = 32x32x4
        coil_order = 3
        coil_seed = 1
        phantom = analytic
        phantom_seed = 2
        ellipse_count = 3
        snr_db = 35
        noise_seed = 7
        lambda = auto
        pro = uniform:R=2,axis=0
        retro = uniform:R=3,axis=0
        all = full
        baseline_full_pro = true
    """,
    # sheared-lattice vs random prospective patterns, random retrospective;
    # the fully-sampled baseline comparison lives in the uniform-pair preset
    "lattice-random": """
        grid = 32x32x4
        coil_order = 3
        coil_seed = 1
        phantom = analytic
        phantom_seed = 2
        ellipse_count = 3
        snr_db = 35
        noise_seed = 7
        lambda = auto
        pro = caipi:2x2,shift=1
        pro = random:R=4,seed=7
        retro = random:R=4,seed=11
        all = full
    """,
}


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse key = value lines into a raw dict; repeated `pro` accumulates."""
    raw: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected key = value, got {stripped!r}")
        key, _, value = stripped.partition("=")
        key = key.strip().lower()
        value = value.strip()
        if not value:
            raise ConfigError(f"{source}:{lineno}: empty value for {key!r}")
        if key == "pro":
            raw.setdefault("pro", []).append(value)
        elif key in raw:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        else:
            raw[key] = value
    return raw


def _opt(raw, key, conv, default):
    if key not in raw:
        return default
    try:
        return conv(raw.pop(key))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"config key {key!r}: {exc}") from None


def _none_or(conv):
    return lambda v: None if v.lower() == "none" else conv(v)


def _bool(v):
    lowered = v.lower()
    if lowered in ("true", "yes", "1"):
        return True
    if lowered in ("false", "no", "0"):
        return False
    raise ValueError(f"expected true/false, got {v!r}")


def build_config(raw: dict) -> ExperimentConfig:
    raw = dict(raw)
    if "grid" not in raw:
        raise ConfigError("config needs a grid (e.g. grid = 32x32x4)")
    grid = parse_grid_spec(raw.pop("grid"))
    pro = raw.pop("pro", None)
    if not pro:
        raise ConfigError("config needs at least one pro pattern line")
    if isinstance(pro, str):
        pro = [pro]
    if "retro" not in raw:
        raise ConfigError("config needs a retro pattern")
    retro = raw.pop("retro")

    lam_raw = raw.pop("lambda", "auto")
    lam = "auto" if lam_raw.lower() == "auto" else float(lam_raw)

    cfg = ExperimentConfig(
        grid=grid,
        pro_specs=tuple(pro),
        retro_spec=retro,
        all_spec=raw.pop("all", "full"),
        coil_order=_opt(raw, "coil_order", int, 3),
        coil_seed=_opt(raw, "coil_seed", int, 1),
        phantom_mode=raw.pop("phantom", "analytic"),
        phantom_seed=_opt(raw, "phantom_seed", int, 2),
        ellipse_count=_opt(raw, "ellipse_count", int, 3),
        snr_db=_opt(raw, "snr_db", _none_or(float), 35.0),
        noise_seed=_opt(raw, "noise_seed", int, 7),
        lam=lam,
        rank=_opt(raw, "rank", _none_or(int), None),
        baseline_full_pro=_opt(raw, "baseline_full_pro", _bool, False),
        emit=tuple(_opt(raw, "emit", lambda v: v.split(","), ["maps", "report"])),
    )
    if raw:
        raise ConfigError(f"unknown config keys: {sorted(raw)}")
    # validate pattern specs early so failures name the config, not a stage
    for spec in cfg.pro_specs + (cfg.retro_spec, cfg.all_spec):
        parse_pattern_spec(spec, grid)
    return cfg


def load_config(path_or_preset: str, overrides=()) -> ExperimentConfig:
    """Load a preset name or a config file, then apply key=value overrides."""
    if path_or_preset in PRESETS:
        raw = parse_config_text(PRESETS[path_or_preset], f"preset:{path_or_preset}")
    else:
        path = Path(path_or_preset)
        if not path.is_file():
            raise ConfigError(
                f"{path_or_preset!r} is neither a preset ({', '.join(sorted(PRESETS))}) "
                "nor a config file"
            )
        raw = parse_config_text(path.read_text(encoding="utf-8"), str(path))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, _, value = item.partition("=")
        key = key.strip().lower()
        if key == "pro":
            raw["pro"] = [value.strip()]
        else:
            raw[key] = value.strip()
    return build_config(raw)


@dataclass
class RunManifest:
    config: dict
    versions: dict
    lam_value: float
    stages: dict = field(default_factory=dict)  # stage -> seconds
    files: dict = field(default_factory=dict)  # relpath -> sha256
    summary: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    failed_stage: str | None = None

    def to_payload(self) -> dict:
        return {
            "config": self.config,
            "versions": self.versions,
            "lambda": self.lam_value,
            "stage_seconds": self.stages,
            "files": self.files,
            "summary": self.summary,
            "notes": self.notes,
            "failed_stage": self.failed_stage,
        }


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _versions() -> dict:
    import matplotlib
    import scipy

    from . import __version__

    return {
        "kcrime": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "matplotlib": matplotlib.__version__,
    }


def _slug(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "-", label).strip("-").lower() or "pattern"


class _Tracker:
    """Accumulates artifacts and stage timings for the manifest."""

    def __init__(self, out_dir: Path, manifest: RunManifest):
        self.out = out_dir
        self.manifest = manifest

    def register(self, path: Path):
        self.manifest.files[str(path.relative_to(self.out))] = _sha256(path)

    def stage(self, name: str):
        tracker = self

        class _Stage:
            def __enter__(self):
                self.t0 = time.perf_counter()
                return self

            def __exit__(self, exc_type, exc, tb):
                tracker.manifest.stages[name] = round(
                    time.perf_counter() - self.t0, 6
                )
                if exc is not None and not isinstance(exc, ExperimentError):
                    tracker.manifest.failed_stage = name
                    io.write_json(
                        tracker.out / "manifest.json", tracker.manifest.to_payload()
                    )
                    raise ExperimentError(name, exc) from exc
                return False

        return _Stage()


def _power_summary(pm, s_all, lam, labels) -> dict:
    argmax = int(np.argmax(pm.p2)) if len(pm.p2) else 0
    point = s_all.points[argmax]
    return {
        "mean": float(pm.p2.mean()),
        "max": float(pm.p2.max()),
        "argmax_index": argmax,
        "argmax_k": list(point.kidx),
        "argmax_coil": point.coil,
        "lambda": lam,
        "patterns": labels,
    }


def run_experiment(config: ExperimentConfig, out_dir) -> RunManifest:
    """Execute the full pipeline and write artifacts plus manifest.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(config.describe(), _versions(), lam_value=float("nan"))
    tr = _Tracker(out, manifest)
    grid = config.grid
    emit_maps = "maps" in config.emit
    emit_matrices = "matrices" in config.emit
    emit_report = "report" in config.emit

    with tr.stage("coils"):
        coils = make_coils(grid, config.coil_order, config.coil_seed)
        if emit_maps:
            io.write_container(out / "coils.bin", coils.maps, mode="coilmaps")
            tr.register(out / "coils.bin")

    with tr.stage("phantom"):
        if config.phantom_mode == "analytic":
            ellipses = default_ellipses(config.phantom_seed, config.ellipse_count)
            gt = make_phantom_analytic(coils, ellipses)
        else:
            gt = make_phantom_discrete(coils, config.phantom_seed, config.ellipse_count)
        if emit_maps:
            io.write_container(out / "ground_truth.bin", gt.coil_kspace, mode=gt.mode)
            tr.register(out / "ground_truth.bin")
            io.write_pgm_log(out / "ground_truth_k0.pgm", gt.coil_kspace[0])
            tr.register(out / "ground_truth_k0.pgm")

    with tr.stage("tables"):
        tables = build_tables(coils)
        lam = auto_lambda(tables) if config.lam == "auto" else float(config.lam)
        manifest.lam_value = lam
        manifest.summary["lambda"] = lam

    s_all = parse_pattern_spec(config.all_spec, grid)
    ref_image, ref_mask = combine_image(coils, gt.coil_kspace)
    ref = ReconResult(grid, gt.coil_kspace, ref_image, "reference", 0.0, {}, ref_mask)
    rows: list[dict] = []

    s_retro = parse_pattern_spec(config.retro_spec, grid)
    with tr.stage("retro-pattern"):
        write_pattern(s_retro, out / "retro.txt")
        tr.register(out / "retro.txt")

    for i, pro_spec in enumerate(config.pro_specs):
        s_pro = parse_pattern_spec(pro_spec, grid)
        label = _slug(s_pro.label or f"pro{i}")
        sub = out / f"pro-{i}-{label}"
        sub.mkdir(exist_ok=True)
        degenerate = s_pro.same_points(s_retro)
        if degenerate:
            manifest.notes.append(
                f"{sub.name}: prospective equals retrospective pattern "
                "(maximal data-crime configuration; expect a near-zero power map)"
            )

        with tr.stage(f"{sub.name}:patterns"):
            write_pattern(s_pro, sub / "pro.txt")
            tr.register(sub / "pro.txt")

        with tr.stage(f"{sub.name}:acquire"):
            y_pro = acquire(gt, s_pro, config.snr_db, config.noise_seed)

        with tr.stage(f"{sub.name}:delta-w"):
            op = delta_w(tables, s_pro, s_retro, s_all, lam, config.rank)
            m_pro = kernel_matrix(tables, s_pro, s_pro)

        with tr.stage(f"{sub.name}:power"):
            pm = power_map(op, m_pro)
            coil_maps = pm.coil_maps()
            io.write_container(sub / "power.bin", coil_maps.astype(complex), mode="power")
            tr.register(sub / "power.bin")
            for j in range(grid.coils):
                io.write_pgm_log(sub / f"power_coil{j}.pgm", coil_maps[j])
                tr.register(sub / f"power_coil{j}.pgm")
            psum = _power_summary(
                pm, s_all, lam,
                {"pro": s_pro.label, "retro": s_retro.label, "all": s_all.label},
            )
            io.write_json(sub / "power.json", psum)
            tr.register(sub / "power.json")
            manifest.summary[f"{sub.name}:power"] = psum

        with tr.stage(f"{sub.name}:error"):
            err = experiment_error(op, y_pro)
            err_grid = scatter_to_grid(s_all, err)
            io.write_container(sub / "experiment_error.bin", err_grid, mode="generic")
            tr.register(sub / "experiment_error.bin")
            io.write_pgm_log(sub / "experiment_error_k0.pgm", err_grid[0])
            tr.register(sub / "experiment_error_k0.pgm")

        with tr.stage(f"{sub.name}:recon"):
            direct = rkhs_reconstruct(coils, y_pro, s_all, lam, config.rank, tables)
            y_retro_hat = AcquiredData(s_retro, op.w_pro_retro.apply(y_pro.values))
            chained = rkhs_reconstruct(coils, y_retro_hat, s_all, lam, config.rank, tables)
            lsq = lsq_reconstruct(coils, y_retro_hat)
            chain_residual = float(
                np.abs((chained.kspace_full - direct.kspace_full)
                       - scatter_to_grid(s_all, err)).max()
            )
            if emit_matrices:
                io.write_container(
                    sub / "delta_w.bin", op.dw[None, :, :], mode="matrix"
                )
                tr.register(sub / "delta_w.bin")

        with tr.stage(f"{sub.name}:metrics"):
            em_direct = error_maps(direct, ref)
            em_chained = error_maps(chained, ref)
            em_crime = error_maps(chained, direct)
            row = {
                "run": sub.name,
                "pro": s_pro.label,
                "retro": s_retro.label,
                "n_pro": len(s_pro),
                "n_retro": len(s_retro),
                "n_all": len(s_all),
                "lambda": lam,
                "p2_mean": psum["mean"],
                "p2_max": psum["max"],
                "err_max": float(np.abs(err).max()),
                "nrmse_direct": em_direct.nrmse,
                "nrmse_chained": em_chained.nrmse,
                "nrmse_crime": em_crime.nrmse,
                "nrmse_lsq": error_maps(lsq, ref).nrmse,
                "chain_residual": chain_residual,
                "degenerate": degenerate,
            }
            rows.append(row)
            manifest.summary[f"{sub.name}:metrics"] = row

        if emit_report:
            with tr.stage(f"{sub.name}:figures"):
                save_power_figure(
                    sub / "power_map.png", coil_maps,
                    f"squared power, pro={s_pro.label} retro={s_retro.label}",
                )
                tr.register(sub / "power_map.png")
                save_image_figure(
                    sub / "recon_images.png",
                    {
                        "reference": ref_image,
                        "direct": direct.image,
                        "chained": chained.image,
                        "least-squares": lsq.image,
                    },
                    f"reconstructions, pro={s_pro.label}",
                )
                tr.register(sub / "recon_images.png")
                save_error_figure(
                    sub / "error_maps.png",
                    em_crime.image_err,
                    np.abs(err_grid[0]),
                    f"two-path vs direct, pro={s_pro.label}",
                )
                tr.register(sub / "error_maps.png")
                io.write_pgm(sub / "image_direct.pgm", np.abs(direct.image))
                tr.register(sub / "image_direct.pgm")
                io.write_pgm(sub / "image_chained.pgm", np.abs(chained.image))
                tr.register(sub / "image_chained.pgm")

    if config.baseline_full_pro:
        with tr.stage("baseline-full-pro"):
            s_full = full_grid(grid)
            op_full = delta_w(tables, s_full, s_retro, s_all, lam, config.rank)
            m_full = kernel_matrix(tables, s_full, s_full)
            pm_full = power_map(op_full, m_full)
            mean_full = float(pm_full.p2.mean())
            manifest.summary["baseline_full_pro"] = {"p2_mean": mean_full}
            for row in rows:
                direction = (
                    "suppressed" if mean_full < row["p2_mean"] else "elevated"
                )
                manifest.summary["baseline_full_pro"][row["run"]] = {
                    "p2_mean_accelerated_pro": row["p2_mean"],
                    "fully_sampled_pro_vs_accelerated": direction,
                }
                manifest.notes.append(
                    f"mean squared power with fully sampled prospective data is "
                    f"{direction} relative to {row['run']} "
                    f"({mean_full:.6g} vs {row['p2_mean']:.6g})"
                )

    with tr.stage("summary"):
        with open(out / "summary.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["run", "metric", "value"])
            for row in rows:
                for key, value in row.items():
                    if key == "run":
                        continue
                    writer.writerow([row["run"], key, value])
            if "baseline_full_pro" in manifest.summary:
                writer.writerow(
                    ["baseline", "p2_mean_full_pro",
                     manifest.summary["baseline_full_pro"]["p2_mean"]]
                )
        tr.register(out / "summary.csv")

    io.write_json(out / "manifest.json", manifest.to_payload())
    return manifest
