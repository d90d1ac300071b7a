"""Composite error operator for retrospective sub-sampling experiments.

A retrospective experiment interpolates prospectively acquired data onto an
intermediate pattern, then treats the result as if it had been acquired
there. The composite operator below is the exact difference between that
two-stage path and direct interpolation from the prospective data, so
applying it to acquired values gives the pointwise experiment error on the
target set, and its quadratic form against the prospective kernel matrix
gives a data-independent bound on that error (the power function).

All weight applications are conjugate-transposed, matching kernel.WeightSet.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernel import (
    CoilProductTable,
    KernelMatrix,
    WeightSet,
    auto_lambda,
    build_tables,
    kernel_matrix,
    weights,
)
from .phantom import AcquiredData, GroundTruth, acquire, make_coils, make_phantom_discrete
from .sampling import GridSpec, SamplingPattern, full_grid, random_pattern

__all__ = [
    "CrimeOperator",
    "PowerMap",
    "VerificationReport",
    "delta_w",
    "experiment_error",
    "power_map",
    "verify_bound",
    "bound_sweep",
]

# relative slack on the imaginary residue and negative excursions of p^2
PSD_TOL = 1e-9


@dataclass(frozen=True)
class CrimeOperator:
    """dW = W(S_pro, S_retro) W(S_retro, S_all) - W(S_pro, S_all).

    Shape (|S_pro|, |S_all|); dW^H applied to prospective values yields the
    (two-stage minus direct) error on S_all. The three constituent weight
    sets are kept for provenance and cross-checks.
    """

    s_pro: SamplingPattern
    s_retro: SamplingPattern
    s_all: SamplingPattern
    dw: np.ndarray
    lam: float
    rank: int | None
    w_pro_retro: WeightSet
    w_retro_all: WeightSet
    w_pro_all: WeightSet

    def __post_init__(self):
        if not (self.s_pro.grid == self.s_retro.grid == self.s_all.grid):
            raise ValueError("patterns live on different grids")
        if self.dw.shape != (len(self.s_pro), len(self.s_all)):
            raise ValueError(
                f"dW shape {self.dw.shape} vs patterns "
                f"({len(self.s_pro)}, {len(self.s_all)})"
            )


@dataclass(frozen=True)
class PowerMap:
    """Pointwise squared error bound factor on the target pattern.

    ``p2`` is clamped at zero; ``p2_raw`` keeps the pre-clamp values so the
    nonnegativity property stays observable. ``imag_residue`` is the largest
    imaginary part discarded when taking the real diagonal.
    """

    target: SamplingPattern
    p2: np.ndarray
    p2_raw: np.ndarray
    imag_residue: float

    def p(self) -> np.ndarray:
        return np.sqrt(self.p2)

    def coil_maps(self) -> np.ndarray:
        """Scatter p^2 into per-coil k-space grids (zeros where the target
        pattern has no sample)."""
        grid = self.target.grid
        out = np.zeros((grid.coils,) + grid.dims)
        idx = (self.target.coil_array,) + tuple(
            self.target.kidx_array[:, d] for d in range(len(grid.dims))
        )
        out[idx] = self.p2
        return out


@dataclass(frozen=True)
class VerificationReport:
    """Pointwise check of |error(z)| <= rho_l2 * p(z) + tolerance."""

    passed: bool
    max_violation: float
    tolerance: float
    scale: float
    rkhs_norm_bound: float
    margins: np.ndarray  # bound - |error|, per target point
    abs_error: np.ndarray
    bound: np.ndarray


def delta_w(
    tables: CoilProductTable,
    s_pro: SamplingPattern,
    s_retro: SamplingPattern,
    s_all: SamplingPattern,
    lam: float,
    rank: int | None = None,
) -> CrimeOperator:
    """Compose the two-stage weights and subtract the direct ones.

    All three weight solves use the same lam (and rank policy), mirroring a
    pipeline that regularizes every inversion identically.
    """
    w_pr = weights(tables, s_pro, s_retro, lam, rank)
    w_ra = weights(tables, s_retro, s_all, lam, rank)
    w_pa = weights(tables, s_pro, s_all, lam, rank)
    dw = w_pr.w @ w_ra.w - w_pa.w
    return CrimeOperator(s_pro, s_retro, s_all, dw, float(lam), rank, w_pr, w_ra, w_pa)


def experiment_error(op: CrimeOperator, y_pro: AcquiredData) -> np.ndarray:
    """Two-stage minus direct interpolation of y_pro, evaluated on S_all."""
    if not y_pro.pattern.same_points(op.s_pro):
        raise ValueError("acquired data pattern differs from the prospective pattern")
    return op.dw.conj().T @ y_pro.values


def power_map(op: CrimeOperator, m_pro: KernelMatrix) -> PowerMap:
    """p^2(z) = (dW^H M(S_pro,S_pro) dW)[z, z], column by column.

    The diagonal is a quadratic form against a PSD matrix, so it must be
    real and nonnegative; an imaginary residue or a negative excursion
    beyond PSD_TOL relative to the map's scale raises instead of being
    clamped away silently.
    """
    if not (m_pro.rows.same_points(op.s_pro) and m_pro.cols.same_points(op.s_pro)):
        raise ValueError("kernel matrix is not M(S_pro, S_pro)")
    g = m_pro.data @ op.dw
    p2c = np.einsum("pz,pz->z", np.conj(op.dw), g)
    scale = float(np.abs(p2c).max()) if len(p2c) else 0.0
    imag = float(np.abs(p2c.imag).max()) if len(p2c) else 0.0
    if imag > PSD_TOL * max(scale, np.finfo(float).tiny):
        raise FloatingPointError(
            f"power diagonal has imaginary residue {imag:g} at scale {scale:g}"
        )
    p2_raw = p2c.real.copy()
    if len(p2_raw) and p2_raw.min() < -PSD_TOL * max(scale, np.finfo(float).tiny):
        raise FloatingPointError(
            f"power diagonal is negative ({p2_raw.min():g}) beyond PSD slack "
            f"at scale {scale:g}"
        )
    return PowerMap(op.s_all, np.maximum(p2_raw, 0.0), p2_raw, imag)


def verify_bound(
    op: CrimeOperator,
    m_pro: KernelMatrix,
    gt: GroundTruth,
    tolerance: float = 1e-8,
) -> VerificationReport:
    """Check the error bound pointwise on noiseless in-model data.

    Samples ``gt`` on S_pro without noise, runs the experiment error, and
    verifies |error(z)| <= rho_l2 * p(z) + tolerance * scale at every target
    point, where scale is the larger of the bound's and the error's maxima.
    Only the discrete mode is accepted: there the object's l2 norm certifies
    the native-space norm of the data, so the inequality carries no slack.
    """
    if gt.mode != "discrete":
        raise ValueError(f"bound verification needs discrete-mode data, got {gt.mode!r}")
    if gt.grid != op.s_pro.grid:
        raise ValueError("ground truth and operator grids differ")
    y_pro = acquire(gt, op.s_pro, snr_db=None)
    err = np.abs(experiment_error(op, y_pro))
    bound = gt.rho_l2 * power_map(op, m_pro).p()
    scale = max(float(bound.max()), float(err.max()), np.finfo(float).tiny)
    margins = bound - err
    max_violation = float(np.maximum(err - bound, 0.0).max())
    passed = bool(max_violation <= tolerance * scale)
    return VerificationReport(
        passed=passed,
        max_violation=max_violation,
        tolerance=tolerance,
        scale=scale,
        rkhs_norm_bound=float(gt.rho_l2),
        margins=margins,
        abs_error=err,
        bound=bound,
    )


def bound_sweep(
    dims: tuple[int, ...],
    coil_count: int,
    seeds,
    accel: int = 2,
    tolerance: float = 1e-8,
) -> list[VerificationReport]:
    """Run the bound verification over seeded random experiment setups.

    Each seed draws fresh coils, a fresh discrete phantom, and fresh random
    prospective/retrospective patterns, then checks the pointwise bound on
    the full grid. Returns one report per seed, in order.
    """
    grid = GridSpec(tuple(dims), coil_count)
    s_all = full_grid(grid)
    reports = []
    for seed in seeds:
        coils = make_coils(grid, order=1, seed=seed)
        gt = make_phantom_discrete(coils, seed=seed + 1000)
        s_pro = random_pattern(grid, accel, seed=seed + 2000)
        s_retro = random_pattern(grid, accel, seed=seed + 3000)
        tables = build_tables(coils)
        op = delta_w(tables, s_pro, s_retro, s_all, auto_lambda(tables))
        m_pro = kernel_matrix(tables, s_pro, s_pro)
        reports.append(verify_bound(op, m_pro, gt, tolerance))
    return reports
