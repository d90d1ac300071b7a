"""Reconstructions onto the full grid, image formation, and error metrics.

Two reconstructors with different roles. The weight-based path interpolates
sampled data onto a target pattern with the same machinery the error
operator uses, so two-path-minus-direct differences line up with the crime
module to machine precision. The least-squares path solves the image-domain
coil-weighted inverse problem iteratively and is only meant for
display-style comparisons.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from .kernel import CoilProductTable, build_tables, weights
from .phantom import AcquiredData, CoilModel
from .sampling import SamplingPattern

__all__ = [
    "ReconResult",
    "ErrorMaps",
    "combine_image",
    "rkhs_reconstruct",
    "lsq_reconstruct",
    "error_maps",
    "default_image_lambda",
]

# pixels whose summed coil power falls below this render as zero
SENSITIVITY_FLOOR = 1e-12


@dataclass(frozen=True)
class ReconResult:
    grid: object
    kspace_full: np.ndarray  # (C, *dims)
    image: np.ndarray  # dims
    method: str
    lam: float
    metrics: dict = field(default_factory=dict)
    mask: np.ndarray | None = None  # False where coil power vanished


@dataclass(frozen=True)
class ErrorMaps:
    kspace_err: np.ndarray  # (C, *dims) complex difference
    image_err: np.ndarray  # dims, nonnegative
    nrmse: float
    max_abs: float


def combine_image(coils: CoilModel, kspace_full: np.ndarray):
    """Coil-combined image: sum_j conj(c_j) IDFT(k_j) / sum_j |c_j|^2.

    Returns (image, mask); mask is False where the denominator fell below
    SENSITIVITY_FLOOR and the image was set to zero.
    """
    num = np.zeros(coils.grid.dims, dtype=np.complex128)
    for j in range(coils.grid.coils):
        num += np.conj(coils.maps[j]) * np.fft.ifftn(kspace_full[j])
    den = np.sum(np.abs(coils.maps) ** 2, axis=0)
    mask = den >= SENSITIVITY_FLOOR
    image = np.zeros_like(num)
    image[mask] = num[mask] / den[mask]
    return image, mask


def scatter_to_grid(pattern: SamplingPattern, values: np.ndarray) -> np.ndarray:
    """Place pattern-ordered values into (C, *dims) k-space arrays."""
    grid = pattern.grid
    out = np.zeros((grid.coils,) + grid.dims, dtype=np.complex128)
    idx = (pattern.coil_array,) + tuple(
        pattern.kidx_array[:, d] for d in range(len(grid.dims))
    )
    out[idx] = values
    return out


def rkhs_reconstruct(
    coils: CoilModel,
    data: AcquiredData,
    s_all: SamplingPattern,
    lam: float,
    rank: int | None = None,
    tables: CoilProductTable | None = None,
) -> ReconResult:
    """Interpolate the sampled values onto s_all with kernel weights, then
    coil-combine into an image."""
    if tables is None:
        tables = build_tables(coils)
    w = weights(tables, data.pattern, s_all, lam, rank)
    vec = w.apply(data.values)
    kfull = scatter_to_grid(s_all, vec)
    image, mask = combine_image(coils, kfull)
    metrics = {"n_src": len(data.pattern), "n_dst": len(s_all)}
    return ReconResult(coils.grid, kfull, image, "rkhs", float(lam), metrics, mask)


def default_image_lambda(coils: CoilModel, pattern: SamplingPattern) -> float:
    """1e-6 times the mean diagonal of the normal-equations operator.

    Row i of the forward map has squared norm sum_r |c_{j_i}(r)|^2, so the
    trace of A^H A is the sum of those norms over acquired points.
    """
    per_coil = np.sum(np.abs(coils.maps.reshape(coils.grid.coils, -1)) ** 2, axis=1)
    trace = float(np.sum(per_coil[pattern.coil_array]))
    return 1e-6 * trace / coils.grid.num_k_locations


def lsq_reconstruct(
    coils: CoilModel,
    data: AcquiredData,
    lam_img: float | None = None,
    max_iter: int = 500,
    rtol: float = 1e-10,
) -> ReconResult:
    """Regularized least-squares image from sampled multi-coil k-space.

    Minimizes ||A x - y||^2 + lam_img ||x||^2 where A applies each coil map
    pixelwise, DFTs, and gathers the pattern's samples. Solved by conjugate
    gradients on the normal equations; the relative residual is reported in
    metrics and convergence is flagged, not raised.
    """
    grid = coils.grid
    pattern = data.pattern
    if pattern.grid != grid:
        raise ValueError(f"data grid {pattern.grid} != coil grid {grid}")
    if lam_img is None:
        lam_img = default_image_lambda(coils, pattern)
    dims = grid.dims
    n_pix = grid.num_k_locations
    gather = (pattern.coil_array,) + tuple(
        pattern.kidx_array[:, d] for d in range(len(dims))
    )

    def forward(x_img):
        ks = np.stack([np.fft.fftn(coils.maps[j] * x_img) for j in range(grid.coils)])
        return ks[gather]

    def adjoint(y_vals):
        ks = np.zeros((grid.coils,) + dims, dtype=np.complex128)
        ks[gather] = y_vals
        out = np.zeros(dims, dtype=np.complex128)
        for j in range(grid.coils):
            out += np.conj(coils.maps[j]) * (n_pix * np.fft.ifftn(ks[j]))
        return out

    def normal(x_flat):
        x_img = x_flat.reshape(dims)
        return (adjoint(forward(x_img)) + lam_img * x_img).ravel()

    rhs = adjoint(data.values).ravel()
    op = LinearOperator((n_pix, n_pix), matvec=normal, dtype=np.complex128)
    x, info = cg(op, rhs, rtol=rtol, atol=0.0, maxiter=max_iter)
    residual = float(np.linalg.norm(normal(x) - rhs))
    rhs_norm = float(np.linalg.norm(rhs))
    rel_residual = residual / rhs_norm if rhs_norm > 0 else 0.0
    image = x.reshape(dims)
    kfull = np.stack(
        [np.fft.fftn(coils.maps[j] * image) for j in range(grid.coils)]
    )
    metrics = {
        "rel_residual": rel_residual,
        "converged": bool(info == 0),
        "cg_info": int(info),
    }
    return ReconResult(grid, kfull, image, "lsq", float(lam_img), metrics)


def error_maps(test: ReconResult, ref: ReconResult) -> ErrorMaps:
    """Pointwise k-space and image differences plus summary metrics.

    nrmse is ||image difference|| / ||reference image||, restricted to the
    pixels both reconstructions consider valid; a zero reference is an
    error, not a zero score.
    """
    if test.kspace_full.shape != ref.kspace_full.shape:
        raise ValueError(
            f"shapes differ: {test.kspace_full.shape} vs {ref.kspace_full.shape}"
        )
    kerr = test.kspace_full - ref.kspace_full
    mask = np.ones(ref.image.shape, dtype=bool)
    for m in (test.mask, ref.mask):
        if m is not None:
            mask &= m
    ierr = np.abs(test.image - ref.image)
    ref_norm = float(np.linalg.norm(ref.image[mask]))
    if ref_norm == 0.0:
        raise ValueError("reference image is zero; nrmse undefined")
    nrmse = float(np.linalg.norm(ierr[mask])) / ref_norm
    return ErrorMaps(kerr, np.where(mask, ierr, 0.0), nrmse, float(ierr[mask].max()))
