"""Kernel matrices between sample sets and regularized interpolation weights.

The inner product of two encoding functions depends only on their coil pair
and the (torus-wrapped) offset between their k-indices, so all kernel
matrices are lookups into C x C precomputed offset tables, each the forward
DFT of a pixelwise coil product. Weights solve a regularized Hermitian
system against those matrices; a rank-truncated eigenvalue path doubles as
the pseudoinverse when the system is singular.

Applying a WeightSet to data uses the conjugate transpose. Under the
package's inner-product convention (conjugate-linear in the first argument)
that is the combination which reproduces in-span data exactly; tests pin
this against brute-force encoding-vector oracles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .phantom import CoilModel
from .sampling import SamplingPattern

__all__ = [
    "CoilProductTable",
    "KernelMatrix",
    "WeightSet",
    "FactorizationError",
    "build_tables",
    "kernel_matrix",
    "default_lambda",
    "auto_lambda",
    "weights",
]

# row-tile size for blocked kernel assembly, keeps index temporaries small
_BLOCK = 512


class FactorizationError(RuntimeError):
    """Raised when the kernel system cannot be factorized."""


@dataclass(frozen=True)
class CoilProductTable:
    """Offset tables: data[a, b] holds DFT(c_a * conj(c_b)) over the grid,
    so entry at offset D equals the inner product of any two encoding
    functions with coils (a, b) and k-index difference D (mod dims)."""

    grid: object
    data: np.ndarray  # (C, C, *dims) complex

    def __post_init__(self):
        expected = (self.grid.coils, self.grid.coils) + self.grid.dims
        if self.data.shape != expected:
            raise ValueError(f"table shape {self.data.shape}, expected {expected}")

    def zero_offset_diagonal(self) -> np.ndarray:
        """Per-coil squared map norms: table[j, j] at offset zero."""
        zero = (slice(None),) + (0,) * len(self.grid.dims)
        return np.einsum("jj...->j...", self.data)[zero].real


@dataclass(frozen=True)
class KernelMatrix:
    """Dense Gram matrix between the encoding functions of two patterns."""

    rows: SamplingPattern
    cols: SamplingPattern
    data: np.ndarray

    def __post_init__(self):
        if self.data.shape != (len(self.rows), len(self.cols)):
            raise ValueError(
                f"matrix shape {self.data.shape} vs patterns "
                f"({len(self.rows)}, {len(self.cols)})"
            )


@dataclass(frozen=True)
class WeightSet:
    """Interpolation weights from a source pattern onto a destination one.

    ``w`` has shape (|src|, |dst|); ``apply`` maps values sampled on ``src``
    to interpolated values on ``dst`` via the conjugate transpose.
    """

    src: SamplingPattern
    dst: SamplingPattern
    w: np.ndarray
    lam: float
    rank: int | None = None

    def __post_init__(self):
        if self.w.shape != (len(self.src), len(self.dst)):
            raise ValueError(
                f"weight shape {self.w.shape} vs patterns "
                f"({len(self.src)}, {len(self.dst)})"
            )

    def apply(self, values: np.ndarray) -> np.ndarray:
        if values.shape[0] != len(self.src):
            raise ValueError(
                f"{values.shape[0]} values for {len(self.src)} source points"
            )
        return self.w.conj().T @ values


def build_tables(coils: CoilModel) -> CoilProductTable:
    """DFT all pairwise coil products once; everything else is lookups."""
    c = coils.grid.coils
    dims = coils.grid.dims
    data = np.empty((c, c) + dims, dtype=np.complex128)
    flip = np.ix_(*(np.concatenate(([0], np.arange(n - 1, 0, -1))) for n in dims))
    for a in range(c):
        for b in range(a, c):
            t = np.fft.fftn(coils.maps[a] * np.conj(coils.maps[b]))
            if a == b:
                # |c_a|^2 is real, so its DFT is conjugate-symmetric; enforce
                # that bit-exactly so swapped kernel lookups conjugate exactly
                t = 0.5 * (t + np.conj(t[flip]))
            data[a, b] = t
    # lower triangle from conjugate symmetry:
    # table[b][a](D) = conj(table[a][b](-D mod dims))
    for a in range(c):
        for b in range(a + 1, c):
            data[b, a] = np.conj(data[a, b][flip])
    return CoilProductTable(coils.grid, data)


def kernel_matrix(
    tables: CoilProductTable, s_a: SamplingPattern, s_b: SamplingPattern
) -> KernelMatrix:
    """Gram matrix M with M[a, b] = table[coil_a, coil_b] at the wrapped
    k-index offset x_a - x_b."""
    if s_a.grid != tables.grid or s_b.grid != tables.grid:
        raise ValueError(
            f"pattern grids {s_a.grid}, {s_b.grid} do not match table grid {tables.grid}"
        )
    dims = tables.grid.dims
    ka, kb = s_a.kidx_array, s_b.kidx_array
    ca, cb = s_a.coil_array, s_b.coil_array
    out = np.empty((len(s_a), len(s_b)), dtype=np.complex128)
    for start in range(0, len(s_a), _BLOCK):
        stop = min(start + _BLOCK, len(s_a))
        idx = (ca[start:stop, None], cb[None, :])
        idx += tuple(
            (ka[start:stop, None, d] - kb[None, :, d]) % dims[d]
            for d in range(len(dims))
        )
        out[start:stop] = tables.data[idx]
    return KernelMatrix(s_a, s_b, out)


def default_lambda(m: KernelMatrix | np.ndarray, scale: float = 1e-6) -> float:
    """`scale` times the average eigenvalue, computed as trace/n."""
    data = m.data if isinstance(m, KernelMatrix) else np.asarray(m)
    if data.ndim != 2 or data.shape[0] != data.shape[1]:
        raise ValueError(f"need a square matrix, got shape {data.shape}")
    n = data.shape[0]
    if n == 0:
        return 0.0
    return scale * float(np.trace(data).real) / n


def auto_lambda(tables: CoilProductTable, scale: float = 1e-6) -> float:
    """Same number as ``default_lambda`` of the full-grid kernel matrix,
    without materializing it.

    Diagonal entries of any kernel matrix depend only on the coil, so the
    full-grid trace is prod(dims) * sum_j table[j, j](0) and the average
    eigenvalue is the per-coil mean of the zero-offset diagonal.
    """
    return scale * float(np.mean(tables.zero_offset_diagonal()))


def weights(
    tables: CoilProductTable,
    s_a: SamplingPattern,
    s_b: SamplingPattern,
    lam: float,
    rank: int | None = None,
) -> WeightSet:
    """Solve (M(S_A,S_A) + lam I) W = M(S_A,S_B).

    Default path is a Cholesky solve of the regularized Hermitian system.
    With ``rank`` given, M(S_A,S_A) is eigendecomposed instead and only the
    top ``rank`` modes (above a relative floor of 1e-12) are inverted, which
    at lam=0 acts as a truncated pseudoinverse and tolerates singular
    systems.
    """
    if lam < 0:
        raise ValueError(f"regularization must be >= 0, got {lam}")
    m_aa = kernel_matrix(tables, s_a, s_a).data
    m_ab = kernel_matrix(tables, s_a, s_b).data
    n = len(s_a)
    if rank is None:
        try:
            factor = scipy.linalg.cho_factor(
                m_aa + lam * np.eye(n), lower=True, check_finite=False
            )
        except np.linalg.LinAlgError as exc:
            hint = "; retry with lam > 0 or a rank cutoff" if lam == 0 else ""
            raise FactorizationError(
                f"kernel system of size {n} not positive definite "
                f"at lam={lam:g}{hint}"
            ) from exc
        w = scipy.linalg.cho_solve(factor, m_ab, check_finite=False)
    else:
        if not 1 <= rank <= n:
            raise ValueError(f"rank must be in [1, {n}], got {rank}")
        evals, evecs = scipy.linalg.eigh(m_aa, check_finite=False)
        # eigh sorts ascending; keep the top `rank` above the relative floor
        floor = 1e-12 * max(evals[-1], 0.0)
        keep = evals[-rank:] > floor
        vals = evals[-rank:][keep]
        vecs = evecs[:, -rank:][:, keep]
        w = vecs @ ((vecs.conj().T @ m_ab) / (vals + lam)[:, None])
    return WeightSet(s_a, s_b, w, float(lam), rank)
