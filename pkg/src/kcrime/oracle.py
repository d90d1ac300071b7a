"""Slow reference implementations used only by tests.

Everything here works with explicitly constructed encoding vectors of
length prod(dims): entry r of the vector for sample (x, j) is
e^{2 pi i x . r} conj(c_j(r)). Gram matrices, weights, and power values are
then direct dense linear algebra with no Fourier shortcuts, so any
disagreement with the fast paths points at the fast paths.

A hard size guard keeps these off experiment-scale problems.
"""

from __future__ import annotations

import numpy as np

from .phantom import CoilModel
from .sampling import SamplingPattern

__all__ = [
    "encoding_matrix",
    "oracle_kernel",
    "oracle_weights",
    "oracle_delta_w",
    "oracle_power",
    "oracle_power_double_sum",
]

SIZE_LIMIT = 512


def _guard(coils: CoilModel):
    if coils.grid.num_points > SIZE_LIMIT:
        raise ValueError(
            f"oracle limited to {SIZE_LIMIT} grid points, "
            f"got {coils.grid.num_points} ({coils.grid})"
        )


def encoding_matrix(coils: CoilModel, pattern: SamplingPattern) -> np.ndarray:
    """Columns are the encoding vectors of the pattern's points.

    Shape (prod(dims), len(pattern)); row order is the C-order flattening of
    the image grid with positions r = idx / dims.
    """
    _guard(coils)
    dims = coils.grid.dims
    axes = [np.arange(n) / n for n in dims]
    r = np.meshgrid(*axes, indexing="ij")
    n_pix = coils.grid.num_k_locations
    out = np.empty((n_pix, len(pattern)), dtype=np.complex128)
    for i, p in enumerate(pattern.points):
        phase = np.zeros(dims)
        for d, x_d in enumerate(p.kidx):
            phase = phase + x_d * r[d]
        vec = np.exp(2j * np.pi * phase) * np.conj(coils.maps[p.coil])
        out[:, i] = vec.ravel()
    return out


def oracle_kernel(
    coils: CoilModel, s_a: SamplingPattern, s_b: SamplingPattern
) -> np.ndarray:
    """Gram matrix of encoding vectors, inner product conjugate-linear in
    the first argument."""
    e_a = encoding_matrix(coils, s_a)
    e_b = encoding_matrix(coils, s_b)
    return e_a.conj().T @ e_b


def oracle_weights(
    coils: CoilModel,
    s_a: SamplingPattern,
    s_b: SamplingPattern,
    lam: float,
) -> np.ndarray:
    """Naive weight solve: pseudoinverse at lam=0, direct solve otherwise."""
    m_aa = oracle_kernel(coils, s_a, s_a)
    m_ab = oracle_kernel(coils, s_a, s_b)
    if lam == 0.0:
        return np.linalg.pinv(m_aa, hermitian=True) @ m_ab
    return np.linalg.solve(m_aa + lam * np.eye(len(s_a)), m_ab)


def oracle_delta_w(
    coils: CoilModel,
    s_pro: SamplingPattern,
    s_retro: SamplingPattern,
    s_all: SamplingPattern,
    lam: float,
) -> np.ndarray:
    w_pr = oracle_weights(coils, s_pro, s_retro, lam)
    w_ra = oracle_weights(coils, s_retro, s_all, lam)
    w_pa = oracle_weights(coils, s_pro, s_all, lam)
    return w_pr @ w_ra - w_pa


def oracle_power(
    coils: CoilModel,
    s_pro: SamplingPattern,
    s_retro: SamplingPattern,
    s_all: SamplingPattern,
    lam: float,
) -> np.ndarray:
    """Squared power function by sweeping the pixel basis.

    For each unit-pixel object e_r, run the full experiment-error pipeline
    and accumulate |error(z)|^2 over r. Summing over an orthonormal basis of
    objects gives the squared norm of each error functional, which is the
    sharp constant in the pointwise error bound. This never forms a kernel
    matrix for the final reduction, so it cross-checks conjugation placement
    end to end.
    """
    dw = oracle_delta_w(coils, s_pro, s_retro, s_all, lam)
    e_pro = encoding_matrix(coils, s_pro)
    # data of object e_r on s_pro is conj(e_pro[r, :]); |error| is conj-invariant
    return np.sum(np.abs(e_pro @ dw) ** 2, axis=0)


def oracle_power_double_sum(
    coils: CoilModel,
    s_pro: SamplingPattern,
    s_retro: SamplingPattern,
    s_all: SamplingPattern,
    lam: float,
) -> np.ndarray:
    """Literal double sum over sample pairs with explicit scalar weights.

    The applied weight of prospective sample p at target z is
    conj(dw[p, z]); the quadratic form below is written in terms of those
    applied weights.
    """
    dw = oracle_delta_w(coils, s_pro, s_retro, s_all, lam)
    m_pp = oracle_kernel(coils, s_pro, s_pro)
    n_pro, n_all = dw.shape
    p2 = np.zeros(n_all)
    for z in range(n_all):
        acc = 0.0 + 0.0j
        for p in range(n_pro):
            w_p = np.conj(dw[p, z])
            for q in range(n_pro):
                w_q = np.conj(dw[q, z])
                acc += w_p * m_pp[p, q] * np.conj(w_q)
        p2[z] = acc.real
    return p2
