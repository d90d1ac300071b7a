"""Simulated coil maps, ground-truth objects, and k-space acquisition.

Two ground-truth modes with different purposes:

* discrete: the object is a pixel image and coil k-space is its windowed
  DFT. Full-grid samples then live exactly in the span of the discrete
  encoding functions, so error bounds can be tested with zero slack.
* analytic: coil k-space is evaluated from the closed-form continuous
  Fourier transform of an ellipse sum, convolved with the coil series
  coefficients. No pixel image is ever transformed, which keeps the forward
  model off the reconstruction grid.

Conventions used throughout the package and fixed here: image positions
r = idx/dims on the unit torus, k-space sample f_j(x) is the inner product
of the encoding function with the object, conjugate-linear in the first
argument, which lands on the e^{-2 pi i} forward DFT sign of numpy.fft.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import j1

from .sampling import GridSpec, SamplingPattern

__all__ = [
    "CoilModel",
    "GroundTruth",
    "AcquiredData",
    "Ellipse",
    "make_coils",
    "uniform_coils",
    "make_phantom_discrete",
    "make_phantom_analytic",
    "default_ellipses",
    "rasterize_ellipses",
    "acquire",
]


@dataclass(frozen=True)
class Ellipse:
    """One ellipse on the unit square: complex amplitude, center and
    semiaxes in field-of-view fractions, rotation angle in radians."""

    amplitude: complex
    center: tuple[float, float]
    semiaxes: tuple[float, float]
    angle: float = 0.0

    def __post_init__(self):
        if min(self.semiaxes) <= 0:
            raise ValueError(f"semiaxes must be positive, got {self.semiaxes}")


@dataclass(frozen=True)
class CoilModel:
    """Coil sensitivity maps, pixel-sampled, optionally with the Fourier
    series coefficients that generated them.

    ``maps`` has shape (coils, *dims). In bandlimited mode ``coeffs`` has
    shape (coils, 2L+1, ..., 2L+1), axis index m+L holding the coefficient
    of e^{2 pi i m . r}, and evaluating the series reproduces ``maps``
    exactly.
    """

    grid: GridSpec
    maps: np.ndarray
    mode: str
    order: int | None = None
    coeffs: np.ndarray | None = None

    def __post_init__(self):
        expected = (self.grid.coils,) + self.grid.dims
        if self.maps.shape != expected:
            raise ValueError(f"maps shape {self.maps.shape}, expected {expected}")
        if not np.all(np.isfinite(self.maps)):
            raise ValueError("maps contain non-finite values")
        for j in range(self.grid.coils):
            if not np.any(self.maps[j]):
                raise ValueError(f"coil {j} map is identically zero")
        if self.mode not in ("discrete", "bandlimited"):
            raise ValueError(f"unknown coil mode {self.mode!r}")
        if self.mode == "bandlimited" and (self.order is None or self.coeffs is None):
            raise ValueError("bandlimited mode needs order and coeffs")


@dataclass(frozen=True)
class GroundTruth:
    """Full-grid coil k-space plus, in discrete mode, the pixel object.

    ``rho_l2`` is the flat l2 norm of ``rho`` in discrete mode; in analytic
    mode it is the continuous L2 norm of the ellipse sum (closed form, valid
    for non-overlapping ellipses).
    """

    grid: GridSpec
    mode: str
    coil_kspace: np.ndarray
    rho: np.ndarray | None
    rho_l2: float

    def __post_init__(self):
        expected = (self.grid.coils,) + self.grid.dims
        if self.coil_kspace.shape != expected:
            raise ValueError(
                f"coil_kspace shape {self.coil_kspace.shape}, expected {expected}"
            )


@dataclass(frozen=True)
class AcquiredData:
    """Sampled values aligned with a pattern's point order."""

    pattern: SamplingPattern
    values: np.ndarray
    noise_seed: int | None = None
    snr_db: float | None = None

    def __post_init__(self):
        if self.values.shape != (len(self.pattern),):
            raise ValueError(
                f"{len(self.values)} values for {len(self.pattern)} pattern points"
            )


def evaluate_series(dims: tuple[int, ...], coeffs: np.ndarray) -> np.ndarray:
    """Evaluate sum_m coeffs[m+L] e^{2 pi i m . r} on the pixel grid r=idx/dims."""
    ndim = len(dims)
    if coeffs.ndim != ndim:
        raise ValueError(f"{coeffs.ndim}-d coefficients on a {ndim}-d grid")
    order = (coeffs.shape[0] - 1) // 2
    spectrum = np.zeros(dims, dtype=np.complex128)
    for midx in np.ndindex(coeffs.shape):
        freq = tuple((midx[d] - order) % dims[d] for d in range(ndim))
        spectrum[freq] += coeffs[midx]
    return np.prod(dims) * np.fft.ifftn(spectrum)


def make_coils(grid: GridSpec, order: int, seed: int) -> CoilModel:
    """Seeded smooth coil maps as order-`order` Fourier series.

    Coefficients are complex Gaussian draws damped by 1/(1+|m|^2), with a
    unit DC term and, for order >= 1, a per-coil spatially-offset cosine
    bias along each axis so the maps are linearly independent. Needs
    2*order+1 <= min(dims) so distinct series frequencies stay distinct on
    the grid.
    """
    if order < 0:
        raise ValueError(f"series order must be >= 0, got {order}")
    if any(2 * order + 1 > d for d in grid.dims):
        raise ValueError(
            f"order {order} needs grid extents >= {2 * order + 1}, got {grid.dims}"
        )
    ndim = len(grid.dims)
    shape = (2 * order + 1,) * ndim
    rng = np.random.default_rng(seed)
    mgrid = np.indices(shape) - order
    decay = 1.0 / (1.0 + np.sum(mgrid * mgrid, axis=0))
    center = (order,) * ndim

    coeffs = np.zeros((grid.coils,) + shape, dtype=np.complex128)
    for j in range(grid.coils):
        raw = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        g = 0.35 * raw / np.sqrt(2.0) * decay
        g[center] += 1.0
        if order >= 1:
            offsets = rng.random(ndim)
            for d in range(ndim):
                plus = list(center)
                minus = list(center)
                plus[d] += 1
                minus[d] -= 1
                g[tuple(plus)] += 0.35 * np.exp(-2j * np.pi * offsets[d])
                g[tuple(minus)] += 0.35 * np.exp(2j * np.pi * offsets[d])
        coeffs[j] = g

    maps = np.stack([evaluate_series(grid.dims, coeffs[j]) for j in range(grid.coils)])
    return CoilModel(grid, maps, "bandlimited", order=order, coeffs=coeffs)


def uniform_coils(grid: GridSpec) -> CoilModel:
    """All-ones sensitivities (order-0 series). With a single coil the
    kernel matrix of the full grid reduces to prod(dims) times identity,
    which several tests rely on."""
    shape = (grid.coils,) + (1,) * len(grid.dims)
    coeffs = np.ones(shape, dtype=np.complex128)
    maps = np.ones((grid.coils,) + grid.dims, dtype=np.complex128)
    return CoilModel(grid, maps, "bandlimited", order=0, coeffs=coeffs)


def _check_2d(grid: GridSpec):
    if len(grid.dims) != 2:
        raise ValueError(f"ellipse phantoms are 2-d only, grid has dims {grid.dims}")


def rasterize_ellipses(dims: tuple[int, ...], ellipses) -> np.ndarray:
    """Pixel image of an ellipse sum: amplitude inside, 0 outside."""
    if len(dims) != 2:
        raise ValueError("rasterization is 2-d only")
    r0 = np.arange(dims[0])[:, None] / dims[0]
    r1 = np.arange(dims[1])[None, :] / dims[1]
    img = np.zeros(dims, dtype=np.complex128)
    for e in ellipses:
        d0 = r0 - e.center[0]
        d1 = r1 - e.center[1]
        cos, sin = np.cos(e.angle), np.sin(e.angle)
        u0 = (cos * d0 + sin * d1) / e.semiaxes[0]
        u1 = (-sin * d0 + cos * d1) / e.semiaxes[1]
        img += e.amplitude * (u0 * u0 + u1 * u1 <= 1.0)
    return img


def default_ellipses(seed: int, count: int = 3) -> tuple[Ellipse, ...]:
    """Seeded ellipse layout: centers well inside the field of view,
    moderate sizes, random complex amplitudes and orientations."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        amp = rng.uniform(0.5, 1.0) * np.exp(2j * np.pi * rng.random())
        center = tuple(rng.uniform(0.3, 0.7, size=2))
        semiaxes = tuple(rng.uniform(0.06, 0.18, size=2))
        angle = rng.uniform(0.0, np.pi)
        out.append(Ellipse(amp, center, semiaxes, angle))
    return tuple(out)


def make_phantom_discrete(
    coils: CoilModel, seed: int, count: int = 3
) -> GroundTruth:
    """Pixel-domain ellipse phantom with exact DFT coil k-space.

    The full-grid samples of the result lie exactly in the span of the
    discrete encoding functions, and the object's l2 norm upper-bounds the
    native norm of the data, so interpolation error bounds computed
    downstream hold with zero slack.
    """
    _check_2d(coils.grid)
    rho = rasterize_ellipses(coils.grid.dims, default_ellipses(seed, count))
    kspace = np.stack(
        [np.fft.fftn(coils.maps[j] * rho) for j in range(coils.grid.coils)]
    )
    return GroundTruth(coils.grid, "discrete", kspace, rho, float(np.linalg.norm(rho)))


def _signed_freqs(dims):
    # fftfreq-style: index x maps to x for x < ceil(N/2), else x - N
    return [np.fft.fftfreq(n, d=1.0 / n).astype(np.intp) for n in dims]


def _ellipse_sum_ft(k0: np.ndarray, k1: np.ndarray, ellipses) -> np.ndarray:
    """Continuous FT of the ellipse sum at frequency pairs (k0, k1)."""
    out = np.zeros(np.broadcast(k0, k1).shape, dtype=np.complex128)
    for e in ellipses:
        cos, sin = np.cos(e.angle), np.sin(e.angle)
        q0 = e.semiaxes[0] * (cos * k0 + sin * k1)
        q1 = e.semiaxes[1] * (-sin * k0 + cos * k1)
        q = np.hypot(q0, q1)
        disk = np.full(q.shape, np.pi)
        nz = q > 0
        disk[nz] = j1(2.0 * np.pi * q[nz]) / q[nz]
        phase = np.exp(-2j * np.pi * (k0 * e.center[0] + k1 * e.center[1]))
        out += e.amplitude * e.semiaxes[0] * e.semiaxes[1] * disk * phase
    return out


def make_phantom_analytic(coils: CoilModel, ellipses) -> GroundTruth:
    """Coil k-space from the closed-form ellipse transform, never from a
    pixel grid.

    coil_kspace[j](x) = sum_m gamma_{j,m} rho_hat(nu(x) - m), where gamma
    are the coil series coefficients, nu maps grid indices to signed
    integer frequencies, and rho_hat is the exact continuous transform of
    the ellipse sum. ``rho`` is absent; ``rho_l2`` is the continuous L2
    norm sqrt(sum |A|^2 pi a b), exact when ellipses do not overlap.
    """
    _check_2d(coils.grid)
    if coils.mode != "bandlimited":
        raise ValueError("analytic mode needs a bandlimited coil model")
    ellipses = tuple(ellipses)
    dims = coils.grid.dims
    f0, f1 = _signed_freqs(dims)
    nu0 = f0[:, None]
    nu1 = f1[None, :]
    order = coils.order

    kspace = np.zeros((coils.grid.coils,) + dims, dtype=np.complex128)
    for m0 in range(-order, order + 1):
        for m1 in range(-order, order + 1):
            rho_hat = _ellipse_sum_ft(nu0 - m0, nu1 - m1, ellipses)
            gamma = coils.coeffs[:, m0 + order, m1 + order]
            kspace += gamma[:, None, None] * rho_hat[None, :, :]

    l2 = np.sqrt(
        sum(abs(e.amplitude) ** 2 * np.pi * e.semiaxes[0] * e.semiaxes[1] for e in ellipses)
    )
    return GroundTruth(coils.grid, "analytic", kspace, None, float(l2))


def acquire(
    gt: GroundTruth,
    pattern: SamplingPattern,
    snr_db: float | None = None,
    seed: int = 0,
) -> AcquiredData:
    """Sample the ground-truth k-space at a pattern, optionally with noise.

    Noise is i.i.d. circular complex Gaussian with variance sigma^2 set by
    10 log10(mean |signal|^2 over the full grid / sigma^2) = snr_db, so the
    level is a property of the object, not of the pattern. ``snr_db=None``
    means noiseless; non-finite values are rejected.
    """
    if pattern.grid != gt.grid:
        raise ValueError(f"pattern grid {pattern.grid} != data grid {gt.grid}")
    idx = (pattern.coil_array,) + tuple(
        pattern.kidx_array[:, d] for d in range(len(gt.grid.dims))
    )
    values = gt.coil_kspace[idx].astype(np.complex128)
    if snr_db is None:
        return AcquiredData(pattern, values)
    if not np.isfinite(snr_db):
        raise ValueError(f"snr_db must be finite or None, got {snr_db}")
    signal_power = float(np.mean(np.abs(gt.coil_kspace) ** 2))
    sigma2 = signal_power * 10.0 ** (-snr_db / 10.0)
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, np.sqrt(sigma2 / 2.0), size=(len(values), 2))
    values = values + noise[:, 0] + 1j * noise[:, 1]
    return AcquiredData(pattern, values, noise_seed=seed, snr_db=float(snr_db))
