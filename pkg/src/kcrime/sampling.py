"""k-space grid geometry and sampling-pattern generators.

A sampling pattern is an ordered set of (k-index, coil) multi-indices on a
periodic integer grid. The ordering is significant: every matrix built
downstream (kernel matrices, interpolation weights) uses pattern order for
its rows and columns. All generators are deterministic, and patterns sampled
at an acceleration R keep all coils at each retained k-location, which is how
multi-coil acquisitions behave in practice. A per-coil constructor
(:func:`pattern_from_points`) is kept for generality.

k-space indices live on a torus: index arithmetic (offsets between samples)
is taken modulo the grid extents, consistent with the DFT-based kernel
tables.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

__all__ = [
    "GridSpec",
    "SamplePoint",
    "SamplingPattern",
    "PatternFormatError",
    "full_grid",
    "uniform_pattern",
    "caipirinha_pattern",
    "random_pattern",
    "pattern_from_k_locations",
    "pattern_from_points",
    "parse_pattern_spec",
    "parse_grid_spec",
    "read_pattern",
    "write_pattern",
]


class PatternFormatError(ValueError):
    """Raised when a pattern file or spec string cannot be parsed."""


@dataclass(frozen=True)
class GridSpec:
    """Extents of the k-space grid (one per encode dimension) plus coil count."""

    dims: tuple[int, ...]
    coils: int

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if len(self.dims) == 0:
            raise ValueError("grid needs at least one k-space dimension")
        if any(d < 1 for d in self.dims):
            raise ValueError(f"grid extents must be >= 1, got {self.dims}")
        if self.coils < 1:
            raise ValueError(f"coil count must be >= 1, got {self.coils}")

    @property
    def num_k_locations(self) -> int:
        return int(np.prod(self.dims))

    @property
    def num_points(self) -> int:
        return self.num_k_locations * self.coils

    def __str__(self) -> str:
        return "x".join(str(d) for d in self.dims) + f"x{self.coils}"


@dataclass(frozen=True)
class SamplePoint:
    """One sample: integer k-index vector plus the coil that measured it."""

    kidx: tuple[int, ...]
    coil: int

    def __post_init__(self):
        object.__setattr__(self, "kidx", tuple(int(k) for k in self.kidx))


@dataclass(frozen=True)
class SamplingPattern:
    """Ordered, duplicate-free sequence of sample points on one grid.

    The sequence order fixes the row/column order of every kernel matrix and
    weight matrix derived from the pattern.
    """

    grid: GridSpec
    points: tuple[SamplePoint, ...]
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))
        ndim = len(self.grid.dims)
        seen = set()
        for i, p in enumerate(self.points):
            if len(p.kidx) != ndim:
                raise ValueError(
                    f"point {i}: k-index has {len(p.kidx)} components, grid has {ndim}"
                )
            for d, k in enumerate(p.kidx):
                if not 0 <= k < self.grid.dims[d]:
                    raise ValueError(
                        f"point {i}: k-index component {d} = {k} outside [0, {self.grid.dims[d]})"
                    )
            if not 0 <= p.coil < self.grid.coils:
                raise ValueError(
                    f"point {i}: coil {p.coil} outside [0, {self.grid.coils})"
                )
            if p in seen:
                raise ValueError(f"point {i}: duplicate sample {p}")
            seen.add(p)

    def __len__(self) -> int:
        return len(self.points)

    @cached_property
    def kidx_array(self) -> np.ndarray:
        """(n, ndim) int array of k-indices in pattern order."""
        return np.array([p.kidx for p in self.points], dtype=np.intp).reshape(
            len(self.points), len(self.grid.dims)
        )

    @cached_property
    def coil_array(self) -> np.ndarray:
        """(n,) int array of coil indices in pattern order."""
        return np.array([p.coil for p in self.points], dtype=np.intp)

    @cached_property
    def k_locations(self) -> set[tuple[int, ...]]:
        return {p.kidx for p in self.points}

    def acceleration(self) -> float:
        """Ratio of full-grid k-locations to distinct sampled k-locations."""
        return self.grid.num_k_locations / len(self.k_locations)

    def same_points(self, other: "SamplingPattern") -> bool:
        """True if both patterns sample the same points in the same order."""
        return self.grid == other.grid and self.points == other.points


def _expand_coils(grid: GridSpec, k_locations, label: str) -> SamplingPattern:
    points = tuple(
        SamplePoint(tuple(loc), c) for loc in k_locations for c in range(grid.coils)
    )
    return SamplingPattern(grid, points, label)


def full_grid(grid: GridSpec) -> SamplingPattern:
    """Every (k-location, coil) pair once, lexicographic k-major, coil-minor."""
    locs = np.indices(grid.dims).reshape(len(grid.dims), -1).T
    return _expand_coils(grid, locs, "full")


def uniform_pattern(
    grid: GridSpec, accel: int, axis: int = 0, offset: int = 0
) -> SamplingPattern:
    """Uniform acceleration along one axis.

    Keeps the k-locations whose ``axis`` component is congruent to ``offset``
    modulo ``accel``; other dimensions stay fully sampled and all coils are
    kept at each retained location. ``accel=1`` reproduces the full grid.
    """
    if accel < 1:
        raise ValueError(f"acceleration must be >= 1, got {accel}")
    if not 0 <= axis < len(grid.dims):
        raise ValueError(f"axis {axis} out of range for {len(grid.dims)}-d grid")
    if not 0 <= offset < accel:
        raise ValueError(f"offset must be in [0, {accel}), got {offset}")
    locs = np.indices(grid.dims).reshape(len(grid.dims), -1).T
    keep = locs[:, axis] % accel == offset
    label = f"uniform:R={accel},axis={axis},offset={offset}"
    return _expand_coils(grid, locs[keep], label)


def caipirinha_pattern(
    grid: GridSpec, r1: int, r2: int, shift: int = 1
) -> SamplingPattern:
    """Sheared-lattice pattern over the first two k-dimensions.

    Keeps k-location (a, b) iff ``a % r1 == 0`` and
    ``b % r2 == (shift * (a // r1)) % r2``; sample density is 1/(r1*r2).
    ``shift=0`` degenerates to a regular r1 x r2 lattice.
    """
    if r1 < 1 or r2 < 1:
        raise ValueError(f"lattice factors must be >= 1, got {r1}x{r2}")
    if not 0 <= shift < r2:
        raise ValueError(f"shift must be in [0, {r2}), got {shift}")
    if len(grid.dims) < 2:
        raise ValueError("sheared lattice needs at least two k-space dimensions")
    locs = np.indices(grid.dims).reshape(len(grid.dims), -1).T
    a, b = locs[:, 0], locs[:, 1]
    keep = (a % r1 == 0) & (b % r2 == (shift * (a // r1)) % r2)
    label = f"caipi:{r1}x{r2},shift={shift}"
    return _expand_coils(grid, locs[keep], label)


def random_pattern(grid: GridSpec, accel: int, seed: int) -> SamplingPattern:
    """Uniformly random k-locations without replacement, seeded.

    Selects ``floor(num_k_locations / accel)`` locations; the same
    (grid, accel, seed) always yields the same pattern. Locations are stored
    in lexicographic order so downstream matrix layouts stay canonical.
    """
    n_locs = grid.num_k_locations
    if accel < 1 or accel > n_locs:
        raise ValueError(f"acceleration must be in [1, {n_locs}], got {accel}")
    n_keep = n_locs // accel
    rng = np.random.default_rng(seed)
    chosen = rng.choice(n_locs, size=n_keep, replace=False)
    chosen.sort()
    locs = np.stack(np.unravel_index(chosen, grid.dims), axis=-1)
    label = f"random:R={accel},seed={seed}"
    return _expand_coils(grid, locs, label)


def pattern_from_k_locations(
    grid: GridSpec, k_locations, label: str = ""
) -> SamplingPattern:
    """Pattern from explicit k-locations, all coils kept at each."""
    return _expand_coils(grid, [tuple(int(k) for k in loc) for loc in k_locations], label)


def pattern_from_points(grid: GridSpec, points, label: str = "") -> SamplingPattern:
    """Pattern from explicit (kidx, coil) pairs, order preserved."""
    pts = tuple(SamplePoint(tuple(kidx), int(coil)) for kidx, coil in points)
    return SamplingPattern(grid, pts, label)


# ---------------------------------------------------------------------------
# spec strings and file format


def parse_grid_spec(text: str) -> GridSpec:
    """Parse ``d0xd1x...xC`` (last component is the coil count)."""
    parts = text.lower().split("x")
    if len(parts) < 2:
        raise PatternFormatError(
            f"grid spec {text!r}: need at least one extent and a coil count"
        )
    try:
        values = [int(p) for p in parts]
    except ValueError as exc:
        raise PatternFormatError(f"grid spec {text!r}: {exc}") from None
    return GridSpec(tuple(values[:-1]), values[-1])


def _parse_kv(body: str, spec: str) -> dict[str, str]:
    out = {}
    for item in body.split(","):
        if not item:
            continue
        if "=" not in item:
            raise PatternFormatError(f"pattern spec {spec!r}: expected key=value, got {item!r}")
        key, _, value = item.partition("=")
        out[key.strip()] = value.strip()
    return out


def parse_pattern_spec(spec: str, grid: GridSpec) -> SamplingPattern:
    """Build a pattern from a compact spec string.

    Supported forms: ``full``, ``uniform:R=2,axis=0[,offset=0]``,
    ``caipi:2x2,shift=1``, ``random:R=4,seed=7``.
    """
    spec = spec.strip()
    kind, _, body = spec.partition(":")
    kind = kind.lower()
    try:
        if kind == "full":
            return full_grid(grid)
        if kind == "uniform":
            kv = _parse_kv(body, spec)
            return uniform_pattern(
                grid,
                accel=int(kv.pop("R")),
                axis=int(kv.pop("axis", "0")),
                offset=int(kv.pop("offset", "0")),
            )
        if kind == "caipi":
            fields = body.split(",", 1)
            r1, _, r2 = fields[0].partition("x")
            kv = _parse_kv(fields[1], spec) if len(fields) > 1 else {}
            return caipirinha_pattern(
                grid, int(r1), int(r2), shift=int(kv.pop("shift", "1"))
            )
        if kind == "random":
            kv = _parse_kv(body, spec)
            return random_pattern(grid, accel=int(kv.pop("R")), seed=int(kv.pop("seed")))
    except (KeyError, ValueError) as exc:
        raise PatternFormatError(f"pattern spec {spec!r}: {exc}") from None
    raise PatternFormatError(
        f"pattern spec {spec!r}: unknown kind {kind!r} "
        "(expected full, uniform, caipi or random)"
    )


def write_pattern(pattern: SamplingPattern, path) -> None:
    """Write the line-oriented pattern file.

    Header ``grid: d0 d1 ... coils`` (optionally ``label: ...``), then one
    ``k0 k1 ... coil`` line per sample in pattern order.
    """
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("grid: " + " ".join(str(d) for d in pattern.grid.dims))
        fh.write(f" {pattern.grid.coils}\n")
        if pattern.label:
            fh.write(f"label: {pattern.label}\n")
        for p in pattern.points:
            fh.write(" ".join(str(k) for k in p.kidx) + f" {p.coil}\n")


def read_pattern(path) -> SamplingPattern:
    """Read a pattern file written by :func:`write_pattern`.

    Raises :class:`PatternFormatError` with line context on malformed input;
    out-of-range or duplicate points surface the underlying message with the
    offending line number attached.
    """
    grid = None
    label = ""
    rows: list[tuple[tuple[int, ...], int]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("grid:"):
                fields = line[len("grid:"):].split()
                if len(fields) < 2:
                    raise PatternFormatError(
                        f"{path}:{lineno}: grid header needs extents and a coil count"
                    )
                try:
                    values = [int(f) for f in fields]
                except ValueError:
                    raise PatternFormatError(
                        f"{path}:{lineno}: non-integer field in grid header: {line!r}"
                    ) from None
                grid = GridSpec(tuple(values[:-1]), values[-1])
                continue
            if line.startswith("label:"):
                label = line[len("label:"):].strip()
                continue
            if grid is None:
                raise PatternFormatError(
                    f"{path}:{lineno}: sample line before grid header"
                )
            fields = line.split()
            if len(fields) != len(grid.dims) + 1:
                raise PatternFormatError(
                    f"{path}:{lineno}: expected {len(grid.dims) + 1} fields, got {len(fields)}"
                )
            try:
                values = [int(f) for f in fields]
            except ValueError:
                raise PatternFormatError(
                    f"{path}:{lineno}: non-integer field in {line!r}"
                ) from None
            rows.append((tuple(values[:-1]), values[-1]))
    if grid is None:
        raise PatternFormatError(f"{path}: missing grid header")
    try:
        return pattern_from_points(grid, rows, label)
    except ValueError as exc:
        raise PatternFormatError(f"{path}: {exc}") from None
