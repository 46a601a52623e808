"""Dense Fourier-cube fields on the 3-torus and the linear operators on them.

A state is the full complex coefficient cube u_n, n = (k,l,m) in
[-G..G]^3, for the basis e_n = exp(i n.x) on T = [-pi,pi]^3.  No conjugate
symmetry is assumed (states are complex-valued functions).  The inner
product is (u,v) = integral of u * conj(v), so ||e_n||^2 = (2 pi)^3 and

    ||u||_{H^s}^2 = (2 pi)^3 * sum_n (1+|n|^2)^s |u_n|^2.

`a_eig` always refers to the eigenvalue 1+|n|^2 of A = 1 - Laplacian.
Mode projectors are defined through a_eig:

    low(N):      a_eig <= N            (graph / determining modes)
    high(N):     a_eig >  N
    mid(N,K):    N-K < a_eig < N+K     (modes touched by the averaging transform)
    low_gap:     a_eig <= N-K
    high_gap:    a_eig >= N+K

Fields are immutable values; every operation returns a fresh array.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from .errors import GridTooSmallError

TWO_PI_CUBED = (2.0 * np.pi) ** 3

PROJECTOR_NAMES = ("low", "high", "mid", "low_gap", "high_gap")


class ModeIndex(NamedTuple):
    k: int
    l: int
    m: int
    lap_eig: int   # |n|^2
    a_eig: int     # 1 + |n|^2


class SpectralGrid:
    """Precomputed tables for one cube radius G.

    Holds the wavenumber axes, the |n|^2 and 1+|n|^2 cubes, cached Sobolev
    weights, and the index map used to embed the centered cube into FFT
    layout.  Grids are cheap to build and are shared by every field of the
    same radius.
    """

    def __init__(self, radius: int):
        if radius < 0:
            raise ValueError("grid radius must be >= 0")
        self.radius = int(radius)
        self.side = 2 * self.radius + 1
        self.shape = (self.side, self.side, self.side)
        self.wavenumbers = np.arange(-self.radius, self.radius + 1)
        k = self.wavenumbers
        self.lap_eig = (k[:, None, None] ** 2 + k[None, :, None] ** 2
                        + k[None, None, :] ** 2).astype(np.float64)
        self.a_eig = 1.0 + self.lap_eig
        self.max_component = np.maximum(
            np.maximum(np.abs(k)[:, None, None], np.abs(k)[None, :, None]),
            np.abs(k)[None, None, :]).astype(np.int64)
        self._weights: dict[float, np.ndarray] = {}

    def __repr__(self) -> str:  # pragma: no cover
        return f"SpectralGrid(radius={self.radius})"

    def __eq__(self, other) -> bool:
        return isinstance(other, SpectralGrid) and other.radius == self.radius

    def __hash__(self) -> int:
        return hash(("SpectralGrid", self.radius))

    def norm_weights(self, s: float) -> np.ndarray:
        """(1+|n|^2)^s cube, cached per exponent."""
        key = float(s)
        if key not in self._weights:
            w = self.a_eig ** key
            w.setflags(write=False)
            self._weights[key] = w
        return self._weights[key]

    def embed_indices(self, points: int) -> np.ndarray:
        """Positions of wavenumbers -G..G inside an FFT axis of length `points`."""
        if points < self.side:
            raise GridTooSmallError(
                f"need at least {self.side} grid points per axis, got {points}")
        return self.wavenumbers % points

    # -- field constructors -------------------------------------------------

    def field(self, coeffs: np.ndarray, copy: bool = True) -> "SpectralField":
        arr = np.array(coeffs, dtype=np.complex128, copy=copy)
        if arr.shape != self.shape:
            raise ValueError(f"coefficient cube must have shape {self.shape}, "
                             f"got {arr.shape}")
        arr.setflags(write=False)
        return SpectralField(self, arr)

    def zero_field(self) -> "SpectralField":
        return self.field(np.zeros(self.shape, dtype=np.complex128), copy=False)

    def basis_field(self, k: int, l: int, m: int,
                    amplitude: complex = 1.0) -> "SpectralField":
        G = self.radius
        if max(abs(k), abs(l), abs(m)) > G:
            raise GridTooSmallError(f"mode ({k},{l},{m}) outside cube radius {G}")
        c = np.zeros(self.shape, dtype=np.complex128)
        c[k + G, l + G, m + G] = amplitude
        return self.field(c, copy=False)


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Immutable coefficient cube bound to its grid."""

    grid: SpectralGrid
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs.setflags(write=False)

    @property
    def radius(self) -> int:
        return self.grid.radius

    def coefficient(self, k: int, l: int, m: int) -> complex:
        G = self.grid.radius
        return complex(self.coeffs[k + G, l + G, m + G])

    def __add__(self, other: "SpectralField") -> "SpectralField":
        _check_same_grid(self, other)
        return self.grid.field(self.coeffs + other.coeffs, copy=False)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        _check_same_grid(self, other)
        return self.grid.field(self.coeffs - other.coeffs, copy=False)

    def __mul__(self, scalar: complex) -> "SpectralField":
        return self.grid.field(self.coeffs * scalar, copy=False)

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralField":
        return self.grid.field(-self.coeffs, copy=False)


def _check_same_grid(a: SpectralField, b: SpectralField) -> None:
    if a.grid != b.grid:
        raise ValueError("fields live on different grids "
                         f"(radius {a.grid.radius} vs {b.grid.radius})")


# ---------------------------------------------------------------------------
# mode enumeration


def enumerate_modes(radius: int, predicate: str = "all",
                    N: float | None = None,
                    K: float | None = None) -> list[ModeIndex]:
    """List lattice modes of the cube selected by an a_eig predicate.

    predicate: "all", "low" (a_eig <= N), "high" (a_eig > N) or
    "mid" (N-K < a_eig < N+K).  Output is sorted by (a_eig, k, l, m).

    For "low" and "mid" the selected sphere/annulus must fit entirely inside
    the cube, otherwise the listing would silently miss lattice points.
    """
    if predicate not in ("all", "low", "high", "mid"):
        raise ValueError(f"unknown predicate {predicate!r}")
    if predicate in ("low", "high", "mid") and N is None:
        raise ValueError("predicate needs N")
    if predicate == "mid" and K is None:
        raise ValueError("annulus predicate needs K")

    if predicate == "low":
        # largest |n|^2 selected is N-1; its lattice points have max
        # component <= floor(sqrt(N-1)).  The low band must be complete
        # (it is the graph domain); the annulus listing is defined as
        # annulus intersected with the cube and callers needing a complete
        # annulus check containment themselves.
        _require_sphere_inside(radius, _lap_max_le(N))

    out = []
    for k in range(-radius, radius + 1):
        for l in range(-radius, radius + 1):
            for m in range(-radius, radius + 1):
                lap = k * k + l * l + m * m
                a = 1 + lap
                if predicate == "low" and not a <= N:
                    continue
                if predicate == "high" and not a > N:
                    continue
                if predicate == "mid" and not (N - K < a < N + K):
                    continue
                out.append(ModeIndex(k, l, m, lap, a))
    out.sort(key=lambda t: (t.a_eig, t.k, t.l, t.m))
    return out


def _lap_max_le(a_bound: float) -> int:
    """Largest integer |n|^2 with 1+|n|^2 <= a_bound."""
    return int(np.floor(a_bound - 1.0))


def _lap_max_lt(a_bound: float) -> int:
    """Largest integer |n|^2 with 1+|n|^2 < a_bound."""
    return int(np.ceil(a_bound - 1.0)) - 1


def _require_sphere_inside(radius: int, lap_max: int) -> None:
    if lap_max >= 0 and int(np.floor(np.sqrt(lap_max))) > radius:
        raise GridTooSmallError(
            f"grid too small for requested N,K: need max component "
            f"{int(np.floor(np.sqrt(lap_max)))}, cube radius is {radius}")


# ---------------------------------------------------------------------------
# norms, projectors, propagator


def sobolev_norm(u: SpectralField, s: float = 0.0) -> float:
    w = u.grid.norm_weights(s)
    return float(np.sqrt(TWO_PI_CUBED * np.sum(w * np.abs(u.coeffs) ** 2)))


def sobolev_norm_sq(u: SpectralField, s: float = 0.0) -> float:
    w = u.grid.norm_weights(s)
    return float(TWO_PI_CUBED * np.sum(w * np.abs(u.coeffs) ** 2))


def inner_product(u: SpectralField, v: SpectralField) -> complex:
    """(u, v) = integral u * conj(v) over the torus."""
    _check_same_grid(u, v)
    return complex(TWO_PI_CUBED * np.sum(u.coeffs * np.conj(v.coeffs)))


def projector_mask(grid: SpectralGrid, which: str, N: float,
                   K: float | None = None) -> np.ndarray:
    """Boolean cube selecting the requested a_eig range.

    For projectors whose selected band has an upper a_eig limit the sphere
    must fit in the cube (see enumerate_modes); "high"/"high_gap" are always
    meaningful because the complement is cube-bounded by definition.
    """
    a = grid.a_eig
    if which == "low":
        _require_sphere_inside(grid.radius, _lap_max_le(N))
        return a <= N
    if which == "high":
        _require_sphere_inside(grid.radius, _lap_max_le(N))
        return a > N
    if K is None:
        raise ValueError(f"projector {which!r} needs K")
    if which == "mid":
        _require_sphere_inside(grid.radius, _lap_max_lt(N + K))
        return (a > N - K) & (a < N + K)
    if which == "low_gap":
        _require_sphere_inside(grid.radius, _lap_max_le(N - K))
        return a <= N - K
    if which == "high_gap":
        _require_sphere_inside(grid.radius, _lap_max_lt(N + K))
        return a >= N + K
    raise ValueError(f"unknown projector {which!r}")


def project(u: SpectralField, which: str, N: float,
            K: float | None = None) -> SpectralField:
    mask = projector_mask(u.grid, which, N, K)
    return u.grid.field(np.where(mask, u.coeffs, 0.0), copy=False)


@dataclass(frozen=True)
class ModeSplit:
    """u = plus + mid + minus split by the (N,K) bands."""

    plus: SpectralField       # a_eig <= N-K (the band the graph lives over)
    mid: SpectralField        # N-K < a_eig < N+K
    minus: SpectralField      # a_eig >= N+K
    N: float
    K: float

    def reconstruct(self) -> SpectralField:
        return self.plus + self.mid + self.minus


def mode_split(u: SpectralField, N: float, K: float) -> ModeSplit:
    return ModeSplit(project(u, "low_gap", N, K),
                     project(u, "mid", N, K),
                     project(u, "high_gap", N, K), N, K)


def apply_linear_propagator(u: SpectralField, t: float,
                            omega: float) -> SpectralField:
    """exp(-(1+i omega) A t) applied coefficient-wise, exact for any t."""
    phase = np.exp(-(1.0 + 1j * omega) * u.grid.a_eig * t)
    return u.grid.field(phase * u.coeffs, copy=False)


def conj_field(u: SpectralField) -> SpectralField:
    """Coefficients of the pointwise conjugate field: conj(u)_n = conj(u_{-n})."""
    flipped = u.coeffs[::-1, ::-1, ::-1]
    return u.grid.field(np.conj(flipped), copy=False)


# ---------------------------------------------------------------------------
# collocation grid


def to_grid(u: SpectralField, points: int | None = None) -> np.ndarray:
    """Values of u at the uniform collocation points x_j = 2 pi j / M.

    M = `points` >= 2G+1 (default 2G+1).  Exact for the stored band.
    """
    M = u.grid.side if points is None else int(points)
    idx = u.grid.embed_indices(M)
    embedded = np.zeros((M, M, M), dtype=np.complex128)
    embedded[np.ix_(idx, idx, idx)] = u.coeffs
    return np.fft.ifftn(embedded) * M ** 3


def from_grid(values: np.ndarray, grid: SpectralGrid) -> SpectralField:
    """Coefficient cube of grid values sampled on M^3 uniform points.

    Inverse of to_grid for band-limited data; for products the caller is
    responsible for choosing M and for masking (see dealias).
    """
    if values.ndim != 3 or len(set(values.shape)) != 1:
        raise ValueError(f"expected a cubic value array, got shape {values.shape}")
    M = values.shape[0]
    idx = grid.embed_indices(M)  # raises if M < 2G+1
    spectrum = np.fft.fftn(values) / M ** 3
    return grid.field(np.ascontiguousarray(spectrum[np.ix_(idx, idx, idx)]),
                      copy=False)


def dealias_mask(grid: SpectralGrid) -> np.ndarray:
    """Keep-mask of the 2/3 rule: max component <= floor(2G/3)."""
    cutoff = (2 * grid.radius) // 3
    return grid.max_component <= cutoff


def dealias(u: SpectralField) -> SpectralField:
    return u.grid.field(np.where(dealias_mask(u.grid), u.coeffs, 0.0),
                        copy=False)


# ---------------------------------------------------------------------------
# sample fields


def random_field(grid: SpectralGrid, rng: np.random.Generator,
                 amplitude: float = 1.0, decay: float = 2.0) -> SpectralField:
    """Random smooth field: unit complex Gaussians shaped by a_eig^(-decay).

    `amplitude` rescales so that the H-norm equals amplitude * (2 pi)^{3/2}
    (i.e. a unit-amplitude constant field has the same norm).
    """
    shape = grid.shape
    raw = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    raw *= grid.a_eig ** (-decay)
    f = grid.field(raw, copy=False)
    norm = sobolev_norm(f)
    if norm == 0.0:
        return f
    scale = amplitude * TWO_PI_CUBED ** 0.5 / norm
    return grid.field(f.coeffs * scale, copy=False)


def modes_iterable(grid: SpectralGrid, mask: np.ndarray) -> Iterable[tuple[int, int, int]]:
    """(k,l,m) triples where mask is True, in C order of the cube."""
    G = grid.radius
    for flat in np.flatnonzero(mask):
        i, j, k = np.unravel_index(flat, grid.shape)
        yield (int(i) - G, int(j) - G, int(k) - G)
