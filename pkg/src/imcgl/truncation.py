"""Truncated reaction term and the modified vector field built from it.

The evolution solved by this package is

    du/dt + (1 + i omega) A u = F(u),        A = 1 - Laplacian,

where F is a globally tame modification of the cubic Ginzburg-Landau
reaction f(u, ubar) = (1+i beta) u - (1+i gamma) u |u|^2:

    F(u) = f(W(u)) - a(W(u)) W(u) + theta(||u||^2) a(W(u)) u - T(u)

with W a per-coefficient clipper, a(w) the operator v -> <f_u(w)> v
+ <f_ubar(w)> vbar built from torus means, theta a ball cutoff and T an
extra damping term acting on low modes at large H^1 energy.  Inside the
calibrated ball all cutoffs are inactive and F(u) == f(u, ubar).

The derivative dF(u) splits into the four pieces l1..l4 minus dT; the
pieces are returned separately because the averaging/cone analysis treats
them differently (l1 is the fluctuation multiplier whose annulus norm is
scanned, l2 carries the constant coefficients C_u, C_ubar, l3 and l4 are
small remainders).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from . import cutoffs
from .cutoffs import BumpSpec
from .spectral import (SpectralField, SpectralGrid, TWO_PI_CUBED, conj_field,
                       dealias_mask, from_grid, project, projector_mask,
                       sobolev_norm_sq, to_grid)

GAUSS_NODES_DEFAULT = 8


@dataclass(frozen=True)
class ModelParams:
    """Physical and cutoff parameters of one model instance.

    N, K select the mode bands (a_eig = 1+|n|^2 thresholds); s/s0 are the
    clipping and embedding exponents; C_star the clipping amplitude; R0,
    R1, Rtilde the cutoff radii (H-norm ball, H^1 window); the reaction is
    rolled off radially between f_support_radius/2 and f_support_radius.
    """

    omega: float = 2.0
    beta: float = 0.5
    gamma: float = 0.6
    N: int = 15
    K: int = 8
    s: float = 3.5
    s0: float = 1.75
    C_star: float = 6.0
    R0: float = 8.0
    R1: float = 25.0
    Rtilde: float = 100.0
    f_support_radius: float = 4.0

    def __post_init__(self):
        if self.omega == 0.0:
            raise ValueError("omega must be nonzero (dispersion drives the "
                             "mode transform)")
        if not 1.5 < self.s0 < 2.0:
            raise ValueError(f"s0 must lie in (3/2, 2), got {self.s0}")
        if not self.s0 + 1.5 < self.s < 4.0:
            raise ValueError(f"s must lie in (s0+3/2, 4), got {self.s}")
        if not 0 < self.K < self.N:
            raise ValueError(f"need 0 < K < N, got K={self.K}, N={self.N}")
        if self.C_star <= 0:
            raise ValueError("C_star must be positive")
        if self.R0 <= 0 or self.R1 <= 0:
            raise ValueError("cutoff radii must be positive")
        if self.Rtilde <= self.R1:
            raise ValueError("Rtilde must exceed R1")
        if self.f_support_radius <= 0:
            raise ValueError("f_support_radius must be positive")

    @property
    def bump_spec(self) -> BumpSpec:
        return BumpSpec.from_radii(self.R0, self.R1, self.Rtilde)

    def with_bands(self, N: int, K: int | None = None) -> "ModelParams":
        return replace(self, N=N, K=self.K if K is None else K)


# ---------------------------------------------------------------------------
# reaction term (pointwise, vectorized over grids)


def eval_f(point, params: ModelParams) -> np.ndarray:
    """Rolled-off cubic reaction at complex point(s)."""
    z = np.asarray(point, dtype=np.complex128)
    r = np.abs(z)
    g = (1.0 + 1j * params.beta) * z - (1.0 + 1j * params.gamma) * z * r ** 2
    m = cutoffs.support_cut(r, 0.5 * params.f_support_radius,
                            params.f_support_radius)
    return g * m


def eval_f_derivs(point, params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    """Wirtinger pair (df/du, df/dubar) at complex point(s)."""
    _, fu, fub = _reaction_with_derivs(point, params)
    return fu, fub


def _reaction_with_derivs(point, params: ModelParams):
    z = np.asarray(point, dtype=np.complex128)
    r = np.abs(z)
    cb = 1.0 + 1j * params.beta
    cg = 1.0 + 1j * params.gamma
    g = cb * z - cg * z * r ** 2
    gu = cb - 2.0 * cg * r ** 2
    gub = -cg * z * z

    rp = 0.5 * params.f_support_radius
    rs = params.f_support_radius
    m = cutoffs.support_cut(r, rp, rs)
    md = cutoffs.support_cut_d(r, rp, rs)

    safe_r = np.where(r > 0, r, 1.0)
    zb = np.conj(z)
    fu = gu * m + g * md * zb / (2.0 * safe_r)
    fub = gub * m + g * md * z / (2.0 * safe_r)
    f = g * m
    return f, fu, fub


def eval_f_second_derivs(point, params: ModelParams):
    """(f_uu, f_uub, f_ubub); needed for the derivative of the torus means."""
    z = np.asarray(point, dtype=np.complex128)
    r = np.abs(z)
    cb = 1.0 + 1j * params.beta
    cg = 1.0 + 1j * params.gamma
    g = cb * z - cg * z * r ** 2
    gu = cb - 2.0 * cg * r ** 2
    gub = -cg * z * z
    guu = -2.0 * cg * np.conj(z)
    guub = -2.0 * cg * z

    rp = 0.5 * params.f_support_radius
    rs = params.f_support_radius
    m = cutoffs.support_cut(r, rp, rs)
    md = cutoffs.support_cut_d(r, rp, rs)
    md2 = cutoffs.support_cut_d2(r, rp, rs)

    safe_r = np.where(r > 0, r, 1.0)
    zb = np.conj(z)
    fuu = (guu * m + gu * md * zb / safe_r
           + g * (md2 * zb ** 2 / (4.0 * safe_r ** 2)
                  - md * zb ** 2 / (4.0 * safe_r ** 3)))
    fuub = (guub * m + (gu * z + gub * zb) * md / (2.0 * safe_r)
            + g * (md2 / 4.0 + md / (4.0 * safe_r)))
    fubub = (gub * md * z / safe_r
             + g * (md2 * z ** 2 / (4.0 * safe_r ** 2)
                    - md * z ** 2 / (4.0 * safe_r ** 3)))
    return fuu, fuub, fubub


# ---------------------------------------------------------------------------
# coefficient clipper W


@lru_cache(maxsize=16)
def _clip_scale(grid: SpectralGrid, s: float, c_star: float) -> np.ndarray:
    """(1+|n|^2)^{s/2} / C_star cube; W_n = phi(scale * u_n) / scale."""
    arr = grid.a_eig ** (0.5 * s) / c_star
    arr.setflags(write=False)
    return arr


def truncate_W(u: SpectralField, params: ModelParams) -> SpectralField:
    scale = _clip_scale(u.grid, params.s, params.C_star)
    return u.grid.field(cutoffs.phi_value(scale * u.coeffs) / scale, copy=False)


def clip_state(u: SpectralField, params: ModelParams) -> np.ndarray:
    """Rescaled coefficients fed to phi (diagnostic helper)."""
    return _clip_scale(u.grid, params.s, params.C_star) * u.coeffs


def W_prime_pair(u: SpectralField, params: ModelParams):
    """Per-mode Wirtinger coefficients (p, q) of dW(u): dW v = p v + q conj v."""
    zeta = clip_state(u, params)
    return cutoffs.phi_wirtinger(zeta)


def W_prime_apply(u: SpectralField, v: SpectralField,
                  params: ModelParams) -> SpectralField:
    p, q = W_prime_pair(u, params)
    return u.grid.field(p * v.coeffs + q * np.conj(v.coeffs), copy=False)


def clip_bound_H(params: ModelParams, grid: SpectralGrid,
                 exponent: float | None = None) -> float:
    """Uniform bound sup_u ||W(u)||_{H^e} from per-mode maximization.

    |W_n| <= C_star (1+|n|^2)^{-s/2} sup|phi|, summed with H^e weights over
    the cube.  Default exponent is s0.
    """
    e = params.s0 if exponent is None else exponent
    w = grid.a_eig ** (e - params.s)
    return float(params.C_star * cutoffs.phi_max_abs()
                 * np.sqrt(TWO_PI_CUBED * np.sum(w)))


# ---------------------------------------------------------------------------
# extra damping term T


def _h1_energy_low(u: SpectralField, params: ModelParams) -> float:
    """||A^{1/2} P_N u||_H^2 = ||P_N u||_{H^1}^2."""
    mask = projector_mask(u.grid, "low", params.N)
    return float(TWO_PI_CUBED * np.sum(u.grid.a_eig * np.abs(u.coeffs) ** 2,
                                       where=mask))


def map_T(u: SpectralField, params: ModelParams) -> SpectralField:
    X = _h1_energy_low(u, params)
    spec = params.bump_spec
    val = float(cutoffs.hi_cut(X, spec))
    if val == 0.0:
        return u.grid.zero_field()
    mask = projector_mask(u.grid, "low", params.N)
    half = np.sqrt(u.grid.a_eig)
    return u.grid.field(np.where(mask, val * half * u.coeffs, 0.0), copy=False)


def T_prime_apply(u: SpectralField, v: SpectralField,
                  params: ModelParams) -> SpectralField:
    """dT(u) v (v projected to the low band first; T only sees P_N u)."""
    mask = projector_mask(u.grid, "low", params.N)
    X = _h1_energy_low(u, params)
    spec = params.bump_spec
    val = float(cutoffs.hi_cut(X, spec))
    der = float(cutoffs.hi_cut_d(X, spec))
    if val == 0.0 and der == 0.0:
        return u.grid.zero_field()
    half = np.sqrt(u.grid.a_eig)
    a_half_v = np.where(mask, half * v.coeffs, 0.0)
    a_half_u = np.where(mask, half * u.coeffs, 0.0)
    # Re(A^{1/2} P_N u, A^{1/2} v)_H
    cross = TWO_PI_CUBED * float(np.sum((a_half_u * np.conj(a_half_v)).real))
    out = val * a_half_v + 2.0 * der * cross * a_half_u
    return u.grid.field(out, copy=False)


def audit_damping_form(u: SpectralField, params: ModelParams) -> float:
    """Max eigenvalue of Re(dT(u) v, v) - ((N^{1/2} - A^{1/2}) v, v)/2 on
    the low band (doubled real coordinates).  Must be <= 0 for the damping
    term to be dissipative relative to the N^{1/2} shift.
    """
    mask = projector_mask(u.grid, "low", params.N)
    lam_half = np.sqrt(u.grid.a_eig[mask])
    X = _h1_energy_low(u, params)
    spec = params.bump_spec
    val = float(cutoffs.hi_cut(X, spec))
    der = float(cutoffs.hi_cut_d(X, spec))

    gc = lam_half * u.coeffs[mask]          # A^{1/2} P_N u on the band
    g = np.concatenate([gc.real, gc.imag])  # doubled real coordinates
    lam2 = np.concatenate([lam_half, lam_half])
    d = (val + 0.5) * lam2 - 0.5 * np.sqrt(params.N)
    mat = np.diag(d)
    if der != 0.0:
        h = lam2 * g
        mat = mat + der * TWO_PI_CUBED * (np.outer(h, g) + np.outer(g, h))
    return float(np.linalg.eigvalsh(TWO_PI_CUBED * mat).max())


# ---------------------------------------------------------------------------
# spatial averages and the constant coefficients


def spatial_average(w: SpectralField, params: ModelParams,
                    grid_values: np.ndarray | None = None) -> tuple[complex, complex]:
    """Torus means of the reaction derivatives at an already clipped state."""
    wg = to_grid(w) if grid_values is None else grid_values
    fu, fub = eval_f_derivs(wg, params)
    return complex(fu.mean()), complex(fub.mean())


def coefficients_C(u: SpectralField, params: ModelParams) -> tuple[complex, complex]:
    """(C_u, C_ubar) = theta(||u||^2) * torus means at W(u)."""
    th = float(cutoffs.ball_cut(sobolev_norm_sq(u), params.bump_spec))
    if th == 0.0:
        return 0.0 + 0.0j, 0.0 + 0.0j
    a_u, a_ub = spatial_average(truncate_W(u, params), params)
    return th * a_u, th * a_ub


# ---------------------------------------------------------------------------
# modified vector field


def nonlinearity_F(u: SpectralField, params: ModelParams,
                   dealias: bool = True) -> SpectralField:
    w = truncate_W(u, params)
    wg = to_grid(w)
    fg, fu, fub = _reaction_with_derivs(wg, params)
    fW = from_grid(fg, u.grid)
    if dealias:
        fW = u.grid.field(np.where(dealias_mask(u.grid), fW.coeffs, 0.0),
                          copy=False)
    a_u = complex(fu.mean())
    a_ub = complex(fub.mean())
    th = float(cutoffs.ball_cut(sobolev_norm_sq(u), params.bump_spec))

    wbar = conj_field(w)
    out = fW.coeffs - (a_u * w.coeffs + a_ub * wbar.coeffs)
    if th != 0.0:
        ubar = conj_field(u)
        out = out + th * (a_u * u.coeffs + a_ub * ubar.coeffs)
    tfield = map_T(u, params)
    out = out - tfield.coeffs
    return u.grid.field(out, copy=False)


class FPrimeContext:
    """Everything dF(u) needs, precomputed once per base state u.

    apply(v) costs two small FFTs; building the context costs about one
    F evaluation.  Iterative solvers and variational stepping reuse one
    context for many directions.
    """

    def __init__(self, u: SpectralField, params: ModelParams,
                 dealias: bool = True):
        self.u = u
        self.params = params
        self.grid = u.grid
        self.dealias = dealias
        self.mask = dealias_mask(u.grid) if dealias else None

        self.w = truncate_W(u, params)
        self.wg = to_grid(self.w)
        _, self.fu, self.fub = _reaction_with_derivs(self.wg, params)
        self.fuu, self.fuub, self.fubub = eval_f_second_derivs(self.wg, params)
        self.a_u = complex(self.fu.mean())
        self.a_ub = complex(self.fub.mean())

        nsq = sobolev_norm_sq(u)
        spec = params.bump_spec
        self.theta = float(cutoffs.ball_cut(nsq, spec))
        self.theta_d = float(cutoffs.ball_cut_d(nsq, spec))
        self.C_u = self.theta * self.a_u
        self.C_ub = self.theta * self.a_ub

        self.p, self.q = W_prime_pair(u, params)
        self.wbar = conj_field(self.w)
        self.ubar = conj_field(u)

        # damping-term linearization data
        self.low_mask = projector_mask(u.grid, "low", params.N)
        self.X = _h1_energy_low(u, params)
        self.varphi = float(cutoffs.hi_cut(self.X, spec))
        self.varphi_d = float(cutoffs.hi_cut_d(self.X, spec))
        self._a_half = np.sqrt(u.grid.a_eig)
        self._a_half_u_low = np.where(self.low_mask,
                                      self._a_half * u.coeffs, 0.0)

    # -- pieces -------------------------------------------------------------

    def l1(self, v: SpectralField) -> SpectralField:
        wv = self.p * v.coeffs + self.q * np.conj(v.coeffs)
        wvf = self.grid.field(wv, copy=False)
        wv_g = to_grid(wvf)
        prod = self.fu * wv_g + self.fub * np.conj(wv_g)
        out = from_grid(prod, self.grid).coeffs
        if self.mask is not None:
            out = np.where(self.mask, out, 0.0)
        # the mean term is diagonal in mode space, so it carries no mask
        out = out - (self.a_u * wv + self.a_ub * conj_field(wvf).coeffs)
        return self.grid.field(out, copy=False)

    def l2(self, v: SpectralField) -> SpectralField:
        vbar = conj_field(v)
        return self.grid.field(self.C_u * v.coeffs + self.C_ub * vbar.coeffs,
                               copy=False)

    def _mean_derivs(self, v: SpectralField) -> tuple[complex, complex]:
        """Directional derivative of the torus means along W'(u) v."""
        wv = self.p * v.coeffs + self.q * np.conj(v.coeffs)
        wv_g = to_grid(self.grid.field(wv, copy=False))
        da_u = (self.fuu * wv_g + self.fuub * np.conj(wv_g)).mean()
        da_ub = (self.fuub * wv_g + self.fubub * np.conj(wv_g)).mean()
        return complex(da_u), complex(da_ub)

    def l3(self, v: SpectralField,
           mean_derivs: tuple[complex, complex] | None = None) -> SpectralField:
        da_u, da_ub = self._mean_derivs(v) if mean_derivs is None else mean_derivs
        return self.grid.field(-(da_u * self.w.coeffs + da_ub * self.wbar.coeffs),
                               copy=False)

    def l4(self, v: SpectralField,
           mean_derivs: tuple[complex, complex] | None = None) -> SpectralField:
        da_u, da_ub = self._mean_derivs(v) if mean_derivs is None else mean_derivs
        au_field = self.a_u * self.u.coeffs + self.a_ub * self.ubar.coeffs
        re_uv = TWO_PI_CUBED * float(
            np.sum((self.u.coeffs * np.conj(v.coeffs)).real))
        out = 2.0 * self.theta_d * re_uv * au_field
        if self.theta != 0.0:
            out = out + self.theta * (da_u * self.u.coeffs
                                      + da_ub * self.ubar.coeffs)
        return self.grid.field(out, copy=False)

    def t_prime(self, v: SpectralField) -> SpectralField:
        if self.varphi == 0.0 and self.varphi_d == 0.0:
            return self.grid.zero_field()
        a_half_v = np.where(self.low_mask, self._a_half * v.coeffs, 0.0)
        cross = TWO_PI_CUBED * float(
            np.sum((self._a_half_u_low * np.conj(a_half_v)).real))
        out = (self.varphi * a_half_v
               + 2.0 * self.varphi_d * cross * self._a_half_u_low)
        return self.grid.field(out, copy=False)

    # -- assembled ----------------------------------------------------------

    def parts(self, v: SpectralField) -> dict[str, SpectralField]:
        md = self._mean_derivs(v)
        return {"l1": self.l1(v), "l2": self.l2(v),
                "l3": self.l3(v, md), "l4": self.l4(v, md),
                "t_prime": self.t_prime(v)}

    def apply(self, v: SpectralField) -> SpectralField:
        md = self._mean_derivs(v)
        out = (self.l1(v).coeffs + self.l2(v).coeffs
               + self.l3(v, md).coeffs + self.l4(v, md).coeffs
               - self.t_prime(v).coeffs)
        return self.grid.field(out, copy=False)


def F_prime_apply(u: SpectralField, v: SpectralField, params: ModelParams,
                  dealias: bool = True) -> SpectralField:
    return FPrimeContext(u, params, dealias).apply(v)


def F_prime_parts(u: SpectralField, v: SpectralField, params: ModelParams,
                  dealias: bool = True) -> dict[str, SpectralField]:
    return FPrimeContext(u, params, dealias).parts(v)


# ---------------------------------------------------------------------------
# interval (two-point) derivative


def gauss_nodes_01(nodes: int = GAUSS_NODES_DEFAULT,
                   panels: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes/weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    pts, wts = [], []
    for p in range(panels):
        a = p / panels
        b = (p + 1) / panels
        pts.append(0.5 * (b - a) * (x + 1.0) + a)
        wts.append(0.5 * (b - a) * w)
    return np.concatenate(pts), np.concatenate(wts)


class IntervalContext:
    """Quadrature contexts along the segment s u1 + (1-s) u2, s in [0,1]."""

    def __init__(self, u1: SpectralField, u2: SpectralField,
                 params: ModelParams, dealias: bool = True,
                 nodes: int = GAUSS_NODES_DEFAULT, panels: int = 1):
        if u1.grid != u2.grid:
            raise ValueError("interval endpoints live on different grids")
        self.params = params
        pts, wts = gauss_nodes_01(nodes, panels)
        self.weights = wts
        self.contexts = [
            FPrimeContext(u1.grid.field(s * u1.coeffs + (1.0 - s) * u2.coeffs,
                                        copy=False), params, dealias)
            for s in pts]

    def apply(self, v: SpectralField) -> SpectralField:
        acc = np.zeros_like(v.coeffs)
        for wgt, ctx in zip(self.weights, self.contexts):
            acc = acc + wgt * ctx.apply(v).coeffs
        return v.grid.field(acc, copy=False)

    def coefficients(self) -> tuple[complex, complex]:
        cu = sum(w * c.C_u for w, c in zip(self.weights, self.contexts))
        cub = sum(w * c.C_ub for w, c in zip(self.weights, self.contexts))
        return complex(cu), complex(cub)


def F_prime_interval(u1: SpectralField, u2: SpectralField, v: SpectralField,
                     params: ModelParams, dealias: bool = True,
                     nodes: int = GAUSS_NODES_DEFAULT,
                     panels: int = 1) -> SpectralField:
    return IntervalContext(u1, u2, params, dealias, nodes, panels).apply(v)


def coefficients_C_interval(u1: SpectralField, u2: SpectralField,
                            params: ModelParams,
                            nodes: int = GAUSS_NODES_DEFAULT,
                            panels: int = 1) -> tuple[complex, complex]:
    """Interval version of (C_u, C_ubar) by the same quadrature rule."""
    pts, wts = gauss_nodes_01(nodes, panels)
    cu = 0.0 + 0.0j
    cub = 0.0 + 0.0j
    for s, wgt in zip(pts, wts):
        us = u1.grid.field(s * u1.coeffs + (1.0 - s) * u2.coeffs, copy=False)
        a, b = coefficients_C(us, params)
        cu += wgt * a
        cub += wgt * b
    return cu, cub


def coefficients_C_interval_batch(coeffs1: np.ndarray, coeffs2: np.ndarray,
                                  grid: SpectralGrid, params: ModelParams,
                                  nodes: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """Batched interval coefficients for stacks of states (B, M, M, M).

    Used on whole trajectory pairs at once; one FFT batch per quadrature
    node instead of per time sample.
    """
    pts, wts = gauss_nodes_01(nodes, 1)
    scale = _clip_scale(grid, params.s, params.C_star)
    spec = params.bump_spec
    M3 = grid.side ** 3
    cu = np.zeros(coeffs1.shape[0], dtype=np.complex128)
    cub = np.zeros(coeffs1.shape[0], dtype=np.complex128)
    axes = (-3, -2, -1)
    for s, wgt in zip(pts, wts):
        us = s * coeffs1 + (1.0 - s) * coeffs2
        nsq = TWO_PI_CUBED * np.sum(np.abs(us) ** 2, axis=axes)
        th = cutoffs.ball_cut(nsq, spec)
        w = cutoffs.phi_value(scale * us) / scale
        wg = np.fft.ifftn(np.fft.ifftshift(w, axes=axes), axes=axes) * M3
        fu, fub = eval_f_derivs(wg, params)
        cu += wgt * th * fu.mean(axis=axes)
        cub += wgt * th * fub.mean(axis=axes)
    return cu, cub
