"""Smooth plateau functions used by the truncation operators.

Three cutoff families, all built from the standard C-infinity mollifier
germ psi(x) = exp(-1/x):

  phi      : C -> C, identity for |z| <= 1, zero for |z| >= 2, with
             phi(conj z) = conj(phi z).  Radial: phi(z) = z * rho(|z|).
  hi_cut   : "varphi" radial-energy cutoff, 0 for z <= z0, -1/2 for
             z >= z1.  The transition is parameterized in log z so that
             z * |varphi'(z)| stays small; that product is what the
             quadratic-form audit of the damping operator cares about.
  ball_cut : "theta" cutoff, 1 for z <= z0, 0 for z > z1.

phi is not holomorphic outside its plateau, so its derivative is the pair
of Wirtinger coefficients (d/dz, d/dzbar); both are returned and both are
used wherever the derivative acts on a complex coefficient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _psi(x: np.ndarray) -> np.ndarray:
    """exp(-1/x) for x > 0, zero otherwise (C-infinity flat at 0)."""
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    pos = x > 0
    with np.errstate(over="ignore", divide="ignore"):
        out[pos] = np.exp(-1.0 / x[pos])
    return out


def smooth_step(x) -> np.ndarray:
    """C-infinity step: 0 for x <= 0, 1 for x >= 1, strictly monotone between."""
    x = np.asarray(x, dtype=np.float64)
    a = _psi(x)
    b = _psi(1.0 - x)
    return a / (a + b + np.finfo(float).tiny)


def smooth_step_d(x) -> np.ndarray:
    """Derivative of smooth_step (analytic, not finite differences)."""
    x = np.asarray(x, dtype=np.float64)
    inside = (x > 0) & (x < 1)
    out = np.zeros_like(x)
    xi = x[inside]
    a = np.exp(-1.0 / xi)
    b = np.exp(-1.0 / (1.0 - xi))
    da = a / xi ** 2
    db = -b / (1.0 - xi) ** 2
    s = a + b
    out[inside] = (da * s - a * (da + db)) / s ** 2
    return out


# max of smooth_step_d, needed for transition-slope budgets
SMOOTH_STEP_MAX_SLOPE = float(np.max(smooth_step_d(np.linspace(0.0, 1.0, 20001))))


# ---------------------------------------------------------------------------
# phi: complex coefficient clipper


def phi_profile(r) -> np.ndarray:
    """rho(r): 1 for r <= 1, 0 for r >= 2, smooth between."""
    r = np.asarray(r, dtype=np.float64)
    return 1.0 - smooth_step(r - 1.0)


def phi_profile_d(r) -> np.ndarray:
    r = np.asarray(r, dtype=np.float64)
    return -smooth_step_d(r - 1.0)


def phi_value(z: np.ndarray) -> np.ndarray:
    """phi(z) = z * rho(|z|)."""
    z = np.asarray(z, dtype=np.complex128)
    return z * phi_profile(np.abs(z))


def phi_wirtinger(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(d phi/dz, d phi/dzbar) at z.

    On the plateau this is (1, 0); outside the support (|z| >= 2) it is
    (0, 0).  In the transition ring:
        d/dz    = rho(r) + rho'(r) r / 2
        d/dzbar = rho'(r) z^2 / (2 r)
    """
    z = np.asarray(z, dtype=np.complex128)
    r = np.abs(z)
    rho = phi_profile(r)
    drho = phi_profile_d(r)
    p = rho + 0.5 * drho * r
    safe_r = np.where(r > 0, r, 1.0)
    q = np.where(r > 0, drho * z * z / (2.0 * safe_r), 0.0)
    return p.astype(np.complex128), q


def phi_max_abs() -> float:
    """sup |phi| over C (attained on the transition ring)."""
    r = np.linspace(1.0, 2.0, 20001)
    return float(np.max(r * phi_profile(r)))


def phi_prime_max_norm() -> float:
    """sup over z of |d/dz| + |d/dzbar|, the per-coefficient operator norm."""
    r = np.linspace(0.0, 2.0, 40001)
    z = r.astype(np.complex128)
    p, q = phi_wirtinger(z)
    return float(np.max(np.abs(p) + np.abs(q)))


def phi_prime_lipschitz() -> float:
    """Numerical Lipschitz constant of z -> (d/dz, d/dzbar) along rays."""
    r = np.linspace(0.0, 2.2, 44001)
    z = r.astype(np.complex128)
    p, q = phi_wirtinger(z)
    slopes = np.abs(np.diff(p) / np.diff(r)) + np.abs(np.diff(q) / np.diff(r))
    return float(np.max(slopes))


# ---------------------------------------------------------------------------
# varphi / theta style radial cutoffs


@dataclass(frozen=True)
class BumpSpec:
    """Edges and profile data for the three cutoffs of one parameter set.

    hi_* edges are squared H^1-norm levels (varphi window), ball_* edges are
    squared H-norm levels (theta window).  slope_budget records the resulting
    sup of z * |varphi'(z)|, the quantity the damping audit is sensitive to.
    """

    phi_inner: float
    phi_outer: float
    hi_inner: float       # varphi == 0 below this
    hi_outer: float       # varphi == -1/2 above this
    ball_inner: float     # theta == 1 below this
    ball_outer: float     # theta == 0 above this
    slope_budget: float

    @classmethod
    def from_radii(cls, R0: float, R1: float, Rtilde: float) -> "BumpSpec":
        if not (0 < R1 < Rtilde):
            raise ValueError("need 0 < R1 < Rtilde")
        if R0 <= 0:
            raise ValueError("need R0 > 0")
        log_width = float(np.log(Rtilde ** 2 / R1 ** 2))
        budget = 0.5 * SMOOTH_STEP_MAX_SLOPE / log_width
        return cls(phi_inner=1.0, phi_outer=2.0,
                   hi_inner=R1 ** 2, hi_outer=Rtilde ** 2,
                   ball_inner=R0 ** 2, ball_outer=4.0 * R0 ** 2,
                   slope_budget=budget)


def hi_cut(z, spec: BumpSpec) -> np.ndarray:
    """varphi(z): 0 for z <= hi_inner, -1/2 for z >= hi_outer.

    Log-parameterized transition, so z |varphi'| <= spec.slope_budget.
    """
    z = np.asarray(z, dtype=np.float64)
    out = np.zeros_like(z)
    hi = z >= spec.hi_outer
    out[hi] = -0.5
    mid = (z > spec.hi_inner) & (z < spec.hi_outer)
    if np.any(mid):
        w = (np.log(z[mid] / spec.hi_inner)
             / np.log(spec.hi_outer / spec.hi_inner))
        out[mid] = -0.5 * smooth_step(w)
    return out


def hi_cut_d(z, spec: BumpSpec) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    out = np.zeros_like(z)
    mid = (z > spec.hi_inner) & (z < spec.hi_outer)
    if np.any(mid):
        L = np.log(spec.hi_outer / spec.hi_inner)
        w = np.log(z[mid] / spec.hi_inner) / L
        out[mid] = -0.5 * smooth_step_d(w) / (L * z[mid])
    return out


def ball_cut(z, spec: BumpSpec) -> np.ndarray:
    """theta(z): 1 for z <= ball_inner, 0 for z >= ball_outer."""
    z = np.asarray(z, dtype=np.float64)
    w = (z - spec.ball_inner) / (spec.ball_outer - spec.ball_inner)
    return 1.0 - smooth_step(w)


def ball_cut_d(z, spec: BumpSpec) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    w = (z - spec.ball_inner) / (spec.ball_outer - spec.ball_inner)
    return -smooth_step_d(w) / (spec.ball_outer - spec.ball_inner)


def support_cut(r, plateau: float, outer: float) -> np.ndarray:
    """Radial rolloff for the reaction term: 1 for r <= plateau, 0 for r >= outer."""
    r = np.asarray(r, dtype=np.float64)
    w = (r - plateau) / (outer - plateau)
    return 1.0 - smooth_step(w)


def support_cut_d(r, plateau: float, outer: float) -> np.ndarray:
    r = np.asarray(r, dtype=np.float64)
    w = (r - plateau) / (outer - plateau)
    return -smooth_step_d(w) / (outer - plateau)


def support_cut_d2(r, plateau: float, outer: float) -> np.ndarray:
    """Second radial derivative, via the analytic derivative of smooth_step_d."""
    r = np.asarray(r, dtype=np.float64)
    width = outer - plateau
    w = (r - plateau) / width
    return -_smooth_step_d2(w) / width ** 2


def _smooth_step_d2(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    inside = (x > 0) & (x < 1)
    out = np.zeros_like(x)
    xi = x[inside]
    a = np.exp(-1.0 / xi)
    b = np.exp(-1.0 / (1.0 - xi))
    da = a / xi ** 2
    db = -b / (1.0 - xi) ** 2
    d2a = a * (1.0 / xi ** 4 - 2.0 / xi ** 3)
    d2b = b * (1.0 / (1.0 - xi) ** 4 - 2.0 / (1.0 - xi) ** 3)
    s = a + b
    ds = da + db
    d2s = d2a + d2b
    # quotient rule for (a/s)''
    out[inside] = (d2a * s - a * d2s) / s ** 2 - 2.0 * ds * (da * s - a * ds) / s ** 3
    return out
