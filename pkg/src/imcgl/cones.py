"""Floating cones, temporal averaging, and the spatial-averaging scan.

The mid-band change of variables

  z_n = v_n + i/(2 omega a_n) * C_ubar * (conj v)_n,   N-K < a_n < N+K

removes the anti-linear constant-coefficient term from the linearized
equation at the price of an O(1/(N-K)) distortion.  Cone membership and
the differential cone inequality are always evaluated on z.

All operators acting on conj(v) are R-linear, not C-linear; norms are
computed after doubling to real coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (ConeAssumptionError, GridTooSmallError,
                     TemporalAveragingError)
from .spectral import (SpectralField, SpectralGrid, TWO_PI_CUBED,
                       enumerate_modes, projector_mask, sobolev_norm_sq,
                       to_grid)
from .truncation import (ModelParams, W_prime_pair, coefficients_C,
                         coefficients_C_interval, eval_f_derivs,
                         truncate_W, FPrimeContext)
from . import dynamics as _dyn

EPSILON_DEFAULT = 1.0 / 16.0
MU_DEFAULT = 1.0 / 8.0


# ---------------------------------------------------------------------------
# temporal-averaging transform


def _context_coefficients(context, params: ModelParams):
    if isinstance(context, SpectralField):
        return coefficients_C(context, params)
    u1, u2 = context
    return coefficients_C_interval(u1, u2, params)


def _mid_kappa(grid: SpectralGrid, params: ModelParams) -> np.ndarray:
    mask = projector_mask(grid, "mid", params.N, params.K)
    kappa = np.zeros(grid.shape, dtype=np.complex128)
    kappa[mask] = 1j / (2.0 * params.omega * grid.a_eig[mask])
    return kappa


def _check_contraction(c_ub: complex, params: ModelParams) -> float:
    factor = abs(c_ub) / (2.0 * abs(params.omega) * (params.N - params.K))
    if factor >= 0.5:
        raise TemporalAveragingError(
            f"N - K too small for temporal averaging: contraction factor "
            f"{factor:.3g} >= 0.5 (|C_ubar| = {abs(c_ub):.3g}, "
            f"N - K = {params.N - params.K:g})")
    return factor


def _conj_coeffs(coeffs: np.ndarray) -> np.ndarray:
    # coefficients of the conjugate field: n -> -n plus conjugation
    return np.conj(coeffs[..., ::-1, ::-1, ::-1])


def transform_to_z(context, v: SpectralField, params: ModelParams,
                   c_ub: complex | None = None) -> SpectralField:
    """Map v to the averaged variable z; identity off the mid band."""
    if c_ub is None:
        c_ub = _context_coefficients(context, params)[1]
    _check_contraction(c_ub, params)
    kappa = _mid_kappa(v.grid, params)
    z = v.coeffs + (c_ub * kappa) * _conj_coeffs(v.coeffs)
    return v.grid.field(z, copy=False)


def transform_from_z(context, z: SpectralField, params: ModelParams,
                     c_ub: complex | None = None) -> SpectralField:
    """Inverse of transform_to_z with the same context."""
    if c_ub is None:
        c_ub = _context_coefficients(context, params)[1]
    _check_contraction(c_ub, params)
    grid = z.grid
    kappa = _mid_kappa(grid, params)
    denom = 1.0 - (abs(c_ub) ** 2) * np.abs(kappa) ** 2
    v = (z.coeffs - (c_ub * kappa) * _conj_coeffs(z.coeffs)) / denom
    return grid.field(v, copy=False)


# ---------------------------------------------------------------------------
# cone form


def cone_V(xi: SpectralField, N: float) -> float:
    """V(xi) = ||Q_N xi||^2_H - ||P_N xi||^2_H in the base norm."""
    low = projector_mask(xi.grid, "low", N)
    e = np.abs(xi.coeffs) ** 2
    return float(TWO_PI_CUBED * (np.sum(e[~low]) - np.sum(e[low])))


def _cone_V_batch(coeffs: np.ndarray, low_mask: np.ndarray) -> np.ndarray:
    e = np.abs(coeffs) ** 2
    sign = np.where(low_mask, -1.0, 1.0)
    return TWO_PI_CUBED * np.sum(e * sign, axis=(-3, -2, -1))


def in_cone(context, v: SpectralField, params: ModelParams,
            tol: float = 1e-9, c_ub: complex | None = None) -> str:
    """Floating-cone membership of v: 'inside', 'boundary' or 'outside'.

    Decided on z = transform_to_z(context, v) with a relative band
    |V| <= tol * ||z||^2 counting as boundary.
    """
    z = transform_to_z(context, v, params, c_ub=c_ub)
    V = cone_V(z, params.N)
    band = tol * sobolev_norm_sq(z, 0.0)
    if V < -band:
        return "inside"
    if V > band:
        return "outside"
    return "boundary"


# ---------------------------------------------------------------------------
# cone certificates


@dataclass
class ConeCertificate:
    """Sampled check of d/dt V(z) + alpha V(z) <= -mu ||z||^2.

    residual[i] = dV/dt + alpha*V + mu*||z||^2 at interior sample i+1, with
    dV/dt by centered differences at the saved spacing dt.  The verdict
    requires residual <= tol * (1 + ||z||^2) at every interior sample; tol
    carries a third-difference curvature scale so that the finite-difference
    truncation error itself cannot fail a genuinely satisfied inequality.
    """

    kind: str                 # "pair" or "variation"
    times: np.ndarray
    dt: float
    mu: float
    V: np.ndarray
    z_norm_sq: np.ndarray
    alpha: np.ndarray
    residual: np.ndarray      # interior samples, len n-2
    tol: float
    tol_scale: float
    verdict: bool
    max_residual_ratio: float     # max residual/(1+||z||^2), interior
    alpha_min: float
    alpha_max: float
    C_u: np.ndarray
    C_ub: np.ndarray
    chi: np.ndarray
    contraction_max: float
    started_inside: bool
    exit_times: np.ndarray
    exit_count: int

    @property
    def interior_times(self) -> np.ndarray:
        return self.times[1:-1]

    @property
    def residual_bound(self) -> np.ndarray:
        return self.tol * (1.0 + self.z_norm_sq[1:-1])


def _chi_series(traj: _dyn.Trajectory) -> np.ndarray:
    p = traj.params
    return (_dyn._h1_low_norms(traj) >= 4.0 * p.Rtilde).astype(float)


def _transform_batch(vc: np.ndarray, c_ub: np.ndarray, grid: SpectralGrid,
                     params: ModelParams) -> tuple[np.ndarray, float]:
    factors = [
        _check_contraction(c, params) for c in np.atleast_1d(c_ub)]
    kappa = _mid_kappa(grid, params)
    ck = c_ub[:, None, None, None] * kappa[None, ...]
    return vc + ck * _conj_coeffs(vc), max(factors)


def verify_cone_inequality(base: _dyn.Trajectory,
                           other: _dyn.Trajectory | None = None,
                           v0: SpectralField | None = None,
                           mu: float = MU_DEFAULT,
                           tol_factor: float = 10.0,
                           interval_nodes: int = 4,
                           sa_report=None) -> ConeCertificate:
    """Certify the differential cone inequality along a pair or a variation.

    Pair form: v(t) = u1(t) - u2(t) with interval coefficients and the
    two-trajectory alpha.  Variation form: v(t) integrated along base with
    pointwise coefficients.  Callers are expected to have run the
    dissipativity monitor on the base trajectories; if an SA report for
    (N, K) is supplied and is inadmissible the check refuses outright.
    """
    if (other is None) == (v0 is None):
        raise ValueError("provide exactly one of: other trajectory, v0")
    p = base.params
    if sa_report is not None and not sa_report.admissible:
        raise ConeAssumptionError(
            f"(N, K) = ({p.N:g}, {p.K:g}) failed spatial-averaging "
            f"admissibility (norm {sa_report.norm:.3g} > "
            f"{sa_report.epsilon:.3g}); run n_search to pick N")
    model = base.model
    grid = base.grid
    n = base.n_samples
    if n < 3:
        raise ValueError("need at least 3 samples for centered differences")

    if other is not None:
        kind = "pair"
        if not np.array_equal(base.times, other.times):
            raise ValueError("pair trajectories disagree on the time grid")
        vc = base.coeffs - other.coeffs
        C_u, C_ub = model.interval_coefficients_batch(
            base.coeffs, other.coeffs, grid, nodes=interval_nodes)
        chi = _chi_series(base) + _chi_series(other)
        alpha = 2.0 * p.N + 1.0 - 2.0 * np.real(C_u) - (p.K / 16.0) * chi
    else:
        kind = "variation"
        var = _dyn.integrate_variation(base, v0)
        vc = var.coeffs
        cc = [model.coefficients(base.state(i)) for i in range(n)]
        C_u = np.array([c[0] for c in cc])
        C_ub = np.array([c[1] for c in cc])
        chi = _chi_series(base)
        alpha = 2.0 * (p.N + 0.5 - np.real(C_u) - (p.K / 8.0) * chi)

    zc, contraction = _transform_batch(vc, C_ub, grid, p)
    low = projector_mask(grid, "low", p.N)
    V = _cone_V_batch(zc, low)
    znsq = TWO_PI_CUBED * np.sum(np.abs(zc) ** 2, axis=(-3, -2, -1))

    h = base.save_dt
    dVdt = (V[2:] - V[:-2]) / (2.0 * h)
    residual = dVdt + alpha[1:-1] * V[1:-1] + mu * znsq[1:-1]

    # third-difference curvature of V sets the attainable FD accuracy
    if n >= 5:
        d3 = (V[4:] - 2.0 * V[3:-1] + 2.0 * V[1:-3] - V[:-4]) / (2.0 * h ** 3)
        scale = max(1.0, float(np.max(np.abs(d3) / (6.0 * (1.0 + znsq[2:-2])))))
    else:
        scale = 1.0
    tol = tol_factor * h ** 2 * scale

    bound = tol * (1.0 + znsq[1:-1])
    ratios = residual / (1.0 + znsq[1:-1])
    verdict = bool(np.all(residual <= bound))

    outside = V > tol * (1.0 + znsq)
    exits = np.flatnonzero(outside[1:] & (V[:-1] <= 0.0)) + 1
    return ConeCertificate(
        kind=kind, times=base.times.copy(), dt=h, mu=mu, V=V,
        z_norm_sq=znsq, alpha=alpha, residual=residual, tol=tol,
        tol_scale=scale, verdict=verdict,
        max_residual_ratio=float(np.max(ratios)),
        alpha_min=float(np.min(alpha[1:-1])),
        alpha_max=float(np.max(alpha[1:-1])),
        C_u=C_u, C_ub=C_ub, chi=chi, contraction_max=contraction,
        started_inside=bool(V[0] <= 0.0),
        exit_times=base.times[exits], exit_count=int(len(exits)))


# ---------------------------------------------------------------------------
# squeezing


@dataclass
class SqueezingReport:
    """Log-linear decay fit of ||v(t)||_H while outside the floating cone.

    fit_residual is RMS(log residual) / (|slope| * window length), a
    dimensionless fraction of the total fitted drop.
    """

    rate: float
    intercept: float
    fit_residual: float
    window: tuple[float, float]
    times: np.ndarray
    log_norms: np.ndarray
    n_samples: int


def estimate_squeezing(base: _dyn.Trajectory,
                       other: _dyn.Trajectory | None = None,
                       v0: SpectralField | None = None,
                       window: tuple[float, float] | None = None,
                       min_samples: int = 5,
                       interval_nodes: int = 4) -> SqueezingReport:
    """Fit the exponential decay of a difference held outside the cone.

    window = (t_lo, t_hi) restricts the fit; None auto-selects the longest
    prefix on which v stays strictly outside.  A sample inside or on the
    cone boundary within an explicit window raises with that time.
    """
    if (other is None) == (v0 is None):
        raise ValueError("provide exactly one of: other trajectory, v0")
    p = base.params
    model = base.model
    grid = base.grid
    n = base.n_samples
    if other is not None:
        if not np.array_equal(base.times, other.times):
            raise ValueError("pair trajectories disagree on the time grid")
        vc = base.coeffs - other.coeffs
        _, C_ub = model.interval_coefficients_batch(
            base.coeffs, other.coeffs, grid, nodes=interval_nodes)
    else:
        var = _dyn.integrate_variation(base, v0)
        vc = var.coeffs
        C_ub = np.array([model.coefficients(base.state(i))[1]
                         for i in range(n)])

    zc, _ = _transform_batch(vc, C_ub, grid, p)
    low = projector_mask(grid, "low", p.N)
    V = _cone_V_batch(zc, low)
    outside = V > 0.0

    if window is None:
        stop = int(np.argmin(outside)) if not outside.all() else n
        if stop < min_samples:
            t_bad = float(base.times[stop]) if stop < n else float("nan")
            raise ConeAssumptionError(
                f"difference not outside the cone from t = {t_bad:g}; no "
                f"usable fit window", time=t_bad)
        sel = np.arange(stop)
    else:
        t_lo, t_hi = window
        sel = np.flatnonzero((base.times >= t_lo) & (base.times <= t_hi))
        if len(sel) < min_samples:
            raise ValueError("window contains too few samples")
        bad = sel[~outside[sel]]
        if len(bad):
            t_bad = float(base.times[bad[0]])
            raise ConeAssumptionError(
                f"difference not outside the cone at t = {t_bad:g} inside "
                f"the fit window", time=t_bad)

    norms = np.sqrt(TWO_PI_CUBED
                    * np.sum(np.abs(vc[sel]) ** 2, axis=(-3, -2, -1)))
    t = base.times[sel]
    y = np.log(norms)
    design = np.stack([np.ones_like(t), t], axis=1)
    sol, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = design @ sol - y
    span = float(t[-1] - t[0])
    slope = float(sol[1])
    rate = -slope
    rel = float(np.sqrt(np.mean(resid ** 2)) / max(abs(slope) * span, 1e-300))
    return SqueezingReport(rate=rate, intercept=float(sol[0]),
                           fit_residual=rel,
                           window=(float(t[0]), float(t[-1])),
                           times=t, log_norms=y, n_samples=len(sel))


# ---------------------------------------------------------------------------
# spatial-averaging operator on the mode annulus


@dataclass
class SAOperatorReport:
    """Norm of the annulus block of the fluctuation multiplier.

    norm is the decision value: an exact largest singular value when
    method is "svd" or "power", otherwise a one-sided bound tight enough
    to decide admissibility (norm_lower <= true norm <= norm_upper always).
    """

    N: float
    K: float
    epsilon: float
    norm: float
    norm_lower: float
    norm_upper: float
    method: str
    annulus_dim: int
    sample_count: int
    per_sample_norms: list
    admissible: bool


class _SAWorkspace:
    """Per-state spectra and clip derivatives shared across N values.

    The multiplier spectra are taken on a padded grid so that every
    annulus-to-annulus transfer coefficient within the cube band is free
    of wrap-around from the product evaluation.
    """

    def __init__(self, u: SpectralField, params: ModelParams,
                 pad_factor: int = 2):
        grid = u.grid
        self.grid = grid
        self.params = params
        P = 2 * pad_factor * grid.radius + 1
        self.pad_points = P
        w = truncate_W(u, params)
        wg = to_grid(w, points=P)
        fu, fub = eval_f_derivs(wg, params)
        self.g1 = fu - fu.mean()
        self.g2 = fub - fub.mean()
        self.g1_hat = np.fft.fftn(self.g1) / P ** 3
        self.g2_hat = np.fft.fftn(self.g2) / P ** 3
        self.p, self.q = W_prime_pair(u, params)

    def mode_data(self, modes):
        wave = np.array([(m.k, m.l, m.m) for m in modes])
        G = self.grid.radius
        pos = tuple((wave + G).T)
        return wave, self.p[pos], self.q[pos]


def _sa_assemble(ws: _SAWorkspace, modes) -> tuple[np.ndarray, np.ndarray]:
    """Dense (A, B) with (l1 v)|ann = A v + B conj(v) on annulus coords."""
    wave, p_n, q_n = ws.mode_data(modes)
    P = ws.pad_points
    diff = (wave[:, None, :] - wave[None, :, :]) % P
    summ = (wave[:, None, :] + wave[None, :, :]) % P
    g1d = ws.g1_hat[diff[..., 0], diff[..., 1], diff[..., 2]]
    g2s = ws.g2_hat[summ[..., 0], summ[..., 1], summ[..., 2]]
    A = g1d * p_n[None, :] + g2s * np.conj(q_n)[None, :]
    B = g1d * q_n[None, :] + g2s * np.conj(p_n)[None, :]
    return A, B


def _real_double(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    top = np.concatenate([A.real + B.real, -A.imag + B.imag], axis=1)
    bot = np.concatenate([A.imag + B.imag, A.real - B.real], axis=1)
    return np.concatenate([top, bot], axis=0)


def _sa_apply(ws: _SAWorkspace, wave: np.ndarray, p_n, q_n,
              v: np.ndarray) -> np.ndarray:
    """Annulus operator applied through padded FFTs (no assembled matrix)."""
    P = ws.pad_points
    h = p_n * v + q_n * np.conj(v)
    cube = np.zeros((P, P, P), dtype=np.complex128)
    pos = tuple((wave % P).T)
    cube[pos] = h
    hg = np.fft.ifftn(cube) * P ** 3
    outg = ws.g1 * hg + ws.g2 * np.conj(hg)
    out_hat = np.fft.fftn(outg) / P ** 3
    return out_hat[pos]


def _sa_apply_t(ws: _SAWorkspace, wave: np.ndarray, p_n, q_n,
                w: np.ndarray) -> np.ndarray:
    """Real-space adjoint of _sa_apply under the real inner product."""
    P = ws.pad_points
    cube = np.zeros((P, P, P), dtype=np.complex128)
    pos = tuple((wave % P).T)
    cube[pos] = w
    wg = np.fft.ifftn(cube)
    mg = np.conj(ws.g1) * wg + ws.g2 * np.conj(wg)
    m_hat = np.fft.fftn(mg)
    m = m_hat[pos]
    return np.conj(p_n) * m + q_n * np.conj(m)


def _sa_power_norm(ws: _SAWorkspace, modes, rng: np.random.Generator,
                   maxiter: int = 2000, rtol: float = 1e-13) -> float:
    wave, p_n, q_n = ws.mode_data(modes)
    x = rng.standard_normal(len(modes)) + 1j * rng.standard_normal(len(modes))
    x /= np.linalg.norm(x)
    sigma = 0.0
    for _ in range(maxiter):
        y = _sa_apply(ws, wave, p_n, q_n, x)
        z = _sa_apply_t(ws, wave, p_n, q_n, y)
        nz = np.linalg.norm(z)
        if nz == 0.0:
            return 0.0
        # Rayleigh estimate for sigma^2 under the real inner product
        s2 = float(np.real(np.vdot(x, z)))
        new = np.sqrt(max(s2, 0.0))
        x = z / nz
        if abs(new - sigma) <= rtol * max(new, 1.0):
            sigma = new
            break
        sigma = new
    return sigma


def _annulus_modes(grid: SpectralGrid, params: ModelParams):
    # the averaged operator is only meaningful on a complete annulus
    lap_max = int(np.ceil(params.N + params.K - 1.0)) - 1
    if lap_max >= 0 and int(np.floor(np.sqrt(lap_max))) > grid.radius:
        raise GridTooSmallError(
            f"grid too small for requested N,K: annulus a < {params.N + params.K:g} "
            f"needs cube radius {int(np.floor(np.sqrt(lap_max)))}, "
            f"have {grid.radius}")
    modes = enumerate_modes(grid.radius, "mid", N=params.N, K=params.K)
    if not modes:
        raise ValueError(
            f"empty mode annulus for N = {params.N:g}, K = {params.K:g}")
    return modes


def sa_operator_norm(u, params: ModelParams, N: float | None = None,
                     K: float | None = None,
                     epsilon: float = EPSILON_DEFAULT,
                     method: str = "svd",
                     rng: np.random.Generator | None = None,
                     workspaces: list | None = None) -> SAOperatorReport:
    """Operator norm of the annulus-projected fluctuation multiplier.

    u may be one state or a list (norm = max over samples).  method:
    "svd" assembles the real-doubled matrix and takes its largest singular
    value; "power" runs power iteration through padded FFT applications
    (independent arithmetic, same operator); "auto" tries cheap two-sided
    bounds first and falls back to "svd" only when they straddle epsilon.
    """
    if N is not None or K is not None:
        params = params.with_bands(N=N if N is not None else params.N,
                                   K=K if K is not None else params.K)
    if workspaces is None:
        samples = [u] if isinstance(u, SpectralField) else list(u)
        workspaces = [_SAWorkspace(s, params) for s in samples]
    grid = workspaces[0].grid
    modes = _annulus_modes(grid, params)
    if rng is None:
        rng = np.random.default_rng(0)

    per, lows, highs = [], [], []
    used = method
    for ws in workspaces:
        if method == "power":
            val = _sa_power_norm(ws, modes, rng)
            per.append(val)
            lows.append(val)
            highs.append(val)
            continue
        A, B = _sa_assemble(ws, modes)
        M = _real_double(A, B)
        if method == "auto":
            hi = min(np.sqrt(np.linalg.norm(M, 1) * np.linalg.norm(M, np.inf)),
                     np.linalg.norm(M, "fro"))
            x = rng.standard_normal(M.shape[1])
            for _ in range(8):
                y = M @ x
                x = M.T @ y
                nx = np.linalg.norm(x)
                if nx == 0.0:
                    break
                x /= nx
            lo = float(np.linalg.norm(M @ x)) if np.linalg.norm(x) else 0.0
            if hi <= epsilon:
                per.append(float(hi))
                lows.append(lo)
                highs.append(float(hi))
                used = "bound"
                continue
            if lo > epsilon:
                per.append(lo)
                lows.append(lo)
                highs.append(float(hi))
                used = "bound"
                continue
        val = float(np.linalg.svd(M, compute_uv=False)[0])
        used = "svd"
        per.append(val)
        lows.append(val)
        highs.append(val)
    norm = float(max(per))
    return SAOperatorReport(
        N=params.N, K=params.K, epsilon=epsilon, norm=norm,
        norm_lower=float(max(lows)), norm_upper=float(max(highs)),
        method=used, annulus_dim=len(modes), sample_count=len(workspaces),
        per_sample_norms=[float(x) for x in per],
        admissible=bool(norm <= epsilon))


@dataclass
class NSearchEntry:
    N: int
    norm: float
    admissible: bool
    annulus_dim: int
    samples_checked: int
    method: str


@dataclass
class NSearchReport:
    K: float
    epsilon: float
    entries: list

    @property
    def admissible(self) -> list:
        return [e.N for e in self.entries if e.admissible]


def n_search(samples, params: ModelParams, N_range: tuple[int, int],
             K: float | None = None, epsilon: float = EPSILON_DEFAULT,
             method: str = "auto",
             rng: np.random.Generator | None = None) -> NSearchReport:
    """Scan N over an inclusive range for spatial-averaging admissibility.

    For each N the per-sample norms are taken in order and the scan of
    that N aborts on the first sample exceeding epsilon, so inadmissible
    N are cheap.  Workspaces (per-sample spectra) are shared across N.
    """
    if K is None:
        K = params.K
    samples = [samples] if isinstance(samples, SpectralField) else list(samples)
    if rng is None:
        rng = np.random.default_rng(0)
    base = params.with_bands(N=max(float(N_range[1]), params.N), K=K)
    workspaces = [_SAWorkspace(s, base) for s in samples]
    entries = []
    for Nv in range(int(N_range[0]), int(N_range[1]) + 1):
        pN = params.with_bands(N=float(Nv), K=K)
        try:
            modes = _annulus_modes(workspaces[0].grid, pN)
        except ValueError:
            entries.append(NSearchEntry(Nv, float("nan"), False, 0, 0,
                                        "empty"))
            continue
        worst = 0.0
        checked = 0
        ok = True
        used = method
        for ws in workspaces:
            rep = sa_operator_norm(None, pN, epsilon=epsilon, method=method,
                                   rng=rng, workspaces=[ws])
            used = rep.method
            checked += 1
            worst = max(worst, rep.norm)
            if not rep.admissible:
                ok = False
                break
        entries.append(NSearchEntry(Nv, worst, ok, len(modes), checked, used))
    return NSearchReport(K=K, epsilon=epsilon, entries=entries)


# ---------------------------------------------------------------------------
# rank-correction terms on the annulus


@dataclass
class L3L4Report:
    """Empirical constants for the two finite-rank linearization terms.

    Each norm is measured against its analytic envelope: (N-K)^(-s0/2)
    for the clip-fluctuation term, (N-K)^(-1/2) + chi for the ball-cutoff
    term.  Constants are maxima over the probe directions."""

    N: float
    K: float
    l3_norm: float
    l4_norm: float
    envelope_l3: float
    envelope_l4: float
    C3: float
    C4: float
    chi: float
    n_probes: int


def bound_l3_l4(u: SpectralField, params: ModelParams,
                v: SpectralField | None = None,
                rng: np.random.Generator | None = None,
                n_probes: int = 8) -> L3L4Report:
    from .spectral import random_field, project, sobolev_norm

    ctx = FPrimeContext(u, params)
    grid = u.grid
    chi = float(np.sqrt(_h1_low_sq(u, params)) >= 4.0 * params.Rtilde)
    if v is not None:
        probes = [v]
    else:
        if rng is None:
            rng = np.random.default_rng(0)
        probes = [random_field(grid, rng, amplitude=1.0)
                  for _ in range(n_probes)]
    env3 = (params.N - params.K) ** (-params.s0 / 2.0)
    env4 = (params.N - params.K) ** (-0.5) + chi
    c3 = l3m = c4 = l4m = 0.0
    for w in probes:
        nv = sobolev_norm(w, 0.0)
        if nv == 0.0:
            continue
        l3v = project(ctx.l3(w), "mid", params.N, params.K)
        l4v = project(ctx.l4(w), "mid", params.N, params.K)
        a3 = sobolev_norm(l3v, 0.0)
        a4 = sobolev_norm(l4v, 0.0)
        l3m = max(l3m, a3)
        l4m = max(l4m, a4)
        c3 = max(c3, a3 / (env3 * nv))
        c4 = max(c4, a4 / (env4 * nv))
    return L3L4Report(N=params.N, K=params.K, l3_norm=l3m, l4_norm=l4m,
                      envelope_l3=env3, envelope_l4=env4, C3=c3, C4=c4,
                      chi=chi, n_probes=len(probes))


def _h1_low_sq(u: SpectralField, params: ModelParams) -> float:
    mask = projector_mask(u.grid, "low", params.N)
    return float(TWO_PI_CUBED
                 * np.sum(u.grid.a_eig[mask] * np.abs(u.coeffs[mask]) ** 2))
