"""Graph construction by backward shooting and its diagnostic probes.

The manifold value at a low-mode point p is obtained from the boundary
value problem on [-T, 0]: find x in P_N H with

  P_N S(T)(x + 0) = p,        M_T(p) := Q_N S(T)(x + 0),

where the initial high modes are pinned to zero and S is the forward
flow.  M_T converges geometrically in T, so a ladder T, 2T, 3T, ... with
Cauchy-gap control evaluates the graph map to tolerance.

Shooting amplifies low-mode errors by exp(a T); the fixed-point solver
preconditions residuals with the clipped backward propagator, and the
Newton solver uses the same multiplier as a right preconditioner for its
inner iterative solves.  The amplification makes x ill-determined in its
fast components, but M_T(p) is insensitive to exactly those components,
which is why value-level tolerances remain achievable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .errors import BVPSolveError, GraphConvergenceError
from .spectral import (SpectralField, SpectralGrid, TWO_PI_CUBED, project,
                       projector_mask, sobolev_norm)
from .dynamics import IntegratorConfig, Stepper, Trajectory, integrate, \
    monitor_dissipativity

AMP_CAP_EXPONENT = 34.0     # |exp(a T)| clipped at e^34 ~ 5.8e14


# ---------------------------------------------------------------------------
# low-band packing


class _LowBand:
    def __init__(self, grid: SpectralGrid, N: float):
        self.grid = grid
        self.mask = projector_mask(grid, "low", N)
        self.idx = np.flatnonzero(self.mask.ravel())
        self.dim = len(self.idx)

    def pack(self, u: SpectralField) -> np.ndarray:
        return u.coeffs.ravel()[self.idx]

    def unpack(self, x: np.ndarray) -> SpectralField:
        cube = np.zeros(self.grid.shape, dtype=np.complex128).ravel()
        cube[self.idx] = x
        return self.grid.field(cube.reshape(self.grid.shape), copy=False)

    def backward_amp(self, omega: float, T: float,
                     shift: complex = 0.0 + 0.0j) -> np.ndarray:
        """exp(((1+i omega) a - shift) T) on the band, magnitude-clipped.

        shift is the constant part of the reaction derivative at zero, so
        this undoes the full linearized-at-zero flow, not just the leading
        differential part.
        """
        a = self.grid.a_eig.ravel()[self.idx]
        mag = np.exp(np.minimum((a - shift.real) * T, AMP_CAP_EXPONENT))
        phase = np.exp(1j * ((omega * a) - shift.imag) * T)
        return mag * phase


# ---------------------------------------------------------------------------
# tangent propagation with cached derivative contexts


class _TangentPropagator:
    """Derivative of the discrete flow along one stored trajectory.

    Contexts are precomputed per step (base state and etd2 stage) so that
    repeated Jacobian actions inside an iterative solve cost only the
    per-direction work.  Above cache_max steps they are rebuilt per apply.
    """

    def __init__(self, traj: Trajectory, model, cache_max: int = 512):
        if traj.config.save_every != 1:
            raise ValueError("tangent propagation needs every step saved")
        self.traj = traj
        self.model = model
        self.stepper = Stepper(traj.grid, model.params.omega,
                               traj.config.dt, traj.config.scheme)
        self.n_steps = traj.n_samples - 1
        self._cache = None
        if self.n_steps <= cache_max:
            self._cache = [self._contexts(i) for i in range(self.n_steps)]

    def _contexts(self, i: int):
        u = self.traj.state(i)
        ctx = self.model.F_context(u)
        ctx_stage = None
        if self.traj.config.scheme == "etd2":
            ctx_stage = self.model.F_context(
                self.stepper.stage_state(u, self.model))
        return ctx, ctx_stage

    def apply(self, v0: SpectralField) -> SpectralField:
        v = v0
        for i in range(self.n_steps):
            ctx, ctx_stage = (self._cache[i] if self._cache is not None
                              else self._contexts(i))
            v = self.stepper.tangent_step(v, ctx, ctx_stage)
        return v


# ---------------------------------------------------------------------------
# shooting solver


@dataclass
class BVPSolution:
    """Converged backward boundary value problem at one ladder time."""

    x: SpectralField              # low modes of the state at -T
    trajectory: Trajectory        # forward run on [-T, 0], every step saved
    target: SpectralField
    T: float
    residual: float
    tolerance: float
    iterations: int
    method: str
    converged: bool
    history: list

    @property
    def final_state(self) -> SpectralField:
        return self.trajectory.last


def _shoot(band: _LowBand, x: np.ndarray, model, T: float, dt: float,
           scheme: str) -> Trajectory:
    cfg = IntegratorConfig(dt=dt, horizon=T, scheme=scheme, save_every=1)
    return integrate(band.unpack(x), model, cfg, t0=-T)


def solve_bvp(target: SpectralField, model, T: float, dt: float,
              x0: SpectralField | None = None, method: str = "auto",
              tol: float = 1e-9, max_fp: int = 160, max_newton: int = 12,
              scheme: str = "etd2",
              qim_bound: float | None = None) -> BVPSolution:
    """Find low initial data at -T whose forward low image at 0 is target.

    method: "fixed_point" iterates x <- x + exp((1+i omega)AT)(p - P u(0));
    "newton" runs inexact Newton with Jacobian actions by tangent
    propagation, GMRES inner solves (right-preconditioned by the same
    backward multiplier) and a damped line search; "auto" tries the
    fixed-point route first and falls back to Newton.
    """
    if method not in ("auto", "fixed_point", "newton"):
        raise ValueError(f"unknown method {method!r}")
    p = model.params
    grid = target.grid
    band = _LowBand(grid, p.N)
    pt = band.pack(project(target, "low", p.N))
    tol_abs = tol * max(1.0, float(np.linalg.norm(pt)) * np.sqrt(TWO_PI_CUBED))
    lam0 = complex(model.coefficients(grid.zero_field())[0])

    def run_at(T_c, x_c, tol_c, qim_c):
        if method in ("auto", "fixed_point"):
            try:
                return _solve_fp(band, pt, x_c, model, T_c, dt, scheme,
                                 tol_c, max_fp, qim_c, tol, lam0)
            except BVPSolveError:
                if method == "fixed_point":
                    raise
        return _solve_newton(band, pt, x_c, model, T_c, dt, scheme, tol_c,
                             max_newton, qim_c, tol, lam0)

    x = band.pack(x0) if x0 is not None else pt.copy()
    try:
        return run_at(T, x, tol_abs, qim_bound)
    except BVPSolveError:
        pass
    if x0 is not None:
        # a bad warm start must not doom the solve; retry cold
        try:
            return run_at(T, pt.copy(), tol_abs, qim_bound)
        except BVPSolveError:
            pass
    # cold start outside the basin: continue in T with warm extensions
    m = int(round(T / dt))
    if m < 2:
        raise BVPSolveError(
            f"shooting failed at T = {T:.6g} and continuation has no room")
    cuts = sorted({int(round(m * j / min(8, m) )) for j in
                   range(1, min(8, m) + 1)} - {0})
    xs, prev, sol = None, 0, None
    for j, c in enumerate(cuts):
        if xs is None:
            xw = pt.copy()
        else:
            xw = band.backward_amp(p.omega, (c - prev) * dt, lam0) * xs
        last = j == len(cuts) - 1
        sol = run_at(c * dt, xw, tol_abs if last else max(tol_abs, 1e-7),
                     qim_bound if last else None)
        xs, prev = band.pack(sol.x), c
    return sol


def _hnorm(v: np.ndarray) -> float:
    return float(np.sqrt(TWO_PI_CUBED) * np.linalg.norm(v))


def _finish(band, x, traj, pt, T, rn, tol_abs, its, method, hist, model,
            qim_bound, tol) -> BVPSolution:
    if qim_bound is not None:
        rep = monitor_dissipativity(traj, bound_limit=qim_bound)
        if not rep.within_bound:
            raise BVPSolveError(
                f"accepted trajectory violates the dissipativity bound: "
                f"{rep.sup_value:.3g} > {qim_bound:.3g}")
    return BVPSolution(x=band.unpack(x), trajectory=traj,
                       target=band.unpack(pt), T=T, residual=rn,
                       tolerance=tol_abs, iterations=its, method=method,
                       converged=True, history=hist)


def _solve_fp(band, pt, x, model, T, dt, scheme, tol_abs, max_fp, qim_bound,
              tol, lam0=0j) -> BVPSolution:
    amp = band.backward_amp(model.params.omega, T, lam0)
    hist = []
    traj = _shoot(band, x, model, T, dt, scheme)
    r = pt - band.pack(traj.last)
    rn = _hnorm(r)
    hist.append(rn)
    for it in range(1, max_fp + 1):
        if rn <= tol_abs:
            return _finish(band, x, traj, pt, T, rn, tol_abs, it - 1,
                           "fixed_point", hist, model, qim_bound, tol)
        corr = amp * r
        accepted = False
        for beta in (1.0, 0.5, 0.25, 0.125):
            x_new = x + beta * corr
            traj_new = _shoot(band, x_new, model, T, dt, scheme)
            r_new = pt - band.pack(traj_new.last)
            rn_new = _hnorm(r_new)
            if rn_new < rn or rn_new <= tol_abs:
                x, traj, r, rn = x_new, traj_new, r_new, rn_new
                hist.append(rn)
                accepted = True
                break
        if not accepted:
            break
        # plateau: a converging iteration improves every step, so a dozen
        # near-flat accepted steps mean the contraction has been lost
        if len(hist) > 12 and hist[-1] > 0.999 * hist[-13]:
            break
    if rn <= tol_abs:
        return _finish(band, x, traj, pt, T, rn, tol_abs, max_fp,
                       "fixed_point", hist, model, qim_bound, tol)
    raise BVPSolveError(
        f"fixed-point shooting stalled after {len(hist) - 1} accepted "
        f"steps; best residual {rn:.3g} (tolerance {tol_abs:.3g})")


def _solve_newton(band, pt, x, model, T, dt, scheme, tol_abs, max_newton,
                  qim_bound, tol, lam0=0j) -> BVPSolution:
    amp = band.backward_amp(model.params.omega, T, lam0)
    d = band.dim
    hist = []
    traj = _shoot(band, x, model, T, dt, scheme)
    r = band.pack(traj.last) - pt       # G(x)
    rn = _hnorm(r)
    hist.append(rn)
    rn0 = rn
    for it in range(1, max_newton + 1):
        if rn <= tol_abs:
            return _finish(band, x, traj, pt, T, rn, tol_abs, it - 1,
                           "newton", hist, model, qim_bound, tol)
        prop = _TangentPropagator(traj, model)

        def matvec(y_real):
            y = y_real[:d] + 1j * y_real[d:]
            v = prop.apply(band.unpack(amp * y))
            out = band.pack(v)
            return np.concatenate([out.real, out.imag])

        A = LinearOperator((2 * d, 2 * d), matvec=matvec, dtype=np.float64)
        b = np.concatenate([(-r).real, (-r).imag])
        eta = min(0.1, 0.5 * rn / rn0) if rn0 > 0 else 0.1
        y_real, _ = gmres(A, b, rtol=max(eta, 1e-10), atol=0.0,
                          restart=min(40, 2 * d), maxiter=3)
        delta = amp * (y_real[:d] + 1j * y_real[d:])
        accepted = False
        for beta in (1.0, 0.5, 0.25, 0.125, 0.0625):
            x_new = x + beta * delta
            traj_new = _shoot(band, x_new, model, T, dt, scheme)
            r_new = band.pack(traj_new.last) - pt
            rn_new = _hnorm(r_new)
            if rn_new < rn * (1.0 - 1e-4 * beta) or rn_new <= tol_abs:
                x, traj, r, rn = x_new, traj_new, r_new, rn_new
                hist.append(rn)
                accepted = True
                break
        if not accepted:
            break
    if rn <= tol_abs:
        return _finish(band, x, traj, pt, T, rn, tol_abs, max_newton,
                       "newton", hist, model, qim_bound, tol)
    raise BVPSolveError(
        f"Newton shooting did not converge: best residual {rn:.3g} "
        f"(tolerance {tol_abs:.3g}) after {len(hist) - 1} accepted steps")


# ---------------------------------------------------------------------------
# graph evaluation by the T-ladder


@dataclass
class GraphPoint:
    """Converged graph value with its ladder history."""

    u_plus: SpectralField
    m_value: SpectralField        # Q_N part; P_N m_value = 0 by construction
    full_state: SpectralField
    T_used: float
    shooting_residual: float
    cauchy_gap: float
    gaps: list
    rungs: list
    fit_rate: float | None
    bvp: BVPSolution

    @property
    def trajectory(self) -> Trajectory:
        return self.bvp.trajectory


def _ladder_T0(params, dt: float, T0: float | None) -> float:
    if T0 is None:
        T0 = 5.0 / (params.N - params.K + 1.0)
    m = max(1, int(np.ceil(T0 / dt - 1e-9)))
    return m * dt


def manifold_value(u_plus0: SpectralField, model, dt: float,
                   tol: float = 1e-8, T0: float | None = None,
                   max_rungs: int = 10, min_T: float = 0.0,
                   method: str = "auto", solver_tol: float | None = None,
                   scheme: str = "etd2",
                   qim_bound: float | None = None) -> GraphPoint:
    """Evaluate the graph map at u_plus0 via the T-ladder.

    Rungs are T_k = k*T0 (k >= 1), starting at the first rung >= min_T;
    the ladder stops once the value gap between consecutive rungs drops
    to tol.  Gaps must decrease while above tol, otherwise the point is
    rejected.
    """
    p = model.params
    T0 = _ladder_T0(p, dt, T0)
    k_start = max(1, int(np.ceil((min_T - 1e-12) / T0)))
    if solver_tol is None:
        solver_tol = min(1e-9, 0.01 * tol)
    target = project(u_plus0, "low", p.N)
    band = _LowBand(target.grid, p.N)
    lam0 = complex(model.coefficients(target.grid.zero_field())[0])

    sols, values, rungs, gaps = [], [], [], []
    x_guess = None
    rung_method = method
    for k in range(k_start, k_start + max_rungs):
        T = k * T0
        sol = solve_bvp(target, model, T, dt, x0=x_guess, method=rung_method,
                        tol=solver_tol, scheme=scheme, qim_bound=qim_bound)
        if rung_method == "auto" and sol.method == "newton":
            # the fixed-point contraction only degrades as T grows; once a
            # rung needed Newton, stop paying for doomed fixed-point runs
            rung_method = "newton"
        sols.append(sol)
        rungs.append(T)
        values.append(project(sol.final_state, "high", p.N))
        # warm start for the next rung: extend backward by T0
        amp = band.backward_amp(p.omega, T0, lam0)
        x_guess = band.unpack(amp * band.pack(sol.x))
        if len(values) >= 2:
            gap = sobolev_norm(values[-1] + values[-2] * (-1.0), 0.0)
            gaps.append(gap)
            if gap <= tol:
                return _graph_point(target, sols, values, rungs, gaps)
            if len(gaps) >= 2 and gap > gaps[-2] and gaps[-2] > tol:
                raise GraphConvergenceError(
                    f"no graph convergence - check (N, K) admissibility: "
                    f"ladder gaps {gaps[-2]:.3g} -> {gap:.3g} at T = {T:g}")
    raise GraphConvergenceError(
        f"ladder exhausted after {max_rungs} rungs; last gap "
        f"{gaps[-1]:.3g} > tol {tol:.3g}" if gaps else
        "ladder exhausted before two rungs completed")


def _graph_point(target, sols, values, rungs, gaps) -> GraphPoint:
    rate = None
    pos = [(t, g) for t, g in zip(rungs[1:], gaps) if g > 0.0]
    if len(pos) >= 2:
        t = np.array([q[0] for q in pos])
        y = np.log([q[1] for q in pos])
        sol, *_ = np.linalg.lstsq(np.stack([np.ones_like(t), t], 1), y,
                                  rcond=None)
        rate = float(-sol[1])
    last = sols[-1]
    return GraphPoint(u_plus=target, m_value=values[-1],
                      full_state=last.final_state, T_used=last.T,
                      shooting_residual=last.residual, cauchy_gap=gaps[-1],
                      gaps=gaps, rungs=rungs, fit_rate=rate, bvp=last)


# ---------------------------------------------------------------------------
# probes


@dataclass
class LipschitzReport:
    max_ratio: float
    ratios: list
    n_pairs: int
    n_excluded: int
    cone_bound: float | None


def lipschitz_probe(points, model=None, dt: float | None = None,
                    tol: float = 1e-8, **value_kwargs) -> LipschitzReport:
    """Max slope of the graph map over all distinct pairs of the samples.

    points: GraphPoint instances, or low-mode fields (then model and dt
    are required and values are computed here).  The cone-derived slope
    bound 1 + transform distortion is reported alongside when the full
    states are available.
    """
    gps = []
    for q in points:
        if isinstance(q, GraphPoint):
            gps.append(q)
        else:
            gps.append(manifold_value(q, model, dt, tol=tol, **value_kwargs))
    ratios = []
    excluded = 0
    for i in range(len(gps)):
        for j in range(i + 1, len(gps)):
            dp = sobolev_norm(gps[i].u_plus + gps[j].u_plus * (-1.0), 0.0)
            if dp == 0.0:
                excluded += 1
                continue
            dm = sobolev_norm(gps[i].m_value + gps[j].m_value * (-1.0), 0.0)
            ratios.append(dm / dp)
    bound = None
    if model is not None and len(gps) >= 2:
        bound = 1.0 + _max_pair_distortion(gps, model)
    return LipschitzReport(max_ratio=float(max(ratios)) if ratios else 0.0,
                           ratios=ratios, n_pairs=len(ratios),
                           n_excluded=excluded, cone_bound=bound)


def _max_pair_distortion(gps, model) -> float:
    from .cones import transform_to_z
    p = model.params
    worst = 0.0
    for i in range(len(gps)):
        for j in range(i + 1, len(gps)):
            v = gps[i].full_state + gps[j].full_state * (-1.0)
            nv = sobolev_norm(v, 0.0)
            if nv == 0.0:
                continue
            z = transform_to_z((gps[i].full_state, gps[j].full_state), v, p)
            worst = max(worst, sobolev_norm(z + v * (-1.0), 0.0) / nv)
    return worst


@dataclass
class TrackingReport:
    """Decay of the distance to a shadowing trace on the graph."""

    times: np.ndarray
    distances: np.ndarray
    rate: float | None
    fit_residual: float | None
    max_distance: float
    final_distance: float
    graph_point: GraphPoint
    trace_sensitivity: float | None


def tracking_experiment(u0: SpectralField, model, horizon: float, dt: float,
                        graph_tol: float = 1e-8, method: str = "auto",
                        sensitivity: bool = False,
                        fit_floor: float | None = None) -> TrackingReport:
    """Integrate u0 and compare against the graph trace pinned at the end.

    The trace is the tail of the converged backward trajectory whose low
    modes at the end time match those of u(horizon); its ladder time is
    forced to at least the horizon so the whole window is covered.
    """
    p = model.params
    cfg = IntegratorConfig(dt=dt, horizon=horizon, save_every=1)
    base = integrate(u0, model, cfg)
    target = project(base.last, "low", p.N)
    gp = manifold_value(target, model, dt, tol=graph_tol, min_T=horizon,
                        method=method)
    d = _trace_distances(base, gp, horizon, dt)
    times = base.times

    if fit_floor is None:
        fit_floor = max(10.0 * graph_tol, 1e-12)
    sel = np.flatnonzero(d > fit_floor)
    rate = resid = None
    if len(sel) >= 5:
        t = times[sel]
        y = np.log(d[sel])
        sol, *_ = np.linalg.lstsq(np.stack([np.ones_like(t), t], 1), y,
                                  rcond=None)
        rate = float(-sol[1])
        span = float(t[-1] - t[0])
        fitres = np.stack([np.ones_like(t), t], 1) @ sol - y
        resid = float(np.sqrt(np.mean(fitres ** 2))
                      / max(abs(sol[1]) * span, 1e-300))

    sens = None
    if sensitivity:
        gp2 = manifold_value(target, model, dt, tol=graph_tol,
                             min_T=2.0 * gp.T_used, method=method)
        d2 = _trace_states(gp2, horizon, dt)
        d1 = _trace_states(gp, horizon, dt)
        sens = float(np.max(np.sqrt(TWO_PI_CUBED * np.sum(
            np.abs(d1 - d2) ** 2, axis=(-3, -2, -1)))))
    return TrackingReport(times=times, distances=d, rate=rate,
                          fit_residual=resid, max_distance=float(np.max(d)),
                          final_distance=float(d[-1]), graph_point=gp,
                          trace_sensitivity=sens)


def _trace_states(gp: GraphPoint, horizon: float, dt: float) -> np.ndarray:
    traj = gp.trajectory
    n_win = int(round(horizon / dt))
    off = traj.n_samples - 1 - n_win
    if off < 0:
        raise ValueError("trace shorter than the comparison window")
    return traj.coeffs[off:]


def _trace_distances(base: Trajectory, gp: GraphPoint, horizon: float,
                     dt: float) -> np.ndarray:
    shadow = _trace_states(gp, horizon, dt)
    diff = base.coeffs - shadow
    return np.sqrt(TWO_PI_CUBED * np.sum(np.abs(diff) ** 2,
                                         axis=(-3, -2, -1)))


@dataclass
class SmoothnessReport:
    """Log-log slope of the linearization defect of the graph map.

    For each direction the defect D(h) = ||M(p+hw) - M(p) - h*s_w||_H is
    measured against a secant slope s_w taken at the smallest ladder step;
    the fitted exponent estimates 1 + (Holder index).  below_resolution
    marks directions whose defect never rises above the numeric floor
    (affine maps), where no exponent is measurable.
    """

    exponents: list
    fit_residuals: list
    h_values: np.ndarray
    defects: np.ndarray            # (n_directions, n_ladder)
    below_resolution: list
    floor: float


def smoothness_probe(u_plus0: SpectralField, directions, model=None,
                     dt: float | None = None, tol: float = 1e-8,
                     value_fn=None, h_ref: float = 1e-3,
                     n_ladder: int = 5, ladder_factor: float = 2.0,
                     **value_kwargs) -> SmoothnessReport:
    """Probe graph smoothness along directions with an h-ladder.

    value_fn(q) -> high-mode field overrides the graph evaluation (used
    to validate the probe itself on synthetic maps).  The ladder starts
    at 8*h_ref so the secant-slope error stays subdominant.
    """
    if value_fn is None:
        def value_fn(q):
            return manifold_value(q, model, dt, tol=tol,
                                  **value_kwargs).m_value
    M0 = value_fn(u_plus0)
    floor = 1e-11 * (1.0 + sobolev_norm(M0, 0.0))
    hs = 8.0 * h_ref * ladder_factor ** np.arange(n_ladder)
    exps, resids, flags, rows = [], [], [], []
    for w in directions:
        wn = sobolev_norm(w, 0.0)
        wu = w * (1.0 / wn) if wn else w
        plus = value_fn(u_plus0 + wu * h_ref)
        minus = value_fn(u_plus0 + wu * (-h_ref))
        secant = (plus + minus * (-1.0)) * (0.5 / h_ref)
        ds = []
        for h in hs:
            Mh = value_fn(u_plus0 + wu * float(h))
            defect = Mh + M0 * (-1.0) + secant * (-float(h))
            ds.append(sobolev_norm(defect, 0.0))
        ds = np.array(ds)
        rows.append(ds)
        if np.all(ds <= floor):
            exps.append(None)
            resids.append(None)
            flags.append(True)
            continue
        keep = ds > 0.0
        ly = np.log(ds[keep])
        lx = np.log(hs[keep])
        sol, *_ = np.linalg.lstsq(np.stack([np.ones_like(lx), lx], 1), ly,
                                  rcond=None)
        fit = np.stack([np.ones_like(lx), lx], 1) @ sol - ly
        exps.append(float(sol[1]))
        resids.append(float(np.sqrt(np.mean(fit ** 2))))
        flags.append(False)
    return SmoothnessReport(exponents=exps, fit_residuals=resids,
                            h_values=hs, defects=np.array(rows),
                            below_resolution=flags, floor=floor)
