"""Experiment drivers behind the command line.

One experiment per process invocation.  Every run directory is
self-describing: it holds the resolved config, the code version, and the
result tables.  Outputs are deterministic for a fixed (config, seed): no
timestamps, floats via repr (shortest roundtrip), json keys sorted.
"""

from __future__ import annotations

import csv
import json
import os

import numpy as np

from . import checkpoint, cones, manifold
from .config import RunConfig, save_config
from .dynamics import IntegratorConfig, integrate
from .errors import ConfigError
from .models import LinearModel, ModifiedGLModel, ZeroModel
from .spectral import project, random_field, sobolev_norm
from .truncation import to_grid

__version__ = "0.1.0"


# ---------------------------------------------------------------------------
# artifact writers


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return float(x)
    return x


def write_ndjson(path, records) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(_jsonable(rec), sort_keys=True))
            fh.write("\n")


# ---------------------------------------------------------------------------
# shared setup


def make_model(cfg: RunConfig):
    kind = cfg.opt_str("model", "gl")
    if kind in ("gl", "modified_gl"):
        return ModifiedGLModel(cfg.params, dealias=cfg.integrator.dealias)
    if kind == "zero":
        return ZeroModel(cfg.params)
    if kind == "linear":
        lam = complex(cfg.opt_float("lam_re", 0.0),
                      cfg.opt_float("lam_im", 0.0))
        return LinearModel(cfg.params, lam)
    raise ConfigError(f"[{cfg.experiment}] model: unknown kind {kind!r}")


def _grid(cfg: RunConfig):
    from .spectral import SpectralGrid
    return SpectralGrid(cfg.grid_radius)


def _seeds(cfg: RunConfig, n: int):
    return [np.random.default_rng(s)
            for s in np.random.SeedSequence(cfg.seed).spawn(n)]


def _sample_states(cfg: RunConfig, model, n: int, amplitude: float,
                   relax: float):
    """n random fields, optionally relaxed toward the attractor first."""
    grid = _grid(cfg)
    states = []
    for rng in _seeds(cfg, n):
        u = random_field(grid, rng, amplitude=amplitude)
        if relax > 0.0:
            dt = cfg.integrator.dt
            hor = max(1, int(round(relax / dt))) * dt
            icfg = IntegratorConfig(dt=dt, horizon=hor,
                                    scheme=cfg.integrator.scheme,
                                    dealias=cfg.integrator.dealias,
                                    save_every=max(1, int(round(hor / dt))))
            u = integrate(u, model, icfg).last
        states.append(u)
    return states


# ---------------------------------------------------------------------------
# experiments


def _run_simulate(cfg: RunConfig, out: str) -> None:
    model = make_model(cfg)
    initial = cfg.opt_str("initial", "")
    if initial:
        u0 = checkpoint.load_field(initial)
    else:
        (rng,) = _seeds(cfg, 1)
        u0 = random_field(_grid(cfg), rng,
                          amplitude=cfg.opt_float("amplitude", 0.1),
                          decay=cfg.opt_float("decay", 2.0))
    checkpoint.save_field(os.path.join(out, "initial.imcg"), u0, cfg.params)
    traj = integrate(u0, model, cfg.integrator)
    p = cfg.params
    rows = []
    for i in range(traj.n_samples):
        u = traj.state(i)
        rows.append([traj.times[i], sobolev_norm(u, 0.0),
                     sobolev_norm(u, 1.0), sobolev_norm(u, p.s0),
                     sobolev_norm(project(u, "low", p.N), 1.0),
                     sobolev_norm(project(u, "high", p.N), 0.0)])
    write_csv(os.path.join(out, "energy.csv"),
              ["t", "norm_h", "norm_h1", "norm_hs0", "norm_low_h1",
               "norm_high_h"], rows)
    checkpoint.save_field(os.path.join(out, "final.imcg"), traj.last,
                          cfg.params)


def _run_cone_check(cfg: RunConfig, out: str) -> None:
    model = make_model(cfg)
    grid = _grid(cfg)
    n_pairs = cfg.opt_int("n_pairs", 4)
    amplitude = cfg.opt_float("amplitude", 0.05)
    separation = cfg.opt_float("separation", 1e-3)
    mode = cfg.opt_str("mode", "pair")
    if mode not in ("pair", "variation"):
        raise ConfigError(f"[cone-check] mode: {mode!r}")
    mu = cfg.opt_float("mu", cones.MU_DEFAULT)
    tol_factor = cfg.opt_float("tol_factor", 10.0)
    records, rows = [], []
    for i, rng in enumerate(_seeds(cfg, n_pairs)):
        u1 = random_field(grid, rng, amplitude=amplitude)
        d = random_field(grid, rng, amplitude=separation)
        t1 = integrate(u1, model, cfg.integrator)
        if mode == "pair":
            t2 = integrate(u1 + d, model, cfg.integrator)
            cert = cones.verify_cone_inequality(t1, other=t2, mu=mu,
                                                tol_factor=tol_factor)
        else:
            cert = cones.verify_cone_inequality(t1, v0=d, mu=mu,
                                                tol_factor=tol_factor)
        records.append({
            "pair": i, "kind": cert.kind, "verdict": cert.verdict,
            "max_residual_ratio": cert.max_residual_ratio, "tol": cert.tol,
            "alpha_min": cert.alpha_min, "alpha_max": cert.alpha_max,
            "contraction_max": cert.contraction_max,
            "started_inside": cert.started_inside,
            "exit_count": cert.exit_count,
            "exit_times": cert.exit_times,
            "V_first": float(cert.V[0]), "V_last": float(cert.V[-1])})
        rows.append([i, cert.kind, cert.verdict, cert.max_residual_ratio,
                     cert.tol, cert.exit_count, cert.alpha_min,
                     cert.alpha_max, cert.contraction_max])
    write_ndjson(os.path.join(out, "certificates.ndjson"), records)
    write_csv(os.path.join(out, "certificates.csv"),
              ["pair", "kind", "verdict", "max_residual_ratio", "tol",
               "exit_count", "alpha_min", "alpha_max", "contraction_max"],
              rows)


def _run_n_search(cfg: RunConfig, out: str) -> None:
    model = make_model(cfg)
    n_min = cfg.opt_int("n_min", 9)
    n_max = cfg.opt_int("n_max", 200)
    epsilon = cfg.opt_float("epsilon", cones.EPSILON_DEFAULT)
    method = cfg.opt_str("method", "auto")
    n_samples = cfg.opt_int("n_samples", 20)
    amplitude = cfg.opt_float("amplitude", 0.05)
    relax = cfg.opt_float("relax", 0.0)
    samples = _sample_states(cfg, model, n_samples, amplitude, relax)
    rep = cones.n_search(samples, cfg.params, (n_min, n_max),
                         epsilon=epsilon, method=method,
                         rng=np.random.default_rng(cfg.seed))
    rows = [[e.N, e.norm, e.admissible, e.annulus_dim, e.samples_checked,
             e.method] for e in rep.entries]
    write_csv(os.path.join(out, "nsearch.csv"),
              ["N", "norm", "admissible", "annulus_dim", "samples_checked",
               "method"], rows)
    write_ndjson(os.path.join(out, "nsearch_summary.ndjson"),
                 [{"K": rep.K, "epsilon": rep.epsilon,
                   "admissible_N": rep.admissible,
                   "n_samples": n_samples, "relax": relax}])


def _run_build_manifold(cfg: RunConfig, out: str) -> None:
    model = make_model(cfg)
    grid = _grid(cfg)
    p = cfg.params
    n_points = cfg.opt_int("n_points", 3)
    amplitude = cfg.opt_float("amplitude", 0.05)
    tol = cfg.opt_float("tol", 1e-6)
    method = cfg.opt_str("solver", "auto")
    t0_opt = cfg.opt_float("T0", 0.0)
    rows, table = [], []
    for i, rng in enumerate(_seeds(cfg, n_points)):
        plow = project(random_field(grid, rng, amplitude=amplitude),
                       "low", p.N)
        gp = manifold.manifold_value(plow, model, cfg.integrator.dt,
                                     tol=tol, T0=t0_opt or None,
                                     method=method,
                                     scheme=cfg.integrator.scheme)
        rows.append([i, gp.T_used, len(gp.rungs), gp.cauchy_gap,
                     -1.0 if gp.fit_rate is None else gp.fit_rate,
                     gp.shooting_residual, sobolev_norm(gp.m_value, 0.0)])
        checkpoint.save_field(os.path.join(out, f"point_{i}.imcg"),
                              gp.full_state, p)
        g = grid.radius
        uc, mc = gp.u_plus.coeffs, gp.m_value.coeffs
        for (k, l, m0), u_v, m_v in zip(
                np.ndindex(uc.shape), uc.ravel(), mc.ravel()):
            if u_v == 0.0 and m_v == 0.0:
                continue
            table.append([i, k - g, l - g, m0 - g, u_v.real, u_v.imag,
                          m_v.real, m_v.imag])
    write_csv(os.path.join(out, "graph_summary.csv"),
              ["point", "T_used", "n_rungs", "cauchy_gap", "fit_rate",
               "shooting_residual", "value_norm_h"], rows)
    write_csv(os.path.join(out, "graph_table.csv"),
              ["point", "k", "l", "m", "u_re", "u_im", "M_re", "M_im"],
              table)


def _run_track(cfg: RunConfig, out: str) -> None:
    model = make_model(cfg)
    grid = _grid(cfg)
    n_starts = cfg.opt_int("n_starts", 3)
    amplitude = cfg.opt_float("amplitude", 0.05)
    graph_tol = cfg.opt_float("graph_tol", 1e-8)
    sensitivity = cfg.opt_bool("sensitivity", False)
    rows, drows = [], []
    for i, rng in enumerate(_seeds(cfg, n_starts)):
        u0 = random_field(grid, rng, amplitude=amplitude)
        rep = manifold.tracking_experiment(
            u0, model, cfg.integrator.horizon, cfg.integrator.dt,
            graph_tol=graph_tol, sensitivity=sensitivity)
        rows.append([i,
                     -1.0 if rep.rate is None else rep.rate,
                     -1.0 if rep.fit_residual is None else rep.fit_residual,
                     rep.max_distance, rep.final_distance,
                     len(rep.times)])
        for t, dist in zip(rep.times, rep.distances):
            drows.append([i, t, dist])
    write_csv(os.path.join(out, "tracking.csv"),
              ["start", "rate", "fit_residual", "max_distance",
               "final_distance", "n_samples"], rows)
    write_csv(os.path.join(out, "distances.csv"),
              ["start", "t", "distance"], drows)


def _run_probe_smoothness(cfg: RunConfig, out: str) -> None:
    model = make_model(cfg)
    grid = _grid(cfg)
    p = cfg.params
    n_dirs = cfg.opt_int("n_directions", 3)
    amplitude = cfg.opt_float("amplitude", 0.05)
    tol = cfg.opt_float("tol", 1e-8)
    h_ref = cfg.opt_float("h_ref", 1e-3)
    n_ladder = cfg.opt_int("n_ladder", 5)
    rngs = _seeds(cfg, n_dirs + 1)
    plow = project(random_field(grid, rngs[0], amplitude=amplitude),
                   "low", p.N)
    dirs = [project(random_field(grid, r, amplitude=1.0), "low", p.N)
            for r in rngs[1:]]
    rep = manifold.smoothness_probe(plow, dirs, model, cfg.integrator.dt,
                                    tol=tol, h_ref=h_ref, n_ladder=n_ladder)
    rows = []
    for j in range(n_dirs):
        for h, d in zip(rep.h_values, rep.defects[j]):
            rows.append([j, h, d])
    write_csv(os.path.join(out, "defects.csv"),
              ["direction", "h", "defect"], rows)
    write_csv(os.path.join(out, "smoothness.csv"),
              ["direction", "exponent", "fit_residual", "below_resolution"],
              [[j, rep.exponents[j], rep.fit_residuals[j],
                rep.below_resolution[j]] for j in range(n_dirs)])


def _run_calibrate_radii(cfg: RunConfig, out: str) -> None:
    model = make_model(cfg)
    grid = _grid(cfg)
    p = cfg.params
    n_runs = cfg.opt_int("n_runs", 3)
    amplitude = cfg.opt_float("amplitude", 0.5)
    tail_fraction = cfg.opt_float("tail_fraction", 0.5)
    safety = cfg.opt_float("safety", 1.5)
    sup_h = sup_h1 = sup_hs0 = sup_point = sup_clip = 0.0
    for rng in _seeds(cfg, n_runs):
        u0 = random_field(grid, rng, amplitude=amplitude)
        traj = integrate(u0, model, cfg.integrator)
        i0 = int((1.0 - tail_fraction) * (traj.n_samples - 1))
        for i in range(i0, traj.n_samples):
            u = traj.state(i)
            sup_h = max(sup_h, sobolev_norm(u, 0.0))
            sup_h1 = max(sup_h1, sobolev_norm(u, 1.0))
            sup_hs0 = max(sup_hs0, sobolev_norm(u, p.s0))
            sup_point = max(sup_point, float(np.abs(to_grid(u)).max()))
            aw = grid.a_eig ** (0.5 * p.s) * np.abs(u.coeffs)
            sup_clip = max(sup_clip, float(aw.max()))
    rows = [["R0", sup_h, safety * sup_h],
            ["R1", sup_h1, safety * sup_h1],
            ["Rs", sup_hs0, safety * sup_hs0],
            ["Rtilde", sup_h1, safety ** 2 * max(sup_h1, 1e-30) * 4.0],
            ["f_support_radius", sup_point, 2.0 * safety * sup_point],
            ["C_star", sup_clip, safety * sup_clip]]
    write_csv(os.path.join(out, "radii.csv"),
              ["quantity", "measured", "suggested"], rows)


_DISPATCH = {
    "simulate": _run_simulate,
    "cone-check": _run_cone_check,
    "n-search": _run_n_search,
    "build-manifold": _run_build_manifold,
    "track": _run_track,
    "probe-smoothness": _run_probe_smoothness,
    "calibrate-radii": _run_calibrate_radii,
}


def run_experiment(cfg: RunConfig, out_dir=None) -> int:
    """Dispatch one experiment; returns a process exit status.

    Artifacts land in the resolved output directory, which always receives
    the resolved config (config.ini) and code version (version.txt); on
    failure an error.json record is written instead of result tables.
    """
    resolved = cfg.with_overrides(out_dir=out_dir)
    out = resolved.out_dir or os.path.join("runs", resolved.experiment)
    resolved = resolved.with_overrides(out_dir=out)
    os.makedirs(out, exist_ok=True)
    save_config(resolved, os.path.join(out, "config.ini"))
    with open(os.path.join(out, "version.txt"), "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write(f"imcgl {__version__}\n")
    try:
        _DISPATCH[resolved.experiment](resolved, out)
    except Exception as e:
        with open(os.path.join(out, "error.json"), "w", encoding="utf-8",
                  newline="\n") as fh:
            json.dump({"experiment": resolved.experiment,
                       "error": type(e).__name__, "message": str(e)},
                      fh, sort_keys=True)
            fh.write("\n")
        return 1
    return 0
