"""Run configuration: INI-style files driving one experiment per process.

Layout:

    [model]       physical/cutoff parameters + grid_radius
    [integrator]  dt, horizon, scheme, dealias, save_every
    [experiment]  name, seed, out (optional)
    [<name>]      free-form per-experiment options, all optional

Unknown keys in [model]/[integrator]/[experiment] are rejected so typos
surface immediately; per-experiment sections are left open on purpose.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields, replace

from .dynamics import IntegratorConfig
from .errors import ConfigError
from .truncation import ModelParams

EXPERIMENTS = ("simulate", "cone-check", "n-search", "build-manifold",
               "track", "probe-smoothness", "calibrate-radii")

_MODEL_FLOAT_KEYS = ("omega", "beta", "gamma", "s", "s0", "C_star",
                     "R0", "R1", "Rtilde", "f_support_radius")
_MODEL_INT_KEYS = ("N", "K")


@dataclass
class RunConfig:
    grid_radius: int
    params: ModelParams
    integrator: IntegratorConfig
    experiment: str
    seed: int
    out_dir: str | None = None
    options: dict = field(default_factory=dict)

    def with_overrides(self, out_dir=None, seed=None) -> "RunConfig":
        cfg = self
        if out_dir is not None:
            cfg = replace(cfg, out_dir=str(out_dir))
        if seed is not None:
            cfg = replace(cfg, seed=int(seed))
        return cfg

    def opt_str(self, key: str, default: str) -> str:
        return str(self.options.get(key, default))

    def opt_float(self, key: str, default: float) -> float:
        try:
            return float(self.options.get(key, default))
        except (TypeError, ValueError):
            raise ConfigError(
                f"[{self.experiment}] {key}: expected a number, got "
                f"{self.options[key]!r}") from None

    def opt_int(self, key: str, default: int) -> int:
        v = self.opt_float(key, default)
        if v != int(v):
            raise ConfigError(f"[{self.experiment}] {key}: expected an "
                              f"integer, got {v}")
        return int(v)

    def opt_bool(self, key: str, default: bool) -> bool:
        v = str(self.options.get(key, default)).strip().lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"[{self.experiment}] {key}: expected a boolean, "
                          f"got {self.options[key]!r}")


def _get(section, key, conv, where):
    raw = section.get(key)
    if raw is None:
        return None
    try:
        return conv(raw)
    except ValueError:
        raise ConfigError(f"[{where}] {key}: cannot parse {raw!r}") from None


def _parse_int(raw: str) -> int:
    v = float(raw)
    if v != int(v):
        raise ValueError(raw)
    return int(v)


def _parse_bool(raw: str) -> bool:
    v = raw.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(raw)


def _check_keys(section, allowed, where):
    extra = sorted(set(section) - set(allowed))
    if extra:
        raise ConfigError(f"[{where}] unknown key(s): {', '.join(extra)}")


def loads_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str        # keys are case-sensitive (N vs n)
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"config parse failure: {e}") from None

    for sec in ("model", "experiment"):
        if not cp.has_section(sec):
            raise ConfigError(f"missing required section [{sec}]")

    ms = cp["model"]
    _check_keys(ms, _MODEL_FLOAT_KEYS + _MODEL_INT_KEYS + ("grid_radius",),
                "model")
    grid_radius = _get(ms, "grid_radius", _parse_int, "model")
    if grid_radius is None:
        raise ConfigError("[model] grid_radius is required")
    if grid_radius < 1:
        raise ConfigError("[model] grid_radius must be >= 1")
    kw = {}
    for k in _MODEL_FLOAT_KEYS:
        v = _get(ms, k, float, "model")
        if v is not None:
            kw[k] = v
    for k in _MODEL_INT_KEYS:
        v = _get(ms, k, _parse_int, "model")
        if v is not None:
            kw[k] = v
    try:
        params = ModelParams(**kw)
    except ValueError as e:
        raise ConfigError(f"[model] invariant violated: {e}") from None

    it = cp["integrator"] if cp.has_section("integrator") else {}
    if it:
        _check_keys(it, ("dt", "horizon", "scheme", "dealias", "save_every"),
                    "integrator")
    dt = _get(it, "dt", float, "integrator")
    horizon = _get(it, "horizon", float, "integrator")
    ikw = {"dt": 0.01 if dt is None else dt,
           "horizon": 1.0 if horizon is None else horizon}
    v = _get(it, "scheme", str, "integrator")
    if v is not None:
        ikw["scheme"] = v
    v = _get(it, "dealias", _parse_bool, "integrator")
    if v is not None:
        ikw["dealias"] = v
    v = _get(it, "save_every", _parse_int, "integrator")
    if v is not None:
        ikw["save_every"] = v
    try:
        integrator = IntegratorConfig(**ikw)
    except ValueError as e:
        raise ConfigError(f"[integrator] invariant violated: {e}") from None

    es = cp["experiment"]
    _check_keys(es, ("name", "seed", "out"), "experiment")
    name = es.get("name")
    if name not in EXPERIMENTS:
        raise ConfigError(f"[experiment] name must be one of "
                          f"{', '.join(EXPERIMENTS)}; got {name!r}")
    seed = _get(es, "seed", _parse_int, "experiment")
    if seed is None:
        seed = 0
    if seed < 0:
        raise ConfigError("[experiment] seed must be >= 0")
    out_dir = es.get("out")

    options = {}
    if cp.has_section(name):
        options = dict(cp[name])

    return RunConfig(grid_radius=grid_radius, params=params,
                     integrator=integrator, experiment=name, seed=seed,
                     out_dir=out_dir, options=options)


def load_config(path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    return loads_config(text)


def dumps_config(cfg: RunConfig) -> str:
    """Resolved-config echo: every value explicit, keys in fixed order."""
    out = io.StringIO()
    out.write("[model]\n")
    out.write(f"grid_radius = {cfg.grid_radius}\n")
    for f in fields(ModelParams):
        out.write(f"{f.name} = {getattr(cfg.params, f.name)!r}\n")
    out.write("\n[integrator]\n")
    ic = cfg.integrator
    out.write(f"dt = {ic.dt!r}\nhorizon = {ic.horizon!r}\n"
              f"scheme = {ic.scheme}\ndealias = {ic.dealias}\n"
              f"save_every = {ic.save_every}\n")
    out.write("\n[experiment]\n")
    out.write(f"name = {cfg.experiment}\nseed = {cfg.seed}\n")
    if cfg.out_dir is not None:
        out.write(f"out = {cfg.out_dir}\n")
    if cfg.options:
        out.write(f"\n[{cfg.experiment}]\n")
        for k in sorted(cfg.options):
            out.write(f"{k} = {cfg.options[k]}\n")
    return out.getvalue()


def save_config(cfg: RunConfig, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_config(cfg))
