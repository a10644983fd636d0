"""Flat ``key = value`` experiment configuration.

Keys use dotted sections (``sim.dt``, ``pde.M``). ``#`` starts a comment.
Lists are comma separated. Unknown keys are errors.
"""
from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass, field

from .crn import CRNSyntaxError, ReactionNetwork, parse_network
from .particle import DT_BOUND, step_bound

EXPERIMENTS = (
    "mass_action_match",
    "chaos_scaling",
    "pde",
    "ldp_suite",
    "operator_suite",
    "dynkin",
)


class ConfigError(ValueError):
    """Invalid configuration; the CLI maps it to exit status 2."""


def _floats(v: str) -> tuple:
    return tuple(_float(s) for s in v.split(",") if s.strip())


def _float(v: str) -> float:
    v = v.strip()
    if v in ("ln2", "log2"):
        return math.log(2.0)
    return float(v)


def _ints(v: str) -> tuple:
    return tuple(int(s) for s in v.split(",") if s.strip())


def _bool(v: str) -> bool:
    s = v.strip().lower()
    if s in ("true", "yes", "1", "on"):
        return True
    if s in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _str(v: str) -> str:
    return v.strip()


# key -> (attribute, parser, default)
SCHEMA = {
    "experiment": ("experiment", _str, None),
    "seed": ("seed", int, 0),
    "output": ("output", _str, "out"),
    "threads": ("threads", int, 0),
    "network.inline": ("network_inline", _str, ""),
    "network.file": ("network_file", _str, ""),
    "sim.sigma": ("sigma", _floats, (0.05,)),
    "sim.N": ("N", _ints, (1024,)),
    "sim.runs": ("runs", int, 16),
    "sim.dt": ("dt", _float, 1e-3),
    "sim.t_final": ("t_final", _float, 1.0),
    "sim.record_times": ("record_times", _floats, ()),
    "sim.bins": ("bins", int, 32),
    "sim.dim": ("dim", int, 1),
    "sim.sampler": ("sampler", _str, "thinning"),
    "sim.allow_large_dt": ("allow_large_dt", _bool, False),
    "sim.snapshots": ("snapshots", _bool, False),
    "init.profile": ("profile", _str, "uniform"),
    "init.masses": ("masses", _floats, ()),
    "init.amplitude": ("amplitude", _float, 0.5),
    "init.file": ("init_file", _str, ""),
    "pde.M": ("M", int, 64),
    "pde.dt": ("pde_dt", _float, 0.0),
    "ldp.f": ("ldp_f", _str, "cos_product"),
    "ldp.grid": ("ldp_grid", int, 64),
    "ldp.n": ("ldp_n", _ints, (2, 8, 64, 256)),
    "ldp.trials": ("ldp_trials", int, 100000),
    "ldp.moment_n": ("moment_n", int, 64),
    "ldp.k_max": ("k_max", int, 6),
    "ldp.moment_trials": ("moment_trials", int, 20000),
    "ldp.mz_n": ("mz_n", int, 10),
    "ldp.mz_p": ("mz_p", _floats, (2.0, 3.0, 4.0, 6.0)),
    "ops.m": ("ops_m", int, 8),
    "ops.N": ("ops_N", _ints, (2, 3)),
    "ops.pairs": ("ops_pairs", int, 100),
    "ops.exch_m": ("exch_m", int, 4),
    "ops.exch_t": ("exch_t", _float, 0.5),
    "dynkin.N": ("dynkin_N", int, 64),
    "dynkin.t": ("dynkin_t", _float, 0.1),
    "dynkin.runs": ("dynkin_runs", int, 400),
}


@dataclass
class ExperimentConfig:
    experiment: str = ""
    seed: int = 0
    output: str = "out"
    threads: int = 0
    network_inline: str = ""
    network_file: str = ""
    sigma: tuple = (0.05,)
    N: tuple = (1024,)
    runs: int = 16
    dt: float = 1e-3
    t_final: float = 1.0
    record_times: tuple = ()
    bins: int = 32
    dim: int = 1
    sampler: str = "thinning"
    allow_large_dt: bool = False
    snapshots: bool = False
    profile: str = "uniform"
    masses: tuple = ()
    amplitude: float = 0.5
    init_file: str = ""
    M: int = 64
    pde_dt: float = 0.0
    ldp_f: str = "cos_product"
    ldp_grid: int = 64
    ldp_n: tuple = (2, 8, 64, 256)
    ldp_trials: int = 100000
    moment_n: int = 64
    k_max: int = 6
    moment_trials: int = 20000
    mz_n: int = 10
    mz_p: tuple = (2.0, 3.0, 4.0, 6.0)
    ops_m: int = 8
    ops_N: tuple = (2, 3)
    ops_pairs: int = 100
    exch_m: int = 4
    exch_t: float = 0.5
    dynkin_N: int = 64
    dynkin_t: float = 0.1
    dynkin_runs: int = 400
    base_dir: str = field(default=".", repr=False)
    network: ReactionNetwork | None = field(default=None, repr=False)

    def resolve_path(self, p: str) -> str:
        return p if os.path.isabs(p) else os.path.join(self.base_dir, p)

    def echo(self) -> str:
        """Resolved configuration in the input format, every key present."""
        lines = []
        for key, (attr, _, _) in SCHEMA.items():
            val = getattr(self, attr)
            if isinstance(val, tuple):
                text = ", ".join(repr(v) for v in val)
            elif isinstance(val, bool):
                text = "true" if val else "false"
            elif isinstance(val, float):
                text = repr(val)
            else:
                text = str(val)
            lines.append(f"{key} = {text}")
        return "\n".join(lines) + "\n"


def parse_config(text: str, base_dir: str = ".", overrides: dict | None = None) -> ExperimentConfig:
    """Parse and validate configuration text."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in raw:
            raise ConfigError(f"line {lineno}: key {key!r} given twice")
        raw[key] = val
    for key, val in (overrides or {}).items():
        if key not in SCHEMA:
            raise ConfigError(f"unknown key {key!r}")
        raw[key] = str(val)
    cfg = ExperimentConfig(base_dir=base_dir)
    for key, (attr, parse, default) in SCHEMA.items():
        if key in raw:
            try:
                setattr(cfg, attr, parse(raw[key]))
            except ValueError as exc:
                raise ConfigError(f"{key}: {exc}") from None
        elif default is None:
            raise ConfigError(f"missing required key {key!r}")
    _validate(cfg)
    return cfg


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, os.path.dirname(os.path.abspath(path)), overrides)


def _validate(cfg: ExperimentConfig) -> None:
    if cfg.experiment not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {cfg.experiment!r}")
    if cfg.network_inline and cfg.network_file:
        raise ConfigError("give network.inline or network.file, not both")
    if cfg.network_file:
        path = cfg.resolve_path(cfg.network_file)
        if not os.path.exists(path):
            raise ConfigError(f"network.file {path} does not exist")
        with open(path) as fh:
            src = fh.read()
    else:
        src = cfg.network_inline.replace(";", "\n")
    needs_net = cfg.experiment not in ("ldp_suite",)
    if src.strip():
        try:
            cfg.network = parse_network(src)
        except (CRNSyntaxError, ValueError) as exc:
            raise ConfigError(f"network: {exc}") from None
    elif needs_net:
        raise ConfigError("a network is required (network.inline or network.file)")
    if any(n < 2 for n in cfg.N):
        raise ConfigError("sim.N: every N must be >= 2")
    if cfg.runs < 1:
        raise ConfigError("sim.runs must be >= 1")
    if not cfg.dt > 0:
        raise ConfigError("sim.dt must be > 0")
    if cfg.t_final < 0:
        raise ConfigError("sim.t_final must be >= 0")
    if any(t < 0 or t > cfg.t_final + 1e-12 for t in cfg.record_times):
        raise ConfigError("sim.record_times must lie in [0, sim.t_final]")
    if cfg.bins < 1 or cfg.M < 1 or cfg.dim < 1:
        raise ConfigError("sim.bins, pde.M and sim.dim must be >= 1")
    if cfg.sampler not in ("thinning", "exhaustive"):
        raise ConfigError("sim.sampler must be thinning or exhaustive")
    if cfg.profile not in ("uniform", "cosine", "file"):
        raise ConfigError("init.profile must be uniform, cosine or file")
    if cfg.profile == "file":
        if not cfg.init_file or not os.path.exists(cfg.resolve_path(cfg.init_file)):
            raise ConfigError("init.profile = file needs an existing init.file")
    if cfg.pde_dt == 0.0:
        cfg.pde_dt = cfg.dt
    if cfg.pde_dt < 0:
        raise ConfigError("pde.dt must be > 0")
    if cfg.ldp_f not in ("cos_product", "zero"):
        raise ConfigError("ldp.f must be cos_product or zero")
    if cfg.threads < 0:
        raise ConfigError("threads must be >= 0")
    net = cfg.network
    if net is not None:
        if any(s < 0 for s in cfg.sigma):
            raise ConfigError("sim.sigma must be >= 0")
        if len(cfg.sigma) not in (1, net.n_species):
            raise ConfigError(f"sim.sigma needs 1 or {net.n_species} values")
        if cfg.masses and len(cfg.masses) != net.n_species:
            raise ConfigError(f"init.masses needs {net.n_species} values")
        if cfg.masses and (any(m < 0 for m in cfg.masses) or abs(sum(cfg.masses) - 1) > 1e-12):
            raise ConfigError("init.masses must be nonnegative and sum to 1")
        bound = cfg.dt * step_bound(net, cfg.dim)
        if bound > DT_BOUND:
            msg = f"sim.dt violates dt*n_r*||Phi||_inf <= {DT_BOUND} (value {bound:.4g})"
            if not cfg.allow_large_dt:
                raise ConfigError(msg)
            warnings.warn(msg + "; continuing because sim.allow_large_dt = true", RuntimeWarning)


def config_keys() -> list[str]:
    return list(SCHEMA)
