"""
Run configuration shared by the engine and the command line.

A config file is TOML (or JSON) with top-level keys matching
:class:`RunConfig` fields plus optional ``[measure]``, ``[evolve]`` and
``[verify]`` tables.  Exactly one of ``alpha`` and ``delta`` must be given;
``alpha = (1 - delta) / 2``.
"""
from __future__ import annotations

import dataclasses
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

GOLDEN_OMEGA = math.sqrt(5.0) - 1.0

MEASURE_DEFAULTS = {
    "mode": "kappa",            # kappa | gamma | eps
    "n_freq": None,             # defaults to the potential's
    "kappa_grid": [1e-14, 1e-12, 1e-10],
    "gamma_grid": None,
    "K_grid": [1],
    "eps_grid": [1e-3],
    "scan_eps": 0.1,            # eps entering i_cut for kappa/gamma sweeps
    "schedule_mode": "frozen",  # frozen | full, for mode = eps
}

EVOLVE_DEFAULTS = {
    "T": 10.0,
    "n_out": 201,
    "initial": "gaussian_low",  # gaussian_low | single_mode | rough
    "mode_index": 1,
    "width": 2.0,
    "cross_check": False,
    "dt": 5e-4,
    "k_max": 4,
}

VERIFY_DEFAULTS = {
    "sizes": [16, 32, 64],
    "alphas": [0.25, 0.5, 1.0],
    "samples": 200,
    "series_M": 100000,
    "series_i": [1, 10, 100, 1000],
    "koch_deltas": [0.25, 0.5, 1.0],
    "koch_n": 128,
    "homological_N": 32,
    "inject_sign_flip": False,
}


@dataclass
class RunConfig:
    potential: str = "cos_shift"
    potential_params: dict = field(default_factory=dict)
    n_freq: int | None = None
    omega: list | None = None
    seed: int = 0
    n_samples: int = 1024
    eps: float = 1e-3
    N: int = 128
    quad_size: int | None = None
    alpha: float | None = None
    delta: float | None = None
    sigma_0: float | None = None
    m_max: int = 4
    stop_tol: float = 1e-14
    exp_tol: float = 1e-13
    gl_order: int = 8
    guard: int = 4
    oversample: int = 2
    gamma_scale: float = 2.5e-5
    eps_bar: float = 0.1
    k_cap: int | None = None
    u_kmax: int = 12
    strict: bool = False
    fd_omega: bool = False
    check_quadrature: bool = True
    threads: int = 1
    output_dir: str = "out"
    measure: dict = field(default_factory=dict)
    evolve: dict = field(default_factory=dict)
    verify: dict = field(default_factory=dict)

    def __post_init__(self):
        self.measure = {**MEASURE_DEFAULTS, **(self.measure or {})}
        self.evolve = {**EVOLVE_DEFAULTS, **(self.evolve or {})}
        self.verify = {**VERIFY_DEFAULTS, **(self.verify or {})}
        self.validate()

    # derived quantities
    @property
    def alpha_value(self) -> float:
        return self.alpha if self.alpha is not None else (1.0 - self.delta) / 2.0

    @property
    def delta_value(self) -> float:
        return self.delta if self.delta is not None else 1.0 - 2.0 * self.alpha

    @property
    def nu1(self) -> float:
        a = self.alpha_value
        return a / (a + 2.0)

    @property
    def quad(self) -> int:
        return self.quad_size if self.quad_size is not None else 4 * self.N

    def potential_spec(self):
        from .perturbation import catalog

        params = dict(self.potential_params)
        params.setdefault("delta", self.delta_value)
        if self.sigma_0 is not None:
            params.setdefault("strip_sigma", self.sigma_0)
        V = catalog(self.potential, **params)
        if self.n_freq is not None and self.n_freq != V.n_freq:
            raise ConfigError(f"n_freq: config says {self.n_freq}, potential {self.potential!r} has {V.n_freq}")
        return V

    @property
    def sigma(self) -> float:
        return self.sigma_0 if self.sigma_0 is not None else self.potential_spec().strip_sigma

    @property
    def omega_vector(self) -> list:
        if self.omega is not None:
            return [float(w) for w in self.omega]
        n = self.potential_spec().n_freq
        return [GOLDEN_OMEGA * (j + 1) ** 0.5 for j in range(n)]

    def validate(self) -> None:
        if (self.alpha is None) == (self.delta is None):
            raise ConfigError("alpha/delta: exactly one of alpha and delta must be given (found "
                              + ("both" if self.alpha is not None else "neither") + ")")
        if self.alpha is not None and not 0.0 < self.alpha <= 1.0:
            raise ConfigError(f"alpha: {self.alpha} outside (0, 1]")
        if self.delta is not None and not 0.0 <= self.delta < 1.0:
            raise ConfigError(f"delta: {self.delta} outside [0, 1)")
        if not 0.0 <= self.eps < 1.0:
            raise ConfigError(f"eps: {self.eps} must satisfy 0 <= eps < 1")
        if int(self.N) != self.N or self.N < 16:
            raise ConfigError(f"N: {self.N} must be an integer >= 16")
        if self.sigma_0 is not None and not self.sigma_0 > 0:
            raise ConfigError(f"sigma_0: {self.sigma_0} must be > 0")
        if self.quad_size is not None and self.quad_size < 2 * self.N + 2:
            raise ConfigError(f"quad_size: {self.quad_size} < 2*N+2")
        if self.m_max < 1:
            raise ConfigError("m_max: must be >= 1")
        for name in ("stop_tol", "eps_bar"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name}: must be >= 0")
        if not self.exp_tol > 0:
            raise ConfigError("exp_tol: must be > 0")
        if not self.gamma_scale > 0:
            raise ConfigError("gamma_scale: must be > 0")
        if self.gl_order < 1 or self.oversample < 1 or self.guard < 0 or self.threads < 1:
            raise ConfigError("gl_order, oversample, threads must be >= 1 and guard >= 0")
        if self.omega is not None and any(not 0.0 <= float(w) < 2 * math.pi for w in self.omega):
            raise ConfigError("omega: components must lie in [0, 2pi)")
        if self.n_samples < 1:
            raise ConfigError("n_samples: must be >= 1")
        if self.measure["mode"] not in ("kappa", "gamma", "eps"):
            raise ConfigError(f"measure.mode: unknown {self.measure['mode']!r}")
        if self.evolve["initial"] not in ("gaussian_low", "single_mode", "rough"):
            raise ConfigError(f"evolve.initial: unknown {self.evolve['initial']!r}")
        try:
            self.potential_spec()
        except ConfigError:
            raise
        except Exception as exc:  # unknown potential, bad params
            raise ConfigError(f"potential: {exc}") from exc

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def load_config(path) -> RunConfig:
    """Read a TOML or JSON config file; raises :class:`ConfigError` with the field name."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"config: cannot read {p}: {exc}") from exc
    try:
        data = json.loads(text) if p.suffix == ".json" else tomllib.loads(text)
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"config: parse error in {p}: {exc}") from exc
    return config_from_dict(data)


def config_from_dict(data: dict) -> RunConfig:
    names = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown config key")
    for sec, defaults in (("measure", MEASURE_DEFAULTS), ("evolve", EVOLVE_DEFAULTS), ("verify", VERIFY_DEFAULTS)):
        extra = sorted(set(data.get(sec, {})) - set(defaults))
        if extra:
            raise ConfigError(f"{sec}.{extra[0]}: unknown config key")
    try:
        return RunConfig(**data)
    except TypeError as exc:
        raise ConfigError(f"config: {exc}") from exc
