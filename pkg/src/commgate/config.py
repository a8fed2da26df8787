"""Experiment configuration: INI files, CLI overrides and the named preset catalog."""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .comm import Arch
from .envs import ENVS, make_env
from .gating import GateMode
from .trainer import TrainConfig

DEFAULT_GAMMA = {"secret": 0.5, "secret_pairs": 0.5, "predprey": 0.99, "dyn_nav": 0.99}
PAIRWISE_ENVS = ("secret_pairs",)


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key."""

    def __init__(self, field_name: str, message: str) -> None:
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class ExperimentConfig:
    env: str = "secret"
    env_params: dict = field(default_factory=dict)
    arch: str = "commnet"
    gate: str = "always_on"
    pairwise: bool | None = None
    penalty: float = 0.0
    multitask: bool = True
    forwarding: bool = True
    baseline: bool = True
    force_open: bool = False
    temperature: float = 1.0
    masked_softmax: bool = False
    gamma: float | None = None
    lr: float = 1e-3
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    episodes_per_update: int = 16
    workers: int = 4
    max_grad_norm: float = 0.5
    steps: int = 2_000_000
    seed: int = 0
    out: str = "runs/default"
    eval_every: int = 200
    eval_episodes: int = 32
    final_eval_episodes: int = 100
    checkpoint_every: int = 1000

    def __post_init__(self) -> None:
        self.validate()

    @property
    def is_pairwise(self) -> bool:
        return self.env in PAIRWISE_ENVS if self.pairwise is None else self.pairwise

    @property
    def effective_gamma(self) -> float:
        return DEFAULT_GAMMA.get(self.env, 0.99) if self.gamma is None else self.gamma

    @property
    def gate_mode(self) -> GateMode:
        return GateMode.parse(self.gate)

    def validate(self) -> None:
        if self.env not in ENVS:
            raise ConfigError("env", f"unknown environment {self.env!r}; expected one of {sorted(ENVS)}")
        try:
            Arch(self.arch)
        except ValueError:
            raise ConfigError("arch", f"unknown architecture {self.arch!r}; expected one of "
                                      f"{[a.value for a in Arch]}") from None
        try:
            GateMode.parse(self.gate)
        except ValueError as exc:
            raise ConfigError("gate", str(exc)) from None
        if self.penalty < 0:
            raise ConfigError("penalty", f"must be non-negative, got {self.penalty}")
        if self.gamma is not None and not 0.0 <= self.gamma <= 1.0:
            raise ConfigError("gamma", f"must lie in [0, 1], got {self.gamma}")
        if not self.temperature > 0:
            raise ConfigError("temperature", f"must be positive, got {self.temperature}")
        for name in ("episodes_per_update", "workers", "steps", "eval_episodes", "final_eval_episodes",
                     "eval_every", "checkpoint_every"):
            if getattr(self, name) < 1:
                raise ConfigError(name, f"must be positive, got {getattr(self, name)}")
        if self.episodes_per_update % self.workers:
            raise ConfigError("workers", f"must divide episodes_per_update ({self.episodes_per_update})")
        if self.lr <= 0:
            raise ConfigError("lr", f"must be positive, got {self.lr}")
        if self.is_pairwise and self.env not in PAIRWISE_ENVS:
            raise ConfigError("pairwise", f"environment {self.env!r} provides no peer information")
        try:
            make_env(self.env, 1, **self.env_params)
        except (TypeError, ValueError) as exc:
            raise ConfigError("env_params", str(exc)) from None

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            penalty=self.penalty, gamma=self.effective_gamma, lr=self.lr, entropy_coef=self.entropy_coef,
            value_coef=self.value_coef, episodes_per_update=self.episodes_per_update, workers=self.workers,
            total_steps=self.steps, multitask=self.multitask, forwarding=self.forwarding,
            baseline=self.baseline, max_grad_norm=self.max_grad_norm, temperature=self.temperature,
            force_open=self.force_open, gate=self.gate_mode,
        )

    def replace(self, **changes) -> "ExperimentConfig":
        changes.setdefault("env_params", dict(self.env_params))
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    # ------------------------------------------------------------------ files

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        cp["experiment"] = {k: _fmt(v) for k, v in self.to_dict().items() if k != "env_params" and v is not None}
        cp["env"] = {k: _fmt(v) for k, v in self.env_params.items()}
        lines = []
        for section in cp.sections():
            lines.append(f"[{section}]")
            lines.extend(f"{k} = {v}" for k, v in cp[section].items())
            lines.append("")
        return "\n".join(lines)

    def save(self, path) -> None:
        Path(path).write_text(self.to_ini())

    @classmethod
    def from_ini(cls, text: str) -> "ExperimentConfig":
        cp = configparser.ConfigParser()
        cp.read_string(text)
        values = dict(cp["experiment"]) if cp.has_section("experiment") else {}
        env_params = {k: _parse_scalar(v) for k, v in cp["env"].items()} if cp.has_section("env") else {}
        base = values.pop("preset", None)
        cfg = preset(base) if base else cls()
        return apply_overrides(cfg, values, env_params or None)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_ini(Path(path).read_text())


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def _parse_scalar(text: str):
    low = text.strip().lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text.strip()


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def _coerce(name: str, value):
    if name not in _FIELDS or name == "env_params":
        raise ConfigError(name, f"unknown configuration key; expected one of "
                                f"{sorted(k for k in _FIELDS if k != 'env_params')}")
    default = getattr(ExperimentConfig(), name)
    if not isinstance(value, str):
        return value
    text = value.strip()
    if name in ("gamma", "pairwise") and text.lower() in ("none", ""):
        return None
    try:
        if name == "pairwise" or isinstance(default, bool):
            parsed = _parse_scalar(text)
            if not isinstance(parsed, bool):
                raise ValueError(text)
            return parsed
        if name == "gamma" or isinstance(default, float):
            return float(text)
        if isinstance(default, int):
            return int(float(text)) if "e" in text.lower() else int(text)
    except ValueError:
        raise ConfigError(name, f"cannot parse {value!r}") from None
    return text


def apply_overrides(cfg: ExperimentConfig, values: dict, env_params: dict | None = None) -> ExperimentConfig:
    changes = {k: _coerce(k, v) for k, v in values.items() if v is not None}
    if env_params is not None:
        changes["env_params"] = {**cfg.env_params, **env_params}
    return cfg.replace(**changes)


# ---------------------------------------------------------------------- presets

SCALED_PREDPREY = {"n_agents": 5, "grid": 10, "max_steps": 40}


def _catalog() -> dict[str, ExperimentConfig]:
    c: dict[str, ExperimentConfig] = {}

    def add(name, **kw):
        c[name] = ExperimentConfig(out=f"runs/{name}", **kw)

    def baselines(env, arch, **kw):
        add(f"{env}_baseline_{arch}", env=env, arch=arch, gate="always_on", multitask=False, **kw)
        add(f"{env}_ic3net_{arch}", env=env, arch=arch, gate="reinforce", penalty=0.0, multitask=False, **kw)
        add(f"{env}_independent", env=env, arch=arch, gate="always_off", multitask=False, **kw)
        for p in (0.15, 0.3, 0.5):
            add(f"{env}_random_{p:g}", env=env, arch=arch, gate=f"random:{p:g}", multitask=False, **kw)

    for arch in ("commnet", "tarmac", "tarmac_sigmoid"):
        add(f"secret_baseline_{arch}", env="secret", arch=arch, gate="always_on", multitask=False)
        add(f"secret_ic3net_{arch}", env="secret", arch=arch, gate="reinforce", multitask=False)
        add(f"secret_ecnet_gs_{arch}", env="secret", arch=arch, gate="gs", penalty=0.01)
        add(f"secret_ecnet_reinforce_{arch}", env="secret", arch=arch, gate="reinforce", penalty=0.1)
    add("secret_ecnet_gs", env="secret", arch="commnet", gate="gs", penalty=0.01)
    add("secret_ecnet_gs_no_multitask", env="secret", arch="commnet", gate="gs", penalty=0.01, multitask=False)
    add("secret_ecnet_reinforce", env="secret", arch="tarmac_sigmoid", gate="reinforce", penalty=0.1)
    add("secret_independent", env="secret", arch="commnet", gate="always_off", multitask=False)
    for p in (0.15, 0.3, 0.5):
        add(f"secret_random_{p:g}", env="secret", arch="commnet", gate=f"random:{p:g}", multitask=False)

    for prefix, params in (("predprey", {}), ("predprey_small", SCALED_PREDPREY)):
        kw = dict(env="predprey", env_params=dict(params))
        for arch in ("commnet", "tarmac", "tarmac_sigmoid"):
            add(f"{prefix}_baseline_{arch}", arch=arch, gate="always_on", multitask=False, **kw)
            add(f"{prefix}_ic3net_{arch}", arch=arch, gate="reinforce", multitask=False, **kw)
        for lam in (0.005, 0.1):
            add(f"{prefix}_ecnet_reinforce_{lam:g}", arch="tarmac", gate="reinforce", penalty=lam, **kw)
        for lam in (0.001, 0.01):
            add(f"{prefix}_ecnet_gs_{lam:g}", arch="tarmac", gate="gs", penalty=lam, **kw)
        add(f"{prefix}_ecnet_low", arch="tarmac", gate="gs", penalty=0.001, **kw)
        add(f"{prefix}_ecnet_high", arch="tarmac", gate="reinforce", penalty=0.1, **kw)
        add(f"{prefix}_independent", arch="commnet", gate="always_off", multitask=False, **kw)
        for p in (0.15, 0.3, 0.5):
            add(f"{prefix}_random_{p:g}", arch="tarmac", gate=f"random:{p:g}", multitask=False, **kw)

    pairs = dict(env="secret_pairs", arch="commnet", force_open=True)
    add("secret_pairs_ecnet_gs", gate="gs", penalty=0.01, temperature=0.5, **pairs)
    add("secret_pairs_ecnet_reinforce", gate="reinforce", penalty=0.1, **pairs)
    baselines("secret_pairs", "commnet")

    # the value term swamps the policy gradient on 50-step episodes at 0.5
    nav = dict(env="dyn_nav", arch="commnet", value_coef=0.05)
    for lam in (0.2, 0.4):
        add(f"dyn_nav_ecnet_reinforce_{lam:g}", gate="reinforce", penalty=lam, **nav)
    add("dyn_nav_ecnet_reinforce", gate="reinforce", penalty=0.2, **nav)
    add("dyn_nav_ecnet_gs", gate="gs", penalty=0.1, **nav)
    baselines("dyn_nav", "commnet", value_coef=0.05)
    return c


PRESETS = _catalog()


def preset(name: str) -> ExperimentConfig:
    try:
        return PRESETS[name].replace()
    except KeyError:
        raise ConfigError("preset", f"unknown preset {name!r}; valid names: {', '.join(sorted(PRESETS))}") from None
