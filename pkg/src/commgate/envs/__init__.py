"""Cooperative multi-agent tasks behind one batched interface."""
from .base import Env, EnvSpec, TraceWriter, comms_count, obs_hash, one_hot
from .dyn_nav import DynamicNav
from .predprey import PredatorPrey
from .secret import Secret, secret_step
from .secret_pairs import SecretPairs

ENVS = {
    "secret": Secret,
    "predprey": PredatorPrey,
    "secret_pairs": SecretPairs,
    "dyn_nav": DynamicNav,
}


def make_env(name: str, num_envs: int = 1, **params) -> Env:
    try:
        cls = ENVS[name]
    except KeyError:
        raise ValueError(f"unknown environment {name!r}; expected one of {sorted(ENVS)}") from None
    return cls(num_envs=num_envs, **params)


__all__ = [
    "ENVS", "DynamicNav", "Env", "EnvSpec", "PredatorPrey", "Secret", "SecretPairs",
    "TraceWriter", "comms_count", "make_env", "obs_hash", "one_hot", "secret_step",
]
