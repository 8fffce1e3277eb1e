from .base import EnvError, MultiAgentEnv, StepOutcome
from .pursuit import PredatorPreyEnv
from .relay import RelayEnv
from .traffic import TrafficJunctionEnv

ENV_REGISTRY = {
    "traffic_junction": TrafficJunctionEnv,
    "predator_prey": PredatorPreyEnv,
    "relay": RelayEnv,
}


def make_env(name: str, **kwargs) -> MultiAgentEnv:
    if name not in ENV_REGISTRY:
        raise EnvError(f"unknown environment: {name!r} "
                       f"(choose from {sorted(ENV_REGISTRY)})")
    return ENV_REGISTRY[name](**kwargs)


__all__ = [
    "EnvError", "MultiAgentEnv", "StepOutcome", "PredatorPreyEnv",
    "RelayEnv", "TrafficJunctionEnv", "ENV_REGISTRY", "make_env",
]
