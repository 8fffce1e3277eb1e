"""Shared environment interface.

Environments are value-like state machines: `reset` returns an initial
state, `step` consumes a state plus joint action and returns a
StepOutcome.  Randomness comes from a generator seeded at reset, so a
seed plus an action sequence replays exactly.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np


class EnvError(ValueError):
    """Invalid configuration or illegal transition request."""


@dataclass
class StepOutcome:
    state: Any
    reward: float
    agent_rewards: np.ndarray
    terminal: bool
    win: bool | None = None


class MultiAgentEnv:
    """Base class; subclasses define the attributes below in __init__."""

    n_agents: int
    n_actions: int
    obs_dim: int
    horizon: int
    metric: str                      # 'manhattan' or 'euclidean'
    visibility_radius: float | None  # None = everything visible
    reward_min: float                # analytic per-step minimum team reward
    reward_max: float                # analytic per-step maximum team reward

    def reset(self, seed: int):
        raise NotImplementedError

    def step(self, state, actions) -> StepOutcome:
        raise NotImplementedError

    def observe(self, state) -> list[np.ndarray]:
        raise NotImplementedError

    def positions(self, state) -> np.ndarray:
        raise NotImplementedError

    def vertex_attributes(self, state) -> np.ndarray:
        """Per-agent attribute vectors used as graph vertex properties."""
        raise NotImplementedError

    def cp_features(self, state, obs: list[np.ndarray]) -> list[np.ndarray]:
        """Features the team's gate policy sees per endpoint.

        Observation, own position, and an identity one-hot; the identity
        lets the shared gate network learn per-channel selectivity
        instead of a single global communicate-or-not bias.
        """
        pos = self.positions(state)
        scale = float(getattr(self, "grid", 1) or 1)
        eye = np.eye(self.n_agents)
        return [np.concatenate([o, pos[i] / scale, eye[i]])
                for i, o in enumerate(obs)]

    @property
    def cp_feature_dim(self) -> int:
        return self.obs_dim + 2 + self.n_agents

    def distances(self, state) -> np.ndarray:
        """Symmetric pairwise distance table with zero diagonal."""
        pos = self.positions(state)
        diff = pos[:, None, :] - pos[None, :, :]
        if self.metric == "manhattan":
            d = np.abs(diff).sum(axis=2)
        elif self.metric == "euclidean":
            d = np.sqrt((diff ** 2).sum(axis=2))
        else:
            raise EnvError(f"unknown metric: {self.metric}")
        return d.astype(np.float64)

    def is_win(self, outcome: StepOutcome) -> bool:
        if not outcome.terminal:
            raise EnvError("win is only defined at a terminal step")
        return bool(outcome.win)

    def _check_actions(self, actions) -> np.ndarray:
        actions = np.asarray(actions, dtype=int)
        if actions.shape != (self.n_agents,):
            raise EnvError(f"expected {self.n_agents} actions, got {actions.shape}")
        if actions.min() < 0 or actions.max() >= self.n_actions:
            raise EnvError("action out of range")
        return actions
