"""Relay diagnostic task.

A constructed 2-4 agent environment where the critical communication
channel is known by construction.  Agent 0 observes a fresh goal bit
every step; agent 1 (the actor) earns the team reward by matching its
action to that bit, which it can only learn through a message.  With 3+
agents, agent 2 observes a noisy copy of the bit (a redundant route for
the information), and agent 4th slot is a pure distractor whose
observation is indistinguishable from the actor's.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import ceil

import numpy as np

from .base import EnvError, MultiAgentEnv, StepOutcome

OBSERVER = 0
ACTOR = 1
SECONDARY = 2
DISTRACTOR = 3

_POSITIONS = np.array([[0.0, 0.0], [0.0, 2.0], [0.0, 4.0], [0.0, 6.0]])


@dataclass(frozen=True)
class RelayState:
    goal: float               # +1 or -1, the bit the actor must match
    readings: np.ndarray      # (n,) what each agent's first obs slot shows
    noise: np.ndarray         # (n, 2)
    correct: int
    t: int
    terminal: bool


class RelayEnv(MultiAgentEnv):

    def __init__(self, n_agents: int = 4, horizon: int = 10,
                 secondary_accuracy: float = 0.8, win_fraction: float = 0.8):
        if not 2 <= n_agents <= 4:
            raise EnvError("relay task supports 2 to 4 agents")
        self.n_agents = n_agents
        self.horizon = horizon
        self.secondary_accuracy = secondary_accuracy
        self.win_threshold = ceil(win_fraction * horizon)
        self.grid = 7
        self.metric = "euclidean"
        self.visibility_radius = None
        self.n_actions = 2
        self.obs_dim = 3
        self.reward_min = 0.0
        self.reward_max = 1.0

    def _draw(self) -> tuple[float, np.ndarray, np.ndarray]:
        goal = 1.0 if self._rng.random() < 0.5 else -1.0
        readings = np.zeros(self.n_agents)
        readings[OBSERVER] = goal
        if self.n_agents > SECONDARY:
            flip = self._rng.random() >= self.secondary_accuracy
            readings[SECONDARY] = -goal if flip else goal
        noise = self._rng.uniform(-1.0, 1.0, size=(self.n_agents, 2))
        return goal, readings, noise

    def reset(self, seed: int) -> RelayState:
        self._rng = np.random.default_rng(seed)
        goal, readings, noise = self._draw()
        return RelayState(goal=goal, readings=readings, noise=noise,
                          correct=0, t=0, terminal=False)

    def positions(self, state: RelayState) -> np.ndarray:
        return _POSITIONS[: self.n_agents].copy()

    def step(self, state: RelayState, actions) -> StepOutcome:
        if state.terminal:
            raise EnvError("cannot step a terminal state")
        actions = self._check_actions(actions)
        wanted = 1 if state.goal > 0 else 0
        hit = int(actions[ACTOR]) == wanted
        reward = 1.0 if hit else 0.0
        agent_rewards = np.zeros(self.n_agents)
        agent_rewards[ACTOR] = reward
        goal, readings, noise = self._draw()
        t = state.t + 1
        terminal = t >= self.horizon
        correct = state.correct + int(hit)
        nxt = RelayState(goal=goal, readings=readings, noise=noise,
                         correct=correct, t=t, terminal=terminal)
        win = (correct >= self.win_threshold) if terminal else None
        return StepOutcome(state=nxt, reward=reward, agent_rewards=agent_rewards,
                           terminal=terminal, win=win)

    def observe(self, state: RelayState) -> list[np.ndarray]:
        return [
            np.concatenate([[state.readings[i]], state.noise[i]])
            for i in range(self.n_agents)
        ]

    def vertex_attributes(self, state: RelayState) -> np.ndarray:
        return self.positions(state) / 6.0
