"""Predator-prey gridworld.

Cooperating predators chase a single evasive prey on a small grid.  A
capture happens when at least two predators are within distance 1 of the
prey at the end of a step; each capture pays +1 team reward and respawns
the prey.  The episode is won once the capture count reaches the
configured threshold before the horizon.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import EnvError, MultiAgentEnv, StepOutcome

# stay, up, down, left, right
MOVES = np.array([[0, 0], [-1, 0], [1, 0], [0, -1], [0, 1]])

CAPTURE_REWARD = 1.0
CAPTURE_RADIUS = 1.0
RESPAWN_MIN_DIST = 3.0


@dataclass(frozen=True)
class PursuitState:
    predators: np.ndarray     # (n, 2) int coordinates
    prey: np.ndarray          # (2,)
    prev_actions: np.ndarray  # (n,)
    captures: int
    t: int
    terminal: bool


class PredatorPreyEnv(MultiAgentEnv):

    def __init__(self, n_agents: int = 8, grid: int = 10, horizon: int = 60,
                 capture_threshold: int = 3, visibility_radius: float = 2.0,
                 prey_slowdown: bool = False):
        if n_agents < 2:
            raise EnvError("predator-prey needs at least 2 predators")
        if grid < 4:
            raise EnvError("grid too small")
        self.n_agents = n_agents
        self.grid = grid
        self.horizon = horizon
        self.capture_threshold = capture_threshold
        self.visibility_radius = visibility_radius
        # Optional speed differential: prey skips every other step.
        self.prey_slowdown = prey_slowdown
        self.metric = "euclidean"
        self.n_actions = 5
        self.obs_dim = 2 + 3 + 3 * (n_agents - 1)
        self.reward_min = 0.0
        self.reward_max = CAPTURE_REWARD

    def reset(self, seed: int) -> PursuitState:
        self._rng = np.random.default_rng(seed)
        predators = self._rng.integers(0, self.grid, size=(self.n_agents, 2))
        prey = self._spawn_prey(predators)
        return PursuitState(predators=predators, prey=prey,
                            prev_actions=np.zeros(self.n_agents, dtype=int),
                            captures=0, t=0, terminal=False)

    def _spawn_prey(self, predators: np.ndarray) -> np.ndarray:
        for _ in range(200):
            cand = self._rng.integers(0, self.grid, size=2)
            d = np.sqrt(((predators - cand) ** 2).sum(axis=1))
            if d.min() >= RESPAWN_MIN_DIST:
                return cand
        return self._rng.integers(0, self.grid, size=2)

    def positions(self, state: PursuitState) -> np.ndarray:
        return state.predators.astype(np.float64)

    def _prey_move(self, prey: np.ndarray, predators: np.ndarray) -> np.ndarray:
        best_score = -np.inf
        best: list[np.ndarray] = []
        for mv in MOVES:
            cand = np.clip(prey + mv, 0, self.grid - 1)
            score = np.sqrt(((predators - cand) ** 2).sum(axis=1)).min()
            if score > best_score + 1e-12:
                best_score = score
                best = [cand]
            elif abs(score - best_score) <= 1e-12:
                best.append(cand)
        return best[self._rng.integers(len(best))]

    def step(self, state: PursuitState, actions) -> StepOutcome:
        if state.terminal:
            raise EnvError("cannot step a terminal state")
        actions = self._check_actions(actions)
        predators = np.clip(state.predators + MOVES[actions], 0, self.grid - 1)
        prey = state.prey
        if not (self.prey_slowdown and state.t % 2 == 1):
            prey = self._prey_move(prey, predators)

        d = np.sqrt(((predators - prey) ** 2).sum(axis=1))
        capturers = np.flatnonzero(d <= CAPTURE_RADIUS)
        agent_rewards = np.zeros(self.n_agents)
        captures = state.captures
        reward = 0.0
        if capturers.size >= 2:
            captures += 1
            reward = CAPTURE_REWARD
            agent_rewards[capturers] = CAPTURE_REWARD / capturers.size
            prey = self._spawn_prey(predators)

        t = state.t + 1
        terminal = t >= self.horizon or captures >= self.capture_threshold
        nxt = PursuitState(predators=predators, prey=prey,
                           prev_actions=actions.copy(), captures=captures,
                           t=t, terminal=terminal)
        win = (captures >= self.capture_threshold) if terminal else None
        return StepOutcome(state=nxt, reward=reward, agent_rewards=agent_rewards,
                           terminal=terminal, win=win)

    def observe(self, state: PursuitState) -> list[np.ndarray]:
        obs = []
        g = float(self.grid)
        for i in range(self.n_agents):
            me = state.predators[i]
            parts = [me / g]
            d_prey = np.sqrt(((state.prey - me) ** 2).sum())
            if d_prey <= self.visibility_radius:
                parts.append(np.array([1.0, (state.prey[0] - me[0]) / g,
                                       (state.prey[1] - me[1]) / g]))
            else:
                parts.append(np.zeros(3))
            for j in range(self.n_agents):
                if j == i:
                    continue
                other = state.predators[j]
                d = np.sqrt(((other - me) ** 2).sum())
                if d <= self.visibility_radius:
                    parts.append(np.array([1.0, (other[0] - me[0]) / g,
                                           (other[1] - me[1]) / g]))
                else:
                    parts.append(np.zeros(3))
            obs.append(np.concatenate(parts))
        return obs

    def vertex_attributes(self, state: PursuitState) -> np.ndarray:
        g = float(self.grid)
        prey_visible = np.array([
            1.0 if np.sqrt(((state.prey - state.predators[i]) ** 2).sum())
            <= self.visibility_radius else 0.0
            for i in range(self.n_agents)
        ])
        return np.column_stack([
            state.predators / g,
            state.prev_actions / 4.0,
            prey_visible,
        ])
