"""Traffic-junction gridworld.

Cars follow pre-assigned routes through a two-road crossing and choose
gas or brake each step.  A collision (two cars on one cell) contributes
-10 per colliding pair; every car still inside the junction environment
adds a time penalty per step (default -0.01, configurable), which is
what makes dawdling costly.  An episode is won when all cars exit
without a single collision before the horizon.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .base import EnvError, MultiAgentEnv, StepOutcome

GAS = 1
BRAKE = 0

COLLISION_REWARD = -10.0
JUNCTION_PENALTY = -0.01

# Progress index at which every route reaches its first junction cell.
_ENTRY_PROGRESS = 6
_MAX_START_OFFSET = 6  # starting cells are drawn from progress 0..5


@dataclass(frozen=True)
class TrafficState:
    progress: np.ndarray      # (n,) route progress; >= route length means exited
    prev_actions: np.ndarray  # (n,)
    collisions: int           # colliding pairs accumulated over the episode
    t: int
    terminal: bool


class TrafficJunctionEnv(MultiAgentEnv):
    """Two perpendicular two-lane roads on a square grid."""

    def __init__(self, n_agents: int = 10, grid: int = 14, horizon: int = 40,
                 visibility_radius: float = 1.0,
                 time_penalty: float = -JUNCTION_PENALTY):
        if n_agents < 2:
            raise EnvError("traffic junction needs at least 2 cars")
        if grid < 10 or grid % 2:
            raise EnvError("grid must be an even size of at least 10")
        if time_penalty < 0:
            raise EnvError("time_penalty is a magnitude and must be >= 0")
        mid = grid // 2
        self.n_agents = n_agents
        self.grid = grid
        self.horizon = horizon
        self.visibility_radius = visibility_radius
        self.time_penalty = -float(time_penalty)
        self.metric = "manhattan"
        self.n_actions = 2
        # Route cells, entry to exit.  Lanes are offset so opposing
        # traffic never shares cells outside the junction.
        self.routes = [
            [(mid - 1, c) for c in range(grid)],            # eastbound
            [(mid, c) for c in range(grid - 1, -1, -1)],    # westbound
            [(r, mid - 1) for r in range(grid)],            # southbound
            [(r, mid) for r in range(grid - 1, -1, -1)],    # northbound
        ]
        self.route_len = grid
        self.junction_cells = {
            (mid - 1, mid - 1), (mid - 1, mid), (mid, mid - 1), (mid, mid)
        }
        self.route_ids = np.array([k % 4 for k in range(n_agents)])
        # 2 visible-neighbor slots of (present, dx, dy)
        self.obs_dim = 1 + 4 + 1 + 1 + 1 + 6
        self.reward_min = (COLLISION_REWARD * (n_agents * (n_agents - 1) // 2)
                           + self.time_penalty * n_agents)
        self.reward_max = 0.0

    def reset(self, seed: int) -> TrafficState:
        self._rng = np.random.default_rng(seed)
        progress = np.zeros(self.n_agents, dtype=int)
        for route in range(4):
            cars = np.flatnonzero(self.route_ids == route)
            if cars.size == 0:
                continue
            if cars.size > _MAX_START_OFFSET:
                raise EnvError("too many cars per route for the entry region")
            offsets = self._rng.choice(_MAX_START_OFFSET, size=cars.size,
                                       replace=False)
            progress[cars] = np.sort(offsets)[::-1]
        return TrafficState(progress=progress,
                            prev_actions=np.zeros(self.n_agents, dtype=int),
                            collisions=0, t=0, terminal=False)

    def _active(self, state: TrafficState) -> np.ndarray:
        return state.progress < self.route_len

    def positions(self, state: TrafficState) -> np.ndarray:
        pos = np.zeros((self.n_agents, 2))
        for i in range(self.n_agents):
            p = min(int(state.progress[i]), self.route_len - 1)
            pos[i] = self.routes[self.route_ids[i]][p]
        return pos

    def step(self, state: TrafficState, actions) -> StepOutcome:
        if state.terminal:
            raise EnvError("cannot step a terminal state")
        actions = self._check_actions(actions)
        active = self._active(state)
        progress = state.progress + np.where(active, actions, 0)
        next_active = progress < self.route_len

        # Collisions on the post-move cells; every car still on the road
        # pays the time penalty.
        cells: dict[tuple[int, int], int] = {}
        agent_rewards = np.zeros(self.n_agents)
        cell_of = {}
        for i in np.flatnonzero(next_active):
            cell = self.routes[self.route_ids[i]][int(progress[i])]
            cell_of[i] = cell
            cells[cell] = cells.get(cell, 0) + 1
            agent_rewards[i] += self.time_penalty
        junction_cars = int(next_active.sum())
        pairs = sum(m * (m - 1) // 2 for m in cells.values())
        for i, cell in cell_of.items():
            others = cells[cell] - 1
            if others:
                agent_rewards[i] += (COLLISION_REWARD / 2.0) * others
        reward = COLLISION_REWARD * pairs + self.time_penalty * junction_cars

        t = state.t + 1
        all_exited = not next_active.any()
        terminal = t >= self.horizon or all_exited
        collisions = state.collisions + pairs
        nxt = TrafficState(progress=progress, prev_actions=actions.copy(),
                           collisions=collisions, t=t, terminal=terminal)
        win = (collisions == 0 and all_exited) if terminal else None
        return StepOutcome(state=nxt, reward=reward, agent_rewards=agent_rewards,
                           terminal=terminal, win=win)

    def observe(self, state: TrafficState) -> list[np.ndarray]:
        pos = self.positions(state)
        active = self._active(state)
        obs = []
        for i in range(self.n_agents):
            if not active[i]:
                obs.append(np.zeros(self.obs_dim))
                continue
            route_onehot = np.zeros(4)
            route_onehot[self.route_ids[i]] = 1.0
            occupancy = float(sum(
                1 for j in range(self.n_agents)
                if active[j] and np.array_equal(pos[j], pos[i])
            ))
            own_progress = state.progress[i] / self.route_len
            to_junction = (_ENTRY_PROGRESS - state.progress[i]) / self.route_len
            visible = [
                (abs(pos[j] - pos[i]).sum(), j)
                for j in range(self.n_agents)
                if j != i and active[j]
                and abs(pos[j] - pos[i]).sum() <= self.visibility_radius
            ]
            visible.sort()
            slots = np.zeros(6)
            for s, (_, j) in enumerate(visible[:2]):
                slots[3 * s] = 1.0
                slots[3 * s + 1] = (pos[j][0] - pos[i][0]) / self.grid
                slots[3 * s + 2] = (pos[j][1] - pos[i][1]) / self.grid
            obs.append(np.concatenate([
                [state.prev_actions[i]], route_onehot, [occupancy],
                [own_progress], [to_junction], slots,
            ]))
        return obs

    def vertex_attributes(self, state: TrafficState) -> np.ndarray:
        pos = self.positions(state) / self.grid
        active = self._active(state).astype(float)
        return np.column_stack([
            pos,
            state.progress / self.route_len,
            self.route_ids / 3.0,
            active,
        ])
