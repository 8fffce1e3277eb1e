"""Win-rate evaluation and communication-frequency analysis.

Evaluation runs greedy episodes under an optional attack, counts
delivered (open and unmasked) communications per channel, and reduces
them to a symmetric frequency matrix (mean deliveries per channel per
episode) with High/Low/Average/SD summary statistics over the
upper-triangle entries.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .comm import CommLog, ObservationSet, channel_list, exchange

REPORT_VERSION = 1
HEATMAP_VERSION = 1
_DIAGONAL_SENTINEL = "null"


@dataclass
class FrequencySummary:
    high: float
    low: float
    average: float
    sd: float


def frequency_summary(matrix: np.ndarray) -> FrequencySummary:
    """High/Low/Average/population-SD over the upper-triangle entries."""
    matrix = np.asarray(matrix, dtype=np.float64)
    n = matrix.shape[0]
    if n < 2 or matrix.shape != (n, n):
        raise ValueError("frequency matrix must be square with n >= 2")
    vals = np.array([matrix[i, j] for i, j in channel_list(n)])
    return FrequencySummary(
        high=float(vals.max()),
        low=float(vals.min()),
        average=float(vals.mean()),
        sd=float(np.sqrt(np.mean((vals - vals.mean()) ** 2))),
    )


@dataclass
class EvalReport:
    condition: str
    episodes: int
    wins: int
    win_rate: float
    matrix: np.ndarray
    summary: FrequencySummary
    total_delivered: int

    def to_doc(self) -> dict:
        return {
            "version": REPORT_VERSION,
            "condition": self.condition,
            "episodes": self.episodes,
            "wins": self.wins,
            "win_rate": self.win_rate,
            "summary": {
                "high": self.summary.high,
                "low": self.summary.low,
                "average": self.summary.average,
                "sd": self.summary.sd,
            },
            "total_delivered": self.total_delivered,
            "matrix": self.matrix.tolist(),
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_doc(), indent=2))

    @classmethod
    def load(cls, path: str | Path) -> "EvalReport":
        doc = json.loads(Path(path).read_text())
        if doc.get("version") != REPORT_VERSION:
            raise ValueError(f"unsupported report version: {doc.get('version')}")
        s = doc["summary"]
        return cls(condition=doc["condition"], episodes=doc["episodes"],
                   wins=doc["wins"], win_rate=doc["win_rate"],
                   matrix=np.array(doc["matrix"], dtype=np.float64),
                   summary=FrequencySummary(s["high"], s["low"], s["average"],
                                            s["sd"]),
                   total_delivered=doc["total_delivered"])


def _nulled_channels(before: ObservationSet, after: ObservationSet):
    """Channels whose delivered content was nulled between two sets."""
    return [
        [i, j] for i, j in channel_list(before.n)
        if before.slots[i][j] is not None and after.slots[i][j] is None
    ]


def evaluate(env, team, cp, episodes: int, seed: int, attack=None,
             condition: str | None = None, comm_log: CommLog | None = None,
             trace_path: str | Path | None = None) -> EvalReport:
    """Greedy-mode evaluation under an optional per-step attack.

    When `trace_path` is given, every step is appended to it as one JSON
    record (episode, t, positions, actions, reward, masks) for debugging.
    """
    if episodes < 1:
        raise ValueError("need at least one evaluation episode")
    rng = np.random.default_rng(seed)
    log = comm_log if comm_log is not None else CommLog()
    n = env.n_agents
    wins = 0
    trace_lines: list[str] = []
    for ep in range(episodes):
        state = env.reset(int(rng.integers(2 ** 31)))
        last_agent_rewards = None
        while True:
            obs = env.observe(state)
            gates = cp.decide(env.cp_features(state, obs), mode="greedy")
            obsset = exchange(ObservationSet(obs), gates, team.encoder,
                              log, ep, state.t)
            masked = []
            if attack is not None:
                attacked = attack.on_step(env, state, obs, obsset, rng, log,
                                          ep, state.t, last_agent_rewards)
                masked = _nulled_channels(obsset, attacked)
                obsset = attacked
            actions = team.act(obsset)
            outcome = env.step(state, actions)
            if trace_path is not None:
                trace_lines.append(json.dumps({
                    "episode": ep,
                    "t": state.t,
                    "positions": env.positions(state).tolist(),
                    "actions": actions.tolist(),
                    "reward": outcome.reward,
                    "masks": masked,
                }))
            last_agent_rewards = outcome.agent_rewards
            if outcome.terminal:
                wins += int(env.is_win(outcome))
                break
            state = outcome.state
    if trace_path is not None:
        Path(trace_path).write_text("\n".join(trace_lines) + "\n")
    matrix = np.zeros((n, n))
    delivered = 0
    for ev in log.events:
        if ev.opened and not ev.masked:
            i, j = ev.channel
            matrix[i, j] += 1
            matrix[j, i] += 1
            delivered += 1
    matrix /= episodes
    name = condition or (attack.name if attack is not None else "clean")
    return EvalReport(condition=name, episodes=episodes, wins=wins,
                      win_rate=wins / episodes, matrix=matrix,
                      summary=frequency_summary(matrix),
                      total_delivered=delivered)


def export_heatmap(matrix: np.ndarray, path: str | Path) -> None:
    """Structured text dump: version, n, then n rows with a null diagonal."""
    matrix = np.asarray(matrix, dtype=np.float64)
    n = matrix.shape[0]
    lines = [f"heatmap v{HEATMAP_VERSION}", str(n)]
    for i in range(n):
        row = [
            _DIAGONAL_SENTINEL if i == j else repr(float(matrix[i, j]))
            for j in range(n)
        ]
        lines.append(" ".join(row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_heatmap(path: str | Path) -> np.ndarray:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != f"heatmap v{HEATMAP_VERSION}":
        raise ValueError("unrecognized heatmap file header")
    n = int(lines[1])
    matrix = np.zeros((n, n))
    for i in range(n):
        cells = lines[2 + i].split()
        for j, cell in enumerate(cells):
            matrix[i, j] = 0.0 if cell == _DIAGONAL_SENTINEL else float(cell)
    return matrix
