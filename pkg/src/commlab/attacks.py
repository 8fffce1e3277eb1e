"""Evaluation-time attacks and masking baselines.

Two message attacks (a learned adaptive attacker and a random-message
heuristic) and two masker baselines (uniform random and reward-based).
Attacks only ever touch message content or mask matrices, never the
environment state.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import graphfeat
from .adversary import (AdversaryConfig, MaskingPolicy, adversary_features,
                        pair_inputs)
from .comm import (MESSAGE_DIM, MaskMatrix, ObservationSet, apply_mask,
                   channel_list, exchange)
from .nets import DenseNetwork, Optimizer, TargetCopy


@dataclass
class AttackBudget:
    channels_per_step: int = 1
    codebook_size: int = 16

    def __post_init__(self) -> None:
        if self.channels_per_step < 1:
            raise ValueError("budget must attack at least one channel")
        if self.codebook_size < 1:
            raise ValueError("codebook must hold at least one vector")


def heuristic_attack(obsset: ObservationSet, budget: AttackBudget,
                     rng: np.random.Generator) -> ObservationSet:
    """Replace up to budget-many open channels with uniform random messages."""
    n = obsset.n
    open_channels = [
        (i, j) for i, j in channel_list(n)
        if obsset.slots[i][j] is not None or obsset.slots[j][i] is not None
    ]
    if not open_channels:
        return obsset.copy()
    k = min(budget.channels_per_step, len(open_channels))
    picked = rng.choice(len(open_channels), size=k, replace=False)
    out = obsset.copy()
    for idx in picked:
        i, j = open_channels[idx]
        if out.slots[i][j] is not None:
            out.slots[i][j] = rng.uniform(-1.0, 1.0, size=MESSAGE_DIM)
        if out.slots[j][i] is not None:
            out.slots[j][i] = rng.uniform(-1.0, 1.0, size=MESSAGE_DIM)
    return out


def random_masker(n: int, rng: np.random.Generator) -> MaskMatrix:
    """Mask exactly one uniformly chosen channel."""
    chans = channel_list(n)
    return MaskMatrix.from_channels(n, [chans[rng.integers(len(chans))]])


def reward_based_masker(agent_rewards: np.ndarray, graph: graphfeat.AgentGraph,
                        rng: np.random.Generator) -> MaskMatrix:
    """Mask the channel between the top-reward agent and a random neighbor.

    Reward ties go to the lowest agent index; an isolated top agent
    falls back to the uniform random masker.
    """
    top = int(np.argmax(agent_rewards))
    neighbors = graph.neighbors(top)
    if not neighbors:
        return random_masker(graph.n, rng)
    other = neighbors[rng.integers(len(neighbors))]
    channel = (min(top, other), max(top, other))
    return MaskMatrix.from_channels(graph.n, [channel])


@dataclass
class AttackConfig:
    hidden: list[int] = field(default_factory=lambda: [64, 64])
    lr: float = 5e-4
    gamma: float = 0.95
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_anneal_fraction: float = 0.5
    buffer_capacity: int = 50_000
    batch_size: int = 64
    target_sync: int = 200
    update_every: int = 1
    codebook_refresh: int = 0    # 0 disables codebook resampling
    features: AdversaryConfig = field(default_factory=AdversaryConfig)


class AttackerPolicy:
    """Value network choosing a (channel, codebook vector) pair per step."""

    def __init__(self, env, budget: AttackBudget, cfg: AttackConfig,
                 seed: int = 0):
        self.n_agents = env.n_agents
        self.n_channels = len(channel_list(env.n_agents))
        self.codebook_size = budget.codebook_size
        feat_dim = env.obs_dim + (cfg.features.embed_dim
                                  if cfg.features.use_embeddings else 0)
        self.in_dim = env.n_agents * feat_dim
        rng = np.random.default_rng(seed)
        self.net = DenseNetwork(
            [self.in_dim] + cfg.hidden + [self.n_channels * self.codebook_size],
            seed=int(rng.integers(2 ** 31)))
        self.codebook = rng.uniform(-1.0, 1.0,
                                    size=(budget.codebook_size, MESSAGE_DIM))
        self.value_trace = np.zeros(budget.codebook_size)
        self.usage = np.zeros(budget.codebook_size)

    def q_values(self, features: list[np.ndarray]) -> np.ndarray:
        x = np.concatenate(features)
        return self.net.forward(x)

    def select(self, features: list[np.ndarray], epsilon: float = 0.0,
               rng: np.random.Generator | None = None) -> int:
        q = self.q_values(features)
        if epsilon > 0:
            if rng is None:
                raise ValueError("exploration needs an rng")
            if rng.random() < epsilon:
                return int(rng.integers(q.size))
        return int(np.argmax(q))

    def decode(self, action: int) -> tuple[tuple[int, int], int]:
        channel_idx, vector_idx = divmod(action, self.codebook_size)
        return channel_list(self.n_agents)[channel_idx], vector_idx

    def perturb(self, obsset: ObservationSet, action: int) -> ObservationSet:
        """Overwrite both endpoints of the chosen channel if it is open."""
        (i, j), m = self.decode(action)
        out = obsset.copy()
        vec = self.codebook[m]
        if out.slots[i][j] is not None:
            out.slots[i][j] = vec.copy()
        if out.slots[j][i] is not None:
            out.slots[j][i] = vec.copy()
        return out

    def project_codebook(self) -> None:
        np.clip(self.codebook, -1.0, 1.0, out=self.codebook)


def train_learned_attack(env, team, cp, budget: AttackBudget, episodes: int,
                         seed: int, cfg: AttackConfig | None = None,
                         ) -> AttackerPolicy:
    """Value-based training of the adaptive message attacker.

    The victim (team policy and gate policy) is frozen; the attacker is
    rewarded by the shortfall of the team reward from its per-step
    maximum.
    """
    cfg = cfg or AttackConfig()
    rng = np.random.default_rng(seed)
    attacker = AttackerPolicy(env, budget, cfg, seed=int(rng.integers(2 ** 31)))
    target = TargetCopy(attacker.net)
    opt = Optimizer(lr=cfg.lr, mode="adam")
    cap = cfg.buffer_capacity
    xs = np.zeros((cap, attacker.in_dim))
    acts = np.zeros(cap, dtype=int)
    rews = np.zeros(cap)
    xs_next = np.zeros((cap, attacker.in_dim))
    dones = np.zeros(cap)
    size, ptr = 0, 0
    grad_steps = 0
    anneal = max(1, int(episodes * cfg.eps_anneal_fraction))

    for ep in range(episodes):
        eps = cfg.eps_end + (cfg.eps_start - cfg.eps_end) * max(
            0.0, 1.0 - ep / anneal)
        state = env.reset(int(rng.integers(2 ** 31)))
        obs = env.observe(state)
        h = adversary_features(env, state, obs, cfg.features)
        x = np.concatenate(h)
        step_idx = 0
        while True:
            action = attacker.select(h, epsilon=eps, rng=rng)
            gates = cp.decide(env.cp_features(state, obs), mode="greedy")
            obsset = exchange(ObservationSet(obs), gates, team.encoder)
            obsset = attacker.perturb(obsset, action)
            actions = team.act(obsset, epsilon=0.0, rng=rng)
            outcome = env.step(state, actions)
            r_att = env.reward_max - outcome.reward
            _, m = attacker.decode(action)
            attacker.usage[m] += 1
            attacker.value_trace[m] += 0.05 * (r_att - attacker.value_trace[m])
            next_obs = env.observe(outcome.state)
            next_h = adversary_features(env, outcome.state, next_obs,
                                        cfg.features)
            x_next = np.concatenate(next_h)
            xs[ptr], acts[ptr], rews[ptr] = x, action, r_att
            xs_next[ptr], dones[ptr] = x_next, float(outcome.terminal)
            ptr = (ptr + 1) % cap
            size = min(size + 1, cap)
            step_idx += 1
            if size >= cfg.batch_size and step_idx % cfg.update_every == 0:
                idx = rng.integers(0, size, size=cfg.batch_size)
                q = attacker.net.forward(xs[idx])
                chosen = q[np.arange(cfg.batch_size), acts[idx]]
                y = rews[idx] + cfg.gamma * (1.0 - dones[idx]) * target.forward(
                    xs_next[idx]).max(axis=1)
                delta = chosen - y
                gout = np.zeros_like(q)
                gout[np.arange(cfg.batch_size), acts[idx]] = (
                    2.0 * delta / cfg.batch_size)
                opt.step(attacker.net, attacker.net.backward(xs[idx], gout))
                attacker.project_codebook()
                grad_steps += 1
                target.tick()
                if grad_steps % cfg.target_sync == 0:
                    target.sync(attacker.net)
                if (cfg.codebook_refresh
                        and grad_steps % cfg.codebook_refresh == 0):
                    used = np.flatnonzero(attacker.usage > 0)
                    if used.size:
                        worst = used[np.argmin(attacker.value_trace[used])]
                        attacker.codebook[worst] = rng.uniform(
                            -1.0, 1.0, size=MESSAGE_DIM)
                        attacker.value_trace[worst] = 0.0
                        attacker.usage[worst] = 0.0
            if outcome.terminal:
                break
            state = outcome.state
            obs = next_obs
            h = next_h
            x = x_next
    return attacker


# ---------------------------------------------------------------------------
# Step adapters used by the evaluation loop.  Each receives the current
# environment context plus the exchanged observation set and returns the
# (possibly perturbed) observation set.
# ---------------------------------------------------------------------------

class StepAttack:
    name = "attack"

    def on_step(self, env, state, obs, obsset, rng, log, episode, t,
                last_agent_rewards) -> ObservationSet:
        raise NotImplementedError


class HeuristicAttack(StepAttack):
    name = "heuristic"

    def __init__(self, budget: AttackBudget | None = None):
        self.budget = budget or AttackBudget()

    def on_step(self, env, state, obs, obsset, rng, log, episode, t,
                last_agent_rewards):
        return heuristic_attack(obsset, self.budget, rng)


class LearnedAttack(StepAttack):
    name = "learned"

    def __init__(self, attacker: AttackerPolicy, cfg: AttackConfig | None = None):
        self.attacker = attacker
        self.cfg = cfg or AttackConfig()

    def on_step(self, env, state, obs, obsset, rng, log, episode, t,
                last_agent_rewards):
        h = adversary_features(env, state, obs, self.cfg.features)
        return self.attacker.perturb(obsset, self.attacker.select(h))


class RandomMasker(StepAttack):
    name = "random_masker"

    def on_step(self, env, state, obs, obsset, rng, log, episode, t,
                last_agent_rewards):
        mask = random_masker(env.n_agents, rng)
        return apply_mask(obsset, mask, log, episode, t)


class RewardBasedMasker(StepAttack):
    name = "reward_masker"

    def on_step(self, env, state, obs, obsset, rng, log, episode, t,
                last_agent_rewards):
        graph = graphfeat.build_graph(env.vertex_attributes(state),
                                      env.distances(state),
                                      radius=env.visibility_radius)
        rewards = (last_agent_rewards if last_agent_rewards is not None
                   else np.zeros(env.n_agents))
        mask = reward_based_masker(rewards, graph, rng)
        return apply_mask(obsset, mask, log, episode, t)


class AdversaryMasker(StepAttack):
    name = "adversary_masker"

    def __init__(self, policy: MaskingPolicy, cfg: AdversaryConfig,
                 budget: int = 1):
        self.policy = policy
        self.cfg = cfg
        self.budget = budget

    def on_step(self, env, state, obs, obsset, rng, log, episode, t,
                last_agent_rewards):
        h = adversary_features(env, state, obs, self.cfg)
        mask = self.policy.select_budgeted(h, self.budget)
        return apply_mask(obsset, mask, log, episode, t)
