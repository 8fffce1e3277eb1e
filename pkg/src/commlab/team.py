"""Target team training and adversarial retraining of the gate policy.

The team policy is a shared per-agent Q-network over (observation +
message slots), trained value-based with a unit-weight decomposition of
the team reward.  The gate policy trains alongside it by policy
gradient, then is retrained under the adversary's masks while the team
policy stays frozen.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .adversary import AdversaryConfig, train_adversary
from .comm import (MESSAGE_DIM, CommDecision, CommLog, CommPolicy, CpEpisode,
                   MaskMatrix, MessageEncoder, ObservationSet, apply_mask,
                   channel_list, episode_credits, exchange, train_cp_step)
from .nets import DenseNetwork, Optimizer, TargetCopy


@dataclass
class TeamConfig:
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
    comm_cost: float = 0.005
    cp_hidden: list[int] = field(default_factory=lambda: [32, 32])
    cp_lr: float = 5e-3
    cp_batch_episodes: int = 8
    # Gates start biased open and messages are free for the first part of
    # training, so the team learns to read messages before the cost
    # starts pruning channels.  The cost then ramps in linearly rather
    # than switching on at once, which gives the team time to re-adapt
    # as redundant channels close.  On tasks where sampled-gate dropout
    # is too noisy for the value learner, a freeze fraction holds every
    # gate deterministically open (no gate training) at the start.
    cp_optimistic_init: float = 2.0
    cp_freeze_fraction: float = 0.0
    cp_warmup_fraction: float = 0.4
    cp_ramp_fraction: float = 0.8
    encoder_seed: int = 7


@dataclass
class RetrainSchedule:
    rounds: int = 3
    adversary_episodes: int = 300
    cp_episodes: int = 300
    p_mask: float = 0.5
    # Off by default: the team policy stays frozen and only the gate
    # policy adapts.  When on, the team's value network keeps training
    # on the masked rollouts as well.
    joint_retrain: bool = False

    def __post_init__(self) -> None:
        if not 0.0 <= self.p_mask <= 1.0:
            raise ValueError("p_mask must lie in [0, 1]")
        if self.rounds < 0:
            raise ValueError("rounds must be non-negative")


class TeamPolicy:
    """Shared Q-network mapping (o_i + message slots) to action values."""

    def __init__(self, env, hidden: list[int] | None = None, seed: int = 0,
                 encoder_seed: int = 7):
        hidden = [64, 64] if hidden is None else hidden
        self.n_agents = env.n_agents
        self.n_actions = env.n_actions
        self.in_dim = env.obs_dim + (env.n_agents - 1) * (MESSAGE_DIM + 1)
        self.net = DenseNetwork([self.in_dim] + hidden + [env.n_actions],
                                seed=seed)
        self.encoder = MessageEncoder(env.obs_dim, seed=encoder_seed)

    def act(self, obsset: ObservationSet, epsilon: float = 0.0,
            rng: np.random.Generator | None = None) -> np.ndarray:
        x = obsset.policy_inputs()
        q = self.net.forward(x)
        actions = q.argmax(axis=1)
        if epsilon > 0:
            if rng is None:
                raise ValueError("exploration needs an rng")
            flip = rng.random(self.n_agents) < epsilon
            randoms = rng.integers(0, self.n_actions, size=self.n_agents)
            actions = np.where(flip, randoms, actions)
        return actions.astype(int)


class _TeamBuffer:
    def __init__(self, capacity: int, n: int, in_dim: int):
        self.capacity = capacity
        self.x = np.zeros((capacity, n, in_dim))
        self.a = np.zeros((capacity, n), dtype=int)
        self.r = np.zeros(capacity)
        self.x_next = np.zeros((capacity, n, in_dim))
        self.done = np.zeros(capacity)
        self.size = 0
        self._ptr = 0

    def add(self, x, a, r, x_next, done) -> None:
        i = self._ptr
        self.x[i], self.a[i], self.r[i] = x, a, r
        self.x_next[i], self.done[i] = x_next, float(done)
        self._ptr = (self._ptr + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator):
        idx = rng.integers(0, self.size, size=batch_size)
        return (self.x[idx], self.a[idx], self.r[idx],
                self.x_next[idx], self.done[idx])


def _team_td_update(team: TeamPolicy, target: TargetCopy, batch,
                    gamma: float, opt: Optimizer) -> float:
    x, a, r, x_next, done = batch
    B, n, D = x.shape
    q = team.net.forward(x.reshape(B * n, D)).reshape(B, n, -1)
    chosen = np.take_along_axis(q, a[..., None], axis=2)[..., 0]
    q_tot = chosen.sum(axis=1)
    qn = target.forward(x_next.reshape(B * n, D)).reshape(B, n, -1)
    y = r + gamma * (1.0 - done) * qn.max(axis=2).sum(axis=1)
    delta = q_tot - y
    if not np.all(np.isfinite(delta)):
        raise FloatingPointError("non-finite team TD error; aborting update")
    gout = np.zeros_like(q)
    np.put_along_axis(gout, a[..., None], (2.0 * delta / B)[:, None, None]
                      * np.ones((B, n, 1)), axis=2)
    grads = team.net.backward(x.reshape(B * n, D), gout.reshape(B * n, -1))
    opt.step(team.net, grads)
    return float(np.mean(delta ** 2))


def _fixed_decision(n: int, open_: bool) -> CommDecision:
    return CommDecision(n, {c: open_ for c in channel_list(n)})


@dataclass
class TeamCurve:
    episode: list[int] = field(default_factory=list)
    episode_return: list[float] = field(default_factory=list)
    win: list[int] = field(default_factory=list)

    def export(self, path) -> None:
        lines = ["episode,return,win"]
        for e, r, w in zip(self.episode, self.episode_return, self.win):
            lines.append(f"{e},{r},{w}")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


def train_team(env, episodes: int, seed: int,
               cfg: TeamConfig | None = None, comm_mode: str = "learned",
               ) -> tuple[TeamPolicy, CommPolicy, TeamCurve]:
    """Jointly train the team Q-network and the gate policy.

    comm_mode: 'learned' trains the gate policy alongside the team,
    'full' forces every channel open, 'none' disables communication.
    """
    if comm_mode not in ("learned", "full", "none"):
        raise ValueError(f"unknown comm mode: {comm_mode}")
    cfg = cfg or TeamConfig()
    rng = np.random.default_rng(seed)
    team = TeamPolicy(env, hidden=cfg.hidden, seed=int(rng.integers(2 ** 31)),
                      encoder_seed=cfg.encoder_seed)
    cp = CommPolicy(env.cp_feature_dim, hidden=cfg.cp_hidden,
                    seed=int(rng.integers(2 ** 31)))
    cp.net.biases[-1] += cfg.cp_optimistic_init
    target = TargetCopy(team.net)
    opt = Optimizer(lr=cfg.lr, mode="adam")
    cp_opt = Optimizer(lr=cfg.cp_lr, mode="sgd")
    buffer = _TeamBuffer(cfg.buffer_capacity, env.n_agents, team.in_dim)
    curve = TeamCurve()
    cp_batch: list[CpEpisode] = []
    grad_steps = 0
    anneal = max(1, int(episodes * cfg.eps_anneal_fraction))
    n = env.n_agents

    freeze_until = int(cfg.cp_freeze_fraction * episodes)

    for ep in range(episodes):
        cp_active = comm_mode == "learned" and ep >= freeze_until
        eps = cfg.eps_end + (cfg.eps_start - cfg.eps_end) * max(
            0.0, 1.0 - ep / anneal)
        state = env.reset(int(rng.integers(2 ** 31)))
        obs = env.observe(state)
        ep_return = 0.0
        messages = 0
        cp_inputs, cp_gates, cp_rewards = [], [], []
        t = 0
        x = None
        win = 0
        while True:
            feats = env.cp_features(state, obs)
            if cp_active:
                decision = cp.decide(feats, mode="sample", rng=rng)
                pair = np.stack([np.concatenate([feats[i], feats[j]])
                                 for i, j in channel_list(n)])
                cp_inputs.append(pair)
                cp_gates.append([float(decision.gates[c])
                                 for c in channel_list(n)])
            else:
                # 'full', 'none', or a frozen gate policy (held open)
                decision = _fixed_decision(n, comm_mode != "none")
            messages += sum(decision.gates.values())
            obsset = exchange(ObservationSet(obs), decision, team.encoder)
            x = obsset.policy_inputs()
            actions = team.act(obsset, epsilon=eps, rng=rng)
            outcome = env.step(state, actions)
            next_obs = env.observe(outcome.state)
            feats_next = env.cp_features(outcome.state, next_obs)
            decision_next = (cp.decide(feats_next, mode="greedy") if cp_active
                             else _fixed_decision(n, comm_mode != "none"))
            x_next = exchange(ObservationSet(next_obs), decision_next,
                              team.encoder).policy_inputs()
            buffer.add(x, actions, outcome.reward, x_next, outcome.terminal)
            ep_return += outcome.reward
            cp_rewards.append(outcome.reward)
            t += 1
            if buffer.size >= cfg.batch_size and t % cfg.update_every == 0:
                _team_td_update(team, target, buffer.sample(cfg.batch_size, rng),
                                cfg.gamma, opt)
                grad_steps += 1
                target.tick()
                if grad_steps % cfg.target_sync == 0:
                    target.sync(team.net)
            if outcome.terminal:
                win = int(env.is_win(outcome))
                break
            state = outcome.state
            obs = next_obs
        if cp_active and cp_inputs:
            cp_batch.append(CpEpisode(
                inputs=np.concatenate(cp_inputs),
                gates=np.array(cp_gates).ravel(),
                step_returns=episode_credits(cp_rewards, cfg.gamma,
                                             len(channel_list(n))),
                messages_sent=messages,
            ))
            if len(cp_batch) >= cfg.cp_batch_episodes:
                lo = cfg.cp_warmup_fraction * episodes
                hi = max(lo + 1.0, cfg.cp_ramp_fraction * episodes)
                ramp = min(1.0, max(0.0, (ep - lo) / (hi - lo)))
                train_cp_step(cp, cp_batch, ramp * cfg.comm_cost, cp_opt)
                cp_batch = []
        curve.episode.append(ep)
        curve.episode_return.append(ep_return)
        curve.win.append(win)
    return team, cp, curve


@dataclass
class RoundMetrics:
    round_index: int
    win_clean: float
    win_masked: float
    frequency_sd: float

    @staticmethod
    def export(rows: list["RoundMetrics"], path) -> None:
        lines = ["round,win_clean,win_masked,frequency_sd"]
        for r in rows:
            lines.append(f"{r.round_index},{r.win_clean},{r.win_masked},"
                         f"{r.frequency_sd}")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


def retrain_cp(env, team: TeamPolicy, cp: CommPolicy,
               adv_cfg: AdversaryConfig, schedule: RetrainSchedule,
               seed: int, cfg: TeamConfig | None = None,
               metrics_episodes: int = 0,
               ) -> tuple[CommPolicy, list[RoundMetrics], int]:
    """Adversarially retrain the gate policy; the team policy is frozen
    unless the schedule enables joint retraining.

    Per round the adversary is refreshed against the current gate
    policy, then the gate policy trains while the adversary's greedy
    masks are applied with probability p_mask per step.  Returns the
    retrained policy, per-round metrics (when metrics_episodes > 0),
    and the number of training episodes consumed.
    """
    cfg = cfg or TeamConfig()
    rng = np.random.default_rng(seed)
    cp_opt = Optimizer(lr=cfg.cp_lr, mode="sgd")
    n = env.n_agents
    frozen_digest = team.net.digest()
    consumed = 0
    metrics: list[RoundMetrics] = []
    team_opt = team_target = team_buffer = None
    if schedule.joint_retrain:
        team_opt = Optimizer(lr=cfg.lr, mode="adam")
        team_target = TargetCopy(team.net)
        team_buffer = _TeamBuffer(cfg.buffer_capacity, n, team.in_dim)

    for rnd in range(schedule.rounds):
        adversary, _, _ = train_adversary(
            env, cp, team, adv_cfg, schedule.adversary_episodes,
            seed=int(rng.integers(2 ** 31)))
        consumed += schedule.adversary_episodes

        cp_batch: list[CpEpisode] = []
        for _ in range(schedule.cp_episodes):
            state = env.reset(int(rng.integers(2 ** 31)))
            obs = env.observe(state)
            messages = 0
            cp_inputs, cp_gates, cp_rewards = [], [], []
            t = 0
            while True:
                feats = env.cp_features(state, obs)
                decision = cp.decide(feats, mode="sample", rng=rng)
                pair = np.stack([np.concatenate([feats[i], feats[j]])
                                 for i, j in channel_list(n)])
                cp_inputs.append(pair)
                cp_gates.append([float(decision.gates[c])
                                 for c in channel_list(n)])
                messages += sum(decision.gates.values())
                obsset = exchange(ObservationSet(obs), decision, team.encoder)
                if schedule.p_mask > 0 and rng.random() < schedule.p_mask:
                    from .adversary import adversary_features
                    h = adversary_features(env, state, obs, adv_cfg)
                    mask, _ = adversary.select(h, epsilon=0.0)
                    obsset = apply_mask(obsset, mask)
                actions = team.act(obsset, epsilon=0.0, rng=rng)
                outcome = env.step(state, actions)
                cp_rewards.append(outcome.reward)
                if schedule.joint_retrain:
                    next_obs = env.observe(outcome.state)
                    next_feats = env.cp_features(outcome.state, next_obs)
                    next_dec = cp.decide(next_feats, mode="greedy")
                    x_next = exchange(ObservationSet(next_obs), next_dec,
                                      team.encoder).policy_inputs()
                    team_buffer.add(obsset.policy_inputs(), actions,
                                    outcome.reward, x_next, outcome.terminal)
                    if team_buffer.size >= cfg.batch_size:
                        _team_td_update(team, team_target,
                                        team_buffer.sample(cfg.batch_size, rng),
                                        cfg.gamma, team_opt)
                        team_target.tick()
                        if team_opt.step_count % cfg.target_sync == 0:
                            team_target.sync(team.net)
                t += 1
                if outcome.terminal:
                    break
                state = outcome.state
                obs = env.observe(state)
            cp_batch.append(CpEpisode(
                inputs=np.concatenate(cp_inputs),
                gates=np.array(cp_gates).ravel(),
                step_returns=episode_credits(cp_rewards, cfg.gamma,
                                             len(channel_list(n))),
                messages_sent=messages,
            ))
            if len(cp_batch) >= cfg.cp_batch_episodes:
                train_cp_step(cp, cp_batch, cfg.comm_cost, cp_opt)
                cp_batch = []
        consumed += schedule.cp_episodes

        if metrics_episodes > 0:
            from .evaluation import evaluate
            from .attacks import AdversaryMasker
            clean = evaluate(env, team, cp, metrics_episodes,
                             seed=int(rng.integers(2 ** 31)))
            masked = evaluate(env, team, cp, metrics_episodes,
                              seed=int(rng.integers(2 ** 31)),
                              attack=AdversaryMasker(adversary, adv_cfg,
                                                     budget=1))
            metrics.append(RoundMetrics(rnd, clean.win_rate, masked.win_rate,
                                        clean.summary.sd))

    if not schedule.joint_retrain:
        assert team.net.digest() == frozen_digest, \
            "team policy mutated in retraining"
    return cp, metrics, consumed
