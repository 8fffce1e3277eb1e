"""Channel-masking adversary.

One masking agent per channel, all sharing a single Q-network over the
pair features [h_i, h_j], combined by a critic whose non-negative
per-channel weights keep the joint argmax equal to the vector of
per-channel argmaxes.  The adversary's reward is the reciprocal of a
weighted sum of the (shifted) team reward and the mask count, so it is
paid for hurting the team with as few masked channels as possible.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import graphfeat
from .comm import MaskMatrix, channel_list, exchange
from .nets import DenseNetwork, Optimizer, TargetCopy


@dataclass
class AdversaryConfig:
    w1: float = 1.0
    w2: float = 0.1
    xi: float = 1e-3
    gamma: float = 0.95
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_anneal_fraction: float = 0.5
    buffer_capacity: int = 50_000
    batch_size: int = 64
    aggregation_iterations: int = 2
    embed_dim: int = 8
    use_embeddings: bool = True
    mixer: str = "linear"            # 'linear' or 'vdn'
    hidden: list[int] = field(default_factory=lambda: [64, 64])
    lr: float = 5e-4
    target_sync: int = 200
    update_every: int = 1

    def __post_init__(self) -> None:
        if self.xi <= 0:
            raise ValueError("xi must be positive")
        if self.w1 < 0 or self.w2 < 0 or self.w1 + self.w2 <= 0:
            raise ValueError("w1 and w2 must be non-negative and not both zero")
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if self.mixer not in ("linear", "vdn"):
            raise ValueError(f"unknown mixer mode: {self.mixer}")


def count_masks(mask: MaskMatrix) -> int:
    """Number of masked channels in a joint mask action."""
    return mask.count()


def adversary_reward(shifted_team_reward: float, mask_count: int,
                     cfg: AdversaryConfig) -> float:
    """Per-step reciprocal reward: high when the team suffers cheaply."""
    if shifted_team_reward < 0:
        raise ValueError(
            "shifted team reward is negative; check the environment's "
            "reward_min shift"
        )
    return 1.0 / (cfg.w1 * shifted_team_reward + cfg.w2 * mask_count + cfg.xi)


def adversary_features(env, state, obs: list[np.ndarray],
                       cfg: AdversaryConfig) -> list[np.ndarray]:
    """Per-agent feature vectors h_i = o_i (+ aggregated embedding)."""
    if not cfg.use_embeddings:
        return [np.asarray(o, dtype=np.float64) for o in obs]
    graph = graphfeat.build_graph(
        env.vertex_attributes(state), env.distances(state),
        radius=env.visibility_radius,
    )
    table = graphfeat.init_embeddings(graph, dim=cfg.embed_dim)
    table = graphfeat.aggregate(graph, table, cfg.aggregation_iterations)
    return graphfeat.features(obs, table)


def pair_inputs(features: list[np.ndarray]) -> np.ndarray:
    """(C, 2d) matrix of [h_i, h_j] rows in channel order."""
    return np.stack([
        np.concatenate([features[i], features[j]])
        for i, j in channel_list(len(features))
    ])


class MaskingPolicy:
    """Shared per-channel Q-network over pair features, actions {keep, mask}."""

    def __init__(self, feature_dim: int, hidden: list[int] | None = None,
                 seed: int = 0):
        hidden = [64, 64] if hidden is None else hidden
        self.feature_dim = feature_dim
        self.net = DenseNetwork([2 * feature_dim] + hidden + [2], seed=seed)

    def q_values(self, features: list[np.ndarray]) -> np.ndarray:
        return self.net.forward(pair_inputs(features))

    def select(self, features: list[np.ndarray], epsilon: float = 0.0,
               rng: np.random.Generator | None = None,
               ) -> tuple[MaskMatrix, np.ndarray]:
        """Epsilon-greedy joint mask; greedy breaks ties toward keeping."""
        n = len(features)
        chans = channel_list(n)
        q = self.q_values(features)
        # argmax with tie -> action 0 (keep)
        actions = (q[:, 1] > q[:, 0]).astype(int)
        if epsilon > 0:
            if rng is None:
                raise ValueError("exploration needs an rng")
            flip = rng.random(len(chans)) < epsilon
            randoms = rng.integers(0, 2, size=len(chans))
            actions = np.where(flip, randoms, actions)
        mask = MaskMatrix(n, {c: int(a) for c, a in zip(chans, actions)})
        chosen_q = q[np.arange(len(chans)), actions]
        return mask, chosen_q

    def select_budgeted(self, features: list[np.ndarray],
                        budget: int) -> MaskMatrix:
        """Greedy mask restricted to the `budget` highest mask advantages."""
        n = len(features)
        chans = channel_list(n)
        q = self.q_values(features)
        advantage = q[:, 1] - q[:, 0]
        order = np.argsort(-advantage, kind="stable")[:budget]
        return MaskMatrix.from_channels(n, [chans[k] for k in order])


class MixingCritic:
    """Non-negative linear combiner of per-channel chosen-action Q values."""

    def __init__(self, n_channels: int, mode: str = "linear", seed: int = 0):
        self.n_channels = n_channels
        self.mode = mode
        if mode == "vdn":
            self.w = np.ones(n_channels)
            self.b = np.zeros(1)
        else:
            rng = np.random.default_rng(seed)
            self.w = rng.uniform(0.0, 1.0, size=n_channels)
            self.b = np.zeros(1)

    def parameters(self) -> list[np.ndarray]:
        return [self.w, self.b]

    def mix(self, chosen_q: np.ndarray) -> float | np.ndarray:
        chosen_q = np.asarray(chosen_q, dtype=np.float64)
        if chosen_q.shape[-1] != self.n_channels:
            raise ValueError(
                f"expected {self.n_channels} per-channel values, "
                f"got {chosen_q.shape[-1]}"
            )
        return chosen_q @ self.w + self.b[0]

    def project(self) -> None:
        np.maximum(self.w, 0.0, out=self.w)

    def copy(self) -> "MixingCritic":
        c = MixingCritic.__new__(MixingCritic)
        c.n_channels = self.n_channels
        c.mode = self.mode
        c.w = self.w.copy()
        c.b = self.b.copy()
        return c


class ReplayBuffer:
    """Flat transition store for the adversary's TD updates."""

    def __init__(self, capacity: int, n_channels: int, pair_dim: int):
        self.capacity = capacity
        self.h = np.zeros((capacity, n_channels, pair_dim))
        self.a = np.zeros((capacity, n_channels), dtype=int)
        self.r = np.zeros(capacity)
        self.h_next = np.zeros((capacity, n_channels, pair_dim))
        self.done = np.zeros(capacity)
        self.size = 0
        self._ptr = 0

    def add(self, h, a, r, h_next, done) -> None:
        i = self._ptr
        self.h[i] = h
        self.a[i] = a
        self.r[i] = r
        self.h_next[i] = h_next
        self.done[i] = float(done)
        self._ptr = (self._ptr + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator):
        idx = rng.integers(0, self.size, size=batch_size)
        return (self.h[idx], self.a[idx], self.r[idx],
                self.h_next[idx], self.done[idx])


def td_update(policy: MaskingPolicy, critic: MixingCritic,
              policy_target: TargetCopy, critic_target: MixingCritic,
              batch, gamma: float,
              policy_opt: Optimizer, critic_opt: Optimizer | None) -> float:
    """One squared-TD-error step on a transition batch.

    The bootstrapped maximum is taken channel-wise, which equals the
    joint maximum because the mixer weights are non-negative.  Mixer
    weights are re-projected to >= 0 after the step.
    """
    h, a, r, h_next, done = batch
    B, C, D = h.shape
    q_all = policy.net.forward(h.reshape(B * C, D)).reshape(B, C, 2)
    chosen = np.take_along_axis(q_all, a[..., None], axis=2)[..., 0]
    q_tot = chosen @ critic.w + critic.b[0]

    qn = policy_target.forward(h_next.reshape(B * C, D)).reshape(B, C, 2)
    qn_max = qn.max(axis=2)
    y = r + gamma * (1.0 - done) * (qn_max @ critic_target.w + critic_target.b[0])

    delta = q_tot - y
    if not np.all(np.isfinite(delta)):
        raise FloatingPointError("non-finite TD error; aborting update")
    loss = float(np.mean(delta ** 2))
    d_qtot = 2.0 * delta / B

    gout = np.zeros((B, C, 2))
    np.put_along_axis(gout, a[..., None], (d_qtot[:, None] * critic.w)[..., None],
                      axis=2)
    grads = policy.net.backward(h.reshape(B * C, D), gout.reshape(B * C, 2))
    policy_opt.step(policy.net, grads)

    if critic.mode == "linear" and critic_opt is not None:
        dw = d_qtot @ chosen
        db = np.array([d_qtot.sum()])
        critic_opt.step(critic, [dw, db])
        critic.project()
        assert np.all(critic.w >= 0.0)
    return loss


@dataclass
class TrainingCurve:
    episode: list[int] = field(default_factory=list)
    mean_reward: list[float] = field(default_factory=list)
    mean_loss: list[float] = field(default_factory=list)
    mean_masks: list[float] = field(default_factory=list)

    def export(self, path) -> None:
        lines = ["episode,mean_adversary_reward,mean_loss,mean_masks"]
        for e, r, l, m in zip(self.episode, self.mean_reward,
                              self.mean_loss, self.mean_masks):
            lines.append(f"{e},{r},{l},{m}")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


def train_adversary(env, cp, team, cfg: AdversaryConfig, episodes: int,
                    seed: int,
                    policy: MaskingPolicy | None = None,
                    critic: MixingCritic | None = None,
                    ) -> tuple[MaskingPolicy, MixingCritic, TrainingCurve]:
    """Train the masking agents against a frozen team and gate policy.

    Existing policy/critic instances may be passed in to continue
    training (used when the adversary is refreshed between retraining
    rounds).
    """
    rng = np.random.default_rng(seed)
    n = env.n_agents
    n_channels = len(channel_list(n))
    feat_dim = env.obs_dim + (cfg.embed_dim if cfg.use_embeddings else 0)
    if policy is None:
        policy = MaskingPolicy(feat_dim, hidden=cfg.hidden,
                               seed=int(rng.integers(2 ** 31)))
    if critic is None:
        critic = MixingCritic(n_channels, mode=cfg.mixer,
                              seed=int(rng.integers(2 ** 31)))
    policy_target = TargetCopy(policy.net)
    critic_target = critic.copy()
    policy_opt = Optimizer(lr=cfg.lr, mode="adam")
    critic_opt = Optimizer(lr=cfg.lr, mode="adam") if critic.mode == "linear" else None
    buffer = ReplayBuffer(cfg.buffer_capacity, n_channels, 2 * feat_dim)
    curve = TrainingCurve()
    grad_steps = 0
    anneal = max(1, int(episodes * cfg.eps_anneal_fraction))

    for ep in range(episodes):
        eps = cfg.eps_end + (cfg.eps_start - cfg.eps_end) * max(
            0.0, 1.0 - ep / anneal)
        state = env.reset(int(rng.integers(2 ** 31)))
        obs = env.observe(state)
        h = adversary_features(env, state, obs, cfg)
        h_pairs = pair_inputs(h)
        ep_rewards, ep_losses, ep_masks = [], [], []
        step_idx = 0
        while True:
            mask, _ = policy.select(h, epsilon=eps, rng=rng)
            r_m = count_masks(mask)
            gates = cp.decide(env.cp_features(state, obs), mode="greedy")
            obsset = exchange_and_mask(env, obs, gates, mask, team.encoder)
            actions = team.act(obsset, epsilon=0.0, rng=rng)
            outcome = env.step(state, actions)
            shifted = outcome.reward - env.reward_min
            r_hat = adversary_reward(shifted, r_m, cfg)
            next_obs = env.observe(outcome.state)
            next_h = adversary_features(env, outcome.state, next_obs, cfg)
            next_pairs = pair_inputs(next_h)
            a_vec = np.array([mask.bits[c] for c in channel_list(n)])
            buffer.add(h_pairs, a_vec, r_hat, next_pairs, outcome.terminal)
            ep_rewards.append(r_hat)
            ep_masks.append(r_m)

            step_idx += 1
            if buffer.size >= cfg.batch_size and step_idx % cfg.update_every == 0:
                batch = buffer.sample(cfg.batch_size, rng)
                loss = td_update(policy, critic, policy_target, critic_target,
                                 batch, cfg.gamma, policy_opt, critic_opt)
                ep_losses.append(loss)
                grad_steps += 1
                policy_target.tick()
                if grad_steps % cfg.target_sync == 0:
                    policy_target.sync(policy.net)
                    critic_target = critic.copy()

            if outcome.terminal:
                break
            state = outcome.state
            obs = next_obs
            h = next_h
            h_pairs = next_pairs
        curve.episode.append(ep)
        curve.mean_reward.append(float(np.mean(ep_rewards)))
        curve.mean_loss.append(float(np.mean(ep_losses)) if ep_losses else 0.0)
        curve.mean_masks.append(float(np.mean(ep_masks)))
    return policy, critic, curve


def exchange_and_mask(env, obs, gates, mask, encoder):
    """Open-gate exchange followed by the adversary's masking."""
    from .comm import ObservationSet, apply_mask
    obsset = ObservationSet(obs)
    obsset = exchange(obsset, gates, encoder)
    if mask is not None:
        obsset = apply_mask(obsset, mask)
    return obsset
