"""Channelized message layer.

A channel is an unordered agent pair (i, j) with i < j; n agents give
n(n-1)/2 channels.  Messages are fixed linear encodings of the sender's
observation, squashed to [-1, 1].  A gated communication policy decides
per channel and step whether the pair exchanges messages, and a mask
matrix (from an adversary or a masker baseline) can null delivered
messages at both endpoints.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nets import DenseNetwork, Optimizer

MESSAGE_DIM = 8

Channel = tuple[int, int]


def channel_list(n: int) -> list[Channel]:
    """All channels (i, j), i < j, in lexicographic order."""
    if n < 2:
        raise ValueError("need at least 2 agents for a channel set")
    return [(i, j) for i in range(n - 1) for j in range(i + 1, n)]


def channel_count(n: int) -> int:
    return n * (n - 1) // 2


@dataclass
class MaskMatrix:
    """Binary mask action per channel: 1 closes the channel."""

    n: int
    bits: dict[Channel, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        chans = channel_list(self.n)
        full = {c: int(self.bits.get(c, 0)) for c in chans}
        if set(self.bits) - set(chans):
            raise ValueError("mask defined outside the channel set")
        if any(v not in (0, 1) for v in full.values()):
            raise ValueError("mask bits must be 0 or 1")
        self.bits = full

    def count(self) -> int:
        return sum(self.bits.values())

    @classmethod
    def zeros(cls, n: int) -> "MaskMatrix":
        return cls(n)

    @classmethod
    def from_channels(cls, n: int, masked: list[Channel]) -> "MaskMatrix":
        return cls(n, {c: 1 for c in masked})


@dataclass
class CommDecision:
    """Per-channel boolean gate produced by the communication policy."""

    n: int
    gates: dict[Channel, bool]

    def __post_init__(self) -> None:
        if set(self.gates) != set(channel_list(self.n)):
            raise ValueError("decision must cover exactly the channel set")


class ObservationSet:
    """Per-agent raw observations plus per-channel message slots.

    ``slots[i][j]`` is the content agent i received about agent j
    (None when the channel was closed or masked).  The masked-flag bit a
    policy sees is derived: 1 iff the slot is None.
    """

    def __init__(self, obs: list[np.ndarray]):
        self.obs = [np.asarray(o, dtype=np.float64) for o in obs]
        self.n = len(obs)
        self.slots: list[dict[int, np.ndarray | None]] = [
            {j: None for j in range(self.n) if j != i} for i in range(self.n)
        ]

    def copy(self) -> "ObservationSet":
        out = ObservationSet([o.copy() for o in self.obs])
        for i in range(self.n):
            for j, content in self.slots[i].items():
                out.slots[i][j] = None if content is None else content.copy()
        return out

    def policy_input(self, i: int) -> np.ndarray:
        """Observation of agent i concatenated with its message slots.

        Slots are ordered by partner index; each contributes its content
        (zeros when null) plus one null-flag bit.
        """
        parts = [self.obs[i]]
        for j in sorted(self.slots[i]):
            content = self.slots[i][j]
            if content is None:
                parts.append(np.zeros(MESSAGE_DIM))
                parts.append(np.ones(1))
            else:
                parts.append(content)
                parts.append(np.zeros(1))
        return np.concatenate(parts)

    def policy_inputs(self) -> np.ndarray:
        return np.stack([self.policy_input(i) for i in range(self.n)])


@dataclass
class CommEvent:
    episode: int
    t: int
    channel: Channel
    opened: bool
    masked: bool


class CommLog:
    """Append-only record of per-step channel openings and maskings.

    One event is appended per open gate; masking flips the event's
    masked flag, so delivered communications are events with
    ``masked == False``.
    """

    def __init__(self) -> None:
        self.events: list[CommEvent] = []

    def append(self, episode: int, t: int, channel: Channel) -> None:
        self.events.append(CommEvent(episode, t, channel, True, False))

    def mark_masked(self, episode: int, t: int, channel: Channel) -> None:
        for ev in reversed(self.events):
            if ev.episode == episode and ev.t == t and ev.channel == channel:
                ev.masked = True
                return

    def delivered_count(self) -> int:
        return sum(1 for ev in self.events if ev.opened and not ev.masked)

    def opened_count(self) -> int:
        return sum(1 for ev in self.events if ev.opened)

    def export(self, path) -> None:
        lines = ["episode,t,i,j,opened,masked"]
        for ev in self.events:
            lines.append(
                f"{ev.episode},{ev.t},{ev.channel[0]},{ev.channel[1]},"
                f"{int(ev.opened)},{int(ev.masked)}"
            )
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


class MessageEncoder:
    """Fixed linear encoder obs -> message, squashed to [-1, 1]."""

    def __init__(self, obs_dim: int, seed: int = 0, msg_dim: int = MESSAGE_DIM):
        rng = np.random.default_rng(seed)
        self.obs_dim = obs_dim
        self.msg_dim = msg_dim
        self.weight = rng.normal(0.0, 1.0 / np.sqrt(obs_dim), size=(msg_dim, obs_dim))

    def encode(self, obs: np.ndarray) -> np.ndarray:
        return np.tanh(self.weight @ np.asarray(obs, dtype=np.float64))


def exchange(obsset: ObservationSet, decision: CommDecision,
             encoder: MessageEncoder, log: CommLog | None = None,
             episode: int = 0, t: int = 0) -> ObservationSet:
    """Fill message slots for every open channel and log the events."""
    out = obsset.copy()
    for (i, j), open_ in decision.gates.items():
        if open_:
            out.slots[i][j] = encoder.encode(out.obs[j])
            out.slots[j][i] = encoder.encode(out.obs[i])
            if log is not None:
                log.append(episode, t, (i, j))
    return out


def apply_mask(obsset: ObservationSet, mask: MaskMatrix,
               log: CommLog | None = None, episode: int = 0,
               t: int = 0) -> ObservationSet:
    """Null both endpoints of every masked channel; leave the rest alone."""
    if mask.n != obsset.n:
        raise ValueError("mask and observation set disagree on agent count")
    out = obsset.copy()
    for (i, j), bit in mask.bits.items():
        if bit:
            was_open = out.slots[i][j] is not None or out.slots[j][i] is not None
            out.slots[i][j] = None
            out.slots[j][i] = None
            if log is not None and was_open:
                log.mark_masked(episode, t, (i, j))
    return out


class CommPolicy:
    """Learnable gate network, shared across channels.

    Input is the concatenation of the two endpoint feature vectors; the
    single logit is squashed through a sigmoid, so gate probabilities
    stay strictly inside (0, 1).  The raw logit is additionally bounded
    by a smooth tanh squash, which keeps every channel's probability
    away from 0 and 1 during sampled training: a channel can never
    saturate into a state where the policy gradient goes silent.
    """

    LOGIT_BOUND = 3.0

    def __init__(self, feature_dim: int, hidden: list[int] | None = None,
                 seed: int = 0):
        hidden = [32, 32] if hidden is None else hidden
        self.feature_dim = feature_dim
        self.net = DenseNetwork([2 * feature_dim] + hidden + [1], seed=seed)

    def _logits(self, inputs: np.ndarray) -> np.ndarray:
        raw = self.net.forward(inputs)[:, 0]
        b = self.LOGIT_BOUND
        return b * np.tanh(raw / b)

    def gate_probs(self, features: list[np.ndarray]) -> dict[Channel, float]:
        chans = channel_list(len(features))
        inputs = np.stack(
            [np.concatenate([features[i], features[j]]) for i, j in chans]
        )
        if inputs.shape[1] != self.net.in_dim:
            raise ValueError(
                f"features of width {inputs.shape[1]} fed to gate net "
                f"expecting {self.net.in_dim}"
            )
        probs = 1.0 / (1.0 + np.exp(-self._logits(inputs)))
        return dict(zip(chans, probs))

    def decide(self, features: list[np.ndarray], mode: str = "greedy",
               rng: np.random.Generator | None = None) -> CommDecision:
        probs = self.gate_probs(features)
        n = len(features)
        if mode == "greedy":
            # Tie at exactly 0.5 communicates.
            gates = {c: bool(p >= 0.5) for c, p in probs.items()}
        elif mode == "sample":
            if rng is None:
                raise ValueError("sampled mode needs an rng")
            gates = {c: bool(rng.random() < p) for c, p in probs.items()}
        else:
            raise ValueError(f"unknown decision mode: {mode}")
        return CommDecision(n, gates)


@dataclass
class CpEpisode:
    """Replayable record of one episode's gate decisions for training."""

    inputs: np.ndarray        # (T * C, 2 * feature_dim)
    gates: np.ndarray         # (T * C,) in {0, 1}
    step_returns: np.ndarray  # (T * C,) discounted reward-to-go at each step
    messages_sent: int

    @property
    def discounted_return(self) -> float:
        return float(self.step_returns[0]) if len(self.step_returns) else 0.0


def episode_credits(rewards: list[float], gamma: float,
                    n_channels: int) -> np.ndarray:
    """Discounted reward-to-go per step, repeated across the channel set.

    Decisions at step t cannot influence rewards before t, so their
    credit is the tail return from t on.
    """
    g = 0.0
    tails = np.zeros(len(rewards))
    for t in range(len(rewards) - 1, -1, -1):
        g = rewards[t] + gamma * g
        tails[t] = g
    return np.repeat(tails, n_channels)


def train_cp_step(cp: CommPolicy, batch: list[CpEpisode], comm_cost: float,
                  optimizer: Optimizer) -> None:
    """One policy-gradient step on a batch of episodes.

    Maximizes (discounted team return - comm_cost * messages sent).  The
    return part uses sampled-gate credit with reward-to-go per decision
    and the batch mean as baseline; the cost part is differentiated
    analytically per channel (its expectation is comm_cost * sum of gate
    probabilities), which removes the variance that otherwise collapses
    useful channels.  With comm_cost = 0 a zero-advantage batch leaves
    plain-SGD parameters unchanged.
    """
    if not batch:
        raise ValueError("empty episode batch")
    baseline = float(np.mean(np.concatenate(
        [ep.step_returns for ep in batch])))
    grads = None
    b = cp.LOGIT_BOUND
    for ep in batch:
        adv = ep.step_returns - baseline
        logits = b * np.tanh(cp.net.forward(ep.inputs)[:, 0] / b)
        probs = 1.0 / (1.0 + np.exp(-logits))
        # d log pi / d logit = gate - prob; the bounded squash contributes
        # a 1 - (logit/b)^2 factor; descent on the negated objective.
        squash = 1.0 - (logits / b) ** 2
        gout = ((-adv * (ep.gates - probs)
                 + comm_cost * probs * (1.0 - probs))
                * squash / len(batch))[:, None]
        g = cp.net.backward(ep.inputs, gout)
        grads = g if grads is None else [a + b_ for a, b_ in zip(grads, g)]
    optimizer.step(cp.net, grads)
