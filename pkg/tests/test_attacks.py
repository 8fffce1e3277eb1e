"""Message attacks and masking baselines."""
import numpy as np
import pytest

from commlab.attacks import (AttackBudget, AttackConfig, AttackerPolicy,
                             HeuristicAttack, LearnedAttack, RandomMasker,
                             RewardBasedMasker, heuristic_attack,
                             random_masker, reward_based_masker,
                             train_learned_attack)
from commlab.comm import (MESSAGE_DIM, CommDecision, CommPolicy,
                          MessageEncoder, ObservationSet, channel_list,
                          exchange)
from commlab.envs.relay import RelayEnv
from commlab.graphfeat import build_graph
from commlab.team import TeamPolicy


def full_obsset(n=3, seed=0):
    rng = np.random.default_rng(seed)
    obsset = ObservationSet([rng.normal(size=3) for _ in range(n)])
    dec = CommDecision(n, {c: True for c in channel_list(n)})
    return exchange(obsset, dec, MessageEncoder(3, seed=1))


class TestHeuristicAttack:
    def test_replaces_exactly_budget_channels(self):
        rng = np.random.default_rng(0)
        obsset = full_obsset()
        out = heuristic_attack(obsset, AttackBudget(channels_per_step=1), rng)
        changed = sum(
            1 for i, j in channel_list(3)
            if not np.array_equal(out.slots[i][j], obsset.slots[i][j])
        )
        assert changed == 1

    def test_injected_message_in_valid_range(self):
        rng = np.random.default_rng(1)
        obsset = full_obsset()
        for _ in range(20):
            out = heuristic_attack(obsset, AttackBudget(3), rng)
            for i in range(3):
                for content in out.slots[i].values():
                    assert np.abs(content).max() <= 1.0

    def test_closed_channels_untouched(self):
        rng = np.random.default_rng(2)
        obsset = ObservationSet([np.zeros(3)] * 3)  # nothing exchanged
        out = heuristic_attack(obsset, AttackBudget(2), rng)
        assert all(out.slots[i][j] is None
                   for i in range(3) for j in out.slots[i])

    def test_budget_larger_than_open_channels(self):
        rng = np.random.default_rng(3)
        obsset = full_obsset()
        out = heuristic_attack(obsset, AttackBudget(channels_per_step=99), rng)
        # all three channels replaced, no error
        assert all(out.slots[i][j] is not None
                   for i, j in channel_list(3))

    def test_original_not_mutated(self):
        rng = np.random.default_rng(4)
        obsset = full_obsset()
        snapshot = {(i, j): obsset.slots[i][j].copy()
                    for i, j in channel_list(3)}
        heuristic_attack(obsset, AttackBudget(3), rng)
        for (i, j), v in snapshot.items():
            assert np.array_equal(obsset.slots[i][j], v)

    def test_invalid_budget_rejected(self):
        with pytest.raises(ValueError):
            AttackBudget(channels_per_step=0)
        with pytest.raises(ValueError):
            AttackBudget(codebook_size=0)


class TestRandomMasker:
    def test_masks_exactly_one_channel(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            assert random_masker(4, rng).count() == 1

    def test_uniform_over_channels(self):
        # 4 agents, 6 channels: each hit with frequency 1/6 +- 0.02
        rng = np.random.default_rng(1)
        draws = 10_000
        counts = {c: 0 for c in channel_list(4)}
        for _ in range(draws):
            mask = random_masker(4, rng)
            for c, bit in mask.bits.items():
                counts[c] += bit
        for c, k in counts.items():
            assert abs(k / draws - 1 / 6) < 0.02


class TestRewardBasedMasker:
    def graph(self, dist, radius=None):
        n = dist.shape[0]
        return build_graph(np.zeros((n, 2)), dist, radius=radius)

    def test_masks_channel_of_top_reward_agent(self):
        dist = np.ones((3, 3))
        np.fill_diagonal(dist, 0.0)
        g = self.graph(dist)
        rng = np.random.default_rng(0)
        mask = reward_based_masker(np.array([0.0, 5.0, 1.0]), g, rng)
        assert mask.count() == 1
        masked = [c for c, b in mask.bits.items() if b][0]
        assert 1 in masked

    def test_reward_tie_goes_to_lowest_index(self):
        dist = np.ones((3, 3))
        np.fill_diagonal(dist, 0.0)
        g = self.graph(dist)
        rng = np.random.default_rng(1)
        for _ in range(10):
            mask = reward_based_masker(np.array([2.0, 2.0, 0.0]), g, rng)
            masked = [c for c, b in mask.bits.items() if b][0]
            assert 0 in masked

    def test_isolated_top_agent_falls_back_to_random(self):
        dist = np.full((3, 3), 10.0)
        np.fill_diagonal(dist, 0.0)
        dist[1, 2] = dist[2, 1] = 1.0
        g = self.graph(dist, radius=2.0)
        rng = np.random.default_rng(2)
        seen = set()
        for _ in range(60):
            mask = reward_based_masker(np.array([9.0, 0.0, 0.0]), g, rng)
            assert mask.count() == 1
            seen.add([c for c, b in mask.bits.items() if b][0])
        assert len(seen) == 3  # uniform fallback reaches every channel

    def test_neighbor_chosen_within_radius(self):
        dist = np.array([[0.0, 1.0, 9.0],
                         [1.0, 0.0, 9.0],
                         [9.0, 9.0, 0.0]])
        g = self.graph(dist, radius=2.0)
        rng = np.random.default_rng(3)
        mask = reward_based_masker(np.array([9.0, 0.0, 0.0]), g, rng)
        assert mask.bits[(0, 1)] == 1


class TestAttackerPolicy:
    def setup_attacker(self, seed=0):
        env = RelayEnv(n_agents=3)
        budget = AttackBudget(codebook_size=4)
        return env, AttackerPolicy(env, budget, AttackConfig(hidden=[8]),
                                   seed=seed)

    def test_action_space_size(self):
        env, attacker = self.setup_attacker()
        state = env.reset(0)
        obs = env.observe(state)
        from commlab.adversary import adversary_features, AdversaryConfig
        h = adversary_features(env, state, obs, AdversaryConfig())
        q = attacker.q_values(h)
        assert q.shape == (3 * 4,)  # channels x codebook entries

    def test_decode_round_trip(self):
        _, attacker = self.setup_attacker()
        chans = channel_list(3)
        for action in range(12):
            channel, vec = attacker.decode(action)
            assert channel == chans[action // 4]
            assert vec == action % 4

    def test_codebook_in_valid_range(self):
        _, attacker = self.setup_attacker()
        assert np.abs(attacker.codebook).max() <= 1.0
        attacker.codebook += 5.0
        attacker.project_codebook()
        assert np.abs(attacker.codebook).max() <= 1.0

    def test_perturb_overwrites_open_channel_both_ends(self):
        _, attacker = self.setup_attacker()
        obsset = full_obsset()
        action = 0  # channel (0,1), codebook vector 0
        out = attacker.perturb(obsset, action)
        assert np.array_equal(out.slots[0][1], attacker.codebook[0])
        assert np.array_equal(out.slots[1][0], attacker.codebook[0])
        assert np.array_equal(out.slots[0][2], obsset.slots[0][2])

    def test_perturb_skips_closed_channel(self):
        _, attacker = self.setup_attacker()
        obsset = ObservationSet([np.zeros(3)] * 3)
        out = attacker.perturb(obsset, 0)
        assert out.slots[0][1] is None

    def test_select_greedy_and_explore(self):
        env, attacker = self.setup_attacker()
        state = env.reset(0)
        from commlab.adversary import adversary_features, AdversaryConfig
        h = adversary_features(env, state, env.observe(state),
                               AdversaryConfig())
        greedy = attacker.select(h)
        assert greedy == int(np.argmax(attacker.q_values(h)))
        with pytest.raises(ValueError):
            attacker.select(h, epsilon=0.5)


class TestTrainLearnedAttack:
    def test_seeded_replay_equality(self):
        env = RelayEnv(n_agents=3, horizon=4)
        team = TeamPolicy(env, hidden=[8], seed=0)
        cp = CommPolicy(env.cp_feature_dim, hidden=[8], seed=0)
        cfg = AttackConfig(hidden=[8], batch_size=8)

        def run():
            attacker = train_learned_attack(
                env, team, cp, AttackBudget(codebook_size=4), 8, seed=3,
                cfg=cfg)
            return attacker.net.digest(), attacker.codebook.tolist()

        assert run() == run()

    def test_victim_frozen(self):
        env = RelayEnv(n_agents=3, horizon=4)
        team = TeamPolicy(env, hidden=[8], seed=0)
        cp = CommPolicy(env.cp_feature_dim, hidden=[8], seed=0)
        before_team, before_cp = team.net.digest(), cp.net.digest()
        train_learned_attack(env, team, cp, AttackBudget(codebook_size=4), 8,
                             seed=1, cfg=AttackConfig(hidden=[8], batch_size=8))
        assert team.net.digest() == before_team
        assert cp.net.digest() == before_cp

    def test_codebook_refresh_resamples_worst(self):
        env = RelayEnv(n_agents=3, horizon=4)
        team = TeamPolicy(env, hidden=[8], seed=0)
        cp = CommPolicy(env.cp_feature_dim, hidden=[8], seed=0)
        cfg = AttackConfig(hidden=[8], batch_size=8, codebook_refresh=5)
        attacker = train_learned_attack(env, team, cp,
                                        AttackBudget(codebook_size=4), 10,
                                        seed=2, cfg=cfg)
        assert np.abs(attacker.codebook).max() <= 1.0


class TestStepAdapters:
    def context(self):
        env = RelayEnv(n_agents=3, horizon=4)
        state = env.reset(0)
        obs = env.observe(state)
        obsset = full_obsset()
        return env, state, obs, obsset

    def test_masker_adapters_null_one_channel(self):
        env, state, obs, obsset = self.context()
        rng = np.random.default_rng(0)
        for adapter in (RandomMasker(), RewardBasedMasker()):
            out = adapter.on_step(env, state, obs, obsset, rng, None, 0, 0,
                                  np.array([0.0, 1.0, 0.0]))
            nulled = sum(1 for i, j in channel_list(3)
                         if out.slots[i][j] is None)
            assert nulled == 1

    def test_heuristic_adapter_keeps_slots_open(self):
        env, state, obs, obsset = self.context()
        out = HeuristicAttack().on_step(env, state, obs, obsset,
                                        np.random.default_rng(0), None, 0, 0,
                                        None)
        assert all(out.slots[i][j] is not None for i, j in channel_list(3))

    def test_learned_adapter_injects_codebook_vector(self):
        env, state, obs, obsset = self.context()
        attacker = AttackerPolicy(env, AttackBudget(codebook_size=4),
                                  AttackConfig(hidden=[8]), seed=0)
        out = LearnedAttack(attacker).on_step(env, state, obs, obsset,
                                              np.random.default_rng(0), None,
                                              0, 0, None)
        injected = [
            (i, j) for i, j in channel_list(3)
            if not np.array_equal(out.slots[i][j], obsset.slots[i][j])
        ]
        assert len(injected) == 1
        i, j = injected[0]
        assert any(np.array_equal(out.slots[i][j], v)
                   for v in attacker.codebook)
