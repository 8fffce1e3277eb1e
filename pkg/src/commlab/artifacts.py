"""Checkpoint save/load for every trained component.

All checkpoints are JSON documents built on the substrate's network
format, with a mandatory version field, so a stage can be re-run and
compared byte for byte.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .adversary import MaskingPolicy, MixingCritic
from .attacks import AttackBudget, AttackConfig, AttackerPolicy
from .comm import CommPolicy
from .nets import CHECKPOINT_VERSION, DenseNetwork
from .team import TeamPolicy


def save_team(team: TeamPolicy, path: str | Path) -> None:
    team.net.save(path)


def load_team(env, path: str | Path, encoder_seed: int) -> TeamPolicy:
    net = DenseNetwork.load(path)
    team = TeamPolicy(env, hidden=net.layer_sizes[1:-1], seed=net.seed,
                      encoder_seed=encoder_seed)
    team.net = net
    return team


def save_cp(cp: CommPolicy, path: str | Path) -> None:
    cp.net.save(path)


def load_cp(path: str | Path) -> CommPolicy:
    net = DenseNetwork.load(path)
    cp = CommPolicy(net.in_dim // 2, hidden=net.layer_sizes[1:-1],
                    seed=net.seed)
    cp.net = net
    return cp


def save_adversary(policy: MaskingPolicy, critic: MixingCritic,
                   path: str | Path) -> None:
    doc = {
        "version": CHECKPOINT_VERSION,
        "net": json.loads(_net_json(policy.net)),
        "critic": {
            "mode": critic.mode,
            "w": critic.w.tolist(),
            "b": critic.b.tolist(),
        },
    }
    Path(path).write_text(json.dumps(doc))


def load_adversary(path: str | Path) -> tuple[MaskingPolicy, MixingCritic]:
    doc = json.loads(Path(path).read_text())
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version: {doc.get('version')}")
    net = _net_from_doc(doc["net"])
    policy = MaskingPolicy(net.in_dim // 2, hidden=net.layer_sizes[1:-1],
                           seed=net.seed)
    policy.net = net
    c = doc["critic"]
    critic = MixingCritic(len(c["w"]), mode=c["mode"])
    critic.w = np.array(c["w"], dtype=np.float64)
    critic.b = np.array(c["b"], dtype=np.float64)
    return policy, critic


def save_attacker(attacker: AttackerPolicy, path: str | Path) -> None:
    doc = {
        "version": CHECKPOINT_VERSION,
        "net": json.loads(_net_json(attacker.net)),
        "codebook": attacker.codebook.tolist(),
        "n_agents": attacker.n_agents,
    }
    Path(path).write_text(json.dumps(doc))


def load_attacker(env, path: str | Path,
                  cfg: AttackConfig | None = None) -> AttackerPolicy:
    doc = json.loads(Path(path).read_text())
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version: {doc.get('version')}")
    net = _net_from_doc(doc["net"])
    codebook = np.array(doc["codebook"], dtype=np.float64)
    budget = AttackBudget(codebook_size=codebook.shape[0])
    attacker = AttackerPolicy(env, budget, cfg or AttackConfig(), seed=0)
    attacker.net = net
    attacker.codebook = codebook
    return attacker


def _net_json(net: DenseNetwork) -> str:
    return json.dumps({
        "version": CHECKPOINT_VERSION,
        "layer_sizes": net.layer_sizes,
        "seed": net.seed,
        "weights": [W.ravel().tolist() for W in net.weights],
        "biases": [b.tolist() for b in net.biases],
    })


def _net_from_doc(doc: dict) -> DenseNetwork:
    net = DenseNetwork(doc["layer_sizes"], seed=doc["seed"])
    for layer, flat in enumerate(doc["weights"]):
        net.weights[layer] = np.array(flat, dtype=np.float64).reshape(
            net.weights[layer].shape)
    for layer, flat in enumerate(doc["biases"]):
        net.biases[layer] = np.array(flat, dtype=np.float64)
    return net
