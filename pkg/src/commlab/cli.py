"""Experiment runner.

Five pipeline stages plus report emission, driven by a YAML config:

    commlab train-team      --config cfg.yaml --out-dir runs/demo
    commlab train-adversary --config cfg.yaml --out-dir runs/demo
    commlab retrain         --config cfg.yaml --out-dir runs/demo
    commlab train-attack    --config cfg.yaml --out-dir runs/demo
    commlab evaluate        --config cfg.yaml --out-dir runs/demo
    commlab report          --config cfg.yaml --out-dir runs/demo

Exit codes: 2 config error, 3 missing stage dependency, 1 runtime
failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

from . import artifacts
from .attacks import (AdversaryMasker, AttackBudget, AttackConfig,
                      HeuristicAttack, LearnedAttack, RandomMasker,
                      RewardBasedMasker, train_learned_attack)
from .config import ConfigError, ExperimentConfig
from .evaluation import evaluate, export_heatmap
from .reporting import build_report
from .team import retrain_cp, train_team
from .adversary import train_adversary

EXIT_RUNTIME = 1
EXIT_CONFIG = 2
EXIT_DEPENDENCY = 3

STAGES = ("train-team", "train-adversary", "retrain", "train-attack",
          "evaluate", "report")

# artifact file -> stage that produces it
_PRODUCERS = {
    "team.json": "train-team",
    "cp_pre.json": "train-team",
    "adversary.json": "train-adversary",
    "cp_post.json": "retrain",
    "attacker_before.json": "train-attack",
    "attacker_after.json": "train-attack",
}


class DependencyError(RuntimeError):
    def __init__(self, missing: str):
        stage = _PRODUCERS.get(missing, "?")
        super().__init__(
            f"missing artifact {missing!r}; run stage {stage!r} first")
        self.required_stage = stage


def _require(out_dir: Path, name: str) -> Path:
    path = out_dir / name
    if not path.exists():
        raise DependencyError(name)
    return path


def _file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _append_manifest(out_dir: Path, stage: str, cfg: ExperimentConfig,
                     seed: int, outputs: list[Path]) -> None:
    manifest_path = out_dir / "manifest.json"
    entries = (json.loads(manifest_path.read_text())
               if manifest_path.exists() else [])
    entries.append({
        "stage": stage,
        "config_digest": cfg.digest(),
        "seed": seed,
        "outputs": {p.name: _file_digest(p) for p in outputs},
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
    })
    manifest_path.write_text(json.dumps(entries, indent=2))


def _load_team(cfg: ExperimentConfig, env, out_dir: Path):
    return artifacts.load_team(env, _require(out_dir, "team.json"),
                               encoder_seed=cfg.team.encoder_seed)


def _load_cp(out_dir: Path, phase: str):
    name = "cp_pre.json" if phase == "before" else "cp_post.json"
    return artifacts.load_cp(_require(out_dir, name))


def _attack_cfg(cfg: ExperimentConfig) -> AttackConfig:
    return AttackConfig(hidden=cfg.attack.hidden, lr=cfg.attack.lr,
                        gamma=cfg.attack.gamma,
                        codebook_refresh=cfg.attack.codebook_refresh,
                        features=cfg.adversary.adversary_config())


def run_stage(stage: str, cfg: ExperimentConfig, out_dir: Path,
              seed: int) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    env = cfg.environment.build()
    outputs: list[Path] = []

    if stage == "train-team":
        team, cp, curve = train_team(env, cfg.team.episodes, seed,
                                     cfg.team.team_config(),
                                     comm_mode=cfg.team.comm_mode)
        artifacts.save_team(team, out_dir / "team.json")
        artifacts.save_cp(cp, out_dir / "cp_pre.json")
        curve.export(out_dir / "team_curve.csv")
        outputs = [out_dir / "team.json", out_dir / "cp_pre.json",
                   out_dir / "team_curve.csv"]

    elif stage == "train-adversary":
        team = _load_team(cfg, env, out_dir)
        cp = _load_cp(out_dir, "before")
        policy, critic, curve = train_adversary(
            env, cp, team, cfg.adversary.adversary_config(),
            cfg.adversary.episodes, seed + 1)
        artifacts.save_adversary(policy, critic, out_dir / "adversary.json")
        curve.export(out_dir / "adversary_curve.csv")
        outputs = [out_dir / "adversary.json", out_dir / "adversary_curve.csv"]

    elif stage == "retrain":
        team = _load_team(cfg, env, out_dir)
        cp = _load_cp(out_dir, "before")
        _require(out_dir, "adversary.json")
        from .team import RoundMetrics
        cp_post, metrics, _ = retrain_cp(
            env, team, cp, cfg.adversary.adversary_config(),
            cfg.retrain.schedule(), seed + 2, cfg.team.team_config(),
            metrics_episodes=cfg.retrain.metrics_episodes)
        artifacts.save_cp(cp_post, out_dir / "cp_post.json")
        RoundMetrics.export(metrics, out_dir / "retrain_metrics.csv")
        outputs = [out_dir / "cp_post.json", out_dir / "retrain_metrics.csv"]

    elif stage == "train-attack":
        team = _load_team(cfg, env, out_dir)
        budget = AttackBudget(channels_per_step=cfg.attack.budget,
                              codebook_size=cfg.attack.codebook_size)
        for offset, phase in ((3, "before"), (4, "after")):
            if phase == "after" and not (out_dir / "cp_post.json").exists():
                continue
            cp = _load_cp(out_dir, phase)
            attacker = train_learned_attack(env, team, cp, budget,
                                            cfg.attack.episodes, seed + offset,
                                            _attack_cfg(cfg))
            path = out_dir / f"attacker_{phase}.json"
            artifacts.save_attacker(attacker, path)
            outputs.append(path)

    elif stage == "evaluate":
        team = _load_team(cfg, env, out_dir)
        budget = AttackBudget(channels_per_step=cfg.attack.budget,
                              codebook_size=cfg.attack.codebook_size)
        for phase in ("before", "after"):
            if phase == "after" and not (out_dir / "cp_post.json").exists():
                continue
            cp = _load_cp(out_dir, phase)
            for condition in cfg.eval.conditions:
                attack = None
                if condition == "heuristic":
                    attack = HeuristicAttack(budget)
                elif condition == "learned":
                    attacker = artifacts.load_attacker(
                        env, _require(out_dir, f"attacker_{phase}.json"),
                        _attack_cfg(cfg))
                    attack = LearnedAttack(attacker, _attack_cfg(cfg))
                elif condition == "random_masker":
                    attack = RandomMasker()
                elif condition == "reward_masker":
                    attack = RewardBasedMasker()
                elif condition == "adversary_masker":
                    policy, _ = artifacts.load_adversary(
                        _require(out_dir, "adversary.json"))
                    attack = AdversaryMasker(
                        policy, cfg.adversary.adversary_config(),
                        budget=cfg.attack.budget)
                report = evaluate(env, team, cp, cfg.eval.episodes,
                                  seed + 5, attack=attack, condition=condition)
                rpath = out_dir / f"eval_{phase}_{condition}.json"
                report.save(rpath)
                hpath = out_dir / f"heatmap_{phase}_{condition}.txt"
                export_heatmap(report.matrix, hpath)
                outputs += [rpath, hpath]

    elif stage == "report":
        if not list(out_dir.glob("eval_*.json")):
            # An empty-but-valid skeleton is still a report.
            pass
        build_report(out_dir)
        outputs = [out_dir / "report.json", out_dir / "report.csv",
                   out_dir / "report.txt"]

    else:
        raise ConfigError(f"unknown stage {stage!r}")

    _append_manifest(out_dir, stage, cfg, seed, outputs)
    return outputs


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="commlab",
        description="robust multi-agent communication laboratory")
    parser.add_argument("stage", choices=STAGES)
    parser.add_argument("--config", type=Path, default=None,
                        help="YAML experiment config (defaults apply if omitted)")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    parser.add_argument("--out-dir", type=Path, default=Path("runs/default"))
    parser.add_argument("--stage-override", action="append", default=[],
                        metavar="KEY=VALUE",
                        help="dotted config override, e.g. team.episodes=50")
    args = parser.parse_args(argv)

    try:
        cfg = (ExperimentConfig.from_yaml(args.config)
               if args.config else ExperimentConfig())
        for item in args.stage_override:
            if "=" not in item:
                raise ConfigError(f"bad override {item!r}; expected KEY=VALUE")
            key, _, value = item.partition("=")
            cfg.apply_override(key, value)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    seed = args.seed if args.seed is not None else cfg.seed
    try:
        outputs = run_stage(args.stage, cfg, args.out_dir, seed)
    except DependencyError as exc:
        print(f"dependency error: {exc}", file=sys.stderr)
        return EXIT_DEPENDENCY
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - surface as runtime failure
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for path in outputs:
        print(path)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
