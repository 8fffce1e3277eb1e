"""Experiment configuration: a single YAML document with nested blocks.

Every field has a validated default; unknown keys are rejected so a
typo cannot silently fall back to a default.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import yaml

from .adversary import AdversaryConfig
from .envs import ENV_REGISTRY, make_env
from .team import RetrainSchedule, TeamConfig


class ConfigError(ValueError):
    """Malformed or unknown configuration content."""


def _strict_build(cls, doc: dict | None, where: str):
    doc = doc or {}
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: expected a mapping")
    known = {f.name for f in fields(cls)}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    try:
        return cls(**doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


@dataclass
class EnvironmentBlock:
    name: str = "relay"
    n_agents: int | None = None
    grid: int | None = None
    horizon: int | None = None
    visibility_radius: float | None = None
    time_penalty: float | None = None
    capture_threshold: int | None = None
    prey_slowdown: bool | None = None
    secondary_accuracy: float | None = None
    win_fraction: float | None = None

    def __post_init__(self) -> None:
        if self.name not in ENV_REGISTRY:
            raise ConfigError(f"unknown environment {self.name!r}")

    def build(self):
        import inspect
        cls = ENV_REGISTRY[self.name]
        accepted = set(inspect.signature(cls.__init__).parameters)
        kwargs = {}
        for f in fields(self):
            if f.name == "name":
                continue
            value = getattr(self, f.name)
            if value is None:
                continue
            if f.name not in accepted:
                raise ConfigError(
                    f"environment option {f.name!r} does not apply to "
                    f"{self.name!r}")
            kwargs[f.name] = value
        return make_env(self.name, **kwargs)


@dataclass
class TeamBlock(TeamConfig):
    episodes: int = 1000
    comm_mode: str = "learned"

    def team_config(self) -> TeamConfig:
        kwargs = {f.name: getattr(self, f.name) for f in fields(TeamConfig)}
        return TeamConfig(**kwargs)


@dataclass
class AdversaryBlock(AdversaryConfig):
    episodes: int = 500

    def adversary_config(self) -> AdversaryConfig:
        kwargs = {f.name: getattr(self, f.name) for f in fields(AdversaryConfig)}
        return AdversaryConfig(**kwargs)


@dataclass
class RetrainBlock(RetrainSchedule):
    metrics_episodes: int = 0

    def schedule(self) -> RetrainSchedule:
        kwargs = {f.name: getattr(self, f.name)
                  for f in fields(RetrainSchedule)}
        return RetrainSchedule(**kwargs)


@dataclass
class AttackBlock:
    budget: int = 1
    codebook_size: int = 16
    episodes: int = 500
    hidden: list[int] = field(default_factory=lambda: [64, 64])
    lr: float = 5e-4
    gamma: float = 0.95
    codebook_refresh: int = 0


@dataclass
class EvalBlock:
    episodes: int = 500
    conditions: list[str] = field(default_factory=lambda: [
        "clean", "heuristic", "learned"])

    _KNOWN = ("clean", "heuristic", "learned", "random_masker",
              "reward_masker", "adversary_masker")

    def __post_init__(self) -> None:
        for c in self.conditions:
            if c not in self._KNOWN:
                raise ConfigError(f"unknown eval condition {c!r}")


@dataclass
class ExperimentConfig:
    seed: int = 0
    environment: EnvironmentBlock = field(default_factory=EnvironmentBlock)
    team: TeamBlock = field(default_factory=TeamBlock)
    adversary: AdversaryBlock = field(default_factory=AdversaryBlock)
    retrain: RetrainBlock = field(default_factory=RetrainBlock)
    attack: AttackBlock = field(default_factory=AttackBlock)
    eval: EvalBlock = field(default_factory=EvalBlock)

    @classmethod
    def from_dict(cls, doc: dict | None) -> "ExperimentConfig":
        doc = dict(doc or {})
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
        blocks = {
            "environment": EnvironmentBlock,
            "team": TeamBlock,
            "adversary": AdversaryBlock,
            "retrain": RetrainBlock,
            "attack": AttackBlock,
            "eval": EvalBlock,
        }
        kwargs: dict[str, Any] = {}
        for name, block_cls in blocks.items():
            kwargs[name] = _strict_build(block_cls, doc.get(name), name)
        seed = doc.get("seed", 0)
        if not isinstance(seed, int):
            raise ConfigError("seed must be an integer")
        kwargs["seed"] = seed
        return cls(**kwargs)

    @classmethod
    def from_yaml(cls, path: str | Path) -> "ExperimentConfig":
        try:
            doc = yaml.safe_load(Path(path).read_text())
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_yaml(self, path: str | Path) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=True))

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def apply_override(self, dotted: str, raw: str) -> None:
        """Apply a 'section.key=value' style override in place."""
        parts = dotted.split(".")
        target = self
        for p in parts[:-1]:
            if not hasattr(target, p):
                raise ConfigError(f"unknown override path {dotted!r}")
            target = getattr(target, p)
        leaf = parts[-1]
        if not hasattr(target, leaf):
            raise ConfigError(f"unknown override path {dotted!r}")
        current = getattr(target, leaf)
        value: Any = yaml.safe_load(raw)
        if current is not None and value is not None:
            if isinstance(current, bool) != isinstance(value, bool):
                raise ConfigError(f"override {dotted!r}: type mismatch")
        setattr(target, leaf, value)
        # Re-run the block's validation.
        post = getattr(target, "__post_init__", None)
        if post is not None:
            post()
