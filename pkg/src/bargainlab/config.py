"""Experiment configuration: YAML key-value files with strict validation.

Every key is checked against the section's schema; unknown keys are rejected
by name so typos cannot silently change an experiment. The full parsed
config is echoed into each run directory's manifest.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml


class ConfigError(ValueError):
    pass


_EXPERIMENT_KEYS = {"name", "seed", "runs", "out"}
_ENVIRONMENT_KEYS = {"name", "gamma", "grid_size", "episode_length",
                     "coop_rewards", "dc_reward", "coin_timeout",
                     "pickup_reward", "stolen_penalty", "t", "r", "p", "s"}
_ALGORITHM_KEYS = {"name", "delta", "eta", "iterations", "tol",
                   "welfares", "welfare_sets", "t_debit", "alpha", "q_episodes",
                   "train_beta", "detect_window", "detect_threshold", "detect_dwell"}
_EVALUATION_KEYS = {"episodes", "steps", "scoring", "beta", "lam", "max_cross_pairs"}

_ALGOS = ("lola_exact", "amtft", "amtft_w")


def _check_keys(section: str, data: dict, allowed: set) -> None:
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(
            f"unknown key{'s' if len(unknown) > 1 else ''} in [{section}]: "
            f"{', '.join(repr(k) for k in unknown)}")


@dataclass
class ExperimentConfig:
    name: str
    seed: int
    runs: int
    out: str
    environment: dict
    algorithm: dict
    evaluation: dict = field(default_factory=dict)

    @property
    def algo_name(self) -> str:
        return self.algorithm["name"]

    def to_dict(self) -> dict:
        return {
            "experiment": {"name": self.name, "seed": self.seed,
                           "runs": self.runs, "out": self.out},
            "environment": dict(self.environment),
            "algorithm": dict(self.algorithm),
            "evaluation": dict(self.evaluation),
        }

    def make_environment(self):
        from .games import make_environment

        kwargs = {k: v for k, v in self.environment.items() if k != "name"}
        if "coop_rewards" in kwargs:
            kwargs["coop_rewards"] = tuple(kwargs["coop_rewards"])
        return make_environment(self.environment["name"], **kwargs)


def parse_config(data: dict, path: str = "<config>") -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a mapping of sections")
    unknown_sections = sorted(set(data) - {"experiment", "environment",
                                           "algorithm", "evaluation"})
    if unknown_sections:
        raise ConfigError(f"{path}: unknown section(s): {', '.join(unknown_sections)}")
    for section in ("experiment", "environment", "algorithm"):
        if section not in data:
            raise ConfigError(f"{path}: missing required section [{section}]")

    exp = data["experiment"]
    env = data["environment"]
    algo = data["algorithm"]
    ev = data.get("evaluation", {}) or {}
    _check_keys("experiment", exp, _EXPERIMENT_KEYS)
    _check_keys("environment", env, _ENVIRONMENT_KEYS)
    _check_keys("algorithm", algo, _ALGORITHM_KEYS)
    _check_keys("evaluation", ev, _EVALUATION_KEYS)

    if "name" not in env:
        raise ConfigError(f"{path}: [environment] needs a 'name'")
    if "name" not in algo:
        raise ConfigError(f"{path}: [algorithm] needs a 'name'")
    if algo["name"] not in _ALGOS:
        raise ConfigError(f"{path}: unknown algorithm {algo['name']!r}; known: {_ALGOS}")
    if algo["name"] == "amtft" and "welfares" not in algo:
        raise ConfigError(f"{path}: [algorithm] amtft needs 'welfares' (list of labels)")
    if algo["name"] == "amtft_w" and "welfare_sets" not in algo:
        raise ConfigError(f"{path}: [algorithm] amtft_w needs 'welfare_sets'")

    name = exp.get("name") or f"{env['name']}-{algo['name']}"
    return ExperimentConfig(
        name=str(name),
        seed=int(exp.get("seed", 0)),
        runs=int(exp.get("runs", 2)),
        out=str(exp.get("out", f"runs/{name}")),
        environment=dict(env),
        algorithm=dict(algo),
        evaluation=dict(ev),
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: YAML parse error: {exc}") from exc
    return parse_config(data, str(path))
