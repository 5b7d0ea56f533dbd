"""Experiment orchestration: train runs to disk, evaluate them to results files.

Training is idempotent per run directory (completed runs are skipped), and
evaluation is deterministic given the config: records are re-derived from the
stored artifacts with seeds fixed by the config, so re-running produces a
byte-identical results file.
"""

from __future__ import annotations

import datetime
import json
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional

import numpy as np

from . import artifacts
from .amtft import AmTFTBundle, AmTFTConfig, DetectionConfig, train_amtft
from .config import ExperimentConfig
from .evaluation import (
    AdaptiveRun,
    AmTFTRun,
    LolaRun,
    MatchRecord,
    evaluate_adaptive_runs,
    evaluate_amtft_runs,
    evaluate_lola_runs,
    grid_scoring_context,
    matrix_scoring_context,
    set_label,
    write_aggregates,
    write_manifest,
    write_results,
)
from .games.matrix import MatrixGame
from .lola import exact_value, train_lola
from .planning import env_fingerprint, welfare_optimal_joint_policy
from .scoring import (
    default_library_kinds,
    default_scoring_set,
    matrix_optima_profiles,
    steady_state_value_grid,
    welfare_spec,
)
from .welfare import SHORT_LABELS, WelfareSpec, classify_convention

_KIND_BY_LABEL = {v: k for k, v in SHORT_LABELS.items()}


def _resolve_specs(env, cfg: ExperimentConfig) -> list[WelfareSpec]:
    labels = cfg.evaluation.get("scoring")
    beta = float(cfg.evaluation.get("beta", 1.0))
    lam = float(cfg.evaluation.get("lam", 0.96))
    if not labels:
        return default_scoring_set(env, beta=beta, lam=lam)
    return [welfare_spec(env, _KIND_BY_LABEL[l], beta=beta, lam=lam) for l in labels]


def _amtft_config(cfg: ExperimentConfig) -> AmTFTConfig:
    algo = cfg.algorithm
    return AmTFTConfig(t_debit=float(algo.get("t_debit", 0.5)),
                       alpha=float(algo.get("alpha", 2.0)))


def _detection_config(cfg: ExperimentConfig) -> DetectionConfig:
    algo = cfg.algorithm
    return DetectionConfig(window=int(algo.get("detect_window", 10)),
                           threshold=float(algo.get("detect_threshold", 0.9)),
                           dwell=int(algo.get("detect_dwell", 5)))


# ---------------------------------------------------------------------------
# Training.

def _train_one_lola(args):
    cfg_env, algo, seed = args
    from .config import ExperimentConfig  # re-imported under multiprocessing

    env = cfg_env
    (p1, p2), trace = train_lola(
        env, delta=float(algo.get("delta", 1.0)), eta=float(algo.get("eta", 0.5)),
        iterations=int(algo.get("iterations", 2000)),
        tol=float(algo.get("tol", 1e-6)), seed=seed)
    return seed, p1, p2, trace[-1]


def train_experiment(cfg: ExperimentConfig, out: Optional[str] = None,
                     jobs: int = 1, log=print) -> Path:
    """Train all requested runs into the output directory; skip completed ones."""
    root = Path(out or cfg.out)
    root.mkdir(parents=True, exist_ok=True)
    env = cfg.make_environment()
    fp = env_fingerprint(env)
    algo = cfg.algorithm
    run_dirs = Path(root) / "runs"
    run_dirs.mkdir(exist_ok=True)

    if cfg.algo_name == "lola_exact":
        todo = []
        for i in range(cfg.runs):
            seed = cfg.seed + i
            rd = run_dirs / f"lola_{i:03d}"
            if (rd / "policy.json").exists():
                continue
            todo.append((i, seed, rd))
        results = []
        if jobs > 1 and len(todo) > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(_train_one_lola,
                                        [(env, algo, seed) for (_, seed, _) in todo]))
        else:
            results = [_train_one_lola((env, algo, seed)) for (_, seed, _) in todo]
        for (i, seed, rd), (seed_out, p1, p2, values) in zip(todo, results):
            rd.mkdir(parents=True, exist_ok=True)
            payload = {"seed": seed, "policy1": p1.to_dict(), "policy2": p2.to_dict(),
                       "self_values": list(values), "env_fingerprint": fp}
            (rd / "policy.json").write_text(json.dumps(payload) + "\n")
            log(f"trained lola run {i} (seed {seed}): values {tuple(round(v, 2) for v in values)}")
    elif cfg.algo_name == "amtft":
        labels = list(algo["welfares"])
        _train_amtft_runs(cfg, env, fp, root, run_dirs, labels, log)
        if not isinstance(env, MatrixGame):
            _ensure_library(cfg, env, fp, root, log)
    elif cfg.algo_name == "amtft_w":
        sets = [list(s) for s in algo["welfare_sets"]]
        union = sorted({l for s in sets for l in s})
        _train_amtft_runs(cfg, env, fp, root, run_dirs, union, log)
        _ensure_library(cfg, env, fp, root, log)
    else:
        raise ValueError(f"unknown algorithm {cfg.algo_name!r}")

    write_manifest(root / "manifest.json", {
        "config": cfg.to_dict(),
        "env_fingerprint": fp,
        "commit": artifacts.git_fingerprint(),
        "trained_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "value_convention": "steady_state_discounted",
    })
    return root


def _train_amtft_runs(cfg, env, fp, root, run_dirs, labels, log) -> None:
    beta = float(cfg.algorithm.get("train_beta", cfg.evaluation.get("beta", 1.0)))
    lam = float(cfg.evaluation.get("lam", 0.96))
    amtft_cfg = _amtft_config(cfg)
    q_episodes = cfg.algorithm.get("q_episodes")
    q_episodes = int(q_episodes) if q_episodes is not None else None
    specs = _resolve_specs(env, cfg)
    optima = (matrix_optima_profiles(env, specs)
              if isinstance(env, MatrixGame) else None)
    for label in labels:
        spec = welfare_spec(env, _KIND_BY_LABEL[label], beta=beta, lam=lam)
        for i in range(cfg.runs):
            rd = run_dirs / f"amtft_{label}_{i:03d}"
            if artifacts.run_complete(rd):
                continue
            bundle = train_amtft(env, spec, seed=cfg.seed + i, config=amtft_cfg,
                                 q_episodes=q_episodes, optima=optima)
            artifacts.save_amtft_bundle(rd, root, bundle, fp)
            log(f"trained amtft({label}) run {i}")


def _ensure_library(cfg, env, fp, root, log) -> None:
    beta = float(cfg.algorithm.get("train_beta", cfg.evaluation.get("beta", 1.0)))
    lam = float(cfg.evaluation.get("lam", 0.96))
    for kind in default_library_kinds(env):
        label = SHORT_LABELS[kind]
        spec = welfare_spec(env, kind, beta=beta, lam=lam)
        d = artifacts.planning_cache_dir(root, label, fp)
        if not (d / "meta.json").exists():
            joint = welfare_optimal_joint_policy(env, spec)
            artifacts.save_joint_policies(root, label, fp, joint)
            log(f"planned library cooperative pair: {label}")


# ---------------------------------------------------------------------------
# Loading trained runs.

def _load_lola_runs(cfg, env, fp, root) -> list[LolaRun]:
    from .lola import Memory1Policy

    specs = _resolve_specs(env, cfg)
    optima = matrix_optima_profiles(env, specs)
    runs = []
    for i in range(cfg.runs):
        rd = Path(root) / "runs" / f"lola_{i:03d}"
        path = rd / "policy.json"
        if not path.exists():
            raise artifacts.ArtifactError(
                f"missing trained artifact {path}; run `bargainlab train` first")
        payload = json.loads(path.read_text())
        if payload["env_fingerprint"] != fp:
            raise artifacts.ArtifactError(f"{path} belongs to a different environment")
        p1 = Memory1Policy.from_dict(payload["policy1"])
        p2 = Memory1Policy.from_dict(payload["policy2"])
        values = tuple(payload["self_values"])
        runs.append(LolaRun(seed=payload["seed"], policy1=p1, policy2=p2,
                            self_values=values,
                            convention=classify_convention(values, optima)))
    return runs


def _load_amtft_runs(cfg, env, fp, root, labels) -> dict[str, list[AmTFTRun]]:
    out: dict[str, list[AmTFTRun]] = {}
    for label in labels:
        rows = []
        for i in range(cfg.runs):
            rd = Path(root) / "runs" / f"amtft_{label}_{i:03d}"
            if not artifacts.run_complete(rd):
                raise artifacts.ArtifactError(
                    f"missing trained artifact {rd}; run `bargainlab train` first")
            bundle = artifacts.load_amtft_bundle(rd, root, fp)
            rows.append(AmTFTRun(seed=bundle.seed, welfare_label=label, bundle=bundle))
        out[label] = rows
    return out


def _load_library(env, fp, root) -> dict[str, tuple]:
    lib = {}
    for kind in default_library_kinds(env):
        label = SHORT_LABELS[kind]
        d = artifacts.planning_cache_dir(root, label, fp)
        joint = artifacts.load_joint_policies(d, fp)
        lib[label] = (joint.policy1, joint.policy2)
    return lib


# ---------------------------------------------------------------------------
# Evaluation.

def _grid_optima_profiles(cfg, env, fp, root, labels) -> dict[str, tuple[float, float]]:
    """Optima measured with the same episode protocol used for matches."""
    from .planning import TabularRunner

    out = {}
    for label in labels:
        d = artifacts.planning_cache_dir(root, label, fp)
        joint = artifacts.load_joint_policies(d, fp)
        out[label] = steady_state_value_grid(
            env, (TabularRunner(joint.policy1), TabularRunner(joint.policy2)),
            episodes=4 * int(cfg.evaluation.get("episodes", 10)), seed=cfg.seed + 977)
    return out


def evaluate_experiment(cfg: ExperimentConfig, out: Optional[str] = None,
                        filters: Optional[dict[str, str]] = None,
                        log=print) -> tuple[Path, list[MatchRecord]]:
    """Evaluate trained runs into results.tsv / aggregates.tsv (+ manifest)."""
    root = Path(out or cfg.out)
    env = cfg.make_environment()
    fp = env_fingerprint(env)
    specs = _resolve_specs(env, cfg)
    episodes = int(cfg.evaluation.get("episodes", 10))
    steps = int(cfg.evaluation.get("steps", 600))
    max_cross = cfg.evaluation.get("max_cross_pairs")
    max_cross = int(max_cross) if max_cross is not None else None

    if cfg.algo_name == "lola_exact":
        if not isinstance(env, MatrixGame):
            raise ValueError("lola_exact runs on matrix games only")
        ctx = matrix_scoring_context(env, specs, episodes, steps)
        runs = _load_lola_runs(cfg, env, fp, root)
        records = evaluate_lola_runs(env, runs, ctx)
    elif cfg.algo_name == "amtft":
        labels = list(cfg.algorithm["welfares"])
        runs_by_label = _load_amtft_runs(cfg, env, fp, root, labels)
        flat = [r for label in labels for r in runs_by_label[label]]
        ctx = _context_for(cfg, env, fp, root, specs, labels, episodes, steps)
        records = evaluate_amtft_runs(env, flat, ctx, base_seed=cfg.seed,
                                      max_cross_pairs=max_cross)
    elif cfg.algo_name == "amtft_w":
        sets = [list(s) for s in cfg.algorithm["welfare_sets"]]
        union = sorted({l for s in sets for l in s})
        runs_by_label = _load_amtft_runs(cfg, env, fp, root, union)
        detection = _detection_config(cfg)
        runs_by_set: dict[str, list[AdaptiveRun]] = {}
        for s in sets:
            label = set_label(s)
            rows = []
            for i in range(cfg.runs):
                bundles = {l: runs_by_label[l][i].bundle for l in s}
                library = {l: (bundles[l].joint.policy1, bundles[l].joint.policy2)
                           for l in s}
                rows.append(AdaptiveRun(seed=cfg.seed + i, set_label=label,
                                        welfare_order=list(s), bundles=bundles,
                                        library=library, detection=detection))
            runs_by_set[label] = rows
        ctx = _context_for(cfg, env, fp, root, specs, union, episodes, steps)
        records = evaluate_adaptive_runs(env, runs_by_set, ctx, base_seed=cfg.seed,
                                         max_cross_pairs=max_cross)
    else:
        raise ValueError(f"unknown algorithm {cfg.algo_name!r}")

    if filters:
        for key, value in filters.items():
            if key not in MatchRecord.__dataclass_fields__:
                raise ValueError(f"unknown filter key {key!r}")
            records = [r for r in records if str(getattr(r, key)) == value]

    results_path = root / "results.tsv"
    write_results(results_path, records)
    if records:
        write_aggregates(root / "aggregates.tsv", records)
    manifest = {
        "config": cfg.to_dict(),
        "env_fingerprint": fp,
        "commit": artifacts.git_fingerprint(),
        "evaluated_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "value_convention": "steady_state_discounted",
        "scoring_welfare_set": [s.to_dict() for s in specs],
        "disagreement_profile": list(_disagreement(env)),
        "feasible_polygon": _polygon(cfg, env, fp, root, specs),
        "filters": filters or {},
    }
    write_manifest(root / "results_manifest.json", manifest)
    log(f"wrote {results_path} ({len(records)} records)")
    return results_path, records


def _disagreement(env):
    from .scoring import disagreement_profile

    return disagreement_profile(env)


def _polygon(cfg, env, fp, root, specs):
    from .welfare import feasible_set, pareto_front
    from .scoring import grid_feasible_set

    if isinstance(env, MatrixGame):
        fs = feasible_set(env)
    else:
        labels = [s.label for s in specs]
        try:
            optima = _grid_optima_profiles(cfg, env, fp, root, labels)
        except (FileNotFoundError, artifacts.ArtifactError):
            return {"hull": [], "pareto_front": []}
    if not isinstance(env, MatrixGame):
        fs = grid_feasible_set(env, optima)
    return {"hull": [list(v) for v in fs.hull()],
            "pareto_front": [list(v) for v in pareto_front(fs)]}


def _context_for(cfg, env, fp, root, specs, labels, episodes, steps):
    if isinstance(env, MatrixGame):
        return matrix_scoring_context(env, specs, episodes, steps)
    wanted = sorted(set(labels) | {s.label for s in specs})
    optima = _grid_optima_profiles(cfg, env, fp, root, wanted)
    return grid_scoring_context(env, specs, optima, episodes)
