"""Self-play and cross-play tournaments with normalized-score aggregation.

A tournament takes R independently trained runs per configuration, evaluates
every self-play pairing and every ordered cross-play pairing (run i in seat 1
against run j in seat 2, i != j), scores each outcome with the environment's
welfare set, and persists one `MatchRecord` per pairing. Records and grouped
aggregates are written as deterministic tab-separated files whose headers are
the contract with the figures frontend.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .amtft import AmTFTBundle, DetectionConfig, NormAdaptiveAgent
from .games.base import rollout
from .games.grid import BargainingCoinGame, CoinGame
from .games.matrix import MatrixGame
from .lola import Memory1Policy, exact_value
from .scoring import (
    disagreement_profile,
    grid_feasible_set,
    matrix_optima_profiles,
    steady_state_value_grid,
    steady_state_value_matrix,
)
from .welfare import (
    FeasibleSet,
    WelfareSpec,
    classify_convention,
    feasible_set,
    normalized_score,
)

RESULTS_COLUMNS = [
    "env", "algo", "welfare_p1", "welfare_p2", "pair_type", "seed_a", "seed_b",
    "v1", "v2", "normalized_score", "convention_p1", "convention_p2",
]

AGGREGATE_COLUMNS = [
    "env", "algo", "welfare_p1", "welfare_p2", "pair_type", "n",
    "mean_score", "stderr_score", "mean_v1", "stderr_v1", "mean_v2", "stderr_v2",
]

SELF_PLAY = "self_play"
CROSS_SAME = "cross_same_welfare"
CROSS_DIFF = "cross_diff_welfare"
CROSS_UNCLASSIFIED = "cross_unclassified"


@dataclass(frozen=True)
class MatchRecord:
    env: str
    algo: str
    welfare_p1: str
    welfare_p2: str
    pair_type: str
    seed_a: int
    seed_b: int
    v1: float
    v2: float
    normalized_score: float
    convention_p1: str
    convention_p2: str

    def row(self) -> list[str]:
        return [format_cell(getattr(self, c)) for c in RESULTS_COLUMNS]


@dataclass(frozen=True)
class AggregateCell:
    mean: float
    stderr: float
    n: int
    mean_v1: float = 0.0
    stderr_v1: float = 0.0
    mean_v2: float = 0.0
    stderr_v2: float = 0.0


def format_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _mean_stderr(values: Sequence[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    mean = float(arr.mean())
    if len(arr) < 2:
        return mean, 0.0
    return mean, float(arr.std(ddof=1) / np.sqrt(len(arr)))


def aggregate(records: Sequence[MatchRecord],
              group_keys: Sequence[str]) -> list[tuple[dict, AggregateCell]]:
    """Grouped means and standard errors, rows in deterministic key order."""
    if not records:
        raise ValueError("no records to aggregate")
    bad = [k for k in group_keys if k not in RESULTS_COLUMNS]
    if bad:
        raise ValueError(f"unknown group keys {bad}")
    groups: dict[tuple, list[MatchRecord]] = {}
    for rec in records:
        key = tuple(getattr(rec, k) for k in group_keys)
        groups.setdefault(key, []).append(rec)
    out = []
    for key in sorted(groups, key=lambda k: tuple(str(x) for x in k)):
        members = groups[key]
        mean, err = _mean_stderr([r.normalized_score for r in members])
        m1, e1 = _mean_stderr([r.v1 for r in members])
        m2, e2 = _mean_stderr([r.v2 for r in members])
        cell = AggregateCell(mean=mean, stderr=err, n=len(members),
                             mean_v1=m1, stderr_v1=e1, mean_v2=m2, stderr_v2=e2)
        out.append((dict(zip(group_keys, key)), cell))
    return out


# ---------------------------------------------------------------------------
# Trained-run containers produced by the training stage.

@dataclass
class LolaRun:
    seed: int
    policy1: Memory1Policy
    policy2: Memory1Policy
    self_values: tuple[float, float]
    convention: str = "unclassified"


@dataclass
class AmTFTRun:
    seed: int
    welfare_label: str
    bundle: AmTFTBundle


@dataclass
class AdaptiveRun:
    seed: int
    set_label: str                      # e.g. "util+ia"
    welfare_order: list[str]
    bundles: dict[str, AmTFTBundle]
    library: dict[str, tuple]
    detection: DetectionConfig
    env: object = None

    def agent(self, env, seat: int, seed_offset: int = 0) -> NormAdaptiveAgent:
        return NormAdaptiveAgent(env, seat, self.welfare_order, self.bundles,
                                 self.library, self.detection,
                                 seed=self.seed + seed_offset, record_trace=False)


def set_label(labels: Sequence[str]) -> str:
    return "+".join(labels)


# ---------------------------------------------------------------------------
# Match evaluation.

@dataclass
class ScoringContext:
    """Environment-level pieces every match score needs."""

    env: object
    specs: list[WelfareSpec]
    fs: FeasibleSet
    disagreement: tuple[float, float]
    optima: dict[str, tuple[float, float]]
    episodes: int = 10
    steps: int = 600

    def score(self, values: tuple[float, float]) -> float:
        scored = normalized_score(values, self.specs, self.disagreement, self.fs)
        return scored.normalized_score


def matrix_scoring_context(env: MatrixGame, specs: Sequence[WelfareSpec],
                           episodes: int = 10, steps: int = 600) -> ScoringContext:
    fs = feasible_set(env)
    optima = matrix_optima_profiles(env, specs)
    return ScoringContext(env=env, specs=list(specs), fs=fs,
                          disagreement=disagreement_profile(env), optima=optima,
                          episodes=episodes, steps=steps)


def grid_scoring_context(env, specs: Sequence[WelfareSpec],
                         optima: dict[str, tuple[float, float]],
                         episodes: int = 10) -> ScoringContext:
    fs = grid_feasible_set(env, optima)
    return ScoringContext(env=env, specs=list(specs), fs=fs,
                          disagreement=disagreement_profile(env), optima=optima,
                          episodes=episodes)


def _match_seed(base_seed: int, i: int, j: int) -> int:
    ss = np.random.SeedSequence([base_seed, i, j])
    return int(ss.generate_state(1)[0] & 0x7FFFFFFF)


def evaluate_lola_runs(env: MatrixGame, runs: Sequence[LolaRun],
                       ctx: ScoringContext, algo: str = "lola_exact") -> list[MatchRecord]:
    """All self-play and ordered cross-play records, bucketed by convention."""
    records = []
    for i, run_i in enumerate(runs):
        for j, run_j in enumerate(runs):
            values = (run_i.self_values if i == j
                      else exact_value(run_i.policy1, run_j.policy2, env))
            score = ctx.score(values)
            if i == j:
                pair_type = SELF_PLAY
            elif "unclassified" in (run_i.convention, run_j.convention):
                pair_type = CROSS_UNCLASSIFIED
            elif run_i.convention == run_j.convention:
                pair_type = CROSS_SAME
            else:
                pair_type = CROSS_DIFF
            records.append(MatchRecord(
                env=env.name, algo=algo,
                welfare_p1=run_i.convention, welfare_p2=run_j.convention,
                pair_type=pair_type, seed_a=run_i.seed, seed_b=run_j.seed,
                v1=values[0], v2=values[1], normalized_score=score,
                convention_p1=run_i.convention, convention_p2=run_j.convention))
    return records


def _pair_value(ctx: ScoringContext, agent1, agent2, match_seed: int):
    env = ctx.env
    if isinstance(env, MatrixGame):
        return steady_state_value_matrix(env, (agent1, agent2),
                                         n_steps=ctx.steps, seed=match_seed)
    return steady_state_value_grid(env, (agent1, agent2),
                                   episodes=ctx.episodes, seed=match_seed)


def _convention_of(ctx: ScoringContext, values) -> str:
    return classify_convention(values, ctx.optima)


def evaluate_amtft_runs(env, runs: Sequence[AmTFTRun], ctx: ScoringContext,
                        base_seed: int = 0, algo: str = "amtft",
                        max_cross_pairs: Optional[int] = None) -> list[MatchRecord]:
    records = []
    n_cross = 0
    for i, run_i in enumerate(runs):
        for j, run_j in enumerate(runs):
            if i != j and max_cross_pairs is not None and n_cross >= max_cross_pairs:
                continue
            if i != j:
                n_cross += 1
            a1 = run_i.bundle.agent(env, 1, record_trace=False)
            a2 = run_j.bundle.agent(env, 2, record_trace=False)
            values = _pair_value(ctx, a1, a2, _match_seed(base_seed, i, j))
            score = ctx.score(values)
            if i == j:
                pair_type = SELF_PLAY
            elif run_i.welfare_label == run_j.welfare_label:
                pair_type = CROSS_SAME
            else:
                pair_type = CROSS_DIFF
            records.append(MatchRecord(
                env=env.name, algo=algo,
                welfare_p1=run_i.welfare_label, welfare_p2=run_j.welfare_label,
                pair_type=pair_type, seed_a=run_i.seed, seed_b=run_j.seed,
                v1=values[0], v2=values[1], normalized_score=score,
                convention_p1=_convention_of(ctx, values),
                convention_p2=_convention_of(ctx, values)))
    return records


def evaluate_adaptive_runs(env, runs_by_set: dict[str, list[AdaptiveRun]],
                           ctx: ScoringContext, base_seed: int = 0,
                           algo: str = "amtft_w",
                           max_cross_pairs: Optional[int] = None) -> list[MatchRecord]:
    """Ordered welfare-set grid: every (set_a, set_b) cell, all run pairings."""
    records = []
    set_items = sorted(runs_by_set.items())
    for cell_a, (label_a, runs_a) in enumerate(set_items):
        for cell_b, (label_b, runs_b) in enumerate(set_items):
            n_cross = 0
            for i, run_i in enumerate(runs_a):
                for j, run_j in enumerate(runs_b):
                    same_run = label_a == label_b and i == j
                    if not same_run and max_cross_pairs is not None \
                            and n_cross >= max_cross_pairs:
                        continue
                    if not same_run:
                        n_cross += 1
                    seed_ij = _match_seed(base_seed, cell_a * 100003 + i,
                                          cell_b * 100003 + j)
                    a1 = run_i.agent(env, 1, seed_offset=17)
                    a2 = run_j.agent(env, 2, seed_offset=31)
                    values = _pair_value(ctx, a1, a2, seed_ij)
                    score = ctx.score(values)
                    if same_run:
                        pair_type = SELF_PLAY
                    elif label_a == label_b:
                        pair_type = CROSS_SAME
                    else:
                        pair_type = CROSS_DIFF
                    records.append(MatchRecord(
                        env=env.name, algo=algo,
                        welfare_p1=label_a, welfare_p2=label_b,
                        pair_type=pair_type, seed_a=run_i.seed, seed_b=run_j.seed,
                        v1=values[0], v2=values[1], normalized_score=score,
                        convention_p1=_convention_of(ctx, values),
                        convention_p2=_convention_of(ctx, values)))
    return records


# ---------------------------------------------------------------------------
# Persistence: results table, aggregates table, manifest.

def write_results(path, records: Sequence[MatchRecord]) -> None:
    ordered = sorted(records, key=lambda r: r.row())
    lines = ["\t".join(RESULTS_COLUMNS)]
    lines += ["\t".join(r.row()) for r in ordered]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_results(path) -> list[MatchRecord]:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].split("\t") != RESULTS_COLUMNS:
        raise ValueError(f"results header mismatch in {path}")
    records = []
    for line in lines[1:]:
        if not line:
            continue
        cells = line.split("\t")
        kw = dict(zip(RESULTS_COLUMNS, cells))
        records.append(MatchRecord(
            env=kw["env"], algo=kw["algo"], welfare_p1=kw["welfare_p1"],
            welfare_p2=kw["welfare_p2"], pair_type=kw["pair_type"],
            seed_a=int(kw["seed_a"]), seed_b=int(kw["seed_b"]),
            v1=float(kw["v1"]), v2=float(kw["v2"]),
            normalized_score=float(kw["normalized_score"]),
            convention_p1=kw["convention_p1"], convention_p2=kw["convention_p2"]))
    return records


def write_aggregates(path, records: Sequence[MatchRecord]) -> None:
    """Grouped cells at two granularities.

    Fine rows group by (env, algo, welfare_p1, welfare_p2, pair_type); coarse
    rows group by (env, algo, pair_type) and carry "*" in the welfare columns.
    The figures frontend draws bars from the coarse rows and grids/profiles
    from the fine rows, with no arithmetic of its own.
    """
    lines = ["\t".join(AGGREGATE_COLUMNS)]

    def emit(keys, cell, wildcard=False):
        line = [format_cell(keys.get(c, "*" if wildcard else "")) for c in
                ("env", "algo", "welfare_p1", "welfare_p2", "pair_type")]
        line += [str(cell.n), repr(cell.mean), repr(cell.stderr),
                 repr(cell.mean_v1), repr(cell.stderr_v1),
                 repr(cell.mean_v2), repr(cell.stderr_v2)]
        lines.append("\t".join(line))

    for key, cell in aggregate(records, ("env", "algo", "welfare_p1",
                                         "welfare_p2", "pair_type")):
        emit(key, cell)
    for key, cell in aggregate(records, ("env", "algo", "pair_type")):
        emit(key, cell, wildcard=True)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_manifest(path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, WelfareSpec):
        return obj.to_dict()
    raise TypeError(f"cannot serialize {type(obj)!r}")
