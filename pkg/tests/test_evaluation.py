"""Tournament records, aggregation arithmetic, persistence, determinism."""

import numpy as np
import pytest

from bargainlab.evaluation import (
    AGGREGATE_COLUMNS,
    RESULTS_COLUMNS,
    AggregateCell,
    LolaRun,
    MatchRecord,
    aggregate,
    evaluate_lola_runs,
    matrix_scoring_context,
    read_results,
    write_aggregates,
    write_results,
)
from bargainlab.games import iasymbos
from bargainlab.lola import train_lola
from bargainlab.scoring import default_scoring_set, matrix_optima_profiles
from bargainlab.welfare import classify_convention


def _record(**kw):
    base = dict(env="iasymbos", algo="lola_exact", welfare_p1="util", welfare_p2="util",
                pair_type="self_play", seed_a=1, seed_b=1, v1=100.0, v2=25.0,
                normalized_score=1.0, convention_p1="util", convention_p2="util")
    base.update(kw)
    return MatchRecord(**base)


class TestAggregate:
    def test_single_record(self):
        rows = aggregate([_record()], ["pair_type"])
        (_, cell), = rows
        assert cell.mean == 1.0
        assert cell.stderr == 0.0
        assert cell.n == 1

    def test_two_records_hand_arithmetic(self):
        # scores 0 and 1: mean 0.5, sample std 0.7071, stderr 0.5
        recs = [_record(normalized_score=0.0), _record(normalized_score=1.0)]
        (_, cell), = aggregate(recs, ["pair_type"])
        assert cell.mean == pytest.approx(0.5)
        assert cell.stderr == pytest.approx(0.5)

    def test_unknown_group_key(self):
        with pytest.raises(ValueError, match="unknown group keys"):
            aggregate([_record()], ["flavor"])

    def test_empty_records(self):
        with pytest.raises(ValueError, match="no records"):
            aggregate([], ["pair_type"])

    def test_deterministic_row_order(self):
        recs = [_record(welfare_p1=w) for w in ("zeta", "alpha", "mid")]
        rows = aggregate(recs, ["welfare_p1"])
        assert [k["welfare_p1"] for k, _ in rows] == ["alpha", "mid", "zeta"]


class TestLolaTournament:
    @pytest.fixture(scope="class")
    def small_tournament(self):
        env = iasymbos()
        specs = default_scoring_set(env)
        optima = matrix_optima_profiles(env, specs)
        runs = []
        for seed in range(4):
            (p1, p2), trace = train_lola(env, eta=0.5, iterations=300, seed=seed)
            values = trace[-1]
            runs.append(LolaRun(seed=seed, policy1=p1, policy2=p2, self_values=values,
                                convention=classify_convention(values, optima)))
        ctx = matrix_scoring_context(env, specs)
        return env, runs, ctx

    def test_record_counts(self, small_tournament):
        env, runs, ctx = small_tournament
        records = evaluate_lola_runs(env, runs[:2], ctx)
        assert len(records) == 4  # 2 self + 2 ordered cross
        assert sum(r.pair_type == "self_play" for r in records) == 2

    def test_identical_runs_cross_equals_self(self, small_tournament):
        env, runs, ctx = small_tournament
        twin = [runs[0], LolaRun(seed=99, policy1=runs[0].policy1, policy2=runs[0].policy2,
                                 self_values=runs[0].self_values, convention=runs[0].convention)]
        records = evaluate_lola_runs(env, twin, ctx)
        by_type = {}
        for r in records:
            by_type.setdefault(r.pair_type, []).append((r.v1, r.v2))
        for cross_vals in by_type.get("cross_same_welfare", []):
            assert cross_vals == pytest.approx(by_type["self_play"][0], rel=1e-9)

    def test_self_play_scores_dominate_cross_diff(self, small_tournament):
        env, runs, ctx = small_tournament
        records = evaluate_lola_runs(env, runs, ctx)
        self_scores = [r.normalized_score for r in records if r.pair_type == "self_play"]
        diff_scores = [r.normalized_score for r in records
                       if r.pair_type == "cross_diff_welfare"]
        if diff_scores:
            assert np.mean(self_scores) > np.mean(diff_scores)


class TestPersistence:
    def test_results_roundtrip(self, tmp_path):
        recs = [_record(), _record(pair_type="cross_same_welfare", seed_b=2,
                                   normalized_score=0.25)]
        path = tmp_path / "results.tsv"
        write_results(path, recs)
        back = read_results(path)
        assert back == sorted(recs, key=lambda r: r.row())

    def test_results_byte_identical(self, tmp_path):
        recs = [_record(seed_a=i, normalized_score=i / 7) for i in range(5)]
        p1, p2 = tmp_path / "a.tsv", tmp_path / "b.tsv"
        write_results(p1, recs)
        write_results(p2, list(reversed(recs)))
        assert p1.read_bytes() == p2.read_bytes()

    def test_header_mismatch_rejected(self, tmp_path):
        path = tmp_path / "results.tsv"
        path.write_text("bogus\theader\n")
        with pytest.raises(ValueError, match="header mismatch"):
            read_results(path)

    def test_aggregates_schema(self, tmp_path):
        recs = [_record(), _record(normalized_score=0.0)]
        path = tmp_path / "aggregates.tsv"
        write_aggregates(path, recs)
        lines = path.read_text().splitlines()
        assert lines[0].split("\t") == AGGREGATE_COLUMNS
        assert len(lines) == 2
