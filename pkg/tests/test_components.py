"""Gini coefficient, anomaly ranking, and component summaries."""

import json
import math

import numpy as np
import pytest

from countcp import FactorSet, gini, rank_components, summarize, write_component_reports
from conftest import random_factors


def pairwise_gini_oracle(v):
    """O(n^2) definition: mean absolute difference over twice the mean."""
    v = np.asarray(v, dtype=float)
    n = v.size
    total = 0.0
    for a in v:
        for b in v:
            total += abs(a - b)
    return total / (2.0 * n * n * v.mean())


class TestGini:
    def test_uniform_vector_is_zero(self):
        assert gini([3.0, 3.0, 3.0, 3.0]) == 0.0

    @pytest.mark.parametrize("n", [2, 3, 7, 50, 1000])
    def test_one_hot_is_exactly_n_minus_one_over_n(self, n):
        v = np.zeros(n)
        v[n // 2] = 5.0
        assert gini(v) == (n - 1) / n

    def test_matches_pairwise_oracle(self, rng):
        for _ in range(50):
            v = rng.uniform(0.0, 3.0, size=7)
            assert gini(v) == pytest.approx(pairwise_gini_oracle(v), abs=1e-12)

    def test_scale_invariant(self, rng):
        v = rng.uniform(0.0, 2.0, size=11)
        for c in (1e-6, 0.5, 3.0, 1e7):
            assert gini(c * v) == pytest.approx(gini(v), abs=1e-12)

    def test_permutation_invariant(self, rng):
        v = rng.uniform(0.0, 2.0, size=13)
        shuffled = v.copy()
        rng.shuffle(shuffled)
        assert gini(shuffled) == pytest.approx(gini(v), abs=1e-14)

    def test_all_zero_marker_and_errors(self):
        assert math.isnan(gini([0.0, 0.0, 0.0]))
        with pytest.raises(ValueError):
            gini([1.0, -0.5])
        with pytest.raises(ValueError):
            gini([1.0])


class TestRankComponents:
    def factors_with_time(self, time_matrix, rng):
        t = np.asarray(time_matrix, dtype=float)
        k = t.shape[1]
        mats = [rng.uniform(0.1, 1.0, size=(4, k)) for _ in range(3)] + [t]
        return FactorSet(mats)

    def test_one_hot_outranks_uniform(self, rng):
        time = np.stack([np.full(6, 0.5), np.eye(6)[0]], axis=1)
        f = self.factors_with_time(time, rng)
        assert rank_components(f) == [1, 0]

    def test_identical_columns_tie_break_by_index(self, rng):
        column = rng.uniform(0.1, 1.0, size=6)
        time = np.stack([column] * 3, axis=1)
        f = self.factors_with_time(time, rng)
        assert rank_components(f) == [0, 1, 2]

    def test_matches_gini_oracle_order(self, rng):
        f = random_factors((5, 5, 3, 9), 4, rng)
        scores = [pairwise_gini_oracle(f.factors[3][:, k]) for k in range(4)]
        expected = sorted(range(4), key=lambda k: (-scores[k], k))
        assert rank_components(f) == expected

    def test_rescaling_a_time_column_does_not_change_the_order(self, rng):
        f = random_factors((4, 4, 2, 8), 3, rng)
        scaled = f.factors[3].copy()
        scaled[:, 1] *= 100.0
        g = f.replace_mode(3, scaled)
        assert rank_components(f) == rank_components(g)


class TestSummarize:
    def labels_for(self, shape):
        return [
            [f"s{i}" for i in range(shape[0])],
            [f"r{i}" for i in range(shape[1])],
            [f"a{i}" for i in range(shape[2])],
            [f"t{i}" for i in range(shape[3])],
        ]

    def test_top_n_equals_mode_size_returns_whole_sorted_column(self, rng):
        shape = (4, 4, 3, 5)
        f = random_factors(shape, 2, rng)
        labels = self.labels_for(shape)
        summary = summarize(f, labels, k=0, top_n=4)
        values = [v for _, v in summary.top["sender"]]
        assert values == sorted(values, reverse=True)
        assert len(values) == 4

    def test_unique_maximum_comes_first(self, rng):
        shape = (4, 4, 2, 5)
        f = random_factors(shape, 2, rng)
        boosted = f.factors[0].copy()
        boosted[2, 0] = 50.0
        f = f.replace_mode(0, boosted)
        labels = self.labels_for(shape)
        summary = summarize(f, labels, k=0, top_n=2)
        assert summary.top["sender"][0][0] == "s2"

    def test_matches_sort_oracle_and_never_fabricates_labels(self, rng):
        shape = (5, 6, 3, 4)
        f = random_factors(shape, 3, rng)
        labels = self.labels_for(shape)
        summary = summarize(f, labels, k=1, top_n=3)
        for mode, panel in enumerate(("sender", "receiver", "action")):
            column = f.factors[mode][:, 1]
            expected = sorted(
                zip(labels[mode], column), key=lambda lv: -lv[1]
            )[:3]
            got = summary.top[panel]
            assert [lab for lab, _ in got] == [lab for lab, _ in expected]
            for lab, _ in got:
                assert lab in labels[mode]
        assert np.array_equal(summary.time_values, f.factors[3][:, 1])
        assert summary.time_labels == labels[3]


class TestReports:
    def test_report_files_and_ranked_index(self, rng, tmp_path):
        shape = (4, 4, 2, 6)
        f = random_factors(shape, 3, rng)
        labels = [
            [f"s{i}" for i in range(4)],
            [f"r{i}" for i in range(4)],
            ["talk", "fight"],
            [f"2001-{m:02d}" for m in range(1, 7)],
        ]
        out = write_component_reports(f, labels, tmp_path / "components", top_n=3)
        index = (out / "index.txt").read_text().strip().splitlines()
        assert index[0] == "rank\tcomponent\tgini"
        assert len(index) == 1 + 3
        ranked = [int(line.split("\t")[1]) for line in index[1:]]
        assert ranked == rank_components(f)
        for k in range(3):
            stem = f"component_{k:03d}"
            assert (out / f"{stem}.txt").exists()
            payload = json.loads((out / f"{stem}.json").read_text())
            assert payload["component"] == k
            panel = (out / f"{stem}_sender.txt").read_text().splitlines()
            assert panel[0] == "rank\tlabel\tvalue"
            assert len(panel) == 1 + 3
            time_panel = (out / f"{stem}_time.txt").read_text().splitlines()
            assert len(time_panel) == 1 + 6
