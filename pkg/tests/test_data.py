import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sdfeel._errors import InvalidArgumentError
from sdfeel.data import (
    ClusterAssignment,
    LabeledDataset,
    PartitionPlan,
    assign_clusters,
    dirichlet_partition,
    export_csv,
    generate_synthetic,
    label_tv_distance,
    largest_remainder,
)
from sdfeel.learner import accuracy, gradient

FIXTURE = Path(__file__).parent / "fixtures" / "dirichlet_c50_a0.5_seed2024.json"


def set_cover_ok(client_lists, n):
    """Independent validity check: every index in 0..n-1 covered by exactly one non-empty list."""
    owner = {}
    for c, lst in enumerate(client_lists):
        if not lst:
            return False
        for x in lst:
            if x in owner or not (0 <= x < n) or int(x) != x:
                return False
            owner[x] = c
    return len(owner) == n


class TestSynthetic:
    def test_deterministic(self):
        a = generate_synthetic(4, 3, 20, 2.0, seed=9)
        b = generate_synthetic(4, 3, 20, 2.0, seed=9)
        assert a.features.tobytes() == b.features.tobytes()
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_histogram(self):
        d = generate_synthetic(3, 4, 5, 1.0, seed=0)
        assert d.n_samples == 15
        np.testing.assert_array_equal(np.bincount(d.labels), [5, 5, 5])

    def test_separable_at_large_separation(self):
        d = generate_synthetic(2, 2, 200, 10.0, seed=1)
        w = np.zeros(6)
        for _ in range(300):
            w -= 1.0 * gradient(w, d, np.arange(d.n_samples))
        assert accuracy(w, d) >= 0.99

    def test_more_classes_than_dims(self):
        d = generate_synthetic(10, 3, 10, 2.0, seed=0)
        assert d.features.shape == (100, 3)
        e = generate_synthetic(10, 3, 10, 2.0, seed=1)
        # class means shared across seeds
        ma = np.array([d.features[d.labels == c].mean(0) for c in range(10)])
        me = np.array([e.features[e.labels == c].mean(0) for c in range(10)])
        assert np.abs(ma - me).max() < 2.0

    def test_validation(self):
        with pytest.raises(InvalidArgumentError):
            generate_synthetic(1, 2, 3, 1.0, 0)
        with pytest.raises(InvalidArgumentError):
            generate_synthetic(2, 2, 3, 0.0, 0)
        with pytest.raises(InvalidArgumentError):
            LabeledDataset(np.zeros((2, 2)), np.array([0, 5]), 3)
        with pytest.raises(InvalidArgumentError):
            LabeledDataset(np.array([[np.nan, 0.0]]), np.array([0]), 2)


class TestLargestRemainder:
    def test_conserves_total(self):
        np.testing.assert_array_equal(largest_remainder([0.5, 0.25, 0.25], 3), [1, 1, 1])
        np.testing.assert_array_equal(largest_remainder([1 / 3] * 3, 10), [4, 3, 3])

    @given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=20), st.integers(0, 500))
    def test_property(self, raw, total):
        p = np.asarray(raw) + 1e-9
        p /= p.sum()
        counts = largest_remainder(p, total)
        assert counts.sum() == total
        assert np.all(np.abs(counts - p * total) < 1.0 + 1e-9)


class TestDirichlet:
    def test_huge_concentration_is_uniform(self):
        labels = np.repeat(np.arange(4), 100)
        plan = dirichlet_partition(labels, 10, 1e9, seed=3)
        for ix in plan.client_indices:
            hist = np.bincount(labels[list(ix)], minlength=4)
            assert np.all(np.abs(hist - 10) <= 2)

    @given(st.integers(0, 2 ** 32 - 1), st.floats(0.01, 100.0), st.integers(1, 30),
           st.integers(30, 200))
    @settings(max_examples=1000, deadline=None)
    def test_partition_validity(self, seed, conc, clients, n):
        labels = np.random.default_rng(seed).integers(0, 5, size=n)
        plan = dirichlet_partition(labels, clients, conc, seed)
        assert set_cover_ok([list(ix) for ix in plan.client_indices], n)
        plan.validate(n)
        assert all(list(ix) == sorted(ix) for ix in plan.client_indices)

    def test_deterministic_and_seed_sensitive(self):
        labels = np.repeat(np.arange(5), 40)
        a = dirichlet_partition(labels, 8, 0.5, 1)
        assert a == dirichlet_partition(labels, 8, 0.5, 1)
        assert a != dirichlet_partition(labels, 8, 0.5, 2)

    def test_deterministic_across_processes(self):
        code = ("import numpy as np; from sdfeel.data import dirichlet_partition;"
                "print(dirichlet_partition(np.repeat(np.arange(5), 40), 8, 0.5, 11).client_indices)")
        out = [subprocess.run([sys.executable, "-c", code], capture_output=True, text=True,
                              check=True).stdout for _ in range(2)]
        assert out[0] == out[1] and out[0]

    def test_empty_client_repair(self):
        labels = np.zeros(5, dtype=int)
        plan = dirichlet_partition(labels, 5, 0.01, seed=0)
        assert all(len(ix) == 1 for ix in plan.client_indices)

    def test_errors(self):
        with pytest.raises(InvalidArgumentError):
            dirichlet_partition([0, 1], 3, 1.0, 0)
        with pytest.raises(InvalidArgumentError):
            dirichlet_partition([0, 1], 1, 0.0, 0)

    def test_frozen_fixture(self):
        fx = json.loads(FIXTURE.read_text())
        labels = np.repeat(np.arange(10), 100)
        assert set_cover_ok(fx["client_indices"], labels.size)
        plan = dirichlet_partition(labels, fx["num_clients"], fx["concentration"], fx["seed"])
        assert [list(ix) for ix in plan.client_indices] == fx["client_indices"]

    def test_lower_concentration_more_noniid(self):
        labels = np.repeat(np.arange(10), 100)
        concs = [0.1, 0.5, 1.0, 10.0, 1e9]
        tv = [np.mean([label_tv_distance(labels, dirichlet_partition(labels, 20, c, s), 10)
                       for s in range(20)]) for c in concs]
        assert all(a >= b for a, b in zip(tv, tv[1:])), tv


class TestAssignment:
    def test_default_layout(self):
        a = assign_clusters(50, 10)
        assert a.members(0) == [0, 1, 2, 3, 4]
        assert all(len(a.members(d)) == 5 for d in range(10))

    def test_round_robin(self):
        assert assign_clusters(4, 2, "round_robin").members(0) == [0, 2]

    def test_one_each(self):
        a = assign_clusters(3, 3)
        assert a.clusters() == [[0], [1], [2]]

    def test_errors(self):
        with pytest.raises(InvalidArgumentError):
            assign_clusters(2, 3)
        with pytest.raises(InvalidArgumentError):
            assign_clusters(4, 2, "random")
        with pytest.raises(InvalidArgumentError):
            ClusterAssignment(3, 2, (0, 0, 0))

    @given(st.integers(1, 20), st.integers(0, 40))
    def test_contiguous_is_total_and_balanced(self, D, extra):
        C = D + extra
        a = assign_clusters(C, D)
        sizes = [len(m) for m in a.clusters()]
        assert sum(sizes) == C and max(sizes) - min(sizes) <= 1


def test_plan_validate_rejects_overlap():
    with pytest.raises(InvalidArgumentError):
        PartitionPlan(((0, 1), (1, 2))).validate(3)
    with pytest.raises(InvalidArgumentError):
        PartitionPlan(((0, 1, 2), ())).validate(3)


def test_export_csv(tmp_path):
    d = generate_synthetic(2, 3, 4, 1.0, seed=0)
    plan = dirichlet_partition(d.labels, 2, 1.0, 0)
    path = tmp_path / "data.csv"
    export_csv(path, d, plan)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["index", "client", "class", "f0", "f1", "f2"]
    assert len(rows) == 9 and all(len(r) == 6 for r in rows)
    for r in rows[1:]:
        n = int(r[0])
        assert int(r[1]) in (0, 1) and n in plan.client_indices[int(r[1])]
        assert float(r[3]) == d.features[n, 0]
