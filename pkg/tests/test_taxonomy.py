import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import vismem
from vismem import (QuerySet, TaxonomyTree, VisualMemory, granularity_experiment,
                    hierarchical_predict, ks_two_sample)
from vismem.errors import EmptyCandidate, EmptySample, FormatError
from vismem.store import MemoryEntry
from vismem.taxonomy import TaxonomyExamples

from oracles import ks_permutation_pvalue, ks_statistic


class TestKsTwoSample:
    def test_identical_samples(self):
        r = ks_two_sample([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
        assert r.statistic == 0.0
        assert r.p_value == 1.0

    def test_disjoint_supports(self):
        r = ks_two_sample([1, 2, 3], [10, 11, 12])
        assert r.statistic == 1.0

    def test_empty_sample_rejected(self):
        with pytest.raises(EmptySample):
            ks_two_sample([], [1.0])

    def test_statistic_matches_walk_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(25):
            a = rng.normal(0, 1, rng.integers(3, 40))
            b = rng.normal(rng.uniform(-1, 1), 1, rng.integers(3, 40))
            r = ks_two_sample(a, b)
            assert abs(r.statistic - ks_statistic(a.tolist(), b.tolist())) < 1e-12

    def test_pvalue_matches_permutation_oracle(self):
        # asymptotic-vs-permutation agreement needs decent effective size;
        # this is a 20-pair slice of the acceptance recipe (seed 17)
        rng = np.random.default_rng(17)
        worst = 0.0
        for trial in range(20):
            shift = rng.uniform(0.05, 0.5)
            n1, n2 = int(rng.integers(400, 800)), int(rng.integers(400, 800))
            a = rng.normal(0, 1, n1)
            b = rng.normal(shift, 1, n2)
            r = ks_two_sample(a, b)
            p_oracle = ks_permutation_pvalue(a, b, n_permutations=10_000, seed=trial)
            worst = max(worst, abs(r.p_value - p_oracle))
        assert worst <= 0.02

    def test_matches_scipy_asymptotic_lambda(self):
        # same D -> same p as scipy's kstwobign evaluated at our lambda
        scipy_stats = pytest.importorskip("scipy.stats")
        rng = np.random.default_rng(2)
        a = rng.normal(0, 1, 60)
        b = rng.normal(0.4, 1, 80)
        r = ks_two_sample(a, b)
        ne = 60 * 80 / 140
        lam = (np.sqrt(ne) + 0.12 + 0.11 / np.sqrt(ne)) * r.statistic
        assert abs(r.p_value - float(scipy_stats.kstwobign.sf(lam))) < 1e-9

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(-100, 100), min_size=2, max_size=30),
           st.lists(st.floats(-100, 100), min_size=2, max_size=30))
    def test_symmetry(self, a, b):
        r1 = ks_two_sample(a, b)
        r2 = ks_two_sample(b, a)
        assert r1.statistic == r2.statistic
        assert r1.p_value == r2.p_value

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(0.01, 10), min_size=3, max_size=30),
           st.lists(st.floats(0.01, 10), min_size=3, max_size=30))
    def test_monotone_transform_invariance(self, a, b):
        r1 = ks_two_sample(a, b)
        r2 = ks_two_sample(np.log(a), np.log(b))
        assert abs(r1.statistic - r2.statistic) < 1e-12


class TestTaxonomyTree:
    def test_trie_construction(self):
        tree = TaxonomyTree([["x", "y", "z1"], ["x", "y", "z2"], ["x", "w", "z3"]])
        assert len(tree) == 1 + 1 + 2 + 3
        assert tree.leaf_depth == 3
        assert [c.name for c in tree.children_of(0)] == ["x"]

    def test_children_in_declared_order(self):
        tree = TaxonomyTree([["b", "1"], ["a", "2"], ["b", "3"]])
        assert [c.name for c in tree.children_of(0)] == ["b", "a"]

    def test_nonuniform_depth_rejected(self):
        with pytest.raises(FormatError):
            TaxonomyTree([["a", "b"], ["a"]])

    def test_resolve_and_paths(self):
        tree = TaxonomyTree([["k", "p", "s"]])
        leaf = tree.resolve(["k", "p", "s"])
        assert tree.name_path(leaf) == ["k", "p", "s"]
        assert tree.id_path(leaf)[0] == 0

    def test_resolve_missing_edge(self):
        tree = TaxonomyTree([["k", "p", "s"]])
        with pytest.raises(FormatError):
            tree.resolve(["k", "nope", "s"])

    def test_from_file(self, tmp_path):
        f = tmp_path / "paths.txt"
        f.write_text("a/b/c\na/b/d\n\n")
        tree = TaxonomyTree.from_file(f)
        assert tree.leaf_depth == 3
        assert len(tree) == 5


@pytest.fixture(scope="module")
def taxo_setup(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("taxo")
    vismem.gen_fixture(tmp / "mem", per_class=30, dims=64, spread=0.05,
                       taxonomy_depth=3, taxonomy_fanout=4, seed=5,
                       holdout_per_class=3, queries_out=tmp / "q")
    memory = VisualMemory.build(tmp / "mem")
    tree = TaxonomyTree.from_file(tmp / "mem" / "taxonomy_paths.txt")
    queries = QuerySet.load(tmp / "q")
    return memory, tree, queries


class TestHierarchicalPredict:
    def test_routes_to_correct_leaf(self, taxo_setup):
        memory, tree, queries = taxo_setup
        examples = TaxonomyExamples(tree, memory)
        hits = 0
        for i in range(len(queries)):
            pred = hierarchical_predict(queries.vectors[i], memory, tree, examples=examples)
            hits += pred[-1] == tree.resolve(queries.taxonomy_paths[i])
        assert hits / len(queries) >= 0.95

    def test_agrees_with_nearest_centroid_oracle(self, taxo_setup):
        memory, tree, queries = taxo_setup
        examples = TaxonomyExamples(tree, memory)
        # oracle: leaf whose example-mean is closest to the query
        leaf_ids = [n.id for n in tree.nodes if n.depth == tree.leaf_depth]
        centroids = np.vstack([
            memory.vectors[examples.rows(l)].astype(np.float64).mean(axis=0)
            for l in leaf_ids
        ])
        centroids /= np.linalg.norm(centroids, axis=1, keepdims=True)
        agree = 0
        for i in range(len(queries)):
            pred = hierarchical_predict(queries.vectors[i], memory, tree, examples=examples)
            oracle = leaf_ids[int(np.argmax(centroids @ queries.vectors[i].astype(np.float64)))]
            agree += pred[-1] == oracle
        assert agree / len(queries) >= 0.95

    def test_path_is_valid_root_to_leaf(self, taxo_setup):
        memory, tree, queries = taxo_setup
        pred = hierarchical_predict(queries.vectors[0], memory, tree)
        assert pred[0] == tree.root.id
        assert len(pred) == tree.leaf_depth + 1
        for parent, child in zip(pred, pred[1:]):
            assert child in tree.nodes[parent].children

    def test_single_leaf_tree(self):
        rng = np.random.default_rng(3)
        tree = TaxonomyTree([["only", "leaf"]])
        from conftest import make_memory
        vecs = rng.standard_normal((5, 8))
        m = make_memory(vecs, ["leaf"] * 5,
                        taxonomy_paths=[["only", "leaf"]] * 5)
        pred = hierarchical_predict(m.vectors[0], m, tree)
        assert pred[-1] == tree.resolve(["only", "leaf"])

    def test_empty_candidate_raises_without_skip(self, taxo_setup):
        memory, tree, queries = taxo_setup
        # drop every exemplar of the first leaf
        first_leaf = tree.resolve(queries.taxonomy_paths[0])
        rows = TaxonomyExamples(tree, memory).rows(first_leaf)
        mem2 = memory.copy()
        mem2.remove(memory.ids[rows].tolist())
        with pytest.raises(EmptyCandidate):
            for i in range(len(queries)):
                hierarchical_predict(queries.vectors[i], mem2, tree)

    def test_skip_empty_excludes_candidate(self, taxo_setup):
        memory, tree, queries = taxo_setup
        target_leaf = tree.resolve(queries.taxonomy_paths[0])
        rows = TaxonomyExamples(tree, memory).rows(target_leaf)
        mem2 = memory.copy()
        mem2.remove(memory.ids[rows].tolist())
        examples = TaxonomyExamples(tree, mem2)
        for i in range(len(queries)):
            pred = hierarchical_predict(queries.vectors[i], mem2, tree,
                                        examples=examples, skip_empty=True)
            assert pred[-1] != target_leaf

    def test_deterministic(self, taxo_setup):
        memory, tree, queries = taxo_setup
        a = hierarchical_predict(queries.vectors[5], memory, tree, seed=9)
        b = hierarchical_predict(queries.vectors[5], memory, tree, seed=9)
        assert a == b


class TestGranularity:
    def test_ladder_monotone_at_species_level(self, taxo_setup):
        memory, tree, queries = taxo_setup
        target_path = queries.taxonomy_paths[0]
        target_leaf = tree.resolve(target_path)
        examples = TaxonomyExamples(tree, memory)
        target_rows = examples.rows(target_leaf)

        # pool: the target species' exemplars, removed from the base memory
        pool = [memory.entry(int(memory.ids[r])) for r in target_rows]
        base = memory.copy()
        base.remove(memory.ids[target_rows].tolist())

        holdout_rows = [i for i in range(len(queries))
                        if queries.taxonomy_paths[i] == target_path]
        holdouts = queries.vectors[holdout_rows]

        ladder = (0, 1, 5, 10, 20)
        records = granularity_experiment(base, tree, target_path, pool, holdouts,
                                         ladder=ladder, seed=3)
        species = {r["step"]: r["accuracy"] for r in records
                   if r["level"] == tree.leaf_depth}
        assert species[0] == 0.0  # leaf absent from candidates
        steps = sorted(species)
        assert all(species[a] <= species[b] + 1e-9 for a, b in zip(steps, steps[1:]))
        assert species[max(steps)] > 0.5

    def test_baseline_reported(self, taxo_setup):
        memory, tree, queries = taxo_setup
        target_path = queries.taxonomy_paths[0]
        records = granularity_experiment(memory, tree, target_path, [],
                                         queries.vectors[:2], ladder=(0,), seed=0)
        assert all("majority_baseline" in r for r in records)
        assert len(records) == tree.leaf_depth
