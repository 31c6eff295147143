import itertools

import numpy as np
import pytest

from app.models.embedding_model.Main import DeltaSet
from app.models.kg_model.Graph import TypePair
from app.services.clusterService import ClustererConfig
from app.services.refineService import (Partition, baseline_partition, evaluate_all, evaluate_config,
                                        finegres_search, ground_truth_labels, group_similarity, initial_partition,
                                        merge_step, subsample_deltas)
from app.services.typeService import PairSimilarityMatrix
from app.utils.errors import RefinementError
from config import config

KMEANS = ClustererConfig(kind=config.ClustererKind.KMeans, seed=5)
A, B, C, D, E, F = range(6)


def matrix_of(pairs, values):
    return PairSimilarityMatrix(list(pairs), np.asarray(values, dtype=float))


def uniform_matrix(pairs, value=0.3):
    values = np.full((len(pairs), len(pairs)), value)
    np.fill_diagonal(values, 1.0)
    return matrix_of(pairs, values)


def planted_deltas(senses, pairs_per_sense=2, rows_per_pair=15, d=6, seed=0):
    """
    Δ rows of a relation whose senses sit 20 apart along one axis; pairs of
    one sense share a center. The similarity matrix ranks pairs of one sense
    highest and, across senses, prefers the senses that lie furthest apart,
    so no coarser level can be reproduced by clustering.
    """
    rng = np.random.default_rng(seed)
    centers = np.zeros((senses, d))
    centers[:, 0] = 20.0 * np.arange(senses)
    pairs, vectors, labels = [], [], []
    for s in range(senses):
        for j in range(pairs_per_sense):
            pair = TypePair(2 * s, 100 + 2 * s + j)
            pairs.append(pair)
            vectors.append(centers[s] + rng.normal(scale=0.3, size=(rows_per_pair, d)))
            labels.extend([pair] * rows_per_pair)
    sense_of = {p: i // pairs_per_sense for i, p in enumerate(pairs)}
    values = np.array([[1.0 if p == q else (0.9 if sense_of[p] == sense_of[q] else 0.1 + 0.01 * abs(sense_of[p] - sense_of[q]))
                        for q in pairs] for p in pairs])
    return DeltaSet(relation=0, vectors=np.vstack(vectors), pair_labels=labels,
                    fact_indices=list(range(len(labels)))), matrix_of(pairs, values)


def test_initial_partition():
    pairs = [TypePair(A, B), TypePair(C, D), TypePair(E, F)]
    partition = initial_partition(pairs)
    assert partition.groups == ((pairs[0],), (pairs[1],), (pairs[2],))
    assert set(partition.group_of_pair) == set(pairs)
    assert len(initial_partition([TypePair(A, B)])) == 1


def test_partition_rejects_overlap():
    with pytest.raises(RefinementError):
        Partition(((TypePair(A, B),), (TypePair(A, B),)))


def test_group_similarity_is_average_linkage():
    p1, p2, q = TypePair(A, B), TypePair(C, D), TypePair(E, F)
    matrix = matrix_of([p1, p2, q], [[1.0, 0.0, 0.4], [0.0, 1.0, 0.6], [0.4, 0.6, 1.0]])
    assert group_similarity([p1], [q], matrix) == pytest.approx(0.4)
    assert group_similarity([p1, p2], [q], matrix) == pytest.approx(0.5)


def test_group_similarity_matches_double_loop():
    rng = np.random.default_rng(2)
    pairs = [TypePair(i, i + 10) for i in range(6)]
    values = rng.uniform(-1, 1, size=(6, 6))
    values = (values + values.T) / 2
    np.fill_diagonal(values, 1.0)
    matrix = matrix_of(pairs, values)
    a, b = pairs[:2], pairs[3:]
    loop = sum(values[i, j] for i in range(2) for j in range(3, 6)) / 6
    assert group_similarity(a, b, matrix) == pytest.approx(loop, abs=1e-12)


def test_merge_step_picks_most_similar():
    pairs = [TypePair(A, B), TypePair(C, D), TypePair(E, F)]
    matrix = matrix_of(pairs, [[1.0, 0.9, 0.2], [0.9, 1.0, 0.1], [0.2, 0.1, 1.0]])
    merged, record = merge_step(initial_partition(pairs), matrix)
    assert merged.groups == ((pairs[0], pairs[1]), (pairs[2],))
    assert record.similarity == pytest.approx(0.9)


def test_merge_step_tie_goes_to_first_groups():
    pairs = [TypePair(A, B), TypePair(C, D), TypePair(E, F), TypePair(A, F)]
    merged, _ = merge_step(initial_partition(pairs), uniform_matrix(pairs))
    assert merged.groups[0] == (pairs[0], pairs[1])
    assert len(merged) == 3


def test_merge_step_two_and_one_groups():
    pairs = [TypePair(A, B), TypePair(C, D)]
    merged, _ = merge_step(initial_partition(pairs), uniform_matrix(pairs))
    assert len(merged) == 1
    with pytest.raises(RefinementError):
        merge_step(merged, uniform_matrix(pairs))


def test_ground_truth_labels():
    deltas, _ = planted_deltas(2)
    singletons = initial_partition(list(dict.fromkeys(deltas.pair_labels)))
    labels = ground_truth_labels(singletons, deltas)
    assert np.bincount(labels).tolist() == [15, 15, 15, 15]
    one = Partition((tuple(singletons.pairs),))
    assert set(ground_truth_labels(one, deltas).tolist()) == {0}
    with pytest.raises(RefinementError):
        ground_truth_labels(Partition(((TypePair(A, B),),)), deltas)


def test_evaluate_config_on_separated_senses():
    deltas, _ = planted_deltas(3)
    pairs = list(dict.fromkeys(deltas.pair_labels))
    by_sense = Partition(tuple(tuple(pairs[2 * s:2 * s + 2]) for s in range(3)))
    assert evaluate_config(by_sense, deltas, KMEANS) >= 0.99
    assert evaluate_config(Partition((tuple(pairs),)), deltas, KMEANS) == 1.0


def test_evaluate_config_is_bounded_on_noise():
    rng = np.random.default_rng(1)
    pairs = [TypePair(A, B), TypePair(C, D)]
    deltas = DeltaSet(0, rng.normal(size=(20, 4)), [pairs[i % 2] for i in range(20)])
    assert 0.0 <= evaluate_config(initial_partition(pairs), deltas, KMEANS) <= 1.0


@pytest.mark.parametrize("senses", [2, 3, 4])
def test_search_recovers_planted_senses(senses):
    deltas, matrix = planted_deltas(senses)
    result = finegres_search(deltas, matrix, KMEANS, relation_name="created")
    assert result.chosen_k == senses
    assert result.objective >= 0.99
    groups = {frozenset(g) for g in result.chosen_partition.groups}
    pairs = list(dict.fromkeys(deltas.pair_labels))
    assert groups == {frozenset(pairs[2 * s:2 * s + 2]) for s in range(senses)}


def test_search_trace_and_levels():
    deltas, matrix = planted_deltas(3)
    result = finegres_search(deltas, matrix, KMEANS)
    L = len(result.pairs)
    assert len(result.merge_trace) == L - 1
    assert [entry.k for entry in result.per_k] == list(range(L, 1, -1))
    for j, entry in enumerate(result.per_k):
        assert len(entry.partition) == L - j
        assert sorted(entry.partition.pairs) == sorted(result.pairs)
    chosen = next(e for e in result.per_k if e.k == result.chosen_k)
    assert chosen.partition is result.chosen_partition
    assert evaluate_config(result.chosen_partition, deltas, KMEANS) == pytest.approx(result.objective, abs=1e-12)


def test_search_single_pair():
    pair = TypePair(A, B)
    deltas = DeltaSet(0, np.ones((4, 3)), [pair] * 4)
    result = finegres_search(deltas, uniform_matrix([pair]), KMEANS)
    assert result.chosen_k == 1
    assert result.objective == 1.0
    assert result.merge_trace == []


def test_search_two_pairs_scores_only_k2():
    pairs = [TypePair(A, B), TypePair(C, D)]
    rng = np.random.default_rng(0)
    deltas = DeltaSet(0, rng.normal(size=(10, 3)), [pairs[i % 2] for i in range(10)])
    result = finegres_search(deltas, uniform_matrix(pairs), KMEANS)
    assert [entry.k for entry in result.per_k] == [2]
    assert result.chosen_k == 2
    assert len(result.merge_trace) == 1


def test_argmax_tie_prefers_fewer_groups():
    # first two pairs sit next to each other, the third far away: k=3 and k=2 both score 1
    pairs = [TypePair(A, B), TypePair(C, D), TypePair(E, F)]
    positions = [0.0, 1.0, 100.0]
    deltas = DeltaSet(0, np.array([[positions[i % 3]] for i in range(9)]), [pairs[i % 3] for i in range(9)])
    result = finegres_search(deltas, uniform_matrix(pairs), KMEANS)
    assert [entry.score for entry in result.per_k] == [1.0, 1.0]
    assert result.chosen_k == 2
    assert result.tie_broken


def test_search_is_deterministic():
    deltas, matrix = planted_deltas(3, seed=4)
    first = finegres_search(deltas, matrix, KMEANS)
    second = finegres_search(deltas, matrix, KMEANS)
    assert [e.score for e in first.per_k] == [e.score for e in second.per_k]
    assert first.chosen_partition == second.chosen_partition


def test_subsampling_is_stratified():
    deltas, _ = planted_deltas(2, rows_per_pair=30)
    sampled = subsample_deltas(deltas, 60, seed=1)
    assert len(sampled) == 60
    counts = {p: sampled.pair_labels.count(p) for p in set(sampled.pair_labels)}
    assert sorted(counts.values()) == [15, 15, 15, 15]
    assert subsample_deltas(deltas, 1000, seed=1) is deltas


def test_baselines():
    pairs = [TypePair(A, B), TypePair(A, C), TypePair(D, B)]
    head = baseline_partition(config.BaselineKind.Head, pairs)
    tail = baseline_partition(config.BaselineKind.Tail, pairs)
    assert head.groups == ((pairs[0], pairs[1]), (pairs[2],))
    assert tail.groups == ((pairs[0], pairs[2]), (pairs[1],))
    assert len(baseline_partition(config.BaselineKind.Max, pairs)) == 3


def test_partition_invariant_over_all_levels():
    pairs = [TypePair(i, j) for i, j in itertools.product(range(3), range(3, 5))]
    rng = np.random.default_rng(3)
    values = rng.uniform(size=(6, 6))
    values = (values + values.T) / 2
    np.fill_diagonal(values, 1.0)
    matrix = matrix_of(pairs, values)
    partition = initial_partition(pairs)
    while len(partition) > 1:
        before = len(partition)
        partition, record = merge_step(partition, matrix)
        assert len(partition) == before - 1
        assert sorted(partition.pairs) == sorted(pairs)
        assert record.similarity == pytest.approx(group_similarity(record.group_a, record.group_b, matrix))


def test_evaluate_all_weights_by_fact_count(fixture_kg):
    from app.models.embedding_model.Main import TrainConfig, initial_model, train
    from app.services.refineService import refine_relations
    from app.services.typeService import centroid_type_vectors

    settings = TrainConfig(dim=8, epochs=20)
    model, _ = train(initial_model(fixture_kg, config.ModelKind.TransE, settings), fixture_kg, settings)
    table = centroid_type_vectors(model, fixture_kg)
    refinements = refine_relations(model, fixture_kg, fixture_kg.relation_ids, table, KMEANS)
    rows, mean = evaluate_all(refinements)
    assert [r.relation for r in rows] == ["created", "locatedIn"]
    assert mean.fact_count == 14
    expected = (rows[0].c_finegres * 8 + rows[1].c_finegres * 6) / 14
    assert mean.c_finegres == pytest.approx(expected)
    for row in rows + [mean]:
        for value in (row.c_max, row.c_head, row.c_tail, row.c_finegres):
            assert 0.0 <= value <= 1.0


def test_parallel_refinement_matches_serial(fixture_kg):
    from app.models.embedding_model.Main import TrainConfig, initial_model, train
    from app.services.refineService import refine_relations
    from app.services.typeService import centroid_type_vectors

    settings = TrainConfig(dim=8, epochs=10)
    model, _ = train(initial_model(fixture_kg, config.ModelKind.DistMult, settings), fixture_kg, settings)
    table = centroid_type_vectors(model, fixture_kg)
    serial = refine_relations(model, fixture_kg, fixture_kg.relation_ids, table, KMEANS, jobs=1)
    parallel = refine_relations(model, fixture_kg, fixture_kg.relation_ids, table, KMEANS, jobs=4)
    assert [r.relation for r in parallel] == [r.relation for r in serial]
    for a, b in zip(serial, parallel):
        assert [e.score for e in a.result.per_k] == [e.score for e in b.result.per_k]
        assert a.result.chosen_partition == b.result.chosen_partition
