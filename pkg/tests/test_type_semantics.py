import io
import math

import numpy as np
import pytest

from app.models.embedding_model.Model import EmbeddingModel
from app.models.kg_model.Graph import TypePair, Vocabulary
from app.services.typeService import (TypeVectorTable, centroid_type_vectors, load_type_vectors, pair_similarity,
                                      pair_similarity_matrix)
from app.utils.errors import TypeVectorError
from config import config
from tests.conftest import make_kg


def table_of(vectors):
    return TypeVectorTable({i: np.asarray(v, dtype=float) for i, v in enumerate(vectors)},
                           config.TypeVectorSource.External)


def unit(angle):
    return [math.cos(angle), math.sin(angle)]


def test_load_type_vectors():
    types = Vocabulary(["artist", "painting"])
    table = load_type_vectors(io.StringIO("artist\t1\t0\t0\npainting\t0\t1\t0\n"), types)
    assert table.source == config.TypeVectorSource.External
    assert len(table.vectors) == 2
    assert np.array_equal(table.vector(types.id_of("painting")), [0, 1, 0])


def test_unknown_types_in_file_are_skipped():
    types = Vocabulary(["artist"])
    table = load_type_vectors(io.StringIO("artist\t1\t0\nplanet\t0\t1\n"), types)
    assert list(table.vectors) == [0]


def test_mixed_dimension_lists_offenders():
    types = Vocabulary(["a", "b", "c"])
    with pytest.raises(TypeVectorError, match="b"):
        load_type_vectors(io.StringIO("a\t1\t0\t0\nb\t1\t0\nc\t0\t0\t1\n"), types)


def test_zero_vector_is_rejected():
    types = Vocabulary(["a", "b"])
    with pytest.raises(TypeVectorError, match="zero"):
        load_type_vectors(io.StringIO("a\t1\t0\nb\t0\t0\n"), types)


def test_missing_required_type():
    types = Vocabulary(["a", "b"])
    with pytest.raises(TypeVectorError, match="b"):
        load_type_vectors(io.StringIO("a\t1\t0\n"), types, required=[0, 1])


def test_centroids():
    kg = make_kg("x\tr\ty\nz\tr\ty\n", "x\tA\nz\tA\ny\tB\n")
    entities = kg.symbols.entities
    vectors = np.zeros((3, 2))
    vectors[entities.id_of("x")] = [1, 0]
    vectors[entities.id_of("z")] = [0, 1]
    vectors[entities.id_of("y")] = [3, 4]
    model = EmbeddingModel(config.ModelKind.TransE, vectors, np.zeros((1, 2)))
    table = centroid_type_vectors(model, kg)
    assert table.source == config.TypeVectorSource.Centroid
    assert np.allclose(table.vector(kg.symbols.types.id_of("A")), [0.5, 0.5])
    assert np.allclose(table.vector(kg.symbols.types.id_of("B")), [3, 4])


def test_centroid_of_required_zero_type_is_an_error():
    kg = make_kg("x\tr\ty\nz\tr\ty\n", "x\tA\nz\tA\ny\tB\n")
    entities = kg.symbols.entities
    vectors = np.zeros((3, 2))
    vectors[entities.id_of("x")] = [1, 0]
    vectors[entities.id_of("z")] = [-1, 0]
    vectors[entities.id_of("y")] = [0, 1]
    model = EmbeddingModel(config.ModelKind.TransE, vectors, np.zeros((1, 2)))
    with pytest.raises(TypeVectorError, match="A"):
        centroid_type_vectors(model, kg, required=[kg.symbols.types.id_of("A")])


def test_pair_similarity_examples():
    table = table_of([[1, 0], [0, 1], [1, 1]])
    assert pair_similarity(TypePair(0, 2), TypePair(0, 2), table) == 1.0
    # orthogonal heads, identical tails
    assert pair_similarity(TypePair(0, 2), TypePair(1, 2), table) == pytest.approx(0.5)


def test_pair_similarity_is_mean_of_cosines():
    heads = table_of([unit(0.0), unit(math.acos(0.8)), unit(0.3), unit(0.3 + math.acos(0.2))])
    value = pair_similarity(TypePair(0, 2), TypePair(1, 3), heads)
    assert value == pytest.approx(0.5, abs=1e-12)


def test_missing_type_vector():
    with pytest.raises(TypeVectorError):
        pair_similarity(TypePair(0, 1), TypePair(0, 7), table_of([[1, 0], [0, 1]]))


def test_single_pair_matrix():
    matrix = pair_similarity_matrix([TypePair(0, 1)], table_of([[1, 0], [0, 1]]))
    assert matrix.values.tolist() == [[1.0]]


def test_matrix_matches_scalar_loop():
    rng = np.random.default_rng(4)
    table = table_of(rng.normal(size=(5, 6)))
    pairs = [TypePair(h, t) for h in range(3) for t in range(2, 5) if h != t]
    matrix = pair_similarity_matrix(pairs, table)
    assert np.array_equal(matrix.values, matrix.values.T)
    assert np.allclose(np.diag(matrix.values), 1.0, atol=1e-9)
    for i, p in enumerate(pairs):
        for j, q in enumerate(pairs):
            assert matrix.values[i, j] == pytest.approx(pair_similarity(p, q, table), abs=1e-12)
            assert -1.0 <= matrix.values[i, j] <= 1.0


def test_similarity_is_symmetric_and_scale_invariant():
    rng = np.random.default_rng(9)
    vectors = rng.normal(size=(4, 3))
    table = table_of(vectors)
    scaled = table_of(vectors * np.array([[2.0], [0.5], [7.0], [1.0]]))
    p, q = TypePair(0, 1), TypePair(2, 3)
    assert pair_similarity(p, q, table) == pair_similarity(q, p, table)
    assert pair_similarity(p, q, scaled) == pytest.approx(pair_similarity(p, q, table), abs=1e-9)
