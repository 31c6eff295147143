from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from app.models.embedding_model.Model import EmbeddingModel
from app.models.kg_model.Graph import KnowledgeGraph, TypePair, Vocabulary
from app.utils.errors import ParseError, TypeVectorError, describe_offenders
from config import config

logger = logging.getLogger(__name__)


@dataclass
class TypeVectorTable:
    vectors: Dict[int, np.ndarray]
    source: config.TypeVectorSource

    def __contains__(self, type_id) -> bool:
        return type_id in self.vectors

    def vector(self, type_id: int) -> np.ndarray:
        try:
            return self.vectors[type_id]
        except KeyError:
            raise TypeVectorError(f"no vector for type id {type_id}") from None

    def require(self, type_ids: Iterable[int], types: Optional[Vocabulary] = None):
        missing = [t for t in dict.fromkeys(type_ids) if t not in self.vectors]
        if missing:
            names = [types.name_of(t) for t in missing] if types is not None else missing
            raise TypeVectorError(f"missing vectors for {len(missing)} types: {describe_offenders(names)}")
        return self


@dataclass
class PairSimilarityMatrix:
    "pairwise type-pair similarities, rows in the order of `pairs`"
    pairs: List[TypePair]
    values: np.ndarray
    _index: Dict[TypePair, int] = field(init=False, repr=False)

    def __post_init__(self):
        self._index = {p: i for i, p in enumerate(self.pairs)}

    def __contains__(self, pair) -> bool:
        return pair in self._index

    def index_of(self, pair: TypePair) -> int:
        return self._index[pair]

    def indices(self, pairs: Iterable[TypePair]) -> List[int]:
        return [self._index[p] for p in pairs]


def required_types(pairs: Iterable[TypePair]) -> List[int]:
    required = {}
    for pair in pairs:
        required.setdefault(pair.head_type, None)
        required.setdefault(pair.tail_type, None)
    return list(required)


def load_type_vectors(source: Iterable[str], types: Vocabulary, required: Iterable[int] = (),
                      source_name: Optional[str] = None) -> TypeVectorTable:
    """
    Read `type<TAB>v1<TAB>...<TAB>vd` lines. Types unknown to the KG are
    skipped; the dimension comes from the first data line.
    """
    vectors: Dict[int, np.ndarray] = {}
    dim = None
    bad_dim, zero = [], []
    for number, raw in enumerate(source, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.startswith(config.COMMENT_PREFIX):
            continue
        name, *values = line.split("\t")
        try:
            vector = np.array([float(v) for v in values], dtype=np.float64)
        except ValueError:
            raise ParseError("non-numeric vector component", line_number=number, source=source_name) from None
        if dim is None:
            dim = len(vector)
        if len(vector) == 0 or len(vector) != dim:
            bad_dim.append(f"{name} (line {number}, d={len(vector)})")
            continue
        if not np.isfinite(vector).all() or not np.any(vector):
            zero.append(name)
            continue
        type_id = types.get(name)
        if type_id is not None:
            vectors[type_id] = vector

    problems = []
    if bad_dim:
        problems.append(f"inconsistent dimension (expected {dim}): {describe_offenders(bad_dim)}")
    if zero:
        problems.append(f"zero or non-finite vectors: {describe_offenders(zero)}")
    if problems:
        raise TypeVectorError("; ".join(problems))
    table = TypeVectorTable(vectors, config.TypeVectorSource.External)
    table.require(required, types)
    logger.info("loaded %d external type vectors (d=%s)", len(vectors), dim)
    return table


def centroid_type_vectors(model: EmbeddingModel, kg: KnowledgeGraph, required: Iterable[int] = ()) -> TypeVectorTable:
    "vector(t) is the mean entity vector over every entity assigned type t"
    members: Dict[int, List[int]] = {}
    for entity, type_ids in kg.type_assignments.items():
        if entity >= len(model.entity_vectors):
            continue
        for t in dict.fromkeys(type_ids):
            members.setdefault(t, []).append(entity)
    vectors = {}
    for t, entities in members.items():
        centroid = model.entity_vectors[entities].mean(axis=0)
        if np.any(centroid):
            vectors[t] = centroid
    table = TypeVectorTable(vectors, config.TypeVectorSource.Centroid)
    table.require(required, kg.symbols.types)
    return table


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    value = float(np.dot(a, b)) / (float(np.linalg.norm(a)) * float(np.linalg.norm(b)))
    return min(1.0, max(-1.0, value))


def pair_similarity(p: TypePair, q: TypePair, table: TypeVectorTable) -> float:
    "mean of the head-type cosine and the tail-type cosine"
    if p == q:
        return 1.0
    head = _cosine(table.vector(p.head_type), table.vector(q.head_type))
    tail = _cosine(table.vector(p.tail_type), table.vector(q.tail_type))
    return 0.5 * head + 0.5 * tail


def _unit_rows(rows: np.ndarray) -> np.ndarray:
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)


def pair_similarity_matrix(pairs: Sequence[TypePair], table: TypeVectorTable) -> PairSimilarityMatrix:
    pairs = list(pairs)
    if not pairs:
        raise TypeVectorError("cannot build a similarity matrix over zero type pairs")
    table.require(required_types(pairs))
    heads = _unit_rows(np.stack([table.vector(p.head_type) for p in pairs]))
    tails = _unit_rows(np.stack([table.vector(p.tail_type) for p in pairs]))
    values = 0.5 * np.clip(heads @ heads.T, -1.0, 1.0) + 0.5 * np.clip(tails @ tails.T, -1.0, 1.0)
    values = 0.5 * (values + values.T)
    np.fill_diagonal(values, 1.0)
    return PairSimilarityMatrix(pairs, values)
