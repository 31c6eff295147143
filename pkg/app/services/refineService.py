from __future__ import annotations

import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.dtos.documents import LevelScore, MergeStep, PairCount, RefinementDocument
from app.models.embedding_model.Main import DeltaSet, delta_set
from app.models.embedding_model.Model import EmbeddingModel
from app.models.kg_model.Graph import KnowledgeGraph, TypePair
from app.services.clusterService import ClustererConfig, fit, homogeneity, weighted_mean
from app.services.typeService import PairSimilarityMatrix, TypeVectorTable, pair_similarity_matrix
from app.utils.errors import RefinementError
from config import config

logger = logging.getLogger(__name__)

Group = Tuple[TypePair, ...]


@dataclass(frozen=True)
class Partition:
    "disjoint, exhaustive grouping of a relation's type pairs"
    groups: Tuple[Group, ...]

    def __post_init__(self):
        if not self.groups or any(not g for g in self.groups):
            raise RefinementError("a partition needs at least one non-empty group")
        seen = [p for g in self.groups for p in g]
        if len(seen) != len(set(seen)):
            raise RefinementError("partition groups overlap")

    @cached_property
    def group_of_pair(self) -> Dict[TypePair, int]:
        return {p: i for i, g in enumerate(self.groups) for p in g}

    @property
    def pairs(self) -> List[TypePair]:
        return [p for g in self.groups for p in g]

    def __len__(self) -> int:
        return len(self.groups)

    def merge(self, i: int, j: int) -> "Partition":
        "union of groups i < j; the result sits at index i and later groups shift down"
        if not 0 <= i < j < len(self.groups):
            raise RefinementError(f"cannot merge groups {i} and {j} of {len(self.groups)}")
        groups = list(self.groups)
        groups[i] = groups[i] + groups[j]
        del groups[j]
        return Partition(tuple(groups))


@dataclass(frozen=True)
class MergeRecord:
    group_a: Group
    group_b: Group
    similarity: float


@dataclass
class KScore:
    k: int
    partition: Partition
    score: float


@dataclass
class RefinementResult:
    relation: str
    pairs: List[TypePair]
    per_k: List[KScore]
    chosen_k: int
    chosen_partition: Partition
    objective: float
    merge_trace: List[MergeRecord] = field(default_factory=list)
    tie_broken: bool = False
    sample_size: int = 0
    fact_count: int = 0
    pair_counts: Dict[TypePair, int] = field(default_factory=dict)


@dataclass
class RelationRefinement:
    "FineGReS result of one relation plus its three baseline partitions and scores"
    result: RefinementResult
    baselines: Dict[config.BaselineKind, KScore]

    @property
    def relation(self) -> str:
        return self.result.relation

    def partition(self, variant: str) -> Partition:
        if variant == "finegres":
            return self.result.chosen_partition
        return self.baselines[config.BaselineKind(variant)].partition


@dataclass(frozen=True)
class ScoreRow:
    relation: str
    fact_count: int
    c_max: float
    c_head: float
    c_tail: float
    c_finegres: float


def initial_partition(pairs: Sequence[TypePair]) -> Partition:
    if not pairs:
        raise RefinementError("a relation needs at least one type pair")
    return Partition(tuple((p,) for p in pairs))


def group_similarity(a: Sequence[TypePair], b: Sequence[TypePair], matrix: PairSimilarityMatrix) -> float:
    "average linkage: mean similarity over every cross pair"
    return float(matrix.values[np.ix_(matrix.indices(a), matrix.indices(b))].mean())


def _group_similarities(partition: Partition, matrix: PairSimilarityMatrix) -> np.ndarray:
    membership = np.zeros((len(partition), len(matrix.pairs)))
    for g, group in enumerate(partition.groups):
        membership[g, matrix.indices(group)] = 1.0
    sizes = membership.sum(axis=1)
    return (membership @ matrix.values @ membership.T) / np.outer(sizes, sizes)


def merge_step(partition: Partition, matrix: PairSimilarityMatrix) -> Tuple[Partition, MergeRecord]:
    """
    Merge the two most similar groups. Among equal similarities the
    lexicographically smallest (i, j) wins.
    """
    g = len(partition)
    if g < 2:
        raise RefinementError("cannot merge a partition with a single group")
    similarities = _group_similarities(partition, matrix)
    best, best_i, best_j = -np.inf, 0, 1
    for i in range(g - 1):
        row = similarities[i, i + 1:]
        j = int(np.argmax(row))
        if row[j] > best:
            best, best_i, best_j = row[j], i, i + 1 + j
    a, b = partition.groups[best_i], partition.groups[best_j]
    record = MergeRecord(a, b, group_similarity(a, b, matrix))
    return partition.merge(best_i, best_j), record


def ground_truth_labels(partition: Partition, deltas: DeltaSet) -> np.ndarray:
    index = partition.group_of_pair
    labels = np.empty(len(deltas), dtype=np.int64)
    for i, pair in enumerate(deltas.pair_labels):
        group = index.get(pair)
        if group is None:
            raise RefinementError(f"type pair {tuple(pair)} of fact {i} is in no group of the partition")
        labels[i] = group
    return labels


def evaluate_config(partition: Partition, deltas: DeltaSet, clusterer: ClustererConfig) -> float:
    "homogeneity of a k-clustering of the Δ vectors against the partition's labels"
    truth = ground_truth_labels(partition, deltas)
    k = len(partition)
    if k == 1:
        return 1.0
    if k > len(deltas):
        raise RefinementError(f"cannot cluster {len(deltas)} vectors into {k} groups")
    assignment = fit(deltas.vectors, k, clusterer)
    return homogeneity(truth, assignment.labels)


def subsample_deltas(deltas: DeltaSet, cap: int, seed: int) -> DeltaSet:
    """
    Keep at most about `cap` rows, drawn per type pair in proportion to its
    share. Every pair keeps at least one row; row order is preserved.
    """
    n = len(deltas)
    if n <= cap:
        return deltas
    rng = np.random.default_rng(seed)
    rows_of_pair: Dict[TypePair, List[int]] = {}
    for i, pair in enumerate(deltas.pair_labels):
        rows_of_pair.setdefault(pair, []).append(i)
    keep = []
    for rows in rows_of_pair.values():
        quota = max(1, (cap * len(rows)) // n)
        keep.extend(rng.choice(rows, size=quota, replace=False).tolist())
    keep.sort()
    logger.debug("subsampled relation %d from %d to %d rows", deltas.relation, n, len(keep))
    return DeltaSet(relation=deltas.relation,
                    vectors=deltas.vectors[keep],
                    pair_labels=[deltas.pair_labels[i] for i in keep],
                    fact_indices=[deltas.fact_indices[i] for i in keep] if deltas.fact_indices else [])


def _choose(per_k: List[KScore]) -> Tuple[KScore, bool]:
    "highest score; near-equal scores go to the smaller k"
    top = max(entry.score for entry in per_k)
    contenders = [entry for entry in per_k if entry.score >= top - config.SCORE_TIE_TOLERANCE]
    return min(contenders, key=lambda entry: entry.k), len(contenders) > 1


def finegres_search(deltas: DeltaSet, matrix: PairSimilarityMatrix, clusterer: ClustererConfig,
                    relation_name: Optional[str] = None, cap: int = config.REFINEMENT_CAP) -> RefinementResult:
    """
    Start from one group per type pair and repeatedly merge the most similar
    groups. Each level k = L .. 2 is scored by clustering the Δ vectors into
    k clusters and measuring homogeneity against the merged labels; the
    best level is chosen. The final merge to a single group completes the
    trace but is never chosen, since a single-class truth scores 1 trivially.
    """
    relation_name = relation_name or str(deltas.relation)
    pairs = list(dict.fromkeys(deltas.pair_labels))
    if not pairs:
        raise RefinementError(f"relation {relation_name!r} has no facts")
    unknown = [p for p in pairs if p not in matrix]
    if unknown:
        raise RefinementError(f"similarity matrix lacks {len(unknown)} type pairs of {relation_name!r}")
    n, L = len(deltas), len(pairs)
    pair_counts = dict(Counter(deltas.pair_labels))
    if n < L:
        raise RefinementError(f"relation {relation_name!r} has {n} vectors for {L} type pairs")

    partition = initial_partition(pairs)
    if L == 1:
        only = KScore(1, partition, 1.0)
        return RefinementResult(relation_name, pairs, [only], 1, partition, 1.0,
                                sample_size=n, fact_count=n, pair_counts=pair_counts)

    sampled = subsample_deltas(deltas, cap, clusterer.seed)
    per_k = [KScore(L, partition, evaluate_config(partition, sampled, clusterer))]
    trace: List[MergeRecord] = []
    while len(partition) > 1:
        partition, record = merge_step(partition, matrix)
        trace.append(record)
        if len(partition) >= 2:
            per_k.append(KScore(len(partition), partition, evaluate_config(partition, sampled, clusterer)))
    for entry in per_k:
        logger.debug("%s k=%d homogeneity=%.6f", relation_name, entry.k, entry.score)

    chosen, tie_broken = _choose(per_k)
    return RefinementResult(relation_name, pairs, per_k, chosen.k, chosen.partition, chosen.score,
                            merge_trace=trace, tie_broken=tie_broken,
                            sample_size=len(sampled), fact_count=n, pair_counts=pair_counts)


def baseline_partition(kind: config.BaselineKind, pairs: Sequence[TypePair]) -> Partition:
    kind = config.BaselineKind(kind)
    if kind == config.BaselineKind.Max:
        return initial_partition(pairs)
    if not pairs:
        raise RefinementError("a relation needs at least one type pair")
    key = (lambda p: p.head_type) if kind == config.BaselineKind.Head else (lambda p: p.tail_type)
    groups: Dict[int, List[TypePair]] = {}
    for pair in pairs:
        groups.setdefault(key(pair), []).append(pair)
    return Partition(tuple(tuple(g) for g in groups.values()))


def refine_relation(model: EmbeddingModel, kg: KnowledgeGraph, relation: int, table: TypeVectorTable,
                    clusterer: ClustererConfig, policy: config.TypePolicy = config.TypePolicy.First,
                    priority: Sequence[int] = (), cap: int = config.REFINEMENT_CAP) -> RelationRefinement:
    "FineGReS search and the three baselines for one relation, scored on the same Δ rows"
    name = kg.symbols.relations.name_of(relation)
    deltas = delta_set(model, kg, relation, policy, priority)
    pairs = list(dict.fromkeys(deltas.pair_labels))
    matrix = pair_similarity_matrix(pairs, table)
    result = finegres_search(deltas, matrix, clusterer, relation_name=name, cap=cap)

    sampled = subsample_deltas(deltas, cap, clusterer.seed)
    baselines = {}
    for kind in config.BaselineKind:
        partition = baseline_partition(kind, pairs)
        baselines[kind] = KScore(len(partition), partition, evaluate_config(partition, sampled, clusterer))
    logger.info("%s: L=%d facts=%d chosen k=%d homogeneity=%.4f", name, len(pairs), len(deltas),
                result.chosen_k, result.objective)
    return RelationRefinement(result, baselines)


def refine_relations(model: EmbeddingModel, kg: KnowledgeGraph, relations: Sequence[int], table: TypeVectorTable,
                     clusterer: ClustererConfig, policy: config.TypePolicy = config.TypePolicy.First,
                     priority: Sequence[int] = (), cap: int = config.REFINEMENT_CAP,
                     jobs: int = config.JOBS) -> List[RelationRefinement]:
    "results come back in the order of `relations` whatever the worker count"
    if jobs <= 1 or len(relations) <= 1:
        return [refine_relation(model, kg, r, table, clusterer, policy, priority, cap) for r in relations]
    with ThreadPoolExecutor(max_workers=jobs) as executor:
        futures = [executor.submit(refine_relation, model, kg, r, table, clusterer, policy, priority, cap)
                   for r in relations]
        return [future.result() for future in futures]


def score_row(refinement: RelationRefinement) -> ScoreRow:
    b = refinement.baselines
    return ScoreRow(refinement.relation, refinement.result.fact_count,
                    b[config.BaselineKind.Max].score, b[config.BaselineKind.Head].score,
                    b[config.BaselineKind.Tail].score, refinement.result.objective)


def evaluate_all(refinements: Sequence[RelationRefinement]) -> Tuple[List[ScoreRow], ScoreRow]:
    """
    Per-relation (C_max, C_head, C_tail, C_FGReS) rows and their dataset-wide
    mean weighted by fact count.
    """
    rows = [score_row(r) for r in refinements]
    if not rows:
        raise RefinementError("no relations were refined")
    weights = [row.fact_count for row in rows]
    mean = ScoreRow("weighted_mean", sum(weights),
                    weighted_mean([r.c_max for r in rows], weights),
                    weighted_mean([r.c_head for r in rows], weights),
                    weighted_mean([r.c_tail for r in rows], weights),
                    weighted_mean([r.c_finegres for r in rows], weights))
    return rows, mean


def _group_names(kg: KnowledgeGraph, group: Group) -> List[Tuple[str, str]]:
    return [kg.pair_names(p) for p in group]


def _level(kg: KnowledgeGraph, entry: KScore) -> LevelScore:
    return LevelScore(k=entry.k, score=entry.score, groups=[_group_names(kg, g) for g in entry.partition.groups])


def to_document(kg: KnowledgeGraph, refinement: RelationRefinement, model_kind: config.ModelKind,
                clusterer: ClustererConfig) -> RefinementDocument:
    result = refinement.result
    return RefinementDocument(
        relation=result.relation,
        fact_count=result.fact_count,
        sample_size=result.sample_size,
        model=config.ModelKind(model_kind).value,
        clusterer=config.ClustererKind(clusterer.kind).value,
        seed=clusterer.seed,
        unique_pairs=[PairCount(head=h, tail=t, facts=result.pair_counts[p])
                      for p in result.pairs for h, t in [kg.pair_names(p)]],
        merge_trace=[MergeStep(group_a=_group_names(kg, m.group_a), group_b=_group_names(kg, m.group_b),
                               similarity=m.similarity) for m in result.merge_trace],
        per_k=[_level(kg, entry) for entry in result.per_k],
        chosen_k=result.chosen_k,
        objective=result.objective,
        tie_broken=result.tie_broken,
        chosen_groups=[_group_names(kg, g) for g in result.chosen_partition.groups],
        baselines={kind.value: _level(kg, entry) for kind, entry in refinement.baselines.items()},
    )


def _partition_from_names(kg: KnowledgeGraph, groups: List[List[Tuple[str, str]]], relation: str) -> Partition:
    types = kg.symbols.types
    unknown = [n for g in groups for pair in g for n in pair if n not in types]
    if unknown:
        raise RefinementError(f"refinement of {relation!r} names unknown types: {', '.join(sorted(set(unknown)))}")
    return Partition(tuple(tuple(TypePair(types.id_of(h), types.id_of(t)) for h, t in g) for g in groups))


def partitions_from_document(kg: KnowledgeGraph, document: RefinementDocument) -> Dict[str, Partition]:
    "variant name (finegres, max, head, tail) -> partition"
    partitions = {"finegres": _partition_from_names(kg, document.chosen_groups, document.relation)}
    for kind, level in document.baselines.items():
        partitions[kind] = _partition_from_names(kg, level.groups, document.relation)
    return partitions
