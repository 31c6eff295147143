from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from app.models.kg_model.Graph import KnowledgeGraph, Triple
from app.utils.errors import ConfigError, EvaluationError
from app.utils.kg_io import write_table
from config import config

logger = logging.getLogger(__name__)

REPORT_HEADER = ["variant", "precision", "recall", "f1"]


class Metrics(NamedTuple):
    precision: float
    recall: float
    f1: float


@dataclass
class ClassificationReport:
    variant: str
    precision: float
    recall: float
    f1: float
    per_run: List[Metrics] = field(default_factory=list)
    runs: int = 0
    seed: int = config.SEED

    def row(self) -> List[str]:
        return [self.variant, f"{self.precision:.4f}", f"{self.recall:.4f}", f"{self.f1:.4f}"]


def _test_count(count: int, test_fraction: float) -> int:
    if count < 2:
        return 0
    # round first so that 0.2 * 10 is 2 and not 3; at least one fact always trains
    return min(count - 1, math.ceil(round(test_fraction * count, 9)))


def split_indices(kg: KnowledgeGraph, test_fraction: float, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Triple positions of a random split stratified by relation. Each relation
    with at least two facts gives ceil(fraction * count) of them to the test
    side; both sides keep ingestion order.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ConfigError(f"test fraction must lie in (0, 1), got {test_fraction}")
    if not kg.triples:
        raise EvaluationError("cannot split an empty knowledge graph")
    rng = np.random.default_rng(seed)
    is_test = np.zeros(len(kg.triples), dtype=bool)
    for relation in kg.relation_ids:
        facts = np.asarray(kg.facts_by_relation[relation])
        n_test = _test_count(len(facts), test_fraction)
        if n_test:
            is_test[rng.permutation(facts)[:n_test]] = True
    return np.flatnonzero(~is_test), np.flatnonzero(is_test)


def split_dataset(kg: KnowledgeGraph, test_fraction: float, seed: int) -> Tuple[List[Triple], List[Triple]]:
    train, test = split_indices(kg, test_fraction, seed)
    return [kg.triples[i] for i in train], [kg.triples[i] for i in test]


def _resolved_types(kg: KnowledgeGraph, policy: config.TypePolicy, priority: Sequence[int]) -> Dict[int, int]:
    return {e: kg.resolve_type(e, policy, priority) for e in kg.entities_in_triples()}


@dataclass
class MajorityClassifier:
    "modal head and tail type per relation label, with dataset-wide modes as fallback"
    head_of: Dict[int, int]
    tail_of: Dict[int, int]
    default_head: int
    default_tail: int

    def predict(self, triple: Triple) -> Tuple[int, int]:
        return (self.head_of.get(triple.relation, self.default_head),
                self.tail_of.get(triple.relation, self.default_tail))

    def predict_batch(self, triples: Sequence[Triple]) -> Tuple[np.ndarray, np.ndarray]:
        predictions = [self.predict(t) for t in triples]
        heads = np.array([p[0] for p in predictions], dtype=np.int64)
        tails = np.array([p[1] for p in predictions], dtype=np.int64)
        return heads, tails


def _mode(type_ids: Sequence[int], n_types: int) -> int:
    # bincount argmax resolves a tie to the lowest type id
    return int(np.argmax(np.bincount(np.asarray(type_ids, dtype=np.int64), minlength=n_types)))


def fit_majority_classifier(train: Sequence[Triple], kg: KnowledgeGraph,
                            policy: config.TypePolicy = config.TYPE_POLICY,
                            priority: Sequence[int] = ()) -> MajorityClassifier:
    if not train:
        raise EvaluationError("cannot fit a classifier on zero training triples")
    resolved = _resolved_types(kg, policy, priority)
    n_types = len(kg.symbols.types)
    heads: Dict[int, List[int]] = {}
    tails: Dict[int, List[int]] = {}
    for triple in train:
        heads.setdefault(triple.relation, []).append(resolved[triple.head])
        tails.setdefault(triple.relation, []).append(resolved[triple.tail])
    return MajorityClassifier(
        head_of={r: _mode(v, n_types) for r, v in heads.items()},
        tail_of={r: _mode(v, n_types) for r, v in tails.items()},
        default_head=_mode([resolved[t.head] for t in train], n_types),
        default_tail=_mode([resolved[t.tail] for t in train], n_types),
    )


def weighted_scores(truth: Sequence[int], predicted: Sequence[int]) -> Metrics:
    """
    Precision, recall and F1 per class, averaged with weights equal to the
    true support of each class. A class never predicted has precision 0.
    """
    truth = np.asarray(truth, dtype=np.int64)
    predicted = np.asarray(predicted, dtype=np.int64)
    if len(truth) != len(predicted) or not len(truth):
        raise EvaluationError("truth and predictions must be non-empty and aligned")
    classes = np.union1d(truth, predicted)
    tp = np.array([np.sum((truth == c) & (predicted == c)) for c in classes], dtype=np.float64)
    predicted_count = np.array([np.sum(predicted == c) for c in classes], dtype=np.float64)
    support = np.array([np.sum(truth == c) for c in classes], dtype=np.float64)

    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(predicted_count > 0, tp / predicted_count, 0.0)
        recall = np.where(support > 0, tp / support, 0.0)
        f1 = np.where(precision + recall > 0, 2 * precision * recall / (precision + recall), 0.0)
    weights = support / support.sum()
    return Metrics(float(np.dot(weights, precision)), float(np.dot(weights, recall)), float(np.dot(weights, f1)))


def _run(kg: KnowledgeGraph, split_kg: KnowledgeGraph, test_fraction: float, seed: int,
         policy: config.TypePolicy, priority: Sequence[int]) -> Metrics:
    train_idx, test_idx = split_indices(split_kg, test_fraction, seed)
    if not len(test_idx):
        raise EvaluationError("the split left no test triples; every relation has a single fact")
    train = [kg.triples[i] for i in train_idx]
    test = [kg.triples[i] for i in test_idx]
    classifier = fit_majority_classifier(train, kg, policy, priority)
    resolved = _resolved_types(kg, policy, priority)
    head_pred, tail_pred = classifier.predict_batch(test)
    truth = [resolved[t.head] for t in test] + [resolved[t.tail] for t in test]
    return weighted_scores(truth, np.concatenate([head_pred, tail_pred]))


def evaluate_classification(kg: KnowledgeGraph, runs: int = config.EVAL_RUNS,
                            test_fraction: float = config.TEST_FRACTION, seed: int = config.SEED,
                            policy: config.TypePolicy = config.TYPE_POLICY, priority: Sequence[int] = (),
                            variant: str = "r", split_kg: Optional[KnowledgeGraph] = None,
                            jobs: int = config.JOBS) -> ClassificationReport:
    """
    Mean weighted precision, recall and F1 of head and tail type prediction
    over `runs` splits seeded seed, seed+1, ... When `split_kg` is given the
    splits are drawn from its relations so that rewritten variants of one
    graph are tested on the same facts.
    """
    if runs < 1:
        raise ConfigError(f"runs must be at least 1, got {runs}")
    split_kg = split_kg or kg
    if len(split_kg.triples) != len(kg.triples):
        raise EvaluationError("the split graph and the evaluated graph differ in triple count")
    seeds = [seed + i for i in range(runs)]
    if jobs <= 1:
        per_run = [_run(kg, split_kg, test_fraction, s, policy, priority) for s in seeds]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as executor:
            per_run = list(executor.map(lambda s: _run(kg, split_kg, test_fraction, s, policy, priority), seeds))
    means = np.mean(np.array(per_run), axis=0)
    report = ClassificationReport(variant, float(means[0]), float(means[1]), float(means[2]),
                                  per_run=per_run, runs=runs, seed=seed)
    logger.info("%s: precision %.4f recall %.4f f1 %.4f over %d runs", variant, report.precision,
                report.recall, report.f1, runs)
    return report


def write_report(path, reports: Sequence[ClassificationReport]):
    write_table(path, REPORT_HEADER, [r.row() for r in reports])
