from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import List, Sequence, Set, Tuple

import numpy as np

from app.models.embedding_model.Model import EmbeddingModel, init_model
from app.models.kg_model.Graph import KnowledgeGraph, TypePair
from app.utils.errors import ConfigError, KGValidationError
from config import config

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    dim: int = config.EMBEDDING_DIM
    epochs: int = config.EPOCHS
    learning_rate: float = config.LEARNING_RATE
    margin: float = config.MARGIN
    negative_samples: int = config.NEGATIVE_SAMPLES
    batch_size: int = config.BATCH_SIZE
    seed: int = config.SEED

    def __post_init__(self):
        if self.dim < 2:
            raise ConfigError(f"embedding dimension must be at least 2, got {self.dim}")
        if self.epochs < 0:
            raise ConfigError("epochs must not be negative")
        for name in ("learning_rate", "margin", "negative_samples", "batch_size"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")


@dataclass
class DeltaSet:
    "per-fact relation witnesses of one relation, each labelled with its type pair"
    relation: int
    vectors: np.ndarray
    pair_labels: List[TypePair]
    fact_indices: List[int] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.pair_labels)


def initial_model(kg: KnowledgeGraph, kind: config.ModelKind, train_config: TrainConfig) -> EmbeddingModel:
    symbols = kg.symbols
    return init_model(kind, train_config.dim, len(symbols.entities), len(symbols.relations),
                      train_config.seed, symbols.entities.names, symbols.relations.names)


def corrupt(positives: np.ndarray, n_entities: int, known: Set[Tuple[int, int, int]],
            rng: np.random.Generator) -> np.ndarray:
    """
    Replace head or tail (coin flip per row) with a uniform entity, redrawing
    when the corruption is itself a known fact.
    """
    negatives = positives.copy()
    corrupt_head = rng.random(len(positives)) < 0.5
    slot = np.where(corrupt_head, 0, 2)
    negatives[np.arange(len(positives)), slot] = rng.integers(n_entities, size=len(positives))
    for i in range(len(negatives)):
        tries = 0
        while tuple(negatives[i].tolist()) in known and tries < config.MAX_NEGATIVE_RESAMPLES:
            negatives[i, slot[i]] = rng.integers(n_entities)
            tries += 1
    return negatives


def train(model: EmbeddingModel, kg: KnowledgeGraph, train_config: TrainConfig) -> Tuple[EmbeddingModel, List[float]]:
    """
    Minimise the margin ranking loss with SGD over shuffled mini-batches.
    The input model is left untouched; a trained copy is returned with the
    mean per-sample loss of every epoch.
    """
    if not kg.triples:
        raise KGValidationError("cannot train on an empty knowledge graph")
    trained = model.copy()
    losses: List[float] = []
    if train_config.epochs == 0:
        return trained, losses

    rng = np.random.default_rng(train_config.seed)
    triples = kg.triple_array
    known = set(map(tuple, triples.tolist()))
    n_entities = len(trained.entity_vectors)
    samples_per_epoch = len(triples) * train_config.negative_samples

    logger.info(get_initial_status_log(kg, trained, train_config))
    start = time.time()
    for epoch in range(1, train_config.epochs + 1):
        order = rng.permutation(len(triples))
        epoch_loss = 0.0
        for offset in range(0, len(order), train_config.batch_size):
            batch = triples[order[offset:offset + train_config.batch_size]]
            positives = np.repeat(batch, train_config.negative_samples, axis=0)
            negatives = corrupt(positives, n_entities, known, rng)
            epoch_loss += trained.train_batch(positives, negatives, train_config.learning_rate,
                                              train_config.margin)
        trained.constrain()
        losses.append(epoch_loss / samples_per_epoch)
        logger.debug("epoch %d/%d loss %.6f", epoch, train_config.epochs, losses[-1])

    logger.info(get_execution_log(losses, time.time() - start))
    return trained, losses


def delta_set(model: EmbeddingModel, kg: KnowledgeGraph, relation: int,
              policy: config.TypePolicy = config.TypePolicy.First, priority: Sequence[int] = ()) -> DeltaSet:
    facts = kg.index_relation(relation, policy, priority)
    vectors = model.delta_batch(kg.triple_array[facts.fact_indices])
    return DeltaSet(relation=relation, vectors=vectors, pair_labels=list(facts.pair_of_fact),
                    fact_indices=list(facts.fact_indices))


def get_initial_status_log(kg: KnowledgeGraph, model: EmbeddingModel, train_config: TrainConfig) -> str:
    return (f"training {model.kind.value} on {len(kg.triples)} triples, "
            f"{len(kg.symbols.entities)} entities, {len(kg.symbols.relations)} relations | "
            f"dim={train_config.dim} epochs={train_config.epochs} lr={train_config.learning_rate} "
            f"margin={train_config.margin} negatives={train_config.negative_samples} "
            f"batch={train_config.batch_size} seed={train_config.seed}")


def get_execution_log(losses: List[float], seconds: float) -> str:
    return (f"training finished in {seconds:.1f}s: loss {losses[0]:.4f} -> {losses[-1]:.4f} "
            f"over {len(losses)} epochs")
