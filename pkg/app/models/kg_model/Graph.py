from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence

import numpy as np

from app.utils.errors import KGValidationError, describe_offenders
from config import config

logger = logging.getLogger(__name__)


class Vocabulary:
    "dense bidirectional name <-> id map, ids assigned in first-seen order"

    def __init__(self, names: Iterable[str] = ()):
        self._ids: Dict[str, int] = {}
        self._names: List[str] = []
        for name in names:
            self.intern(name)

    def intern(self, name: str) -> int:
        idx = self._ids.get(name)
        if idx is None:
            idx = len(self._names)
            self._ids[name] = idx
            self._names.append(name)
        return idx

    def id_of(self, name: str) -> int:
        try:
            return self._ids[name]
        except KeyError:
            raise KeyError(f"unknown symbol {name!r}") from None

    def get(self, name: str) -> Optional[int]:
        return self._ids.get(name)

    def name_of(self, idx: int) -> str:
        return self._names[idx]

    @property
    def names(self) -> List[str]:
        return list(self._names)

    def __contains__(self, name) -> bool:
        return name in self._ids

    def __len__(self) -> int:
        return len(self._names)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self._names == other._names

    def copy(self) -> "Vocabulary":
        return Vocabulary(self._names)


@dataclass
class SymbolTable:
    entities: Vocabulary = field(default_factory=Vocabulary)
    relations: Vocabulary = field(default_factory=Vocabulary)
    types: Vocabulary = field(default_factory=Vocabulary)


class Triple(NamedTuple):
    head: int
    relation: int
    tail: int


class TypePair(NamedTuple):
    head_type: int
    tail_type: int


@dataclass
class RelationFacts:
    "the facts G'_r of one relation with the type pair each one maps to"
    relation: int
    fact_indices: List[int]
    pair_of_fact: List[TypePair]
    unique_pairs: List[TypePair]

    @property
    def pair_count(self) -> int:
        return len(self.unique_pairs)

    @property
    def fact_count(self) -> int:
        return len(self.fact_indices)

    def pair_counts(self) -> Counter:
        return Counter(self.pair_of_fact)


class PolysemyRow(NamedTuple):
    relation: str
    pair_count: int
    fact_count: int


class KnowledgeGraph:
    """
    Interned triples plus entity -> type assignments.
    Treated as immutable once built; every derived index is cached.
    """

    def __init__(self, triples: Sequence[Triple], symbols: SymbolTable,
                 type_assignments: Optional[Dict[int, List[int]]] = None):
        self.triples: List[Triple] = list(triples)
        self.symbols = symbols
        self.type_assignments: Dict[int, List[int]] = dict(type_assignments or {})

    @cached_property
    def triple_array(self) -> np.ndarray:
        if not self.triples:
            return np.zeros((0, 3), dtype=np.int64)
        return np.asarray(self.triples, dtype=np.int64)

    @cached_property
    def facts_by_relation(self) -> Dict[int, List[int]]:
        index: Dict[int, List[int]] = {}
        for i, triple in enumerate(self.triples):
            index.setdefault(triple.relation, []).append(i)
        return index

    @property
    def relation_ids(self) -> List[int]:
        return sorted(self.facts_by_relation)

    def entities_in_triples(self) -> List[int]:
        seen = {}
        for h, _, t in self.triples:
            seen.setdefault(h, None)
            seen.setdefault(t, None)
        return list(seen)

    def untyped_entities(self) -> List[int]:
        return [e for e in self.entities_in_triples() if not self.type_assignments.get(e)]

    def validate(self) -> "KnowledgeGraph":
        "every entity used by a triple must carry at least one type"
        missing = self.untyped_entities()
        if missing:
            names = [self.symbols.entities.name_of(e) for e in missing]
            raise KGValidationError(f"{len(names)} untyped entities: {describe_offenders(names)}")
        return self

    def relation_id(self, name: str) -> int:
        idx = self.symbols.relations.get(name)
        if idx is None or idx not in self.facts_by_relation:
            raise KGValidationError(f"relation {name!r} does not occur in the knowledge graph")
        return idx

    def priority_ids(self, type_names: Sequence[str]) -> List[int]:
        "type ids for a priority list; names absent from the KG are ignored"
        ids = []
        for name in type_names:
            idx = self.symbols.types.get(name)
            if idx is None:
                logger.warning("priority type %r is not assigned to any entity", name)
                continue
            ids.append(idx)
        return ids

    def resolve_type(self, entity: int, policy: config.TypePolicy = config.TypePolicy.First,
                     priority: Sequence[int] = ()) -> int:
        types = self.type_assignments.get(entity)
        if not types:
            raise KGValidationError(f"entity {self.symbols.entities.name_of(entity)!r} has no type")
        if policy == config.TypePolicy.Priority:
            assigned = set(types)
            for t in priority:
                if t in assigned:
                    return t
        return types[0]

    def type_pair(self, triple: Triple, policy: config.TypePolicy = config.TypePolicy.First,
                  priority: Sequence[int] = ()) -> TypePair:
        return TypePair(self.resolve_type(triple.head, policy, priority),
                        self.resolve_type(triple.tail, policy, priority))

    def index_relation(self, relation: int, policy: config.TypePolicy = config.TypePolicy.First,
                       priority: Sequence[int] = ()) -> RelationFacts:
        fact_indices = self.facts_by_relation.get(relation)
        if not fact_indices:
            raise KGValidationError(f"relation id {relation} does not occur in the knowledge graph")
        pair_of_fact = [self.type_pair(self.triples[i], policy, priority) for i in fact_indices]
        unique_pairs = list(dict.fromkeys(pair_of_fact))
        return RelationFacts(relation=relation, fact_indices=list(fact_indices),
                             pair_of_fact=pair_of_fact, unique_pairs=unique_pairs)

    def relation_polysemy_stats(self, policy: config.TypePolicy = config.TypePolicy.First,
                                priority: Sequence[int] = ()) -> List[PolysemyRow]:
        rows = []
        for relation in self.relation_ids:
            facts = self.index_relation(relation, policy, priority)
            rows.append(PolysemyRow(self.symbols.relations.name_of(relation),
                                    facts.pair_count, facts.fact_count))
        rows.sort(key=lambda row: (-row.pair_count, row.relation))
        return rows

    def pair_names(self, pair: TypePair) -> tuple:
        types = self.symbols.types
        return types.name_of(pair.head_type), types.name_of(pair.tail_type)

    def triple_names(self, triple: Triple) -> tuple:
        return (self.symbols.entities.name_of(triple.head),
                self.symbols.relations.name_of(triple.relation),
                self.symbols.entities.name_of(triple.tail))

    def __len__(self) -> int:
        return len(self.triples)
