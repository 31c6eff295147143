from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

from pydantic import ValidationError

from app.dtos.documents import RelationEntry, SubRelationEntry, SubRelationMapDocument
from app.models.kg_model.Graph import KnowledgeGraph, SymbolTable, Triple, TypePair, Vocabulary
from app.services.refineService import Partition
from app.utils.errors import ConfigError, KGValidationError, describe_offenders
from config import config

logger = logging.getLogger(__name__)

SUBRELATION_SEPARATOR = "#"


@dataclass(frozen=True)
class SubRelation:
    name: str
    alias: str
    pairs: tuple


@dataclass
class SubRelationMap:
    "original relation name -> its sub-relations, each owning a group of type pairs"
    relations: Dict[str, List[SubRelation]] = field(default_factory=dict)
    type_policy: config.TypePolicy = config.TYPE_POLICY
    type_priority: List[str] = field(default_factory=list)
    variant: str = "finegres"

    def names(self) -> List[str]:
        return [s.name for subs in self.relations.values() for s in subs]

    def pair_index(self, relation: str) -> Dict[TypePair, str]:
        return {pair: s.name for s in self.relations[relation] for pair in s.pairs}


def subrelation_names(relation: str, partition: Partition) -> List[str]:
    if len(partition) == 1:
        return [relation]
    return [f"{relation}{SUBRELATION_SEPARATOR}{i}" for i in range(len(partition))]


def _alias(kg: KnowledgeGraph, relation: str, group, counts: Counter) -> str:
    # most frequent pair of the group; first listed wins a tie
    top = max(group, key=lambda p: (counts[p], -group.index(p)))
    head, tail = kg.pair_names(top)
    return f"{relation}({head},{tail})"


def build_subrelations(kg: KnowledgeGraph, partitions: Dict[str, Partition],
                       policy: config.TypePolicy = config.TYPE_POLICY, priority_names: Sequence[str] = (),
                       variant: str = "finegres") -> SubRelationMap:
    """
    Name the groups of every refined relation. Relations in `partitions`
    must occur in the graph; the resulting names must not clash with each
    other or with relations left untouched.
    """
    priority = kg.priority_ids(priority_names)
    submap = SubRelationMap(type_policy=policy, type_priority=list(priority_names), variant=variant)
    for relation, partition in partitions.items():
        facts = kg.index_relation(kg.relation_id(relation), policy, priority)
        if set(facts.unique_pairs) != set(partition.pairs):
            raise KGValidationError(f"partition of {relation!r} does not cover exactly its type pairs")
        counts = facts.pair_counts()
        submap.relations[relation] = [
            SubRelation(name, _alias(kg, relation, list(group), counts), tuple(group))
            for name, group in zip(subrelation_names(relation, partition), partition.groups)
        ]
    _check_collisions(kg, submap)
    return submap


def _check_collisions(kg: KnowledgeGraph, submap: SubRelationMap):
    untouched = [kg.symbols.relations.name_of(r) for r in kg.relation_ids
                 if kg.symbols.relations.name_of(r) not in submap.relations]
    counts = Counter(submap.names() + untouched)
    clashes = [name for name, n in counts.items() if n > 1]
    if clashes:
        raise KGValidationError(f"sub-relation names clash: {describe_offenders(clashes)}")


def rewrite_graph(kg: KnowledgeGraph, submap: SubRelationMap) -> KnowledgeGraph:
    """
    Replace every fact of a mapped relation by the sub-relation owning its
    type pair. Entities, types and the triple order are kept as they are.
    """
    priority = kg.priority_ids(submap.type_priority)
    names = kg.symbols.relations
    index = {relation: submap.pair_index(relation) for relation in submap.relations}
    relations = Vocabulary()
    triples = []
    for position, triple in enumerate(kg.triples):
        name = names.name_of(triple.relation)
        pairs = index.get(name)
        if pairs is not None:
            pair = kg.type_pair(triple, submap.type_policy, priority)
            target = pairs.get(pair)
            if target is None:
                h, r, t = kg.triple_names(triple)
                raise KGValidationError(f"fact {position} <{h}, {r}, {t}> has type pair "
                                        f"{kg.pair_names(pair)} outside every group of {name!r}")
            name = target
        triples.append(Triple(triple.head, relations.intern(name), triple.tail))

    symbols = SymbolTable(kg.symbols.entities.copy(), relations, kg.symbols.types.copy())
    logger.info("rewrote %d triples: %d relations -> %d", len(triples), len(kg.relation_ids), len(relations))
    return KnowledgeGraph(triples, symbols, {e: list(t) for e, t in kg.type_assignments.items()})


def to_document(kg: KnowledgeGraph, submap: SubRelationMap) -> SubRelationMapDocument:
    entries = [
        RelationEntry(relation=relation, subrelations=[
            SubRelationEntry(name=s.name, alias=s.alias, pairs=[kg.pair_names(p) for p in s.pairs])
            for s in subs])
        for relation, subs in submap.relations.items()
    ]
    return SubRelationMapDocument(variant=submap.variant, type_policy=submap.type_policy,
                                  type_priority=submap.type_priority, relations=entries)


def from_document(kg: KnowledgeGraph, document: SubRelationMapDocument) -> SubRelationMap:
    types = kg.symbols.types
    submap = SubRelationMap(type_policy=document.type_policy, type_priority=list(document.type_priority),
                            variant=document.variant)
    for entry in document.relations:
        subs = []
        for sub in entry.subrelations:
            unknown = [n for pair in sub.pairs for n in pair if n not in types]
            if unknown:
                raise KGValidationError(f"map names unknown types: {describe_offenders(unknown)}")
            subs.append(SubRelation(sub.name, sub.alias,
                                    tuple(TypePair(types.id_of(h), types.id_of(t)) for h, t in sub.pairs)))
        submap.relations[entry.relation] = subs
    return submap


def save_map(kg: KnowledgeGraph, submap: SubRelationMap, path):
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(to_document(kg, submap).model_dump_json(indent=2) + "\n")


def load_map(kg: KnowledgeGraph, path) -> SubRelationMap:
    try:
        with open(path, encoding="utf-8") as f:
            document = SubRelationMapDocument.model_validate_json(f.read())
    except FileNotFoundError:
        raise ConfigError(f"file not found: {path}") from None
    except ValidationError as e:
        raise ConfigError(f"{path}: not a {config.MAP_FORMAT} document: {e.error_count()} problems") from None
    return from_document(kg, document)


def type_pair_multisets(kg: KnowledgeGraph, policy: config.TypePolicy = config.TYPE_POLICY,
                        priority: Sequence[int] = ()) -> Dict[str, Counter]:
    "per relation name, the multiset of type pairs over its facts"
    result = {}
    for relation in kg.relation_ids:
        facts = kg.index_relation(relation, policy, priority)
        result[kg.symbols.relations.name_of(relation)] = facts.pair_counts()
    return result


def original_relation(name: str, submap: Optional[SubRelationMap] = None) -> str:
    "relation a (sub-)relation name was derived from"
    if submap is not None:
        for relation, subs in submap.relations.items():
            if any(s.name == name for s in subs):
                return relation
        return name
    return name.rsplit(SUBRELATION_SEPARATOR, 1)[0]
