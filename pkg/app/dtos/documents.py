from typing import Dict, List, Literal, Tuple

from pydantic import BaseModel, ConfigDict, Field

from config import config

# a type pair written as [head type name, tail type name]
PairNames = Tuple[str, str]
GroupNames = List[PairNames]


class StrictDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")


class PairCount(StrictDocument):
    head: str
    tail: str
    facts: int = Field(ge=1)


class MergeStep(StrictDocument):
    group_a: GroupNames
    group_b: GroupNames
    similarity: float


class LevelScore(StrictDocument):
    k: int = Field(ge=1)
    score: float = Field(ge=0.0, le=1.0)
    groups: List[GroupNames]


class RefinementDocument(StrictDocument):
    format: Literal[config.REFINEMENT_FORMAT] = config.REFINEMENT_FORMAT
    relation: str
    fact_count: int
    sample_size: int
    model: str
    clusterer: str
    seed: int
    unique_pairs: List[PairCount]
    merge_trace: List[MergeStep]
    per_k: List[LevelScore]
    chosen_k: int
    objective: float
    tie_broken: bool
    chosen_groups: List[GroupNames]
    baselines: Dict[str, LevelScore]


class SubRelationEntry(StrictDocument):
    name: str
    alias: str
    pairs: GroupNames


class RelationEntry(StrictDocument):
    relation: str
    subrelations: List[SubRelationEntry]


class SubRelationMapDocument(StrictDocument):
    format: Literal[config.MAP_FORMAT] = config.MAP_FORMAT
    variant: str = "finegres"
    type_policy: config.TypePolicy = config.TYPE_POLICY
    type_priority: List[str] = []
    relations: List[RelationEntry]


class PlantedRelation(StrictDocument):
    relation: str
    groups: List[GroupNames]


class PlantedDocument(StrictDocument):
    format: Literal[config.PLANTED_FORMAT] = config.PLANTED_FORMAT
    seed: int
    noise: float
    relations: List[PlantedRelation]
