import logging
import os
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from app.dtos.documents import PlantedDocument, PlantedRelation
from app.models.kg_model.Graph import KnowledgeGraph, SymbolTable, Triple
from app.utils.errors import ConfigError
from app.utils.kg_io import save_kg
from config import config

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SynthConfig:
    relations: int = config.SYNTH_RELATIONS
    senses: Tuple[int, ...] = config.SYNTH_SENSES
    entities_per_type: int = config.SYNTH_ENTITIES_PER_TYPE
    facts_per_sense: int = config.SYNTH_FACTS_PER_SENSE
    # share of a sense's head x tail entity grid that occurs as facts
    margin: float = config.SYNTH_MARGIN
    noise: float = config.SYNTH_NOISE
    seed: int = config.SEED

    def senses_of(self, relation: int) -> int:
        "sense counts are cycled over the relations"
        return self.senses[relation % len(self.senses)]

    def validate(self):
        if self.relations < 1 or not self.senses or min(self.senses) < 1:
            raise ConfigError("every relation needs at least one planted sense")
        if self.entities_per_type < 1 or self.facts_per_sense < 1:
            raise ConfigError("entities_per_type and facts_per_sense must be positive")
        if not 0.0 < self.margin <= 1.0:
            raise ConfigError("margin must lie in (0, 1]")
        if not 0.0 <= self.noise < 1.0:
            raise ConfigError("noise must lie in [0, 1)")
        return self


@dataclass
class SyntheticKG:
    kg: KnowledgeGraph
    # relation name -> planted groups of (head type, tail type) names
    planted: Dict[str, List[List[Tuple[str, str]]]] = field(default_factory=dict)
    synth_config: SynthConfig = field(default_factory=SynthConfig)

    def planted_document(self) -> PlantedDocument:
        return PlantedDocument(seed=self.synth_config.seed, noise=self.synth_config.noise,
                               relations=[PlantedRelation(relation=r, groups=g) for r, g in self.planted.items()])


class SyntheticGenerator:
    """
    Polysemous KG with known senses. The k senses of a relation form a chain
    of k + 1 private types, sense i linking type i to type i + 1, so no two
    senses of a relation share a head type or a tail type and neighbouring
    senses cannot share a translation on the unit sphere.

    Entities of every other type along a chain also carry each other's types
    as secondary types. Their type vectors then coincide, so type similarity
    proposes merging senses that are two links apart while the embedding keeps
    them apart; every coarser level of the search disagrees with k-means.
    """

    def __init__(self, synth_config: SynthConfig = SynthConfig()):
        self.synth_config = synth_config.validate()
        self.rng = np.random.default_rng(synth_config.seed)
        self.chains: List[List[str]] = []
        count = 0
        for r in range(synth_config.relations):
            length = synth_config.senses_of(r) + 1
            self.chains.append([f"type{count + p}" for p in range(length)])
            count += length
        self.entity_names = {t: [f"{t}_{i}" for i in range(synth_config.entities_per_type)]
                             for chain in self.chains for t in chain}
        # primary type first, then the same-parity types of its chain
        self.types_of: Dict[str, List[str]] = {}
        for chain in self.chains:
            for p, t in enumerate(chain):
                secondary = [u for q, u in enumerate(chain) if q != p and q % 2 == p % 2]
                for e in self.entity_names[t]:
                    self.types_of[e] = [t] + secondary

    def _entity(self, type_name: str) -> str:
        names = self.entity_names[type_name]
        return names[int(self.rng.integers(len(names)))]

    def _sense_facts(self, relation: str, head_type: str, tail_type: str) -> List[Tuple[str, str, str]]:
        cfg = self.synth_config
        grid = [(h, t) for h in self.entity_names[head_type] for t in self.entity_names[tail_type]]
        cells = max(1, int(round(cfg.margin * len(grid))))
        covered = [grid[i] for i in self.rng.permutation(len(grid))[:cells]]
        facts = []
        # every covered cell once before any repeats
        while len(facts) < cfg.facts_per_sense:
            for i in self.rng.permutation(len(covered)):
                if len(facts) == cfg.facts_per_sense:
                    break
                h, t = covered[i]
                facts.append((h, relation, t))
        return facts

    def _noise_fact(self, relation: str, planted_pairs: set) -> Tuple[str, str, str]:
        all_types = [t for chain in self.chains for t in chain]
        while True:
            h = all_types[int(self.rng.integers(len(all_types)))]
            t = all_types[int(self.rng.integers(len(all_types)))]
            if (h, t) not in planted_pairs:
                return self._entity(h), relation, self._entity(t)

    def generate(self) -> SyntheticKG:
        cfg = self.synth_config
        facts: List[Tuple[str, str, str]] = []
        planted: Dict[str, List[List[Tuple[str, str]]]] = {}
        for r, chain in enumerate(self.chains):
            relation = f"rel{r}"
            groups, relation_facts = [], []
            for head_type, tail_type in zip(chain, chain[1:]):
                groups.append([(head_type, tail_type)])
                relation_facts.extend(self._sense_facts(relation, head_type, tail_type))
            planted_pairs = {pair for group in groups for pair in group}
            n_noise = int(round(cfg.noise * len(relation_facts) / (1.0 - cfg.noise)))
            relation_facts.extend(self._noise_fact(relation, planted_pairs) for _ in range(n_noise))
            planted[relation] = groups
            facts.extend(relation_facts)

        facts = [facts[i] for i in self.rng.permutation(len(facts))]
        kg = self._to_kg(facts)
        logger.info("generated %d facts over %d relations, %d planted senses, margin %.2f, noise %.2f",
                    len(kg.triples), cfg.relations, sum(len(g) for g in planted.values()), cfg.margin, cfg.noise)
        return SyntheticKG(kg, planted, cfg)

    def _to_kg(self, facts: Sequence[Tuple[str, str, str]]) -> KnowledgeGraph:
        symbols = SymbolTable()
        triples = [Triple(symbols.entities.intern(h), symbols.relations.intern(r), symbols.entities.intern(t))
                   for h, r, t in facts]
        # only entities that occur in some fact are typed
        assignments = {e: [symbols.types.intern(t) for t in self.types_of[symbols.entities.name_of(e)]]
                       for e in range(len(symbols.entities))}
        return KnowledgeGraph(triples, symbols, assignments)


def generate_synthetic_kg(synth_config: SynthConfig = SynthConfig()) -> SyntheticKG:
    return SyntheticGenerator(synth_config).generate()


def save_synthetic_kg(synthetic: SyntheticKG, workdir: str) -> Tuple[str, str, str]:
    os.makedirs(workdir, exist_ok=True)
    triples_path = os.path.join(workdir, config.TRIPLES_FILE)
    types_path = os.path.join(workdir, config.TYPES_FILE)
    planted_path = os.path.join(workdir, config.PLANTED_FILE)
    save_kg(synthetic.kg, triples_path, types_path)
    with open(planted_path, "w", encoding="utf-8", newline="") as f:
        f.write(synthetic.planted_document().model_dump_json(indent=2) + "\n")
    return triples_path, types_path, planted_path


def load_planted(path) -> PlantedDocument:
    with open(path, encoding="utf-8") as f:
        return PlantedDocument.model_validate_json(f.read())
