from __future__ import annotations

import glob
import logging
import os
from typing import Dict, List, Optional, Tuple
from urllib.parse import quote

from pydantic import ValidationError
from rich.table import Table

from app.dtos.documents import RefinementDocument
from app.dtos.runConfig import RunConfig
from app.models.embedding_model.Main import TrainConfig, initial_model, train
from app.models.embedding_model.Model import EmbeddingModel, align_model, load_model, save_model
from app.models.kg_model.Graph import KnowledgeGraph
from app.services import classificationService, refineService, rewriteService
from app.services.clusterService import ClustererConfig
from app.services.refineService import Partition
from app.services.typeService import TypeVectorTable, centroid_type_vectors, load_type_vectors, required_types
from app.utils.data_generator_synthetic import SynthConfig, generate_synthetic_kg, save_synthetic_kg
from app.utils.errors import ConfigError, FinegresError, KGValidationError, describe_offenders
from app.utils.kg_io import load_kg, save_kg, write_table
from app.utils.logger import console
from config import config

logger = logging.getLogger(__name__)

STATS_HEADER = ["relation", "pair_count", "fact_count"]
SCORES_HEADER = ["relation", "facts", "c_max", "c_head", "c_tail", "c_finegres"]
SUBRELATIONS_HEADER = ["relation", "subrelation", "alias", "facts", "type_pairs"]
EVAL_VARIANTS = ["r", "max", "head", "tail", "finegres"]
STATS_CONSOLE_ROWS = 20


def _score(value: float) -> str:
    return f"{value:.6f}"


def _require(path: str, what: str):
    if not os.path.isfile(path):
        raise ConfigError(f"{what} not found: {path}")


def _load(cfg: RunConfig) -> KnowledgeGraph:
    return load_kg(cfg.triples_path, cfg.types_path)


def _start(cfg: RunConfig):
    os.makedirs(cfg.workdir, exist_ok=True)
    cfg.write_echo()
    logger.info("%s: %s (workdir %s, seed %d)", cfg.experiment, cfg.command, cfg.workdir, cfg.seed)


def train_config(cfg: RunConfig) -> TrainConfig:
    return TrainConfig(dim=cfg.dim, epochs=cfg.epochs, learning_rate=cfg.learning_rate, margin=cfg.margin,
                       negative_samples=cfg.negative_samples, batch_size=cfg.batch_size, seed=cfg.seed)


def clusterer_config(cfg: RunConfig) -> ClustererConfig:
    return ClustererConfig(kind=cfg.clusterer, seed=cfg.seed, max_iters=cfg.kmeans_max_iters,
                         tolerance=cfg.kmeans_tolerance)


def run_stats(cfg: RunConfig) -> str:
    "polysemy report: type pairs and facts per relation"
    _start(cfg)
    kg = _load(cfg)
    rows = kg.relation_polysemy_stats(cfg.type_policy, kg.priority_ids(cfg.type_priority))
    path = cfg.path(config.STATS_FILE)
    write_table(path, STATS_HEADER, rows)

    table = Table(title=f"type pairs per relation ({len(rows)} relations)")
    for column in STATS_HEADER:
        table.add_column(column, justify="left" if column == "relation" else "right")
    for row in rows[:STATS_CONSOLE_ROWS]:
        table.add_row(row.relation, str(row.pair_count), str(row.fact_count))
    console.print(table)
    return path


def run_train(cfg: RunConfig) -> str:
    _start(cfg)
    kg = _load(cfg)
    symbols = kg.symbols
    if cfg.import_vectors:
        _require(cfg.import_vectors, "model file")
        model = align_model(load_model(cfg.import_vectors), symbols.entities.names, symbols.relations.names)
        logger.info("imported %s vectors (d=%d) from %s", model.kind.value, model.dim, cfg.import_vectors)
    else:
        settings = train_config(cfg)
        model, losses = train(initial_model(kg, cfg.model, settings), kg, settings)
        write_table(cfg.path(config.LOSS_FILE), ["epoch", "loss"],
                    [(i, f"{loss:.6f}") for i, loss in enumerate(losses, start=1)])
    if not model.is_finite():
        raise FinegresError("embedding training diverged; try a smaller learning rate")
    save_model(model, cfg.model_path, symbols.entities.names, symbols.relations.names)
    logger.info("model written to %s", cfg.model_path)
    return cfg.model_path


def _selected_relations(kg: KnowledgeGraph, names: List[str]) -> List[int]:
    if not names:
        return kg.relation_ids
    valid = [kg.symbols.relations.name_of(r) for r in kg.relation_ids]
    unknown = [n for n in names if n not in valid]
    if unknown:
        raise KGValidationError(f"unknown relations {', '.join(unknown)}; valid names: {describe_offenders(valid, 50)}")
    return [kg.relation_id(n) for n in dict.fromkeys(names)]


def _type_vectors(cfg: RunConfig, model: EmbeddingModel, kg: KnowledgeGraph, relations: List[int]) -> TypeVectorTable:
    priority = kg.priority_ids(cfg.type_priority)
    pairs = [p for r in relations for p in kg.index_relation(r, cfg.type_policy, priority).unique_pairs]
    required = required_types(pairs)
    path = cfg.type_vector_file
    if path is None:
        return centroid_type_vectors(model, kg, required)
    _require(path, "type vector file")
    with open(path, encoding="utf-8") as f:
        return load_type_vectors(f, kg.symbols.types, required, source_name=path)


def refinement_path(cfg: RunConfig, relation: str) -> str:
    return os.path.join(cfg.refinement_dir, quote(relation, safe="") + ".json")


def run_refine(cfg: RunConfig) -> Tuple[str, List[str]]:
    """
    FineGReS search over the selected relations. Writes one refinement
    document per relation, scores.tsv with a weighted-mean row and
    subrelations.tsv with the chosen groups.
    """
    _start(cfg)
    kg = _load(cfg)
    relations = _selected_relations(kg, cfg.relations)
    _require(cfg.model_path, "model file")
    symbols = kg.symbols
    model = align_model(load_model(cfg.model_path), symbols.entities.names, symbols.relations.names)
    table = _type_vectors(cfg, model, kg, relations)
    clusterer = clusterer_config(cfg)

    refinements = refineService.refine_relations(model, kg, relations, table, clusterer, cfg.type_policy,
                                                 kg.priority_ids(cfg.type_priority), cfg.refinement_cap, cfg.jobs)

    os.makedirs(cfg.refinement_dir, exist_ok=True)
    for stale in glob.glob(os.path.join(cfg.refinement_dir, "*.json")):
        os.remove(stale)
    written = []
    for refinement in refinements:
        path = refinement_path(cfg, refinement.relation)
        document = refineService.to_document(kg, refinement, model.kind, clusterer)
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(document.model_dump_json(indent=2) + "\n")
        written.append(path)

    rows, mean = refineService.evaluate_all(refinements)
    scores_path = cfg.path(config.SCORES_FILE)
    write_table(scores_path, SCORES_HEADER,
                [(r.relation, r.fact_count, _score(r.c_max), _score(r.c_head), _score(r.c_tail),
                  _score(r.c_finegres)) for r in rows + [mean]])
    _write_subrelations(cfg, kg, refinements)
    logger.info("weighted homogeneity: max %.4f head %.4f tail %.4f finegres %.4f",
                mean.c_max, mean.c_head, mean.c_tail, mean.c_finegres)
    return scores_path, written


def _write_subrelations(cfg: RunConfig, kg: KnowledgeGraph, refinements):
    partitions = {r.relation: r.result.chosen_partition for r in refinements}
    submap = rewriteService.build_subrelations(kg, partitions, cfg.type_policy, cfg.type_priority)
    rows = []
    for refinement in refinements:
        counts = refinement.result.pair_counts
        for sub in submap.relations[refinement.relation]:
            pairs = ", ".join(f"{h}>{t}" for h, t in (kg.pair_names(p) for p in sub.pairs))
            rows.append((refinement.relation, sub.name, sub.alias, sum(counts[p] for p in sub.pairs), pairs))
    write_table(cfg.path(config.SUBRELATIONS_FILE), SUBRELATIONS_HEADER, rows)


def read_refinements(cfg: RunConfig) -> List[RefinementDocument]:
    paths = sorted(glob.glob(os.path.join(cfg.refinement_dir, "*.json")))
    if not paths:
        raise ConfigError(f"no refinement documents in {cfg.refinement_dir}; run refine first")
    documents = []
    for path in paths:
        try:
            with open(path, encoding="utf-8") as f:
                documents.append(RefinementDocument.model_validate_json(f.read()))
        except ValidationError as e:
            raise ConfigError(f"{path}: not a {config.REFINEMENT_FORMAT} document "
                              f"({e.error_count()} problems)") from None
    return documents


def variant_partitions(kg: KnowledgeGraph, documents: List[RefinementDocument]) -> Dict[str, Dict[str, Partition]]:
    "variant -> relation name -> partition"
    variants: Dict[str, Dict[str, Partition]] = {}
    for document in documents:
        for variant, partition in refineService.partitions_from_document(kg, document).items():
            variants.setdefault(variant, {})[document.relation] = partition
    return variants


def variant_map(cfg: RunConfig, kg: KnowledgeGraph, documents: List[RefinementDocument],
                variant: str) -> rewriteService.SubRelationMap:
    partitions = variant_partitions(kg, documents)[variant]
    return rewriteService.build_subrelations(kg, partitions, cfg.type_policy, cfg.type_priority, variant)


def run_rewrite(cfg: RunConfig) -> Tuple[str, str]:
    _start(cfg)
    kg = _load(cfg)
    submap = variant_map(cfg, kg, read_refinements(cfg), "finegres")
    refined = rewriteService.rewrite_graph(kg, submap)
    triples_path = cfg.path(config.REFINED_TRIPLES_FILE)
    map_path = cfg.path(config.SUBRELATION_MAP_FILE)
    save_kg(refined, triples_path)
    rewriteService.save_map(kg, submap, map_path)
    logger.info("refined triples written to %s", triples_path)
    return triples_path, map_path


def _finegres_map(cfg: RunConfig, kg: KnowledgeGraph, documents: List[RefinementDocument]):
    "the map written by rewrite when present, otherwise one rebuilt from the refinements"
    path = cfg.path(config.SUBRELATION_MAP_FILE)
    if os.path.isfile(path):
        return rewriteService.load_map(kg, path)
    return variant_map(cfg, kg, documents, "finegres")


def run_eval(cfg: RunConfig) -> Tuple[str, List[classificationService.ClassificationReport]]:
    """
    Entity-type classification on the original graph and on its max, head,
    tail and FineGReS rewrites, all tested on the same splits.
    """
    _start(cfg)
    kg = _load(cfg)
    documents = read_refinements(cfg)
    priority = kg.priority_ids(cfg.type_priority)
    reports = []
    for variant in EVAL_VARIANTS:
        if variant == "r":
            graph = kg
        elif variant == "finegres":
            graph = rewriteService.rewrite_graph(kg, _finegres_map(cfg, kg, documents))
        else:
            graph = rewriteService.rewrite_graph(kg, variant_map(cfg, kg, documents, variant))
        reports.append(classificationService.evaluate_classification(
            graph, cfg.runs, cfg.test_fraction, cfg.seed, cfg.type_policy, priority,
            variant=variant, split_kg=kg, jobs=cfg.jobs))
    path = cfg.path(config.REPORT_FILE)
    classificationService.write_report(path, reports)
    return path, reports


def synth_config(cfg: RunConfig) -> SynthConfig:
    return SynthConfig(relations=cfg.synth_relations, senses=tuple(cfg.synth_senses),
                       entities_per_type=cfg.synth_entities_per_type, facts_per_sense=cfg.synth_facts_per_sense,
                       margin=cfg.synth_margin, noise=cfg.synth_noise, seed=cfg.seed)


def run_synth(cfg: RunConfig) -> Tuple[str, str, str]:
    _start(cfg)
    synthetic = generate_synthetic_kg(synth_config(cfg))
    return save_synthetic_kg(synthetic, cfg.workdir)


COMMANDS = {
    "stats": run_stats,
    "train": run_train,
    "refine": run_refine,
    "rewrite": run_rewrite,
    "eval": run_eval,
    "synth": run_synth,
}


def run(cfg: RunConfig, command: Optional[str] = None):
    return COMMANDS[command or cfg.command](cfg)
