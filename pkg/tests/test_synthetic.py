from dataclasses import replace

import numpy as np
import pytest

from app.dtos.runConfig import load_run_config
from app.models.embedding_model.Main import delta_set
from app.models.embedding_model.Model import align_model, load_model
from app.services import pipelineService
from app.utils.data_generator_synthetic import SynthConfig, generate_synthetic_kg, load_planted, save_synthetic_kg
from app.utils.errors import ConfigError
from app.utils.kg_io import load_kg, serialize_kg
from config import config

SMALL = SynthConfig(relations=3, senses=(3,), entities_per_type=4, facts_per_sense=16, seed=2)


def planted_pairs(synthetic, relation):
    return {tuple(pair) for group in synthetic.planted[relation] for pair in group}


def test_planted_groups():
    synthetic = generate_synthetic_kg(SMALL)
    assert sorted(synthetic.planted) == ["rel0", "rel1", "rel2"]
    assert sum(len(groups) for groups in synthetic.planted.values()) == 9
    assert synthetic.planted["rel0"] == [[("type0", "type1")], [("type1", "type2")], [("type2", "type3")]]
    assert synthetic.planted["rel1"][0] == [("type4", "type5")]


def test_senses_of_a_relation_never_share_a_head_or_tail_type():
    synthetic = generate_synthetic_kg(replace(SMALL, senses=(4,)))
    for groups in synthetic.planted.values():
        heads = [h for group in groups for h, _ in group]
        tails = [t for group in groups for _, t in group]
        assert len(set(heads)) == len(heads)
        assert len(set(tails)) == len(tails)


def test_relations_use_private_types():
    synthetic = generate_synthetic_kg(SMALL)
    used = [{name for pair in planted_pairs(synthetic, r) for name in pair} for r in synthetic.planted]
    for i, a in enumerate(used):
        for b in used[i + 1:]:
            assert not a & b


def test_alternate_chain_types_are_shared():
    kg = generate_synthetic_kg(SMALL).kg
    entities, types = kg.symbols.entities, kg.symbols.types

    def type_names(entity):
        return [types.name_of(t) for t in kg.type_assignments[entities.id_of(entity)]]

    assert type_names("type0_0") == ["type0", "type2"]
    assert type_names("type1_3") == ["type1", "type3"]
    assert type_names("type2_1") == ["type2", "type0"]


def test_full_margin_covers_each_entity_grid_once():
    synthetic = generate_synthetic_kg(SMALL)
    kg = synthetic.kg
    kg.validate()
    names = kg.symbols.entities
    for relation in kg.relation_ids:
        name = kg.symbols.relations.name_of(relation)
        facts = kg.index_relation(relation)
        assert facts.fact_count == 3 * SMALL.facts_per_sense
        assert {kg.pair_names(p) for p in facts.unique_pairs} == planted_pairs(synthetic, name)
    rel0 = [(names.name_of(t.head), names.name_of(t.tail)) for t in kg.triples
            if kg.symbols.relations.name_of(t.relation) == "rel0"]
    assert len(set(rel0)) == len(rel0)


def test_smaller_margin_leaves_grid_cells_out():
    synthetic = generate_synthetic_kg(replace(SMALL, margin=0.5))
    kg = synthetic.kg
    rel0 = kg.symbols.relations.id_of("rel0")
    cells = {(t.head, t.tail) for t in kg.triples if t.relation == rel0}
    # 8 of 16 cells per sense, each drawn twice
    assert len(cells) == 3 * 8
    assert kg.index_relation(rel0).fact_count == 3 * 16


def test_noise_facts_fall_outside_planted_pairs():
    noisy = SynthConfig(relations=2, senses=(2,), facts_per_sense=40, noise=0.2, seed=5)
    synthetic = generate_synthetic_kg(noisy)
    kg = synthetic.kg
    for relation in kg.relation_ids:
        name = kg.symbols.relations.name_of(relation)
        names = [kg.pair_names(p) for p in kg.index_relation(relation).pair_of_fact]
        outside = [p for p in names if p not in planted_pairs(synthetic, name)]
        # 80 planted facts and 20 noise facts
        assert len(names) == 100
        assert len(outside) == 20


def test_generation_is_seeded():
    a = serialize_kg(generate_synthetic_kg(SMALL).kg)
    b = serialize_kg(generate_synthetic_kg(SMALL).kg)
    c = serialize_kg(generate_synthetic_kg(replace(SMALL, seed=3)).kg)
    assert a == b
    assert a != c


def test_senses_are_cycled_over_relations():
    cfg = SynthConfig(relations=5, senses=(2, 3, 4))
    assert [cfg.senses_of(r) for r in range(5)] == [2, 3, 4, 2, 3]


@pytest.mark.parametrize("bad", [dict(senses=(2, 0)), dict(margin=0.0), dict(margin=1.5), dict(noise=1.0),
                                 dict(entities_per_type=0)],
                         ids=["zero-senses", "zero-margin", "margin-above-one", "all-noise", "no-entities"])
def test_invalid_settings(bad):
    with pytest.raises(ConfigError):
        generate_synthetic_kg(replace(SMALL, **bad))


def test_saved_files_reload(tmp_path):
    synthetic = generate_synthetic_kg(SMALL)
    triples, types, planted = save_synthetic_kg(synthetic, tmp_path)
    kg = load_kg(triples, types)
    assert len(kg.triples) == len(synthetic.kg.triples)
    assert kg.type_assignments == synthetic.kg.type_assignments
    document = load_planted(planted)
    assert document.format == config.PLANTED_FORMAT
    assert document.seed == 2
    assert [r.relation for r in document.relations] == ["rel0", "rel1", "rel2"]
    assert {tuple(p) for g in document.relations[0].groups for p in g} == planted_pairs(synthetic, "rel0")


PIPELINE_SEEDS = range(5)


def run_pipeline(workdir, seed):
    "synth, train, refine, rewrite and eval with default settings"
    configs = {}
    for command in ("synth", "train", "refine", "rewrite", "eval"):
        configs[command] = load_run_config(command, workdir=str(workdir), seed=seed)
        outcome = pipelineService.run(configs[command])
    return configs, outcome


def silhouette(points, labels):
    distances = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=2)
    values = []
    for i, label in enumerate(labels):
        own = labels == label
        own[i] = False
        if not own.any():
            continue
        inside = distances[i, own].mean()
        outside = min(distances[i, labels == other].mean() for other in set(labels) - {label})
        values.append((outside - inside) / max(inside, outside))
    return float(np.mean(values))


@pytest.fixture(scope="module")
def pipeline_runs(tmp_path_factory):
    runs = []
    for seed in PIPELINE_SEEDS:
        workdir = tmp_path_factory.mktemp(f"seed{seed}")
        configs, (_, reports) = run_pipeline(workdir, seed)
        runs.append((configs, reports))
    return runs


def test_default_fixture_recovers_planted_senses(pipeline_runs):
    recovered, objectives = [], []
    for configs, _ in pipeline_runs:
        planted = {r.relation: len(r.groups) for r in load_planted(configs["synth"].path(config.PLANTED_FILE)).relations}
        for document in pipelineService.read_refinements(configs["refine"]):
            recovered.append(document.chosen_k == planted[document.relation])
            objectives.append(document.objective)
    assert np.mean(recovered) >= 0.8
    assert np.mean(objectives) >= 0.9


def test_default_fixture_finegres_scores_at_least_the_baselines(pipeline_runs):
    for configs, _ in pipeline_runs:
        with open(configs["refine"].path(config.SCORES_FILE), encoding="utf-8") as f:
            mean_row = f.read().splitlines()[-1].split("\t")
        c_max, c_head, c_tail, c_finegres = map(float, mean_row[2:])
        assert c_finegres >= max(c_max, c_head, c_tail)


def test_default_fixture_rewrite_improves_classification(pipeline_runs):
    gains, beats_max = [], []
    for _, reports in pipeline_runs:
        f1 = {report.variant: report.f1 for report in reports}
        gains.append(f1["finegres"] - f1["r"])
        beats_max.append(f1["finegres"] >= f1["max"])
    assert np.mean(gains) >= 0.05
    assert np.mean(beats_max) >= 0.7


def test_default_fixture_senses_separate_in_the_embedding(pipeline_runs):
    for configs, _ in pipeline_runs[:2]:
        cfg = configs["refine"]
        kg = load_kg(cfg.triples_path, cfg.types_path)
        model = align_model(load_model(cfg.model_path), kg.symbols.entities.names, kg.symbols.relations.names)
        planted = load_planted(configs["synth"].path(config.PLANTED_FILE))
        for relation in planted.relations:
            sense_of = {tuple(pair): i for i, group in enumerate(relation.groups) for pair in group}
            deltas = delta_set(model, kg, kg.relation_id(relation.relation))
            labels = np.array([sense_of[kg.pair_names(p)] for p in deltas.pair_labels])
            assert silhouette(deltas.vectors, labels) > 0
