from __future__ import annotations

import io
import logging
import os
from typing import Dict, Iterable, List, Optional, TextIO, Tuple

from app.models.kg_model.Graph import KnowledgeGraph, SymbolTable, Triple
from app.utils.errors import ConfigError, ParseError
from config import config

logger = logging.getLogger(__name__)


def _records(source: Iterable[str], width: int, source_name: Optional[str]):
    "yield (line number, fields) for every data line, skipping blanks and comments"
    for number, raw in enumerate(source, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.startswith(config.COMMENT_PREFIX):
            continue
        fields = line.split("\t")
        if len(fields) != width:
            raise ParseError(f"expected {width} tab-separated fields, found {len(fields)}",
                             line_number=number, source=source_name)
        if any(not f for f in fields):
            raise ParseError("empty field", line_number=number, source=source_name)
        yield number, fields


def parse_triples(source: Iterable[str], source_name: Optional[str] = None) -> Tuple[List[Triple], SymbolTable]:
    """
    Read `head<TAB>relation<TAB>tail` lines. Names are interned in first-seen
    order and duplicate lines are kept as duplicate triples.
    """
    symbols = SymbolTable()
    triples = []
    for _, (head, relation, tail) in _records(source, 3, source_name):
        triples.append(Triple(symbols.entities.intern(head),
                              symbols.relations.intern(relation),
                              symbols.entities.intern(tail)))
    if not triples:
        raise ParseError("no triples found", source=source_name)
    return triples, symbols


def parse_type_assignments(source: Iterable[str], source_name: Optional[str] = None) -> Dict[str, List[str]]:
    "read `entity<TAB>type` lines; several lines per entity accumulate in file order"
    assignments: Dict[str, List[str]] = {}
    for _, (entity, type_name) in _records(source, 2, source_name):
        assignments.setdefault(entity, []).append(type_name)
    return assignments


def build_kg(triples: List[Triple], symbols: SymbolTable,
             assignments: Dict[str, List[str]]) -> KnowledgeGraph:
    """
    Attach type assignments to parsed triples. Entities that only appear in
    the type file are interned after the triple entities.
    """
    type_assignments: Dict[int, List[int]] = {}
    for entity, type_names in assignments.items():
        entity_id = symbols.entities.intern(entity)
        type_assignments[entity_id] = [symbols.types.intern(t) for t in type_names]
    return KnowledgeGraph(triples, symbols, type_assignments)


def parse_kg(triples_source: Iterable[str], types_source: Iterable[str]) -> KnowledgeGraph:
    triples, symbols = parse_triples(triples_source)
    return build_kg(triples, symbols, parse_type_assignments(types_source))


def _require_file(path):
    if not os.path.isfile(path):
        raise ConfigError(f"file not found: {path}")


def load_kg(triples_path, types_path, validate=True) -> KnowledgeGraph:
    _require_file(triples_path)
    _require_file(types_path)
    with open(triples_path, encoding="utf-8") as f:
        triples, symbols = parse_triples(f, source_name=str(triples_path))
    with open(types_path, encoding="utf-8") as f:
        assignments = parse_type_assignments(f, source_name=str(types_path))
    kg = build_kg(triples, symbols, assignments)
    logger.info("loaded %d triples, %d entities, %d relations, %d types",
                len(kg.triples), len(symbols.entities), len(symbols.relations), len(symbols.types))
    if validate:
        kg.validate()
    return kg


def write_triples(kg: KnowledgeGraph, stream: TextIO):
    for triple in kg.triples:
        stream.write("\t".join(kg.triple_names(triple)) + "\n")


def write_types(kg: KnowledgeGraph, stream: TextIO):
    entities, types = kg.symbols.entities, kg.symbols.types
    for entity, type_ids in kg.type_assignments.items():
        name = entities.name_of(entity)
        for t in type_ids:
            stream.write(f"{name}\t{types.name_of(t)}\n")


def save_kg(kg: KnowledgeGraph, triples_path, types_path=None):
    with open(triples_path, "w", encoding="utf-8", newline="") as f:
        write_triples(kg, f)
    if types_path is not None:
        with open(types_path, "w", encoding="utf-8", newline="") as f:
            write_types(kg, f)


def serialize_kg(kg: KnowledgeGraph) -> Tuple[str, str]:
    triples, types = io.StringIO(), io.StringIO()
    write_triples(kg, triples)
    write_types(kg, types)
    return triples.getvalue(), types.getvalue()


def write_table(path, header: List[str], rows: Iterable[Iterable]):
    "TSV with a header line; floats are expected to be pre-formatted by the caller"
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write("\t".join(header) + "\n")
        for row in rows:
            f.write("\t".join(str(v) for v in row) + "\n")
