from __future__ import annotations

import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.utils.errors import ConfigError, ModelFormatError
from config import config

logger = logging.getLogger(__name__)

_NORM_EPS = 1e-12


class EmbeddingModel:
    "entity and relation vector tables for TransE or DistMult"

    def __init__(self, kind: config.ModelKind, entity_vectors: np.ndarray, relation_vectors: np.ndarray,
                 entity_names: Optional[Sequence[str]] = None, relation_names: Optional[Sequence[str]] = None):
        self.kind = config.ModelKind(kind)
        self.entity_vectors = np.asarray(entity_vectors, dtype=np.float64)
        self.relation_vectors = np.asarray(relation_vectors, dtype=np.float64)
        if self.entity_vectors.ndim != 2 or self.relation_vectors.ndim != 2 \
                or self.entity_vectors.shape[1] != self.relation_vectors.shape[1]:
            raise ValueError("entity and relation tables must be 2-D with the same width")
        self.entity_names = list(entity_names) if entity_names is not None else None
        self.relation_names = list(relation_names) if relation_names is not None else None

    @property
    def dim(self) -> int:
        return self.entity_vectors.shape[1]

    def copy(self) -> "EmbeddingModel":
        return EmbeddingModel(self.kind, self.entity_vectors.copy(), self.relation_vectors.copy(),
                              self.entity_names, self.relation_names)

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.entity_vectors).all() and np.isfinite(self.relation_vectors).all())

    def score(self, triple) -> float:
        "plausibility of one triple, higher is better"
        h, r, t = triple
        return float(self.score_batch(np.array([[h, r, t]]))[0])

    def score_batch(self, triples: np.ndarray) -> np.ndarray:
        triples = np.asarray(triples, dtype=np.int64)
        h = self.entity_vectors[triples[:, 0]]
        r = self.relation_vectors[triples[:, 1]]
        t = self.entity_vectors[triples[:, 2]]
        if self.kind == config.ModelKind.TransE:
            return -np.linalg.norm(h + r - t, axis=1)
        return np.sum(h * r * t, axis=1)

    def delta(self, triple) -> np.ndarray:
        "relation witness of one fact: t - h for TransE, h * t for DistMult"
        h, _, t = triple
        return self.delta_batch(np.array([[h, 0, t]]))[0]

    def delta_batch(self, triples: np.ndarray) -> np.ndarray:
        triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
        h = self.entity_vectors[triples[:, 0]]
        t = self.entity_vectors[triples[:, 2]]
        if self.kind == config.ModelKind.TransE:
            return t - h
        return h * t

    def train_batch(self, positives: np.ndarray, negatives: np.ndarray, learning_rate: float,
                    margin: float) -> float:
        """
        One SGD step of the margin ranking loss
        max(0, margin - score(pos) + score(neg)) over aligned rows.
        Returns the summed loss of the batch before the update.
        """
        E, R = self.entity_vectors, self.relation_vectors
        ph, pr, pt = positives[:, 0], positives[:, 1], positives[:, 2]
        nh, nt = negatives[:, 0], negatives[:, 2]
        h, r, t = E[ph], R[pr], E[pt]
        h_neg, t_neg = E[nh], E[nt]

        if self.kind == config.ModelKind.TransE:
            d_pos = h + r - t
            d_neg = h_neg + r - t_neg
            n_pos = np.linalg.norm(d_pos, axis=1)
            n_neg = np.linalg.norm(d_neg, axis=1)
            losses = margin + n_pos - n_neg
            u_pos = d_pos / np.maximum(n_pos, _NORM_EPS)[:, None]
            u_neg = d_neg / np.maximum(n_neg, _NORM_EPS)[:, None]
            g_h, g_t = u_pos, -u_pos
            g_hn, g_tn = -u_neg, u_neg
            g_r = u_pos - u_neg
        else:
            s_pos = np.sum(h * r * t, axis=1)
            s_neg = np.sum(h_neg * r * t_neg, axis=1)
            losses = margin - s_pos + s_neg
            g_h, g_t = -r * t, -r * h
            g_hn, g_tn = r * t_neg, r * h_neg
            g_r = h_neg * t_neg - h * t

        active = losses > 0
        if not active.any():
            return 0.0
        lr = learning_rate
        np.add.at(E, ph[active], -lr * g_h[active])
        np.add.at(E, pt[active], -lr * g_t[active])
        np.add.at(E, nh[active], -lr * g_hn[active])
        np.add.at(E, nt[active], -lr * g_tn[active])
        np.add.at(R, pr[active], -lr * g_r[active])
        return float(losses[active].sum())

    def constrain(self):
        """
        End-of-epoch projection: TransE entities onto the unit sphere,
        DistMult entities into the unit ball.
        """
        norms = np.linalg.norm(self.entity_vectors, axis=1, keepdims=True)
        if self.kind == config.ModelKind.TransE:
            self.entity_vectors /= np.maximum(norms, _NORM_EPS)
        else:
            self.entity_vectors /= np.maximum(norms, 1.0)


def init_model(kind: config.ModelKind, dim: int, n_entities: int, n_relations: int, seed: int,
               entity_names: Optional[Sequence[str]] = None,
               relation_names: Optional[Sequence[str]] = None) -> EmbeddingModel:
    "uniform initialization in [-6/sqrt(dim), 6/sqrt(dim)]"
    if dim < 2:
        raise ConfigError(f"embedding dimension must be at least 2, got {dim}")
    bound = 6.0 / np.sqrt(dim)
    rng = np.random.default_rng(seed)
    entity_vectors = rng.uniform(-bound, bound, size=(n_entities, dim))
    relation_vectors = rng.uniform(-bound, bound, size=(n_relations, dim))
    return EmbeddingModel(kind, entity_vectors, relation_vectors, entity_names, relation_names)


def score(model: EmbeddingModel, triple) -> float:
    return model.score(triple)


def delta(model: EmbeddingModel, triple) -> np.ndarray:
    return model.delta(triple)


def _format_vector(vector) -> str:
    return " ".join(format(float(v), ".17g") for v in vector)


# names are single space-free tokens in the file
def _encode_name(name: str) -> str:
    return name.replace("%", "%25").replace(" ", "%20")


def _decode_name(token: str) -> str:
    return token.replace("%20", " ").replace("%25", "%")


def save_model(model: EmbeddingModel, path, entity_names: Optional[Sequence[str]] = None,
               relation_names: Optional[Sequence[str]] = None):
    """
    Text format:
        finegres-emb v1 <kind> <dim>
        E <name> <v1> ... <vdim>
        R <name> <v1> ... <vdim>
        END <entity count> <relation count>
    """
    entity_names = list(entity_names or model.entity_names or map(str, range(len(model.entity_vectors))))
    relation_names = list(relation_names or model.relation_names or map(str, range(len(model.relation_vectors))))
    if len(entity_names) != len(model.entity_vectors) or len(relation_names) != len(model.relation_vectors):
        raise ValueError("name lists do not match the vector tables")
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(f"{config.MODEL_FILE_MAGIC} {config.MODEL_FILE_VERSION} {model.kind.value} {model.dim}\n")
        for name, vector in zip(entity_names, model.entity_vectors):
            f.write(f"E {_encode_name(name)} {_format_vector(vector)}\n")
        for name, vector in zip(relation_names, model.relation_vectors):
            f.write(f"R {_encode_name(name)} {_format_vector(vector)}\n")
        f.write(f"END {len(entity_names)} {len(relation_names)}\n")


def _parse_header(line: str) -> Tuple[config.ModelKind, int]:
    parts = line.split()
    if len(parts) != 4 or parts[0] != config.MODEL_FILE_MAGIC:
        raise ModelFormatError(f"not a {config.MODEL_FILE_MAGIC} model file")
    if parts[1] != config.MODEL_FILE_VERSION:
        raise ModelFormatError(f"unsupported model file version {parts[1]!r}")
    try:
        kind = config.ModelKind(parts[2])
        dim = int(parts[3])
    except ValueError:
        raise ModelFormatError(f"bad model header {line.strip()!r}") from None
    if dim < 2:
        raise ModelFormatError(f"bad dimension {dim}")
    return kind, dim


def load_model(path) -> EmbeddingModel:
    """
    The END footer is optional. Without it, a file is taken as truncated
    when it lacks a final newline or has no R lines.
    """
    with open(path, encoding="utf-8") as f:
        text = f.read()
    lines = text.split("\n")
    if not lines or not lines[0].strip():
        raise ModelFormatError(f"{path}: empty model file")
    kind, dim = _parse_header(lines[0])
    unterminated = not text.endswith("\n")

    tables = {"E": ([], []), "R": ([], [])}
    footer = None
    for number, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        if footer is not None:
            raise ModelFormatError(f"{path}: line {number}: content after END")
        parts = line.split(" ")
        if parts[0] == "END":
            footer = parts
            continue
        if parts[0] not in tables or len(parts) != dim + 2:
            if unterminated and number == len(lines):
                raise ModelFormatError(f"{path}: truncated model file (partial last line {number})")
            raise ModelFormatError(f"{path}: line {number}: expected '<E|R> <name> <{dim} values>'")
        try:
            values = [float(v) for v in parts[2:]]
        except ValueError:
            raise ModelFormatError(f"{path}: line {number}: non-numeric value") from None
        names, vectors = tables[parts[0]]
        names.append(_decode_name(parts[1]))
        vectors.append(values)

    entity_names, entity_vectors = tables["E"]
    relation_names, relation_vectors = tables["R"]
    if footer is not None:
        if footer[1:] != [str(len(entity_names)), str(len(relation_names))]:
            raise ModelFormatError(f"{path}: END counts {' '.join(footer[1:])} do not match "
                                   f"{len(entity_names)} entities / {len(relation_names)} relations")
    elif unterminated:
        raise ModelFormatError(f"{path}: truncated model file (no final newline)")
    elif not relation_names:
        raise ModelFormatError(f"{path}: truncated model file (no R lines)")
    return EmbeddingModel(kind,
                          np.array(entity_vectors, dtype=np.float64).reshape(-1, dim),
                          np.array(relation_vectors, dtype=np.float64).reshape(-1, dim),
                          entity_names, relation_names)


def align_model(model: EmbeddingModel, entity_names: List[str], relation_names: List[str]) -> EmbeddingModel:
    """
    Reorder an externally trained model so row i is the KG's symbol i.
    Every KG name must be present in the model.
    """
    if model.entity_names is None or model.relation_names is None:
        raise ModelFormatError("model carries no symbol names to align")
    e_index = {n: i for i, n in enumerate(model.entity_names)}
    r_index = {n: i for i, n in enumerate(model.relation_names)}
    missing = [n for n in entity_names if n not in e_index] + [n for n in relation_names if n not in r_index]
    if missing:
        raise ModelFormatError(f"model lacks vectors for {len(missing)} symbols, e.g. {missing[:5]}")
    return EmbeddingModel(model.kind,
                          model.entity_vectors[[e_index[n] for n in entity_names]],
                          model.relation_vectors[[r_index[n] for n in relation_names]],
                          entity_names, relation_names)
