import os
from typing import Any, Dict, List, Optional

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from app.utils.errors import ConfigError
from config import config

TYPE_VECTOR_FILE_PREFIX = "file:"


class RunConfig(BaseModel):
    """
    Resolved settings of one command: module defaults, then the key=value
    config file, then command-line flags.
    """
    model_config = ConfigDict(extra="forbid")

    command: str = "run"
    experiment: str = config.EXPERIMENT_NAME
    workdir: str = config.WORKDIR
    triples: Optional[str] = None
    types: Optional[str] = None
    type_vectors: str = config.TYPE_VECTORS
    import_vectors: Optional[str] = None
    seed: int = config.SEED
    jobs: int = Field(config.JOBS, ge=1)

    model: config.ModelKind = config.MODEL_KIND
    dim: int = Field(config.EMBEDDING_DIM, ge=2)
    epochs: int = Field(config.EPOCHS, ge=0)
    learning_rate: float = Field(config.LEARNING_RATE, gt=0)
    margin: float = Field(config.MARGIN, gt=0)
    negative_samples: int = Field(config.NEGATIVE_SAMPLES, ge=1)
    batch_size: int = Field(config.BATCH_SIZE, ge=1)

    clusterer: config.ClustererKind = config.CLUSTERER_KIND
    kmeans_max_iters: int = Field(config.KMEANS_MAX_ITERS, ge=1)
    kmeans_tolerance: float = Field(config.KMEANS_TOLERANCE, gt=0)
    type_policy: config.TypePolicy = config.TYPE_POLICY
    type_priority: List[str] = []
    refinement_cap: int = Field(config.REFINEMENT_CAP, ge=1)
    relations: List[str] = []

    runs: int = Field(config.EVAL_RUNS, ge=1)
    test_fraction: float = Field(config.TEST_FRACTION, gt=0, lt=1)

    synth_relations: int = Field(config.SYNTH_RELATIONS, ge=1)
    synth_senses: List[int] = list(config.SYNTH_SENSES)
    synth_entities_per_type: int = Field(config.SYNTH_ENTITIES_PER_TYPE, ge=1)
    synth_facts_per_sense: int = Field(config.SYNTH_FACTS_PER_SENSE, ge=1)
    synth_margin: float = Field(config.SYNTH_MARGIN, gt=0, le=1)
    synth_noise: float = Field(config.SYNTH_NOISE, ge=0, lt=1)

    @field_validator("type_priority", "relations", "synth_senses", mode="before")
    @classmethod
    def split_list(cls, value):
        if isinstance(value, str):
            return [item.strip() for item in value.split(",") if item.strip()]
        return value

    @field_validator("synth_senses")
    @classmethod
    def positive_senses(cls, value):
        if not value or any(k < 1 for k in value):
            raise ValueError("every relation needs at least one sense")
        return value

    @field_validator("type_vectors")
    @classmethod
    def type_vector_source(cls, value):
        if value != config.TypeVectorSource.Centroid.value and not (
                value.startswith(TYPE_VECTOR_FILE_PREFIX) and len(value) > len(TYPE_VECTOR_FILE_PREFIX)):
            raise ValueError("expected 'centroid' or 'file:<path>'")
        return value

    def path(self, name: str) -> str:
        return os.path.join(self.workdir, name)

    @property
    def triples_path(self) -> str:
        return self.triples or self.path(config.TRIPLES_FILE)

    @property
    def types_path(self) -> str:
        return self.types or self.path(config.TYPES_FILE)

    @property
    def model_path(self) -> str:
        return self.path(config.MODEL_FILE)

    @property
    def refinement_dir(self) -> str:
        return self.path(config.REFINEMENT_DIR)

    @property
    def type_vector_file(self) -> Optional[str]:
        if self.type_vectors.startswith(TYPE_VECTOR_FILE_PREFIX):
            return self.type_vectors[len(TYPE_VECTOR_FILE_PREFIX):]
        return None

    def echo_lines(self) -> List[str]:
        "sorted key=value lines; lists are comma separated"
        lines = []
        for key, value in sorted(self.model_dump().items()):
            if isinstance(value, list):
                value = ",".join(str(v) for v in value)
            elif hasattr(value, "value"):
                value = value.value
            elif value is None:
                value = ""
            lines.append(f"{key}={value}")
        return lines

    def write_echo(self) -> str:
        os.makedirs(self.workdir, exist_ok=True)
        path = self.path(config.CONFIG_ECHO_FILE.format(command=self.command))
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write("\n".join(self.echo_lines()) + "\n")
        return path


def read_config_file(path: str) -> Dict[str, Any]:
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    values = {key.strip().lower().replace("-", "_"): value for key, value in dotenv_values(path).items()}
    unknown = sorted(set(values) - set(RunConfig.model_fields) | ({"command"} & set(values)))
    if unknown:
        raise ConfigError(f"{path}: unknown config keys: {', '.join(unknown)}")
    empty = sorted(key for key, value in values.items() if value is None)
    if empty:
        raise ConfigError(f"{path}: keys without a value: {', '.join(empty)}")
    return values


def load_run_config(command: str, config_file: Optional[str] = None, **flags) -> RunConfig:
    values: Dict[str, Any] = {}
    if config_file:
        values.update(read_config_file(config_file))
    values.update({key: value for key, value in flags.items() if value not in (None, (), [])})
    values["command"] = command
    try:
        return RunConfig(**values)
    except ValidationError as e:
        problems = "; ".join(f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors())
        raise ConfigError(f"invalid configuration: {problems}") from None
