import os
from enum import Enum

ROOT_DIR = os.path.dirname(os.path.abspath(__file__))
BASE_PATH = os.path.join(ROOT_DIR, '..')


class ModelKind(str, Enum):
    TransE = "transe"
    DistMult = "distmult"


class ClustererKind(str, Enum):
    KMeans = "kmeans"
    HAC = "hac"


class TypePolicy(str, Enum):
    First = "first"
    Priority = "priority"


class BaselineKind(str, Enum):
    Max = "max"
    Head = "head"
    Tail = "tail"


class TypeVectorSource(str, Enum):
    External = "external"
    Centroid = "centroid"


# Experiment name, echoed into every run_config.<command>.txt
EXPERIMENT_NAME = "Fine-grained relation refinement"

SAMPLES_PATH = os.path.join(BASE_PATH, 'samples')
OUTPUT_PATH = os.path.join(BASE_PATH, 'output')
FIXTURE_PATH = os.path.join(SAMPLES_PATH, 'fixture')

# default workdir when neither --workdir nor the config file names one
WORKDIR = OUTPUT_PATH

# artifact names inside the workdir
TRIPLES_FILE = "triples.tsv"
TYPES_FILE = "types.tsv"
MODEL_FILE = "model.emb"
LOSS_FILE = "train_loss.tsv"
STATS_FILE = "stats.tsv"
SCORES_FILE = "scores.tsv"
SUBRELATIONS_FILE = "subrelations.tsv"
REFINEMENT_DIR = "refinements"
REFINED_TRIPLES_FILE = "refined_triples.tsv"
SUBRELATION_MAP_FILE = "subrelation_map.json"
REPORT_FILE = "classification.tsv"
PLANTED_FILE = "planted.json"
CONFIG_ECHO_FILE = "run_config.{command}.txt"

# file format tags
MODEL_FILE_MAGIC = "finegres-emb"
MODEL_FILE_VERSION = "v1"
REFINEMENT_FORMAT = "finegres-refinement v1"
MAP_FORMAT = "finegres-map v1"
PLANTED_FORMAT = "finegres-planted v1"
COMMENT_PREFIX = "#"

SEED = 7
MODEL_KIND = ModelKind.TransE
EMBEDDING_DIM = 32
EPOCHS = 200
LEARNING_RATE = 0.01
MARGIN = 1.0
NEGATIVE_SAMPLES = 1
BATCH_SIZE = 128
# a corruption that hits a known positive is redrawn at most this many times
MAX_NEGATIVE_RESAMPLES = 20

CLUSTERER_KIND = ClustererKind.KMeans
KMEANS_MAX_ITERS = 300
KMEANS_TOLERANCE = 1e-6
HAC_LINKAGE = "average"

TYPE_POLICY = TypePolicy.First
TYPE_VECTORS = "centroid"

# Δ rows per relation above this are subsampled (stratified by type pair)
REFINEMENT_CAP = 20000
# two scores closer than this are an argmax tie
SCORE_TIE_TOLERANCE = 1e-12

EVAL_RUNS = 10
TEST_FRACTION = 0.2
JOBS = 1

# synthetic generator defaults
SYNTH_RELATIONS = 5
SYNTH_SENSES = (2, 3, 4)
SYNTH_ENTITIES_PER_TYPE = 6
SYNTH_FACTS_PER_SENSE = 36
SYNTH_MARGIN = 1.0
SYNTH_NOISE = 0.0
