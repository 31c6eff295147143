import logging
import sys

import click

from app.dtos.runConfig import load_run_config
from app.services import pipelineService
from app.utils.errors import (ConfigError, FinegresError, KGValidationError, ModelFormatError, ParseError,
                              TypeVectorError)
from app.utils.logger import setup_logging
from config import config

logger = logging.getLogger("finegres")

# bad input or configuration; everything else is a runtime failure
USAGE_ERRORS = (ConfigError, ParseError, KGValidationError, ModelFormatError, TypeVectorError,
                FileNotFoundError)
EXIT_USAGE = 2
EXIT_FAILURE = 1


def _choice(enum):
    return click.Choice([member.value for member in enum])


def common_options(command):
    options = [
        click.option("--config", "config_file", type=click.Path(dir_okay=False),
                     help="key=value file; flags override its values"),
        click.option("--workdir", help=f"artifact directory (default {config.WORKDIR})"),
        click.option("--triples", help="triples TSV (default <workdir>/triples.tsv)"),
        click.option("--types", help="entity types TSV (default <workdir>/types.tsv)"),
        click.option("--seed", type=int),
        click.option("--jobs", type=int, help="relations or runs processed in parallel"),
        click.option("--verbose", is_flag=True, help="debug logging"),
    ]
    for option in reversed(options):
        command = option(command)
    return command


def refine_options(command):
    options = [
        click.option("--clusterer", type=_choice(config.ClustererKind)),
        click.option("--type-vectors", help="'centroid' or 'file:<path>'"),
        click.option("--type-policy", type=_choice(config.TypePolicy)),
        click.option("--type-priority", help="comma separated type names for the priority policy"),
        click.option("--relation", "relations", multiple=True, help="restrict to this relation (repeatable)"),
    ]
    for option in reversed(options):
        command = option(command)
    return command


def execute(command: str, config_file=None, verbose=False, **flags):
    "run one pipeline command and map failures to exit codes"
    setup_logging(verbose)
    try:
        cfg = load_run_config(command, config_file, **flags)
        pipelineService.run(cfg)
    except USAGE_ERRORS as e:
        logger.error("%s", e)
        sys.exit(EXIT_USAGE)
    except FinegresError as e:
        logger.error("%s", e)
        sys.exit(EXIT_FAILURE)
    except Exception:
        logger.exception("%s failed", command)
        sys.exit(EXIT_FAILURE)


@click.group()
def cli():
    "Fine-grained refinement of polysemous knowledge-graph relations."


@cli.command()
@common_options
@refine_options
def stats(**kwargs):
    "Write stats.tsv: type pairs and facts per relation."
    execute("stats", **kwargs)


@cli.command()
@common_options
@refine_options
@click.option("--model", type=_choice(config.ModelKind))
@click.option("--dim", type=int)
@click.option("--epochs", type=int)
@click.option("--learning-rate", type=float)
@click.option("--margin", type=float)
@click.option("--negative-samples", type=int)
@click.option("--batch-size", type=int)
@click.option("--import-vectors", type=click.Path(dir_okay=False),
              help="align an already trained model file instead of training")
def train(**kwargs):
    "Train TransE or DistMult embeddings and write model.emb."
    execute("train", **kwargs)


@cli.command()
@common_options
@refine_options
@click.option("--refinement-cap", type=int, help="Δ rows per relation above which rows are subsampled")
def refine(**kwargs):
    "Search the best sub-relation partition of every relation."
    execute("refine", **kwargs)


@cli.command()
@common_options
@refine_options
def rewrite(**kwargs):
    "Replace refined relations by their sub-relations."
    execute("rewrite", **kwargs)


@cli.command(name="eval")
@common_options
@refine_options
@click.option("--runs", type=int)
@click.option("--test-fraction", type=float)
def evaluate(**kwargs):
    "Entity-type classification on the original and rewritten graphs."
    execute("eval", **kwargs)


@cli.command()
@common_options
@click.option("--relations", "synth_relations", type=int, help="number of planted relations")
@click.option("--senses", "synth_senses", help="comma separated sense counts, cycled over relations")
@click.option("--entities-per-type", "synth_entities_per_type", type=int)
@click.option("--facts-per-sense", "synth_facts_per_sense", type=int)
@click.option("--margin", "synth_margin", type=float, help="share of each sense's entity grid drawn as facts")
@click.option("--noise", "synth_noise", type=float)
def synth(**kwargs):
    "Generate a synthetic polysemous KG with planted senses."
    execute("synth", **kwargs)


if __name__ == "__main__":
    cli()
