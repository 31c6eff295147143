class FinegresError(Exception):
    "base class for every error raised by the toolkit"


class ConfigError(FinegresError):
    "bad or inconsistent run configuration"


class ParseError(FinegresError):
    "malformed line in a TSV input"

    def __init__(self, message, line_number=None, source=None):
        self.line_number = line_number
        self.source = source
        where = ""
        if source is not None:
            where += f"{source}: "
        if line_number is not None:
            where += f"line {line_number}: "
        super().__init__(where + message)


class KGValidationError(FinegresError):
    "the knowledge graph cannot support the requested operation"


class ModelFormatError(FinegresError):
    "embedding model file is unreadable"


class TypeVectorError(FinegresError):
    "type vector table is inconsistent or incomplete"


class ClusteringError(FinegresError):
    "invalid clustering request"


class RefinementError(FinegresError):
    "the refinement search cannot run on the given data"


class EvaluationError(FinegresError):
    "the classification harness cannot run on the given data"


def describe_offenders(names, limit=10):
    "comma separated list of offending names, truncated for long lists"
    names = list(names)
    shown = ", ".join(str(n) for n in names[:limit])
    if len(names) > limit:
        shown += f" (+{len(names) - limit} more)"
    return shown
