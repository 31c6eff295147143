import logging

from rich.console import Console
from rich.logging import RichHandler

# diagnostics go to stderr, artifacts go to files
console = Console(stderr=True)


def setup_logging(verbose=False):
    """
    Configure the root logger once with a rich handler on stderr.
    Calling it again only adjusts the level.
    """
    level = logging.DEBUG if verbose else logging.INFO
    root = logging.getLogger()
    root.setLevel(level)
    if not any(isinstance(h, RichHandler) for h in root.handlers):
        handler = RichHandler(console=console, show_time=False, show_path=False, markup=False)
        handler.setFormatter(logging.Formatter("%(message)s"))
        root.addHandler(handler)
    return root
