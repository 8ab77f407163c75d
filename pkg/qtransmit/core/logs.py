"""Logger helpers."""

import logging

from qtransmit.core.config import get_settings


def get_logger(area: str) -> logging.Logger:
    """Return the `qtransmit.<area>` logger, honouring QTRANSMIT_DEBUG."""
    log = logging.getLogger(f"qtransmit.{area}")
    if get_settings().debug:
        logging.getLogger("qtransmit").setLevel(logging.DEBUG)
    return log


def configure_cli_logging(verbose: bool = False) -> None:
    """Root logging setup; only the CLI entry point calls this."""
    level = logging.DEBUG if verbose or get_settings().debug else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
