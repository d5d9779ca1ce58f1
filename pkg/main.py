"""
gausscov - Gaussian covariance representation and concentration toolkit

Entry point: configures logging and signal handling, then runs one CLI
subcommand. Reports go to stdout (or --out); logs go to stderr and,
when GAUSSCOV_LOG_FILE is set, to that file.

    python main.py verify-representation --config run.toml --seed 7
"""

import logging
import signal
import sys
from typing import Optional, Sequence

import cli
from config import runtime_config

logger = logging.getLogger(__name__)


def setup_logging(level: Optional[str] = None, log_file: Optional[str] = None):
    """Root logging: stderr always, a file handler when a path is configured."""
    handlers = [logging.StreamHandler(sys.stderr)]
    log_file = runtime_config.log_file if log_file is None else log_file
    if log_file:
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(
        level=getattr(logging, (level or runtime_config.log_level).upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers,
        force=True,
    )


def signal_handler(sig, frame):
    """Handle interrupt signals; partial reports are never written."""
    logger.info("Received interrupt signal, stopping")
    sys.exit(130)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point."""
    setup_logging()
    signal.signal(signal.SIGINT, signal_handler)
    signal.signal(signal.SIGTERM, signal_handler)

    try:
        return cli.main(argv)
    except Exception as e:
        logger.error(f"Fatal error: {e}", exc_info=True)
        return cli.EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
