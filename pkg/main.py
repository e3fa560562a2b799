"""
Differential Inclusion Certifier
================================
Command-line entry point.

Usage:
    python main.py solve problem.json
    python main.py gap problem.json --format table
    python main.py verify problem.json trajectory.json certificate.json --tol 1e-7
    python main.py dual problem.json
    python main.py demo ptl --out build/

Configuration comes from the environment (or a .env file): LOG_LEVEL and the
DFI_* tolerances, see config.py.
"""

import logging
import sys

import config
import cli

# ============================================================================
# SETUP LOGGING
# ============================================================================

logging.basicConfig(
    level=getattr(logging, config.LOG_LEVEL, logging.INFO),
    format='%(asctime)s - %(levelname)s - %(message)s',
    stream=sys.stderr,
)
logger = logging.getLogger(__name__)


def main(argv=None):
    config.log_settings()
    return cli.run(argv)


if __name__ == '__main__':
    sys.exit(main())
