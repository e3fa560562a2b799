"""
Configuration
=============
Tolerances and runtime settings, read once from the environment.
A local .env file is honoured when python-dotenv is installed.
"""

import os
import logging

try:
    from dotenv import load_dotenv
    load_dotenv()
except ImportError:
    pass

logger = logging.getLogger(__name__)

VERSION = "1.0.0"

# ============================================================================
# NUMERICAL TOLERANCES
# ============================================================================

LP_TOL = float(os.environ.get("DFI_LP_TOL", "1e-8"))
ACTIVE_TOL = float(os.environ.get("DFI_ACTIVE_TOL", "1e-9"))
MEMBERSHIP_TOL = float(os.environ.get("DFI_MEMBERSHIP_TOL", "1e-8"))
INCLUSION_TOL = float(os.environ.get("DFI_INCLUSION_TOL", "1e-7"))
COMPLEMENTARITY_TOL = float(os.environ.get("DFI_COMPLEMENTARITY_TOL", "1e-8"))
WEAK_DUALITY_TOL = float(os.environ.get("DFI_WEAK_DUALITY_TOL", "1e-7"))
GAP_TOL = float(os.environ.get("DFI_GAP_TOL", "1e-6"))

# Simplex pivots before giving up with status iteration_limit
MAX_ITER = int(os.environ.get("DFI_MAX_ITER", "50000"))

# Worker threads for per-node evaluations (1 = sequential)
WORKERS = int(os.environ.get("DFI_WORKERS", "1"))

# ============================================================================
# RUNTIME
# ============================================================================

LOG_LEVEL = os.environ.get("LOG_LEVEL", "INFO").upper()
PORT = int(os.environ.get("PORT", 5000))
DEBUG = os.environ.get("DFI_DEBUG", "false").lower() == "true"


def tolerances():
    """Tolerances in force, as reported by /health and in report documents"""
    return {
        'lp': LP_TOL,
        'active': ACTIVE_TOL,
        'membership': MEMBERSHIP_TOL,
        'inclusion': INCLUSION_TOL,
        'complementarity': COMPLEMENTARITY_TOL,
        'weak_duality': WEAK_DUALITY_TOL,
        'gap': GAP_TOL,
    }


def log_settings():
    """Write the active configuration to the log"""
    logger.info(f"Version: {VERSION} | Log level: {LOG_LEVEL} | Max pivots: {MAX_ITER} | Workers: {WORKERS}")
    for name, value in tolerances().items():
        logger.info(f"  tol[{name}] = {value:.1e}")
