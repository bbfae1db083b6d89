# backend/config/settings.py - Environment-level settings (dotenv)
import os
import logging
from pathlib import Path
from dotenv import load_dotenv

load_dotenv()

logger = logging.getLogger(__name__)

SOFTWARE_VERSION = "1.0.0"
# Bumped whenever the stepping scheme or the noise layout changes output bits.
SCHEME_VERSION = "etd-em-1"

DEFAULT_OUTPUT_DIR = Path(os.getenv("HORSESHOE_OUTPUT_DIR", "runs"))
LOG_LEVEL = os.getenv("HORSESHOE_LOG_LEVEL", "INFO").upper()

try:
    DEFAULT_WORKERS = max(1, int(os.getenv("HORSESHOE_WORKERS", "1")))
except ValueError:
    logger.warning("HORSESHOE_WORKERS is not an integer, using 1 worker")
    DEFAULT_WORKERS = 1
