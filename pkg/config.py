import os
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()

DEFAULT_SIMS = int(os.getenv("FRACSPREAD_SIMS", 10000))
DEFAULT_SEED = int(os.getenv("FRACSPREAD_SEED", 0))
DEFAULT_WORKERS = int(os.getenv("FRACSPREAD_WORKERS", 1))
# Part of the threshold stream derivation; changing it changes every estimate.
REPLICATE_BLOCK_SIZE = int(os.getenv("FRACSPREAD_BLOCK_SIZE", 1024))
LOG_LEVEL = os.getenv("FRACSPREAD_LOG_LEVEL", "INFO")
LOGGING_CONF_PATH = Path(os.getenv("FRACSPREAD_LOGGING_CONF", Path(__file__).parent / "conf" / "logging.yml"))

# Exact oracle limits
EXACT_MAX_NODES = int(os.getenv("FRACSPREAD_EXACT_MAX_NODES", 10))
EXACT_MAX_BREAKPOINTS = int(os.getenv("FRACSPREAD_EXACT_MAX_BREAKPOINTS", 64))
EXACT_MAX_CELLS = int(os.getenv("FRACSPREAD_EXACT_MAX_CELLS", 2_000_000))

ACTIVATION_TOLERANCE = 1e-12
LINEAR_CONTRACT_SLACK = 1e-9
