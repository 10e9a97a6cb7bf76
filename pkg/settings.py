import os

from dotenv import load_dotenv

# Load environment variables (.env in the working directory, if present)
load_dotenv()


def _env_int(name: str, default: int) -> int:
    return int(os.getenv(f"SPECTRAL_TAIL_{name}", default))


def _env_float(name: str, default: float) -> float:
    return float(os.getenv(f"SPECTRAL_TAIL_{name}", default))


# --- Configuration ---
VERSION = "0.1.0"

DEFAULT_SEED = _env_int("SEED", 20240601)
# Worker processes for Monte Carlo replicates (1 = run in-process)
WORKERS = _env_int("WORKERS", 1)

BURN_IN = _env_int("BURN_IN", 2000)

# Oracle and study scale (desk-scale defaults)
ORACLE_REPLICATES = _env_int("ORACLE_REPLICATES", 2000)
ORACLE_LENGTH = _env_int("ORACLE_LENGTH", 10000)
# Series simulated together in one vectorized batch
ORACLE_CHUNK = _env_int("ORACLE_CHUNK", 100)
STUDY_REPLICATES = _env_int("STUDY_REPLICATES", 300)
BOOTSTRAP_REPLICATES = _env_int("BOOTSTRAP_REPLICATES", 300)

# Degenerate bootstrap replicates are redrawn this many times before being discarded
MAX_REDRAWS = _env_int("MAX_REDRAWS", 10)
MAX_DISCARD_FRACTION = _env_float("MAX_DISCARD_FRACTION", 0.2)

LOG_LEVEL = os.getenv("SPECTRAL_TAIL_LOG_LEVEL", "WARNING")
# --- End Configuration ---
