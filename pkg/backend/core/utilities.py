import os
import hashlib
from typing import Union

import numpy as np
from dotenv import load_dotenv

from core.errors import ParameterError

# Load Environment Variables (Ensure this runs once at the top level)
# We load them here so other modules can import the run settings
load_dotenv()

# --- ANSI Color Codes ---
C_RESET = "\033[0m"
C_RED = "\033[91m"
C_GREEN = "\033[92m"  # Success/Done
C_YELLOW = "\033[93m" # Data flow/State update/DEBUG
C_BLUE = "\033[94m"  # Agent Info
C_MAGENTA = "\033[95m" # Router/Supervisor
C_CYAN = "\033[96m"  # Initialization/Setup
C_ACTION = "\033[38;5;208m" # Action/Start


def _env_flag(name: str) -> bool:
    return os.getenv(name, "").strip().lower() in {"1", "true", "yes", "on"}


# --- Global Configuration Constants ---
DEFAULT_SEED = int(os.getenv("FISSIONLAB_SEED", "20240601"))
DEFAULT_WORKERS = int(os.getenv("FISSIONLAB_WORKERS", "4"))
DEFAULT_OUT_DIR = os.getenv("FISSIONLAB_OUT_DIR", "results")
VERBOSE = _env_flag("FISSIONLAB_VERBOSE")

ARTIFACT_VERSION = "0.3.0"

# Numeric Constants
THETA_CAP = 1e6             # finite stand-in for the Poisson limit of NB overdispersion
THETA_FLOOR = 1e-3
PSD_TOLERANCE = 1e-10       # Cholesky pivots in [-PSD_TOLERANCE, 0] are clamped to 0
SYMMETRY_TOLERANCE = 1e-12

SEED_MAX = 2**64 - 1

SeedKey = Union[int, str]


def trace(message: str) -> None:
    """Per-replicate stage line, printed only when FISSIONLAB_VERBOSE is set."""
    if VERBOSE:
        print(message)


# --- Shared Seed Utilities ---

def as_seed(value: int) -> int:
    seed = int(value)
    if seed < 0 or seed > SEED_MAX:
        raise ParameterError(f"seed must be an unsigned 64-bit integer, got {value}")
    return seed


def _key_to_int(key: SeedKey) -> int:
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError(f"seed keys must be non-negative, got {key}")
        return int(key)
    digest = hashlib.blake2b(str(key).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def derive_seed(seed: int, *keys: SeedKey) -> int:
    """
    Child seed for the stream identified by (seed, *keys).
    String keys (grid point labels, stage names) are hashed to 64 bits first.
    """
    entropy = [as_seed(seed)] + [_key_to_int(k) for k in keys]
    state = np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint64)
    return int(state[0])


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based Philox generator; identical seed gives an identical stream."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(as_seed(seed))))
