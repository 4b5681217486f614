"""
Centralized Configuration for the iUzawa-Net solver toolkit.

This file consolidates all environment-level parameters for the application.
It uses the `dotenv` library to load settings from a `.env` file, allowing for
easy management of machine-specific settings (thread caps, output folders)
without hardcoding them into the source.

The configuration is organized into logical sections:
- Runtime (threads, debug logging)
- File Paths for datasets, checkpoints and reports
- Numerical Constants shared by the solvers and the networks
- Data Generation parameters
- Reference Solver parameters

Per-experiment values (α, β, architecture sizes, learning rates) live in
`experiment_config.py`; run-specific values come from key=value files handled
by `run_parameters.py`.
"""
import os
from dotenv import load_dotenv

# Load environment variables from a .env file if it exists.
load_dotenv()


def _get_bool(name: str, default: str = "false") -> bool:
    """Interpret common truthy spellings of an environment variable."""
    return os.getenv(name, default).strip().lower() in ("1", "true", "yes", "on")


# --- Runtime ---
# THREADS: Upper bound on worker threads for batch-parallel work (dataset
# generation, per-sample forward/backward, evaluation). The CLI flag
# --threads takes precedence; results never depend on this value.
# DEBUG: Enables debug logging for every subcommand.
THREADS: int = int(os.getenv("IUZAWA_THREADS", "1"))
DEBUG: bool = _get_bool("IUZAWA_DEBUG")

# --- File Paths ---
# Default locations used when a subcommand is given a bare file name.
DATA_DIR: str = os.getenv("IUZAWA_DATA_DIR", "./data")
CHECKPOINT_DIR: str = os.getenv("IUZAWA_CHECKPOINT_DIR", "./checkpoints")
REPORT_DIR: str = os.getenv("IUZAWA_REPORT_DIR", "./reports")

# --- Numerical Constants ---
# EPS_FLOOR: Floor of the relative-error denominator (ε_L).
# TAU: Proximal weight τ of the primal step, Q_A = N + τI.
# GAMMA: Coercivity shift γ of the learned dual preconditioner.
EPS_FLOOR: float = float(os.getenv("IUZAWA_EPS_FLOOR", "1e-8"))
TAU: float = float(os.getenv("IUZAWA_TAU", "1e-4"))
GAMMA: float = float(os.getenv("IUZAWA_GAMMA", "1e-6"))

# --- Data Generation ---
# GRF_AMPLITUDE: Common amplitude of the sampling laws for y_d, f and the
# bound perturbations. Sized so elliptic-iso datasets mix instances with
# active and with redundant control constraints.
GRF_AMPLITUDE: float = float(os.getenv("IUZAWA_GRF_AMPLITUDE", "200.0"))

# --- Reference Solver ---
# SSN_TOL / SSN_MAX_ITER: Stopping rule of the semismooth Newton reference
# solves stored in datasets.
# POWER_ITERS: Power iterations used to size admissible preconditioners.
SSN_TOL: float = float(os.getenv("IUZAWA_SSN_TOL", "1e-10"))
SSN_MAX_ITER: int = int(os.getenv("IUZAWA_SSN_MAX_ITER", "50"))
POWER_ITERS: int = int(os.getenv("IUZAWA_POWER_ITERS", "50"))
