# Make src a proper Python package for relative imports and type checking.
# Run the command-line tool with `python -m src.main`.

__all__: list[str] = [
    "autodiff",
    "benchmark",
    "checkpoint",
    "classic",
    "config",
    "dataset",
    "experiment_config",
    "field",
    "grf",
    "net",
    "optim",
    "pde",
    "prox",
    "run_parameters",
    "spectral",
    "train",
    "utils_metrics",
    "verify",
]
__version__ = "0.1.0"
