"""
Per-Experiment Configuration - Single Source of Truth

This module holds the presets of the three benchmark problems so that data
generation, the classical solvers, the networks and the training loop all
read the same numbers:

- elliptic-iso:   -Δy = u + f with Dirichlet boundary, box constraints
- elliptic-aniso: -∇·(a∇y) + cy = u + f with Neumann boundary, box constraints
- parabolic:      ∂y/∂t - Δy = u + f, L1 plus box regularization
"""

from typing import Any, Dict

EXPERIMENTS = ("elliptic-iso", "elliptic-aniso", "parabolic")

# Kind codes stored in dataset file headers
KIND_CODES = {"elliptic-iso": 0, "elliptic-aniso": 1, "parabolic": 2}


class ExperimentConfig:
    """
    Presets of the benchmark problems.

    All lookups raise KeyError for unknown experiment ids or parameter
    names, so a misspelled key never falls back to a silent default.
    """

    _COMMON = {
        'alpha': 0.01,
        'width': 8,                # m_p, lifted channel count
        'k_max': 8,
        'qa_width': 64,
        'qa_depth': 4,
        'epochs': 300,
        'decay': 0.6,
        'every': 30,
        'weight_decay': 0.01,
        'fno_fourier_layers': 4,   # standalone FNO baseline
        'fno_k_max': 12,
        'fno_width': 16,
    }

    DEFAULTS: Dict[str, Dict[str, Any]] = {
        'elliptic-iso': dict(
            _COMMON,
            beta=0.0,
            regularizer='box',
            a1=1.0, a2=1.0, c=0.0,
            layers_free=6, layers_shared=10,
            fourier_layers=4,
            pad_to=72, train_resolution=64,
            base_lr=1e-3, batch_size=64,
            pd_step_primal=350.0, pd_step_dual=1.0,
            rtol=2e-3,
            constant_bound=None,
        ),
        'elliptic-aniso': dict(
            _COMMON,
            beta=0.0,
            regularizer='box',
            a1=1.0, a2=100.0, c=1.0,
            layers_free=6, layers_shared=10,
            fourier_layers=4,
            pad_to=72, train_resolution=64,
            base_lr=2e-3, batch_size=64,
            pd_step_primal=2.0, pd_step_dual=0.4,
            rtol=4e-3,
            constant_bound=None,
        ),
        'parabolic': dict(
            _COMMON,
            beta=0.01,
            regularizer='l1box',
            a1=1.0, a2=1.0, c=0.0,
            layers_free=5, layers_shared=5,
            fourier_layers=3,
            pad_to=36, train_resolution=32,
            base_lr=5e-4, batch_size=32,
            pd_step_primal=1.0, pd_step_dual=1.0,
            rtol=3e-3,
            constant_bound=6.0,    # u_a = -6, u_b = 6
        ),
    }

    @classmethod
    def _check_kind(cls, kind: str) -> None:
        if kind not in cls.DEFAULTS:
            raise KeyError(f"Unknown experiment: {kind}")

    @classmethod
    def get_preset(cls, kind: str) -> Dict[str, Any]:
        """Return a copy of every preset value of one experiment."""
        cls._check_kind(kind)
        return dict(cls.DEFAULTS[kind])

    @classmethod
    def get_default(cls, kind: str, param_name: str) -> Any:
        """
        Get the preset value of a parameter for one experiment.

        Raises:
            KeyError: If the experiment or the parameter is not recognized
        """
        cls._check_kind(kind)
        if param_name not in cls.DEFAULTS[kind]:
            raise KeyError(f"Unknown experiment parameter: {param_name}")
        return cls.DEFAULTS[kind][param_name]

