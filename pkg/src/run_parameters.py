"""
Run Parameter Management

Single source of truth for every value a training or evaluation run reads.
Values come from four layers, later layers winning:

1. the declared default in `_PARAMETERS`
2. the experiment preset of `data.problem` (see experiment_config.py)
3. a plain-text `key = value` file
4. command-line `--set key=value` overrides

Keys are dotted (`train.batch_size`). Unknown keys and out-of-bounds values
are errors: a typo in a run file must never fall back to a default.
"""

import logging
import os
from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Optional, Tuple

from . import config
from .experiment_config import EXPERIMENTS, ExperimentConfig


@dataclass
class ParameterInfo:
    """Information about a run parameter."""
    default: Any
    bounds: Optional[Tuple[float, float]]
    description: str
    value_type: type
    choices: Optional[Tuple[str, ...]] = None


# Dotted key -> preset name in ExperimentConfig
_PRESET_KEYS = {
    'train.batch_size': 'batch_size',
    'train.epochs': 'epochs',
    'train.base_lr': 'base_lr',
    'train.decay': 'decay',
    'train.every': 'every',
    'train.weight_decay': 'weight_decay',
    'net.qa_width': 'qa_width',
    'net.qa_depth': 'qa_depth',
    'net.pad_to': 'pad_to',
    'net.train_resolution': 'train_resolution',
}

# Architecture keys whose preset depends on net.model
_MODEL_PRESET_KEYS = {
    'iuzawa': {'net.width': 'width', 'net.k_max': 'k_max',
               'net.fourier_layers': 'fourier_layers'},
    'fno': {'net.width': 'fno_width', 'net.k_max': 'fno_k_max',
            'net.fourier_layers': 'fno_fourier_layers'},
}


class RunParameterManager:
    """
    Layered run configuration with validation.

    Use `from_sources` to build a fully resolved manager; `get`/`set` behave
    like a checked dictionary afterwards.
    """

    _PARAMETERS: Dict[str, ParameterInfo] = {
        # Data
        'data.problem': ParameterInfo(
            'elliptic-iso', None, 'Experiment id', str, EXPERIMENTS),
        'data.train': ParameterInfo('', None, 'Training dataset file', str),
        'data.test': ParameterInfo('', None, 'Held-out dataset file (optional)', str),

        # Network architecture
        'net.model': ParameterInfo(
            'iuzawa', None, 'Model family', str, ('iuzawa', 'fno')),
        'net.tying': ParameterInfo(
            'shared', None, 'Weight tying across layers', str, ('free', 'shared')),
        'net.layers': ParameterInfo(6, (0, 64), 'Unrolled layers', int),
        'net.width': ParameterInfo(8, (1, 512), 'Lifted channel count m_p', int),
        'net.k_max': ParameterInfo(8, (1, 128), 'Retained Fourier modes per axis', int),
        'net.fourier_layers': ParameterInfo(4, (1, 16), 'Fourier layers per FNO block', int),
        'net.pad_to': ParameterInfo(72, (4, 4096), 'Padded resolution at training size', int),
        'net.train_resolution': ParameterInfo(64, (4, 4096), 'Training spatial resolution', int),
        'net.qa_width': ParameterInfo(64, (1, 4096), 'Hidden width of the resolvent net', int),
        'net.qa_depth': ParameterInfo(4, (2, 16), 'Layers of the resolvent net', int),
        'net.gamma': ParameterInfo(config.GAMMA, (1e-12, 1.0), 'Coercivity shift of Q_S', float),
        'net.tau': ParameterInfo(config.TAU, (0.0, 1.0), 'Proximal weight τ', float),
        'net.seed': ParameterInfo(0, (0, 2**63 - 1), 'Initialization seed', int),

        # Training
        'train.batch_size': ParameterInfo(64, (1, 65536), 'Batch size', int),
        'train.epochs': ParameterInfo(300, (0, 100000), 'Epochs', int),
        'train.base_lr': ParameterInfo(1e-3, (1e-8, 1.0), 'Initial learning rate', float),
        'train.decay': ParameterInfo(0.6, (1e-3, 1.0), 'Learning-rate decay factor', float),
        'train.every': ParameterInfo(30, (1, 100000), 'Epochs per decay', int),
        'train.weight_decay': ParameterInfo(0.01, (0.0, 1.0), 'AdamW weight decay', float),
        'train.eps_floor': ParameterInfo(config.EPS_FLOOR, (0.0, 1.0), 'Loss denominator floor', float),
        'train.loss': ParameterInfo(
            'relative_l1', None, 'Training loss', str, ('relative_l1', 'squared_l2')),
        'train.seed': ParameterInfo(0, (0, 2**63 - 1), 'Shuffle seed', int),
        'train.checkpoint_every': ParameterInfo(0, (0, 100000), 'Epochs between checkpoints, 0 = end only', int),
        'train.holdout_fraction': ParameterInfo(0.125, (0.0, 0.9), 'Held-out tail fraction without a test file', float),

        # Output
        'output.checkpoint': ParameterInfo(
            os.path.join(config.CHECKPOINT_DIR, 'model.iuzc'), None, 'Checkpoint path', str),
        'output.curve': ParameterInfo(
            os.path.join(config.REPORT_DIR, 'train_curve.csv'), None, 'Loss curve CSV path', str),

        # Runtime
        'runtime.threads': ParameterInfo(config.THREADS, (1, 1024), 'Worker threads', int),
    }

    def __init__(self):
        self._values: Dict[str, Any] = {
            name: info.default for name, info in self._PARAMETERS.items()
        }

    @classmethod
    def from_sources(cls, path: Optional[str] = None,
                     overrides: Iterable[str] = ()) -> "RunParameterManager":
        """
        Resolve defaults, preset, file and overrides in precedence order.

        Raises:
            KeyError: unknown key in the file or the overrides
            ValueError: malformed line, bad type or out-of-bounds value
        """
        file_entries = parse_parameter_file(path) if path else []
        override_entries = [
            (key, raw, f"--set {key}") for key, raw in
            (_split_assignment(item, "--set") for item in overrides)
        ]

        manager = cls()
        selectors = {}
        for key, raw, origin in file_entries + override_entries:
            if key in ('data.problem', 'net.tying', 'net.model'):
                selectors[key] = manager._coerce(key, raw, origin)
        manager.apply_preset(
            selectors.get('data.problem', manager.get('data.problem')),
            tying=selectors.get('net.tying', manager.get('net.tying')),
            model=selectors.get('net.model', manager.get('net.model')),
        )

        for key, raw, origin in file_entries + override_entries:
            manager._values[key] = manager._coerce(key, raw, origin)
            logging.debug(f"Loaded {key} = {manager._values[key]!r} from {origin}")
        return manager

    def apply_preset(self, kind: str, tying: str = 'shared', model: str = 'iuzawa') -> None:
        preset = ExperimentConfig.get_preset(kind)
        self._values['data.problem'] = kind
        for key, preset_name in _PRESET_KEYS.items():
            self._values[key] = preset[preset_name]
        for key, preset_name in _MODEL_PRESET_KEYS[model].items():
            self._values[key] = preset[preset_name]
        self._values['net.layers'] = preset['layers_free' if tying == 'free' else 'layers_shared']

    def get(self, param_name: str) -> Any:
        if param_name not in self._PARAMETERS:
            raise KeyError(f"Unknown run parameter: {param_name}")
        return self._values[param_name]

    def set(self, param_name: str, value: Any) -> None:
        self._values[param_name] = self._coerce(param_name, value, "set()")

    def section(self, prefix: str) -> Dict[str, Any]:
        """Values under `prefix.` with the prefix stripped."""
        head = prefix + '.'
        return {k[len(head):]: v for k, v in self._values.items() if k.startswith(head)}

    def _coerce(self, key: str, raw: Any, origin: str) -> Any:
        if key not in self._PARAMETERS:
            raise KeyError(f"Unknown configuration key '{key}' ({origin})")
        info = self._PARAMETERS[key]
        try:
            if info.value_type is int and isinstance(raw, str):
                value = int(raw.strip())
            else:
                value = info.value_type(raw.strip() if isinstance(raw, str) else raw)
        except (TypeError, ValueError):
            raise ValueError(
                f"Value {raw!r} for '{key}' is not a valid {info.value_type.__name__} ({origin})"
            ) from None

        if info.choices is not None and value not in info.choices:
            raise ValueError(f"'{key}' must be one of {info.choices}, got {value!r} ({origin})")
        if info.bounds is not None:
            min_val, max_val = info.bounds
            if not (min_val <= value <= max_val):
                raise ValueError(
                    f"'{key}' = {value} outside bounds {info.bounds} ({origin})"
                )
        return value


def _split_assignment(text: str, origin: str) -> Tuple[str, str]:
    if '=' not in text:
        raise ValueError(f"Expected key=value, got {text!r} ({origin})")
    key, raw = text.split('=', 1)
    key = key.strip()
    if not key:
        raise ValueError(f"Empty key in {text!r} ({origin})")
    return key, raw.strip()


def parse_parameter_file(path: str) -> List[Tuple[str, str, str]]:
    """
    Read `key = value` lines; `#` starts a comment, blank lines are skipped.

    Returns (key, raw value, origin) triples in file order. Unknown keys
    raise KeyError naming the key and line.
    """
    entries = []
    with open(path, 'r', encoding='utf-8') as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split('#', 1)[0].strip()
            if not text:
                continue
            origin = f"{path}:{lineno}"
            key, raw = _split_assignment(text, origin)
            if key not in RunParameterManager._PARAMETERS:
                raise KeyError(f"Unknown configuration key '{key}' at {origin}")
            entries.append((key, raw, origin))
    logging.info(f"📋 Read {len(entries)} run parameters from {path}")
    return entries


__all__ = [
    'ParameterInfo',
    'RunParameterManager',
    'parse_parameter_file',
]
