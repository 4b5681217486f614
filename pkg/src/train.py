"""
Training loop and evaluation of the unrolled networks.

The batch gradient is the mean of per-sample gradients, each computed on
its own tape. Samples run on a thread pool but are reduced in sample-index
order, so results do not depend on the thread count. The shuffle order of
every epoch comes from one Philox stream seeded by `TrainConfig.seed`.
"""
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from . import autodiff as ad
from . import config
from .autodiff import Tape, Tensor
from .checkpoint import load_checkpoint, save_checkpoint
from .dataset import Dataset, DatasetRecord, read_dataset
from .field import Domain, GridField, resample
from .grf import RngState
from .net import NetParams, init_net, net_config_for, padded_grid, predict
from .optim import ParamStore, adamw_step, lr_schedule
from .run_parameters import RunParameterManager
from .utils_metrics import METRIC_COLUMNS, ErrorTracker

LOSSES = ("relative_l1", "squared_l2")
CURVE_COLUMNS = ["epoch", "lr", "train_loss", "holdout_eps_rel"]


@dataclass
class TrainConfig:
    epochs: int = 300
    batch_size: int = 64
    base_lr: float = 1e-3
    decay: float = 0.6
    every: int = 30
    weight_decay: float = 0.01
    eps_floor: float = config.EPS_FLOOR
    loss: str = "relative_l1"
    seed: int = 0
    checkpoint_every: int = 0
    checkpoint_path: Optional[str] = None
    curve_path: Optional[str] = None
    train_path: Optional[str] = None
    test_path: Optional[str] = None
    holdout_fraction: float = 0.125
    threads: int = config.THREADS

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.loss not in LOSSES:
            raise ValueError(f"Unknown loss {self.loss!r}, expected one of {LOSSES}")

    @classmethod
    def from_parameters(cls, params: RunParameterManager) -> "TrainConfig":
        train = params.section("train")
        return cls(
            epochs=train["epochs"],
            batch_size=train["batch_size"],
            base_lr=train["base_lr"],
            decay=train["decay"],
            every=train["every"],
            weight_decay=train["weight_decay"],
            eps_floor=train["eps_floor"],
            loss=train["loss"],
            seed=train["seed"],
            checkpoint_every=train["checkpoint_every"],
            checkpoint_path=params.get("output.checkpoint") or None,
            curve_path=params.get("output.curve") or None,
            train_path=params.get("data.train") or None,
            test_path=params.get("data.test") or None,
            holdout_fraction=train["holdout_fraction"],
            threads=params.get("runtime.threads"),
        )


def loss(pred: Tensor, target: GridField, eps_floor: Optional[float] = None,
         kind: str = "relative_l1") -> Tensor:
    """
    relative_l1:  Σ|pred - t| / max(Σ|t|, ε)
    squared_l2:   ‖pred - t‖² / max(‖t‖², ε) with trapezoid weights
    """
    floor = config.EPS_FLOOR if eps_floor is None else eps_floor
    t = target.values[None]
    diff = ad.sub(pred, pred.tape.constant(t))
    if kind == "relative_l1":
        return ad.scale(ad.sum(ad.abs(diff)), 1.0 / max(float(np.sum(np.abs(t))), floor))
    if kind == "squared_l2":
        w = target.domain.weights[None]
        num = ad.sum(ad.hadamard(ad.hadamard(diff, diff), pred.tape.constant(w)))
        return ad.scale(num, 1.0 / max(float(np.sum(w * t * t)), floor))
    raise ValueError(f"Unknown loss {kind!r}")


def _bounds(record: DatasetRecord) -> Tuple[GridField, GridField]:
    return record.u_a, record.u_b


def sample_gradient(net: NetParams, record: DatasetRecord, cfg: TrainConfig) -> Tuple[float, Dict[str, np.ndarray]]:
    tape = Tape()
    pred = predict(net, record.y_d, record.f, _bounds(record), tape)
    value = loss(pred, record.u_star, cfg.eps_floor, cfg.loss)
    return float(value.data), ad.backward(tape, value)


def batch_gradient(net: NetParams, records: List[DatasetRecord], cfg: TrainConfig,
                   pool: Optional[ThreadPoolExecutor] = None) -> Tuple[List[float], Dict[str, np.ndarray]]:
    """Per-sample losses and the mean gradient, reduced in sample order."""
    if pool is None:
        results = [sample_gradient(net, r, cfg) for r in records]
    else:
        results = list(pool.map(lambda r: sample_gradient(net, r, cfg), records))

    losses = [value for value, _ in results]
    total: Dict[str, np.ndarray] = {}
    for _, grads in results:
        for name, g in grads.items():
            total[name] = total[name] + g if name in total else g.copy()
    scale = 1.0 / len(records)
    return losses, {name: g * scale for name, g in total.items()}


def check_compatible(net: NetParams, domain: Domain) -> None:
    cfg = net.config
    if domain.ndims != cfg.ndim:
        raise ValueError(f"Network expects {cfg.ndim}-D data, dataset is {domain.ndims}-D")
    padded_grid(domain.shape, cfg.pad_to, cfg.train_resolution, cfg.k_max)


@dataclass
class TrainResult:
    net: NetParams
    curve: pd.DataFrame
    store: ParamStore


def _holdout_eps(net: NetParams, holdout: Optional[Dataset], cfg: TrainConfig,
                 pool: ThreadPoolExecutor) -> float:
    if holdout is None or len(holdout) == 0:
        return float("nan")
    return float(record_errors(net, holdout, pool=pool)[0].mean())


def train(cfg: TrainConfig, net: NetParams, dataset: Dataset,
          holdout: Optional[Dataset] = None) -> TrainResult:
    """
    Run AdamW on the mean per-sample loss.

    Raises FloatingPointError when a batch produces a non-finite loss.
    """
    if len(dataset) == 0:
        raise ValueError("Cannot train on an empty dataset")
    check_compatible(net, dataset.domain)

    store = ParamStore(net.named_tensors())
    rng = RngState(cfg.seed).generator()
    rows = []
    n = len(dataset)
    logging.info(f"🎯 Training {net.config.model} ({net.parameter_count()} parameters) "
                 f"on {n} records for {cfg.epochs} epochs")

    with ThreadPoolExecutor(max_workers=max(1, cfg.threads)) as pool:
        for epoch in range(cfg.epochs):
            lr = lr_schedule(epoch, cfg.base_lr, cfg.decay, cfg.every)
            order = rng.permutation(n)
            epoch_losses: List[float] = []
            for batch_index, start in enumerate(range(0, n, cfg.batch_size)):
                records = [dataset[int(i)] for i in order[start:start + cfg.batch_size]]
                losses, grads = batch_gradient(net, records, cfg, pool)
                if not all(math.isfinite(v) for v in losses) or not all(
                        np.all(np.isfinite(g)) for g in grads.values()):
                    logging.error(f"❌ Non-finite loss in epoch {epoch}, batch {batch_index}")
                    raise FloatingPointError(f"Non-finite loss in epoch {epoch}, batch {batch_index}")
                adamw_step(store, grads, lr, weight_decay=cfg.weight_decay)
                epoch_losses.extend(losses)

            train_loss = float(np.mean(epoch_losses))
            holdout_eps = _holdout_eps(net, holdout, cfg, pool)
            rows.append({"epoch": epoch, "lr": lr, "train_loss": train_loss,
                         "holdout_eps_rel": holdout_eps})
            logging.info("📊 epoch %d: lr %.2e, train loss %.4e, holdout ε_rel %.4e",
                         epoch, lr, train_loss, holdout_eps)

            if cfg.checkpoint_every and cfg.checkpoint_path and (epoch + 1) % cfg.checkpoint_every == 0:
                save_checkpoint(net, cfg.checkpoint_path, _metadata(cfg, dataset, epoch + 1))

    if cfg.checkpoint_path:
        save_checkpoint(net, cfg.checkpoint_path, _metadata(cfg, dataset, cfg.epochs))
    curve = pd.DataFrame(rows, columns=CURVE_COLUMNS)
    if cfg.curve_path:
        directory = os.path.dirname(cfg.curve_path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        curve.to_csv(cfg.curve_path, index=False)
        logging.info(f"💾 Wrote training curve to {cfg.curve_path}")
    return TrainResult(net, curve, store)


def _metadata(cfg: TrainConfig, dataset: Dataset, epochs: int) -> Dict:
    return {
        "experiment": dataset.kind,
        "resolution": list(dataset.domain.shape),
        "epochs_completed": epochs,
        "train_seed": cfg.seed,
        "loss": cfg.loss,
    }


def method_label(net: NetParams) -> str:
    if net.config.model == "fno":
        return "FNO"
    return "iUzawa-Net-S" if net.config.tying == "shared" else "iUzawa-Net-F"


def _target_domain(domain: Domain, resolution: Optional[int]) -> Domain:
    if resolution is None:
        return domain
    return domain.with_resolution((resolution,) * domain.ndims)


def record_errors(net: NetParams, dataset: Dataset, resample_to: Optional[int] = None,
                  pool: Optional[ThreadPoolExecutor] = None,
                  eps_floor: Optional[float] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Per-record (ε_rel, ε_abs). With `resample_to`, inputs and references are
    interpolated onto a grid of that many vertices per axis first.
    """
    target = _target_domain(dataset.domain, resample_to)
    check_compatible(net, target)

    def one(record: DatasetRecord) -> Tuple[float, float]:
        fields = [resample(getattr(record, name), target)
                  for name in ("y_d", "f", "u_a", "u_b", "u_star")]
        y_d, f, u_a, u_b, u_star = fields
        out = predict(net, y_d, f, (u_a, u_b))
        tracker = ErrorTracker(eps_floor)
        tracker.update(GridField(target, out.data[0]), u_star)
        return tracker.rel[0], tracker.abs[0]

    results = list(pool.map(one, dataset.records)) if pool else [one(r) for r in dataset.records]
    rel = np.array([r for r, _ in results], dtype=float)
    absolute = np.array([a for _, a in results], dtype=float)
    return rel, absolute


def evaluate(checkpoint: Union[str, NetParams], dataset: Dataset,
             resample_to: Optional[int] = None, threads: Optional[int] = None,
             method: Optional[str] = None) -> pd.DataFrame:
    """One-row metrics table: mean and population SD of ε_rel and ε_abs."""
    net = load_checkpoint(checkpoint) if isinstance(checkpoint, str) else checkpoint
    threads = config.THREADS if threads is None else threads
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        rel, absolute = record_errors(net, dataset, resample_to, pool)

    tracker = ErrorTracker()
    tracker.rel, tracker.abs = rel.tolist(), absolute.tolist()
    m = _target_domain(dataset.domain, resample_to).shape[-1]
    table = tracker.frame(method or method_label(net), m)
    logging.info("📊 %s at m=%d: ε_rel %.4e ± %.4e over %d records",
                 table.loc[0, "method"], m, table.loc[0, "eps_rel_mean"],
                 table.loc[0, "eps_rel_sd"], len(tracker))
    return table[METRIC_COLUMNS]


def train_from_parameters(params: RunParameterManager) -> TrainResult:
    """Build data, network and TrainConfig from resolved run parameters and train."""
    cfg = TrainConfig.from_parameters(params)
    if not cfg.train_path:
        raise ValueError("data.train is not set")
    dataset = read_dataset(cfg.train_path)
    experiment = params.get("data.problem")
    if dataset.kind != experiment:
        raise ValueError(f"{cfg.train_path} holds {dataset.kind} records, data.problem is {experiment}")

    if cfg.test_path:
        holdout = read_dataset(cfg.test_path)
    elif cfg.holdout_fraction > 0:
        dataset, holdout = dataset.split(cfg.holdout_fraction)
    else:
        holdout = None

    net_section = params.section("net")
    net_cfg = net_config_for(
        experiment,
        model=net_section["model"],
        tying=net_section["tying"],
        layers=net_section["layers"],
        width=net_section["width"],
        k_max=net_section["k_max"],
        fourier_layers=net_section["fourier_layers"],
        pad_to=net_section["pad_to"],
        train_resolution=net_section["train_resolution"],
        qa_width=net_section["qa_width"],
        qa_depth=net_section["qa_depth"],
        gamma=net_section["gamma"],
        tau=net_section["tau"],
        seed=net_section["seed"],
    )
    net = init_net(net_cfg)
    return train(cfg, net, dataset, holdout)
