"""
Datasets of control problems with reference solutions.

A record is one instance (y_d, f, u_a, u_b) plus its optimal control u*
from the semismooth Newton solver. Files use a fixed little-endian layout:

    magic "IUZW" | u16 version | u8 kind | u8 ndims | u32 resolution per axis
    | u32 record count
    then per record: y_d, f, u_a, u_b, u_star as f64 arrays, one f64 residual

Generation is deterministic in (kind, n, m, seed): record i always draws
from the random stream (seed, i), whatever the thread count.
"""
import logging
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator, List, Optional, Tuple

import numpy as np
import pandas as pd

from . import config
from .classic import ProblemInstance, ProblemSpec, SaddleState, dual_from_control, kkt_residual, ssn_solve
from .experiment_config import KIND_CODES, ExperimentConfig
from .field import Domain, GridField
from .grf import MIXED, DIRICHLET, GrfLaw, RngState, sample_bounds, sample_grf
from .pde import PdeOperator, domain_for_experiment, kind_for_experiment
from .prox import BOX, L1BOX, RegularizerSpec

MAGIC = b"IUZW"
VERSION = 1
ACCEPT_RESIDUAL = 1e-8
FIELD_NAMES = ("y_d", "f", "u_a", "u_b", "u_star")
_KIND_NAMES = {code: name for name, code in KIND_CODES.items()}


@dataclass(frozen=True, eq=False)
class DatasetRecord:
    y_d: GridField
    f: GridField
    u_a: GridField
    u_b: GridField
    u_star: GridField
    residual: float


@dataclass
class Dataset:
    kind: str
    domain: Domain
    records: List[DatasetRecord]

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, index: int) -> DatasetRecord:
        if not -len(self.records) <= index < len(self.records):
            raise IndexError(f"Record index {index} out of range for {len(self.records)} records")
        return self.records[index]

    def __iter__(self) -> Iterator[DatasetRecord]:
        return iter(self.records)

    def split(self, holdout_fraction: float) -> Tuple["Dataset", "Dataset"]:
        """Split off the last `holdout_fraction` of the records."""
        n_hold = int(round(len(self.records) * holdout_fraction))
        n_train = len(self.records) - n_hold
        return (Dataset(self.kind, self.domain, self.records[:n_train]),
                Dataset(self.kind, self.domain, self.records[n_train:]))


def data_laws(kind: str, amplitude: float) -> Tuple[GrfLaw, GrfLaw]:
    """Sampling laws of (y_d, f) for one experiment."""
    y_bc = DIRICHLET if kind == 'elliptic-iso' else MIXED
    return GrfLaw(y_bc, 1.5, amplitude=amplitude), GrfLaw(MIXED, 1.5, amplitude=amplitude)


def build_regularizer(kind: str, u_a: GridField, u_b: GridField) -> RegularizerSpec:
    if ExperimentConfig.get_default(kind, 'regularizer') == L1BOX:
        return RegularizerSpec.l1box(u_a, u_b, ExperimentConfig.get_default(kind, 'beta'))
    return RegularizerSpec(BOX, 0.0, u_a, u_b)


def build_spec(kind: str, operator: PdeOperator, u_a: GridField, u_b: GridField,
               tau: Optional[float] = None) -> ProblemSpec:
    return ProblemSpec(
        operator,
        build_regularizer(kind, u_a, u_b),
        ExperimentConfig.get_default(kind, 'alpha'),
        config.TAU if tau is None else tau,
    )


def record_instance(kind: str, operator: PdeOperator, record: DatasetRecord,
                    tau: Optional[float] = None) -> ProblemInstance:
    spec = build_spec(kind, operator, record.u_a, record.u_b, tau)
    return ProblemInstance(spec, record.y_d, record.f)


def record_kkt(kind: str, operator: PdeOperator, record: DatasetRecord) -> float:
    """Re-verify a stored reference control."""
    instance = record_instance(kind, operator, record)
    p = GridField(operator.domain, dual_from_control(instance, record.u_star.values))
    return kkt_residual(instance, SaddleState(record.u_star, p))


def random_instance(kind: str, operator: PdeOperator, rng: np.random.Generator,
                    amplitude: Optional[float] = None) -> ProblemInstance:
    """Draw (y_d, f, u_a, u_b) from the sampling laws of one experiment."""
    amplitude = config.GRF_AMPLITUDE if amplitude is None else amplitude
    domain = operator.domain
    y_law, f_law = data_laws(kind, amplitude)
    y_d = sample_grf(y_law, domain, rng)
    f = sample_grf(f_law, domain, rng)

    bound = ExperimentConfig.get_default(kind, 'constant_bound')
    if bound is None:
        u_a, u_b = sample_bounds(domain, rng)
    else:
        u_a, u_b = GridField.constant(domain, -bound), GridField.constant(domain, bound)

    return ProblemInstance(build_spec(kind, operator, u_a, u_b), y_d, f)


def _sample_record(kind: str, operator: PdeOperator, rng_state: RngState,
                   amplitude: float) -> Optional[DatasetRecord]:
    domain = operator.domain
    instance = random_instance(kind, operator, rng_state.generator(), amplitude)
    u_a, u_b = instance.spec.regularizer.lower, instance.spec.regularizer.upper
    state, report = ssn_solve(instance)
    u_star = GridField(domain, np.clip(state.u.values, u_a.values, u_b.values))
    p = GridField(domain, dual_from_control(instance, u_star.values))
    residual = kkt_residual(instance, SaddleState(u_star, p))
    if residual > ACCEPT_RESIDUAL:
        logging.warning(
            "⚠️ Skipping record stream %s: reference residual %.3e after %d SSN steps",
            rng_state.stream, residual, report.iterations,
        )
        return None
    return DatasetRecord(instance.y_d, instance.f, u_a, u_b, u_star, residual)


def gen_dataset(kind: str, n: int, m: int, seed: int,
                out_path: Optional[str] = None, m_t: Optional[int] = None,
                threads: Optional[int] = None,
                amplitude: Optional[float] = None) -> Dataset:
    """
    Generate n records and optionally write them to `out_path`.

    Records whose reference solve does not reach the acceptance residual are
    skipped and replaced by draws from later streams.
    """
    if kind not in KIND_CODES:
        raise KeyError(f"Unknown experiment: {kind}")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    threads = config.THREADS if threads is None else threads
    amplitude = config.GRF_AMPLITUDE if amplitude is None else amplitude

    domain = domain_for_experiment(kind, m, m_t)
    operator = PdeOperator(kind_for_experiment(kind), domain)
    root = RngState(seed)

    records: List[DatasetRecord] = []
    next_stream = 0
    max_streams = 2 * n + 16
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        while len(records) < n and next_stream < max_streams:
            wanted = n - len(records)
            streams = range(next_stream, next_stream + wanted)
            next_stream += wanted
            results = pool.map(
                lambda i: _sample_record(kind, operator, root.spawn(i), amplitude), streams
            )
            records.extend(r for r in results if r is not None)

    if len(records) < n:
        logging.error(f"❌ Only {len(records)} of {n} records reached the reference tolerance")
    dataset = Dataset(kind, domain, records)
    logging.info(f"✅ Generated {len(records)} {kind} records at resolution {domain.shape}")
    if out_path:
        write_dataset(dataset, out_path)
    return dataset


def write_dataset(dataset: Dataset, path: str) -> None:
    header = MAGIC + struct.pack('<HBB', VERSION, KIND_CODES[dataset.kind], dataset.domain.ndims)
    header += struct.pack(f'<{dataset.domain.ndims}I', *dataset.domain.shape)
    header += struct.pack('<I', len(dataset.records))
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    try:
        with open(path, 'wb') as fh:
            fh.write(header)
            for record in dataset.records:
                for name in FIELD_NAMES:
                    fh.write(np.ascontiguousarray(getattr(record, name).values, dtype='<f8').tobytes())
                fh.write(struct.pack('<d', record.residual))
        logging.info(f"💾 Wrote {len(dataset.records)} records to {path}")
    except OSError as e:
        logging.error(f"❌ Failed to write dataset {path}: {e}")
        raise


def _domain_from_header(kind: str, shape: Tuple[int, ...]) -> Domain:
    if kind == 'parabolic':
        if len(shape) != 3:
            raise ValueError(f"Parabolic datasets need 3 axes, header has {len(shape)}")
        return Domain.space_time(shape[1], shape[0])
    if len(shape) != 2:
        raise ValueError(f"Elliptic datasets need 2 axes, header has {len(shape)}")
    return Domain(shape, (1.0, 1.0))


def read_dataset(path: str) -> Dataset:
    """Read a dataset file; format errors raise ValueError."""
    try:
        with open(path, 'rb') as fh:
            blob = fh.read()
    except OSError as e:
        logging.error(f"❌ Could not read dataset {path}: {e}")
        raise

    if blob[:4] != MAGIC:
        raise ValueError(f"{path} is not a dataset file (bad magic {blob[:4]!r})")
    try:
        version, code, ndims = struct.unpack_from('<HBB', blob, 4)
        if version != VERSION:
            raise ValueError(f"Unsupported dataset version {version}")
        if code not in _KIND_NAMES:
            raise ValueError(f"Unknown experiment code {code}")
        offset = 8
        shape = struct.unpack_from(f'<{ndims}I', blob, offset)
        offset += 4 * ndims
        (count,) = struct.unpack_from('<I', blob, offset)
        offset += 4
    except struct.error as e:
        raise ValueError(f"Truncated dataset header in {path}: {e}") from e

    kind = _KIND_NAMES[code]
    domain = _domain_from_header(kind, tuple(shape))
    size = domain.size
    record_bytes = 8 * (len(FIELD_NAMES) * size + 1)
    if len(blob) != offset + count * record_bytes:
        raise ValueError(
            f"{path} has {len(blob)} bytes, expected {offset + count * record_bytes} for {count} records"
        )

    records = []
    for _ in range(count):
        fields = {}
        for name in FIELD_NAMES:
            values = np.frombuffer(blob, dtype='<f8', count=size, offset=offset)
            fields[name] = GridField(domain, values.reshape(domain.shape))
            offset += 8 * size
        (residual,) = struct.unpack_from('<d', blob, offset)
        offset += 8
        records.append(DatasetRecord(residual=residual, **fields))
    logging.info(f"📂 Loaded {count} {kind} records from {path}")
    return Dataset(kind, domain, records)


@dataclass
class ActiveSetStatistics:
    """Counts of instances whose optimal control touches its bounds."""
    records: int
    active_records: int
    active_fraction: float
    mean_active_ratio: float

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([{
            'records': self.records,
            'active_records': self.active_records,
            'active_fraction': self.active_fraction,
            'mean_active_ratio': self.mean_active_ratio,
        }])


def active_set_statistics(dataset: Dataset, tol: float = 1e-8) -> ActiveSetStatistics:
    """
    A record is active when u* reaches u_a or u_b somewhere (within tol);
    its active ratio is the measure of those points over the measure of the
    domain.
    """
    weights = dataset.domain.weights
    total = float(np.sum(weights))
    ratios = []
    for record in dataset.records:
        u = record.u_star.values
        active = (np.abs(u - record.u_a.values) <= tol) | (np.abs(u - record.u_b.values) <= tol)
        if np.any(active):
            ratios.append(float(np.sum(weights[active])) / total)

    n = len(dataset.records)
    return ActiveSetStatistics(
        records=n,
        active_records=len(ratios),
        active_fraction=len(ratios) / n if n else 0.0,
        mean_active_ratio=float(np.mean(ratios)) if ratios else 0.0,
    )
