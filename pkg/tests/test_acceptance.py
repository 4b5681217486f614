"""
Full-size acceptance checks. Run with IUZAWA_RUN_SLOW=1.
"""
import numpy as np
import pytest

from src.checkpoint import checkpoint_bytes
from src.dataset import active_set_statistics, gen_dataset
from src.net import NetConfig, init_net
from src.train import TrainConfig, evaluate, train
from src.verify import check_pde_adjoint, check_prox, check_qs_structure, check_solvers, check_tracking

pytestmark = pytest.mark.slow


def test_solvers_agree_and_uzawa_contracts():
    ok, detail = check_solvers(seed=0, count=10, m=33)
    assert ok, detail


def test_prox_and_firm_nonexpansiveness():
    ok, detail = check_prox(seed=0)
    assert ok, detail


def test_qs_structure_over_many_draws():
    ok, detail = check_qs_structure(seed=0, draws=50, pairs=20)
    assert ok, detail


def test_adjoint_identities():
    ok, detail = check_pde_adjoint(seed=0)
    assert ok, detail


def test_tracking_over_six_layers():
    ok, detail = check_tracking(seed=0, count=5)
    assert ok, detail


def test_active_set_band():
    stats = active_set_statistics(gen_dataset("elliptic-iso", n=200, m=32, seed=0))
    assert 0.5 <= stats.active_fraction <= 0.95
    assert 0.05 <= stats.mean_active_ratio <= 0.5


def test_datagen_is_bitwise_reproducible(tmp_path):
    paths = []
    for run, threads in enumerate((1, 4, 4)):
        path = tmp_path / f"run{run}.bin"
        gen_dataset("parabolic", n=3, m=16, m_t=16, seed=9, out_path=str(path), threads=threads)
        paths.append(path)
    blobs = [p.read_bytes() for p in paths]
    assert blobs[0] == blobs[1] == blobs[2]


def test_training_is_bitwise_reproducible():
    dataset = gen_dataset("elliptic-iso", n=8, m=16, seed=2)
    cfg = NetConfig(layers=2, width=4, k_max=3, fourier_layers=2, pad_to=18, train_resolution=16)
    blobs = []
    for threads in (1, 4):
        result = train(TrainConfig(epochs=2, batch_size=4, threads=threads), init_net(cfg), dataset)
        blobs.append(checkpoint_bytes(result.net))
        assert np.all(np.isfinite(result.curve["train_loss"]))
    assert blobs[0] == blobs[1]


@pytest.fixture(scope="module")
def trained_iso():
    cfg = NetConfig(layers=3, width=4, k_max=3, fourier_layers=2, pad_to=18, train_resolution=16,
                    qa_width=16, seed=1)
    dataset = gen_dataset("elliptic-iso", n=40, m=16, seed=5)
    holdout = gen_dataset("elliptic-iso", n=8, m=16, seed=6)
    untrained = evaluate(init_net(cfg), holdout, threads=2)
    result = train(TrainConfig(epochs=20, batch_size=8, base_lr=2e-3, every=10, threads=2),
                   init_net(cfg), dataset, holdout)
    return result, untrained, holdout


def test_training_beats_initialization(trained_iso):
    result, untrained, holdout = trained_iso
    assert np.all(np.isfinite(result.curve["train_loss"]))
    assert np.all(np.isfinite(result.curve["holdout_eps_rel"]))
    trained = evaluate(result.net, holdout, threads=2)
    assert trained.loc[0, "eps_rel_mean"] < untrained.loc[0, "eps_rel_mean"]


def test_super_resolution_stays_close(trained_iso):
    result, _, holdout = trained_iso
    base = evaluate(result.net, holdout, threads=2).loc[0, "eps_rel_mean"]
    fine = evaluate(result.net, gen_dataset("elliptic-iso", n=8, m=31, seed=6), threads=2)
    assert fine.loc[0, "m"] == 31
    assert fine.loc[0, "eps_rel_mean"] <= 3.0 * base
