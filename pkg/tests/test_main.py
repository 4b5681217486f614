"""
Tests for the command-line entry point and its exit codes.
"""
import pandas as pd
import pytest

from src.checkpoint import save_checkpoint
from src.dataset import read_dataset
from src.main import EXIT_NOT_CONVERGED, EXIT_OK, EXIT_USAGE, main
from src.net import NetConfig, init_net


@pytest.fixture
def data_file(tmp_path):
    path = str(tmp_path / "iso9.bin")
    assert main(["datagen", "--problem", "elliptic-iso", "--m", "9", "--n", "2",
                 "--seed", "3", "--out", path]) == EXIT_OK
    return path


def test_datagen_writes_dataset(data_file, capsys):
    dataset = read_dataset(data_file)
    assert len(dataset) == 2
    assert dataset.domain.shape == (9, 9)


def test_datagen_default_output_under_data_dir(tmp_path, monkeypatch):
    monkeypatch.setattr("src.config.DATA_DIR", str(tmp_path / "data"))
    assert main(["datagen", "--problem", "elliptic-aniso", "--m", "9", "--n", "1"]) == EXIT_OK
    assert (tmp_path / "data" / "elliptic-aniso-m9-n1-s0.bin").exists()


def test_datagen_rejects_tiny_grid(tmp_path):
    assert main(["datagen", "--problem", "elliptic-iso", "--m", "2", "--n", "1",
                 "--out", str(tmp_path / "x.bin")]) == EXIT_USAGE


def test_usage_errors_exit_with_one():
    with pytest.raises(SystemExit) as excinfo:
        main(["fly"])
    assert excinfo.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as excinfo:
        main(["solve", "--method", "admm", "--data", "x"])
    assert excinfo.value.code == EXIT_USAGE


def test_threads_must_be_positive(data_file):
    assert main(["--threads", "0", "solve", "--method", "ssn", "--data", data_file]) == EXIT_USAGE


class TestSolve:
    def test_ssn(self, data_file, capsys):
        assert main(["solve", "--method", "ssn", "--data", data_file, "--index", "1"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "method: ssn" in out
        assert "converged: True" in out

    def test_reference_stop(self, data_file, capsys):
        code = main(["solve", "--method", "uzawa", "--data", data_file, "--reference", "--rtol", "1e-3"])
        assert code == EXIT_OK
        assert "eps_rel:" in capsys.readouterr().out

    def test_index_out_of_range(self, data_file):
        assert main(["solve", "--method", "ssn", "--data", data_file, "--index", "5"]) == EXIT_USAGE

    def test_missing_file(self, tmp_path):
        assert main(["solve", "--method", "ssn", "--data", str(tmp_path / "none.bin")]) == EXIT_USAGE


def test_eval_writes_report(data_file, tmp_path):
    ckpt = str(tmp_path / "tiny.iuzc")
    save_checkpoint(init_net(NetConfig(layers=1, width=3, k_max=2, fourier_layers=1, pad_to=10,
                                       train_resolution=9, qa_width=6, qa_depth=3)), ckpt)
    report = tmp_path / "reports" / "eval.csv"
    assert main(["eval", "--ckpt", ckpt, "--data", data_file, "--report", str(report)]) == EXIT_OK
    table = pd.read_csv(report)
    assert table.loc[0, "n_records"] == 2
    assert table.loc[0, "m"] == 9

    resampled = tmp_path / "eval12.csv"
    assert main(["eval", "--ckpt", ckpt, "--data", data_file, "--resample", "12",
                 "--report", str(resampled)]) == EXIT_OK
    assert pd.read_csv(resampled).loc[0, "m"] == 12


def test_bench_report(data_file, tmp_path):
    report = tmp_path / "bench.csv"
    assert main(["bench", "--data", data_file, "--methods", "ssn,uzawa", "--rtol", "1e-3",
                 "--report", str(report)]) == EXIT_OK
    assert list(pd.read_csv(report)["method"]) == ["ssn", "uzawa"]


def test_bench_unknown_method(data_file):
    assert main(["bench", "--data", data_file, "--methods", "admm"]) == EXIT_USAGE


def test_train_needs_data():
    assert main(["train", "--set", "train.epochs=1"]) == EXIT_USAGE


def test_train_runs(data_file, tmp_path):
    ckpt = tmp_path / "model.iuzc"
    code = main(["--threads", "2", "train", "--set", f"data.train={data_file}",
                 "--set", "train.epochs=1", "--set", "train.batch_size=2",
                 "--set", "net.layers=1", "--set", "net.width=3", "--set", "net.k_max=2",
                 "--set", "net.fourier_layers=1", "--set", "net.pad_to=10",
                 "--set", "net.train_resolution=9", "--set", "net.qa_width=6",
                 "--set", f"output.checkpoint={ckpt}", "--set", "output.curve="])
    assert code == EXIT_OK
    assert ckpt.exists()


def test_non_finite_training_exits_three(data_file, tmp_path, monkeypatch):
    def blow_up(params):
        raise FloatingPointError("loss is nan")

    monkeypatch.setattr("src.main.train_from_parameters", blow_up)
    assert main(["train", "--set", f"data.train={data_file}"]) == EXIT_NOT_CONVERGED


@pytest.mark.slow
def test_verify_passes(tmp_path):
    report = tmp_path / "verify.csv"
    assert main(["verify", "--report", str(report)]) == EXIT_OK
    assert pd.read_csv(report)["passed"].all()
