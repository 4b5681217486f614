"""
Tests for checkpoint serialization.
"""
import numpy as np
import pytest

from src.checkpoint import (
    MAGIC,
    checkpoint_bytes,
    checkpoint_metadata,
    load_checkpoint,
    parse_checkpoint,
    save_checkpoint,
)
from src.net import NetConfig, init_net


@pytest.fixture
def net():
    return init_net(NetConfig(layers=2, width=3, k_max=2, fourier_layers=1, pad_to=10,
                              train_resolution=8, qa_width=6, qa_depth=3, tying="free", seed=4))


def test_round_trip_is_bitwise(net, tmp_path):
    path = str(tmp_path / "ckpt" / "model.iuzc")
    save_checkpoint(net, path, {"epochs_completed": 3})
    loaded = load_checkpoint(path)
    assert loaded.config == net.config
    original = net.named_tensors()
    restored = loaded.named_tensors()
    assert list(original) == list(restored)
    for name in original:
        assert original[name].tobytes() == restored[name].tobytes()


def test_same_parameters_same_bytes(net):
    assert checkpoint_bytes(net, {"a": 1}) == checkpoint_bytes(net, {"a": 1})


def test_metadata(net, tmp_path):
    path = str(tmp_path / "model.iuzc")
    save_checkpoint(net, path, {"experiment": "elliptic-iso"})
    metadata = checkpoint_metadata(path)
    assert metadata["experiment"] == "elliptic-iso"
    assert metadata["format"] == "IUZC"
    assert metadata["version"] == 1


def test_shared_net_stores_one_set(tmp_path):
    shared = init_net(NetConfig(layers=4, width=3, k_max=2, fourier_layers=1, pad_to=10,
                                train_resolution=8, qa_width=6))
    _, tensors = parse_checkpoint(checkpoint_bytes(shared))
    assert all(name.startswith("shared.") for name in tensors)


def test_fno_baseline_round_trip(tmp_path):
    fno = init_net(NetConfig(model="fno", width=3, k_max=2, fourier_layers=2, pad_to=10,
                             train_resolution=8))
    path = str(tmp_path / "fno.iuzc")
    save_checkpoint(fno, path)
    loaded = load_checkpoint(path)
    assert loaded.baseline is not None
    np.testing.assert_array_equal(loaded.named_tensors()["fno.lift"], fno.named_tensors()["fno.lift"])


class TestCorruption:
    def test_bad_magic(self, net):
        blob = bytearray(checkpoint_bytes(net))
        blob[:4] = b"XXXX"
        with pytest.raises(ValueError):
            parse_checkpoint(bytes(blob))

    def test_truncated(self, net):
        blob = checkpoint_bytes(net)
        with pytest.raises(ValueError):
            parse_checkpoint(blob[:-16])

    def test_trailing_bytes(self, net):
        with pytest.raises(ValueError):
            parse_checkpoint(checkpoint_bytes(net) + b"\x00")

    def test_bad_version(self, net):
        blob = bytearray(checkpoint_bytes(net))
        blob[4:6] = (9).to_bytes(2, "little")
        with pytest.raises(ValueError):
            parse_checkpoint(bytes(blob))

    def test_mangled_config(self, net):
        blob = bytearray(checkpoint_bytes(net))
        blob[10] = 0xFF
        with pytest.raises(ValueError):
            parse_checkpoint(bytes(blob))

    def test_starts_with_magic(self, net):
        assert checkpoint_bytes(net)[:4] == MAGIC

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            load_checkpoint(str(tmp_path / "absent.iuzc"))
