"""
Tests for layered run parameters: defaults, presets, files and overrides.
"""
import pytest

from src.run_parameters import RunParameterManager, parse_parameter_file


def _write(tmp_path, text):
    path = tmp_path / "run.cfg"
    path.write_text(text, encoding="utf-8")
    return str(path)


class TestResolution:
    def test_defaults_follow_iso_preset(self):
        params = RunParameterManager.from_sources()
        assert params.get("data.problem") == "elliptic-iso"
        assert params.get("train.batch_size") == 64
        assert params.get("net.layers") == 10
        assert params.get("net.width") == 8

    def test_problem_selects_preset(self):
        params = RunParameterManager.from_sources(overrides=["data.problem=parabolic"])
        assert params.get("train.batch_size") == 32
        assert params.get("net.pad_to") == 36
        assert params.get("net.layers") == 5

    def test_tying_selects_layer_count(self):
        params = RunParameterManager.from_sources(overrides=["net.tying=free"])
        assert params.get("net.layers") == 6

    def test_model_selects_architecture_preset(self):
        params = RunParameterManager.from_sources(overrides=["net.model=fno"])
        assert (params.get("net.width"), params.get("net.k_max"), params.get("net.fourier_layers")) == (16, 12, 4)

    def test_override_beats_file_beats_preset(self, tmp_path):
        path = _write(tmp_path, "data.problem = elliptic-aniso\n"
                                "train.batch_size = 16  # small\n"
                                "train.epochs = 5\n")
        params = RunParameterManager.from_sources(path, ["train.epochs=7"])
        assert params.get("train.base_lr") == pytest.approx(2e-3)
        assert params.get("train.batch_size") == 16
        assert params.get("train.epochs") == 7

    def test_explicit_layers_survive_preset(self, tmp_path):
        path = _write(tmp_path, "net.layers = 3\nnet.tying = free\n")
        assert RunParameterManager.from_sources(path).get("net.layers") == 3

    def test_section(self):
        section = RunParameterManager.from_sources().section("train")
        assert section["loss"] == "relative_l1"
        assert "batch_size" in section
        assert not any("." in key for key in section)


class TestErrors:
    def test_unknown_key_in_file(self, tmp_path):
        path = _write(tmp_path, "train.batchsize = 4\n")
        with pytest.raises(KeyError):
            RunParameterManager.from_sources(path)

    def test_unknown_override(self):
        with pytest.raises(KeyError):
            RunParameterManager.from_sources(overrides=["net.depth=3"])

    def test_malformed_line(self, tmp_path):
        path = _write(tmp_path, "train.epochs 5\n")
        with pytest.raises(ValueError):
            parse_parameter_file(path)

    def test_out_of_bounds(self):
        with pytest.raises(ValueError):
            RunParameterManager.from_sources(overrides=["train.batch_size=0"])

    def test_bad_type(self):
        with pytest.raises(ValueError):
            RunParameterManager.from_sources(overrides=["train.epochs=1.5"])

    def test_bad_choice(self):
        with pytest.raises(ValueError):
            RunParameterManager.from_sources(overrides=["train.loss=huber"])

    def test_unknown_problem(self):
        with pytest.raises(ValueError):
            RunParameterManager.from_sources(overrides=["data.problem=wave"])

    def test_get_unknown(self):
        with pytest.raises(KeyError):
            RunParameterManager().get("nope")


def test_parse_skips_comments_and_blanks(tmp_path):
    path = _write(tmp_path, "# header\n\ntrain.seed = 3\n   # indented comment\n")
    entries = parse_parameter_file(path)
    assert [(key, raw) for key, raw, _ in entries] == [("train.seed", "3")]
    assert entries[0][2].endswith(":3")


def test_set_validates():
    params = RunParameterManager()
    params.set("net.qa_depth", "3")
    assert params.get("net.qa_depth") == 3
    with pytest.raises(ValueError):
        params.set("net.qa_depth", 1)
