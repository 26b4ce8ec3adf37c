"""End-to-end runs of every subcommand against small inputs."""

import json

import pytest

from cdalign import io
from cdalign.cli import main
from cdalign.experiment import config_from_dict


def write_tiny_config(path, **extra):
    body = {
        "protocol": "synthetic",
        "repeats": 1,
        "synthetic": {"d": 4, "n_known": 3, "n_private_unknown": 1,
                      "n_per_class": 10, "center_offset": 4.0, "sigma": 0.5,
                      "unknown_offset": 3.0, "labeled_known_per_domain": 2,
                      "shared_labeled": 1, "labeled_per_class": 3,
                      "labeled_unknown": 3},
        "solver": {"max_steps": 25},
        "pipeline": {"max_outer": 3},
    }
    body.update(extra)
    path.write_text(json.dumps(body))
    return path


class TestRun:
    def test_default_out_dir(self, tmp_path, capsys, monkeypatch):
        monkeypatch.chdir(tmp_path)
        config = write_tiny_config(tmp_path / "config.json")
        rc = main(["run", "--config", str(config)])
        assert rc == 0
        out = capsys.readouterr().out
        assert "aligned" in out and "no adaptation" in out
        assert (tmp_path / "cdalign_output" / "manifest.json").exists()

    def test_flag_overrides_win(self, tmp_path, capsys):
        config = write_tiny_config(tmp_path / "config.json", seed=1)
        out_dir = tmp_path / "out"
        rc = main(["run", "--config", str(config), "--seed", "9",
                   "--repeats", "2", "--out-dir", str(out_dir), "--quiet"])
        assert rc == 0
        assert capsys.readouterr().out == ""
        manifest = io.load_manifest(out_dir / "manifest.json")
        assert manifest["config"]["seed"] == 9
        assert manifest["config"]["repeats"] == 2
        assert len(manifest["repeats"]) == 2

    def test_missing_config_file(self, tmp_path, capsys):
        rc = main(["run", "--config", str(tmp_path / "nope.json")])
        assert rc == 1
        assert "error:" in capsys.readouterr().err

    def test_bad_config_key(self, tmp_path, capsys):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"protocol": "synthetic", "bogus": 1}))
        rc = main(["run", "--config", str(path), "--out-dir", str(tmp_path)])
        assert rc == 1
        assert "bogus" in capsys.readouterr().err


class TestSynth:
    def test_writes_features_and_truth(self, tmp_path, capsys):
        features = tmp_path / "features.csv"
        truth = tmp_path / "truth.csv"
        rc = main(["synth", "--config",
                   str(write_tiny_config(tmp_path / "config.json")),
                   "--out", str(features), "--truth", str(truth)])
        assert rc == 0
        a, b, _ = io.load_features_with_ids(features)
        assert a.features.shape[1] == 4
        ta, tb, _ = io.load_features_with_ids(truth)
        assert len(ta.unlabeled_indices) == 0
        assert len(tb.unlabeled_indices) == 0
        assert "wrote" in capsys.readouterr().out

    def test_seed_changes_output(self, tmp_path):
        config = write_tiny_config(tmp_path / "config.json")
        one, two = tmp_path / "one.csv", tmp_path / "two.csv"
        main(["synth", "--config", str(config), "--out", str(one)])
        main(["synth", "--config", str(config), "--out", str(two),
              "--seed", "3"])
        assert one.read_bytes() != two.read_bytes()


class TestEval:
    def run_pipeline(self, tmp_path):
        config = write_tiny_config(tmp_path / "config.json")
        truth = tmp_path / "truth.csv"
        features = tmp_path / "features.csv"
        main(["synth", "--config", str(config), "--out", str(features),
              "--truth", str(truth)])
        out_dir = tmp_path / "out"
        main(["run", "--config", str(config), "--out-dir", str(out_dir),
              "--quiet"])
        return out_dir / "results_r0.csv", truth, features

    def test_accuracy_line(self, tmp_path, capsys):
        results, truth, _ = self.run_pipeline(tmp_path)
        capsys.readouterr()
        rc = main(["eval", str(results), str(truth)])
        assert rc == 0
        out = capsys.readouterr().out
        assert out.startswith("accuracy ")
        assert "over" in out

    def test_unlabeled_truth_rejected(self, tmp_path, capsys):
        results, _, features = self.run_pipeline(tmp_path)
        rc = main(["eval", str(results), str(features)])
        assert rc == 1
        assert "unlabeled" in capsys.readouterr().err

    def test_results_header_checked(self, tmp_path, capsys):
        _, truth, features = self.run_pipeline(tmp_path)
        rc = main(["eval", str(features), str(truth)])
        assert rc == 1


class TestAblate:
    def test_variant_table(self, tmp_path, capsys):
        config = write_tiny_config(tmp_path / "config.json")
        out_dir = tmp_path / "ablate"
        rc = main(["ablate", "--config", str(config), "--out-dir",
                   str(out_dir)])
        assert rc == 0
        out = capsys.readouterr().out
        for name in ("full", "no_conditional", "no_marginal",
                     "no_aggregation", "no_separation"):
            assert name in out
        manifest = io.load_manifest(out_dir / "ablation_manifest.json")
        assert manifest["kind"] == "ablation"
        assert config_from_dict(manifest["config"]) is not None


class TestGradcheck:
    def test_pass_line(self, capsys):
        rc = main(["gradcheck"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "gradcheck PASS" in out
        for name in ("conditional", "marginal", "aggregation", "separation",
                     "regularization"):
            assert name in out

    def test_dimension_flag(self, capsys):
        rc = main(["gradcheck", "--d", "4", "--n", "20", "--seed", "2"])
        assert rc == 0
        assert "PASS" in capsys.readouterr().out

    def test_bad_dimension(self, capsys):
        rc = main(["gradcheck", "--d", "1"])
        assert rc == 1
        assert "error:" in capsys.readouterr().err


class TestParser:
    def test_subcommand_required(self):
        with pytest.raises(SystemExit) as info:
            main([])
        assert info.value.code == 2

    def test_unknown_subcommand(self):
        with pytest.raises(SystemExit) as info:
            main(["frobnicate"])
        assert info.value.code == 2
