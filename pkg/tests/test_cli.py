"""Subcommand behavior: flows, config resolution, help text, exit codes."""

import json

import numpy as np
import pytest

from noduleforge.cli import main
from tests.test_dataset import TEN_ROWS, write_manifest


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestPrepare:
    def test_fixture_yields_expected_pool(self, tmp_path, capsys):
        manifest = write_manifest(tmp_path, [(r[0], r[1], r[2]) for r in TEN_ROWS])
        code, out, err = run(capsys, "prepare", "--manifest", str(manifest),
                             "--out", str(tmp_path / "pool"))
        assert code == 0
        assert "kept: 6 (3 benign, 3 malignant); excluded: 4" in out
        exclusions = json.loads((tmp_path / "pool" / "exclusions.json").read_text())
        assert {e["nodule_id"] for e in exclusions} == {"n03", "n04", "n05", "n08"}
        pool = json.loads((tmp_path / "pool" / "pool.json").read_text())
        assert {row["nodule_id"] for row in pool} == {"n01", "n02", "n06",
                                                      "n07", "n09", "n10"}

    def test_resolved_config_printed_first(self, tmp_path, capsys):
        manifest = write_manifest(tmp_path, [(r[0], r[1], r[2]) for r in TEN_ROWS])
        code, out, err = run(capsys, "prepare", "--manifest", str(manifest),
                             "--out", str(tmp_path / "pool"), "--seed", "7")
        first = err.splitlines()[0]
        assert first.startswith("config: ")
        cfg = json.loads(first[len("config: "):])
        assert cfg["seed"] == 7 and cfg["cmd"] == "prepare"


@pytest.fixture
def pool_dir(tmp_path):
    from tests.conftest import random_patches

    patches = random_patches(50, "benign", 5) + random_patches(50, "malignant", 6)
    rows = [{"nodule_id": p.source_id, "label": p.label,
             "consensus_rating": 1.0 if p.label == "benign" else 5.0,
             "ratings": [1, 1, 1]} for p in patches]
    out = tmp_path / "pool"
    out.mkdir()
    (out / "pool.json").write_text(json.dumps(rows))
    (out / "exclusions.json").write_text("[]")
    np.save(out / "patches.npy", np.stack([p.pixels for p in patches]))
    return out


class TestTrain:
    def test_zero_iterations_initial_checkpoint_only(self, tmp_path, pool_dir,
                                                     capsys):
        out_dir = tmp_path / "run"
        code, out, _ = run(capsys, "train", "--pool", str(pool_dir),
                           "--class", "benign", "--iters", "0",
                           "--out", str(out_dir))
        assert code == 0
        ckpts = sorted(p.name for p in out_dir.glob("*.nfck"))
        assert ckpts == ["ckpt_0000000.nfck"]
        metrics = (out_dir / "metrics.csv").read_text().splitlines()
        assert len(metrics) == 1  # header only

    def test_help_documents_presets(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["train", "--help"])
        assert exc.value.code == 0
        out = capsys.readouterr().out
        assert "64" in out
        assert "1e-4" in out or "0.0001" in out
        assert "114000" in out or "114,000" in out
        assert "110000" in out
        assert "99000" in out

    def test_config_file_flags_win(self, tmp_path, pool_dir, capsys):
        cfg_file = tmp_path / "cfg.json"
        cfg_file.write_text(json.dumps({"iters": 0, "class_mode": "malignant",
                                        "seed": 42}))
        code, out, err = run(capsys, "train", "--pool", str(pool_dir),
                             "--out", str(tmp_path / "run"),
                             "--config", str(cfg_file), "--class", "benign")
        assert code == 0
        cfg = json.loads(err.splitlines()[0][len("config: "):])
        assert cfg["class_mode"] == "benign"  # flag beat the file
        assert cfg["iters"] == 0 and cfg["seed"] == 42  # file beat defaults


class TestScore:
    def test_before_any_sessions_is_an_error(self, tmp_path, capsys,
                                             small_real_pool, generated_pools):
        from noduleforge.service import StudyStore
        from noduleforge.study import compose_study

        plan, patches = compose_study(small_real_pool, generated_pools, seed=2)
        StudyStore.initialize(tmp_path / "study", "s1", plan, patches)
        code, out, err = run(capsys, "score", "--study", str(tmp_path / "study"))
        assert code == 1
        assert "no sessions" in err
        error_lines = [l for l in err.splitlines() if not l.startswith("config:")]
        assert error_lines[0].startswith("error: code=")


class TestGradcheck:
    def test_exit_zero_and_reports_all_layers(self, capsys):
        code, out, _ = run(capsys, "gradcheck")
        assert code == 0
        for name in ("conv2d", "conv2d_transpose", "batchnorm",
                     "fully_connected", "activation_tanh", "composed_d_of_g"):
            assert name in out
        assert "all passed" in out


class TestUsageErrors:
    def test_unknown_subcommand_exits_2(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2

    def test_missing_required_flag_exits_2(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["prepare", "--out", "x"])
        assert exc.value.code == 2

    def test_runtime_error_single_line(self, tmp_path, capsys):
        code, out, err = run(capsys, "prepare", "--manifest",
                             str(tmp_path / "absent.csv"),
                             "--out", str(tmp_path / "pool"))
        assert code == 1
        lines = [l for l in err.splitlines() if l and not l.startswith("config:")]
        assert len(lines) == 1
        assert lines[0].startswith("error: code=")


class TestDiffuseAndSample:
    def test_diffuse_roundtrip(self, tmp_path, capsys, rng):
        from noduleforge.imgproc import read_grayscale, write_grayscale

        src = tmp_path / "in.png"
        noisy = rng.integers(0, 256, size=(32, 32), dtype=np.uint8)
        write_grayscale(src, noisy)
        dst = tmp_path / "out.png"
        code, *_ = run(capsys, "diffuse", "--input", str(src), "--out", str(dst),
                       "--kappa", "20", "--lambda", "0.2",
                       "--diffusion-iters", "3")
        assert code == 0
        out = read_grayscale(dst).astype(float)
        assert out.std() < noisy.astype(float).std()

    def test_sample_writes_pngs_and_manifest(self, tmp_path, pool_dir, capsys):
        run_dir = tmp_path / "run"
        assert run(capsys, "train", "--pool", str(pool_dir), "--class", "benign",
                   "--iters", "0", "--out", str(run_dir))[0] == 0
        samp = tmp_path / "samples"
        code, out, _ = run(capsys, "sample", "--checkpoint",
                           str(run_dir / "ckpt_0000000.nfck"),
                           "--n", "5", "--seed", "3", "--out", str(samp))
        assert code == 0
        meta = json.loads((samp / "samples.json").read_text())
        assert len(meta["samples"]) == 5
        assert meta["class_mode"] == "benign"
        assert len(list(samp.glob("*.png"))) == 5
