import json

import numpy as np
import pytest

from relight.cli import main
from relight.config import RunConfig
from relight.errors import ConfigError
from relight.imaging import save_image


@pytest.fixture
def dark_dir(tmp_path, rng):
    root = tmp_path / "dark"
    root.mkdir()
    for i in range(2):
        save_image(rng.uniform(0.02, 0.25, (16, 16, 3)), root / f"d{i}.png")
    return root


def write_config(tmp_path, dark_dir, **training) -> str:
    base_training = dict(iterations=3, seed=4, rec_sample_steps=2, eps_draws=2, checkpoint_every=2)
    base_training.update(training)
    training_lines = "\n".join(
        f"{k} = {str(v).lower() if isinstance(v, bool) else v}" for k, v in base_training.items()
    )
    cfg = f"""
[dataset]
root = "{dark_dir}"
glob = "*.png"
patch_size = 16
batch_size = 2

[training]
{training_lines}

[schedule]
timesteps = 8
sample_steps = 4

[model]
illum_width = 8
unet_width = 16
"""
    path = tmp_path / "run.toml"
    path.write_text(cfg)
    return str(path)


class TestRunConfig:
    def test_defaults_complete(self):
        run = RunConfig.load()
        assert run.get("training", "iterations") == 500
        assert run.get("schedule", "timesteps") == 200
        assert run.get("losses", "omega") == 0.1
        assert run.get("guidance", "upsilon") == 0.9

    def test_unknown_section_rejected(self, tmp_path):
        p = tmp_path / "bad.toml"
        p.write_text("[nonsense]\nx = 1\n")
        with pytest.raises(ConfigError, match="nonsense"):
            RunConfig.load(p)

    def test_unknown_key_rejected(self, tmp_path):
        p = tmp_path / "bad.toml"
        p.write_text("[training]\nbogus_key = 1\n")
        with pytest.raises(ConfigError, match="bogus_key"):
            RunConfig.load(p)

    def test_type_checked(self, tmp_path):
        p = tmp_path / "bad.toml"
        p.write_text('[training]\niterations = "many"\n')
        with pytest.raises(ConfigError, match="iterations"):
            RunConfig.load(p)

    def test_override_dotted_and_bare(self):
        run = RunConfig.load(overrides=[("training.iterations", "9"), ("upsilon", "0.5")])
        assert run.get("training", "iterations") == 9
        assert run.get("guidance", "upsilon") == 0.5

    def test_override_ambiguous_or_unknown(self):
        with pytest.raises(ConfigError, match="unknown config key"):
            RunConfig.load(overrides=[("nope", "1")])

    def test_missing_dataset_root_named_in_error(self):
        run = RunConfig.load()
        with pytest.raises(ConfigError, match="dataset.root"):
            run.to_train_config()

    def test_snapshot_roundtrip(self, tmp_path, dark_dir):
        cfg_path = write_config(tmp_path, dark_dir)
        run = RunConfig.load(cfg_path, overrides=[("iterations", "5")])
        snap = tmp_path / "snapshot.toml"
        run.save_snapshot(snap)
        again = RunConfig.load(snap)
        assert again.values == run.values


class TestCliTrain:
    def test_train_writes_artifacts(self, tmp_path, dark_dir):
        cfg = write_config(tmp_path, dark_dir)
        out = tmp_path / "out"
        assert main(["train", "--config", cfg, "--output", str(out)]) == 0
        assert (out / "checkpoint.ckpt").exists()
        assert (out / "config_resolved.toml").exists()
        lines = (out / "loss_log.csv").read_text().strip().splitlines()
        assert len(lines) == 1 + 3

    def test_iterations_override(self, tmp_path, dark_dir):
        cfg = write_config(tmp_path, dark_dir)
        out = tmp_path / "out"
        assert main(["train", "--config", cfg, "--output", str(out), "--iterations", "2"]) == 0
        lines = (out / "loss_log.csv").read_text().strip().splitlines()
        assert len(lines) == 1 + 2

    def test_rerun_same_seed_identical_csv(self, tmp_path, dark_dir):
        cfg = write_config(tmp_path, dark_dir)
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        assert main(["train", "--config", cfg, "--output", str(out1)]) == 0
        assert main(["train", "--config", cfg, "--output", str(out2)]) == 0
        assert (out1 / "loss_log.csv").read_bytes() == (out2 / "loss_log.csv").read_bytes()

    def test_missing_dataset_root_exits_2(self, tmp_path, capsys):
        p = tmp_path / "no_root.toml"
        p.write_text("[training]\niterations = 2\n")
        assert main(["train", "--config", p.as_posix()]) == 2
        assert "dataset.root" in capsys.readouterr().err

    def test_bad_config_file_exits_2(self, tmp_path):
        assert main(["train", "--config", str(tmp_path / "missing.toml")]) == 2

    def test_env_var_default_config(self, tmp_path, dark_dir, monkeypatch):
        cfg = write_config(tmp_path, dark_dir, iterations=2)
        monkeypatch.setenv("RELIGHT_CONFIG", cfg)
        out = tmp_path / "env_out"
        assert main(["train", "--output", str(out)]) == 0
        assert (out / "checkpoint.ckpt").exists()


class TestCliEnhance:
    @pytest.fixture
    def checkpoint(self, tmp_path, dark_dir):
        cfg = write_config(tmp_path, dark_dir)
        out = tmp_path / "train_out"
        assert main(["train", "--config", cfg, "--output", str(out)]) == 0
        return out / "checkpoint.ckpt"

    def test_directory_of_images(self, checkpoint, tmp_path, rng):
        inputs = tmp_path / "in"
        inputs.mkdir()
        for i in range(3):
            save_image(rng.uniform(0.0, 0.3, (16, 16, 3)), inputs / f"x{i}.png")
        out = tmp_path / "enh"
        assert main([
            "enhance", "--checkpoint", str(checkpoint), "--input", str(inputs),
            "--output", str(out), "--seed", "3",
        ]) == 0
        assert sorted(p.name for p in out.glob("*.png")) == ["x0.png", "x1.png", "x2.png"]

    def test_seeded_outputs_byte_identical(self, checkpoint, tmp_path, rng):
        inputs = tmp_path / "in"
        inputs.mkdir()
        save_image(rng.uniform(0.0, 0.3, (16, 16, 3)), inputs / "a.png")
        outs = []
        for name in ("e1", "e2"):
            out = tmp_path / name
            assert main([
                "enhance", "--checkpoint", str(checkpoint), "--input", str(inputs),
                "--output", str(out), "--seed", "3",
            ]) == 0
            outs.append((out / "a.png").read_bytes())
        assert outs[0] == outs[1]

    def test_save_illumination(self, checkpoint, tmp_path, rng):
        inputs = tmp_path / "in"
        inputs.mkdir()
        save_image(rng.uniform(0.0, 0.3, (16, 16, 3)), inputs / "a.png")
        out = tmp_path / "enh"
        assert main([
            "enhance", "--checkpoint", str(checkpoint), "--input", str(inputs),
            "--output", str(out), "--save-illumination",
        ]) == 0
        assert (out / "illumination" / "a.png").exists()
        # the output dir itself must stay evaluable: enhanced images only
        assert sorted(p.name for p in out.glob("*.png")) == ["a.png"]

    def test_jobs_parallel_matches_serial(self, checkpoint, tmp_path, rng):
        inputs = tmp_path / "in"
        inputs.mkdir()
        for i in range(3):
            save_image(rng.uniform(0.0, 0.3, (16, 16, 3)), inputs / f"x{i}.png")
        serial, parallel = tmp_path / "s", tmp_path / "p"
        for out, jobs in ((serial, "1"), (parallel, "3")):
            assert main([
                "enhance", "--checkpoint", str(checkpoint), "--input", str(inputs),
                "--output", str(out), "--jobs", jobs,
            ]) == 0
        for f in serial.glob("*.png"):
            assert f.read_bytes() == (parallel / f.name).read_bytes()

    def test_nonexistent_checkpoint_exits_2(self, tmp_path):
        assert main([
            "enhance", "--checkpoint", str(tmp_path / "nope.ckpt"),
            "--input", str(tmp_path), "--output", str(tmp_path / "o"),
        ]) == 2

    def test_unreadable_input_warns_and_continues(self, checkpoint, tmp_path, rng, capsys):
        inputs = tmp_path / "in"
        inputs.mkdir()
        save_image(rng.uniform(0.0, 0.3, (16, 16, 3)), inputs / "good.png")
        (inputs / "broken.png").write_bytes(b"this is not a png")
        out = tmp_path / "enh"
        assert main([
            "enhance", "--checkpoint", str(checkpoint), "--input", str(inputs),
            "--output", str(out),
        ]) == 0
        assert "broken.png" in capsys.readouterr().err
        assert (out / "good.png").exists() and not (out / "broken.png").exists()

    def test_all_inputs_failing_exits_1(self, checkpoint, tmp_path, capsys):
        inputs = tmp_path / "in"
        inputs.mkdir()
        (inputs / "broken.png").write_bytes(b"nope")
        assert main([
            "enhance", "--checkpoint", str(checkpoint), "--input", str(inputs),
            "--output", str(tmp_path / "o"),
        ]) == 1

    def test_args_snapshot_written(self, checkpoint, tmp_path, rng):
        inputs = tmp_path / "in"
        inputs.mkdir()
        save_image(rng.uniform(0.0, 0.3, (16, 16, 3)), inputs / "a.png")
        out = tmp_path / "enh"
        assert main([
            "enhance", "--checkpoint", str(checkpoint), "--input", str(inputs),
            "--output", str(out), "--seed", "12",
        ]) == 0
        snap = json.loads((out / "enhance_args.json").read_text())
        assert snap["seed"] == 12 and snap["checkpoint"] == str(checkpoint)


class TestCliEvaluate:
    def test_self_comparison_table(self, tmp_path, rng, capsys):
        enh = tmp_path / "enh"
        enh.mkdir()
        for i in range(2):
            save_image(rng.uniform(0.1, 0.9, (96, 96, 3)), enh / f"im{i}.png")
        report = tmp_path / "report.json"
        code = main(["evaluate", str(enh), "--reference", str(enh), "--report", str(report)])
        assert code == 0
        out = capsys.readouterr().out
        assert "SSIM" in out and "1.000" in out
        assert "LOE" in out and "0.000" in out
        data = json.loads(report.read_text())
        assert set(data) == {"per_image", "means", "config_hash"}
        assert len(data["per_image"]) == 2
        assert report.with_suffix(".csv").exists()

    def test_no_reference_mode(self, tmp_path, rng):
        enh = tmp_path / "enh"
        enh.mkdir()
        save_image(rng.uniform(0.1, 0.9, (96, 96, 3)), enh / "a.png")
        report = tmp_path / "r.json"
        assert main(["evaluate", str(enh), "--report", str(report)]) == 0
        row = json.loads(report.read_text())["per_image"][0]
        assert row["psnr"] is None and row["ssim"] is None and row["loe"] is None
        assert row["niqe"] is not None

    def test_orphans_exit_1(self, tmp_path, rng, capsys):
        enh, ref = tmp_path / "enh", tmp_path / "ref"
        enh.mkdir(), ref.mkdir()
        save_image(rng.uniform(0.1, 0.9, (96, 96, 3)), enh / "only_here.png")
        assert main(["evaluate", str(enh), "--reference", str(ref), "--report", str(tmp_path / "r.json")]) == 1
        assert "only_here.png" in capsys.readouterr().err


class TestCliFitNiqe:
    def test_fit_and_use(self, tmp_path, rng):
        imgs = tmp_path / "pristine"
        imgs.mkdir()
        for i in range(6):
            base = rng.uniform(0.2, 0.8, (96, 96, 3))
            smooth = np.cumsum(np.cumsum(base, axis=0), axis=1)
            smooth = (smooth - smooth.min()) / (smooth.max() - smooth.min())
            save_image(0.2 + 0.6 * smooth + 0.1 * base, imgs / f"p{i}.png")
        model_path = tmp_path / "model.npz"
        assert main(["fit-niqe", "--images", str(imgs), "--out", str(model_path), "--patch", "24"]) == 0
        assert model_path.exists()
        from relight.metrics import NiqeModel, niqe

        model = NiqeModel.load(model_path)
        score = niqe(rng.uniform(0, 1, (96, 96, 3)), model)
        assert np.isfinite(score)


def test_unknown_subcommand_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2
