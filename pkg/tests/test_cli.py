import json
import os

import pytest
import yaml

from mvforensics.cli import main


def write_cfg(path, **overrides):
    cfg = {
        "seed": 3,
        "data": {"frame_hw": [64, 64], "clip_len": 5, "num_train_clips": 2,
                 "num_val_clips": 2, "num_test_clips": 2, "camera_models": 2,
                 "frames_per_model": 2},
        "model": {"scales": [0, 1, 2, 3], "embed_dim": 32, "attn_heads": 2,
                  "blocks_per_scale": 1, "flow_iterations": 3, "flow_levels": 2},
        "pretrain": {"epochs": 1, "batch_size": 4},
        "train": {"epochs": 1, "batch_size": 2},
    }
    cfg.update(overrides)
    with open(path, "w") as fh:
        yaml.safe_dump(cfg, fh)
    return str(path)


def test_help_lists_subcommands(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    for cmd in ("gen-data", "pretrain", "train", "eval", "infer", "sweep", "plot"):
        assert cmd in out


def test_missing_checkpoint_exit_2(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "c.yaml")
    clip_dir = tmp_path / "clip"
    rc = main(["infer", "--config", cfg, "--clip", str(clip_dir),
               "--ckpt", str(tmp_path / "nope.ckpt"), "--out", str(tmp_path / "o")])
    assert rc == 2
    err = capsys.readouterr().err
    assert err.startswith("error:")
    assert "nope.ckpt" in err
    assert "\n" not in err.strip()


def test_unknown_config_key_rejected(tmp_path, capsys):
    path = tmp_path / "bad.yaml"
    with open(path, "w") as fh:
        yaml.safe_dump({"seed": 1, "modle": {}}, fh)
    rc = main(["gen-data", "--config", str(path), "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "modle" in capsys.readouterr().err


def test_full_cli_pipeline(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "c.yaml")
    data = tmp_path / "data"
    assert main(["gen-data", "--config", cfg, "--out", str(data)]) == 0
    assert (data / "camera" / "labels.json").exists()
    assert (data / "clips" / "train" / "manifest.json").exists()
    assert (data / "config.yaml").exists()

    pre = tmp_path / "pre"
    assert main(["pretrain", "--config", cfg, "--data", str(data), "--out", str(pre)]) == 0
    pre_ckpt = pre / "pretrain.ckpt"
    assert pre_ckpt.exists()

    run = tmp_path / "run"
    assert main(["train", "--config", cfg, "--data", str(data),
                 "--pretrained", str(pre_ckpt), "--out", str(run)]) == 0
    best = run / "best.ckpt"
    assert best.exists()
    assert (run / "train_curves.csv").exists()

    ev = tmp_path / "ev"
    assert main(["eval", "--config", cfg, "--data", str(data), "--ckpt", str(best),
                 "--split", "test", "--out", str(ev)]) == 0
    report = json.load(open(ev / "report.json"))
    assert 0.0 <= report["map_pooled"] <= 1.0

    inf = tmp_path / "inf"
    clip_dir = data / "clips" / "test" / "clip_0000"
    assert main(["infer", "--config", cfg, "--clip", str(clip_dir),
                 "--ckpt", str(best), "--out", str(inf)]) == 0
    scores = json.load(open(inf / "scores.json"))
    assert len(scores) == 5
    masks = [f for f in os.listdir(inf) if f.startswith("mask_")]
    assert len(masks) == 5

    sw = tmp_path / "sw"
    assert main(["sweep", "--config", cfg, "--data", str(data), "--ckpt", str(best),
                 "--qualities", "lossless", "strong", "--out", str(sw)]) == 0
    assert (sw / "sweep.svg").exists()

    plot_out = tmp_path / "curves.svg"
    assert main(["plot", "--csv", str(run / "train_curves.csv"),
                 "--out", str(plot_out)]) == 0
    assert plot_out.exists()


def test_cli_seed_override(tmp_path):
    cfg = write_cfg(tmp_path / "c.yaml")
    out = tmp_path / "o"
    assert main(["gen-data", "--config", cfg, "--seed", "9", "--out", str(out)]) == 0
    echoed = yaml.safe_load(open(out / "config.yaml"))
    assert echoed["seed"] == 9
