import csv
import subprocess
import sys

import numpy as np
import pytest

from irn.cli import (EXIT_CHECKPOINT, EXIT_CONFIG, EXIT_IMAGE, EXIT_MISSING, EXIT_OK, EXIT_USAGE, build_parser,
                     main)
from irn.data import toy_corpus, write_corpus
from irn.images import load_png

COMMANDS = ["train", "downscale", "upscale", "roundtrip-eval", "compress-eval", "train-crm", "gradcheck",
            "inspect-checkpoint"]
TINY = ["--set", "blocks=1", "--set", "features=4", "--set", "growth=4", "--set", "iters=3", "--set", "batch=2",
        "--set", "crop=16", "--set", "milestones="]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    write_corpus(toy_corpus(2, 32, seed=4), root / "corpus")
    assert main(["train", "--out", str(root / "m.irnc"), "--dir", str(root / "corpus"), *TINY]) == EXIT_OK
    return root


@pytest.mark.parametrize("command", COMMANDS)
def test_every_command_documents_its_flags(command, capsys):
    assert main([command, "--help"]) == 0
    text = capsys.readouterr().out
    sub = build_parser()._subparsers._group_actions[0].choices[command]
    for action in sub._actions:
        for flag in action.option_strings:
            assert flag in text
        if action.help and action.option_strings:
            assert action.help != ""


def test_console_script_help():
    out = subprocess.run([sys.executable, "-m", "irn.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "roundtrip-eval" in out.stdout


def test_train_writes_checkpoint_and_log(workspace):
    assert (workspace / "m.irnc").stat().st_size > 0
    rows = (workspace / "m.csv").read_text().splitlines()
    assert rows[0] == "iter,recon,guide,distr,total,lr"


def test_downscale_upscale_roundtrip(workspace, capsys):
    hr = workspace / "corpus" / "img_000.png"
    assert main(["downscale", "--model", str(workspace / "m.irnc"), "--in", str(hr), "--out",
                 str(workspace / "y.png"), "--z-out", str(workspace / "z.npy")]) == EXIT_OK
    y = load_png(workspace / "y.png")
    assert (y.height, y.width) == (16, 16)
    assert np.load(workspace / "z.npy").shape == (16, 16, 9)
    args = ["upscale", "--model", str(workspace / "m.irnc"), "--in", str(workspace / "y.png"), "--z", "sample",
            "--seed", "7"]
    assert main(args + ["--out", str(workspace / "a.png")]) == EXIT_OK
    assert main(args + ["--out", str(workspace / "b.png")]) == EXIT_OK
    assert (workspace / "a.png").read_bytes() == (workspace / "b.png").read_bytes()
    assert load_png(workspace / "a.png").height == 32
    assert main(["upscale", "--model", str(workspace / "m.irnc"), "--in", str(workspace / "y.png"), "--z", "given",
                 "--z-in", str(workspace / "z.npy"), "--out", str(workspace / "c.png")]) == EXIT_OK


def test_roundtrip_eval_has_baseline_columns(workspace):
    assert main(["roundtrip-eval", "--model", str(workspace / "m.irnc"), "--dir", str(workspace / "corpus"),
                 "--csv", str(workspace / "rt.csv")]) == EXIT_OK
    with open(workspace / "rt.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["image_id"] for r in rows] == ["img_000", "img_001"]
    assert set(rows[0]) == {"image_id", "psnr_db", "ssim", "bicubic_psnr_db", "bicubic_ssim"}


@pytest.mark.filterwarnings("ignore:CRM trained for q=30 applied")
def test_train_crm_and_compress_eval(workspace):
    assert main(["train-crm", "--model", str(workspace / "m.irnc"), "--dir", str(workspace / "corpus"),
                 "--quality", "30", "--iters", "3", "--blocks", "1", "--features", "8", "--growth", "4",
                 "--out", str(workspace / "crm.irnc")]) == EXIT_OK
    assert main(["compress-eval", "--model", str(workspace / "m.irnc"), "--crm", str(workspace / "crm.irnc"),
                 "--dir", str(workspace / "corpus"), "--pipeline", "irn+lossy+crm+irn",
                 "--pipeline", "bicubic+png+bicubic", "--quality", "30", "60",
                 "--csv", str(workspace / "rd.csv")]) == EXIT_OK
    lines = (workspace / "rd.csv").read_text().splitlines()
    assert lines[0] == "pipeline,quality,bpp,psnr_db" and len(lines) == 4


def test_inspect_checkpoint(workspace, capsys):
    assert main(["inspect-checkpoint", str(workspace / "m.irnc"), "--tensors"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "variant IRN" in out and "stages.1." in out


def test_gradcheck_command(capsys):
    assert main(["gradcheck", "--blocks", "1", "--size", "4", "--features", "2", "--growth", "2"]) == EXIT_OK
    assert "PASS" in capsys.readouterr().out


@pytest.mark.parametrize("argv,code", [
    (["downscale", "--model", "missing.irnc", "--in", "x.png", "--out", "y.png"], EXIT_MISSING),
    (["train", "--out", "m.irnc", "--set", "bogus=1"], EXIT_CONFIG),
    (["train", "--out", "m.irnc", "--set", "stage=2"], EXIT_CONFIG),
    (["train", "--bogus-flag"], EXIT_USAGE),
    (["frobnicate"], EXIT_USAGE),
    (["compress-eval", "--pipeline", "irn+zip+irn", "--csv", "x.csv"], EXIT_USAGE),
])
def test_error_codes(argv, code, tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == code
    assert capsys.readouterr().err.strip()


def test_distinct_codes_for_bad_files(tmp_path, workspace, capsys):
    (tmp_path / "junk.irnc").write_bytes(b"nope")
    assert main(["inspect-checkpoint", str(tmp_path / "junk.irnc")]) == EXIT_CHECKPOINT
    (tmp_path / "junk.png").write_bytes(b"nope")
    assert main(["downscale", "--model", str(workspace / "m.irnc"), "--in", str(tmp_path / "junk.png"),
                 "--out", str(tmp_path / "o.png")]) == EXIT_IMAGE
    assert main(["train", "--out", str(tmp_path / "o" / "m.irnc")]) == EXIT_MISSING


def test_thread_cap_env(monkeypatch, workspace):
    monkeypatch.setenv("IRN_THREADS", "1")
    assert main(["inspect-checkpoint", str(workspace / "m.irnc")]) == EXIT_OK
    monkeypatch.setenv("IRN_THREADS", "zero")
    assert main(["inspect-checkpoint", str(workspace / "m.irnc")]) == EXIT_CONFIG
