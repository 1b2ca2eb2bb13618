"""End-to-end CLI tests on a tiny corpus, plus config parsing and exit codes.

Griffin-Lim iteration counts are lowered via flags/config to keep these
fast; the acceptance suite runs the full 1000-iteration configuration.
"""

import json
import numpy as np
import pytest

from respeak.audio import read_wav
from respeak.cli import main
from respeak.config import Config, load_config
from respeak.corpus import load_manifest, split, write_manifest
from respeak.errors import ConfigError
from respeak.spectro import read_spim


@pytest.fixture(scope="module")
def tiny_setup(tmp_path_factory):
    """synth-corpus + prepare + split manifests + init checkpoint."""
    root = tmp_path_factory.mktemp("cli")
    corpus = root / "corpus"
    assert main(["synth-corpus", "--out", str(corpus), "--n", "4", "--vocab", "2", "--seed", "3"]) == 0
    manifest = load_manifest(corpus / "manifest.jsonl")
    train, test = split(manifest, 0.5, seed=3)
    write_manifest(train, corpus / "train.jsonl")
    write_manifest(test, corpus / "test.jsonl")
    prepared = root / "prepared"
    assert main(["prepare", "--manifest", str(corpus / "train.jsonl"), "--out", str(prepared)]) == 0
    run = root / "run0"
    assert main(["train", "--data", str(prepared), "--out", str(run), "--total-steps", "0"]) == 0
    return {"root": root, "corpus": corpus, "prepared": prepared,
            "ckpt": run / "ckpt_final.cgck", "run": run}


def test_synth_and_prepare_outputs(tiny_setup):
    prepared = tiny_setup["prepared"]
    manifest = load_manifest(tiny_setup["corpus"] / "train.jsonl")
    for u in manifest.utterances:
        img = read_spim(prepared / f"{u.id}.spim")
        assert img.pixels.shape == (128, 128)
        assert 0 < img.n_speech_frames <= 128
    assert (prepared / "manifest.jsonl").exists()


def test_train_zero_steps_writes_init_checkpoint(tiny_setup):
    run = tiny_setup["run"]
    assert tiny_setup["ckpt"].exists()
    csv = (run / "losses.csv").read_text()
    assert csv.splitlines()[0] == "step,d_x,d_y,g_adv,cycle"
    assert len(csv.splitlines()) == 1  # header only, no steps


def test_invert_roundtrip_and_idempotence(tiny_setup, tmp_path):
    prepared = tiny_setup["prepared"]
    spim = sorted(prepared.glob("B*.spim"))[0]
    out1 = tmp_path / "a.wav"
    out2 = tmp_path / "b.wav"
    assert main(["invert", "--spim", str(spim), "--out", str(out1), "--gl-iters", "20"]) == 0
    assert main(["invert", "--spim", str(spim), "--out", str(out2), "--gl-iters", "20"]) == 0
    w = read_wav(out1)
    assert len(w) > 1000 and np.all(np.isfinite(w.samples))
    assert out1.read_bytes() == out2.read_bytes()  # byte-identical reruns


def test_convert_duration_within_one_window(tiny_setup, tmp_path):
    corpus = tiny_setup["corpus"]
    manifest = load_manifest(corpus / "train.jsonl")
    src = manifest.by_domain("A")[0]
    out = tmp_path / "conv.wav"
    rc = main(["convert", "--ckpt", str(tiny_setup["ckpt"]), "--in", str(src.path),
               "--out", str(out), "--gl-iters", "15"])
    assert rc == 0
    w_in = read_wav(src.path)
    w_out = read_wav(out)
    # output spans the analysis frames of the speech region: within one
    # window length of the input speech duration (which fits under 128 frames)
    assert abs(len(w_out) - len(w_in)) <= 512


def test_plot_writes_pgm_and_png(tiny_setup, tmp_path):
    corpus = tiny_setup["corpus"]
    prepared = tiny_setup["prepared"]
    manifest = load_manifest(corpus / "train.jsonl")
    wav = manifest.by_domain("A")[0].path
    spims = sorted(prepared.glob("*.spim"))
    out = tmp_path / "trip.pgm"
    rc = main(["plot", "--in", str(wav), str(spims[0]), str(spims[1]), "--out", str(out)])
    assert rc == 0
    raw = out.read_bytes()
    assert raw.startswith(b"P5\n")
    assert (tmp_path / "trip.png").exists()
    # 3 panels of 128 plus two 2-pixel separators
    assert b"388 128" in raw[:20]


def test_evaluate_with_template_recognizer(tiny_setup, tmp_path):
    corpus = tiny_setup["corpus"]
    report_path = tmp_path / "report.json"
    rc = main([
        "evaluate", "--manifest", str(corpus / "test.jsonl"), "--ckpt", str(tiny_setup["ckpt"]),
        "--recognizer", "template", "--fit-manifest", str(corpus / "train.jsonl"),
        "--report", str(report_path), "--gl-iters", "10",
    ])
    assert rc == 0
    obj = json.loads(report_path.read_text())
    assert [r["condition"] for r in obj["rows"]] == ["control", "converted", "original"]
    assert all(r["ref_tokens"] > 0 for r in obj["rows"])
    assert report_path.with_suffix(".txt").exists()
    assert report_path.with_suffix(".png").exists()


def test_exit_codes(tiny_setup, tmp_path):
    # usage error: argparse exits 2
    with pytest.raises(SystemExit) as exc:
        main(["train"])
    assert exc.value.code == 2
    # missing data file: 3
    assert main(["prepare", "--manifest", str(tmp_path / "nope.jsonl"), "--out", str(tmp_path)]) == 3
    # corrupt checkpoint: 4
    bad = tmp_path / "bad.cgck"
    bad.write_bytes(b"garbage")
    wav = load_manifest(tiny_setup["corpus"] / "train.jsonl").by_domain("A")[0].path
    assert main(["convert", "--ckpt", str(bad), "--in", str(wav),
                 "--out", str(tmp_path / "x.wav")]) == 4
    # malformed config: 3
    cfg = tmp_path / "c.cfg"
    cfg.write_text("window_len = not_a_number\n")
    assert main(["invert", "--spim", str(tmp_path / "x.spim"), "--out", str(tmp_path / "y.wav"),
                 "--config", str(cfg)]) == 3


def test_evaluate_template_requires_fit_manifest(tiny_setup, tmp_path):
    rc = main([
        "evaluate", "--manifest", str(tiny_setup["corpus"] / "test.jsonl"),
        "--ckpt", str(tiny_setup["ckpt"]), "--recognizer", "template",
        "--report", str(tmp_path / "r.json"),
    ])
    assert rc == 3


def test_config_file_parsing(tmp_path):
    path = tmp_path / "x.cfg"
    path.write_text(
        "# comment line\n"
        "sample_rate = 8000\n"
        "gl_iters = 50   # inline comment\n"
        "lambda_cyc = 5.0\n"
        "flip_augmentation = true\n"
        "loss_form = log\n"
    )
    cfg = load_config(path)
    assert cfg.sample_rate == 8000
    assert cfg.gl_iters == 50
    assert cfg.lambda_cyc == 5.0
    assert cfg.flip_augmentation is True
    assert cfg.loss_form == "log"
    assert cfg.window_len == 512  # untouched default


def test_config_rejects_unknown_key(tmp_path):
    path = tmp_path / "x.cfg"
    path.write_text("window_size = 512\n")
    with pytest.raises(ConfigError) as err:
        load_config(path)
    assert "window_size" in str(err.value)


def test_config_rejects_bad_values():
    with pytest.raises(ConfigError):
        Config(overlap=1.5)
    with pytest.raises(ConfigError):
        Config(db_floor=10.0)
    with pytest.raises(ConfigError):
        Config(loss_form="hinge")


def test_config_roundtrips_through_text(tmp_path):
    cfg = Config(seed=9, gl_iters=123)
    path = tmp_path / "echo.cfg"
    path.write_text(cfg.to_text())
    assert load_config(path) == cfg


def test_prepare_then_invert_magnitude_self_consistency(tiny_setup, tmp_path):
    # full-iteration inversion of a prepared image: the reconstruction's
    # |STFT| must match the magnitudes the image encodes within 5%
    from respeak.spectro import StftConfig, from_image, stft

    prepared = tiny_setup["prepared"]
    spim_path = sorted(prepared.glob("B*.spim"))[0]
    out = tmp_path / "inv.wav"
    assert main(["invert", "--spim", str(spim_path), "--out", str(out)]) == 0  # default 1000 iters
    img = read_spim(spim_path)
    target = from_image(img, StftConfig())
    rec = stft(read_wav(out), StftConfig())
    assert rec.mag.shape == target.mag.shape
    rel = np.linalg.norm(rec.mag - target.mag) / np.linalg.norm(target.mag)
    assert rel < 0.05
    assert np.all(np.isfinite(rec.mag))
