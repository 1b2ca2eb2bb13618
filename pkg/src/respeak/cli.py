"""Command-line interface: the five pipeline steps as subcommands.

    prepare       audio -> .spim spectrogram images
    train         adversarial training; writes checkpoints, loss CSV, figure
    convert       wav -> image -> generator -> image -> Griffin-Lim -> wav
    invert        Griffin-Lim resynthesis of one .spim file
    evaluate      three-condition WER report (template or HTTP recognizer)
    plot          input/generated/target triptych (PGM plus PNG)
    synth-corpus  generate the synthetic dual-domain corpus

Exit codes: 0 success, 2 usage, 3 data, 4 checkpoint, 5 network. Every run
logs its fully resolved configuration so results are reproducible from the
log alone.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import checkpoint as ckpt
from . import figures
from .audio import read_wav, write_wav
from .config import Config, load_config
from .corpus import load_manifest, make_batches, stable_seed, synth_corpus, write_manifest
from .errors import ConfigError, ManifestError, RespeakError
from .evaluate import (
    CONDITION_CONTROL,
    CONDITION_CONVERTED,
    CONDITION_ORIGINAL,
    HttpAsrClient,
    TemplateRecognizer,
    evaluate,
    render_table,
)
from .models import build_models, build_optimizers, train_step
from .pipeline import convert_waveform, image_from_waveform, waveform_from_image
from .spectro import pgm_bytes, read_spim, write_spim

log = logging.getLogger("respeak")

LOSS_CSV_HEADER = "step,d_x,d_y,g_adv,cycle"

CONFIG_FLAGS = ("seed", "total_steps", "batch_size", "gl_iters", "lr", "lambda_cyc", "loss_form")


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="key = value config file")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--total-steps", type=int, dest="total_steps")
    parser.add_argument("--batch-size", type=int, dest="batch_size")
    parser.add_argument("--gl-iters", type=int, dest="gl_iters")
    parser.add_argument("--lr", type=float)
    parser.add_argument("--lambda-cyc", type=float, dest="lambda_cyc")
    parser.add_argument("--loss-form", choices=("lsgan", "log"), dest="loss_form")


def _resolve_config(args: argparse.Namespace) -> Config:
    if getattr(args, "config", None):
        cfg_path = Path(args.config)
        if not cfg_path.exists():
            raise ManifestError(f"config file not found: {cfg_path}")
        cfg = load_config(cfg_path)
    else:
        cfg = Config()
    overrides = {
        name: getattr(args, name)
        for name in CONFIG_FLAGS
        if getattr(args, name, None) is not None
    }
    if overrides:
        merged = {**vars(cfg), **overrides}
        cfg = Config(**merged)
    for line in cfg.to_text().splitlines():
        log.info("config %s", line)
    return cfg


def _require_file(path: Path, what: str) -> Path:
    if not Path(path).exists():
        raise ManifestError(f"{what} not found: {path}")
    return Path(path)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_prepare(args) -> int:
    cfg = _resolve_config(args)
    manifest = load_manifest(_require_file(args.manifest, "manifest"))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for u in manifest.utterances:
        w = read_wav(_require_file(u.path, f"audio for utterance {u.id}"))
        img = image_from_waveform(w, cfg, noise_seed=stable_seed("pad", u.id))
        write_spim(img, out / f"{u.id}.spim")
    write_manifest(manifest, out / "manifest.jsonl")
    log.info("prepared %d utterances into %s", len(manifest), out)
    return 0


def _write_loss_outputs(out: Path, rows: List[tuple]) -> None:
    csv_path = out / "losses.csv"
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write(LOSS_CSV_HEADER + "\n")
        for step, losses in rows:
            fh.write(
                f"{step},{losses.d_x_loss:.8e},{losses.d_y_loss:.8e},"
                f"{losses.g_adv_loss:.8e},{losses.cycle_loss:.8e}\n"
            )
    if rows:
        steps = [r[0] for r in rows]
        series = {
            "d_x": [r[1].d_x_loss for r in rows],
            "d_y": [r[1].d_y_loss for r in rows],
            "g_adv": [r[1].g_adv_loss for r in rows],
            "cycle": [r[1].cycle_loss for r in rows],
        }
        figures.save_loss_curves(steps, series, out / "loss_curves.png")


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    data_dir = Path(args.data)
    manifest = load_manifest(_require_file(data_dir / "manifest.jsonl", "prepared manifest"))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tc = cfg.training_config()

    if args.resume:
        models, optimizers, start_step = ckpt.load_checkpoint(_require_file(args.resume, "checkpoint"), tc)
        log.info("resumed from %s at step %d", args.resume, start_step)
    else:
        models = build_models(cfg.seed)
        optimizers = build_optimizers(models, tc)
        start_step = 0

    rows = []
    for step in range(start_step + 1, cfg.total_steps + 1):
        batch_a, batch_b = make_batches(manifest, data_dir, cfg.batch_size, cfg.seed, step)
        losses = train_step(batch_a, batch_b, models, optimizers, tc, step)
        rows.append((step, losses))
        if step % 25 == 0 or step == cfg.total_steps:
            log.info(
                "step %d: d_x=%.4f d_y=%.4f g_adv=%.4f cycle=%.4f",
                step, losses.d_x_loss, losses.d_y_loss, losses.g_adv_loss, losses.cycle_loss,
            )
        if cfg.checkpoint_every and step % cfg.checkpoint_every == 0 and step < cfg.total_steps:
            ckpt.save_checkpoint(models, optimizers, step, out / f"ckpt_{step:06d}.cgck")

    final_step = max(cfg.total_steps, start_step)
    ckpt.save_checkpoint(models, optimizers, final_step, out / "ckpt_final.cgck")
    _write_loss_outputs(out, rows)
    log.info("trained %d steps; outputs in %s", len(rows), out)
    return 0


def cmd_convert(args) -> int:
    cfg = _resolve_config(args)
    models, _, _ = ckpt.load_checkpoint(_require_file(args.ckpt, "checkpoint"), cfg.training_config())
    generator = models.g_ab if args.direction == "a2b" else models.g_ba
    w = read_wav(_require_file(args.input, "input wav"))
    out_wave = convert_waveform(w, generator, cfg, tag=Path(args.input).stem)
    write_wav(out_wave, args.out)
    log.info("converted %s -> %s (%.2f s)", args.input, args.out, out_wave.duration)
    return 0


def cmd_invert(args) -> int:
    cfg = _resolve_config(args)
    img = read_spim(_require_file(args.spim, "spim image"))
    w, objective = waveform_from_image(img, cfg, gl_seed=stable_seed("phase", Path(args.spim).stem))
    write_wav(w, args.out)
    log.info(
        "inverted %s -> %s (final objective %.4f after %d iterations)",
        args.spim, args.out, objective[-1], len(objective),
    )
    return 0


def cmd_evaluate(args) -> int:
    cfg = _resolve_config(args)
    test = load_manifest(_require_file(args.manifest, "manifest"))
    models, _, _ = ckpt.load_checkpoint(_require_file(args.ckpt, "checkpoint"), cfg.training_config())

    if args.recognizer == "template":
        if not args.fit_manifest:
            raise ConfigError("template recognizer needs --fit-manifest with training utterances")
        fit_manifest = load_manifest(_require_file(args.fit_manifest, "fit manifest"))
        recognizer = TemplateRecognizer.fit_manifest(fit_manifest, cfg)
    else:
        if not args.endpoint:
            raise ConfigError("http recognizer needs --endpoint")
        recognizer = HttpAsrClient(args.endpoint, auth_token=args.auth_token)

    report = evaluate(test, models.g_ab, recognizer, cfg)
    report_path = Path(args.report)
    report_path.parent.mkdir(parents=True, exist_ok=True)
    report_path.write_text(report.to_json(), encoding="utf-8")
    table = render_table(report)
    report_path.with_suffix(".txt").write_text(table, encoding="utf-8")
    figures.save_wer_bars(
        [CONDITION_CONTROL, CONDITION_CONVERTED, CONDITION_ORIGINAL],
        [report.row(c).wer_percent for c in (CONDITION_CONTROL, CONDITION_CONVERTED, CONDITION_ORIGINAL)],
        report_path.with_suffix(".png"),
    )
    sys.stdout.write(table)
    return 0


def _load_plot_input(path: Path, cfg: Config):
    if path.suffix == ".spim":
        return read_spim(path)
    w = read_wav(path)
    return image_from_waveform(w, cfg, noise_seed=stable_seed("pad", path.stem))


def cmd_plot(args) -> int:
    cfg = _resolve_config(args)
    paths = [_require_file(Path(p), "plot input") for p in args.inputs]
    images = [_load_plot_input(p, cfg) for p in paths]
    titles = ["input", "generated", "target"][: len(images)]

    gap = np.full((cfg.image_size, 2), 1.0, dtype=np.float32)
    panels = []
    for i, img in enumerate(images):
        if i:
            panels.append(gap)
        panels.append(img.pixels)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(pgm_bytes(np.hstack(panels)))
    figures.save_triptych(images, titles, out.with_suffix(".png"), cfg.sample_rate)
    log.info("wrote %s and %s", out, out.with_suffix(".png"))
    return 0


def cmd_synth_corpus(args) -> int:
    cfg = _resolve_config(args)
    manifest = synth_corpus(args.n, args.vocab, cfg.seed, args.out, cfg.sample_rate)
    log.info("wrote %d utterances and manifest to %s", len(manifest), args.out)
    return 0


# ---------------------------------------------------------------------------
# argument parsing and dispatch
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="respeak",
        description="Unpaired speech style transfer via spectrogram translation",
    )
    parser.add_argument("--verbose", "-v", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="audio -> .spim images")
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    _add_config_flags(p)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="adversarial training")
    p.add_argument("--data", required=True, type=Path, help="prepared directory (from prepare)")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--resume", type=Path)
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("convert", help="full conversion chain on one wav")
    p.add_argument("--ckpt", required=True, type=Path)
    p.add_argument("--in", required=True, type=Path, dest="input")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--direction", choices=("a2b", "b2a"), default="a2b")
    _add_config_flags(p)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("invert", help="Griffin-Lim resynthesis of a .spim")
    p.add_argument("--spim", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    _add_config_flags(p)
    p.set_defaults(func=cmd_invert)

    p = sub.add_parser("evaluate", help="three-condition WER report")
    p.add_argument("--manifest", required=True, type=Path, help="held-out test manifest")
    p.add_argument("--ckpt", required=True, type=Path)
    p.add_argument("--recognizer", choices=("template", "http"), default="template")
    p.add_argument("--endpoint", help="ASR endpoint URL (http recognizer)")
    p.add_argument("--auth-token", dest="auth_token")
    p.add_argument("--fit-manifest", type=Path, dest="fit_manifest",
                   help="training manifest for fitting the template recognizer")
    p.add_argument("--report", required=True, type=Path, help="output JSON path")
    _add_config_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("plot", help="side-by-side spectrogram triptych")
    p.add_argument("--in", required=True, nargs="+", dest="inputs", metavar="WAV_OR_SPIM")
    p.add_argument("--out", required=True, type=Path, help="output PGM path (PNG written alongside)")
    _add_config_flags(p)
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("synth-corpus", help="generate the synthetic two-domain corpus")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--n", required=True, type=int, help="utterances per domain")
    p.add_argument("--vocab", required=True, type=int, help="vocabulary size")
    _add_config_flags(p)
    p.set_defaults(func=cmd_synth_corpus)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except RespeakError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
