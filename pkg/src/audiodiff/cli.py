"""Command-line harness tying the pieces into reproducible runs.

Subcommands: schedule-dump, train, sample, augment, evaluate.  Every run
takes a plain key=value config (see audiodiff.config), writes its artifacts
under --out, stamps them with the config hash, and keeps wall-clock timing
in a separate run.log so the CSV reports are byte-identical across reruns
with the same config and seed.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from audiodiff import config as cfgmod
from audiodiff import augment as augmod
from audiodiff.conditioning import ToyVocabulary, classify_temporal
from audiodiff.dataset import (HIGH_CAPTION, LOW_CAPTION, cluster_accuracy,
                               make_two_cluster_dataset)
from audiodiff.denoiser import (AnalyticGaussianDenoiser, DenoiserConfig,
                                OptimizerConfig, TinyCondDenoiser,
                                evaluate_loss, load_checkpoint,
                                save_checkpoint, train)
from audiodiff.diffusion import (GuidanceConfig, load_latents, sample_chains,
                                 save_latents)
from audiodiff.dsp import read_wav, write_wav
from audiodiff.errors import ParameterError
from audiodiff.metrics import (GaussianStats, evaluate_suite, fit_gaussian,
                               frechet_distance)
from audiodiff.schedule import build_linear_schedule, schedule_hash

RESUME_TOLERANCE = 1e-9


def _build_schedule(cfg):
    return build_linear_schedule(cfg.n_steps, cfg.beta_start, cfg.beta_end,
                                 cfg.gamma_mode, cfg.snr_clamp)


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.12g}"
    return str(value)


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _log(out_dir: Path, lines):
    with open(out_dir / "run.log", "a", encoding="utf-8") as fh:
        for line in lines:
            fh.write(line + "\n")


def _prepare(args):
    cfg = cfgmod.load_config(args.config) if args.config \
        else cfgmod.RunConfig()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    return cfg, out_dir


def _record(cfg, out_dir: Path) -> str:
    """Persist the effective config (after CLI overrides) and hash it."""
    cfgmod.save_config(out_dir / "config.txt", cfg)
    return cfgmod.config_hash(cfg)


# ------------------------------------------------------------ subcommands

def cmd_schedule_dump(args) -> int:
    cfg, out_dir = _prepare(args)
    _record(cfg, out_dir)
    s = _build_schedule(cfg)
    rows = [(n + 1, s.beta[n], s.alpha[n], s.alpha_bar[n],
             s.posterior_var[n], s.snr[n], s.gamma[n])
            for n in range(s.n_steps)]
    _write_csv(out_dir / "schedule.csv",
               ["n", "beta", "alpha", "alpha_bar", "posterior_var", "snr",
                "gamma"], rows)
    print(f"schedule {schedule_hash(s)}: {s.n_steps} steps, "
          f"beta {s.beta_start:g}..{s.beta_end:g} -> {out_dir}")
    return 0


def _model_config(cfg) -> DenoiserConfig:
    return DenoiserConfig(
        latent_shape=(cfg.latent_dim, 1, 1), d_text=cfg.d_text,
        hidden_width=cfg.hidden_width, n_hidden=cfg.n_hidden,
        time_dim=cfg.time_dim, attn_dim=cfg.attn_dim,
        init_seed=cfg.init_seed)


def cmd_train(args) -> int:
    cfg, out_dir = _prepare(args)
    if args.seed is not None:
        cfg.train_seed = args.seed
    run_hash = _record(cfg, out_dir)
    started = time.perf_counter()
    s = _build_schedule(cfg)
    dataset = make_two_cluster_dataset(
        cfg.n_pairs, cfg.latent_dim, cfg.cluster_offset, cfg.cluster_sigma,
        cfg.data_seed, cfg.d_text, cfg.vocab_seed)

    if args.resume:
        model, extra = load_checkpoint(args.resume)
        if extra.get("config_hash") != run_hash:
            raise ParameterError(
                "checkpoint config hash does not match this run")
        eval_size = int(extra["eval_size"])
        restored = evaluate_loss(model, dataset.items[:eval_size], s,
                                 int(extra["eval_seed"]))
        drift = abs(restored - float(extra["eval_loss"]))
        if drift > RESUME_TOLERANCE:
            raise ParameterError(
                f"restored eval loss drifted by {drift:.3e}")
        print(f"resumed from {args.resume}: eval loss {restored:.9f} "
              f"(drift {drift:.2e})")
    else:
        model = TinyCondDenoiser(_model_config(cfg))

    g = GuidanceConfig(w=cfg.guidance, cond_drop_prob=cfg.cond_drop_prob)
    opt = OptimizerConfig(
        learning_rate=cfg.learning_rate, batch_size=cfg.batch_size,
        epochs=cfg.epochs, seed=cfg.train_seed, method=cfg.optimizer,
        momentum=cfg.momentum)
    eval_size = min(64, len(dataset))
    trace = train(model, dataset.items, s, g, opt, eval_size=eval_size)

    ckpt_path = out_dir / "checkpoint.bin"
    save_checkpoint(ckpt_path, model, extra={
        "config_hash": run_hash, "epoch": len(trace.epoch_losses),
        "eval_loss": f"{trace.eval_loss!r}", "eval_seed": trace.eval_seed,
        "eval_size": eval_size})
    trace.to_csv(out_dir / "trace.csv")
    elapsed = time.perf_counter() - started
    _log(out_dir, [f"train wall_seconds={elapsed:.3f}"])
    print(f"trained {len(trace.epoch_losses)} epochs, final loss "
          f"{trace.epoch_losses[-1]:.6f}, drop fraction "
          f"{trace.drop_fraction:.4f} -> {ckpt_path}")
    return 0


def _sample_settings(cfg):
    steps_list = cfg.sweep_values(cfg.steps_sweep, int) or [cfg.steps]
    guidance_list = cfg.sweep_values(cfg.guidance_sweep, float) \
        or [cfg.guidance]
    return [(steps, w) for steps in steps_list for w in guidance_list]


def cmd_sample(args) -> int:
    cfg, out_dir = _prepare(args)
    if args.seed is not None:
        cfg.sample_seed = args.seed
    if args.steps is not None:
        cfg.steps = args.steps
        cfg.steps_sweep = ""
    if args.guidance is not None:
        cfg.guidance = args.guidance
        cfg.guidance_sweep = ""
    run_hash = _record(cfg, out_dir)
    started = time.perf_counter()
    s = _build_schedule(cfg)
    rows = []
    timing = []

    if cfg.denoiser == "analytic":
        mu = np.array(cfg.oracle_mean_vector())
        model = AnalyticGaussianDenoiser(s, mu, cfg.oracle_var)
        truth = GaussianStats(mean=mu, cov=cfg.oracle_var * np.eye(mu.size),
                              count=0)
        for steps, w in _sample_settings(cfg):
            tick = time.perf_counter()
            latents = sample_chains(s, model, None, GuidanceConfig(w=w),
                                    steps, cfg.n_samples, cfg.sample_seed)
            save_latents(
                out_dir / f"latents_steps{steps}_w{w:g}.lat", latents,
                cfg.sample_seed, s)
            fitted = fit_gaussian(latents.reshape(cfg.n_samples, -1))
            rows.append((steps, w, "frechet_to_truth",
                         frechet_distance(fitted, truth)))
            rows.append((steps, w, "mean_abs_err",
                         float(np.abs(fitted.mean - truth.mean).max())))
            timing.append(f"sample steps={steps} w={w:g} "
                          f"wall_seconds={time.perf_counter() - tick:.3f}")
    elif cfg.denoiser == "checkpoint":
        model, extra = load_checkpoint(cfg.checkpoint)
        if extra.get("config_hash") not in (None, run_hash):
            # Sampling tweaks (steps/guidance/seed) legitimately change the
            # hash; record the trained hash for provenance instead.
            timing.append(f"checkpoint config_hash={extra['config_hash']}")
        vocab = ToyVocabulary([LOW_CAPTION, HIGH_CAPTION],
                              d_text=cfg.d_text, seed=cfg.vocab_seed)
        dim = int(np.prod(model.latent_shape))
        center = cfg.cluster_offset * np.ones(dim) / np.sqrt(dim)
        centers = {LOW_CAPTION: -center, HIGH_CAPTION: center}
        per_caption = max(cfg.n_samples // 2, 1)
        for steps, w in _sample_settings(cfg):
            tick = time.perf_counter()
            for pick, caption in enumerate((LOW_CAPTION, HIGH_CAPTION)):
                tau = vocab.encode(caption)
                latents = sample_chains(
                    s, model, tau, GuidanceConfig(w=w), steps, per_caption,
                    cfg.sample_seed + pick)
                save_latents(
                    out_dir / f"latents_{caption}_steps{steps}_w{w:g}.lat",
                    latents, cfg.sample_seed + pick, s)
                other = HIGH_CAPTION if caption == LOW_CAPTION \
                    else LOW_CAPTION
                accuracy = cluster_accuracy(latents, centers[caption],
                                            centers[other])
                rows.append((steps, w, f"cluster_accuracy_{caption}",
                             accuracy))
            timing.append(f"sample steps={steps} w={w:g} "
                          f"wall_seconds={time.perf_counter() - tick:.3f}")
    else:
        raise ParameterError(
            f"denoiser must be analytic or checkpoint, got {cfg.denoiser!r}")

    _write_csv(out_dir / "report.csv",
               ["steps", "guidance", "metric", "value"], rows)
    with open(out_dir / "report.csv", "a", encoding="utf-8") as fh:
        fh.write(f"# config_hash={run_hash} schedule={schedule_hash(s)}\n")
    elapsed = time.perf_counter() - started
    _log(out_dir, timing + [f"sample wall_seconds={elapsed:.3f}"])
    print(f"wrote {len(rows)} report rows -> {out_dir / 'report.csv'}")
    return 0


def cmd_augment(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    manifest_path = Path(args.manifest)
    rows = augmod.read_manifest(manifest_path)
    base = manifest_path.parent
    entries = [(read_wav(base / wav_path), caption)
               for wav_path, caption in rows]
    mixed = augmod.augment_manifest(entries, args.count, args.seed)

    out_rows = list(rows)
    clamped_total = 0
    for k, pair in enumerate(mixed):
        name = f"mixed_{k:04d}.wav"
        clamped = write_wav(out_dir / name, pair.audio)
        if clamped:
            _log(out_dir, [f"augment clamped {clamped} samples in {name}"])
            clamped_total += clamped
        out_rows.append(augmod.augmented_manifest_row(name, pair))
    augmod.write_manifest(out_dir / "augmented_manifest.txt", out_rows)

    counts, edges = np.histogram([pair.p for pair in mixed], bins=20,
                                 range=(0.0, 1.0))
    _write_csv(out_dir / "p_histogram.csv",
               ["bin_low", "bin_high", "count"],
               [(edges[i], edges[i + 1], int(counts[i]))
                for i in range(20)])
    elapsed = time.perf_counter() - started
    _log(out_dir, [f"augment wall_seconds={elapsed:.3f} "
                   f"clamped_total={clamped_total}"])
    print(f"mixed {len(mixed)} pairs -> {out_dir}")
    return 0


def _load_eval_dir(path: Path):
    rows = augmod.read_manifest(path / "manifest.txt")
    waves = [read_wav(path / wav_path) for wav_path, _ in rows]
    captions = [caption for _, caption in rows]
    return waves, captions


def cmd_evaluate(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    ref_path, gen_path = Path(args.ref), Path(args.gen)

    if ref_path.is_file() and ref_path.suffix == ".lat":
        # Latent dumps: Frechet on the raw flattened latents, no labels.
        ref_arr, _ = load_latents(ref_path)
        gen_arr, _ = load_latents(gen_path)
        stats_ref = fit_gaussian(ref_arr.reshape(ref_arr.shape[0], -1))
        stats_gen = fit_gaussian(gen_arr.reshape(gen_arr.shape[0], -1))
        rows = [("all", ref_arr.shape[0], "frechet", "latent-raw",
                 frechet_distance(stats_ref, stats_gen))]
        _write_csv(out_dir / "metrics.csv",
                   ["slice", "count", "metric", "embedder", "value"], rows)
        print(f"wrote 1 metric row -> {out_dir / 'metrics.csv'}")
        return 0

    ref_waves, ref_captions = _load_eval_dir(ref_path)
    gen_waves, _ = _load_eval_dir(gen_path)
    if len(ref_waves) != len(gen_waves):
        raise ParameterError("reference and generated sets must pair up")

    indices = list(range(len(ref_waves)))
    if args.slice == "all":
        slices = {"all": indices}
    elif args.slice == "temporal":
        slices = {"multiple-events": [], "single-event": []}
        for i in indices:
            slices[classify_temporal(ref_captions[i])].append(i)
    elif args.slice == "by-caption-labels":
        slices = {}
        for i in indices:
            slices.setdefault(ref_captions[i], []).append(i)
    else:
        raise ParameterError(f"unknown slice {args.slice!r}")

    rows = []
    for name in sorted(slices):
        picked = slices[name]
        if len(picked) < 2:
            rows.append((name, len(picked), "frechet", "-", "N/A"))
            rows.append((name, len(picked), "label_kl", "-", "N/A"))
            continue
        report = evaluate_suite([ref_waves[i] for i in picked],
                                [gen_waves[i] for i in picked])
        rows.extend((name, len(picked), metric, embedder, value)
                    for metric, embedder, value in report.rows)
    _write_csv(out_dir / "metrics.csv",
               ["slice", "count", "metric", "embedder", "value"], rows)
    elapsed = time.perf_counter() - started
    _log(out_dir, [f"evaluate wall_seconds={elapsed:.3f}"])
    print(f"wrote {len(rows)} metric rows -> {out_dir / 'metrics.csv'}")
    return 0


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="audiodiff",
        description="Desk-scale latent-diffusion audio pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--seed", type=int, help="override the run seed")
        p.add_argument("--out", default="out", help="output directory")

    p = sub.add_parser("schedule-dump", help="write the schedule as CSV")
    common(p)
    p.set_defaults(func=cmd_schedule_dump)

    p = sub.add_parser("train", help="train the tiny conditional denoiser")
    common(p)
    p.add_argument("--resume", help="checkpoint to continue from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", help="ancestral sampling runs or sweeps")
    common(p)
    p.add_argument("--steps", type=int, help="inference steps")
    p.add_argument("--guidance", type=float, help="guidance scale w")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("augment", help="mix pairs from a WAV manifest")
    common(p)
    p.add_argument("--manifest", required=True,
                   help="wav-path<TAB>caption manifest")
    p.add_argument("--count", type=int, required=True,
                   help="number of mixed pairs")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("evaluate", help="metrics between two corpora")
    common(p)
    p.add_argument("--ref", required=True,
                   help="reference dir (manifest.txt) or .lat dump")
    p.add_argument("--gen", required=True,
                   help="generated dir (manifest.txt) or .lat dump")
    p.add_argument("--slice", default="all",
                   choices=["all", "temporal", "by-caption-labels"])
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "augment" and args.seed is None:
        args.seed = 0
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
