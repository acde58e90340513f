"""Command-line entry point: ``codeprobe <subcommand> ...``.

Subcommands: eval, triples, synth, sweep, quantize, report. Reports are CSV
with header ``run_id,metric,input_kind,config,seed,n,value``; a JSON run
manifest is written next to every output file.
"""

import argparse
import logging
import math
import os
import sys
import time
from pathlib import Path
from typing import List, Optional

from . import __version__, abx, pipeline
from .corpus import SILENCE, join_corpus, load_alignments, load_codes, write_codes
from .manifest import RunManifest, read_report, render_csv
from .pipeline import EvalOptions, Row, SweepOptions, subseed
from .probe import TrainerConfig, load_probe, save_probe, train_logistic
from .quantize import load_codebook, load_features, quantize_features
from .synth import ChannelConfig, generate, write_corpus

logger = logging.getLogger("codeprobe")

# flags that change how a run executes but never what it outputs
_EXECUTION_ONLY = {"jobs", "out", "manifest", "plot_dir", "plot", "verbose", "func", "command"}


class CommandError(Exception):
    pass


def _default_jobs() -> int:
    try:
        return max(1, int(os.environ.get("CODEPROBE_JOBS", "1")))
    except ValueError:
        return 1


def _positive(x: str) -> int:
    v = int(x)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {x}")
    return v


def _nonneg(x: str) -> int:
    v = int(x)
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {x}")
    return v


def _unit(x: str) -> float:
    v = float(x)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"expected a value in [0, 1], got {x}")
    return v


def _int_list(x: str) -> List[int]:
    return [int(v) for v in x.split(",") if v]


def _float_list(x: str) -> List[float]:
    return [float(v) for v in x.split(",") if v]


def _budget(x: int) -> Optional[int]:
    return None if x == 0 else x


def _flags(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in _EXECUTION_ONLY}


def _trainer(args) -> TrainerConfig:
    return TrainerConfig(learning_rate=args.lr, epochs=args.epochs, l2=args.l2, seed=args.seed)


def _emit(args, manifest: RunManifest, rows, started: float) -> None:
    body = render_csv(manifest.run_id, rows)
    manifest.duration_seconds = round(time.monotonic() - started, 3)
    if args.out:
        Path(args.out).write_text(body, encoding="utf-8")
        manifest.write(args.manifest or f"{args.out}.manifest.json")
    else:
        sys.stdout.write(body)
        if args.manifest:
            manifest.write(args.manifest)


def _load_corpus(args, manifest: RunManifest, min_utterances: int = 2):
    manifest.add_input("codes", args.codes)
    manifest.add_input("alignments", args.alignments)
    seqs = load_codes(args.codes, args.codebook_size, skip_bad=args.skip_bad)
    aligns = load_alignments(args.alignments, args.frame_factor)
    corpus = join_corpus(seqs, aligns, skip_bad=args.skip_bad)
    if len(corpus) < min_utterances:
        raise CommandError(f"need at least {min_utterances} aligned utterance(s), found {len(corpus)}")
    return seqs, corpus


# ---------------------------------------------------------------- commands

def cmd_eval(args) -> int:
    started = time.monotonic()
    metrics = tuple(m.strip() for m in args.metrics.split(",") if m.strip())
    if "abx" in metrics and not (args.triples or args.make_triples):
        raise CommandError("metric 'abx' needs stimulus triples: pass --triples FILE "
                           "or --make-triples")
    manifest = RunManifest("eval", flags=_flags(args))
    seqs, corpus = _load_corpus(args, manifest)
    opts = EvalOptions(
        metrics=metrics, seed=args.seed, silence_label=args.silence_label,
        keep_silence=args.keep_silence, pair_budget=_budget(args.pair_budget),
        correlation=args.correlation, max_per_contrast=_budget(args.max_per_contrast),
        within_speaker=args.within_speaker, abx_regime=args.abx_regime,
        trainer=_trainer(args), jobs=args.jobs)
    manifest.seeds = {name: subseed(args.seed, name) for name in ("split", "sampler", "triples")}

    triples = None
    if "abx" in metrics and args.triples:
        manifest.add_input("triples", args.triples)
        abx_seqs = seqs
        if args.abx_codes:
            manifest.add_input("abx_codes", args.abx_codes)
            abx_seqs = load_codes(args.abx_codes, args.codebook_size, skip_bad=args.skip_bad)
        triples = abx.read_triples(args.triples, abx_seqs, args.abx_regime)
    elif "abx" in metrics and args.abx_codes:
        raise CommandError("--abx-codes is only used together with --triples")

    probe = None
    if args.load_probe:
        manifest.add_input("probe", args.load_probe)
        probe = load_probe(args.load_probe)
    if args.save_probe and "dc" in metrics and probe is None:
        probe = _train_dc(corpus, opts)
        save_probe(probe, args.save_probe)
    rows = pipeline.evaluate(corpus, opts, triples=triples, probe=probe)
    _emit(args, manifest, rows, started)
    return 0


def _train_dc(corpus, opts: EvalOptions):
    from .corpus import corpus_frames, split_halves

    train, _ = split_halves(corpus, subseed(opts.seed, "split"))
    codes, labels = corpus_frames(train, opts.silence_label, opts.keep_silence)
    return train_logistic(codes, labels, opts.trainer,
                          n_codes=corpus[0].code_sequence.codebook_size)


def cmd_triples(args) -> int:
    started = time.monotonic()
    manifest = RunManifest("triples", flags=_flags(args),
                           seeds={"triples": subseed(args.seed, "triples")})
    _, corpus = _load_corpus(args, manifest, min_utterances=1)
    opts = EvalOptions(seed=args.seed, silence_label=args.silence_label,
                       max_per_contrast=_budget(args.max_per_contrast),
                       within_speaker=args.within_speaker)
    triples = pipeline.make_triples(corpus, opts)
    out = args.out or "-"
    if out == "-":
        import tempfile
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "triples.tsv"
            abx.write_triples(path, triples)
            sys.stdout.write(path.read_text(encoding="utf-8"))
    else:
        abx.write_triples(out, triples)
        manifest.duration_seconds = round(time.monotonic() - started, 3)
        manifest.write(args.manifest or f"{out}.manifest.json")
    logger.info("%d triples over %d contrasts", len(triples), len(triples.contrasts))
    return 0


def cmd_synth(args) -> int:
    started = time.monotonic()
    config = ChannelConfig(
        codebook_size=args.codebook, n_phonemes=args.phonemes, n_speakers=args.speakers,
        purity=args.purity, speaker_leakage=args.leakage,
        frames_per_phoneme=tuple(args.frames_per_phoneme), utterance_length=tuple(args.utt_length),
        n_utterances=args.utts, seed=subseed(args.seed, "synth"))
    corpus, tables = generate(config)
    paths = write_corpus(args.out, corpus, tables)
    manifest = RunManifest("synth", flags=_flags(args), seeds={"synth": config.seed})
    manifest.inputs = {k: str(v) for k, v in paths.items()}
    manifest.duration_seconds = round(time.monotonic() - started, 3)
    manifest.write(args.manifest or f"{args.out}.manifest.json")
    logger.info("wrote %d utterances to %s", len(corpus), paths["codes"])
    return 0


def cmd_sweep(args) -> int:
    started = time.monotonic()
    opts = SweepOptions(
        recipe=args.recipe, codebook_sizes=tuple(args.codebook_sizes),
        purities=tuple(args.purities), codebook_size=args.codebook, purity=args.purity,
        leakage=args.leakage, n_phonemes=args.phonemes, n_speakers=args.speakers,
        n_utterances=args.utts, frames_per_phoneme=tuple(args.frames_per_phoneme),
        utterance_length=tuple(args.utt_length), n_seeds=args.seeds, seed=args.seed,
        pair_budget=_budget(args.pair_budget), max_per_contrast=_budget(args.max_per_contrast),
        correlation=args.correlation, span=args.span, trainer=_trainer(args))
    manifest = RunManifest("sweep", flags=_flags(args),
                           seeds={f"synth/{s}": subseed(args.seed, f"synth/{s}")
                                  for s in range(args.seeds)})
    try:
        rows = pipeline.run_sweep(opts, jobs=args.jobs)
    except Exception as err:
        raise CommandError(f"sweep cell failed (run {manifest.run_id}): {err}") from err
    _emit(args, manifest, rows, started)
    if args.plot_dir:
        from .plots import plot_report
        plot_report([r._asdict() for r in rows], Path(args.plot_dir) / f"{args.recipe}.png",
                    x_key="alpha" if args.recipe == "purity" else "K", span=args.span)
    return 0


def cmd_quantize(args) -> int:
    started = time.monotonic()
    manifest = RunManifest("quantize", flags=_flags(args))
    manifest.add_input("codebook", args.codebook)
    manifest.add_input("features", args.features)
    codebook = load_codebook(args.codebook)
    seqs = quantize_features(load_features(args.features), codebook)
    if args.out:
        write_codes(args.out, seqs)
        manifest.duration_seconds = round(time.monotonic() - started, 3)
        manifest.write(args.manifest or f"{args.out}.manifest.json")
    else:
        for s in seqs:
            sys.stdout.write(f"{s.utterance_id}\t{s.speaker_id}\t{' '.join(map(str, s.codes.tolist()))}\n")
    return 0


def cmd_report(args) -> int:
    """Seed-averaged means and LOESS curves from existing report CSVs."""
    import numpy as np
    from .stats import MetricSeries

    started = time.monotonic()
    manifest = RunManifest("report", flags=_flags(args))
    records = []
    for i, path in enumerate(args.reports):
        manifest.add_input(f"report{i}", path)
        records.extend(read_report(path))
    per_cell = [r for r in records if r["seed"] not in ("all", "mean")]
    groups = {}
    for r in per_cell:
        groups.setdefault((r["metric"], r["input_kind"], r["config"]), []).append(float(r["value"]))
    rows = [Row(f"mean:{m}", k, c, "mean", len(v), float(np.mean(v)))
            for (m, k, c), v in sorted(groups.items())]
    series = {}
    for r in per_cell:
        cfg = pipeline.parse_config(r["config"])
        if args.x_key not in cfg:
            continue
        x = float(cfg[args.x_key])
        x = math.log2(x) if args.x_key == "K" else x
        group = cfg.get(args.group_key, "") if args.group_key else ""
        series.setdefault((r["metric"], r["input_kind"]), MetricSeries()).add(x, float(r["value"]), group)
    for (metric, kind), s in sorted(series.items()):
        if len({x for x, _, _ in s.points}) < 3:
            continue
        for group, curve in s.smooth(args.span).items():
            for x, y in curve:
                cfg = pipeline.fmt_config(x=f"{x:g}", group=group, span=args.span)
                rows.append(Row(f"loess:{metric}", kind, cfg, "all", len(s.points), y))
    _emit(args, manifest, rows, started)
    if args.plot:
        from .plots import plot_report
        plot_report(per_cell, Path(args.plot), x_key=args.x_key, span=args.span,
                    group_key=args.group_key)
    return 0


# ---------------------------------------------------------------- parser

def _add_corpus_args(p):
    p.add_argument("--codebook-size", type=_positive, default=None,
                   help="codebook size K (default: largest code + 1)")
    p.add_argument("--frame-factor", type=_positive, default=1,
                   help="alignment frames per code frame")
    p.add_argument("--silence-label", default=SILENCE)
    p.add_argument("--skip-bad", action="store_true",
                   help="log and drop malformed or unaligned utterances instead of failing")
    p.add_argument("--seed", type=int, default=0)


def _add_output_args(p):
    p.add_argument("--out", "-o", help="output path (default: stdout)")
    p.add_argument("--manifest", help="manifest path (default: <out>.manifest.json)")


def _add_trainer_args(p):
    d = TrainerConfig()
    p.add_argument("--lr", type=float, default=d.learning_rate, help="DC learning rate")
    p.add_argument("--epochs", type=_positive, default=d.epochs, help="DC epochs")
    p.add_argument("--l2", type=float, default=d.l2, help="DC L2 strength")


def _add_synth_args(p, defaults: ChannelConfig, sweep: bool = False):
    if not sweep:
        p.add_argument("--codebook", type=_positive, default=defaults.codebook_size)
        p.add_argument("--purity", type=_unit, default=defaults.purity)
    p.add_argument("--leakage", type=_unit, default=defaults.speaker_leakage)
    p.add_argument("--phonemes", type=_positive, default=defaults.n_phonemes)
    p.add_argument("--speakers", type=_positive, default=defaults.n_speakers)
    p.add_argument("--utts", type=_positive, default=defaults.n_utterances)
    p.add_argument("--frames-per-phoneme", type=_positive, nargs=2, metavar=("MIN", "MAX"),
                   default=list(defaults.frames_per_phoneme))
    p.add_argument("--utt-length", type=_positive, nargs=2, metavar=("MIN", "MAX"),
                   default=list(defaults.utterance_length))
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="codeprobe", description="Evaluate discrete speech codes against phoneme alignments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", help="score codes against aligned phonemes")
    p.add_argument("codes")
    p.add_argument("alignments")
    p.add_argument("--metrics", default="nmi,dc,rsa,abx",
                   help="comma-separated subset of nmi,dc,rsa,abx,speaker")
    _add_corpus_args(p)
    p.add_argument("--keep-silence", action="store_true",
                   help="include silence frames in NMI and DC")
    p.add_argument("--pair-budget", type=_nonneg, default=5_000_000,
                   help="maximum RSA pairs, 0 for all")
    p.add_argument("--correlation", choices=("pearson", "spearman"), default="pearson")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--triples", help="ABX triples file from 'codeprobe triples'")
    g.add_argument("--make-triples", action="store_true",
                   help="build ABX triples from the corpus being evaluated")
    p.add_argument("--max-per-contrast", type=_nonneg, default=500, help="0 for no cap")
    p.add_argument("--within-speaker", action="store_true")
    p.add_argument("--abx-codes", help="codes file for ABX segments (default: the main codes)")
    p.add_argument("--abx-regime", choices=("slice", "segment"), default="slice",
                   help="slice: cut trigram spans out of utterance codes; "
                        "segment: codes file holds one encoded segment per line")
    _add_trainer_args(p)
    p.add_argument("--save-probe", help="write the trained DC probe as JSON")
    p.add_argument("--load-probe", help="use a saved DC probe instead of training")
    p.add_argument("--jobs", type=_positive, default=_default_jobs())
    _add_output_args(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("triples", help="extract minimal-pair ABX triples")
    p.add_argument("alignments")
    p.add_argument("codes")
    _add_corpus_args(p)
    p.add_argument("--max-per-contrast", type=_nonneg, default=500, help="0 for no cap")
    p.add_argument("--within-speaker", action="store_true")
    _add_output_args(p)
    p.set_defaults(func=cmd_triples)

    p = sub.add_parser("synth", help="generate a synthetic aligned corpus")
    p.add_argument("--out", "-o", required=True,
                   help="output prefix; writes <prefix>.codes, .align, .channel.json")
    p.add_argument("--manifest")
    _add_synth_args(p, ChannelConfig())
    p.set_defaults(func=cmd_synth)

    d = SweepOptions()
    p = sub.add_parser("sweep", help="run an experiment recipe on synthetic corpora")
    p.add_argument("recipe", choices=pipeline.RECIPES)
    p.add_argument("--codebook-sizes", type=_int_list, default=list(d.codebook_sizes))
    p.add_argument("--purities", type=_float_list, default=list(d.purities))
    p.add_argument("--codebook", type=_positive, default=d.codebook_size,
                   help="codebook size for the purity recipe")
    p.add_argument("--purity", type=_unit, default=d.purity)
    _add_synth_args(p, ChannelConfig(
        n_phonemes=d.n_phonemes, n_speakers=d.n_speakers, speaker_leakage=d.leakage,
        n_utterances=d.n_utterances, frames_per_phoneme=d.frames_per_phoneme,
        utterance_length=d.utterance_length), sweep=True)
    p.add_argument("--seeds", type=_positive, default=d.n_seeds, help="generation seeds per cell")
    p.add_argument("--pair-budget", type=_nonneg, default=d.pair_budget, help="0 for all pairs")
    p.add_argument("--max-per-contrast", type=_nonneg, default=d.max_per_contrast)
    p.add_argument("--correlation", choices=("pearson", "spearman"), default=d.correlation)
    p.add_argument("--span", type=float, default=d.span, help="LOESS span")
    _add_trainer_args(p)
    p.add_argument("--jobs", type=_positive, default=_default_jobs())
    p.add_argument("--plot-dir", help="also render a PNG of the per-cell metrics")
    _add_output_args(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("quantize", help="map feature frames to nearest-prototype codes")
    p.add_argument("codebook")
    p.add_argument("features")
    _add_output_args(p)
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("report", help="summarise report CSVs (means, LOESS, plots)")
    p.add_argument("reports", nargs="+")
    p.add_argument("--x-key", default="K", help="config key for the x axis (K is log2-scaled)")
    p.add_argument("--group-key", default=None, help="config key that splits series")
    p.add_argument("--span", type=float, default=0.75)
    p.add_argument("--plot", help="PNG path for metric panels")
    _add_output_args(p)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CommandError, ValueError, OSError, RuntimeError) as err:
        print(f"codeprobe: error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
