"""Metric pipelines shared by the ``eval`` and ``sweep`` commands.

Each pipeline returns :class:`Row` tuples; the CLI stamps them with a run id
and writes them as CSV. All randomness is derived from one integer seed via
:func:`subseed`, so equal inputs and options give equal rows.
"""

import hashlib
import logging
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from . import abx, stats
from .corpus import SILENCE, AlignedUtterance, corpus_frames, phoneme_string, split_halves
from .editdist import PairSampler, collapse_repeats, pairwise_distances
from .infometrics import build_histogram, nmi
from .probe import TrainerConfig, accuracy, cross_entropy, speaker_probe, train_logistic
from .rsa import DEFAULT_PAIR_BUDGET, rsa_score
from .synth import ChannelConfig, generate

logger = logging.getLogger(__name__)

CELL_METRICS = ("nmi", "dc_accuracy", "rsa", "abx_accuracy")


class Row(NamedTuple):
    metric: str
    input_kind: str
    config: str
    seed: str
    n: int
    value: float


def subseed(seed: int, name: str) -> int:
    """A named, platform-independent child seed."""
    digest = hashlib.sha256(f"{seed}/{name}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def fmt_config(**items) -> str:
    return ";".join(f"{k}={v}" for k, v in items.items())


def parse_config(config: str) -> Dict[str, str]:
    return dict(part.split("=", 1) for part in config.split(";") if "=" in part)


@dataclass(frozen=True)
class EvalOptions:
    metrics: Tuple[str, ...] = ("nmi", "dc", "rsa", "abx")
    seed: int = 0
    silence_label: str = SILENCE
    keep_silence: bool = False
    pair_budget: Optional[int] = DEFAULT_PAIR_BUDGET
    correlation: str = "pearson"
    max_per_contrast: Optional[int] = 500
    within_speaker: bool = False
    abx_regime: str = "slice"
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    jobs: int = 1


def _abx_rows(triples: abx.TripleSet, opts: EvalOptions) -> List[Row]:
    res = abx.abx_score(triples, jobs=opts.jobs)
    cfg = fmt_config(regime=opts.abx_regime,
                     speaker="within" if opts.within_speaker else "any",
                     max_per_contrast=opts.max_per_contrast, contrasts=res.n_contrasts)
    seed = str(opts.seed)
    return [
        Row("abx_accuracy", "triplet", cfg, seed, res.n_triples, res.accuracy),
        Row("abx_error_macro", "triplet", cfg, seed, res.n_triples, res.error),
        Row("abx_error_micro", "triplet", cfg, seed, res.n_triples, res.micro_error),
    ]


def make_triples(corpus: Sequence[AlignedUtterance], opts: EvalOptions) -> abx.TripleSet:
    segments = abx.extract_segments(corpus, opts.silence_label)
    return abx.build_triples(segments, opts.max_per_contrast,
                             subseed(opts.seed, "triples"), opts.within_speaker)


def evaluate(corpus: Sequence[AlignedUtterance], opts: EvalOptions,
             triples: Optional[abx.TripleSet] = None, probe=None) -> List[Row]:
    """Run the requested metrics on one corpus.

    NMI, DC and RSA use the held-out half of an utterance-level split (DC is
    trained on the other half). ABX uses ``triples`` when given, otherwise
    triples built from the whole corpus. A failure in any metric propagates.
    """
    unknown = set(opts.metrics) - {"nmi", "dc", "rsa", "abx", "speaker"}
    if unknown:
        raise ValueError(f"unknown metric(s): {', '.join(sorted(unknown))}")
    rows: List[Row] = []
    seed = str(opts.seed)
    train, held = split_halves(corpus, subseed(opts.seed, "split"))
    frames = {}

    def held_frames():
        if "held" not in frames:
            frames["held"] = corpus_frames(held, opts.silence_label, opts.keep_silence)
        return frames["held"]

    frame_cfg = fmt_config(silence="keep" if opts.keep_silence else "drop")
    if "nmi" in opts.metrics:
        codes, labels = held_frames()
        rows.append(Row("nmi", "frames", frame_cfg, seed, len(codes),
                        nmi(build_histogram(codes, labels))))
    if "dc" in opts.metrics:
        codes, labels = held_frames()
        if probe is None:
            t_codes, t_labels = corpus_frames(train, opts.silence_label, opts.keep_silence)
            probe = train_logistic(t_codes, t_labels, opts.trainer,
                                   n_codes=corpus[0].code_sequence.codebook_size)
        t = opts.trainer
        cfg = fmt_config(silence="keep" if opts.keep_silence else "drop",
                         lr=t.learning_rate, epochs=t.epochs, l2=t.l2)
        rows.append(Row("dc_accuracy", "frames", cfg, seed, len(codes), accuracy(probe, codes, labels)))
        rows.append(Row("dc_cross_entropy", "frames", cfg, seed, len(codes),
                        cross_entropy(probe, codes, labels)))
    if "rsa" in opts.metrics:
        sampler = PairSampler(opts.pair_budget, subseed(opts.seed, "sampler"))
        pairs = pairwise_distances(
            [collapse_repeats(u.codes) for u in held],
            [phoneme_string(u, opts.silence_label) for u in held],
            sampler, jobs=opts.jobs)
        res = rsa_score(pairs, opts.correlation, "complete")
        rows.append(Row("rsa", "complete", fmt_config(kind=opts.correlation, budget=opts.pair_budget),
                        seed, res.n_pairs, res.correlation))
    if "abx" in opts.metrics:
        if triples is None:
            triples = make_triples(corpus, opts)
        rows.extend(_abx_rows(triples, opts))
    if "speaker" in opts.metrics:
        per_speaker = Counter(u.speaker_id for u in corpus)
        seqs = [u.code_sequence for u in corpus if per_speaker[u.speaker_id] >= 2]
        dropped = sum(1 for c in per_speaker.values() if c < 2)
        if dropped:
            logger.warning("speaker probe: skipping %d speaker(s) with a single utterance", dropped)
        acc = speaker_probe(seqs, subseed(opts.seed, "speaker-split"), opts.trainer, stratify=True)
        rows.append(Row("speaker_accuracy", "utterances", fmt_config(split="stratified"),
                        seed, len(seqs), acc))
    return rows


# ---------------------------------------------------------------- sweeps

RECIPES = ("codebook", "purity", "stimulus", "distribution")


@dataclass(frozen=True)
class SweepOptions:
    recipe: str = "codebook"
    codebook_sizes: Tuple[int, ...] = (32, 64, 128, 256, 512, 1024)
    purities: Tuple[float, ...] = (0.0, 0.25, 0.5, 0.75, 1.0)
    codebook_size: int = 64
    purity: float = 0.6
    leakage: float = 0.3
    n_phonemes: int = 10
    n_speakers: int = 8
    n_utterances: int = 400
    frames_per_phoneme: Tuple[int, int] = (2, 8)
    utterance_length: Tuple[int, int] = (8, 30)
    n_seeds: int = 3
    seed: int = 0
    pair_budget: Optional[int] = 200_000
    max_per_contrast: Optional[int] = 20
    correlation: str = "pearson"
    span: float = 0.75
    trainer: TrainerConfig = field(default_factory=TrainerConfig)

    def cells(self) -> List[Tuple[int, Dict, int]]:
        """(cell index, parameters, generation seed index) in output order."""
        if self.recipe not in RECIPES:
            raise ValueError(f"unknown recipe {self.recipe!r}; choose from {', '.join(RECIPES)}")
        if self.recipe == "purity":
            params = [dict(K=self.codebook_size, alpha=a, beta=self.leakage) for a in self.purities]
        elif self.recipe == "distribution":
            params = [dict(K=k, alpha=self.purity, beta=self.leakage) for k in (32, 1024)]
        else:
            params = [dict(K=k, alpha=self.purity, beta=self.leakage) for k in self.codebook_sizes]
        return [(i, p, s) for i, p in enumerate(params) for s in range(self.n_seeds)]


def _distance_rows(input_kind, distances, cfg, seed) -> List[Row]:
    n = len(distances)
    return [Row("skewness", input_kind, cfg, seed, n, stats.skewness(distances)),
            Row("excess_kurtosis", input_kind, cfg, seed, n, stats.excess_kurtosis(distances))]


def run_cell(opts: SweepOptions, params: Dict, seed_index: int) -> List[Row]:
    """Generate one synthetic corpus and compute the recipe's per-cell rows."""
    gen_seed = subseed(opts.seed, f"synth/{seed_index}")
    config = ChannelConfig(
        codebook_size=params["K"], n_phonemes=opts.n_phonemes, n_speakers=opts.n_speakers,
        purity=params["alpha"], speaker_leakage=params["beta"],
        frames_per_phoneme=opts.frames_per_phoneme, utterance_length=opts.utterance_length,
        n_utterances=opts.n_utterances, seed=gen_seed)
    corpus, _ = generate(config)
    cfg = fmt_config(**params)
    seed = str(seed_index)
    eval_opts = EvalOptions(seed=gen_seed, pair_budget=opts.pair_budget,
                            correlation=opts.correlation, max_per_contrast=opts.max_per_contrast,
                            trainer=opts.trainer)
    sampler = PairSampler(opts.pair_budget, subseed(gen_seed, "sampler"))

    def restamp(rows):
        return [r._replace(config=cfg, seed=seed) for r in rows]

    if opts.recipe in ("codebook", "purity"):
        rows = restamp(evaluate(corpus, replace(eval_opts, metrics=("nmi", "dc", "rsa", "abx"))))
        return [r for r in rows if r.metric in CELL_METRICS]

    segments = abx.extract_segments(corpus)
    seg_codes = [collapse_repeats(s.code_slice) for s in segments]
    seg_refs = [list(s.trigram) for s in segments]
    triplet = pairwise_distances(seg_codes, seg_refs, sampler)
    utt_codes = [collapse_repeats(u.codes) for u in corpus]
    utt_refs = [phoneme_string(u) for u in corpus]
    complete = pairwise_distances(utt_codes, utt_refs, sampler)
    rows: List[Row] = []
    if opts.recipe == "stimulus":
        triples = abx.build_triples(segments, opts.max_per_contrast, subseed(gen_seed, "triples"))
        res = abx.abx_score(triples)
        rows.append(Row("abx_accuracy", "triplet", cfg, seed, res.n_triples, res.accuracy))
        for kind, pairs in (("complete", complete), ("triplet", triplet)):
            r = rsa_score(pairs, opts.correlation, kind)
            rows.append(Row("rsa", kind, cfg, seed, r.n_pairs, r.correlation))
    for kind, pairs in (("complete", complete), ("triplet", triplet)):
        rows.extend(_distance_rows(kind, pairs.distances_a, cfg, seed))
    return rows


def _cell_task(args):
    opts, cell_index, params, seed_index = args
    return cell_index, seed_index, run_cell(opts, params, seed_index)


def run_sweep(opts: SweepOptions, jobs: int = 1) -> List[Row]:
    """All cells of a recipe followed by LOESS and correlation summaries.

    Cells may run in worker processes; rows are ordered by (cell, seed)
    afterwards, so ``jobs`` never changes the output.
    """
    tasks = [(opts, i, p, s) for i, p, s in opts.cells()]
    if jobs > 1 and len(tasks) > 1:
        import multiprocessing
        from concurrent.futures import ProcessPoolExecutor

        ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(max_workers=jobs, mp_context=ctx) as pool:
            results = list(pool.map(_cell_task, tasks))
    else:
        results = [_cell_task(t) for t in tasks]
    results.sort(key=lambda r: (r[0], r[1]))
    rows = [row for _, _, cell_rows in results for row in cell_rows]
    return rows + summarize(rows, opts)


def _x_value(opts: SweepOptions, cfg: Dict[str, str]) -> float:
    return float(cfg["alpha"]) if opts.recipe == "purity" else math.log2(float(cfg["K"]))


def summarize(rows: Sequence[Row], opts: SweepOptions) -> List[Row]:
    """LOESS series per (metric, input kind), metric correlations, and
    seed-averaged distribution moments."""
    out: List[Row] = []
    x_name = "alpha" if opts.recipe == "purity" else "log2K"
    series: Dict[Tuple[str, str], stats.MetricSeries] = {}
    for r in rows:
        series.setdefault((r.metric, r.input_kind), stats.MetricSeries()).add(
            _x_value(opts, parse_config(r.config)), r.value)
    for (metric, kind), s in sorted(series.items()):
        if len({x for x, _, _ in s.points}) < 3 or len(s.points) < 3:
            continue
        for group, curve in s.smooth(opts.span).items():
            for x, y in curve:
                out.append(Row(f"loess:{metric}", kind, fmt_config(**{x_name: f"{x:g}"}, span=opts.span),
                               "all", len(s.points), y))

    keyed: Dict[Tuple[str, str], Dict[Tuple[str, str], float]] = {}
    for r in rows:
        keyed.setdefault((r.metric, r.input_kind), {})[(r.config, r.seed)] = r.value
    if opts.recipe == "stimulus":
        pairs = [(("abx_accuracy", "triplet"), ("rsa", "complete")),
                 (("abx_accuracy", "triplet"), ("rsa", "triplet"))]
    elif opts.recipe in ("codebook", "purity"):
        names = [(m, "frames" if m in ("nmi", "dc_accuracy") else
                  "complete" if m == "rsa" else "triplet") for m in CELL_METRICS]
        pairs = [(a, b) for i, a in enumerate(names) for b in names[i + 1:]]
    else:
        pairs = []
    for a, b in pairs:
        if a not in keyed or b not in keyed:
            continue
        common = sorted(set(keyed[a]) & set(keyed[b]))
        if len(common) < 3:
            continue
        xs = [keyed[a][k] for k in common]
        ys = [keyed[b][k] for k in common]
        r = stats.metric_correlation(xs, ys, opts.correlation)
        out.append(Row(f"correlation:{a[0]}~{b[0]}", b[1],
                       fmt_config(kind=opts.correlation, x=f"{a[0]}/{a[1]}"), "all", len(common), r))

    if opts.recipe in ("stimulus", "distribution"):
        groups: Dict[Tuple[str, str, str], List[float]] = {}
        for r in rows:
            if r.metric in ("skewness", "excess_kurtosis"):
                groups.setdefault((r.metric, r.input_kind, r.config), []).append(r.value)
        for (metric, kind, cfg), vals in sorted(groups.items(),
                                                key=lambda kv: (float(parse_config(kv[0][2])["K"]),
                                                                kv[0][1], kv[0][0])):
            out.append(Row(metric, kind, cfg, "mean", len(vals), float(np.mean(vals))))
    return out
