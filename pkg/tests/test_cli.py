import json

import numpy as np
import pytest

from codeprobe.cli import main
from codeprobe.manifest import CSV_HEADER, read_report
from codeprobe.pipeline import SweepOptions, run_sweep, subseed
from codeprobe.probe import TrainerConfig


@pytest.fixture(scope="module")
def corpus_files(tmp_path_factory):
    d = tmp_path_factory.mktemp("corpus")
    assert main(["synth", "--out", str(d / "c"), "--codebook", "32", "--phonemes", "6",
                 "--speakers", "4", "--purity", "0.7", "--utts", "80", "--seed", "1"]) == 0
    return d / "c.codes", d / "c.align"


def run(args):
    return main([str(a) for a in args])


class TestSynth:
    def test_rerun_is_byte_identical(self, tmp_path):
        for name in ("a", "b"):
            assert main(["synth", "--out", str(tmp_path / name), "--utts", "20", "--seed", "1"]) == 0
        for ext in (".codes", ".align", ".channel.json"):
            assert (tmp_path / f"a{ext}").read_bytes() == (tmp_path / f"b{ext}").read_bytes()
        assert (tmp_path / "a.manifest.json").exists()


class TestEval:
    def test_report_schema_and_manifest(self, corpus_files, tmp_path):
        codes, align = corpus_files
        out = tmp_path / "r.csv"
        assert run(["eval", codes, align, "--make-triples", "--max-per-contrast", "10",
                    "--out", out]) == 0
        rows = read_report(out)
        assert out.read_text().splitlines()[0] == ",".join(CSV_HEADER)
        assert {r["metric"] for r in rows} == {"nmi", "dc_accuracy", "dc_cross_entropy", "rsa",
                                                "abx_accuracy", "abx_error_macro", "abx_error_micro"}
        manifest = json.loads((tmp_path / "r.csv.manifest.json").read_text())
        assert {r["run_id"] for r in rows} == {manifest["run_id"]}
        assert manifest["seeds"]["triples"] == subseed(0, "triples")

    def test_rerun_and_jobs_are_byte_identical(self, corpus_files, tmp_path):
        codes, align = corpus_files
        bodies = []
        for i, jobs in enumerate((1, 1, 3)):
            out = tmp_path / f"r{i}.csv"
            assert run(["eval", codes, align, "--make-triples", "--out", out, "--jobs", jobs]) == 0
            bodies.append(out.read_bytes())
        assert bodies[0] == bodies[1] == bodies[2]

    def test_seed_changes_run_id(self, corpus_files, tmp_path):
        codes, align = corpus_files
        ids = []
        for seed in (0, 1):
            out = tmp_path / f"s{seed}.csv"
            assert run(["eval", codes, align, "--metrics", "nmi", "--seed", seed, "--out", out]) == 0
            ids.append(read_report(out)[0]["run_id"])
        assert ids[0] != ids[1]

    def test_abx_needs_triples(self, corpus_files, capsys):
        codes, align = corpus_files
        assert run(["eval", codes, align]) == 1
        assert "--triples" in capsys.readouterr().err

    def test_triples_file_and_probe_reuse(self, corpus_files, tmp_path):
        codes, align = corpus_files
        triples = tmp_path / "t.tsv"
        assert run(["triples", align, codes, "--max-per-contrast", "10", "--out", triples]) == 0
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert run(["eval", codes, align, "--triples", triples, "--save-probe", tmp_path / "p.json",
                    "--out", a]) == 0
        assert run(["eval", codes, align, "--triples", triples, "--load-probe", tmp_path / "p.json",
                    "--out", b]) == 0
        va = {r["metric"]: r["value"] for r in read_report(a)}
        vb = {r["metric"]: r["value"] for r in read_report(b)}
        assert va == vb
        made = tmp_path / "m.csv"
        assert run(["eval", codes, align, "--make-triples", "--max-per-contrast", "10",
                    "--metrics", "abx", "--out", made]) == 0
        assert read_report(made)[0]["value"] == va["abx_accuracy"]

    def test_malformed_input_names_line(self, tmp_path, capsys):
        (tmp_path / "c").write_text("u\ts\t1 2\nv\ts\t1 q\n")
        (tmp_path / "a").write_text("u\tx\t0\t2\n")
        assert run(["eval", tmp_path / "c", tmp_path / "a", "--metrics", "nmi"]) == 1
        assert ":2:" in capsys.readouterr().err

    def test_stdout(self, corpus_files, capsys):
        codes, align = corpus_files
        assert run(["eval", codes, align, "--metrics", "nmi"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == ",".join(CSV_HEADER) and lines[1].split(",")[1] == "nmi"


class TestQuantizeCommand:
    def test_codes_file(self, tmp_path):
        (tmp_path / "cb").write_text("2 2\n0 0\n2 2\n")
        (tmp_path / "f").write_text("u1\ts1\n0 0\n2 2\n\nu2\ts2\n1.9 2.1\n")
        assert run(["quantize", tmp_path / "cb", tmp_path / "f", "--out", tmp_path / "o"]) == 0
        assert (tmp_path / "o").read_text() == "u1\ts1\t0 1\nu2\ts2\t1\n"


class TestSweepAndReport:
    def test_sweep_rerun_and_report(self, tmp_path):
        args = ["sweep", "codebook", "--codebook-sizes", "8,16,32", "--utts", "40", "--seeds", "2",
                "--phonemes", "5", "--epochs", "20"]
        assert run(args + ["--out", tmp_path / "a.csv"]) == 0
        assert run(args + ["--out", tmp_path / "b.csv", "--jobs", "2"]) == 0
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        rows = read_report(tmp_path / "a.csv")
        assert any(r["metric"] == "loess:nmi" for r in rows)
        assert run(["report", tmp_path / "a.csv", "--out", tmp_path / "r.csv"]) == 0
        assert run(["report", tmp_path / "a.csv", "--out", tmp_path / "r2.csv"]) == 0
        assert (tmp_path / "r.csv").read_bytes() == (tmp_path / "r2.csv").read_bytes()
        summary = read_report(tmp_path / "r.csv")
        assert any(r["metric"] == "mean:rsa" for r in summary)

    def test_plot(self, tmp_path):
        pytest.importorskip("matplotlib")
        assert run(["sweep", "purity", "--purities", "0,0.5,1", "--utts", "30", "--seeds", "1",
                    "--phonemes", "5", "--epochs", "5", "--out", tmp_path / "a.csv",
                    "--plot-dir", tmp_path / "plots"]) == 0
        assert (tmp_path / "plots" / "purity.png").stat().st_size > 0

    def test_unknown_recipe(self):
        with pytest.raises(SystemExit):
            main(["sweep", "nope"])


class TestPipeline:
    def test_distribution_recipe_rows(self):
        rows = run_sweep(SweepOptions(recipe="distribution", n_utterances=40, n_seeds=2,
                                      n_phonemes=5))
        means = [r for r in rows if r.seed == "mean"]
        assert {(r.metric, r.input_kind) for r in means} == {
            (m, k) for m in ("skewness", "excess_kurtosis") for k in ("complete", "triplet")}
        assert all(np.isfinite(r.value) for r in rows)


class TestDocumentedExamples:
    def test_perfect_channel_scores_one(self, tmp_path):
        assert run(["synth", "--out", tmp_path / "p", "--purity", "1.0", "--codebook", "39",
                    "--phonemes", "39", "--utts", "300"]) == 0
        assert run(["eval", tmp_path / "p.codes", tmp_path / "p.align", "--make-triples",
                    "--out", tmp_path / "r.csv"]) == 0
        values = {r["metric"]: float(r["value"]) for r in read_report(tmp_path / "r.csv")}
        for metric in ("nmi", "dc_accuracy", "rsa", "abx_accuracy"):
            assert values[metric] == pytest.approx(1.0, abs=1e-12), metric

    def test_random_codes_are_chance(self, tmp_path):
        assert run(["synth", "--out", tmp_path / "n", "--purity", "0", "--phonemes", "8",
                    "--utts", "300"]) == 0
        assert run(["eval", tmp_path / "n.codes", tmp_path / "n.align", "--make-triples",
                    "--metrics", "abx", "--out", tmp_path / "r.csv"]) == 0
        assert float(read_report(tmp_path / "r.csv")[0]["value"]) == pytest.approx(0.5, abs=0.03)

    def test_utterance_count(self, tmp_path):
        assert run(["synth", "--out", tmp_path / "c", "--utts", "5000", "--utt-length", "2", "3"]) == 0
        assert len((tmp_path / "c.codes").read_text().splitlines()) == 5000

    def test_toy_contrast_gives_two_triples(self, tmp_path):
        (tmp_path / "c").write_text("u1\ts\t0 1 2\nu2\ts\t0 1 2\nu3\ts\t0 3 2\n")
        (tmp_path / "a").write_text("".join(
            f"{u}\t{p}\t{i}\t{i + 1}\n" for u, mid in (("u1", "eh"), ("u2", "eh"), ("u3", "ae"))
            for i, p in enumerate(("b", mid, "g"))))
        assert run(["triples", tmp_path / "a", tmp_path / "c", "--out", tmp_path / "t"]) == 0
        lines = (tmp_path / "t").read_text().splitlines()
        assert len(lines) == 2 * 3
        assert {l.split("\t")[5] for l in lines[0::3]} == {"b eh g"}

    def test_cap_and_seed(self, corpus_files, tmp_path):
        codes, align = corpus_files
        outs = {}
        for seed in (0, 1):
            out = tmp_path / f"t{seed}"
            assert run(["triples", align, codes, "--max-per-contrast", "1", "--seed", seed,
                        "--out", out]) == 0
            outs[seed] = out.read_text().splitlines()
        ids = [l.split("\t")[0] for l in outs[0][0::3]]
        assert len(ids) == len(set(ids))
        assert outs[0] != outs[1]

    def test_no_contrasts_fails(self, tmp_path, capsys):
        (tmp_path / "c").write_text("u1\ts\t0 1 2\n")
        (tmp_path / "a").write_text("u1\tb\t0\t1\nu1\teh\t1\t2\nu1\tg\t2\t3\n")
        assert run(["triples", tmp_path / "a", tmp_path / "c"]) == 1
        assert "no minimal pairs" in capsys.readouterr().err

    def test_codebook_sweep_shape(self):
        rows = run_sweep(SweepOptions(recipe="codebook", n_utterances=40, n_phonemes=5,
                                      trainer=TrainerConfig(epochs=10)))
        cells = [r for r in rows if r.seed.isdigit()]
        assert len(cells) == 6 * 3 * 4
        assert any(r.metric.startswith("correlation:") for r in rows)
