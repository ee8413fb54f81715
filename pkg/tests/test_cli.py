import json
import random

import pytest

from fnmt.cli import run
from fnmt.osnmt import SRC_POP, generate_osm


def write(path, lines):
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def lines_of(path):
    return path.read_text(encoding="utf-8").splitlines()


class TestFactorizeRoundTrip:
    def test_casing_byte_identity(self, tmp_path):
        corpus = ["Das Treffen der NATO", "alle Wörter klein",
                  "GROSS Und gemischt"]
        src = tmp_path / "corpus.txt"
        write(src, corpus)
        assert run(["factorize", "--codec", "casing", "--in", str(src),
                    "--out-lemma", str(tmp_path / "l"),
                    "--out-factor", str(tmp_path / "f")]) == 0
        assert lines_of(tmp_path / "l") == [c.lower() for c in corpus]
        assert run(["defactorize", "--codec", "casing",
                    "--in-lemma", str(tmp_path / "l"),
                    "--in-factor", str(tmp_path / "f"),
                    "--out", str(tmp_path / "restored")]) == 0
        assert lines_of(tmp_path / "restored") == corpus

    def test_segmentation_byte_identity(self, tmp_path):
        corpus = ["▁Ein ▁Pilot versuch", "▁nur ▁ganze ▁Wörter"]
        write(tmp_path / "c", corpus)
        run(["factorize", "--codec", "segmentation",
             "--in", str(tmp_path / "c"),
             "--out-lemma", str(tmp_path / "l"),
             "--out-factor", str(tmp_path / "f")])
        run(["defactorize", "--codec", "segmentation",
             "--in-lemma", str(tmp_path / "l"),
             "--in-factor", str(tmp_path / "f"),
             "--out", str(tmp_path / "r")])
        assert lines_of(tmp_path / "r") == corpus

    def test_mismatched_streams_exit_one(self, tmp_path, capsys):
        write(tmp_path / "l", ["a b"])
        write(tmp_path / "f", ["l"])
        code = run(["defactorize", "--codec", "casing",
                    "--in-lemma", str(tmp_path / "l"),
                    "--in-factor", str(tmp_path / "f"),
                    "--out", str(tmp_path / "r")])
        assert code == 1
        assert "error" in capsys.readouterr().err

    def test_missing_file_exit_two(self, tmp_path):
        assert run(["factorize", "--codec", "casing",
                    "--in", str(tmp_path / "nope"),
                    "--out-lemma", str(tmp_path / "l"),
                    "--out-factor", str(tmp_path / "f")]) == 2


class TestOsmCommands:
    def test_generate_compile_round_trip(self, tmp_path):
        rng = random.Random(0)
        srcs, tgts, als = [], [], []
        for _ in range(20):
            sl, tl = rng.randint(1, 6), rng.randint(1, 6)
            srcs.append(" ".join("s%d" % i for i in range(sl)))
            tgts.append(" ".join("w%d" % rng.randint(0, 4) for _ in range(tl)))
            als.append(" ".join("%d-%d" % (rng.randrange(sl), t)
                                for t in range(tl)))
        write(tmp_path / "src", srcs)
        write(tmp_path / "tgt", tgts)
        write(tmp_path / "al", als)
        assert run(["osm", "generate", "--target", str(tmp_path / "tgt"),
                    "--alignment", str(tmp_path / "al"),
                    "--src", str(tmp_path / "src"),
                    "--out", str(tmp_path / "ops")]) == 0
        assert run(["osm", "compile", "--ops", str(tmp_path / "ops"),
                    "--src", str(tmp_path / "src"),
                    "--out-target", str(tmp_path / "tgt2"),
                    "--out-alignment", str(tmp_path / "al2")]) == 0
        assert lines_of(tmp_path / "tgt2") == tgts
        for before, after in zip(als, lines_of(tmp_path / "al2")):
            assert set(before.split()) == set(after.split())

    def test_factor_defactor_round_trip(self, tmp_path):
        ops = [" ".join(generate_osm(["a", "b"], {(1, 0), (0, 1)}, 2)),
               "a SRC_POP SRC_POP b SRC_POP"]
        write(tmp_path / "ops", ops)
        run(["osm", "factor", "--ops", str(tmp_path / "ops"),
             "--out-ops", str(tmp_path / "o"),
             "--out-pops", str(tmp_path / "p")])
        # every op line ends with the sentinel and pop counts line up
        for line in lines_of(tmp_path / "o"):
            assert line.split()[-1] == "</s>"
        run(["osm", "defactor", "--ops", str(tmp_path / "o"),
             "--pops", str(tmp_path / "p"),
             "--out", str(tmp_path / "r")])
        assert lines_of(tmp_path / "r") == ops

    def test_filter_drops_long_runs(self, tmp_path):
        ops = ["a " + " ".join([SRC_POP] * 11),
               "a " + " ".join([SRC_POP] * 10)]
        write(tmp_path / "ops", ops)
        run(["osm", "filter", "--ops", str(tmp_path / "ops"),
             "--out", str(tmp_path / "kept"),
             "--report", str(tmp_path / "rep")])
        assert lines_of(tmp_path / "kept") == [ops[1]]
        assert lines_of(tmp_path / "rep") == ["1\tpop-run"]


class TestFilterCommand:
    def test_report_file_format(self, tmp_path, capsys):
        write(tmp_path / "src", ["ab", "a good source line"])
        write(tmp_path / "tgt", ["a good target line", "a good target line"])
        code = run(["filter", "--src", str(tmp_path / "src"),
                    "--tgt", str(tmp_path / "tgt"),
                    "--out-src", str(tmp_path / "ks"),
                    "--out-tgt", str(tmp_path / "kt"),
                    "--report", str(tmp_path / "rep")])
        assert code == 0
        assert lines_of(tmp_path / "rep") == ["1\tmin-chars"]
        assert lines_of(tmp_path / "ks") == ["a good source line"]
        assert "kept 1/2" in capsys.readouterr().out

    def test_test_set_overlap(self, tmp_path):
        write(tmp_path / "test", ["t1 t2 t3 t4 t5 t6 t7 t8"])
        write(tmp_path / "src", ["pre t1 t2 t3 t4 t5 t6 t7 t8 post",
                                 "a clean line here"])
        write(tmp_path / "tgt", ["a target line", "another target line"])
        run(["filter", "--src", str(tmp_path / "src"),
             "--tgt", str(tmp_path / "tgt"),
             "--test", str(tmp_path / "test"),
             "--out-src", str(tmp_path / "ks")])
        assert lines_of(tmp_path / "ks") == ["a clean line here"]


class TestVocabCommand:
    def test_build_and_reserved_rows(self, tmp_path):
        write(tmp_path / "c", ["b a a"])
        run(["vocab", "--in", str(tmp_path / "c"), "--size", "6",
             "--out", str(tmp_path / "v")])
        assert lines_of(tmp_path / "v") == \
            ["<pad>", "<s>", "</s>", "<unk>", "a", "b"]


class TestEvalCommand:
    def test_identity_is_100(self, tmp_path, capsys):
        write(tmp_path / "hyp", ["a b c d e", "x y z w v"])
        assert run(["eval", "--hyp", str(tmp_path / "hyp"),
                    "--ref", str(tmp_path / "hyp")]) == 0
        assert capsys.readouterr().out.strip() == "BLEU = 100.00"

    def test_fixture_value(self, tmp_path, capsys):
        write(tmp_path / "hyp", ["a b c d e"])
        write(tmp_path / "ref", ["a b c d f"])
        run(["eval", "--hyp", str(tmp_path / "hyp"),
             "--ref", str(tmp_path / "ref")])
        assert capsys.readouterr().out.strip() == "BLEU = 66.87"


class TestStatsCommand:
    def test_casing(self, tmp_path, capsys):
        write(tmp_path / "c", ["Treffen treffen NATO"])
        run(["stats", "--in", str(tmp_path / "c"), "--application", "casing"])
        stats = json.loads(capsys.readouterr().out)
        assert stats["surface_vocab"] == 3
        assert stats["lemma_vocab"] == 2

    def test_osnmt_histogram(self, tmp_path, capsys):
        write(tmp_path / "c", ["a " + " ".join([SRC_POP] * 11),
                               "a SRC_POP"])
        run(["stats", "--in", str(tmp_path / "c"), "--application", "osnmt"])
        stats = json.loads(capsys.readouterr().out)
        assert stats["pop_run_histogram"] == {"1": 1, "11": 1}
        assert stats["over_limit"] == 1


class TestConfigFile:
    def test_defaults_from_json(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"max-words": 3}), encoding="utf-8")
        write(tmp_path / "src", ["one two three four", "one two three"])
        write(tmp_path / "tgt", ["a target line x", "a target side"])
        run(["--config", str(cfg), "filter",
             "--src", str(tmp_path / "src"), "--tgt", str(tmp_path / "tgt"),
             "--out-src", str(tmp_path / "ks")])
        assert lines_of(tmp_path / "ks") == ["one two three"]

    def test_explicit_flag_beats_config(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"max-words": 3}), encoding="utf-8")
        write(tmp_path / "src", ["one two three four"])
        write(tmp_path / "tgt", ["a target line x"])
        run(["--config", str(cfg), "filter",
             "--src", str(tmp_path / "src"), "--tgt", str(tmp_path / "tgt"),
             "--max-words", "10",
             "--out-src", str(tmp_path / "ks")])
        assert lines_of(tmp_path / "ks") == ["one two three four"]

    def test_bad_config_exit_one(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text("[1, 2]", encoding="utf-8")
        write(tmp_path / "hyp", ["a"])
        assert run(["--config", str(cfg), "eval",
                    "--hyp", str(tmp_path / "hyp"),
                    "--ref", str(tmp_path / "hyp")]) == 1


@pytest.mark.slow
class TestTrainDecode:
    def test_end_to_end_casing_copy(self, tmp_path, capsys):
        rng = random.Random(0)
        words = ["alpha", "beta", "gamma", "delta"]
        shapes = [str.lower, str.capitalize, str.upper]
        corpus = []
        for _ in range(200):
            corpus.append(" ".join(
                shapes[rng.randrange(3)](rng.choice(words))
                for _ in range(rng.randint(1, 4))))
        write(tmp_path / "surface", corpus)
        run(["factorize", "--codec", "casing",
             "--in", str(tmp_path / "surface"),
             "--out-lemma", str(tmp_path / "lemma"),
             "--out-factor", str(tmp_path / "factor")])
        args = ["train",
                "--src", str(tmp_path / "lemma"),
                "--tgt-lemma", str(tmp_path / "lemma"),
                "--tgt-factor", str(tmp_path / "factor"),
                "--val-src", str(tmp_path / "lemma"),
                "--val-tgt-lemma", str(tmp_path / "lemma"),
                "--val-tgt-factor", str(tmp_path / "factor"),
                "--application", "casing",
                "--steps", "300", "--embed-dim", "16", "--hidden-dim", "24",
                "--out", str(tmp_path / "model")]
        assert run(args) == 0
        log = [json.loads(line) for line in
               capsys.readouterr().out.splitlines()]
        assert log and log[-1]["step"] == 300
        assert (tmp_path / "model" / "manifest.json").exists()
        assert (tmp_path / "model" / "weights.bin").exists()

        write(tmp_path / "in", ["alpha beta"])
        assert run(["decode", "--model", str(tmp_path / "model"),
                    "--input", str(tmp_path / "in"),
                    "--beam", "4",
                    "--output", str(tmp_path / "out")]) == 0
        out = lines_of(tmp_path / "out")
        assert len(out) == 1
        assert all(w.lower() in words for w in out[0].split())
