import itertools
import random

import pytest
from hypothesis import given, settings, strategies as st

from fnmt.osnmt import (
    EOS, JMP_BWD, JMP_FWD, SET_MARKER, SRC_POP, OsmError,
    canonicalize_alignment, defactor_osm, factor_osm, format_alignment,
    generate_osm, interpret_osm, max_pop_run, parse_alignment_line,
    pop_run_filter, subword_encode_osm)


class TestInterpret:
    def test_monotone(self):
        target, links = interpret_osm(["A", SRC_POP, "B", SRC_POP], 2)
        assert target == ["A", "B"]
        assert links == {(0, 0), (1, 1)}

    def test_reordering(self):
        ops = [SET_MARKER, "A", SRC_POP, JMP_BWD, "B", SRC_POP]
        target, links = interpret_osm(ops, 2)
        assert target == ["B", "A"]
        assert links == {(0, 1), (1, 0)}

    def test_jump_without_marker(self):
        with pytest.raises(OsmError, match="op 0"):
            interpret_osm([JMP_FWD], 1)
        with pytest.raises(OsmError, match="JMP_BWD"):
            interpret_osm(["A", JMP_BWD, SRC_POP], 1)

    def test_pop_past_end(self):
        with pytest.raises(OsmError, match="SRC_POP past"):
            interpret_osm([SRC_POP, SRC_POP], 1)

    def test_token_past_end(self):
        with pytest.raises(OsmError, match="past last source"):
            interpret_osm([SRC_POP, "A"], 1)

    def test_missing_pops(self):
        with pytest.raises(OsmError, match="pops 1"):
            interpret_osm(["A", SRC_POP], 2)


class TestGenerate:
    def test_monotone_is_marker_free(self):
        ops = generate_osm(["A", "B"], {(0, 0), (1, 1)}, 2)
        assert ops == ["A", SRC_POP, "B", SRC_POP]

    def test_swap(self):
        ops = generate_osm(["B", "A"], {(0, 1), (1, 0)}, 2)
        assert ops == [SET_MARKER, "A", SRC_POP, JMP_BWD, "B", SRC_POP]

    def test_out_of_range_link(self):
        with pytest.raises(OsmError, match="out of range"):
            generate_osm(["A"], {(3, 0)}, 2)

    def test_reserved_target_word(self):
        with pytest.raises(OsmError, match="reserved"):
            generate_osm([SRC_POP], {(0, 0)}, 1)

    def test_exhaustive_round_trip_short(self):
        for src_len in range(1, 5):
            for tgt_len in range(1, 5):
                target = ["w%d" % i for i in range(tgt_len)]
                for t2s in itertools.product(range(src_len), repeat=tgt_len):
                    links = {(s, t) for t, s in enumerate(t2s)}
                    ops = generate_osm(target, links, src_len)
                    assert ops.count(SRC_POP) == src_len
                    assert interpret_osm(ops, src_len) == (target, links)

    def test_random_round_trip(self):
        rng = random.Random(0)
        for _ in range(2000):
            src_len = rng.randint(1, 12)
            tgt_len = rng.randint(1, 12)
            target = ["w%d" % i for i in range(tgt_len)]
            links = {(rng.randrange(src_len), t) for t in range(tgt_len)}
            ops = generate_osm(target, links, src_len)
            assert interpret_osm(ops, src_len) == (target, links)

    def test_many_to_many_and_unaligned(self):
        rng = random.Random(1)
        for _ in range(500):
            src_len = rng.randint(1, 8)
            tgt_len = rng.randint(1, 8)
            target = [rng.choice("abc") for _ in range(tgt_len)]
            links = {(rng.randrange(src_len), t)
                     for t in range(tgt_len) for _ in range(rng.randint(0, 2))}
            canon = canonicalize_alignment(links, src_len, tgt_len)
            expected = {(s, t) for t, s in enumerate(canon)}
            ops = generate_osm(target, links, src_len)
            assert interpret_osm(ops, src_len) == (target, expected)


class TestCanonicalize:
    def test_keeps_smallest_source(self):
        assert canonicalize_alignment({(2, 0), (0, 0)}, 3, 1) == [0]

    def test_unaligned_inherits_left_then_right(self):
        assert canonicalize_alignment({(1, 1)}, 3, 3) == [1, 1, 1]
        assert canonicalize_alignment({(2, 2)}, 3, 3) == [2, 2, 2]

    def test_fully_unaligned_defaults_to_zero(self):
        assert canonicalize_alignment(set(), 3, 2) == [0, 0]


class TestFactoring:
    def test_monotone(self):
        ops = ["A", SRC_POP, "B", SRC_POP]
        assert factor_osm(ops) == [("A", 0), ("B", 1), (EOS, 1)]

    def test_with_jumps(self):
        ops = [SET_MARKER, "A", SRC_POP, JMP_BWD, "B", SRC_POP]
        pairs = factor_osm(ops)
        assert pairs == [(SET_MARKER, 0), ("A", 0), (JMP_BWD, 1), ("B", 0),
                         (EOS, 1)]
        assert defactor_osm(pairs) == ops

    def test_length_identity(self):
        ops = ["A", SRC_POP, SRC_POP, "B", SRC_POP]
        assert len(factor_osm(ops)) == len(ops) - ops.count(SRC_POP) + 1

    def test_capacity(self):
        assert factor_osm([SRC_POP] * 10 + ["A"], 10)[0] == ("A", 10)
        with pytest.raises(OsmError, match="exceeds 10"):
            factor_osm([SRC_POP] * 11 + ["A"], 10)

    def test_defactor_empty_program(self):
        assert defactor_osm([(EOS, 0)]) == []

    def test_defactor_requires_sentinel(self):
        with pytest.raises(OsmError, match="sentinel"):
            defactor_osm([("A", 0)])
        with pytest.raises(OsmError, match="before end"):
            defactor_osm([(EOS, 0), ("A", 0), (EOS, 0)])

    def test_defactor_pop_bounds(self):
        with pytest.raises(OsmError, match="out of"):
            defactor_osm([("A", 11), (EOS, 0)])
        with pytest.raises(OsmError, match="out of"):
            defactor_osm([("A", -1), (EOS, 0)])

    @given(st.lists(st.sampled_from(["A", "B", SET_MARKER, JMP_FWD, JMP_BWD,
                                     SRC_POP]), max_size=40))
    @settings(max_examples=300)
    def test_bijection(self, ops):
        # bound pop runs so factoring is defined
        if max_pop_run(ops) > 10:
            return
        assert defactor_osm(factor_osm(ops)) == ops


class TestSubwordEncode:
    def test_compound(self):
        seg = {"Pilotversuch": ["▁Pilot", "versuch"]}.get
        ops = subword_encode_osm(["Pilotversuch", SRC_POP],
                                 lambda w: seg(w, ["▁" + w]))
        assert ops == ["▁Pilot", "versuch", SRC_POP]

    def test_identity_segmenter(self):
        ops = [SET_MARKER, "A", SRC_POP, JMP_BWD, "B", SRC_POP]
        assert subword_encode_osm(ops, lambda w: [w]) == ops

    def test_reserved_piece_rejected(self):
        with pytest.raises(OsmError, match="reserved"):
            subword_encode_osm(["A", SRC_POP], lambda w: [SRC_POP])

    def test_word_alignment_recoverable(self):
        # subwords of a word inherit the word's source link
        rng = random.Random(2)
        for _ in range(200):
            src_len = rng.randint(1, 6)
            tgt_len = rng.randint(1, 6)
            target = ["w%d" % rng.randint(0, 3) for _ in range(tgt_len)]
            links = {(rng.randrange(src_len), t) for t in range(tgt_len)}
            ops = generate_osm(target, links, src_len)

            def segment(w):
                return ["▁" + w[: len(w) // 2 + 1], w[len(w) // 2 + 1:]] \
                    if len(w) > 1 else ["▁" + w]
            sub_ops = subword_encode_osm(ops, segment)
            sub_target, sub_links = interpret_osm(sub_ops, src_len)
            # rejoin subwords into words and map links back
            words, word_of = [], []
            for piece in sub_target:
                if piece.startswith("▁"):
                    words.append(piece[1:])
                else:
                    words[-1] += piece
                word_of.append(len(words) - 1)
            assert words == target
            assert {(s, word_of[t]) for s, t in sub_links} == links


class TestPopRunFilter:
    @pytest.mark.parametrize("run,keep", [(0, True), (10, True), (11, False)])
    def test_threshold(self, run, keep):
        ops = ["A"] + [SRC_POP] * run + ["B"]
        assert pop_run_filter(ops, 10) is keep


class TestAlignmentFormat:
    def test_round_trip(self):
        links = {(0, 1), (2, 0)}
        assert parse_alignment_line(format_alignment(links)) == links

    def test_bad_pair(self):
        with pytest.raises(OsmError):
            parse_alignment_line("1-2 x")
