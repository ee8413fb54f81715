"""Operation-sequence compiler, interpreter and SRC_POP factoring.

An operation sequence is a list of strings. Four names are reserved as
control operations; every other string is a plain target token:

    SET_MARKER  insert a marker cell at the write gap
    JMP_FWD     move the gap to the nearest marker to its right
    JMP_BWD     move the gap to the nearest marker to its left
    SRC_POP     advance the read head to the next source word

Interpreting a sequence against a source length yields the plain target
sentence plus one alignment link per target word: each inserted token is
linked to the source position under the read head at insertion time.
Generation is the inverse; round-trip exactness is the correctness
contract between the two.

Factoring removes SRC_POP from the first-factor stream and attaches the
length of the preceding pop run to the following operation as an integer
second factor; trailing pops attach to the end-of-sequence sentinel.
"""

SET_MARKER = "SET_MARKER"
JMP_FWD = "JMP_FWD"
JMP_BWD = "JMP_BWD"
SRC_POP = "SRC_POP"
EOS = "</s>"

RESERVED_OPS = frozenset((SET_MARKER, JMP_FWD, JMP_BWD, SRC_POP))

DEFAULT_MAX_POPS = 10

_MARKER = object()  # marker cell in the interpreter buffer


class OsmError(ValueError):
    """Ill-formed operation sequence or alignment."""


def interpret_osm(ops, src_len):
    """Compile an operation sequence into (target tokens, alignment links).

    Raises OsmError (with the offending op index) on: a token or SRC_POP
    past the last source word, a jump with no marker in its direction, or
    a total pop count different from src_len.
    """
    if src_len < 1:
        raise OsmError("source length must be >= 1")
    buf = []  # cells: _MARKER or [word, src_pos]
    gap = 0
    read = 0
    pops = 0
    for i, op in enumerate(ops):
        if op == SRC_POP:
            if read >= src_len:
                raise OsmError("op %d: SRC_POP past last source word" % i)
            read += 1
            pops += 1
        elif op == SET_MARKER:
            buf.insert(gap, _MARKER)
            gap += 1
        elif op == JMP_BWD:
            pos = gap - 1
            while pos >= 0 and buf[pos] is not _MARKER:
                pos -= 1
            if pos < 0:
                raise OsmError("op %d: JMP_BWD with no marker to the left" % i)
            gap = pos
        elif op == JMP_FWD:
            pos = gap + 1
            while pos < len(buf) and buf[pos] is not _MARKER:
                pos += 1
            if pos >= len(buf):
                raise OsmError("op %d: JMP_FWD with no marker to the right" % i)
            gap = pos
        else:
            if read >= src_len:
                raise OsmError("op %d: token %r past last source word" % (i, op))
            buf.insert(gap, [op, read])
            gap += 1
    if pops != src_len:
        raise OsmError(
            "sequence pops %d source words, source has %d" % (pops, src_len)
        )
    target = []
    links = set()
    for cell in buf:
        if cell is not _MARKER:
            links.add((cell[1], len(target)))
            target.append(cell[0])
    return target, links


def canonicalize_alignment(links, src_len, tgt_len):
    """Reduce an alignment to one source link per target word.

    A target word aligned to several source words keeps the smallest
    source index. Unaligned target words inherit the link of the nearest
    preceding aligned word, else the nearest following, else source 0.
    Returns the per-target-position source index list.
    """
    t2s = [None] * tgt_len
    for s, t in links:
        if not (0 <= s < src_len) or not (0 <= t < tgt_len):
            raise OsmError("alignment link (%d, %d) out of range" % (s, t))
        if t2s[t] is None or s < t2s[t]:
            t2s[t] = s
    prev = None
    for t in range(tgt_len):
        if t2s[t] is None:
            t2s[t] = prev
        else:
            prev = t2s[t]
    nxt = 0
    for t in range(tgt_len - 1, -1, -1):
        if t2s[t] is None:
            t2s[t] = nxt
        else:
            nxt = t2s[t]
    return t2s


def generate_osm(target, links, src_len):
    """Build an operation sequence producing the given target and alignment.

    The returned sequence contains exactly src_len SRC_POP ops and
    round-trips through interpret_osm to (target, canonicalized links).
    Strictly monotone alignments yield marker- and jump-free programs.
    """
    target = list(target)
    if not target:
        raise OsmError("target must be non-empty")
    if src_len < 1:
        raise OsmError("source length must be >= 1")
    for w in target:
        if w in RESERVED_OPS:
            raise OsmError("target word %r collides with a reserved op" % (w,))
    t2s = canonicalize_alignment(links, src_len, len(target))
    by_src = [[] for _ in range(src_len)]
    for t, s in enumerate(t2s):
        by_src[s].append(t)

    # Simulate the interpreter buffer: cells are either the marker object
    # or the final target position of an inserted token.
    buf = []
    gap = 0
    ops = []
    emitted = [False] * len(target)

    def slot_range(p):
        # Contiguous range of buffer indices where a token with final
        # position p may be inserted (only markers lie strictly inside).
        lo, hi = 0, len(buf)
        for i, cell in enumerate(buf):
            if cell is _MARKER:
                continue
            if cell < p:
                lo = i + 1
            else:
                hi = i
                break
        return lo, hi

    def gap_slot_needs_marker():
        # True if the slot currently holding the gap still has unemitted
        # target positions and no marker cell to anchor them.
        left_pos, right_pos = -1, len(target)
        slot_lo, slot_hi = 0, len(buf)
        for i in range(gap - 1, -1, -1):
            if buf[i] is not _MARKER:
                left_pos, slot_lo = buf[i], i + 1
                break
        for i in range(gap, len(buf)):
            if buf[i] is not _MARKER:
                right_pos, slot_hi = buf[i], i
                break
        if not any(not emitted[q] for q in range(left_pos + 1, right_pos)):
            return False
        return not any(buf[i] is _MARKER for i in range(slot_lo, slot_hi))

    for s in range(src_len):
        for p in by_src[s]:
            lo, hi = slot_range(p)
            if gap < lo or gap > hi:
                if gap_slot_needs_marker():
                    buf.insert(gap, _MARKER)
                    gap += 1
                    ops.append(SET_MARKER)
                    lo, hi = slot_range(p)
                step = 1 if gap < lo else -1
                op = JMP_FWD if step > 0 else JMP_BWD
                while gap < lo or gap > hi:
                    pos = gap + step
                    while 0 <= pos < len(buf) and buf[pos] is not _MARKER:
                        pos += step
                    assert 0 <= pos < len(buf), "unreachable slot in generation"
                    ops.append(op)
                    gap = pos
                assert lo <= gap <= hi
            # A skipped run of unemitted positions left of p needs its own
            # marker before p shifts any marker at the gap to its right.
            left_pos = -1
            for i in range(gap - 1, -1, -1):
                if buf[i] is not _MARKER:
                    left_pos = buf[i]
                    break
            skipped = any(not emitted[q] for q in range(left_pos + 1, p))
            if skipped and not any(buf[i] is _MARKER for i in range(lo, gap)):
                buf.insert(gap, _MARKER)
                gap += 1
                ops.append(SET_MARKER)
            buf.insert(gap, p)
            gap += 1
            ops.append(target[p])
            emitted[p] = True
        ops.append(SRC_POP)
    return ops


def factor_osm(ops, max_pops=DEFAULT_MAX_POPS):
    """Factor an op sequence into (op, preceding-pop-count) pairs.

    SRC_POP ops are dropped from the first factor; each remaining op
    carries the length of the pop run immediately before it, and trailing
    pops attach to the end-of-sequence sentinel. A run longer than
    max_pops raises OsmError.
    """
    out = []
    run = 0
    run_start = 0
    for i, op in enumerate(ops):
        if op == SRC_POP:
            if run == 0:
                run_start = i
            run += 1
            if run > max_pops:
                raise OsmError(
                    "SRC_POP run starting at op %d exceeds %d" % (run_start, max_pops)
                )
        else:
            out.append((op, run))
            run = 0
    out.append((EOS, run))
    return out


def defactor_osm(pairs, max_pops=DEFAULT_MAX_POPS):
    """Inverse of factor_osm: re-insert SRC_POP runs and drop the sentinel."""
    pairs = list(pairs)
    if not pairs or pairs[-1][0] != EOS:
        raise OsmError("factored sequence must end with the %s sentinel" % EOS)
    ops = []
    for i, (y1, pops) in enumerate(pairs):
        if y1 == EOS and i != len(pairs) - 1:
            raise OsmError("pair %d: %s sentinel before end of sequence" % (i, EOS))
        if not (0 <= pops <= max_pops):
            raise OsmError("pair %d: pop count %r out of [0, %d]" % (i, pops, max_pops))
        ops.extend([SRC_POP] * pops)
        if y1 != EOS:
            ops.append(y1)
    return ops


def subword_encode_osm(ops, segmenter):
    """Replace each plain token by its marked subwords; keep control ops.

    The segmenter maps a word to a non-empty list of subword pieces. A
    piece equal to a reserved op name would corrupt the program and is
    rejected.
    """
    out = []
    for op in ops:
        if op in RESERVED_OPS:
            out.append(op)
            continue
        pieces = list(segmenter(op))
        if not pieces:
            raise OsmError("segmenter returned no pieces for %r" % (op,))
        for piece in pieces:
            if piece in RESERVED_OPS:
                raise OsmError(
                    "segmenter emitted reserved op %r for word %r" % (piece, op)
                )
            out.append(piece)
    return out


def max_pop_run(ops):
    """Length of the longest run of consecutive SRC_POP ops."""
    best = run = 0
    for op in ops:
        if op == SRC_POP:
            run += 1
            best = max(best, run)
        else:
            run = 0
    return best


def pop_run_filter(ops, max_run=DEFAULT_MAX_POPS):
    """True (keep) iff no SRC_POP run is longer than max_run."""
    return max_pop_run(ops) <= max_run


def parse_alignment_line(line):
    """Parse a 's-t s-t ...' alignment line into a set of 0-based links."""
    links = set()
    for part in line.split():
        try:
            s, t = part.split("-")
            links.add((int(s), int(t)))
        except ValueError:
            raise OsmError("bad alignment pair: %r" % (part,)) from None
    return links


def format_alignment(links):
    """Serialize links as sorted 's-t' pairs."""
    return " ".join("%d-%d" % link for link in sorted(links))
