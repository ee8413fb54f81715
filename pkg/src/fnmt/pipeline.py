"""Corpus preparation and evaluation.

Heuristic parallel-corpus filters (character/word-count bounds, length
ratio, n-gram overlap with test data, optional pop-run bound for
operation-sequence targets), vocabulary construction, a greedy fallback
segmenter for tests, and corpus BLEU.
"""

import logging
import math
from collections import Counter

from . import osnmt
from .factor_codecs import BOUNDARY_MARKER, CodecError

log = logging.getLogger(__name__)

RESERVED_TOKENS = ("<pad>", "<s>", "</s>", "<unk>")


class PipelineError(ValueError):
    """Invalid pipeline input."""


class Vocab:
    """Token list with line number = id; ids 0-3 are pad/bos/eos/unk."""

    PAD, BOS, EOS, UNK = 0, 1, 2, 3

    def __init__(self, tokens):
        self.tokens = list(tokens)
        if tuple(self.tokens[:4]) != RESERVED_TOKENS:
            raise PipelineError("vocab must start with the reserved tokens")
        self._ids = {tok: i for i, tok in enumerate(self.tokens)}

    def __len__(self):
        return len(self.tokens)

    def id(self, token):
        return self._ids.get(token, self.UNK)

    def token(self, idx):
        return self.tokens[idx]

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as f:
            return cls([line.rstrip("\n") for line in f])

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            for tok in self.tokens:
                f.write(tok + "\n")


def build_vocab(lines, size):
    """Most frequent tokens (ties lexicographic) behind the reserved ids."""
    if size < len(RESERVED_TOKENS) + 1:
        raise PipelineError("vocab size must be >= 5")
    counts = Counter()
    for line in lines:
        counts.update(line.split())
    for tok in RESERVED_TOKENS:
        counts.pop(tok, None)
    if not counts:
        raise PipelineError("empty corpus")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    kept = [tok for tok, _ in ranked[: size - len(RESERVED_TOKENS)]]
    return Vocab(list(RESERVED_TOKENS) + kept)


# ---- filtering -----------------------------------------------------------

def filter_pair(src, tgt, min_chars=2, max_words=79, max_ratio=4.0):
    """None (keep) or the id of the first violated rule.

    Keeps a pair iff both sides have more than min_chars characters
    (Unicode scalars, newline excluded), at most max_words space-separated
    words, and word counts within a factor of max_ratio of each other.
    """
    src = src.rstrip("\n")
    tgt = tgt.rstrip("\n")
    if len(src) <= min_chars or len(tgt) <= min_chars:
        return "min-chars"
    ns, nt = len(src.split()), len(tgt.split())
    if ns == 0 or nt == 0:
        return "min-chars"
    if ns > max_words or nt > max_words:
        return "max-words"
    if max(ns, nt) > max_ratio * min(ns, nt):
        return "length-ratio"
    return None


def line_ngrams(line, n):
    toks = line.split()
    return {tuple(toks[i:i + n]) for i in range(len(toks) - n + 1)}


def build_test_ngrams(test_lines, n=8):
    grams = set()
    for line in test_lines:
        grams |= line_ngrams(line.rstrip("\n"), n)
    return grams


class FilterReport:
    """Per-rule keep/reject bookkeeping; serializable as 'lineno<TAB>rule'."""

    def __init__(self):
        self.total = 0
        self.kept = 0
        self.rejected = Counter()
        self.lines = []  # (1-based lineno, rule)

    def keep(self):
        self.total += 1
        self.kept += 1

    def reject(self, lineno, rule):
        self.total += 1
        self.rejected[rule] += 1
        self.lines.append((lineno, rule))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            for lineno, rule in self.lines:
                f.write("%d\t%s\n" % (lineno, rule))

    def as_dict(self):
        return {"total": self.total, "kept": self.kept,
                "rejected": dict(self.rejected)}


def filter_corpus(src_lines, tgt_lines, test_lines=None, min_chars=2,
                  max_words=79, max_ratio=4.0, ngram=8, langid_keep=None,
                  pop_run=None):
    """Apply all filters in order; returns (kept pairs, FilterReport).

    test_lines feed the n-gram overlap filter (both sides checked);
    langid_keep is an optional per-line boolean sidecar; pop_run, when
    set, rejects target operation sequences with longer SRC_POP runs.
    Filtering is order-preserving and idempotent.
    """
    src_lines = [l.rstrip("\n") for l in src_lines]
    tgt_lines = [l.rstrip("\n") for l in tgt_lines]
    if len(src_lines) != len(tgt_lines):
        raise PipelineError("source/target line counts differ")
    grams = None
    if test_lines is not None:
        grams = build_test_ngrams(test_lines, ngram)
        if not grams:
            log.warning("empty test set: n-gram overlap filter is a no-op")
    report = FilterReport()
    kept = []
    for i, (src, tgt) in enumerate(zip(src_lines, tgt_lines)):
        lineno = i + 1
        rule = filter_pair(src, tgt, min_chars, max_words, max_ratio)
        if rule is None and langid_keep is not None and not langid_keep[i]:
            rule = "langid"
        if rule is None and grams:
            if (line_ngrams(src, ngram) & grams or
                    line_ngrams(tgt, ngram) & grams):
                rule = "ngram-overlap"
        if rule is None and pop_run is not None:
            if not osnmt.pop_run_filter(tgt.split(), pop_run):
                rule = "pop-run"
        if rule is None:
            report.keep()
            kept.append((src, tgt))
        else:
            report.reject(lineno, rule)
    return kept, report


# ---- fallback segmenter --------------------------------------------------

def fallback_segment(word, lexicon):
    """Greedy longest-match segmentation with character fallback.

    Stand-in for an external subword segmenter: splits a word against a
    seed lexicon, marks the first piece with the boundary marker, and
    guarantees the pieces rejoin to the word.
    """
    if not word:
        raise PipelineError("cannot segment empty word")
    if BOUNDARY_MARKER in word:
        raise CodecError("word already carries a boundary marker")
    pieces = []
    pos = 0
    max_len = max((len(w) for w in lexicon), default=1)
    while pos < len(word):
        for length in range(min(max_len, len(word) - pos), 0, -1):
            if word[pos:pos + length] in lexicon:
                pieces.append(word[pos:pos + length])
                pos += length
                break
        else:
            pieces.append(word[pos])
            pos += 1
    pieces[0] = BOUNDARY_MARKER + pieces[0]
    return pieces


def make_segmenter(lexicon):
    lexicon = set(lexicon)
    return lambda word: fallback_segment(word, lexicon)


# ---- BLEU ----------------------------------------------------------------

def bleu(hypotheses, references, max_n=4):
    """Case-sensitive corpus BLEU in [0, 1].

    Geometric mean of modified n-gram precisions for n = 1..max_n times
    the brevity penalty; tokens as given, no smoothing (any zero
    precision yields 0).
    """
    hypotheses = list(hypotheses)
    references = list(references)
    if len(hypotheses) != len(references):
        raise PipelineError("hypothesis/reference line counts differ")
    matches = [0] * max_n
    totals = [0] * max_n
    hyp_len = ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        h = hyp.split()
        r = ref.split()
        hyp_len += len(h)
        ref_len += len(r)
        for n in range(1, max_n + 1):
            h_counts = Counter(tuple(h[i:i + n]) for i in range(len(h) - n + 1))
            r_counts = Counter(tuple(r[i:i + n]) for i in range(len(r) - n + 1))
            totals[n - 1] += max(len(h) - n + 1, 0)
            matches[n - 1] += sum(min(c, r_counts[g]) for g, c in h_counts.items())
    if hyp_len == 0:
        return 0.0
    if any(m == 0 for m in matches) or any(t == 0 for t in totals):
        return 0.0
    log_prec = sum(math.log(m / t) for m, t in zip(matches, totals)) / max_n
    bp = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    return bp * math.exp(log_prec)
