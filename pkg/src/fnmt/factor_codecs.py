"""Casing and subword-segmentation factor codecs.

Both codecs split a surface token into a first-factor token (lower-cased
word or bare subword) and a small categorical factor. The conversions are
deterministic and, outside the documented mixed-case class, invertible.

Wire conventions: casing tags are ``l c a u``, segmentation flags are
``1`` (separated, i.e. a space goes to the token's left) / ``0`` (joined).
The word-boundary marker is the single character U+2581 and may only
appear as a token prefix.
"""

from collections import Counter
from enum import Enum

BOUNDARY_MARKER = "▁"


class CodecError(ValueError):
    """Invalid input to a codec operation."""


class CasingClass(Enum):
    LOWER = "l"
    CAPITALIZED = "c"
    ALL_CAPS = "a"
    UNDEFINED = "u"

    @classmethod
    def from_tag(cls, tag):
        try:
            return cls(tag)
        except ValueError:
            raise CodecError("unknown casing tag: %r" % (tag,)) from None

    @property
    def tag(self):
        return self.value


# Stable id order used by casing-factor models: l=0, c=1, a=2, u=3.
CASING_CLASSES = (
    CasingClass.LOWER,
    CasingClass.CAPITALIZED,
    CasingClass.ALL_CAPS,
    CasingClass.UNDEFINED,
)


def classify_casing(token):
    """Assign one of the four casing classes to a non-empty token.

    A token is lower/all-caps if it has at least one letter and all its
    letters are lower/upper-case; capitalized if the first character is an
    upper-case letter and all remaining letters are lower-case. Everything
    else (letterless tokens, other mixed case) is undefined. A single
    upper-case letter is both capitalized and all-caps; the tie goes to
    all-caps (checked in order lower, all-caps, capitalized).
    """
    if not token:
        raise CodecError("cannot classify empty token")
    letters = [ch for ch in token if ch.isalpha()]
    if letters:
        if all(ch.islower() for ch in letters):
            return CasingClass.LOWER
        if all(ch.isupper() for ch in letters):
            return CasingClass.ALL_CAPS
        first = token[0]
        if first.isalpha() and first.isupper() and all(ch.islower() for ch in letters[1:]):
            return CasingClass.CAPITALIZED
    return CasingClass.UNDEFINED


def encode_casing(token):
    """Split a token into (lower-cased lemma, casing class)."""
    return token.lower(), classify_casing(token)


def apply_casing(lemma, casing):
    """Restore a surface token from a lemma and a casing class.

    Total function: the undefined class leaves the lemma untouched, which
    is lossy for mixed-case tokens.
    """
    if casing is CasingClass.LOWER or casing is CasingClass.UNDEFINED:
        return lemma
    if casing is CasingClass.ALL_CAPS:
        return lemma.upper()
    if casing is CasingClass.CAPITALIZED:
        return lemma[:1].upper() + lemma[1:] if lemma else lemma
    raise CodecError("unknown casing class: %r" % (casing,))


def encode_segmentation(subword):
    """Split a marked subword into (bare subword, separated flag).

    The boundary marker may occur only as a prefix; a token consisting of
    the bare marker would yield an empty first factor and is rejected.
    """
    if not subword:
        raise CodecError("cannot encode empty subword")
    separated = subword.startswith(BOUNDARY_MARKER)
    bare = subword[1:] if separated else subword
    if not bare:
        raise CodecError("bare boundary marker is not a valid subword")
    if BOUNDARY_MARKER in bare:
        raise CodecError("interior boundary marker in %r" % (subword,))
    return bare, separated


def decode_segmentation(pairs):
    """Detokenize (bare subword, separated flag) pairs into a sentence.

    A single space is inserted before each separated token except the
    sentence-initial one; the result carries no leading or trailing space.
    """
    pairs = list(pairs)
    if not pairs:
        raise CodecError("cannot decode empty pair sequence")
    out = []
    for i, (bare, separated) in enumerate(pairs):
        if separated and i > 0:
            out.append(" ")
        out.append(bare)
    return "".join(out)


def restore_marked_subword(bare, separated):
    """Inverse of encode_segmentation at the token level."""
    return (BOUNDARY_MARKER + bare) if separated else bare


def encode_line(line, codec):
    """Encode a space-separated token line into (lemma line, factor line)."""
    tokens = line.split(" ") if line else []
    lemmas, factors = [], []
    for tok in tokens:
        if codec == "casing":
            lemma, cls = encode_casing(tok)
            lemmas.append(lemma)
            factors.append(cls.tag)
        elif codec == "segmentation":
            bare, separated = encode_segmentation(tok)
            lemmas.append(bare)
            factors.append("1" if separated else "0")
        else:
            raise CodecError("unknown codec: %r" % (codec,))
    return " ".join(lemmas), " ".join(factors)


def decode_line(lemma_line, factor_line, codec, lineno=None):
    """Inverse of encode_line: rebuild the surface token line.

    For the segmentation codec this restores the *marked* subword line;
    detokenization into plain text is decode_segmentation's job.
    """
    lemmas = lemma_line.split(" ") if lemma_line else []
    factors = factor_line.split(" ") if factor_line else []
    if len(lemmas) != len(factors):
        where = "" if lineno is None else " at line %d" % lineno
        raise CodecError(
            "token count mismatch%s: %d lemmas vs %d factors"
            % (where, len(lemmas), len(factors))
        )
    tokens = []
    for lemma, factor in zip(lemmas, factors):
        if codec == "casing":
            tokens.append(apply_casing(lemma, CasingClass.from_tag(factor)))
        elif codec == "segmentation":
            if factor not in ("0", "1"):
                raise CodecError("unknown segmentation flag: %r" % (factor,))
            tokens.append(restore_marked_subword(lemma, factor == "1"))
        else:
            raise CodecError("unknown codec: %r" % (codec,))
    return " ".join(tokens)


def vocab_stats(lines, codec="casing"):
    """Vocabulary projection statistics over an iterable of token lines.

    Returns a dict with the surface vocabulary size, the first-factor
    (lemma) vocabulary size, the number of distinct representable
    (lemma, factor) variants, the casing class histogram and the count of
    letter-bearing tokens in the undefined class (the lossy ones).
    """
    surface = set()
    lemma_vocab = set()
    variants = set()
    class_hist = Counter()
    token_count = 0
    lossy = 0
    for line in lines:
        for tok in line.split(" ") if line else []:
            token_count += 1
            surface.add(tok)
            if codec == "casing":
                lemma, cls = encode_casing(tok)
                class_hist[cls.tag] += 1
                if cls is CasingClass.UNDEFINED and any(ch.isalpha() for ch in tok):
                    lossy += 1
            elif codec == "segmentation":
                lemma, separated = encode_segmentation(tok)
                cls = "1" if separated else "0"
            else:
                raise CodecError("unknown codec: %r" % (codec,))
            lemma_vocab.add(lemma)
            variants.add((lemma, cls))
    return {
        "tokens": token_count,
        "surface_vocab": len(surface),
        "lemma_vocab": len(lemma_vocab),
        "variants": len(variants),
        "class_histogram": dict(class_hist),
        "mixed_case_tokens": lossy,
        "mixed_case_rate": (lossy / token_count) if token_count else 0.0,
    }
