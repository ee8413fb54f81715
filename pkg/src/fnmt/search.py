"""Two-stage factored beam search, single-output beam search and oracles.

Factored search expands each live hypothesis by first-factor candidates
into an intermediate beam of the n best, then scores the second factor
from the same readout the first factor originated from and keeps the n
best jointly expanded hypotheses. Scores are raw log-probability sums
over both factors; no length normalization. Ties break on lower token id,
then earlier hypothesis index, so decoding is deterministic.
"""

from dataclasses import dataclass, field

import torch

from . import osnmt
from .factor_codecs import (CASING_CLASSES, apply_casing, decode_segmentation)
from .model import BOS_ID, EOS_ID, ModelError


class SearchError(RuntimeError):
    """Search aborted (empty source or non-finite scores)."""


@dataclass
class SearchConfig:
    beam_size: int = 12
    max_len: int = 100
    application: str = "none"  # casing | segmentation | osnmt | none
    nbest: int = 1

    def validate(self):
        if self.beam_size < 1:
            raise SearchError("beam size must be >= 1")
        if self.max_len < 1:
            raise SearchError("max length must be >= 1")
        if self.application not in ("casing", "segmentation", "osnmt",
                                    "none"):
            raise SearchError("unknown application %r" % self.application)


@dataclass
class Hypothesis:
    tokens: list = field(default_factory=list)  # (y1, y2) pairs or y1 ids
    score: float = 0.0
    finished: bool = False


def _gather_state(state, idx):
    return state[0][idx], state[1][idx]


def beam_search_factored(model, src_ids, config):
    """Ranked (token pair sequence, score) list from two-stage beam search."""
    config.validate()
    if not model.config.factored:
        raise ModelError("model has no second factor; use beam_search_single")
    if len(src_ids) == 0:
        raise SearchError("empty source")
    n = config.beam_size
    with torch.no_grad():
        annotations = model.encode(src_ids)
        state = model.initial_state(1)
        coverage = (torch.zeros(1, annotations.shape[0], dtype=annotations.dtype)
                    if model.config.coverage else None)
        y1_prev = torch.tensor([BOS_ID])
        y2_prev = torch.tensor([model.y2_bos])
        beams = [Hypothesis()]
        finished = []
        for _ in range(config.max_len):
            if not beams:
                break
            context, alpha = model.attend(state, annotations, coverage)
            new_state, t = model.decoder_step(state, y1_prev, y2_prev, context)
            logp1 = torch.log_softmax(model.factor1_logits(t), dim=-1)
            if not torch.isfinite(logp1).all():
                raise SearchError("non-finite first-factor scores")
            # stage 1: intermediate beam over (hypothesis, y1)
            inter = []
            for b, hyp in enumerate(beams):
                row = logp1[b]
                for y1 in range(model.config.tgt_vocab):
                    inter.append((hyp.score + float(row[y1]), y1, b))
            inter.sort(key=lambda x: (-x[0], x[1], x[2]))
            inter = inter[:n]
            # stage 2: second factor from the readout y1 originated from
            idx = torch.tensor([b for _, _, b in inter])
            y1s = torch.tensor([y1 for _, y1, _ in inter])
            logp2 = torch.log_softmax(model.factor2_logits(t[idx], y1s), dim=-1)
            if not torch.isfinite(logp2).all():
                raise SearchError("non-finite second-factor scores")
            cands = []
            for k, (score1, y1, b) in enumerate(inter):
                row = logp2[k]
                for y2 in range(model.config.factor_vocab):
                    cands.append((score1 + float(row[y2]), y1, y2, b, k))
            cands.sort(key=lambda x: (-x[0], x[1], x[2], x[4]))
            cands = cands[:n]
            next_beams, sel, y1_sel, y2_sel, cov_sel = [], [], [], [], []
            for score, y1, y2, b, _ in cands:
                hyp = Hypothesis(beams[b].tokens + [(y1, y2)], score)
                if y1 == EOS_ID:
                    hyp.finished = True
                    finished.append(hyp)
                else:
                    next_beams.append(hyp)
                    sel.append(b)
                    y1_sel.append(y1)
                    y2_sel.append(y2)
            beams = next_beams
            if not beams:
                break
            idx = torch.tensor(sel)
            state = _gather_state(new_state, idx)
            if coverage is not None:
                coverage = coverage[idx] + alpha[idx]
            y1_prev = torch.tensor(y1_sel)
            y2_prev = torch.tensor(y2_sel)
        finished.extend(beams)  # hypotheses cut off at max_len
    finished.sort(key=lambda h: (-h.score, h.tokens))
    return [(h.tokens, h.score) for h in finished[:config.nbest]]


def beam_search_single(model, src_ids, config):
    """Standard single-output beam search (one token per step)."""
    config.validate()
    if model.config.factored:
        raise ModelError("model is factored; use beam_search_factored")
    if len(src_ids) == 0:
        raise SearchError("empty source")
    n = config.beam_size
    with torch.no_grad():
        annotations = model.encode(src_ids)
        state = model.initial_state(1)
        coverage = (torch.zeros(1, annotations.shape[0], dtype=annotations.dtype)
                    if model.config.coverage else None)
        y_prev = torch.tensor([BOS_ID])
        beams = [Hypothesis()]
        finished = []
        for _ in range(config.max_len):
            if not beams:
                break
            context, alpha = model.attend(state, annotations, coverage)
            new_state, t = model.decoder_step(state, y_prev, None, context)
            logp = torch.log_softmax(model.factor1_logits(t), dim=-1)
            if not torch.isfinite(logp).all():
                raise SearchError("non-finite scores")
            cands = []
            for b, hyp in enumerate(beams):
                row = logp[b]
                for y in range(model.config.tgt_vocab):
                    cands.append((hyp.score + float(row[y]), y, b))
            cands.sort(key=lambda x: (-x[0], x[1], x[2]))
            cands = cands[:n]
            next_beams, sel, y_sel = [], [], []
            for score, y, b in cands:
                hyp = Hypothesis(beams[b].tokens + [y], score)
                if y == EOS_ID:
                    hyp.finished = True
                    finished.append(hyp)
                else:
                    next_beams.append(hyp)
                    sel.append(b)
                    y_sel.append(y)
            beams = next_beams
            if not beams:
                break
            idx = torch.tensor(sel)
            state = _gather_state(new_state, idx)
            if coverage is not None:
                coverage = coverage[idx] + alpha[idx]
            y_prev = torch.tensor(y_sel)
        finished.extend(beams)
    finished.sort(key=lambda h: (-h.score, h.tokens))
    return [(h.tokens, h.score) for h in finished[:config.nbest]]


def rescore_factored(model, src_ids, pairs):
    """Independent re-scoring of a factored output sequence."""
    y1_ids = [y1 for y1, _ in pairs]
    y2_ids = [y2 for _, y2 in pairs]
    with torch.no_grad():
        l1, l2 = model.step_log_distributions(src_ids, y1_ids, y2_ids)
        score = 0.0
        for i, (y1, y2) in enumerate(pairs):
            score += float(l1[i, y1]) + float(l2[i, y2])
    return score


def rescore_single(model, src_ids, ids):
    with torch.no_grad():
        l1, _ = model.step_log_distributions(src_ids, list(ids))
    return float(sum(l1[i, y] for i, y in enumerate(ids)))


def joint_space_size(v1, v2, max_len):
    """Number of complete factored sequences up to max_len."""
    live = (v1 - 1) * v2  # continuations that do not emit EOS
    total = 0
    prefixes = 1
    for step in range(1, max_len + 1):
        total += prefixes * v2  # sequences ending in EOS at this step
        prefixes *= live
    return total + prefixes  # plus sequences cut at max_len without EOS


def exhaustive_search(model, src_ids, max_len, guard=10 ** 6):
    """True argmax over all factored sequences up to max_len.

    Enumerates the complete prefix tree breadth-first without any pruning
    (a sequence is complete when it emits EOS or reaches max_len) and
    refuses if the joint space exceeds the guard. Ties resolve to the
    lexicographically smallest id sequence.
    """
    v1, v2 = model.config.tgt_vocab, model.config.factor_vocab
    if joint_space_size(v1, v2, max_len) > guard:
        raise SearchError("joint search space exceeds the exhaustive guard")
    best_seq, best_score = None, None

    def consider(seq, score):
        nonlocal best_seq, best_score
        if (best_score is None or score > best_score or
                (score == best_score and seq < best_seq)):
            best_seq, best_score = seq, score

    with torch.no_grad():
        annotations = model.encode(src_ids)
        prefixes = [[]]
        state = model.initial_state(1)
        coverage = (torch.zeros(1, annotations.shape[0],
                                dtype=annotations.dtype)
                    if model.config.coverage else None)
        scores = torch.zeros(1, dtype=annotations.dtype)
        y1_prev = torch.tensor([BOS_ID])
        y2_prev = torch.tensor([model.y2_bos])
        for step in range(max_len):
            b = len(prefixes)
            context, alpha = model.attend(state, annotations, coverage)
            new_state, t = model.decoder_step(state, y1_prev, y2_prev, context)
            logp1 = torch.log_softmax(model.factor1_logits(t), dim=-1)
            # second-factor distribution for every possible y1 of every prefix
            t_rep = t.repeat_interleave(v1, dim=0)
            y1_all = torch.arange(v1).repeat(b)
            logp2 = torch.log_softmax(
                model.factor2_logits(t_rep, y1_all), dim=-1).view(b, v1, v2)
            total = scores.view(b, 1, 1) + logp1.unsqueeze(-1) + logp2
            next_prefixes = []
            next_scores = []
            parents = []
            y1_next, y2_next = [], []
            last = step == max_len - 1
            for i in range(b):
                for y1 in range(v1):
                    for y2 in range(v2):
                        seq = prefixes[i] + [(y1, y2)]
                        s = float(total[i, y1, y2])
                        if y1 == EOS_ID or last:
                            consider(seq, s)
                        else:
                            next_prefixes.append(seq)
                            next_scores.append(s)
                            parents.append(i)
                            y1_next.append(y1)
                            y2_next.append(y2)
            if not next_prefixes:
                break
            prefixes = next_prefixes
            idx = torch.tensor(parents)
            state = _gather_state(new_state, idx)
            if coverage is not None:
                coverage = coverage[idx] + alpha[idx]
            scores = torch.tensor(next_scores, dtype=annotations.dtype)
            y1_prev = torch.tensor(y1_next)
            y2_prev = torch.tensor(y2_next)
    return best_seq, best_score


@dataclass
class DecodeResult:
    text: str
    alignment: set | None = None
    score: float = 0.0
    hyp_rank: int = 0
    used_fallback: bool = False


def decode_pipeline(model, src_vocab, tgt_vocab, factor_labels, line, config):
    """Beam-search one source line and apply the matching postprocessing.

    Returns up to config.nbest DecodeResults, best first. For the OSNMT
    application an ill-formed hypothesis falls back to the next-ranked
    well-formed one; if none interprets cleanly, the defactored token
    stream with control ops stripped is emitted and flagged.
    """
    tokens = line.split()
    if not tokens:
        raise SearchError("empty source line")
    src_ids = [src_vocab.id(tok) for tok in tokens]
    app = config.application
    if not model.config.factored:
        hyps = beam_search_single(model, src_ids, config)
        out = []
        for ids, score in hyps[:config.nbest]:
            words = [tgt_vocab.token(i) for i in ids if i != EOS_ID]
            out.append(DecodeResult(" ".join(words), score=score))
        return out
    want = config.beam_size if app == "osnmt" else config.nbest
    search_cfg = SearchConfig(config.beam_size, config.max_len, app,
                              max(want, config.nbest))
    hyps = beam_search_factored(model, src_ids, search_cfg)
    if app == "osnmt":
        return _postprocess_osnmt(hyps, tgt_vocab, factor_labels,
                                  len(tokens), config.nbest)
    results = []
    for pairs, score in hyps[:config.nbest]:
        out = []
        for y1, y2 in pairs:
            if y1 == EOS_ID:
                break
            word = tgt_vocab.token(y1)
            if app == "casing":
                out.append(apply_casing(word, CASING_CLASSES[y2]))
            elif app == "segmentation":
                out.append((word, factor_labels[y2] == "1"))
            else:
                out.append(word)
        if app == "segmentation":
            text = decode_segmentation(out) if out else ""
        else:
            text = " ".join(out)
        results.append(DecodeResult(text, score=score))
    return results


def _postprocess_osnmt(hyps, tgt_vocab, factor_labels, src_len, nbest):
    results = []
    first_pairs = None
    for rank, (pairs, score) in enumerate(hyps):
        factored = []
        for y1, y2 in pairs:
            name = osnmt.EOS if y1 == EOS_ID else tgt_vocab.token(y1)
            factored.append((name, int(factor_labels[y2])))
        if not factored or factored[-1][0] != osnmt.EOS:
            factored.append((osnmt.EOS, 0))
        if first_pairs is None:
            first_pairs = factored
        try:
            ops = osnmt.defactor_osm(factored)
            target, links = osnmt.interpret_osm(ops, src_len)
        except osnmt.OsmError:
            continue
        results.append(DecodeResult(" ".join(target), links, score, rank, False))
        if len(results) >= nbest:
            break
    if results:
        return results
    # no well-formed hypothesis: strip control ops from the best one
    ops = [name for name, _ in first_pairs[:-1]
           if name not in osnmt.RESERVED_OPS]
    return [DecodeResult(" ".join(ops), None, hyps[0][1], 0, True)]
