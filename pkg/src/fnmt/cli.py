"""Command-line entry point.

One binary with subcommands wiring the codec, operation-sequence, model,
search and pipeline modules into reproducible file-to-file pipelines.
Exit codes: 0 success, 1 validation error, 2 I/O error. All randomness is
controlled by --seed; identical invocations give byte-identical outputs.
"""

import argparse
import json
import sys

from . import factor_codecs, osnmt, pipeline
from .factor_codecs import CodecError
from .osnmt import OsmError
from .pipeline import PipelineError, Vocab

FACTOR_LABELS = {
    "casing": [c.tag for c in factor_codecs.CASING_CLASSES],
    "segmentation": ["0", "1"],
    "osnmt": [str(n) for n in range(osnmt.DEFAULT_MAX_POPS + 1)],
}


def read_lines(path):
    with open(path, encoding="utf-8") as f:
        return [line.rstrip("\n") for line in f]


def write_lines(path, lines):
    if path == "-":
        for line in lines:
            sys.stdout.write(line + "\n")
        return
    with open(path, "w", encoding="utf-8") as f:
        for line in lines:
            f.write(line + "\n")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="fnmt",
        description="Factored sequence transduction toolkit.")
    parser.add_argument("--config", help="JSON file with flag defaults "
                        "(keys mirror the long flag names)")
    parser.add_argument("--seed", type=int, default=0,
                        help="seed for all randomness")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("factorize", help="split a corpus into lemma/factor streams")
    p.add_argument("--codec", choices=["casing", "segmentation"], required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out-lemma", required=True)
    p.add_argument("--out-factor", required=True)

    p = sub.add_parser("defactorize", help="rebuild the surface corpus")
    p.add_argument("--codec", choices=["casing", "segmentation"], required=True)
    p.add_argument("--in-lemma", required=True)
    p.add_argument("--in-factor", required=True)
    p.add_argument("--out", required=True)

    posm = sub.add_parser("osm", help="operation-sequence tools")
    osm_sub = posm.add_subparsers(dest="osm_command", required=True)

    p = osm_sub.add_parser("compile", help="interpret op sequences into text + alignment")
    p.add_argument("--ops", required=True)
    p.add_argument("--src", required=True, help="source corpus (for lengths)")
    p.add_argument("--out-target", required=True)
    p.add_argument("--out-alignment", required=True)

    p = osm_sub.add_parser("generate", help="build op sequences from text + alignment")
    p.add_argument("--target", required=True)
    p.add_argument("--alignment", required=True, help="0-based 's-t' pairs per line")
    p.add_argument("--src", required=True, help="source corpus (for lengths)")
    p.add_argument("--out", required=True)

    p = osm_sub.add_parser("factor", help="split SRC_POP counts into a second stream")
    p.add_argument("--ops", required=True)
    p.add_argument("--out-ops", required=True)
    p.add_argument("--out-pops", required=True)
    p.add_argument("--max-pops", type=int, default=osnmt.DEFAULT_MAX_POPS)

    p = osm_sub.add_parser("defactor", help="re-insert SRC_POP runs")
    p.add_argument("--ops", required=True)
    p.add_argument("--pops", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-pops", type=int, default=osnmt.DEFAULT_MAX_POPS)

    p = osm_sub.add_parser("filter", help="drop programs with long SRC_POP runs")
    p.add_argument("--ops", required=True)
    p.add_argument("--max-run", type=int, default=osnmt.DEFAULT_MAX_POPS)
    p.add_argument("--out", required=True)
    p.add_argument("--report")

    p = sub.add_parser("filter", help="parallel corpus filtering")
    p.add_argument("--src", required=True)
    p.add_argument("--tgt", required=True)
    p.add_argument("--test", nargs="*", default=[])
    p.add_argument("--min-chars", type=int, default=2)
    p.add_argument("--max-words", type=int, default=79)
    p.add_argument("--max-ratio", type=float, default=4.0)
    p.add_argument("--ngram", type=int, default=8)
    p.add_argument("--langid-sidecar")
    p.add_argument("--pop-run", type=int)
    p.add_argument("--out-src")
    p.add_argument("--out-tgt")
    p.add_argument("--report")

    p = sub.add_parser("vocab", help="build a vocabulary file")
    p.add_argument("--in", dest="infile", nargs="+", required=True)
    p.add_argument("--size", type=int, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train a (factored) model")
    p.add_argument("--src", required=True)
    p.add_argument("--tgt-lemma", required=True)
    p.add_argument("--tgt-factor")
    p.add_argument("--val-src", required=True)
    p.add_argument("--val-tgt-lemma", required=True)
    p.add_argument("--val-tgt-factor")
    p.add_argument("--application", default="none",
                   choices=["casing", "segmentation", "osnmt", "none"])
    p.add_argument("--out", required=True, help="model directory")
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--eval-every", type=int, default=50)
    p.add_argument("--embed-dim", type=int, default=32)
    p.add_argument("--hidden-dim", type=int, default=64)
    p.add_argument("--encoder-layers", type=int, default=1)
    p.add_argument("--label-smoothing", type=float, default=0.1)
    p.add_argument("--dropout", type=float, default=0.0)
    p.add_argument("--coverage", action="store_true")
    p.add_argument("--src-vocab-size", type=int, default=1000)
    p.add_argument("--tgt-vocab-size", type=int, default=1000)

    p = sub.add_parser("decode", help="beam-search decode a corpus")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--beam", type=int, default=12)
    p.add_argument("--max-len", type=int, default=100)
    p.add_argument("--application",
                   choices=["casing", "segmentation", "osnmt", "none"])
    p.add_argument("--nbest", type=int, default=1)
    p.add_argument("--alignment-out")
    p.add_argument("--output", default="-")

    p = sub.add_parser("eval", help="corpus BLEU")
    p.add_argument("--hyp", required=True)
    p.add_argument("--ref", required=True)

    p = sub.add_parser("stats", help="corpus factor statistics")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--application", default="casing",
                   choices=["casing", "segmentation", "osnmt"])

    return parser


def _apply_config_file(parser, argv):
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config")
    known, _ = probe.parse_known_args(argv)
    if not known.config:
        return
    with open(known.config, encoding="utf-8") as f:
        overrides = json.load(f)
    if not isinstance(overrides, dict):
        raise PipelineError("config file must hold a JSON object")
    defaults = {k.replace("-", "_"): v for k, v in overrides.items()}

    def apply(p):
        known = {a.dest for a in p._actions}
        p.set_defaults(**{k: v for k, v in defaults.items() if k in known})
        for action in p._actions:
            if isinstance(action, argparse._SubParsersAction):
                for child in action.choices.values():
                    apply(child)

    apply(parser)


# ---- command implementations ----------------------------------------------

def cmd_factorize(args):
    lemmas, factors = [], []
    for line in read_lines(args.infile):
        lemma, factor = factor_codecs.encode_line(line, args.codec)
        lemmas.append(lemma)
        factors.append(factor)
    write_lines(args.out_lemma, lemmas)
    write_lines(args.out_factor, factors)
    return 0


def cmd_defactorize(args):
    lemma_lines = read_lines(args.in_lemma)
    factor_lines = read_lines(args.in_factor)
    if len(lemma_lines) != len(factor_lines):
        raise CodecError("lemma/factor files have different line counts")
    out = [factor_codecs.decode_line(l, f, args.codec, lineno=i + 1)
           for i, (l, f) in enumerate(zip(lemma_lines, factor_lines))]
    write_lines(args.out, out)
    return 0


def cmd_osm_compile(args):
    src_lines = read_lines(args.src)
    op_lines = read_lines(args.ops)
    if len(src_lines) != len(op_lines):
        raise OsmError("ops/source files have different line counts")
    targets, aligns = [], []
    for src, ops in zip(src_lines, op_lines):
        target, links = osnmt.interpret_osm(ops.split(), len(src.split()))
        targets.append(" ".join(target))
        aligns.append(osnmt.format_alignment(links))
    write_lines(args.out_target, targets)
    write_lines(args.out_alignment, aligns)
    return 0


def cmd_osm_generate(args):
    src_lines = read_lines(args.src)
    tgt_lines = read_lines(args.target)
    al_lines = read_lines(args.alignment)
    if not (len(src_lines) == len(tgt_lines) == len(al_lines)):
        raise OsmError("source/target/alignment files have different line counts")
    out = []
    for src, tgt, al in zip(src_lines, tgt_lines, al_lines):
        links = osnmt.parse_alignment_line(al)
        ops = osnmt.generate_osm(tgt.split(), links, len(src.split()))
        out.append(" ".join(ops))
    write_lines(args.out, out)
    return 0


def cmd_osm_factor(args):
    ops_out, pops_out = [], []
    for line in read_lines(args.ops):
        pairs = osnmt.factor_osm(line.split(), args.max_pops)
        ops_out.append(" ".join(y1 for y1, _ in pairs))
        pops_out.append(" ".join(str(n) for _, n in pairs))
    write_lines(args.out_ops, ops_out)
    write_lines(args.out_pops, pops_out)
    return 0


def cmd_osm_defactor(args):
    op_lines = read_lines(args.ops)
    pop_lines = read_lines(args.pops)
    if len(op_lines) != len(pop_lines):
        raise OsmError("ops/pops files have different line counts")
    out = []
    for ops_line, pops_line in zip(op_lines, pop_lines):
        names = ops_line.split()
        pops = [int(x) for x in pops_line.split()]
        if len(names) != len(pops):
            raise OsmError("ops/pops token counts differ")
        out.append(" ".join(osnmt.defactor_osm(list(zip(names, pops)),
                                               args.max_pops)))
    write_lines(args.out, out)
    return 0


def cmd_osm_filter(args):
    kept, report = [], []
    for i, line in enumerate(read_lines(args.ops)):
        if osnmt.pop_run_filter(line.split(), args.max_run):
            kept.append(line)
        else:
            report.append("%d\tpop-run" % (i + 1))
    write_lines(args.out, kept)
    if args.report:
        write_lines(args.report, report)
    return 0


def cmd_filter(args):
    src = read_lines(args.src)
    tgt = read_lines(args.tgt)
    test_lines = None
    if args.test:
        test_lines = []
        for path in args.test:
            test_lines.extend(read_lines(path))
    langid = None
    if args.langid_sidecar:
        langid = [line.strip() not in ("0", "reject")
                  for line in read_lines(args.langid_sidecar)]
        if len(langid) != len(src):
            raise PipelineError("langid sidecar line count differs from corpus")
    kept, report = pipeline.filter_corpus(
        src, tgt, test_lines, args.min_chars, args.max_words, args.max_ratio,
        args.ngram, langid, args.pop_run)
    if args.out_src:
        write_lines(args.out_src, [s for s, _ in kept])
    if args.out_tgt:
        write_lines(args.out_tgt, [t for _, t in kept])
    if args.report:
        report.save(args.report)
    summary = report.as_dict()
    print("kept %d/%d lines; rejected: %s"
          % (summary["kept"], summary["total"], summary["rejected"] or "none"))
    return 0


def cmd_vocab(args):
    lines = []
    for path in args.infile:
        lines.extend(read_lines(path))
    vocab = pipeline.build_vocab(lines, args.size)
    vocab.save(args.out)
    return 0


def _load_factored_corpus(src_path, lemma_path, factor_path, src_vocab,
                          tgt_vocab, labels):
    from .model import EOS_ID
    src_lines = read_lines(src_path)
    lemma_lines = read_lines(lemma_path)
    factor_lines = read_lines(factor_path) if factor_path else None
    if len(src_lines) != len(lemma_lines):
        raise PipelineError("source/target line counts differ")
    data = []
    for i, (src, lemma) in enumerate(zip(src_lines, lemma_lines)):
        src_ids = [src_vocab.id(t) for t in src.split()]
        toks = lemma.split()
        if toks and toks[-1] == "</s>":  # sentinel already present (osnmt)
            toks = toks[:-1]
        y1 = [tgt_vocab.id(t) for t in toks] + [EOS_ID]
        y2 = None
        if factor_lines is not None:
            tags = factor_lines[i].split()
            if len(tags) not in (len(y1), len(y1) - 1):
                raise PipelineError(
                    "line %d: factor count does not match lemma count" % (i + 1))
            # a factor tag for the EOS step is optional in the file; default 0
            y2 = [labels.index(t) for t in tags]
            y2 += [0] * (len(y1) - len(y2))
        data.append((src_ids, y1, y2))
    return data


def cmd_train(args):
    import torch
    from . import model as M
    torch.manual_seed(args.seed)
    if args.application != "none" and not args.tgt_factor:
        raise PipelineError("--tgt-factor is required for factored applications")
    labels = FACTOR_LABELS.get(args.application, [])
    src_lines = read_lines(args.src)
    src_vocab = pipeline.build_vocab(src_lines, args.src_vocab_size)
    tgt_vocab = pipeline.build_vocab(read_lines(args.tgt_lemma),
                                     args.tgt_vocab_size)
    config = M.ModelConfig(
        src_vocab=len(src_vocab), tgt_vocab=len(tgt_vocab),
        factor_vocab=len(labels), embed_dim=args.embed_dim,
        hidden_dim=args.hidden_dim, encoder_layers=args.encoder_layers,
        label_smoothing=args.label_smoothing, dropout=args.dropout,
        coverage=args.coverage, seed=args.seed)
    net = M.FactoredSeq2Seq(config)
    train_data = _load_factored_corpus(args.src, args.tgt_lemma,
                                       args.tgt_factor, src_vocab, tgt_vocab,
                                       labels)
    val_data = _load_factored_corpus(args.val_src, args.val_tgt_lemma,
                                     args.val_tgt_factor, src_vocab, tgt_vocab,
                                     labels)
    log = M.train(net, train_data, val_data, steps=args.steps,
                  batch_size=args.batch_size, lr=args.lr,
                  eval_every=args.eval_every, seed=args.seed)
    M.save_model(net, args.out, application=args.application,
                 factor_labels=labels or None, src_vocab=src_vocab,
                 tgt_vocab=tgt_vocab)
    for entry in log:
        print(json.dumps(entry))
    return 0


def cmd_decode(args):
    import os

    from . import model as M
    from . import search
    net, manifest = M.load_model(args.model)
    application = args.application or manifest.get("application", "none")
    factor_labels = manifest.get("factor_labels") or []
    src_vocab = Vocab.load(os.path.join(args.model, "source.vocab"))
    tgt_vocab = Vocab.load(os.path.join(args.model, "target.vocab"))
    config = search.SearchConfig(beam_size=args.beam, max_len=args.max_len,
                                 application=application, nbest=args.nbest)
    outputs, alignments = [], []
    for line in read_lines(args.input):
        results = search.decode_pipeline(net, src_vocab, tgt_vocab,
                                         factor_labels, line, config)
        texts = []
        for result in results:
            text = result.text
            if result.used_fallback:
                text += "\t<osm-fallback>"
            texts.append(text)
        outputs.append(" ||| ".join(texts))
        best = results[0]
        alignments.append(osnmt.format_alignment(best.alignment)
                          if best.alignment is not None else "")
    write_lines(args.output, outputs)
    if args.alignment_out:
        write_lines(args.alignment_out, alignments)
    return 0


def cmd_eval(args):
    score = pipeline.bleu(read_lines(args.hyp), read_lines(args.ref))
    print("BLEU = %.2f" % (100.0 * score))
    return 0


def cmd_stats(args):
    lines = read_lines(args.infile)
    if args.application == "osnmt":
        from collections import Counter
        hist = Counter()
        over = 0
        for line in lines:
            run = osnmt.max_pop_run(line.split())
            hist[run] += 1
            if run > osnmt.DEFAULT_MAX_POPS:
                over += 1
        print(json.dumps({"pop_run_histogram": dict(sorted(hist.items())),
                          "over_limit": over}))
    else:
        stats = factor_codecs.vocab_stats(lines, args.application)
        print(json.dumps(stats))
    return 0


COMMANDS = {
    "factorize": cmd_factorize,
    "defactorize": cmd_defactorize,
    "filter": cmd_filter,
    "vocab": cmd_vocab,
    "train": cmd_train,
    "decode": cmd_decode,
    "eval": cmd_eval,
    "stats": cmd_stats,
}

OSM_COMMANDS = {
    "compile": cmd_osm_compile,
    "generate": cmd_osm_generate,
    "factor": cmd_osm_factor,
    "defactor": cmd_osm_defactor,
    "filter": cmd_osm_filter,
}


def run(argv):
    parser = build_parser()
    try:
        _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
        if args.command == "osm":
            return OSM_COMMANDS[args.osm_command](args)
        return COMMANDS[args.command](args)
    except OSError as exc:
        print("I/O error: %s" % exc, file=sys.stderr)
        return 2
    except (CodecError, OsmError, PipelineError, ValueError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
