"""Factored sequence transduction toolkit.

Subpackages:
    factor_codecs  -- casing and subword-segmentation factor codecs
    osnmt          -- operation-sequence compiler/interpreter and SRC_POP factoring
    model          -- desk-scale attentional encoder-decoder with a factored output layer
    search         -- two-stage factored beam search and test oracles
    pipeline       -- corpus filtering, vocabulary building, BLEU
    cli            -- command-line entry point
"""

__version__ = "0.1.0"
