"""Shared fixtures: tiny models, zeroed parameters, small corpora."""

from b3sum.corpus import build_vocab, synth_generate
from b3sum.summarizer import SummarizerParams, prepare_pair


def zero_params(params):
    for p in params:
        p.value[...] = 0.0
        p.zero_grad()


def tiny_summarizer(vocab_size=12, emb=4, hidden=8, seed=3) -> SummarizerParams:
    return SummarizerParams(vocab_size, emb_dim=emb, hidden_dim=hidden, seed=seed)


def tiny_corpus(n=6, seed=7, oov_rate=0.3):
    """Pairs plus a vocabulary built from a disjoint oov-free sample, so
    fresh entity names in `pairs` really are out-of-vocabulary."""
    base = synth_generate(seed=seed + 1000, n=40, oov_rate=0.0)
    vocab = build_vocab(base, mode="cap", size=90)
    pairs = synth_generate(seed=seed, n=n, oov_rate=oov_rate)
    return pairs, vocab, [prepare_pair(p, vocab) for p in pairs]
