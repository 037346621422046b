"""Attention encoder-decoder with a copy mechanism and coverage penalty.

One model generates a summary of exactly three bullet sentences, serialized
as ``s1 <sb> s2 <sb> s3 </s>``.  The decoder mixes a generated vocabulary
distribution with a copy distribution over source positions through a
soft switch p_gen, so out-of-vocabulary source tokens remain emittable.
The optional coverage term feeds the running sum of past attention back
into the attention scores and penalizes re-attended positions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import NewsPair, Vocabulary
from .layers import (
    BiLstmEncoder,
    EmbeddingTable,
    EncoderStates,
    LstmCell,
    bilstm_encode,
    embed_rows,
    lstm_step,
    uniform_param,
    zeros_param,
)
from .tape import Parameter, Tape, adagrad_step, clip_global_norm

PGEN_EPS = 1e-12


class ExtendedVocab:
    """Base vocabulary plus this document's out-of-vocabulary source tokens."""

    def __init__(self, base: Vocabulary, article_tokens):
        self.base = base
        self.doc_oovs: list[str] = []
        seen = set()
        for t in article_tokens:
            if t not in base and t not in seen:
                seen.add(t)
                self.doc_oovs.append(t)
        self._oov_ids = {t: base.size + k for k, t in enumerate(self.doc_oovs)}

    @property
    def size(self) -> int:
        return self.base.size + len(self.doc_oovs)

    def id(self, token: str) -> int:
        if token in self.base:
            return self.base.id(token)
        return self._oov_ids.get(token, Vocabulary.UNK)

    def token(self, i: int) -> str:
        if i < self.base.size:
            return self.base.token(i)
        return self.doc_oovs[i - self.base.size]


class SummarizerParams:
    """All learnable tensors of the summarization model."""

    def __init__(self, vocab_size: int, emb_dim: int, hidden_dim: int,
                 attn_dim: int | None = None, seed: int = 13):
        rng = np.random.default_rng(seed)
        attn_dim = attn_dim or hidden_dim
        self.vocab_size = vocab_size
        self.emb_dim = emb_dim
        self.hidden_dim = hidden_dim
        self.attn_dim = attn_dim
        state_dim = 2 * hidden_dim       # decoder state s_t is [h; c]
        enc_dim = 2 * hidden_dim         # encoder h_i is [fwd; bwd]
        feat_dim = state_dim + enc_dim   # [s_t, h*_t]

        self.embedding = EmbeddingTable(rng, "emb", vocab_size, emb_dim)
        self.encoder = BiLstmEncoder(rng, "enc", emb_dim, hidden_dim)
        self.decoder = LstmCell(rng, "dec", emb_dim, hidden_dim)

        self.attn_v = uniform_param(rng, "attn.v", (1, attn_dim))
        self.attn_w_enc = uniform_param(rng, "attn.W_h", (attn_dim, enc_dim))
        self.attn_w_state = uniform_param(rng, "attn.W_s", (attn_dim, state_dim))
        self.attn_bias = zeros_param("attn.b_a", (1, attn_dim))
        self.attn_w_cov = uniform_param(rng, "attn.w_c", (1, attn_dim))

        self.proj_b_in = zeros_param("proj.b_in", (1, feat_dim))
        self.proj_v = uniform_param(rng, "proj.V", (hidden_dim, feat_dim))
        self.proj_b_mid = zeros_param("proj.b_mid", (1, hidden_dim))
        self.proj_v_out = uniform_param(rng, "proj.V_out", (vocab_size, hidden_dim))

        self.ptr_w_context = uniform_param(rng, "ptr.w_context", (1, enc_dim))
        self.ptr_w_state = uniform_param(rng, "ptr.w_state", (1, state_dim))
        self.ptr_w_input = uniform_param(rng, "ptr.w_input", (1, emb_dim))
        self.ptr_bias = zeros_param("ptr.b_g", (1, 1))

        self.bridge_w_h = uniform_param(rng, "bridge.W_h", (hidden_dim, enc_dim))
        self.bridge_b_h = zeros_param("bridge.b_h", (1, hidden_dim))
        self.bridge_w_c = uniform_param(rng, "bridge.W_c", (hidden_dim, enc_dim))
        self.bridge_b_c = zeros_param("bridge.b_c", (1, hidden_dim))

    def params(self) -> list[Parameter]:
        return (
            self.embedding.params()
            + self.encoder.params()
            + self.decoder.params()
            + [
                self.attn_v, self.attn_w_enc, self.attn_w_state, self.attn_bias,
                self.attn_w_cov, self.proj_b_in, self.proj_v, self.proj_b_mid,
                self.proj_v_out, self.ptr_w_context, self.ptr_w_state,
                self.ptr_w_input, self.ptr_bias, self.bridge_w_h, self.bridge_b_h,
                self.bridge_w_c, self.bridge_b_c,
            ]
        )

    def param_dict(self) -> dict[str, Parameter]:
        return {p.name: p for p in self.params()}


# -- single decoding step pieces ---------------------------------------------


def attend(tape: Tape, model: SummarizerParams, h_all: int, s_t: int,
           coverage: int | None, use_coverage: bool) -> tuple[int, int, int]:
    """Attention scores, distribution, and context vector for one step.

    ``h_all`` is the (n x 2*hidden) encoder-state node, ``s_t`` the 1-row
    decoder state, ``coverage`` a (1 x n) row of summed past attention.
    Returns node ids (e_t, a_t, h_star).
    """
    arg = tape.add(
        tape.matmul(h_all, tape.param_t(model.attn_w_enc)),
        tape.matmul(s_t, tape.param_t(model.attn_w_state)),
    )
    if use_coverage:
        if coverage is None:
            raise ValueError("use_coverage=True requires a coverage node")
        cov_term = tape.matmul(tape.transpose(coverage), tape.param(model.attn_w_cov))
        arg = tape.add(arg, cov_term)
    arg = tape.add(arg, tape.param(model.attn_bias))
    e_t = tape.transpose(tape.matmul(tape.tanh(arg), tape.param_t(model.attn_v)))
    a_t = tape.softmax(e_t)
    h_star = tape.matmul(a_t, h_all)
    return e_t, a_t, h_star


def vocab_distribution(tape: Tape, model: SummarizerParams, s_t: int, h_star: int) -> int:
    """Two stacked linear maps then softmax over the base vocabulary."""
    feat = tape.concat([s_t, h_star], axis=1)
    inner = tape.add(feat, tape.param(model.proj_b_in))
    mid = tape.add(tape.matmul(inner, tape.param_t(model.proj_v)), tape.param(model.proj_b_mid))
    logits = tape.matmul(mid, tape.param_t(model.proj_v_out))
    return tape.softmax(logits)


def generation_prob(tape: Tape, model: SummarizerParams, h_star: int, s_t: int,
                    x_t: int) -> int:
    """Soft switch between generating and copying, in (0, 1)."""
    pre = tape.add(
        tape.add(
            tape.matmul(h_star, tape.param_t(model.ptr_w_context)),
            tape.matmul(s_t, tape.param_t(model.ptr_w_state)),
        ),
        tape.add(tape.matmul(x_t, tape.param_t(model.ptr_w_input)), tape.param(model.ptr_bias)),
    )
    return tape.sigmoid(pre)


def copy_matrix(src_ext_ids, ext_size: int, dtype) -> np.ndarray:
    """(n x ext_size) one-hot of source-position extended ids; attention times
    this matrix is the copy distribution."""
    m = np.zeros((len(src_ext_ids), ext_size), dtype=dtype)
    for k, i in enumerate(src_ext_ids):
        m[k, i] = 1.0
    return m


def final_distribution(tape: Tape, p_gen: int, p_vocab: int, a_t: int,
                       copy_m: int, n_oov: int) -> int:
    """Mix the generation and copy distributions over the extended vocab."""
    n_src = tape.value(a_t).shape[1]
    if tape.value(copy_m).shape[0] != n_src:
        raise ValueError(
            f"final_distribution: {n_src} attention weights vs "
            f"{tape.value(copy_m).shape[0]} source positions"
        )
    if n_oov > 0:
        pad = tape.leaf(np.zeros((1, n_oov), dtype=tape.dtype))
        p_vocab = tape.concat([p_vocab, pad], axis=1)
    p_copy = tape.matmul(a_t, copy_m)
    one = tape.leaf(np.ones((1, 1), dtype=tape.dtype))
    inv_gate = tape.add(one, tape.scale(p_gen, -1.0))
    return tape.add(tape.mul(p_vocab, p_gen), tape.mul(p_copy, inv_gate))


def coverage_update(tape: Tape, coverage: int, a_t: int) -> int:
    """c^{t+1} = c^t + a^t (both 1 x n rows)."""
    if tape.value(coverage).shape != tape.value(a_t).shape:
        raise ValueError(
            f"coverage_update: shape mismatch {tape.value(coverage).shape} "
            f"vs {tape.value(a_t).shape}"
        )
    return tape.add(coverage, a_t)


def coverage_penalty(tape: Tape, a_t: int, coverage: int) -> int:
    """sum_i min(a_i, c_i); bounded by 1 because attention sums to 1."""
    return tape.reduce_sum(tape.elementwise_min(a_t, coverage))


def step_loss(tape: Tape, p_final: int, target_id: int, a_t: int | None = None,
              coverage: int | None = None, cov_lambda: float = 1.0,
              use_coverage: bool = False) -> int:
    """Negative log likelihood of the target, plus the coverage penalty."""
    nll = tape.neg_log_pick(p_final, target_id)
    if not use_coverage:
        return nll
    return tape.add(nll, tape.scale(coverage_penalty(tape, a_t, coverage), cov_lambda))


# -- prepared examples and the teacher-forced loss ----------------------------


@dataclass
class PreparedExample:
    """A pair mapped to ids: encoder input, decoder input (teacher forcing),
    and extended-vocabulary targets ending in the stop token."""

    id: str
    enc_ids: list[int]
    src_ext_ids: list[int]
    dec_in_ids: list[int]
    target_ext_ids: list[int]
    ext: ExtendedVocab


def target_token_sequence(pair: NewsPair) -> list[str]:
    out = list(pair.summary[0])
    for sent in pair.summary[1:]:
        out.append(Vocabulary.SPECIALS[Vocabulary.SB])
        out.extend(sent)
    return out


def prepare_pair(pair: NewsPair, vocab: Vocabulary) -> PreparedExample:
    ext = ExtendedVocab(vocab, pair.article)
    enc_ids = vocab.encode(pair.article)
    src_ext_ids = [ext.id(t) for t in pair.article]
    target_tokens = target_token_sequence(pair)
    target_ext = [ext.id(t) for t in target_tokens] + [Vocabulary.STOP]
    target_base = vocab.encode(target_tokens) + [Vocabulary.STOP]
    dec_in = [Vocabulary.START] + target_base[:-1]
    return PreparedExample(
        id=pair.id,
        enc_ids=enc_ids,
        src_ext_ids=src_ext_ids,
        dec_in_ids=dec_in,
        target_ext_ids=target_ext,
        ext=ext,
    )


@dataclass
class StepTrace:
    attention: np.ndarray
    coverage_before: np.ndarray
    p_gen: float
    penalty: float | None


def _encode_article(tape: Tape, model: SummarizerParams, enc_ids) -> tuple[EncoderStates, int, int]:
    xs = embed_rows(tape, model.embedding, enc_ids)
    enc = bilstm_encode(tape, model.encoder, xs)
    h_cat = tape.concat([enc.fwd_final[0], enc.bwd_first[0]], axis=1)
    c_cat = tape.concat([enc.fwd_final[1], enc.bwd_first[1]], axis=1)
    h0 = tape.tanh(tape.add(tape.matmul(h_cat, tape.param_t(model.bridge_w_h)),
                            tape.param(model.bridge_b_h)))
    c0 = tape.tanh(tape.add(tape.matmul(c_cat, tape.param_t(model.bridge_w_c)),
                            tape.param(model.bridge_b_c)))
    return enc, h0, c0


def _forced_p_gen(tape: Tape, force: float) -> int:
    return tape.leaf(np.full((1, 1), force, dtype=tape.dtype))


def sequence_loss(tape: Tape, model: SummarizerParams, ex: PreparedExample,
                  use_coverage: bool = False, cov_lambda: float = 1.0,
                  force_p_gen: float | None = None,
                  collect_traces: bool = False):
    """Teacher-forced mean step loss for one example.

    Returns (loss_node, nll_mean_node, cov_mean_node, traces); the total is
    assembled as mean(nll) + lambda * mean(penalty) so the two components
    recombine exactly to the reported loss.
    """
    enc, h_t, c_t = _encode_article(tape, model, ex.enc_ids)
    n_src = len(ex.enc_ids)
    copy_m = tape.leaf(copy_matrix(ex.src_ext_ids, ex.ext.size, tape.dtype))
    coverage = tape.leaf(np.zeros((1, n_src), dtype=tape.dtype)) if use_coverage else None

    dec_embs = embed_rows(tape, model.embedding, ex.dec_in_ids)
    nll_nodes = []
    pen_nodes = []
    traces = []
    for t, target_id in enumerate(ex.target_ext_ids):
        h_t, c_t = lstm_step(tape, model.decoder, dec_embs[t], h_t, c_t)
        s_t = tape.concat([h_t, c_t], axis=1)
        _, a_t, h_star = attend(tape, model, enc.h_concat, s_t, coverage, use_coverage)
        p_vocab = vocab_distribution(tape, model, s_t, h_star)
        if force_p_gen is None:
            p_gen = generation_prob(tape, model, h_star, s_t, dec_embs[t])
        else:
            p_gen = _forced_p_gen(tape, force_p_gen)
        p_final = final_distribution(tape, p_gen, p_vocab, a_t, copy_m, len(ex.ext.doc_oovs))
        nll_nodes.append(tape.neg_log_pick(p_final, target_id))
        penalty = None
        if use_coverage:
            penalty = coverage_penalty(tape, a_t, coverage)
            pen_nodes.append(penalty)
        if collect_traces:
            traces.append(
                StepTrace(
                    attention=tape.value(a_t).copy(),
                    coverage_before=(
                        tape.value(coverage).copy() if coverage is not None else np.zeros((1, n_src))
                    ),
                    p_gen=float(tape.value(p_gen)[0, 0]),
                    penalty=float(tape.value(penalty)[0, 0]) if penalty is not None else None,
                )
            )
        if use_coverage:
            coverage = coverage_update(tape, coverage, a_t)

    nll_mean = tape.reduce_mean(tape.concat(nll_nodes, axis=1) if len(nll_nodes) > 1 else nll_nodes[0])
    if use_coverage:
        pen_mean = tape.reduce_mean(tape.concat(pen_nodes, axis=1) if len(pen_nodes) > 1 else pen_nodes[0])
        loss = tape.add(nll_mean, tape.scale(pen_mean, cov_lambda))
        return loss, nll_mean, pen_mean, traces
    return nll_mean, nll_mean, None, traces


@dataclass
class TrainConfig:
    lr: float = 0.15
    clip_norm: float = 2.0
    batch_size: int = 16
    coverage_lambda: float = 1.0
    coverage_from_step: int | None = None
    seed: int = 13

    def coverage_at(self, step: int) -> bool:
        return self.coverage_from_step is not None and step >= self.coverage_from_step


def train_batch(model: SummarizerParams, batch: list[PreparedExample],
                cfg: TrainConfig, use_coverage: bool = False) -> float:
    """One optimizer update on a batch; returns the mean loss."""
    if not batch:
        raise ValueError("train_batch: empty batch")
    tape = Tape()
    losses = []
    for ex in batch:
        loss, _, _, _ = sequence_loss(
            tape, model, ex, use_coverage=use_coverage, cov_lambda=cfg.coverage_lambda
        )
        losses.append(loss)
    total = tape.reduce_mean(tape.concat(losses, axis=1) if len(losses) > 1 else losses[0])
    tape.backward(total)
    params = model.params()
    clip_global_norm(params, cfg.clip_norm)
    adagrad_step(params, cfg.lr)
    return float(tape.value(total)[0, 0])


def corpus_loss(model: SummarizerParams, examples: list[PreparedExample],
                use_coverage: bool = False, cov_lambda: float = 1.0) -> float:
    """Mean teacher-forced loss without touching parameters."""
    if not examples:
        raise ValueError("corpus_loss: no examples")
    total = 0.0
    for ex in examples:
        tape = Tape()
        loss, _, _, _ = sequence_loss(tape, model, ex, use_coverage, cov_lambda)
        total += float(tape.value(loss)[0, 0])
    return total / len(examples)


def train_epochs(model: SummarizerParams, examples: list[PreparedExample],
                 cfg: TrainConfig, epochs: int, rng: np.random.Generator | None = None,
                 on_epoch=None) -> list[float]:
    """Shuffled minibatch training; returns per-step mean losses."""
    rng = rng or np.random.default_rng(cfg.seed)
    losses = []
    step = 0
    for epoch in range(epochs):
        order = rng.permutation(len(examples))
        for start in range(0, len(examples), cfg.batch_size):
            batch = [examples[i] for i in order[start : start + cfg.batch_size]]
            losses.append(train_batch(model, batch, cfg, use_coverage=cfg.coverage_at(step)))
            step += 1
        if on_epoch is not None and on_epoch(epoch, losses) is False:
            break
    return losses


def token_prediction_accuracy(model: SummarizerParams, examples: list[PreparedExample],
                              force_p_gen: float | None = None,
                              use_coverage: bool = False) -> dict:
    """Teacher-forced argmax accuracy, overall and on OOV target positions."""
    correct = total = 0
    oov_correct = oov_total = 0
    for ex in examples:
        tape = Tape()
        enc, h_t, c_t = _encode_article(tape, model, ex.enc_ids)
        copy_m = tape.leaf(copy_matrix(ex.src_ext_ids, ex.ext.size, tape.dtype))
        coverage = (
            tape.leaf(np.zeros((1, len(ex.enc_ids)), dtype=tape.dtype)) if use_coverage else None
        )
        dec_embs = embed_rows(tape, model.embedding, ex.dec_in_ids)
        for t, target_id in enumerate(ex.target_ext_ids):
            h_t, c_t = lstm_step(tape, model.decoder, dec_embs[t], h_t, c_t)
            s_t = tape.concat([h_t, c_t], axis=1)
            _, a_t, h_star = attend(tape, model, enc.h_concat, s_t, coverage, use_coverage)
            p_vocab = vocab_distribution(tape, model, s_t, h_star)
            p_gen = (
                generation_prob(tape, model, h_star, s_t, dec_embs[t])
                if force_p_gen is None
                else _forced_p_gen(tape, force_p_gen)
            )
            p_final = final_distribution(tape, p_gen, p_vocab, a_t, copy_m, len(ex.ext.doc_oovs))
            pred = int(np.argmax(tape.value(p_final)[0]))
            hit = bool(pred == target_id)
            correct += hit
            total += 1
            if target_id >= ex.ext.base.size:
                oov_correct += hit
                oov_total += 1
            if use_coverage:
                coverage = coverage_update(tape, coverage, a_t)
    return {
        "accuracy": correct / total if total else 0.0,
        "oov_accuracy": oov_correct / oov_total if oov_total else 0.0,
        "tokens": total,
        "oov_tokens": oov_total,
    }


# -- decoding -----------------------------------------------------------------


@dataclass
class Hypothesis:
    tokens: list[int] = field(default_factory=list)
    log_prob: float = 0.0
    state: tuple[int, int] | None = None
    coverage: int | None = None
    sb_count: int = 0
    finished: bool = False

    def score(self) -> float:
        return self.log_prob / max(1, len(self.tokens))


@dataclass
class DecodeResult:
    sentences: list[list[str]]
    token_ids: list[int]
    degenerate: bool
    traces: list[StepTrace] = field(default_factory=list)


_BANNED_STARTS = (Vocabulary.PAD, Vocabulary.START)


def _split_sentences(token_ids, ext: ExtendedVocab) -> tuple[list[list[str]], bool]:
    sentences: list[list[str]] = [[]]
    for i in token_ids:
        if i == Vocabulary.SB:
            sentences.append([])
        elif i != Vocabulary.STOP:
            sentences[-1].append(ext.token(i))
    sentences = sentences[:3]
    degenerate = len(sentences) < 3 or any(not s for s in sentences)
    while len(sentences) < 3:
        sentences.append([])
    return sentences, degenerate


class _StepRunner:
    """Shared per-step forward pass over one append-only tape."""

    def __init__(self, model: SummarizerParams, article_ids, ext: ExtendedVocab,
                 use_coverage: bool, force_p_gen: float | None):
        self.model = model
        self.ext = ext
        self.use_coverage = use_coverage
        self.force_p_gen = force_p_gen
        self.tape = Tape()
        enc_ids = [i if i < model.vocab_size else Vocabulary.UNK for i in article_ids]
        self.enc, self.h0, self.c0 = _encode_article(self.tape, model, enc_ids)
        src_ext = article_ids
        self.copy_m = self.tape.leaf(copy_matrix(src_ext, ext.size, self.tape.dtype))
        self.n_src = len(article_ids)
        self.n_oov = len(ext.doc_oovs)

    def initial(self) -> Hypothesis:
        coverage = None
        if self.use_coverage:
            coverage = self.tape.leaf(np.zeros((1, self.n_src), dtype=self.tape.dtype))
        return Hypothesis(state=(self.h0, self.c0), coverage=coverage)

    def step(self, hyp: Hypothesis, prev_token: int):
        """Advance one step; returns (log-probs over ext vocab, new state,
        new coverage, trace)."""
        tape, model = self.tape, self.model
        emb_id = prev_token if prev_token < model.vocab_size else Vocabulary.UNK
        x_t = embed_rows(tape, model.embedding, [emb_id])[0]
        h_t, c_t = lstm_step(tape, model.decoder, x_t, *hyp.state)
        s_t = tape.concat([h_t, c_t], axis=1)
        _, a_t, h_star = attend(tape, model, self.enc.h_concat, s_t, hyp.coverage,
                                self.use_coverage)
        p_vocab = vocab_distribution(tape, model, s_t, h_star)
        p_gen = (
            generation_prob(tape, model, h_star, s_t, x_t)
            if self.force_p_gen is None
            else _forced_p_gen(tape, self.force_p_gen)
        )
        p_final = final_distribution(tape, p_gen, p_vocab, a_t, self.copy_m, self.n_oov)
        probs = tape.value(p_final)[0].astype(np.float64)
        trace = StepTrace(
            attention=tape.value(a_t).copy(),
            coverage_before=(
                tape.value(hyp.coverage).copy()
                if hyp.coverage is not None
                else np.zeros((1, self.n_src))
            ),
            p_gen=float(tape.value(p_gen)[0, 0]),
            penalty=(
                float(np.minimum(tape.value(a_t), tape.value(hyp.coverage)).sum())
                if hyp.coverage is not None
                else None
            ),
        )
        new_cov = (
            coverage_update(tape, hyp.coverage, a_t) if self.use_coverage else None
        )
        return np.log(probs + PGEN_EPS), (h_t, c_t), new_cov, trace


def _advance(hyp: Hypothesis, token: int, logp: float, state, coverage) -> Hypothesis:
    return Hypothesis(
        tokens=hyp.tokens + [token],
        log_prob=hyp.log_prob + logp,
        state=state,
        coverage=coverage,
        sb_count=hyp.sb_count + (token == Vocabulary.SB),
        finished=(token == Vocabulary.STOP or hyp.sb_count + (token == Vocabulary.SB) >= 3),
    )


def decode(model: SummarizerParams, article_tokens, vocab: Vocabulary,
           mode: str = "greedy", beam_size: int = 4, max_decode_len: int = 120,
           use_coverage: bool = False, force_p_gen: float | None = None,
           collect_traces: bool = False) -> DecodeResult:
    """Generate a three-sentence summary for one article.

    Greedy follows the argmax; beam keeps ``beam_size`` live hypotheses with
    length-normalized final scoring.  Output token ids live in the extended
    vocabulary and are resolved back to surface tokens, so copied
    out-of-vocabulary tokens survive.
    """
    if not article_tokens:
        raise ValueError("decode: empty article")
    if mode not in ("greedy", "beam"):
        raise ValueError(f"decode: unknown mode {mode!r}")
    if beam_size < 1:
        raise ValueError("decode: beam size must be >= 1")
    if model.vocab_size != vocab.size:
        raise ValueError(
            f"decode: model vocab {model.vocab_size} != vocabulary size {vocab.size}"
        )
    ext = ExtendedVocab(vocab, article_tokens)
    article_ids = [ext.id(t) for t in article_tokens]
    runner = _StepRunner(model, article_ids, ext, use_coverage, force_p_gen)

    if mode == "greedy":
        hyp = runner.initial()
        prev = Vocabulary.START
        traces = []
        while len(hyp.tokens) < max_decode_len and not hyp.finished:
            logps, state, cov, trace = runner.step(hyp, prev)
            logps[list(_BANNED_STARTS)] = -np.inf
            token = int(np.argmax(logps))
            hyp = _advance(hyp, token, float(logps[token]), state, cov)
            prev = token
            if collect_traces:
                traces.append(trace)
        sentences, degenerate = _split_sentences(hyp.tokens, ext)
        return DecodeResult(sentences, hyp.tokens, degenerate, traces)

    beams = [runner.initial()]
    finished: list[Hypothesis] = []
    for _ in range(max_decode_len):
        candidates: list[tuple[float, int, int, Hypothesis]] = []
        for h_idx, hyp in enumerate(beams):
            prev = hyp.tokens[-1] if hyp.tokens else Vocabulary.START
            logps, state, cov, _ = runner.step(hyp, prev)
            logps[list(_BANNED_STARTS)] = -np.inf
            top = np.argsort(-logps, kind="stable")[: beam_size * 2]
            for token in top:
                nh = _advance(hyp, int(token), float(logps[token]), state, cov)
                candidates.append((-nh.log_prob, h_idx, int(token), nh))
        candidates.sort(key=lambda c: (c[0], c[1], c[2]))
        beams = []
        for _, _, _, nh in candidates:
            if nh.finished:
                finished.append(nh)
            else:
                beams.append(nh)
            if len(beams) >= beam_size:
                break
        if not beams or len(finished) >= beam_size:
            break
    pool = finished if finished else beams
    best = max(pool, key=lambda h: (h.score(), -len(h.tokens)))
    sentences, degenerate = _split_sentences(best.tokens, ext)
    return DecodeResult(sentences, best.tokens, degenerate, [])
