"""Attentional encoder-decoder with a factored output layer.

Per decoding step the model emits two outputs: the first-factor token
(word/subword/operation) directly from the readout vector, and a small
categorical second factor conditioned additionally on the embedding of
the chosen first factor. The decoder LSTM consumes the concatenated
embeddings of both previous outputs plus the attention context, so the
second factor feeds back into the state.

Training optimizes the per-token sum of both cross-entropies (optionally
label-smoothed), averaged over tokens. Gradients come from reverse-mode
differentiation (torch autograd); tests check them against central finite
differences.
"""

import json
import math
import os
import random
from dataclasses import dataclass, asdict

import numpy as np
import torch
from torch import nn

PAD_ID, BOS_ID, EOS_ID, UNK_ID = 0, 1, 2, 3

FORMAT_VERSION = 1


class ModelError(ValueError):
    """Invalid configuration or input to the model."""


class TrainingDiverged(RuntimeError):
    """Training aborted on a non-finite loss."""


@dataclass
class ModelConfig:
    src_vocab: int
    tgt_vocab: int
    factor_vocab: int = 0  # 0 = single-output baseline
    embed_dim: int = 32
    hidden_dim: int = 64
    encoder_layers: int = 1
    label_smoothing: float = 0.0
    dropout: float = 0.0
    coverage: bool = False
    layerwise_pretraining: bool = False  # placeholder, rejected at build time
    seed: int = 0

    @property
    def factored(self):
        return self.factor_vocab > 0

    def validate(self):
        if min(self.src_vocab, self.tgt_vocab, self.embed_dim, self.hidden_dim,
               self.encoder_layers) < 1:
            raise ModelError("all dimensions must be >= 1")
        if self.factor_vocab < 0:
            raise ModelError("factor vocab must be >= 0")
        if not 0.0 <= self.label_smoothing < 1.0:
            raise ModelError("label smoothing must be in [0, 1)")
        if self.layerwise_pretraining:
            raise ModelError("layer-wise pretraining is not supported")


def desk_scale(src_vocab, tgt_vocab, factor_vocab=0, **kw):
    return ModelConfig(src_vocab, tgt_vocab, factor_vocab,
                       embed_dim=32, hidden_dim=64, encoder_layers=1, **kw)


def paper_scale(src_vocab, tgt_vocab, factor_vocab=0, **kw):
    # Recorded for reference; never trained here.
    kw.setdefault("label_smoothing", 0.1)
    kw.setdefault("dropout", 0.3)
    return ModelConfig(src_vocab, tgt_vocab, factor_vocab,
                       embed_dim=620, hidden_dim=1000, encoder_layers=4, **kw)


class FactoredSeq2Seq(nn.Module):
    """Bidirectional-LSTM encoder, additive attention, factored softmax."""

    def __init__(self, config):
        super().__init__()
        config.validate()
        self.config = config
        torch.manual_seed(config.seed)
        E, H = config.embed_dim, config.hidden_dim
        A = 2 * H  # annotation size (forward + backward encoder states)
        self.src_embed = nn.Embedding(config.src_vocab, E, padding_idx=PAD_ID)
        self.encoder = nn.LSTM(E, H, num_layers=config.encoder_layers,
                               bidirectional=True)
        self.e1 = nn.Embedding(config.tgt_vocab, E)
        if config.factored:
            # one extra row serves as the begin-of-sequence factor embedding
            self.e2 = nn.Embedding(config.factor_vocab + 1, E)
            dec_in = 2 * E + A
        else:
            self.e2 = None
            dec_in = E + A
        self.decoder_cell = nn.LSTMCell(dec_in, H)
        self.att_state = nn.Linear(H, H)
        self.att_annot = nn.Linear(A, H, bias=False)
        self.att_cov = nn.Linear(1, H, bias=False)
        self.att_v = nn.Linear(H, 1, bias=False)
        self.readout = nn.Linear(H + A, H)
        self.out1 = nn.Linear(H, config.tgt_vocab, bias=False)
        if config.factored:
            self.out2 = nn.Linear(H + E, config.factor_vocab, bias=False)
        else:
            self.out2 = None
        self.readout_dropout = nn.Dropout(config.dropout)
        self._init_params()

    @property
    def y2_bos(self):
        return self.config.factor_vocab

    def _init_params(self):
        scale = 0.08
        emb_scale = scale / math.sqrt(self.config.embed_dim)
        for name, p in self.named_parameters():
            if name.startswith(("src_embed", "e1", "e2")):
                nn.init.uniform_(p, -emb_scale, emb_scale)
            else:
                nn.init.uniform_(p, -scale, scale)
        # forget-gate bias 1.0 for stability of small models
        H = self.config.hidden_dim
        for name, p in list(self.encoder.named_parameters()) + \
                list(self.decoder_cell.named_parameters()):
            with torch.no_grad():
                if name.startswith("bias_ih"):
                    p[H:2 * H].fill_(1.0)
                elif name.startswith("bias_hh"):
                    p[H:2 * H].fill_(0.0)

    # ---- forward pieces -------------------------------------------------

    def encode(self, src_ids):
        """Annotations for one source sentence: [J, 2H]."""
        ids = torch.as_tensor(src_ids, dtype=torch.long)
        if ids.numel() == 0:
            raise ModelError("empty source sequence")
        if ids.max().item() >= self.config.src_vocab or ids.min().item() < 0:
            raise ModelError("source id out of vocabulary")
        emb = self.src_embed(ids).unsqueeze(1)  # [J, 1, E]
        out, _ = self.encoder(emb)
        return out.squeeze(1)  # [J, 2H]

    def initial_state(self, batch=1):
        H = self.config.hidden_dim
        p = next(self.parameters())
        zeros = torch.zeros(batch, H, dtype=p.dtype, device=p.device)
        return zeros, zeros.clone()

    def attend(self, state, annotations, coverage=None):
        """Additive attention.

        state: (h, c) with h [B, H]; annotations [J, 2H] shared by the
        batch or [B, J, 2H]; coverage [B, J] accumulated attention or None.
        Returns context [B, 2H] and weights [B, J].
        """
        h = state[0]
        if annotations.dim() == 2:
            annotations = annotations.unsqueeze(0).expand(h.shape[0], -1, -1)
        energy = self.att_state(h).unsqueeze(1) + self.att_annot(annotations)
        if coverage is not None:
            energy = energy + self.att_cov(coverage.unsqueeze(-1))
        scores = self.att_v(torch.tanh(energy)).squeeze(-1)  # [B, J]
        alpha = torch.softmax(scores, dim=-1)
        context = torch.bmm(alpha.unsqueeze(1), annotations).squeeze(1)
        return context, alpha

    def decoder_step(self, state, y1_prev, y2_prev, context):
        """One decoder step; returns the new (h, c) state and readout t."""
        y1_prev = torch.as_tensor(y1_prev, dtype=torch.long)
        if y1_prev.max().item() >= self.config.tgt_vocab or y1_prev.min().item() < 0:
            raise ModelError("first-factor id out of vocabulary")
        parts = [self.e1(y1_prev)]
        if self.config.factored:
            y2_prev = torch.as_tensor(y2_prev, dtype=torch.long)
            if y2_prev.max().item() > self.y2_bos or y2_prev.min().item() < 0:
                raise ModelError("second-factor id out of vocabulary")
            parts.append(self.e2(y2_prev))
        parts.append(context)
        h, c = self.decoder_cell(torch.cat(parts, dim=-1), state)
        t = torch.tanh(self.readout(torch.cat([h, context], dim=-1)))
        t = self.readout_dropout(t)
        return (h, c), t

    def factor1_logits(self, t):
        return self.out1(t)

    def output_factor1(self, t):
        return torch.softmax(self.factor1_logits(t), dim=-1)

    def factor2_logits(self, t, y1):
        if not self.config.factored:
            raise ModelError("model has no second factor")
        y1 = torch.as_tensor(y1, dtype=torch.long)
        return self.out2(torch.cat([t, self.e1(y1)], dim=-1))

    def output_factor2(self, t, y1):
        return torch.softmax(self.factor2_logits(t, y1), dim=-1)

    # ---- teacher-forced scoring -----------------------------------------

    def step_log_distributions(self, src_ids, y1_ids, y2_ids=None):
        """Per-step log distributions teacher-forced on one sentence.

        y1_ids (and y2_ids, for factored models) must include the final
        end-of-sequence step. Returns ([T, V1], [T, V2] or None).
        """
        if self.config.factored and (y2_ids is None or len(y2_ids) != len(y1_ids)):
            raise ModelError("factor streams must have equal length")
        annotations = self.encode(src_ids)
        state = self.initial_state(1)
        coverage = None
        if self.config.coverage:
            coverage = torch.zeros(1, annotations.shape[0],
                                   dtype=annotations.dtype)
        y1_prev = torch.tensor([BOS_ID])
        y2_prev = torch.tensor([self.y2_bos]) if self.config.factored else None
        log1, log2 = [], []
        for i, y1 in enumerate(y1_ids):
            context, alpha = self.attend(state, annotations, coverage)
            if coverage is not None:
                coverage = coverage + alpha
            state, t = self.decoder_step(state, y1_prev, y2_prev, context)
            log1.append(torch.log_softmax(self.factor1_logits(t), dim=-1))
            if self.config.factored:
                y1_t = torch.tensor([y1])
                log2.append(torch.log_softmax(
                    self.factor2_logits(t, y1_t), dim=-1))
                y2_prev = torch.tensor([y2_ids[i]])
            y1_prev = torch.tensor([y1])
        l1 = torch.cat(log1, dim=0)
        l2 = torch.cat(log2, dim=0) if log2 else None
        return l1, l2


def _smoothed_nll(logp, targets, eps):
    """(1-eps) * NLL(target) + eps * mean NLL over the vocabulary."""
    nll = -logp.gather(-1, targets.unsqueeze(-1)).squeeze(-1)
    if eps == 0.0:
        return nll
    return (1.0 - eps) * nll + eps * (-logp.mean(dim=-1))


def loss(model, batch, label_smoothing=None, include_factor2=True):
    """Mean per-token summed cross-entropy of both factors over a batch.

    batch: list of (src_ids, y1_ids, y2_ids) with y2_ids None for
    single-output models; target streams include the final EOS step.
    """
    eps = model.config.label_smoothing if label_smoothing is None else label_smoothing
    total = None
    tokens = 0
    for example in batch:
        src_ids, y1_ids, y2_ids = example
        l1, l2 = model.step_log_distributions(src_ids, y1_ids, y2_ids)
        y1_t = torch.as_tensor(y1_ids, dtype=torch.long)
        ce = _smoothed_nll(l1, y1_t, eps)
        if model.config.factored and include_factor2:
            y2_t = torch.as_tensor(y2_ids, dtype=torch.long)
            ce = ce + _smoothed_nll(l2, y2_t, eps)
        s = ce.sum()
        total = s if total is None else total + s
        tokens += len(y1_ids)
    if tokens == 0:
        raise ModelError("empty batch")
    return total / tokens


def grad(model, batch, label_smoothing=None, include_factor2=True):
    """Reverse-mode gradients of loss() for every parameter tensor."""
    model.zero_grad()
    value = loss(model, batch, label_smoothing, include_factor2)
    value.backward()
    out = {}
    for name, p in model.named_parameters():
        g = p.grad
        out[name] = torch.zeros_like(p) if g is None else g.detach().clone()
    return out


def perplexity(model, corpus):
    """exp of mean per-token joint negative log-likelihood (no smoothing)."""
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            return float(torch.exp(loss(model, corpus, label_smoothing=0.0)))
    finally:
        model.train(was_training)


def train(model, train_data, val_data, steps, batch_size=16, lr=1e-3,
          lr_decay=0.9, eval_every=50, seed=0, log_every=None):
    """Adam training with perplexity-driven learning-rate decay.

    The learning rate is multiplied by lr_decay whenever the validation
    perplexity increases w.r.t. the previous evaluation. Batch order is
    fixed by the seed, so a run is deterministic. Returns the training log
    (one dict per step that evaluated or logged).
    """
    if not train_data or not val_data:
        raise ModelError("corpora must be non-empty")
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    rng = random.Random(seed)
    order = list(range(len(train_data)))
    rng.shuffle(order)
    cursor = 0
    log = []
    prev_ppl = None
    cur_lr = lr
    model.train()
    for step in range(1, steps + 1):
        if cursor + batch_size > len(order):
            rng.shuffle(order)
            cursor = 0
        batch = [train_data[i] for i in order[cursor:cursor + batch_size]]
        cursor += batch_size
        opt.zero_grad()
        value = loss(model, batch)
        if not torch.isfinite(value):
            raise TrainingDiverged("non-finite loss at step %d" % step)
        value.backward()
        opt.step()
        value = value.detach()
        entry = None
        if step % eval_every == 0 or step == steps:
            ppl = perplexity(model, val_data)
            if prev_ppl is not None and ppl > prev_ppl:
                cur_lr *= lr_decay
                for group in opt.param_groups:
                    group["lr"] = cur_lr
            prev_ppl = ppl
            entry = {"step": step, "loss": float(value), "val_ppl": ppl,
                     "lr": cur_lr}
        elif log_every and step % log_every == 0:
            entry = {"step": step, "loss": float(value), "lr": cur_lr}
        if entry:
            log.append(entry)
    model.eval()
    return log


# ---- serialization ------------------------------------------------------

def save_model(model, model_dir, application="none", factor_labels=None,
               src_vocab=None, tgt_vocab=None):
    """Write manifest.json + weights.bin (little-endian float32)."""
    os.makedirs(model_dir, exist_ok=True)
    tensors = [{"name": name, "shape": list(p.shape)}
               for name, p in model.named_parameters()]
    manifest = {
        "format_version": FORMAT_VERSION,
        "config": asdict(model.config),
        "seed": model.config.seed,
        "application": application,
        "factor_labels": factor_labels,
        "tensors": tensors,
    }
    with open(os.path.join(model_dir, "manifest.json"), "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2)
    with open(os.path.join(model_dir, "weights.bin"), "wb") as f:
        for _, p in model.named_parameters():
            f.write(p.detach().to(torch.float32).numpy()
                    .astype("<f4").tobytes())
    if src_vocab is not None:
        src_vocab.save(os.path.join(model_dir, "source.vocab"))
    if tgt_vocab is not None:
        tgt_vocab.save(os.path.join(model_dir, "target.vocab"))


def load_model(model_dir):
    """Rebuild a model from a model directory; returns (model, manifest)."""
    with open(os.path.join(model_dir, "manifest.json"), encoding="utf-8") as f:
        manifest = json.load(f)
    if manifest.get("format_version") != FORMAT_VERSION:
        raise ModelError("unsupported model format version")
    config = ModelConfig(**manifest["config"])
    model = FactoredSeq2Seq(config)
    data = np.fromfile(os.path.join(model_dir, "weights.bin"), dtype="<f4")
    offset = 0
    with torch.no_grad():
        for spec, (name, p) in zip(manifest["tensors"], model.named_parameters()):
            if spec["name"] != name or list(p.shape) != spec["shape"]:
                raise ModelError("weights do not match manifest tensor %r" % name)
            n = p.numel()
            p.copy_(torch.from_numpy(data[offset:offset + n].copy())
                    .reshape(p.shape))
            offset += n
    if offset != data.size:
        raise ModelError("weights.bin size does not match manifest")
    model.eval()
    return model, manifest
