"""Attentive-LSTM knowledge tracing network with hand-derived gradients.

Architecture per sequence (s_1,a_1)..(s_T,a_T):

  * each consumed interaction is embedded response-aware: a correct answer
    concatenates (skill embedding, correct-response embedding), a wrong one
    concatenates (wrong-response embedding, skill embedding);
  * a single-layer LSTM turns embeddings e_1..e_{T-1} into hidden states
    h_1..h_{T-1} (h_0 = c_0 = 0);
  * to predict the response at step t, the hidden states h_1..h_{t-2} are
    aggregated by a small attention head (tanh projection, dot-product score
    against a learned context vector, softmax over the causal window) and the
    aggregate is concatenated with h_{t-1};
  * an affine layer maps the composite to one logit per skill, a sigmoid
    gives per-skill mastery probabilities, and the probability at the
    attempted skill is scored with binary cross-entropy.

The loss is the mean over sequences of the per-sequence mean BCE over its
T-1 targets. ``backward`` returns exact gradients for every parameter array
and for the input embeddings (the hook adversarial training perturbs);
everything is float64 and validated against central finite differences.
"""

from __future__ import annotations

import base64
import datetime as _dt
import hashlib
import json
import math
from dataclasses import dataclass, fields

import numpy as np

from .data import Batch
from .linalg import FLOAT, Rng, ShapeError, sigmoid, softmax, tanh
from .metrics import PROB_CLAMP

PARAM_NAMES = (
    "skill_emb",
    "resp_emb",
    "lstm_w",
    "lstm_u",
    "lstm_b",
    "attn_w",
    "attn_b",
    "attn_u",
    "head_w",
    "head_b",
)

# lstm_w/lstm_u/lstm_b stack the four gates in blocks: input, forget,
# candidate, output.
GATE_ORDER = ("input", "forget", "candidate", "output")

ATTENTION_WINDOWS = ("causal", "sequence")


class CheckpointError(ValueError):
    """Unreadable, corrupted, or incompatible checkpoint file."""


@dataclass
class ModelParams:
    """All trainable arrays (float64)."""

    skill_emb: np.ndarray  # [S, skill_dim]
    resp_emb: np.ndarray  # [2, resp_dim]; row 0 = wrong, row 1 = correct
    lstm_w: np.ndarray  # [4H, skill_dim + resp_dim]
    lstm_u: np.ndarray  # [4H, H]
    lstm_b: np.ndarray  # [4H]
    attn_w: np.ndarray  # [attn_dim, H]
    attn_b: np.ndarray  # [attn_dim]
    attn_u: np.ndarray  # [attn_dim]
    head_w: np.ndarray  # [S, 2H]
    head_b: np.ndarray  # [S]

    @property
    def num_skills(self) -> int:
        return self.skill_emb.shape[0]

    @property
    def skill_dim(self) -> int:
        return self.skill_emb.shape[1]

    @property
    def resp_dim(self) -> int:
        return self.resp_emb.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.lstm_u.shape[1]

    @property
    def attn_dim(self) -> int:
        return self.attn_w.shape[0]

    @property
    def input_dim(self) -> int:
        return self.skill_dim + self.resp_dim

    def named_arrays(self) -> list[tuple[str, np.ndarray]]:
        return [(f.name, getattr(self, f.name)) for f in fields(self)]

    def copy(self) -> "ModelParams":
        return ModelParams(**{name: arr.copy() for name, arr in self.named_arrays()})


@dataclass
class GradientSet:
    """Array-for-array mirror of ModelParams plus input-embedding gradients."""

    params: dict[str, np.ndarray]
    d_embed: np.ndarray  # [L-1, B, input_dim]; exact zeros at padded steps


@dataclass
class ForwardTrace:
    """Everything the backward pass and the visualizers need, per batch.

    Time-major layout: axis 0 indexes the L-1 consumed steps (equivalently
    the L-1 prediction targets), axis 1 the batch rows.
    """

    embeddings: np.ndarray  # [n, B, d_in]
    gates: np.ndarray  # [n, B, 4H] post-activation, gate blocks per GATE_ORDER
    cell: np.ndarray  # [n, B, H]
    cell_tanh: np.ndarray  # [n, B, H]
    hidden: np.ndarray  # [n, B, H]
    attn_hidden: np.ndarray | None  # [n, B, attn_dim]
    attn_logits: np.ndarray | None  # [n, B]
    attn_weights: list[np.ndarray]  # per target k: [k, B] (softmax over window)
    seq_attn_weights: np.ndarray | None  # [n, B], "sequence" window mode only
    agg_hidden: np.ndarray  # [n, B, H]
    composite: np.ndarray  # [n, B, 2H]
    probs: np.ndarray  # [n, B, S] full per-skill mastery probabilities
    pred: np.ndarray  # [n, B] probability at the attempted skill
    step_mask: np.ndarray  # bool [n, B]; valid input steps == valid targets
    target_skills: np.ndarray  # int64 [n, B] (clipped to 0 where padded)
    attention_enabled: bool
    attention_window: str
    batch: Batch


def glorot(rng: Rng, rows: int, cols: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, size=(rows, cols)).astype(FLOAT)


def init_params(
    num_skills: int,
    skill_dim: int,
    resp_dim: int,
    hidden_dim: int,
    attn_dim: int,
    rng: Rng,
) -> ModelParams:
    """Glorot-uniform weights, zero biases except forget-gate bias = 1."""
    d_in = skill_dim + resp_dim
    h = hidden_dim
    gates_w = [glorot(rng.split(f"lstm_w_{g}"), h, d_in) for g in GATE_ORDER]
    gates_u = [glorot(rng.split(f"lstm_u_{g}"), h, h) for g in GATE_ORDER]
    lstm_b = np.zeros(4 * h, dtype=FLOAT)
    lstm_b[h : 2 * h] = 1.0  # forget gate
    attn_limit = math.sqrt(6.0 / attn_dim)
    return ModelParams(
        skill_emb=glorot(rng.split("skill_emb"), num_skills, skill_dim),
        resp_emb=glorot(rng.split("resp_emb"), 2, resp_dim),
        lstm_w=np.concatenate(gates_w, axis=0),
        lstm_u=np.concatenate(gates_u, axis=0),
        lstm_b=lstm_b,
        attn_w=glorot(rng.split("attn_w"), attn_dim, hidden_dim),
        attn_b=np.zeros(attn_dim, dtype=FLOAT),
        attn_u=rng.split("attn_u").uniform(-attn_limit, attn_limit, size=attn_dim).astype(FLOAT),
        head_w=glorot(rng.split("head_w"), num_skills, 2 * hidden_dim),
        head_b=np.zeros(num_skills, dtype=FLOAT),
    )


def zero_gradients(params: ModelParams) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(arr) for name, arr in params.named_arrays()}


# ---------------------------------------------------------------------------
# Single-vector reference operations. These define the per-step semantics;
# the batched forward below must agree with them (tested), and the trace/
# visualization code uses them directly.
# ---------------------------------------------------------------------------


def embed_interaction(params: ModelParams, skill: int, response: int) -> np.ndarray:
    """Response-aware embedding: order of the concatenation encodes a."""
    if not 0 <= skill < params.num_skills:
        raise ShapeError(f"skill id {skill} out of range [0, {params.num_skills})")
    if response not in (0, 1):
        raise ValueError(f"response must be 0 or 1, got {response!r}")
    if response == 1:
        return np.concatenate([params.skill_emb[skill], params.resp_emb[1]])
    return np.concatenate([params.resp_emb[0], params.skill_emb[skill]])


def lstm_step(
    params: ModelParams, e: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """One LSTM cell update; returns (h, c)."""
    h = params.hidden_dim
    z = params.lstm_w @ e + params.lstm_u @ h_prev + params.lstm_b
    gi = sigmoid(z[0:h])
    gf = sigmoid(z[h : 2 * h])
    gg = tanh(z[2 * h : 3 * h])
    go = sigmoid(z[3 * h : 4 * h])
    c = gf * c_prev + gi * gg
    return go * tanh(c), c


def attend_history(params: ModelParams, hiddens) -> np.ndarray:
    """Softmax-weighted aggregate of past hidden states.

    ``hiddens`` is the causal window (may be empty, giving a zero vector).
    """
    hiddens = list(hiddens)
    if not hiddens:
        return np.zeros(params.hidden_dim, dtype=FLOAT)
    stack = np.stack(hiddens)  # [k, H]
    u = tanh(stack @ params.attn_w.T + params.attn_b)
    weights = softmax(u @ params.attn_u)
    return weights @ stack


def compose(agg: np.ndarray, current: np.ndarray) -> np.ndarray:
    """Concatenate aggregated history with the current hidden state."""
    if agg.shape != current.shape:
        raise ShapeError(f"compose expects equal lengths, got {agg.shape} and {current.shape}")
    return np.concatenate([agg, current])


def predict_step(
    params: ModelParams, composite: np.ndarray, skill: int
) -> tuple[np.ndarray, float]:
    """Per-skill mastery probabilities and the one at the attempted skill."""
    if not 0 <= skill < params.num_skills:
        raise ShapeError(f"skill id {skill} out of range [0, {params.num_skills})")
    probs = sigmoid(params.head_w @ composite + params.head_b)
    return probs, float(probs[skill])


# ---------------------------------------------------------------------------
# Batched forward / backward.
# ---------------------------------------------------------------------------


def build_embeddings(params: ModelParams, batch: Batch) -> np.ndarray:
    """Embed the consumed interactions of a batch; padded steps are zero."""
    n = batch.max_len - 1
    b = batch.size
    d_in = params.input_dim
    d_s = params.skill_dim
    d_a = params.resp_dim
    skills = batch.skills[:, :n].T  # [n, B]
    resps = batch.responses[:, :n].T
    step_mask = _step_mask(batch)
    out = np.zeros((n, b, d_in), dtype=FLOAT)
    m1 = step_mask & (resps == 1)
    m0 = step_mask & (resps == 0)
    if np.any(m1):
        out[m1, :d_s] = params.skill_emb[skills[m1]]
        out[m1, d_s:] = params.resp_emb[1]
    if np.any(m0):
        out[m0, :d_a] = params.resp_emb[0]
        out[m0, d_a:] = params.skill_emb[skills[m0]]
    return out


def _step_mask(batch: Batch) -> np.ndarray:
    # Step t is a consumed input (and target t is real) iff t < seq_len - 1.
    n = batch.max_len - 1
    return (np.arange(n)[:, None] < (batch.seq_lens[None, :] - 1)).astype(bool)


def forward(
    params: ModelParams,
    batch: Batch,
    attention_enabled: bool = True,
    attention_window: str = "causal",
    embeddings: np.ndarray | None = None,
) -> tuple[ForwardTrace, float]:
    """Run the full network over a batch; returns the trace and the loss.

    ``embeddings`` overrides the table lookup (used for adversarial inputs);
    gradients w.r.t. the embedding tables still flow through the lookup
    indices on the backward pass.

    ``attention_window`` picks how attention weights are normalized:
    "causal" renormalizes over each prediction's own window; "sequence"
    normalizes once over all aggregable states and reuses prefix weights.
    """
    if attention_window not in ATTENTION_WINDOWS:
        raise ValueError(f"attention_window must be one of {ATTENTION_WINDOWS}")
    if batch.num_skills != params.num_skills:
        raise ShapeError(
            f"batch built for {batch.num_skills} skills, model has {params.num_skills}"
        )
    n = batch.max_len - 1
    b = batch.size
    hd = params.hidden_dim
    if embeddings is None:
        embeddings = build_embeddings(params, batch)
    elif embeddings.shape != (n, b, params.input_dim):
        raise ShapeError(
            f"embedding override has shape {embeddings.shape}, "
            f"expected {(n, b, params.input_dim)}"
        )

    gates = np.empty((n, b, 4 * hd), dtype=FLOAT)
    cell = np.empty((n, b, hd), dtype=FLOAT)
    cell_tanh = np.empty((n, b, hd), dtype=FLOAT)
    hidden = np.empty((n, b, hd), dtype=FLOAT)

    # Pre-activation input contributions for all steps at once.
    in_part = embeddings @ params.lstm_w.T + params.lstm_b
    h = np.zeros((b, hd), dtype=FLOAT)
    c = np.zeros((b, hd), dtype=FLOAT)
    for t in range(n):
        z = in_part[t] + h @ params.lstm_u.T
        gi = sigmoid(z[:, 0:hd])
        gf = sigmoid(z[:, hd : 2 * hd])
        gg = tanh(z[:, 2 * hd : 3 * hd])
        go = sigmoid(z[:, 3 * hd :])
        c = gf * c + gi * gg
        tc = np.tanh(c)
        h = go * tc
        gates[t, :, 0:hd] = gi
        gates[t, :, hd : 2 * hd] = gf
        gates[t, :, 2 * hd : 3 * hd] = gg
        gates[t, :, 3 * hd :] = go
        cell[t] = c
        cell_tanh[t] = tc
        hidden[t] = h

    step_mask = _step_mask(batch)
    attn_hidden = None
    attn_logits = None
    attn_weights: list[np.ndarray] = []
    seq_attn_weights = None
    agg = np.zeros((n, b, hd), dtype=FLOAT)
    if attention_enabled:
        attn_hidden = np.tanh(hidden @ params.attn_w.T + params.attn_b)
        attn_logits = attn_hidden @ params.attn_u  # [n, B]
        if attention_window == "causal":
            attn_weights.append(np.zeros((0, b), dtype=FLOAT))
            for k in range(1, n):
                w = attn_logits[:k]
                w = np.exp(w - w.max(axis=0, keepdims=True))
                w = w / w.sum(axis=0, keepdims=True)
                attn_weights.append(w)
                agg[k] = np.einsum("jb,jbh->bh", w, hidden[:k])
        else:
            # One softmax per row over every state that any window can use
            # (j < seq_len - 2); each prediction then takes its prefix sum.
            support = np.arange(n)[:, None] < (batch.seq_lens[None, :] - 2)
            shifted = np.where(support, attn_logits, -np.inf)
            peak = shifted.max(axis=0, keepdims=True)
            expw = np.where(support, np.exp(shifted - np.where(np.isfinite(peak), peak, 0.0)), 0.0)
            total = expw.sum(axis=0, keepdims=True)
            seq_attn_weights = np.divide(expw, total, out=np.zeros_like(expw), where=total > 0)
            weighted = seq_attn_weights[:, :, None] * hidden
            prefix = np.cumsum(weighted, axis=0)
            agg[1:] = prefix[:-1]

    composite = np.concatenate([agg, hidden], axis=2)
    if attention_enabled:
        logits = composite @ params.head_w.T + params.head_b
    else:
        # The aggregate half is identically zero; skipping it keeps the
        # ablated model bit-identical to a plain LSTM with the right-half
        # head columns.
        logits = hidden @ params.head_w[:, hd:].T + params.head_b
    probs = sigmoid(logits)

    target_skills = np.where(step_mask, batch.skills[:, 1:].T, 0)
    pred = np.take_along_axis(probs, target_skills[:, :, None], axis=2)[:, :, 0]

    labels = batch.responses[:, 1:].T.astype(FLOAT)
    clamped = np.clip(pred, PROB_CLAMP, 1.0 - PROB_CLAMP)
    nll = -(labels * np.log(clamped) + (1.0 - labels) * np.log(1.0 - clamped))
    per_seq = np.sum(np.where(step_mask, nll, 0.0), axis=0) / (batch.seq_lens - 1)
    loss = float(per_seq.mean())

    trace = ForwardTrace(
        embeddings=embeddings,
        gates=gates,
        cell=cell,
        cell_tanh=cell_tanh,
        hidden=hidden,
        attn_hidden=attn_hidden,
        attn_logits=attn_logits,
        attn_weights=attn_weights,
        seq_attn_weights=seq_attn_weights,
        agg_hidden=agg,
        composite=composite,
        probs=probs,
        pred=pred,
        step_mask=step_mask,
        target_skills=target_skills,
        attention_enabled=attention_enabled,
        attention_window=attention_window,
        batch=batch,
    )
    return trace, loss


def backward(params: ModelParams, trace: ForwardTrace, batch: Batch) -> GradientSet:
    """Exact gradients of the batch loss for all parameters and embeddings."""
    if trace.batch is not batch and not (
        np.array_equal(trace.batch.skills, batch.skills)
        and np.array_equal(trace.batch.responses, batch.responses)
    ):
        raise ShapeError("forward trace was produced from a different batch")
    n, b, _ = trace.hidden.shape
    hd = params.hidden_dim
    grads = zero_gradients(params)

    # d(loss)/d(selected logit) = (p - a) / (B * (T_b - 1)) at valid targets.
    labels = batch.responses[:, 1:].T.astype(FLOAT)
    weight = 1.0 / (b * (batch.seq_lens - 1).astype(FLOAT))  # [B]
    dz_sel = np.where(trace.step_mask, (trace.pred - labels) * weight[None, :], 0.0)

    flat_mask = trace.step_mask.ravel()
    tgt_flat = trace.target_skills.ravel()[flat_mask]
    dz_flat = dz_sel.ravel()[flat_mask]

    dhidden = np.zeros((n, b, hd), dtype=FLOAT)
    if trace.attention_enabled:
        comp_flat = trace.composite.reshape(n * b, 2 * hd)[flat_mask]
        np.add.at(grads["head_w"], tgt_flat, dz_flat[:, None] * comp_flat)
        np.add.at(grads["head_b"], tgt_flat, dz_flat)
        dcomp = np.zeros((n * b, 2 * hd), dtype=FLOAT)
        dcomp[flat_mask] = dz_flat[:, None] * params.head_w[tgt_flat]
        dcomp = dcomp.reshape(n, b, 2 * hd)
        dagg = dcomp[:, :, :hd]
        dhidden += dcomp[:, :, hd:]
        _attention_backward(params, trace, dagg, dhidden, grads)
    else:
        hid_flat = trace.hidden.reshape(n * b, hd)[flat_mask]
        np.add.at(grads["head_w"][:, hd:], tgt_flat, dz_flat[:, None] * hid_flat)
        np.add.at(grads["head_b"], tgt_flat, dz_flat)
        dh_head = np.zeros((n * b, hd), dtype=FLOAT)
        dh_head[flat_mask] = dz_flat[:, None] * params.head_w[tgt_flat, hd:]
        dhidden += dh_head.reshape(n, b, hd)

    # LSTM backward through time.
    d_embed = np.empty((n, b, params.input_dim), dtype=FLOAT)
    dh = np.zeros((b, hd), dtype=FLOAT)
    dc = np.zeros((b, hd), dtype=FLOAT)
    zeros_bh = np.zeros((b, hd), dtype=FLOAT)
    for t in range(n - 1, -1, -1):
        dh_t = dhidden[t] + dh
        gi = trace.gates[t, :, 0:hd]
        gf = trace.gates[t, :, hd : 2 * hd]
        gg = trace.gates[t, :, 2 * hd : 3 * hd]
        go = trace.gates[t, :, 3 * hd :]
        tc = trace.cell_tanh[t]
        do = tc * dh_t
        dc_t = dc + go * (1.0 - tc * tc) * dh_t
        c_prev = trace.cell[t - 1] if t > 0 else zeros_bh
        h_prev = trace.hidden[t - 1] if t > 0 else zeros_bh
        dzi = gi * (1.0 - gi) * (gg * dc_t)
        dzf = gf * (1.0 - gf) * (c_prev * dc_t)
        dzg = (1.0 - gg * gg) * (gi * dc_t)
        dzo = go * (1.0 - go) * do
        dz = np.concatenate([dzi, dzf, dzg, dzo], axis=1)  # [B, 4H]
        grads["lstm_w"] += dz.T @ trace.embeddings[t]
        grads["lstm_u"] += dz.T @ h_prev
        grads["lstm_b"] += dz.sum(axis=0)
        d_embed[t] = dz @ params.lstm_w
        dh = dz @ params.lstm_u
        dc = gf * dc_t

    _embedding_backward(params, batch, trace.step_mask, d_embed, grads)
    return GradientSet(params=grads, d_embed=d_embed)


def _attention_backward(params, trace, dagg, dhidden, grads) -> None:
    n, b, hd = trace.hidden.shape
    u = trace.attn_hidden
    dlogits = np.zeros((n, b), dtype=FLOAT)
    if trace.attention_window == "causal":
        for k in range(1, n):
            dagg_k = dagg[k]
            if not dagg_k.any():
                continue
            w = trace.attn_weights[k]  # [k, B]
            window = trace.hidden[:k]
            dw = np.einsum("bh,jbh->jb", dagg_k, window)
            dhidden[:k] += w[:, :, None] * dagg_k[None, :, :]
            dlogits[:k] += w * (dw - np.sum(w * dw, axis=0, keepdims=True))
    else:
        w = trace.seq_attn_weights  # [n, B], zero outside each row's support
        dweights = np.zeros((n, b), dtype=FLOAT)
        for k in range(1, n):
            dagg_k = dagg[k]
            if not dagg_k.any():
                continue
            dweights[:k] += np.einsum("bh,jbh->jb", dagg_k, trace.hidden[:k])
            dhidden[:k] += w[:k, :, None] * dagg_k[None, :, :]
        dlogits = w * (dweights - np.sum(w * dweights, axis=0, keepdims=True))
    du = dlogits[:, :, None] * params.attn_u[None, None, :]
    grads["attn_u"] += np.einsum("kb,kbw->w", dlogits, u)
    dpre = (1.0 - u * u) * du
    grads["attn_w"] += np.einsum("kbw,kbh->wh", dpre, trace.hidden)
    grads["attn_b"] += dpre.sum(axis=(0, 1))
    dhidden += dpre @ params.attn_w


def _embedding_backward(params, batch, step_mask, d_embed, grads) -> None:
    """Route embedding gradients into the two lookup tables."""
    n = step_mask.shape[0]
    d_s = params.skill_dim
    d_a = params.resp_dim
    skills = batch.skills[:, :n].T
    resps = batch.responses[:, :n].T
    m1 = step_mask & (resps == 1)
    m0 = step_mask & (resps == 0)
    if np.any(m1):
        de = d_embed[m1]
        np.add.at(grads["skill_emb"], skills[m1], de[:, :d_s])
        grads["resp_emb"][1] += de[:, d_s:].sum(axis=0)
    if np.any(m0):
        de = d_embed[m0]
        grads["resp_emb"][0] += de[:, :d_a].sum(axis=0)
        np.add.at(grads["skill_emb"], skills[m0], de[:, d_a:])


# ---------------------------------------------------------------------------
# Checkpoints.
# ---------------------------------------------------------------------------

CHECKPOINT_FORMAT = "atkt-checkpoint"
CHECKPOINT_VERSION = 1


def _checkpoint_digest(arrays: dict[str, dict]) -> str:
    h = hashlib.sha256()
    for name in sorted(arrays):
        entry = arrays[name]
        h.update(name.encode())
        h.update(json.dumps(entry["shape"]).encode())
        h.update(entry["data"].encode())
    return h.hexdigest()


def save_checkpoint(path, params: ModelParams, config: dict, timestamp: bool = True) -> None:
    """Write a versioned, checksummed JSON checkpoint.

    Layout: header fields (format, version, optional created), a ``config``
    echo, and per-array entries with shape, dtype and base64 little-endian
    C-order float64 bytes; ``checksum`` is a SHA-256 over names, shapes and
    payloads. Stable across releases.
    """
    arrays = {}
    for name, arr in params.named_arrays():
        data = np.ascontiguousarray(arr, dtype="<f8")
        arrays[name] = {
            "shape": list(arr.shape),
            "dtype": "float64",
            "data": base64.b64encode(data.tobytes()).decode("ascii"),
        }
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": config,
        "arrays": arrays,
        "checksum": _checkpoint_digest(arrays),
    }
    if timestamp:
        doc["created"] = _dt.datetime.now(_dt.timezone.utc).isoformat()
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path) -> tuple[ModelParams, dict]:
    """Read a checkpoint back; returns (params, config echo)."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not an {CHECKPOINT_FORMAT} file")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {doc.get('version')}")
    arrays = doc["arrays"]
    if set(arrays) != set(PARAM_NAMES):
        raise CheckpointError(f"checkpoint arrays {sorted(arrays)} do not match {sorted(PARAM_NAMES)}")
    if _checkpoint_digest(arrays) != doc.get("checksum"):
        raise CheckpointError(f"checksum mismatch in {path}")
    decoded = {}
    for name, entry in arrays.items():
        raw = base64.b64decode(entry["data"])
        decoded[name] = np.frombuffer(raw, dtype="<f8").astype(FLOAT).reshape(entry["shape"])
    return ModelParams(**decoded), doc.get("config", {})
