"""Tiny transformer encoder for binary offensive-language classification.

The network embeds hashed word tokens (scaled by sqrt(embed_dim), so the
small initial embeddings are not drowned out by the positional signal),
adds fixed sinusoidal positions,
runs post-LN encoder layers (multi-head self-attention and a GELU
feed-forward block, each with a residual connection) and classifies the
hidden vector at the CLS position with ``softmax(W h + b)``.

Forward and backward passes are written out by hand in numpy. Parameters
are stored as float32; all arithmetic runs in float64.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np

from .errors import EmptyInput, ShapeMismatch
from .tensor import DTYPE, ParameterSet, softmax

CLS_ID = 0
NOT, OFF = 0, 1
LABEL_NAMES = ("NOT", "OFF")

TOKEN_HASH_KEY = b"fedfuse-tokenizer-v1"
LN_EPS = 1e-5
MASK_VALUE = -1e9
INIT_STD = 0.02

_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)


@dataclass(frozen=True)
class ModelArchitecture:
    vocab_size: int = 8192
    embed_dim: int = 32
    num_heads: int = 2
    num_encoder_layers: int = 1
    max_seq_len: int = 64
    num_labels: int = 2
    ffn_dim: int = 64

    def __post_init__(self):
        if self.num_labels != 2:
            raise ValueError("num_labels is fixed at 2 (NOT, OFF)")
        if self.embed_dim % self.num_heads:
            raise ValueError("embed_dim must be divisible by num_heads")
        if self.vocab_size < 2 or self.max_seq_len < 1 or self.num_encoder_layers < 1:
            raise ValueError(f"invalid architecture {self}")

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.num_heads

    def descriptor(self) -> bytes:
        """Canonical JSON bytes; :attr:`arch_hash` digests exactly these."""
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":")).encode("utf-8")

    @property
    def arch_hash(self) -> str:
        return hashlib.sha256(self.descriptor()).hexdigest()

    @classmethod
    def from_dict(cls, d) -> "ModelArchitecture":
        return cls(**{k: int(v) for k, v in d.items()})

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        d, f, k = self.embed_dim, self.ffn_dim, self.num_labels
        shapes = {"embed.token": (self.vocab_size, d)}
        for i in range(self.num_encoder_layers):
            p = f"encoder.{i}."
            for m in ("q", "k", "v", "o"):
                shapes[p + f"attn.w{m}"] = (d, d)
                shapes[p + f"attn.b{m}"] = (d,)
            shapes[p + "ln1.gamma"] = (d,)
            shapes[p + "ln1.beta"] = (d,)
            shapes[p + "ffn.w1"] = (d, f)
            shapes[p + "ffn.b1"] = (f,)
            shapes[p + "ffn.w2"] = (f, d)
            shapes[p + "ffn.b2"] = (d,)
            shapes[p + "ln2.gamma"] = (d,)
            shapes[p + "ln2.beta"] = (d,)
        shapes["head.weight"] = (k, d)
        shapes["head.bias"] = (k,)
        return dict(sorted(shapes.items()))


@dataclass(frozen=True)
class TokenSequence:
    ids: tuple[int, ...]

    def __post_init__(self):
        if not self.ids or self.ids[0] != CLS_ID:
            raise ValueError("token sequence must start with the CLS id")

    def __len__(self):
        return len(self.ids)


@dataclass(frozen=True)
class ModelState:
    arch: ModelArchitecture
    params: ParameterSet

    def __post_init__(self):
        check_params(self.arch, self.params)


def check_params(arch: ModelArchitecture, params) -> None:
    expected = arch.param_shapes()
    if isinstance(params, ParameterSet) and params.arch_hash != arch.arch_hash:
        raise ShapeMismatch("parameter set arch_hash does not match the architecture")
    if set(params) != set(expected):
        diff = sorted(set(params) ^ set(expected))
        raise ShapeMismatch(f"parameter names do not match the architecture: {diff[:5]}")
    for name, shape in expected.items():
        if tuple(params[name].shape) != shape:
            raise ShapeMismatch(f"{name}: expected shape {shape}, got {tuple(params[name].shape)}")


# -- tokenization --------------------------------------------------------------

@lru_cache(maxsize=1 << 16)
def _token_hash(token: str) -> int:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=TOKEN_HASH_KEY).digest()
    return int.from_bytes(digest, "little")


def token_id(token: str, vocab_size: int) -> int:
    return 1 + _token_hash(token) % (vocab_size - 1)


def split_words(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def tokenize(text: str, arch: ModelArchitecture) -> TokenSequence:
    words = split_words(text)[: arch.max_seq_len - 1]
    return TokenSequence((CLS_ID, *(token_id(w, arch.vocab_size) for w in words)))


# -- initialization ------------------------------------------------------------

def base_id_for(arch: ModelArchitecture, seed: int) -> str:
    return f"P-seed{int(seed)}-{arch.arch_hash[:16]}"


def init_base(arch: ModelArchitecture, seed: int) -> ModelState:
    """Shared initialization: N(0, 0.02) weights, zero biases, unit LayerNorm gains."""
    rng = np.random.default_rng(int(seed))
    entries = {}
    for name, shape in arch.param_shapes().items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf == "gamma":
            entries[name] = np.ones(shape, dtype=DTYPE)
        elif leaf == "beta" or leaf.startswith("b") and len(shape) == 1:
            entries[name] = np.zeros(shape, dtype=DTYPE)
        else:
            entries[name] = (rng.standard_normal(shape) * INIT_STD).astype(DTYPE)
    params = ParameterSet(entries, base_id_for(arch, seed), arch.arch_hash)
    return ModelState(arch, params)


@lru_cache(maxsize=8)
def positional_encoding(max_len: int, dim: int) -> np.ndarray:
    pos = np.arange(max_len, dtype=np.float64)[:, None]
    i = np.arange(0, dim, 2, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, i / dim)
    pe = np.zeros((max_len, dim), dtype=np.float64)
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle[:, : dim // 2])
    pe.setflags(write=False)
    return pe


# -- batched forward / backward -----------------------------------------------

def pad_batch(seqs) -> tuple[np.ndarray, np.ndarray]:
    """Stack sequences into (ids, mask) arrays padded to the longest one."""
    if not seqs:
        raise EmptyInput("empty batch")
    width = max(len(s) for s in seqs)
    ids = np.zeros((len(seqs), width), dtype=np.int64)
    mask = np.zeros((len(seqs), width), dtype=bool)
    for row, s in enumerate(seqs):
        ids[row, : len(s)] = s.ids
        mask[row, : len(s)] = True
    return ids, mask


def _gelu(x):
    c = math.sqrt(2.0 / math.pi)
    t = np.tanh(c * (x + 0.044715 * x * x * x))
    return 0.5 * x * (1.0 + t), t


def _gelu_grad(x, t):
    c = math.sqrt(2.0 / math.pi)
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * c * (1.0 + 3 * 0.044715 * x * x)


def _layer_norm(x, gamma, beta):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + LN_EPS)
    xhat = xc * inv
    return xhat * gamma + beta, (xhat, inv)


def _layer_norm_back(dy, gamma, cache):
    xhat, inv = cache
    dgamma = (dy * xhat).reshape(-1, xhat.shape[-1]).sum(axis=0)
    dbeta = dy.reshape(-1, xhat.shape[-1]).sum(axis=0)
    dxhat = dy * gamma
    dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
    return dx, dgamma, dbeta


def _split_heads(x, heads):
    b, l, d = x.shape
    return x.reshape(b, l, heads, d // heads).transpose(0, 2, 1, 3)


def _merge_heads(x):
    b, h, l, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, l, h * dh)


def forward_logits(p, arch: ModelArchitecture, ids, mask, keep_cache=False):
    """Logits for a padded batch. ``p`` maps names to float64 arrays."""
    if ids.shape[1] > arch.max_seq_len:
        raise ShapeMismatch(f"sequence length {ids.shape[1]} exceeds max_seq_len {arch.max_seq_len}")
    heads, dh = arch.num_heads, arch.head_dim
    key_bias = np.where(mask, 0.0, MASK_VALUE)[:, None, None, :]
    x = math.sqrt(arch.embed_dim) * p["embed.token"][ids] + positional_encoding(arch.max_seq_len, arch.embed_dim)[: ids.shape[1]]
    caches = []
    for i in range(arch.num_encoder_layers):
        pre = f"encoder.{i}."
        q = _split_heads(x @ p[pre + "attn.wq"] + p[pre + "attn.bq"], heads)
        k = _split_heads(x @ p[pre + "attn.wk"] + p[pre + "attn.bk"], heads)
        v = _split_heads(x @ p[pre + "attn.wv"] + p[pre + "attn.bv"], heads)
        scores = q @ k.transpose(0, 1, 3, 2) / math.sqrt(dh) + key_bias
        attn = softmax(scores, axis=-1)
        ctx = _merge_heads(attn @ v)
        r1 = x + ctx @ p[pre + "attn.wo"] + p[pre + "attn.bo"]
        y1, ln1 = _layer_norm(r1, p[pre + "ln1.gamma"], p[pre + "ln1.beta"])
        z = y1 @ p[pre + "ffn.w1"] + p[pre + "ffn.b1"]
        g, t = _gelu(z)
        r2 = y1 + g @ p[pre + "ffn.w2"] + p[pre + "ffn.b2"]
        y2, ln2 = _layer_norm(r2, p[pre + "ln2.gamma"], p[pre + "ln2.beta"])
        if keep_cache:
            caches.append(dict(x=x, q=q, k=k, v=v, attn=attn, ctx=ctx, ln1=ln1, y1=y1,
                               z=z, g=g, t=t, ln2=ln2))
        x = y2
    h = x[:, 0, :]
    logits = h @ p["head.weight"].T + p["head.bias"]
    if keep_cache:
        return logits, dict(ids=ids, mask=mask, layers=caches, h=h, hidden=x)
    return logits, None


def backward(p, arch: ModelArchitecture, cache, dlogits) -> dict[str, np.ndarray]:
    heads, dh = arch.num_heads, arch.head_dim
    grads = {}
    h = cache["h"]
    grads["head.weight"] = dlogits.T @ h
    grads["head.bias"] = dlogits.sum(axis=0)
    dx = np.zeros_like(cache["hidden"])
    dx[:, 0, :] = dlogits @ p["head.weight"]
    for i in reversed(range(arch.num_encoder_layers)):
        pre = f"encoder.{i}."
        c = cache["layers"][i]
        d = arch.embed_dim
        # second sublayer: y2 = LN2(y1 + FFN(y1))
        dr2, grads[pre + "ln2.gamma"], grads[pre + "ln2.beta"] = _layer_norm_back(dx, p[pre + "ln2.gamma"], c["ln2"])
        grads[pre + "ffn.w2"] = c["g"].reshape(-1, arch.ffn_dim).T @ dr2.reshape(-1, d)
        grads[pre + "ffn.b2"] = dr2.reshape(-1, d).sum(axis=0)
        dz = (dr2 @ p[pre + "ffn.w2"].T) * _gelu_grad(c["z"], c["t"])
        grads[pre + "ffn.w1"] = c["y1"].reshape(-1, d).T @ dz.reshape(-1, arch.ffn_dim)
        grads[pre + "ffn.b1"] = dz.reshape(-1, arch.ffn_dim).sum(axis=0)
        dy1 = dr2 + dz @ p[pre + "ffn.w1"].T
        # first sublayer: y1 = LN1(x + MHA(x))
        dr1, grads[pre + "ln1.gamma"], grads[pre + "ln1.beta"] = _layer_norm_back(dy1, p[pre + "ln1.gamma"], c["ln1"])
        grads[pre + "attn.wo"] = c["ctx"].reshape(-1, d).T @ dr1.reshape(-1, d)
        grads[pre + "attn.bo"] = dr1.reshape(-1, d).sum(axis=0)
        dctx = _split_heads(dr1 @ p[pre + "attn.wo"].T, heads)
        attn = c["attn"]
        dattn = dctx @ c["v"].transpose(0, 1, 3, 2)
        dv = attn.transpose(0, 1, 3, 2) @ dctx
        dscores = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True)) / math.sqrt(dh)
        dq = dscores @ c["k"]
        dk = dscores.transpose(0, 1, 3, 2) @ c["q"]
        xin = c["x"].reshape(-1, d)
        dx = dr1.copy()
        for m, dm in (("q", dq), ("k", dk), ("v", dv)):
            dm = _merge_heads(dm).reshape(-1, d)
            grads[pre + f"attn.w{m}"] = xin.T @ dm
            grads[pre + f"attn.b{m}"] = dm.sum(axis=0)
            dx += (dm @ p[pre + f"attn.w{m}"].T).reshape(dx.shape)
    mask = cache["mask"]
    demb = np.zeros_like(p["embed.token"])
    np.add.at(demb, cache["ids"][mask], math.sqrt(arch.embed_dim) * dx[mask])
    grads["embed.token"] = demb
    return dict(sorted(grads.items()))


def cross_entropy(logits, labels) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood and its gradient w.r.t. the logits."""
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    n = len(labels)
    loss = -float(logp[np.arange(n), labels].mean())
    dlogits = np.exp(logp)
    dlogits[np.arange(n), labels] -= 1.0
    return loss, dlogits / n


def params64(params) -> dict[str, np.ndarray]:
    return {name: np.asarray(params[name], dtype=np.float64) for name in params}


def loss_and_grad_arrays(p, arch, ids, mask, labels, need_grad=True):
    """Loss (and float64 gradients) for a padded batch with float64 params ``p``."""
    logits, cache = forward_logits(p, arch, ids, mask, keep_cache=need_grad)
    loss, dlogits = cross_entropy(logits, np.asarray(labels, dtype=np.int64))
    if not need_grad:
        return loss, None
    return loss, backward(p, arch, cache, dlogits)


# -- public API ----------------------------------------------------------------

def forward(state: ModelState, seq: TokenSequence) -> np.ndarray:
    """Probability vector over (NOT, OFF) for a single sequence."""
    return predict_proba(state, [seq])[0]


def predict_proba(state: ModelState, seqs, batch_size: int = 256) -> np.ndarray:
    p = params64(state.params)
    out = []
    for start in range(0, len(seqs), batch_size):
        ids, mask = pad_batch(seqs[start:start + batch_size])
        logits, _ = forward_logits(p, state.arch, ids, mask)
        out.append(softmax(logits, axis=-1))
    if not out:
        return np.zeros((0, state.arch.num_labels))
    return np.concatenate(out)


def loss_and_gradients(state: ModelState, batch) -> tuple[float, ParameterSet]:
    """Mean cross-entropy over ``batch`` of (TokenSequence, label) pairs and its gradients."""
    if not batch:
        raise EmptyInput("loss_and_gradients needs a non-empty batch")
    seqs, labels = zip(*batch)
    ids, mask = pad_batch(seqs)
    loss, grads = loss_and_grad_arrays(params64(state.params), state.arch, ids, mask, labels)
    return loss, ParameterSet.from_arrays(grads, like=state.params)
