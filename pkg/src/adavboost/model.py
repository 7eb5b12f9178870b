"""A desk-scale decoder-only vision-language transformer.

The weights are constructed rather than trained. The residual stream is split
into three subspaces::

    [ token (d_tok) | position (d_pos) | segment (4) ]

Token embeddings live in the token subspace and are tied to the LM head.
Queries and keys read only the position and segment subspaces, so the
attention pattern is fixed by construction: the query at absolute position
``t`` prefers visual slot ``t mod N_i`` and each (query segment, key segment)
pair gets a base score. Values copy the token subspace through, so routing
attention to a visual slot holding concept ``c`` raises the logit of ``c``.
A fixed prior-bias vector is added to decode-time logits; it creates
confident predictions that are not backed by the image.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass, fields
from enum import IntEnum
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import CapacityError, ConfigError, InterventionError, PreconditionError
from .kernels import causal_softmax, layer_norm, softmax

# Reserved function-token ids. Concept ids start right after them.
EOS_ID = 0
ANSWER_ID = 1
SYSTEM_WORDS = (2, 3)
INPUT_WORDS = (4, 5, 6)
FILLER_ID = 7
N_RESERVED = 8
WORDS = ("<eos>", "<answer>", "<sys>", "you", "describe", "the", "image", "and")

N_SEGMENTS = 4
LN_EPS = 1e-5


class Segment(IntEnum):
    VISUAL = 0
    SYSTEM = 1
    TEXT_INPUT = 2
    GENERATED = 3


# (layer, scores[heads, keys]) -> modified scores
ScoreCallback = Callable[[np.ndarray, int], np.ndarray]


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int = 64
    hidden_dim: int = 128
    n_layers: int = 4
    n_heads: int = 4
    n_visual_tokens: int = 8
    seed: int = 0
    max_positions: int = 62
    # vocabulary partition used by the testbed
    n_concepts: int = 16
    n_priors: int = 8
    # construction constants
    prior_bias: float = 4.0
    prior_decay: float = 0.75
    prior_affinity: float = 0.5
    encode_noise: float = 0.1
    slot_score: float = 3.0
    visual_self_score: float = 8.0
    visual_score: float = 1.0
    system_score: float = 0.5
    text_score: float = 2.0
    generated_score: float = -0.5
    value_gain: float = 1.5
    logit_scale: float = 1.0
    weight_noise: float = 0.02
    # multiplier on token-id input embeddings (visual embeddings are unscaled)
    embed_scale: float = 0.3

    @property
    def head_dim(self) -> int:
        return self.hidden_dim // self.n_heads

    @property
    def token_dim(self) -> int:
        return (self.hidden_dim - N_SEGMENTS) // 2

    @property
    def position_dim(self) -> int:
        return self.hidden_dim - N_SEGMENTS - self.token_dim

    @property
    def concept_ids(self) -> tuple[int, ...]:
        return tuple(range(N_RESERVED, N_RESERVED + self.n_concepts))

    @property
    def prior_ids(self) -> tuple[int, ...]:
        return self.concept_ids[: self.n_priors]

    @property
    def function_ids(self) -> tuple[int, ...]:
        return tuple(range(min(N_RESERVED, self.vocab_size)))

    def validate(self) -> None:
        if self.vocab_size < 4:
            raise ConfigError(f"vocab_size must be >= 4, got {self.vocab_size}")
        if self.n_layers < 1:
            raise ConfigError("n_layers must be >= 1")
        if self.n_heads < 1 or self.hidden_dim % self.n_heads:
            raise ConfigError(f"hidden_dim={self.hidden_dim} not divisible by n_heads={self.n_heads}")
        if self.n_visual_tokens < 1:
            raise ConfigError("n_visual_tokens must be >= 1")
        if self.n_visual_tokens + N_SEGMENTS > self.head_dim:
            raise ConfigError(
                f"head_dim={self.head_dim} too small for {self.n_visual_tokens} visual slots "
                f"(need n_visual_tokens + {N_SEGMENTS} <= head_dim)"
            )
        if self.token_dim < 1 or self.position_dim < 1:
            raise ConfigError(f"hidden_dim={self.hidden_dim} too small")
        if self.max_positions < self.n_visual_tokens + 1:
            raise ConfigError("max_positions must exceed n_visual_tokens")
        if self.n_concepts < 0 or not 0 <= self.n_priors <= self.n_concepts:
            raise ConfigError("need 0 <= n_priors <= n_concepts")
        if self.n_concepts and N_RESERVED + self.n_concepts > self.vocab_size:
            raise ConfigError(
                f"vocab_size={self.vocab_size} cannot hold {N_RESERVED} reserved ids "
                f"plus {self.n_concepts} concepts"
            )
        for name in ("prior_bias", "encode_noise", "weight_noise", "prior_affinity"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        cfg = cls(**data)
        cfg.validate()
        return cfg


@dataclass(frozen=True)
class LayerWeights:
    ln1_gain: np.ndarray
    ln1_bias: np.ndarray
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    ln2_gain: np.ndarray
    ln2_bias: np.ndarray
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray


LAYER_TENSORS = tuple(f.name for f in fields(LayerWeights))


@dataclass(frozen=True)
class ModelWeights:
    config: ModelConfig
    embed: np.ndarray  # (V, d), tied with the LM head
    pos: np.ndarray  # (max_positions, d)
    seg: np.ndarray  # (4, d)
    pad_embed: np.ndarray  # (d,)
    layers: tuple[LayerWeights, ...]
    lnf_gain: np.ndarray
    lnf_bias: np.ndarray
    prior_bias: np.ndarray  # (V,)

    def tensors(self) -> list[tuple[str, np.ndarray]]:
        out = [(name, getattr(self, name)) for name in ("embed", "pos", "seg", "pad_embed")]
        for i, layer in enumerate(self.layers):
            out.extend((f"layers.{i}.{n}", getattr(layer, n)) for n in LAYER_TENSORS)
        out.extend((name, getattr(self, name)) for name in ("lnf_gain", "lnf_bias", "prior_bias"))
        return out

    def lm_head(self, hidden: np.ndarray) -> np.ndarray:
        """Final layer norm and tied projection; no prior bias."""
        h = layer_norm(hidden, LN_EPS, self.lnf_gain, self.lnf_bias)
        return self.config.logit_scale * (h @ self.embed.T)


@dataclass(frozen=True)
class SyntheticImage:
    grounded_concepts: frozenset[int]

    def __init__(self, grounded_concepts: Iterable[int]):
        concepts = frozenset(int(c) for c in grounded_concepts)
        if not concepts:
            raise PreconditionError("a synthetic image needs at least one grounded concept")
        object.__setattr__(self, "grounded_concepts", concepts)

    @property
    def slots(self) -> list[int]:
        return sorted(self.grounded_concepts)


@dataclass
class SegmentMap:
    """Position labels. The layout is always Visual, System, TextInput, Generated
    in contiguous blocks, so four counts describe it exactly."""

    n_visual: int
    n_system: int = 0
    n_input: int = 0
    n_generated: int = 0

    def __len__(self) -> int:
        return self.n_visual + self.n_system + self.n_input + self.n_generated

    @property
    def prefill_length(self) -> int:
        return self.n_visual + self.n_system + self.n_input

    @property
    def labels(self) -> np.ndarray:
        return np.repeat(
            np.arange(N_SEGMENTS, dtype=np.int8),
            [self.n_visual, self.n_system, self.n_input, self.n_generated],
        )

    def indices(self, segment: Segment) -> np.ndarray:
        starts = np.cumsum([0, self.n_visual, self.n_system, self.n_input])
        counts = (self.n_visual, self.n_system, self.n_input, self.n_generated)
        return np.arange(starts[segment], starts[segment] + counts[segment])

    @property
    def visual(self) -> np.ndarray:
        return self.indices(Segment.VISUAL)

    @property
    def system(self) -> np.ndarray:
        return self.indices(Segment.SYSTEM)

    @property
    def text_input(self) -> np.ndarray:
        return self.indices(Segment.TEXT_INPUT)

    @property
    def generated(self) -> np.ndarray:
        return self.indices(Segment.GENERATED)


class KVCache:
    """Preallocated per-layer key/value storage, shape (L, H, max_positions, dh)."""

    def __init__(self, config: ModelConfig):
        shape = (config.n_layers, config.n_heads, config.max_positions, config.head_dim)
        self.keys = np.zeros(shape)
        self.values = np.zeros(shape)
        self.length = 0

    def copy(self) -> "KVCache":
        other = object.__new__(KVCache)
        other.keys = self.keys.copy()
        other.values = self.values.copy()
        other.length = self.length
        return other


@dataclass
class DecodeState:
    cache: KVCache
    segments: SegmentMap
    r_prev: float = 0.0
    rng: np.random.Generator | None = None

    @property
    def length(self) -> int:
        return self.cache.length


@dataclass(frozen=True)
class StepLogits:
    z: np.ndarray
    p: np.ndarray


# ---------------------------------------------------------------------------
# construction


def _nominal_ln_scale(config: ModelConfig) -> float:
    # residual = unit token vector + unit position vector + unit segment one-hot
    return math.sqrt(config.hidden_dim / 3.0)


def _orthonormal_rows(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    k = min(n, dim)
    q, _ = np.linalg.qr(rng.standard_normal((dim, k)))
    rows = q.T
    if n > k:
        extra = rng.standard_normal((n - k, dim))
        extra /= np.linalg.norm(extra, axis=1, keepdims=True)
        rows = np.vstack([rows, extra])
    return rows


def prior_weights(config: ModelConfig) -> np.ndarray:
    return config.prior_decay ** np.arange(config.n_priors, dtype=np.float64)


def build_model(config: ModelConfig) -> ModelWeights:
    """Deterministically construct weights for ``config``."""
    config.validate()
    d, V, H, dh = config.hidden_dim, config.vocab_size, config.n_heads, config.head_dim
    d_tok, d_pos, n_vis = config.token_dim, config.position_dim, config.n_visual_tokens
    tok = slice(0, d_tok)
    posd = slice(d_tok, d_tok + d_pos)
    segd = slice(d - N_SEGMENTS, d)
    r_embed, r_pos, r_proj, r_mlp = (
        np.random.default_rng(s) for s in np.random.SeedSequence(config.seed).spawn(4)
    )

    tok_rows = _orthonormal_rows(r_embed, V, d_tok)
    prior_ids = list(config.prior_ids)
    if prior_ids:
        prior_dir = prior_weights(config) @ tok_rows[prior_ids]
        prior_dir /= np.linalg.norm(prior_dir)
        for w in SYSTEM_WORDS + INPUT_WORDS + (FILLER_ID,):
            if w < V:
                row = tok_rows[w] + config.prior_affinity * prior_dir
                tok_rows[w] = row / np.linalg.norm(row)
    embed = np.zeros((V, d))
    embed[:, tok] = tok_rows

    pad_embed = np.zeros(d)
    if config.n_concepts:
        mean = tok_rows[list(config.concept_ids)].mean(axis=0)
        pad_embed[tok] = mean / np.linalg.norm(mean)
    else:
        pad_embed[tok] = tok_rows[EOS_ID]

    # Orthonormal when max_positions <= d_pos, which keeps the slot selectors
    # below well conditioned.
    pos_rows = _orthonormal_rows(r_pos, config.max_positions, d_pos)
    pos = np.zeros((config.max_positions, d))
    pos[:, posd] = pos_rows

    seg = np.zeros((N_SEGMENTS, d))
    seg[:, segd] = np.eye(N_SEGMENTS)

    # Designed score offsets, indexed [query segment, key segment].
    seg_scores = np.zeros((N_SEGMENTS, N_SEGMENTS))
    g = Segment.GENERATED
    seg_scores[g, Segment.VISUAL] = config.visual_score
    seg_scores[g, Segment.SYSTEM] = config.system_score
    seg_scores[g, Segment.TEXT_INPUT] = config.text_score
    seg_scores[g, Segment.GENERATED] = config.generated_score

    # Positional slot selectors: P @ slot_q ~ e_{t mod N_i}, P @ slot_k ~ e_j (j < N_i).
    t = np.arange(config.max_positions)
    query_target = np.eye(n_vis)[t % n_vis]
    # visual positions attend (almost) only to themselves during prefill
    query_target[:n_vis] *= config.visual_self_score / config.slot_score if config.slot_score else 0.0
    key_target = np.zeros((config.max_positions, n_vis))
    key_target[:n_vis] = np.eye(n_vis)
    slot_q = np.linalg.lstsq(pos_rows, query_target, rcond=None)[0]
    slot_k = np.linalg.lstsq(pos_rows, key_target, rcond=None)[0]

    kappa = _nominal_ln_scale(config)
    c = dh**0.25 / kappa  # q.k / sqrt(dh) reproduces the designed scores
    chunks = np.array_split(np.arange(d_tok), H)
    noise = config.weight_noise / math.sqrt(d)

    layers = []
    for _ in range(config.n_layers):
        wq = np.zeros((d, d))
        wk = np.zeros((d, d))
        wv = np.zeros((d, d))
        wo = np.zeros((d, d))
        for h in range(H):
            base = h * dh
            wq[segd, base : base + N_SEGMENTS] = c * seg_scores
            wk[segd, base : base + N_SEGMENTS] = c * np.eye(N_SEGMENTS)
            slot_cols = slice(base + N_SEGMENTS, base + N_SEGMENTS + n_vis)
            wq[posd, slot_cols] = c * config.slot_score * slot_q
            wk[posd, slot_cols] = c * slot_k
            ch = chunks[h]
            wv[ch, base + np.arange(len(ch))] = 1.0
            wo[base + np.arange(len(ch)), ch] = config.value_gain / kappa
        wq += noise * r_proj.standard_normal((d, d))
        wk += noise * r_proj.standard_normal((d, d))
        wv += noise * r_proj.standard_normal((d, d))
        wo += noise * r_proj.standard_normal((d, d))
        layers.append(
            LayerWeights(
                ln1_gain=np.ones(d),
                ln1_bias=np.zeros(d),
                wq=wq,
                wk=wk,
                wv=wv,
                wo=wo,
                ln2_gain=np.ones(d),
                ln2_bias=np.zeros(d),
                w1=noise * r_mlp.standard_normal((d, 4 * d)),
                b1=np.zeros(4 * d),
                w2=noise * 0.5 * r_mlp.standard_normal((4 * d, d)),
                b2=np.zeros(d),
            )
        )

    prior_bias = np.zeros(V)
    if prior_ids:
        prior_bias[prior_ids] = config.prior_bias * prior_weights(config)

    weights = ModelWeights(
        config=config,
        embed=embed,
        pos=pos,
        seg=seg,
        pad_embed=pad_embed,
        layers=tuple(layers),
        lnf_gain=np.ones(d),
        lnf_bias=np.zeros(d),
        prior_bias=prior_bias,
    )
    _freeze(weights)
    return weights


def _freeze(weights: ModelWeights) -> None:
    for _, arr in weights.tensors():
        arr.setflags(write=False)


# ---------------------------------------------------------------------------
# forward passes


def encode_image(
    image: SyntheticImage,
    weights: ModelWeights,
    config: ModelConfig | None = None,
    noise: float | None = None,
) -> np.ndarray:
    """Visual token embeddings, shape (N_i, d).

    Concept ``c`` (in ascending id order) occupies one slot with embedding
    ``embed[c]`` plus seeded Gaussian noise in the token subspace; unused
    slots carry the neutral padding embedding. The noise seed depends only on
    the model seed and the concept set.
    """
    config = config or weights.config
    slots = image.slots
    if len(slots) > config.n_visual_tokens:
        raise CapacityError(f"{len(slots)} concepts do not fit in {config.n_visual_tokens} visual slots")
    reserved = set(config.function_ids)
    for c in slots:
        if not 0 <= c < config.vocab_size:
            raise PreconditionError(f"concept id {c} outside vocabulary")
        if c in reserved:
            raise PreconditionError(f"concept id {c} is a reserved function token")
    sigma = config.encode_noise if noise is None else noise
    out = np.tile(weights.pad_embed, (config.n_visual_tokens, 1))
    rng = np.random.default_rng([config.seed, 7919, *slots])
    jitter = rng.standard_normal((len(slots), config.token_dim))
    for i, c in enumerate(slots):
        out[i] = weights.embed[c]
        if sigma:
            out[i, : config.token_dim] += sigma * jitter[i] / math.sqrt(config.token_dim)
    return out


def _mlp(x: np.ndarray, lw: LayerWeights) -> np.ndarray:
    h = layer_norm(x, LN_EPS, lw.ln2_gain, lw.ln2_bias) @ lw.w1 + lw.b1
    h = 0.5 * h * (1.0 + np.tanh(0.7978845608028654 * (h + 0.044715 * h**3)))
    return h @ lw.w2 + lw.b2


def _embed_sequence(
    weights: ModelWeights,
    visual_embeds: np.ndarray,
    token_ids: Sequence[int],
    segments: SegmentMap,
) -> np.ndarray:
    n = len(segments)
    text = weights.config.embed_scale * weights.embed[np.asarray(token_ids, dtype=np.int64)]
    x = np.vstack([visual_embeds, text.reshape(-1, visual_embeds.shape[1])])
    return x + weights.pos[:n] + weights.seg[segments.labels]


def _forward_batch(weights: ModelWeights, x: np.ndarray, cache: KVCache | None = None) -> np.ndarray:
    cfg = weights.config
    n = x.shape[0]
    H, dh = cfg.n_heads, cfg.head_dim
    scale = 1.0 / math.sqrt(dh)
    for l, lw in enumerate(weights.layers):
        h = layer_norm(x, LN_EPS, lw.ln1_gain, lw.ln1_bias)
        q = (h @ lw.wq).reshape(n, H, dh).transpose(1, 0, 2)
        k = (h @ lw.wk).reshape(n, H, dh).transpose(1, 0, 2)
        v = (h @ lw.wv).reshape(n, H, dh).transpose(1, 0, 2)
        if cache is not None:
            cache.keys[l, :, :n] = k
            cache.values[l, :, :n] = v
        attn = causal_softmax(q @ k.transpose(0, 2, 1) * scale)
        out = (attn @ v).transpose(1, 0, 2).reshape(n, H * dh)
        x = x + out @ lw.wo
        x = x + _mlp(x, lw)
    if cache is not None:
        cache.length = n
    return x


def prefill(
    weights: ModelWeights,
    config: ModelConfig | None,
    visual_embeds: np.ndarray,
    system_tokens: Sequence[int],
    input_tokens: Sequence[int],
) -> tuple[DecodeState, np.ndarray]:
    """Run the joint visual + prompt pass once.

    Returns the filled decode state and the LM-head logits (no prior bias)
    at every visual position, shape (N_i, V).
    """
    config = config or weights.config
    visual_embeds = np.asarray(visual_embeds, dtype=np.float64)
    n_vis = visual_embeds.shape[0]
    segments = SegmentMap(n_vis, len(system_tokens), len(input_tokens))
    if len(segments) < 1:
        raise PreconditionError("prefill needs at least one position")
    if len(segments) >= config.max_positions:
        raise PreconditionError(f"prompt of length {len(segments)} exceeds max_positions")
    x = _embed_sequence(weights, visual_embeds, list(system_tokens) + list(input_tokens), segments)
    cache = KVCache(config)
    hidden = _forward_batch(weights, x, cache)
    visual_logits = weights.lm_head(hidden[:n_vis])
    return DecodeState(cache=cache, segments=segments), visual_logits


def decode_step(
    state: DecodeState,
    weights: ModelWeights,
    token: int,
    intervention: ScoreCallback | None = None,
) -> StepLogits:
    """Append ``token`` as a Generated position and return next-token logits.

    For every layer the pre-softmax score block (heads x keys, the last key
    being the new position itself) is passed through ``intervention`` before
    the softmax. Logits include the prior bias.
    """
    cfg = weights.config
    cache = state.cache
    t = cache.length
    if t >= cfg.max_positions:
        raise PreconditionError(f"sequence length would exceed max_positions={cfg.max_positions}")
    H, dh = cfg.n_heads, cfg.head_dim
    n = t + 1
    scale = 1.0 / math.sqrt(dh)
    x = cfg.embed_scale * weights.embed[token] + weights.pos[t] + weights.seg[Segment.GENERATED]
    state.segments.n_generated += 1
    for l, lw in enumerate(weights.layers):
        h = layer_norm(x, LN_EPS, lw.ln1_gain, lw.ln1_bias)
        cache.keys[l, :, t] = (h @ lw.wk).reshape(H, dh)
        cache.values[l, :, t] = (h @ lw.wv).reshape(H, dh)
        q = (h @ lw.wq).reshape(H, dh, 1)
        scores = (cache.keys[l, :, :n] @ q)[:, :, 0] * scale
        if intervention is not None:
            scores = intervention(scores, l)
        if not np.isfinite(scores).all():
            raise InterventionError(f"non-finite attention scores at layer {l}")
        e = np.exp(scores - scores.max(axis=1, keepdims=True))
        attn = e / e.sum(axis=1, keepdims=True)
        out = (attn[:, None, :] @ cache.values[l, :, :n])[:, 0, :]
        x = x + out.reshape(-1) @ lw.wo
        x = x + _mlp(x, lw)
    cache.length = n
    z = weights.lm_head(x) + weights.prior_bias
    return StepLogits(z=z, p=softmax(z))


def forward_full(
    weights: ModelWeights,
    visual_embeds: np.ndarray,
    system_tokens: Sequence[int],
    input_tokens: Sequence[int],
    generated_tokens: Sequence[int],
) -> np.ndarray:
    """Recompute logits for every generated position in one causal pass.

    Row ``i`` is comparable to the ``decode_step`` output after feeding
    ``generated_tokens[i]``. No intervention is applied.
    """
    visual_embeds = np.asarray(visual_embeds, dtype=np.float64)
    segments = SegmentMap(
        visual_embeds.shape[0], len(system_tokens), len(input_tokens), len(generated_tokens)
    )
    if len(segments) > weights.config.max_positions:
        raise PreconditionError("sequence longer than max_positions")
    ids = list(system_tokens) + list(input_tokens) + list(generated_tokens)
    hidden = _forward_batch(weights, _embed_sequence(weights, visual_embeds, ids, segments))
    return weights.lm_head(hidden[segments.prefill_length :]) + weights.prior_bias


# ---------------------------------------------------------------------------
# snapshot I/O

MAGIC = b"AVBWGT01"


def save_weights(weights: ModelWeights, path: str | Path) -> None:
    """Write a flat little-endian float64 snapshot with a JSON header.

    See docs/weights_format.md for the byte layout.
    """
    tensors = weights.tensors()
    entries = []
    offset = 0
    for name, arr in tensors:
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.size * 8
    cfg = weights.config
    header = {
        "format": 1,
        "dtype": "<f8",
        "seed": cfg.seed,
        "dims": {
            "vocab_size": cfg.vocab_size,
            "hidden_dim": cfg.hidden_dim,
            "n_layers": cfg.n_layers,
            "n_heads": cfg.n_heads,
            "n_visual_tokens": cfg.n_visual_tokens,
            "max_positions": cfg.max_positions,
        },
        "config": asdict(cfg),
        "tensors": entries,
        "data_bytes": offset,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for _, arr in tensors:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_weights(path: str | Path) -> ModelWeights:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise ConfigError(f"{path}: not a weight snapshot (bad magic)")
    try:
        return _decode_snapshot(raw)
    except (KeyError, ValueError, TypeError, struct.error) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{path}: malformed snapshot ({exc})") from exc


def _decode_snapshot(raw: bytes) -> ModelWeights:
    path = "snapshot"
    (hlen,) = struct.unpack("<Q", raw[8:16])
    header = json.loads(raw[16 : 16 + hlen].decode("utf-8"))
    data = raw[16 + hlen :]
    if len(data) != header["data_bytes"]:
        raise ConfigError(f"{path}: expected {header['data_bytes']} data bytes, found {len(data)}")
    config = ModelConfig.from_dict(header["config"])
    arrays = {}
    for e in header["tensors"]:
        count = int(np.prod(e["shape"], dtype=np.int64))
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=e["offset"])
        arrays[e["name"]] = arr.reshape(e["shape"]).astype(np.float64)
    layers = tuple(
        LayerWeights(**{n: arrays[f"layers.{i}.{n}"] for n in LAYER_TENSORS}) for i in range(config.n_layers)
    )
    weights = ModelWeights(
        config=config,
        embed=arrays["embed"],
        pos=arrays["pos"],
        seg=arrays["seg"],
        pad_embed=arrays["pad_embed"],
        layers=layers,
        lnf_gain=arrays["lnf_gain"],
        lnf_bias=arrays["lnf_bias"],
        prior_bias=arrays["prior_bias"],
    )
    _freeze(weights)
    return weights
