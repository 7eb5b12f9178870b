"""Autoregressive generation with token-level adaptive visual boosting.

The boost applied at step ``t`` comes from the risk measured at step ``t-1``
(``r_0 = 0``), so the first generated token is never boosted. The grounding
vector is computed once from the prefill pass and is read-only afterwards.
Vanilla and FixedBoost runs still compute and record the risk fields, but
those values never feed back into their decoding.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from . import intervention as iv
from .errors import ConfigError, PreconditionError
from .intervention import InterventionConfig, Scope, StepModulator
from .model import ANSWER_ID, EOS_ID, ModelWeights, SyntheticImage, decode_step, encode_image, prefill
from .risk import boost_strength, grounding_vector, readout

TRACE_KEYS = ("step", "token", "h_bar", "g", "vge", "r", "m")


@dataclass(frozen=True)
class Vanilla:
    name: str = "vanilla"


@dataclass(frozen=True)
class FixedBoost:
    """Uniform visual boost at every in-range layer; no text suppression."""

    factor: float = 1.2
    layer_start: int = 0
    layer_end: int | None = None
    name: str = "fixed"

    def __post_init__(self):
        if self.factor < 1:
            raise ConfigError(f"FixedBoost factor must be >= 1, got {self.factor}")


@dataclass(frozen=True)
class AdaVBoost:
    config: InterventionConfig = field(default_factory=InterventionConfig)
    name: str = "adavboost"


Mode = Union[Vanilla, FixedBoost, AdaVBoost]


@dataclass(frozen=True)
class Greedy:
    pass


@dataclass(frozen=True)
class Sample:
    seed: int = 0
    temperature: float = 1.0

    def __post_init__(self):
        if not self.temperature > 0:
            raise ConfigError(f"temperature must be > 0, got {self.temperature}")


Decoding = Union[Greedy, Sample]


@dataclass(frozen=True)
class GenerationRequest:
    image: SyntheticImage
    system_tokens: tuple[int, ...]
    input_tokens: tuple[int, ...]
    max_new_tokens: int = 16
    mode: Mode = field(default_factory=Vanilla)
    decoding: Decoding = field(default_factory=Greedy)
    # hyperparameters for the read-only risk fields of non-adaptive modes
    risk: InterventionConfig = field(default_factory=InterventionConfig)

    def __post_init__(self):
        if self.max_new_tokens < 1:
            raise ConfigError("max_new_tokens must be >= 1")

    @property
    def risk_params(self) -> InterventionConfig:
        return self.mode.config if isinstance(self.mode, AdaVBoost) else self.risk


@dataclass(frozen=True)
class TokenRecord:
    step: int
    token: int
    h_bar: float
    g: float
    vge: float
    r: float
    m: float

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in TRACE_KEYS}


@dataclass
class GenerationResult:
    tokens: list[int]
    trace: list[TokenRecord]
    duration_ms: float
    prefill_ms: float
    mode: str = "vanilla"
    grounding: np.ndarray | None = None


def select_token(p_t, decoding: Decoding = Greedy(), rng: np.random.Generator | None = None) -> int:
    """Greedy argmax (lowest index on ties) or seeded inverse-CDF sampling."""
    p = np.asarray(p_t, dtype=np.float64)
    if isinstance(decoding, Greedy):
        return int(np.argmax(p))
    if not decoding.temperature > 0:
        raise ConfigError(f"temperature must be > 0, got {decoding.temperature}")
    if rng is None:
        rng = np.random.default_rng(decoding.seed)
    logp = np.full(p.shape, -np.inf)
    np.log(p, out=logp, where=p > 0)
    logq = logp / decoding.temperature
    q = np.exp(logq - logq.max())
    cdf = np.cumsum(q)
    u = rng.random() * cdf[-1]
    idx = int(np.searchsorted(cdf, u, side="right"))
    if idx >= p.size:
        idx = int(np.flatnonzero(q)[-1])
    return idx


def _layer_bounds(start: int, end: int | None, n_layers: int) -> tuple[int, int]:
    end = n_layers if end is None else end
    if not 0 <= start < end <= n_layers:
        raise ConfigError(f"invalid layer range [{start}, {end}) for {n_layers} layers")
    return start, end


def generate(request: GenerationRequest, weights: ModelWeights, config=None) -> GenerationResult:
    cfg = config or weights.config
    mode = request.mode
    risk_cfg = request.risk_params
    risk_cfg.validate()
    if isinstance(mode, AdaVBoost):
        mode.config.validate(cfg.n_layers)

    t0 = time.perf_counter()
    visual = encode_image(request.image, weights, cfg)
    state, visual_logits = prefill(weights, cfg, visual, request.system_tokens, request.input_tokens)
    G = grounding_vector(visual_logits)
    prefill_ms = (time.perf_counter() - t0) * 1e3

    total = state.segments.prefill_length + request.max_new_tokens
    if total > cfg.max_positions:
        raise PreconditionError(f"prompt plus {request.max_new_tokens} new tokens exceeds max_positions")
    if isinstance(request.decoding, Sample):
        state.rng = np.random.default_rng(request.decoding.seed)

    if isinstance(mode, AdaVBoost):
        ic = mode.config
        callback = StepModulator(state.segments, total, ic.layer_start, ic.layer_end, ic.m_txt_max, ic.scope)
    elif isinstance(mode, FixedBoost):
        lo, hi = _layer_bounds(mode.layer_start, mode.layer_end, cfg.n_layers)
        callback = StepModulator(state.segments, total, lo, hi, 1.0, Scope.NONE)
        callback.set_boost(mode.factor)
    else:
        callback = iv.identity

    alpha, gamma, m_vis_max = risk_cfg.alpha, risk_cfg.gamma, risk_cfg.m_vis_max
    adaptive = isinstance(mode, AdaVBoost)
    tokens: list[int] = []
    trace: list[TokenRecord] = []
    token = ANSWER_ID
    for step in range(1, request.max_new_tokens + 1):
        if adaptive:
            m = boost_strength(state.r_prev, m_vis_max)
            callback.set_boost(m)
        elif isinstance(mode, FixedBoost):
            m = mode.factor
        else:
            m = 1.0
        logits = decode_step(state, weights, token, callback)
        y = select_token(logits.p, request.decoding, state.rng)
        ro = readout(logits.p, logits.z, G, alpha, gamma, m_vis_max)
        state.r_prev = ro.r
        tokens.append(y)
        trace.append(TokenRecord(step, y, ro.h_bar, ro.g_t, ro.vge, ro.r, m))
        if y == EOS_ID:
            break
        token = y
    duration_ms = (time.perf_counter() - t0) * 1e3
    return GenerationResult(
        tokens=tokens,
        trace=trace,
        duration_ms=duration_ms,
        prefill_ms=prefill_ms,
        mode=mode.name,
        grounding=G,
    )


def lag_violations(trace: list[TokenRecord], m_vis_max: float) -> list[str]:
    """Steps where the recorded boost is not ``boost_strength`` of the previous risk."""
    bad = []
    prev_r = 0.0
    for rec in trace:
        expected = boost_strength(prev_r, m_vis_max)
        if rec.m != expected:
            bad.append(f"step {rec.step}: m={rec.m!r}, expected {expected!r}")
        prev_r = rec.r
    return bad
