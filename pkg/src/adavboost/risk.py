"""Token-level hallucination risk from visual grounding entropy.

Pipeline per generation step::

    G        = max over visual positions of softmax(prefill logits)   (once)
    h_bar    = H(p_t) / log V
    g_t      = G[argmax z_t]
    vge      = alpha * h_bar + (1 - alpha) * (1 - g_t)
    r        = min(vge / gamma, 1)
    m        = 1 + (m_vis_max - 1) * r

Entropy uses the natural log with 0 log 0 = 0; the base cancels in h_bar.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, PreconditionError
from .kernels import safe_log, softmax


@dataclass(frozen=True)
class RiskReadout:
    h_bar: float
    g_t: float
    vge: float
    r: float
    m: float


def grounding_vector(prefill_logits) -> np.ndarray:
    """Per-vocabulary max of the softmaxed logits over visual positions."""
    logits = np.asarray(prefill_logits, dtype=np.float64)
    if logits.ndim == 1:
        logits = logits[None, :]
    if logits.shape[0] == 0:
        raise PreconditionError("grounding vector needs at least one visual position")
    g = softmax(logits, axis=-1).max(axis=0)
    g.setflags(write=False)
    return g


def normalized_entropy(p) -> float:
    p = np.asarray(p, dtype=np.float64)
    V = p.shape[-1]
    if V < 2:
        raise PreconditionError("normalized entropy is undefined for V < 2")
    return float(-(p * safe_log(p)).sum() / math.log(V))


def grounding_score(G, z_t) -> float:
    G = np.asarray(G)
    z_t = np.asarray(z_t)
    if G.shape != z_t.shape:
        raise PreconditionError(f"grounding vector length {G.shape} != logits length {z_t.shape}")
    return float(G[int(np.argmax(z_t))])


def vge(h_bar: float, g_t: float, alpha: float) -> float:
    return alpha * h_bar + (1.0 - alpha) * (1.0 - g_t)


def risk_score(vge_value: float, gamma: float) -> float:
    if not gamma > 0:
        raise ConfigError(f"risk scale gamma must be > 0, got {gamma}")
    return min(vge_value / gamma, 1.0)


def boost_strength(r: float, m_vis_max: float) -> float:
    return 1.0 + (m_vis_max - 1.0) * r


def readout(p_t, z_t, G, alpha: float, gamma: float, m_vis_max: float) -> RiskReadout:
    """All five quantities for one step. ``m`` is the factor the next step would use."""
    h = normalized_entropy(p_t)
    g = grounding_score(G, z_t)
    v = vge(h, g, alpha)
    r = risk_score(v, gamma)
    return RiskReadout(h_bar=h, g_t=g, vge=v, r=r, m=boost_strength(r, m_vis_max))
