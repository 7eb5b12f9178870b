"""Pre-softmax attention score modulation.

Visual positions are multiplied by the step's boost factor ``m_t``; positions
in the suppression scope are divided by ``m_txt_max``. Both act on raw scores,
so a negative visual score becomes more negative under ``m_t > 1`` and loses
mass. That inversion is intentional and left unclamped.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from enum import Enum

import numpy as np

from .errors import ConfigError
from .model import Segment, SegmentMap


class Scope(str, Enum):
    ALL_TEXT = "all_text"
    TEXT_OUTPUT_ONLY = "text_output_only"
    SYSTEM_PROMPT_ONLY = "system_prompt_only"
    TEXT_INPUT_ONLY = "text_input_only"
    NONE = "none"


SCOPE_SEGMENTS: dict[Scope, tuple[Segment, ...]] = {
    Scope.ALL_TEXT: (Segment.SYSTEM, Segment.TEXT_INPUT, Segment.GENERATED),
    Scope.TEXT_OUTPUT_ONLY: (Segment.GENERATED,),
    Scope.SYSTEM_PROMPT_ONLY: (Segment.SYSTEM,),
    Scope.TEXT_INPUT_ONLY: (Segment.TEXT_INPUT,),
    Scope.NONE: (),
}


@dataclass(frozen=True)
class InterventionConfig:
    alpha: float = 0.5
    gamma: float = 0.5
    m_vis_max: float = 1.1
    m_txt_max: float = 1.7
    layer_start: int = 0
    layer_end: int = 4
    scope: Scope = Scope.TEXT_INPUT_ONLY

    def __post_init__(self):
        object.__setattr__(self, "scope", Scope(self.scope))

    def validate(self, n_layers: int | None = None) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not self.gamma > 0:
            raise ConfigError(f"gamma must be > 0, got {self.gamma}")
        if self.m_vis_max < 1 or self.m_txt_max < 1:
            raise ConfigError("m_vis_max and m_txt_max must be >= 1")
        if not 0 <= self.layer_start < self.layer_end:
            raise ConfigError(
                f"need 0 <= layer_start < layer_end, got [{self.layer_start}, {self.layer_end})"
            )
        if n_layers is not None and self.layer_end > n_layers:
            raise ConfigError(f"layer_end={self.layer_end} exceeds n_layers={n_layers}")

    def in_range(self, layer: int) -> bool:
        return self.layer_start <= layer < self.layer_end

    def to_dict(self) -> dict:
        d = asdict(self)
        d["scope"] = self.scope.value
        return d


def _labels(segments) -> np.ndarray:
    if isinstance(segments, SegmentMap):
        return segments.labels
    return np.asarray(segments)


def scope_mask(segments, scope: Scope | str) -> np.ndarray:
    labels = _labels(segments)
    return np.isin(labels, [int(s) for s in SCOPE_SEGMENTS[Scope(scope)]])


def boost_visual(row, segments, m_t: float) -> np.ndarray:
    """Multiply scores at visual positions by ``m_t``. Works on (keys,) or (heads, keys)."""
    out = np.array(row, dtype=np.float64, copy=True)
    vis = _labels(segments) == Segment.VISUAL
    out[..., vis] = out[..., vis] * m_t
    return out


def suppress_text(row, segments, m_txt_max: float, scope: Scope | str = Scope.TEXT_INPUT_ONLY) -> np.ndarray:
    out = np.array(row, dtype=np.float64, copy=True)
    mask = scope_mask(segments, scope)
    out[..., mask] = out[..., mask] / m_txt_max
    return out


def apply(row, segments, cfg: InterventionConfig, m_t: float, layer: int) -> np.ndarray:
    """Boost then suppress, but only for layers in ``[layer_start, layer_end)``."""
    if not cfg.in_range(layer):
        return np.array(row, dtype=np.float64, copy=True)
    boosted = boost_visual(row, segments, m_t)
    return suppress_text(boosted, segments, cfg.m_txt_max, cfg.scope)


class StepModulator:
    """Score callback for one generation request.

    Precomputes a per-position multiplier (visual -> m_t) and divisor
    (scope -> m_txt_max) over the full sequence budget, so each layer costs
    one multiply and one divide. ``x * 1.0`` and ``x / 1.0`` are exact, so the
    result matches :func:`apply` bit for bit.
    """

    def __init__(
        self,
        segments: SegmentMap,
        max_length: int,
        layer_start: int,
        layer_end: int,
        m_txt_max: float = 1.0,
        scope: Scope | str = Scope.NONE,
    ):
        layout = SegmentMap(
            segments.n_visual,
            segments.n_system,
            segments.n_input,
            max(0, max_length - segments.prefill_length),
        )
        labels = layout.labels
        self._visual = labels == Segment.VISUAL
        self._divisor = np.where(scope_mask(labels, scope), float(m_txt_max), 1.0)
        self._multiplier = np.ones(len(labels))
        self.layer_start = layer_start
        self.layer_end = layer_end
        self.m_t = 1.0

    def set_boost(self, m_t: float) -> None:
        self.m_t = m_t
        self._multiplier = np.where(self._visual, m_t, 1.0)

    def __call__(self, scores: np.ndarray, layer: int) -> np.ndarray:
        if not self.layer_start <= layer < self.layer_end:
            return scores
        n = scores.shape[-1]
        return scores * self._multiplier[:n] / self._divisor[:n]


def identity(scores: np.ndarray, layer: int) -> np.ndarray:
    return scores
