"""Synthetic grounded-description task with exact ground truth.

An episode is an image with a few grounded concept ids and a fixed
"describe the image" prompt. A generated token is hallucinated iff it is a
concept id outside the image's grounded set; no judge is involved.

Cross-mode comparison is position aligned: a hallucination in the boosted
output at a position where the baseline also hallucinated counts as
remaining (same or mutated token); one at a clean baseline position counts
as newly introduced.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import stats

from .errors import PreconditionError, ReportError
from .generation import Decoding, GenerationRequest, GenerationResult, Greedy, Mode, TokenRecord, generate
from .intervention import InterventionConfig
from .model import INPUT_WORDS, SYSTEM_WORDS, ModelConfig, ModelWeights, SyntheticImage

SYSTEM_PROMPT = SYSTEM_WORDS
DESCRIBE_PROMPT = INPUT_WORDS
N_QUANTILES = 10


@dataclass(frozen=True)
class TestbedConfig:
    __test__ = False  # keep pytest from collecting this as a test class

    n_episodes: int = 200
    min_concepts: int = 2
    max_concepts: int = 4
    max_new_tokens: int = 16
    seed: int = 0


@dataclass
class Episode:
    index: int
    seed: int
    image: SyntheticImage
    system_tokens: tuple[int, ...]
    input_tokens: tuple[int, ...]
    results: dict[str, GenerationResult] = field(default_factory=dict)


def sample_episode(
    seed: int, model_config: ModelConfig, testbed: TestbedConfig = TestbedConfig()
) -> tuple[SyntheticImage, tuple[tuple[int, ...], tuple[int, ...]]]:
    """Draw a grounded set uniformly without replacement from the concept ids."""
    concepts = model_config.concept_ids
    hi = min(testbed.max_concepts, len(concepts), model_config.n_visual_tokens)
    lo = max(1, testbed.min_concepts)
    if lo > hi:
        raise PreconditionError(f"cannot draw between {lo} and {hi} concepts")
    rng = np.random.default_rng([testbed.seed, seed])
    k = int(rng.integers(lo, hi + 1))
    chosen = rng.choice(np.asarray(concepts), size=k, replace=False)
    return SyntheticImage(chosen.tolist()), (SYSTEM_PROMPT, DESCRIBE_PROMPT)


def is_hallucinated(token: int, image: SyntheticImage, model_config: ModelConfig) -> bool:
    return token in model_config.concept_ids and token not in image.grounded_concepts


def hallucination_labels(tokens: Iterable[int], image: SyntheticImage, model_config: ModelConfig) -> list[bool]:
    concepts = set(model_config.concept_ids)
    grounded = image.grounded_concepts
    return [t in concepts and t not in grounded for t in tokens]


def run_episodes(
    weights: ModelWeights,
    modes: Mapping[str, Mode],
    testbed: TestbedConfig = TestbedConfig(),
    decoding: Decoding = Greedy(),
    risk: InterventionConfig = InterventionConfig(),
    indices: Sequence[int] | None = None,
) -> list[Episode]:
    """Run every mode on every episode. Modes are interleaved per episode so
    timing drift affects them equally."""
    cfg = weights.config
    episodes = []
    for i in indices if indices is not None else range(testbed.n_episodes):
        image, (sys_toks, inp_toks) = sample_episode(i, cfg, testbed)
        ep = Episode(i, testbed.seed, image, sys_toks, inp_toks)
        for name, mode in modes.items():
            req = GenerationRequest(
                image=image,
                system_tokens=sys_toks,
                input_tokens=inp_toks,
                max_new_tokens=testbed.max_new_tokens,
                mode=mode,
                decoding=decoding,
                risk=risk,
            )
            ep.results[name] = generate(req, weights)
        episodes.append(ep)
    return episodes


# ---------------------------------------------------------------------------
# hallucination report


@dataclass(frozen=True)
class ModeStats:
    generated: int
    concept_tokens: int
    hallucinated: int
    grounded_rate: float  # grounded concept tokens / concept tokens
    hallucination_rate: float  # hallucinated tokens / generated tokens
    mean_episode_rate: float


@dataclass(frozen=True)
class CrossModeStats:
    baseline_hallucinated: int
    resolved: int
    remaining: int
    introduced: int


@dataclass(frozen=True)
class HallucinationReport:
    modes: dict[str, ModeStats]
    comparisons: dict[str, CrossModeStats]
    baseline: str

    def to_dict(self) -> dict:
        return {
            "baseline": self.baseline,
            "modes": {k: asdict(v) for k, v in self.modes.items()},
            "comparisons": {k: asdict(v) for k, v in self.comparisons.items()},
        }


def episode_rate(tokens: Sequence[int], image: SyntheticImage, model_config: ModelConfig) -> float:
    if not tokens:
        return 0.0
    return sum(hallucination_labels(tokens, image, model_config)) / len(tokens)


def compare_positions(base: Sequence[bool], boost: Sequence[bool]) -> tuple[int, int, int]:
    """(resolved, remaining, introduced) for two position-aligned label lists."""
    n = max(len(base), len(boost))
    b = list(base) + [False] * (n - len(base))
    o = list(boost) + [False] * (n - len(boost))
    resolved = sum(x and not y for x, y in zip(b, o))
    remaining = sum(x and y for x, y in zip(b, o))
    introduced = sum(y and not x for x, y in zip(b, o))
    return resolved, remaining, introduced


def hallucination_metrics(
    episodes: Sequence[Episode],
    model_config: ModelConfig,
    modes: Sequence[str] | None = None,
    baseline: str = "vanilla",
) -> HallucinationReport:
    if not episodes:
        raise ReportError("no episodes to report on")
    modes = list(modes) if modes is not None else list(episodes[0].results)
    for ep in episodes:
        missing = [m for m in modes + [baseline] if m not in ep.results]
        if missing:
            raise ReportError(f"episode {ep.index} is missing modes {missing}")
    concepts = set(model_config.concept_ids)

    per_mode = {}
    for m in modes:
        gen = conc = hall = 0
        rates = []
        for ep in episodes:
            toks = ep.results[m].tokens
            labels = hallucination_labels(toks, ep.image, model_config)
            gen += len(toks)
            conc += sum(t in concepts for t in toks)
            hall += sum(labels)
            rates.append(sum(labels) / len(toks) if toks else 0.0)
        per_mode[m] = ModeStats(
            generated=gen,
            concept_tokens=conc,
            hallucinated=hall,
            grounded_rate=(conc - hall) / conc if conc else 0.0,
            hallucination_rate=hall / gen if gen else 0.0,
            mean_episode_rate=float(np.mean(rates)),
        )

    comparisons = {}
    for m in modes:
        if m == baseline:
            continue
        tot = [0, 0, 0, 0]
        for ep in episodes:
            base = hallucination_labels(ep.results[baseline].tokens, ep.image, model_config)
            boost = hallucination_labels(ep.results[m].tokens, ep.image, model_config)
            r, rem, new = compare_positions(base, boost)
            tot[0] += sum(base)
            tot[1] += r
            tot[2] += rem
            tot[3] += new
        comparisons[m] = CrossModeStats(*tot)
    return HallucinationReport(per_mode, comparisons, baseline)


def paired_sign_test(baseline_rates: Sequence[float], treated_rates: Sequence[float]) -> tuple[int, int, float]:
    """One-sided sign test that ``treated`` is lower. Ties are dropped.

    Returns (wins, losses, p-value).
    """
    base = np.asarray(baseline_rates, dtype=np.float64)
    treated = np.asarray(treated_rates, dtype=np.float64)
    wins = int(np.sum(treated < base))
    losses = int(np.sum(treated > base))
    n = wins + losses
    if n == 0:
        return 0, 0, 1.0
    return wins, losses, float(stats.binomtest(wins, n, 0.5, alternative="greater").pvalue)


# ---------------------------------------------------------------------------
# risk-signal diagnostics


def pooled_tokens(episodes: Sequence[Episode], mode: str, model_config: ModelConfig) -> tuple[list[TokenRecord], list[bool]]:
    traces, labels = [], []
    for ep in episodes:
        res = ep.results[mode]
        traces.extend(res.trace)
        labels.extend(hallucination_labels(res.tokens, ep.image, model_config))
    return traces, labels


def quantile_buckets(signal: Sequence[float], n_buckets: int = N_QUANTILES) -> np.ndarray:
    """Bucket index per value using quantile edges of ``signal``.

    A value equal to an edge goes to the lower bucket, so a constant signal
    lands entirely in bucket 0.
    """
    x = np.asarray(signal, dtype=np.float64)
    edges = np.quantile(x, np.arange(1, n_buckets) / n_buckets)
    return np.searchsorted(edges, x, side="left")


@dataclass(frozen=True)
class QuantileCounts:
    entropy: list[int]
    vge: list[int]
    totals_entropy: list[int]
    totals_vge: list[int]
    spearman_entropy: float
    spearman_vge: float


def _spearman(counts: Sequence[int]) -> float:
    if len(set(counts)) < 2:
        return float("nan")
    return float(stats.spearmanr(np.arange(len(counts)), counts).statistic)


def quantile_correlation(
    traces: Sequence[TokenRecord], labels: Sequence[bool], n_buckets: int = N_QUANTILES
) -> QuantileCounts:
    """Hallucinated-token counts per signal quantile, for entropy and for VGE."""
    if len(traces) != len(labels):
        raise PreconditionError("traces and labels differ in length")
    if len(traces) < 100:
        raise PreconditionError(f"need at least 100 labeled tokens, got {len(traces)}")
    y = np.asarray(labels, dtype=bool)
    out = {}
    for key in ("h_bar", "vge"):
        b = quantile_buckets([getattr(t, key) for t in traces], n_buckets)
        out[key] = (
            np.bincount(b[y], minlength=n_buckets).tolist(),
            np.bincount(b, minlength=n_buckets).tolist(),
        )
    return QuantileCounts(
        entropy=out["h_bar"][0],
        vge=out["vge"][0],
        totals_entropy=out["h_bar"][1],
        totals_vge=out["vge"][1],
        spearman_entropy=_spearman(out["h_bar"][0]),
        spearman_vge=_spearman(out["vge"][0]),
    )


@dataclass(frozen=True)
class GroundingGap:
    mean_hallucinated: float | None
    mean_normal: float | None
    difference: float | None
    pooled_se: float | None
    n_hallucinated: int
    n_normal: int

    @property
    def z(self) -> float | None:
        if self.difference is None or not self.pooled_se:
            return None
        return self.difference / self.pooled_se


def low_entropy_vg_gap(traces: Sequence[TokenRecord], labels: Sequence[bool]) -> GroundingGap:
    """Mean grounding score of hallucinated vs normal tokens in the low-entropy half.

    The region is the first ``n // 2`` tokens after a stable sort by entropy,
    so ties at the median go to the lower-index token. A class with no tokens
    in the region yields ``None`` fields rather than zeros.
    """
    if len(traces) != len(labels):
        raise PreconditionError("traces and labels differ in length")
    h = np.array([t.h_bar for t in traces])
    g = np.array([t.g for t in traces])
    y = np.asarray(labels, dtype=bool)
    region = np.argsort(h, kind="stable")[: len(h) // 2]
    gh, gn = g[region][y[region]], g[region][~y[region]]
    if gh.size == 0 or gn.size == 0:
        return GroundingGap(
            float(gh.mean()) if gh.size else None,
            float(gn.mean()) if gn.size else None,
            None,
            None,
            int(gh.size),
            int(gn.size),
        )
    diff = float(gn.mean() - gh.mean())
    se = None
    dof = gh.size + gn.size - 2
    if dof > 0:
        sp2 = ((gh.size - 1) * gh.var(ddof=1 if gh.size > 1 else 0) + (gn.size - 1) * gn.var(ddof=1 if gn.size > 1 else 0)) / dof
        se = math.sqrt(sp2 * (1.0 / gh.size + 1.0 / gn.size))
    return GroundingGap(float(gh.mean()), float(gn.mean()), diff, se, int(gh.size), int(gn.size))
