"""Command-line entry point: ``adavboost {run,compare,sweep,check}``.

Exit codes: 0 success, 1 runtime or suite failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import math
import os
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Mapping, Sequence
from unittest import mock

import numpy as np

from . import generation, kernels, risk
from .errors import ConfigError, PreconditionError
from .generation import (
    TRACE_KEYS,
    AdaVBoost,
    Decoding,
    FixedBoost,
    GenerationRequest,
    Greedy,
    Mode,
    Sample,
    Vanilla,
    generate,
)
from .intervention import InterventionConfig, Scope, boost_visual, suppress_text
from .model import (
    ModelConfig,
    ModelWeights,
    Segment,
    SegmentMap,
    SyntheticImage,
    build_model,
    decode_step,
    encode_image,
    forward_full,
    load_weights,
    prefill,
)
from .testbed import (
    Episode,
    TestbedConfig,
    episode_rate,
    hallucination_metrics,
    paired_sign_test,
    run_episodes,
)

log = logging.getLogger("adavboost")

EXIT_OK, EXIT_FAILURE, EXIT_CONFIG = 0, 1, 2
SEED_ENV = "ADAVBOOST_SEED"
MODE_KINDS = ("vanilla", "fixed", "adavboost")
SWEEP_PARAMS = ("alpha", "gamma", "m_vis_max", "m_txt_max")

# Sensitivity grids over the risk hyperparameters.
PRESET_GRIDS = {
    "alpha": [0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
    "gamma": [0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
    "m_vis_max": [1.1, 1.2, 1.3, 1.4, 1.5, 1.6, 1.7, 1.8, 1.9, 2.0],
    "m_txt_max": [1.1, 1.2, 1.3, 1.4, 1.5, 1.6, 1.7, 1.8, 1.9, 2.0],
}


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    intervention: InterventionConfig = field(default_factory=InterventionConfig)
    decoding: Decoding = field(default_factory=Greedy)
    testbed: TestbedConfig = field(default_factory=TestbedConfig)
    modes: tuple[str, ...] = ("vanilla", "adavboost")
    fixed_factor: float = 1.2
    out: Path = Path("runs")
    sweep: dict = field(default_factory=dict)
    weights_path: Path | None = None

    @property
    def seed(self) -> int:
        return self.testbed.seed

    def to_dict(self) -> dict:
        dec = {"strategy": "greedy"} if isinstance(self.decoding, Greedy) else {
            "strategy": "sample",
            "temperature": self.decoding.temperature,
        }
        return {
            "seed": self.seed,
            "model": {f.name: getattr(self.model, f.name) for f in fields(self.model)},
            "intervention": self.intervention.to_dict(),
            "decoding": dec,
            "testbed": {f.name: getattr(self.testbed, f.name) for f in fields(self.testbed) if f.name != "seed"},
            "modes": list(self.modes),
            "fixed_factor": self.fixed_factor,
            "out": str(self.out),
            "sweep": self.sweep,
            "weights_path": str(self.weights_path) if self.weights_path else None,
        }


def _section(data: dict, key: str, cls) -> object:
    raw = data.get(key, {})
    if not isinstance(raw, dict):
        raise ConfigError(f"'{key}' must be an object")
    known = {f.name for f in fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown keys in '{key}': {sorted(unknown)}")
    try:
        return cls(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid '{key}' section: {exc}") from exc


def parse_modes(spec: str | Sequence[str]) -> tuple[str, ...]:
    items = spec.split(",") if isinstance(spec, str) else list(spec)
    modes = tuple(s.strip().lower() for s in items if s.strip())
    if not modes:
        raise ConfigError("mode list is empty")
    bad = [m for m in modes if m not in MODE_KINDS]
    if bad:
        raise ConfigError(f"unknown modes {bad}; choose from {list(MODE_KINDS)}")
    return modes


def resolve_seed(config_seed: int, cli_seed: int | None, env: Mapping[str, str] | None = None) -> int:
    """``--seed`` wins over ``ADAVBOOST_SEED``, which wins over the config file."""
    env = os.environ if env is None else env
    if cli_seed is not None:
        return int(cli_seed)
    if env.get(SEED_ENV, "").strip():
        try:
            return int(env[SEED_ENV])
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env[SEED_ENV]!r}") from exc
    return int(config_seed)


def build_run_config(
    data: dict,
    *,
    out: str | None = None,
    modes: str | None = None,
    episodes: int | None = None,
    seed: int | None = None,
    env: Mapping[str, str] | None = None,
) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    allowed = {"seed", "model", "intervention", "decoding", "testbed", "modes", "fixed_factor", "out", "sweep", "weights_path"}
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")

    model = _section(data, "model", ModelConfig)
    model.validate()
    ic = _section(data, "intervention", InterventionConfig)
    ic.validate(model.n_layers)

    dec = data.get("decoding", {"strategy": "greedy"})
    strategy = dec.get("strategy", "greedy")
    run_seed = resolve_seed(data.get("seed", 0), seed, env)
    if strategy == "greedy":
        decoding: Decoding = Greedy()
    elif strategy == "sample":
        decoding = Sample(seed=run_seed, temperature=float(dec.get("temperature", 1.0)))
    else:
        raise ConfigError(f"decoding strategy must be 'greedy' or 'sample', got {strategy!r}")

    tb_raw = dict(data.get("testbed", {}))
    if "seed" in tb_raw:
        raise ConfigError("set the run seed at the top level, not inside 'testbed'")
    if episodes is not None:
        tb_raw["n_episodes"] = episodes
    testbed = _section({"testbed": tb_raw}, "testbed", TestbedConfig)
    testbed = replace(testbed, seed=run_seed)
    if testbed.n_episodes < 1 or testbed.max_new_tokens < 1:
        raise ConfigError("n_episodes and max_new_tokens must be >= 1")
    if not 1 <= testbed.min_concepts <= testbed.max_concepts:
        raise ConfigError("need 1 <= min_concepts <= max_concepts")
    prompt_len = model.n_visual_tokens + 5
    if prompt_len + testbed.max_new_tokens > model.max_positions:
        raise ConfigError(
            f"max_new_tokens={testbed.max_new_tokens} does not fit in max_positions={model.max_positions}"
        )

    mode_list = parse_modes(modes if modes is not None else data.get("modes", ["vanilla", "adavboost"]))
    factor = float(data.get("fixed_factor", 1.2))
    if factor < 1:
        raise ConfigError(f"fixed_factor must be >= 1, got {factor}")

    out_dir = Path(out if out is not None else data.get("out", "runs"))
    _ensure_writable(out_dir)
    wp = data.get("weights_path")
    return RunConfig(
        model=model,
        intervention=ic,
        decoding=decoding,
        testbed=testbed,
        modes=mode_list,
        fixed_factor=factor,
        out=out_dir,
        sweep=dict(data.get("sweep", {})),
        weights_path=Path(wp) if wp else None,
    )


def _ensure_writable(path: Path) -> None:
    try:
        path.mkdir(parents=True, exist_ok=True)
        with tempfile.NamedTemporaryFile(dir=path):
            pass
    except OSError as exc:
        raise ConfigError(f"output directory {path} is not writable: {exc}") from exc


def load_run_config(path: str | Path, **overrides) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return build_run_config(data, **overrides)


def make_modes(rc: RunConfig) -> dict[str, Mode]:
    """Instantiate modes; a repeated kind gets a ``#n`` suffix so both columns survive."""
    out: dict[str, Mode] = {}
    for kind in rc.modes:
        name = kind
        k = 2
        while name in out:
            name = f"{kind}#{k}"
            k += 1
        if kind == "vanilla":
            out[name] = Vanilla(name=name)
        elif kind == "fixed":
            out[name] = FixedBoost(rc.fixed_factor, rc.intervention.layer_start, rc.intervention.layer_end, name=name)
        else:
            out[name] = AdaVBoost(rc.intervention, name=name)
    return out


# ---------------------------------------------------------------------------
# episode execution (optionally fanned out to worker processes)

_WORKER_WEIGHTS: ModelWeights | None = None


def _load_or_build(rc: RunConfig) -> ModelWeights:
    if rc.weights_path is not None:
        return load_weights(rc.weights_path)
    return build_model(rc.model)


def _worker_init(rc: RunConfig) -> None:
    global _WORKER_WEIGHTS
    _WORKER_WEIGHTS = _load_or_build(rc)


def _worker_run(args) -> list[Episode]:
    rc, modes, indices = args
    return run_episodes(_WORKER_WEIGHTS, modes, rc.testbed, rc.decoding, rc.intervention, indices)


def execute(
    rc: RunConfig,
    modes: Mapping[str, Mode],
    weights: ModelWeights | None = None,
    workers: int = 1,
) -> list[Episode]:
    """Run all episodes; results come back in episode-index order regardless of ``workers``."""
    indices = list(range(rc.testbed.n_episodes))
    if workers <= 1:
        weights = weights or _load_or_build(rc)
        return run_episodes(weights, modes, rc.testbed, rc.decoding, rc.intervention, indices)
    chunks = [indices[i::workers] for i in range(workers)]
    with ProcessPoolExecutor(max_workers=workers, initializer=_worker_init, initargs=(rc,)) as pool:
        parts = pool.map(_worker_run, [(rc, dict(modes), c) for c in chunks if c])
        episodes = [ep for part in parts for ep in part]
    return sorted(episodes, key=lambda e: e.index)


def timing_summary(episodes: Sequence[Episode], modes: Sequence[str]) -> dict:
    """Milliseconds per mode from the monotonic clock, normalized per generated token."""
    out = {}
    for m in modes:
        total = sum(ep.results[m].duration_ms for ep in episodes)
        pre = sum(ep.results[m].prefill_ms for ep in episodes)
        n = sum(len(ep.results[m].tokens) for ep in episodes)
        out[m] = {
            "episodes": len(episodes),
            "tokens": n,
            "total_ms": total,
            "prefill_ms": pre,
            "decode_ms": total - pre,
            "ms_per_token": total / n if n else None,
            "decode_ms_per_token": (total - pre) / n if n else None,
        }
    return out


def write_traces(episodes: Sequence[Episode], modes: Sequence[str], out_dir: Path) -> dict[str, Path]:
    """One JSON-Lines file per mode; a record's ``step`` restarting at 1 marks the next episode."""
    trace_dir = out_dir / "traces"
    trace_dir.mkdir(parents=True, exist_ok=True)
    paths = {}
    for m in modes:
        path = trace_dir / f"{m.replace('#', '_')}.jsonl"
        with path.open("w") as fh:
            for ep in episodes:
                for rec in ep.results[m].trace:
                    fh.write(json.dumps(rec.to_dict()) + "\n")
        paths[m] = path
    return paths


def read_trace(path: str | Path) -> list[dict]:
    records = []
    with Path(path).open() as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                if tuple(rec) != TRACE_KEYS:
                    raise ValueError(f"trace record keys {list(rec)} != {list(TRACE_KEYS)}")
                records.append(rec)
    return records


def _episode_manifest(episodes: Sequence[Episode], modes: Sequence[str]) -> list[dict]:
    return [
        {
            "index": ep.index,
            "grounded": ep.image.slots,
            "tokens": {m: ep.results[m].tokens for m in modes},
        }
        for ep in episodes
    ]


# ---------------------------------------------------------------------------
# commands


def cmd_run(rc: RunConfig, workers: int = 1) -> dict:
    modes = make_modes(rc)
    episodes = execute(rc, modes, workers=workers)
    paths = write_traces(episodes, list(modes), rc.out)
    manifest = {
        "config": rc.to_dict(),
        "traces": {m: str(p) for m, p in paths.items()},
        "episodes": _episode_manifest(episodes, list(modes)),
        "timing": timing_summary(episodes, list(modes)),
    }
    (rc.out / "run.json").write_text(json.dumps(manifest, indent=2))
    return manifest


def compare_report(episodes: Sequence[Episode], rc: RunConfig, modes: Sequence[str]) -> dict:
    baseline = "vanilla" if "vanilla" in modes else modes[0]
    report = hallucination_metrics(episodes, rc.model, modes, baseline)
    timing = timing_summary(episodes, modes)
    base_rates = [episode_rate(ep.results[baseline].tokens, ep.image, rc.model) for ep in episodes]
    base_stats = report.modes[baseline]
    comparisons = {}
    for m in modes:
        if m == baseline:
            continue
        rates = [episode_rate(ep.results[m].tokens, ep.image, rc.model) for ep in episodes]
        wins, losses, p = paired_sign_test(base_rates, rates)
        comparisons[m] = {
            "rate_delta": report.modes[m].hallucination_rate - base_stats.hallucination_rate,
            "mean_episode_rate_delta": report.modes[m].mean_episode_rate - base_stats.mean_episode_rate,
            "sign_test": {"wins": wins, "losses": losses, "p_value": p},
            "latency_ratio": _ratio(timing[m]["ms_per_token"], timing[baseline]["ms_per_token"]),
            "decode_latency_ratio": _ratio(
                timing[m]["decode_ms_per_token"], timing[baseline]["decode_ms_per_token"]
            ),
        }
    return {
        "config": rc.to_dict(),
        "report": report.to_dict(),
        "comparisons": comparisons,
        "timing": timing,
    }


def _ratio(a, b):
    return a / b if a is not None and b else None


def cmd_compare(rc: RunConfig, workers: int = 1) -> dict:
    if len(rc.modes) < 2:
        raise ConfigError("compare needs at least two modes")
    modes = make_modes(rc)
    episodes = execute(rc, modes, workers=workers)
    write_traces(episodes, list(modes), rc.out)
    result = compare_report(episodes, rc, list(modes))
    (rc.out / "report.json").write_text(json.dumps(result, indent=2))
    return result


def parse_grid_arg(items: Sequence[str]) -> dict[str, list[float]]:
    """``name=v1,v2,...`` or ``name=preset`` for each item."""
    grid = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"grid entry {item!r} must look like name=v1,v2")
        name, values = item.split("=", 1)
        name = name.strip()
        if values.strip() == "preset":
            if name not in PRESET_GRIDS:
                raise ConfigError(f"no preset grid for {name!r}")
            grid[name] = list(PRESET_GRIDS[name])
            continue
        try:
            grid[name] = [float(v) for v in values.split(",") if v.strip()]
        except ValueError as exc:
            raise ConfigError(f"grid values for {name!r} must be numbers") from exc
    return grid


def grid_points(grid: Mapping[str, Sequence[float]]) -> list[dict[str, float]]:
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise PreconditionError("sweep grid is empty")
    bad = [k for k in grid if k not in SWEEP_PARAMS]
    if bad:
        raise ConfigError(f"cannot sweep {bad}; choose from {list(SWEEP_PARAMS)}")
    names = list(grid)
    return [dict(zip(names, combo)) for combo in itertools.product(*(grid[n] for n in names))]


SWEEP_COLUMNS = (
    *SWEEP_PARAMS,
    "hallucination_rate",
    "mean_episode_rate",
    "hallucinated",
    "generated",
    "vanilla_rate",
    "ms_per_token",
)


def cmd_sweep(rc: RunConfig, points: Sequence[dict[str, float]], workers: int = 1) -> list[dict]:
    configs = []
    for pt in points:
        ic = replace(rc.intervention, **pt)
        ic.validate(rc.model.n_layers)
        configs.append(ic)
    weights = _load_or_build(rc) if workers <= 1 else None
    base_eps = execute(rc, {"vanilla": Vanilla()}, weights, workers)
    vanilla_rate = hallucination_metrics(base_eps, rc.model, ["vanilla"]).modes["vanilla"].hallucination_rate
    rows = []
    for ic in configs:
        prc = replace(rc, intervention=ic)
        eps = execute(prc, {"adavboost": AdaVBoost(ic)}, weights, workers)
        st = hallucination_metrics(eps, rc.model, ["adavboost"], baseline="adavboost").modes["adavboost"]
        tm = timing_summary(eps, ["adavboost"])["adavboost"]
        rows.append(
            {
                "alpha": ic.alpha,
                "gamma": ic.gamma,
                "m_vis_max": ic.m_vis_max,
                "m_txt_max": ic.m_txt_max,
                "hallucination_rate": st.hallucination_rate,
                "mean_episode_rate": st.mean_episode_rate,
                "hallucinated": st.hallucinated,
                "generated": st.generated,
                "vanilla_rate": vanilla_rate,
                "ms_per_token": tm["ms_per_token"],
            }
        )
    with (rc.out / "sweep.csv").open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    return rows


# ---------------------------------------------------------------------------
# built-in invariant suites


@dataclass
class SuiteResult:
    name: str
    passed: bool
    detail: str


def _random_triple(rng: np.random.Generator, cfg: ModelConfig):
    k = int(rng.integers(1, min(4, cfg.n_visual_tokens) + 1))
    image = SyntheticImage(rng.choice(np.asarray(cfg.concept_ids), size=k, replace=False).tolist())
    n_sys = int(rng.integers(0, 3))
    n_inp = int(rng.integers(1, 5))
    sys_toks = tuple(int(t) for t in rng.integers(2, cfg.vocab_size, size=n_sys))
    inp_toks = tuple(int(t) for t in rng.integers(2, cfg.vocab_size, size=n_inp))
    return image, sys_toks, inp_toks


def check_vanilla_equivalence(weights: ModelWeights, n: int = 20, seed: int = 0) -> SuiteResult:
    cfg = weights.config
    rng = np.random.default_rng([seed, 1])
    identity_cfg = InterventionConfig(m_vis_max=1.0, m_txt_max=1.0, layer_end=cfg.n_layers, scope=Scope.ALL_TEXT)
    for i in range(n):
        image, s, t = _random_triple(rng, cfg)
        base = generate(GenerationRequest(image, s, t, 12, Vanilla()), weights)
        ada = generate(GenerationRequest(image, s, t, 12, AdaVBoost(identity_cfg)), weights)
        if base.tokens != ada.tokens:
            return SuiteResult("vanilla_equivalence", False, f"triple {i}: {base.tokens} != {ada.tokens}")
    return SuiteResult("vanilla_equivalence", True, f"{n} triples identical")


def _oracle_entropy(p: Sequence[float]) -> float:
    return -sum(x * math.log(x) for x in p if x > 0) / math.log(len(p))


def check_oracle_arithmetic(n: int = 2000, seed: int = 0, tol: float = 1e-12) -> SuiteResult:
    rng = np.random.default_rng([seed, 2])
    worst = 0.0
    for _ in range(n):
        a, g, h = rng.random(3)
        gamma = 0.05 + rng.random()
        mmax = 1 + rng.random()
        v_or = a * h + (1 - a) * (1 - g)
        r_or = v_or / gamma if v_or / gamma < 1 else 1.0
        m_or = 1 + (mmax - 1) * r_or
        v = risk.vge(h, g, a)
        r = risk.risk_score(v, gamma)
        worst = max(worst, abs(v - v_or), abs(r - r_or), abs(risk.boost_strength(r, mmax) - m_or))
        p = rng.dirichlet(np.ones(int(rng.integers(2, 20))))
        worst = max(worst, abs(risk.normalized_entropy(p) - _oracle_entropy(p.tolist())))
    logits = rng.normal(size=(5, 7))
    G = risk.grounding_vector(logits)
    rows = [[math.exp(x - max(r)) for x in r] for r in logits.tolist()]
    rows = [[x / sum(r) for x in r] for r in rows]
    G_or = [max(r[v] for r in rows) for v in range(7)]
    worst = max(worst, float(np.max(np.abs(G - np.asarray(G_or)))))
    ok = worst <= tol
    return SuiteResult("oracle_arithmetic", ok, f"max abs error {worst:.3g}")


def check_mass_monotonicity(n: int = 200, seed: int = 0) -> SuiteResult:
    rng = np.random.default_rng([seed, 3])
    factors = [1.0 + 0.1 * k for k in range(11)]
    bad = 0
    for _ in range(n):
        seg = SegmentMap(int(rng.integers(1, 6)), int(rng.integers(0, 3)), int(rng.integers(1, 4)), int(rng.integers(0, 4)))
        labels = seg.labels
        row = rng.normal(size=len(labels))
        row[labels == Segment.VISUAL] = np.abs(row[labels == Segment.VISUAL])
        vis = labels == Segment.VISUAL
        txt = labels == Segment.TEXT_INPUT
        masses = [kernels.softmax(boost_visual(row, seg, m))[vis].sum() for m in factors]
        bad += sum(b < a for a, b in zip(masses, masses[1:]))
        # dividing non-negative text scores never raises their mass
        row_t = row.copy()
        row_t[txt] = np.abs(row_t[txt])
        tm = [kernels.softmax(suppress_text(row_t, seg, m))[txt].sum() for m in factors]
        bad += sum(b > a for a, b in zip(tm, tm[1:]))
    return SuiteResult("mass_monotonicity", bad == 0, f"{bad} violations")


def check_cache_consistency(weights: ModelWeights, n: int = 5, length: int = 32, seed: int = 0, tol: float = 1e-9) -> SuiteResult:
    cfg = weights.config
    rng = np.random.default_rng([seed, 4])
    worst = 0.0
    for _ in range(n):
        image, s, t = _random_triple(rng, cfg)
        room = cfg.max_positions - (cfg.n_visual_tokens + len(s) + len(t))
        gen = [int(x) for x in rng.integers(1, cfg.vocab_size, size=min(length, room))]
        vis = encode_image(image, weights, cfg)
        state, _ = prefill(weights, cfg, vis, s, t)
        inc = np.stack([decode_step(state, weights, tok).z for tok in gen])
        full = forward_full(weights, vis, s, t, gen)
        worst = max(worst, float(np.max(np.abs(inc - full))))
    return SuiteResult("cache_consistency", worst <= tol, f"max abs logit difference {worst:.3g}")


def check_lag_invariant(weights: ModelWeights, n: int = 20, seed: int = 0) -> SuiteResult:
    cfg = weights.config
    rng = np.random.default_rng([seed, 5])
    ic = InterventionConfig(layer_end=cfg.n_layers)
    for i in range(n):
        image, s, t = _random_triple(rng, cfg)
        res = generate(GenerationRequest(image, s, t, 10, AdaVBoost(ic)), weights)
        prev_r = 0.0
        for rec in res.trace:
            expected = 1.0 + (ic.m_vis_max - 1.0) * prev_r
            if rec.m != expected:
                return SuiteResult("lag_invariant", False, f"trace {i} step {rec.step}: m={rec.m!r}, expected {expected!r}")
            prev_r = rec.r
    return SuiteResult("lag_invariant", True, f"{n} traces consistent")


FAULTS = ("lag",)


def run_checks(weights: ModelWeights | None = None, fault: str | None = None) -> list[SuiteResult]:
    """Run every suite. ``fault='lag'`` makes step 1 use a full boost, as a negative control."""
    weights = weights or build_model(ModelConfig())
    if fault is not None and fault not in FAULTS:
        raise ConfigError(f"unknown fault {fault!r}; choose from {list(FAULTS)}")
    results = [
        check_oracle_arithmetic(),
        check_mass_monotonicity(),
        check_vanilla_equivalence(weights),
        check_cache_consistency(weights),
    ]
    if fault == "lag":
        with mock.patch.object(generation, "boost_strength", lambda r, m: m):
            results.append(check_lag_invariant(weights))
    else:
        results.append(check_lag_invariant(weights))
    return results


# ---------------------------------------------------------------------------
# argument parsing


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="adavboost", description="Adaptive visual boosting on a desk-scale vision-language decoder.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="JSON run configuration")
        sp.add_argument("--out", help="output directory (overrides config)")
        sp.add_argument("--modes", help="comma list of vanilla, fixed, adavboost")
        sp.add_argument("--episodes", type=int, help="number of episodes")
        sp.add_argument("--seed", type=int, help=f"run seed (overrides {SEED_ENV} and config)")
        sp.add_argument("--workers", type=int, default=1, help="worker processes for episodes")

    common(sub.add_parser("run", help="generate and write JSON-Lines traces per mode"))
    common(sub.add_parser("compare", help="hallucination report and timing summary across modes"))
    sw = sub.add_parser("sweep", help="CSV of metrics over a hyperparameter grid")
    common(sw)
    sw.add_argument("--grid", action="append", default=[], metavar="NAME=V1,V2|preset")
    ck = sub.add_parser("check", help="run built-in invariant suites")
    ck.add_argument("--inject-fault", choices=FAULTS, help="deliberately break an invariant")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")

    if args.command == "check":
        try:
            results = run_checks(fault=args.inject_fault)
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        for r in results:
            print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail}")
        failed = [r.name for r in results if not r.passed]
        if failed:
            print(f"failing properties: {', '.join(failed)}", file=sys.stderr)
            return EXIT_FAILURE
        return EXIT_OK

    try:
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        rc = load_run_config(args.config, out=args.out, modes=args.modes, episodes=args.episodes, seed=args.seed)
        points = None
        if args.command == "sweep":
            grid = parse_grid_arg(args.grid) if args.grid else rc.sweep
            points = grid_points(grid)
        elif args.command == "compare" and len(rc.modes) < 2:
            raise ConfigError("compare needs at least two modes")
    except (ConfigError, PreconditionError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    t0 = time.monotonic()
    try:
        if args.command == "run":
            out = cmd_run(rc, args.workers)
            print(json.dumps({"traces": out["traces"], "timing": out["timing"]}, indent=2))
        elif args.command == "compare":
            out = cmd_compare(rc, args.workers)
            print(json.dumps({"report": out["report"], "comparisons": out["comparisons"], "timing": out["timing"]}, indent=2))
        else:
            rows = cmd_sweep(rc, points, args.workers)
            print(f"wrote {len(rows)} rows to {rc.out / 'sweep.csv'}")
    except Exception as exc:  # noqa: BLE001 - any runtime failure maps to exit 1
        log.debug("runtime failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    log.info("finished in %.1f ms", (time.monotonic() - t0) * 1e3)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
