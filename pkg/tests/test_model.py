import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adavboost import intervention as iv
from adavboost.errors import CapacityError, ConfigError, InterventionError, PreconditionError
from adavboost.kernels import layer_norm, softmax
from adavboost.model import (
    ANSWER_ID,
    LN_EPS,
    MAGIC,
    ModelConfig,
    Segment,
    SegmentMap,
    SyntheticImage,
    build_model,
    decode_step,
    encode_image,
    forward_full,
    load_weights,
    prefill,
    save_weights,
)


def _prompt(weights, concepts=(8, 12), sys=(2, 3), inp=(4, 5, 6), noise=None):
    vis = encode_image(SyntheticImage(concepts), weights, noise=noise)
    return vis, prefill(weights, None, vis, sys, inp)


# -- configuration ----------------------------------------------------------


@pytest.mark.parametrize(
    "kwargs",
    [
        {"vocab_size": 3},
        {"hidden_dim": 130, "n_heads": 4},
        {"n_layers": 0},
        {"n_visual_tokens": 0},
        {"n_heads": 8, "hidden_dim": 64},  # head_dim 8 cannot hold 8 slots + 4 segments
        {"n_concepts": 60},
        {"prior_bias": -1.0},
    ],
)
def test_invalid_config_rejected(kwargs):
    with pytest.raises(ConfigError):
        build_model(ModelConfig(**kwargs))


def test_head_dim_arithmetic():
    cfg = ModelConfig(hidden_dim=32, n_heads=4, n_visual_tokens=4, n_concepts=8, n_priors=4, max_positions=14)
    assert cfg.head_dim == 8
    build_model(cfg)


def test_from_dict_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        ModelConfig.from_dict({"hidden": 3})


def test_vocabulary_partition(config):
    assert set(config.prior_ids) <= set(config.concept_ids)
    assert not set(config.concept_ids) & set(config.function_ids)
    assert max(config.concept_ids) < config.vocab_size


# -- construction -----------------------------------------------------------


def test_build_is_deterministic(config):
    a, b = build_model(config), build_model(config)
    for (na, ta), (nb, tb) in zip(a.tensors(), b.tensors()):
        assert na == nb and np.array_equal(ta, tb)


def test_seed_changes_weights():
    a = build_model(ModelConfig(seed=1))
    b = build_model(ModelConfig(seed=2))
    assert not np.array_equal(a.embed, b.embed)
    assert not np.array_equal(a.layers[0].wq, b.layers[0].wq)


def test_weights_are_finite_and_read_only(weights):
    for _, t in weights.tensors():
        assert np.all(np.isfinite(t))
        assert not t.flags.writeable


def test_lm_head_is_tied_to_embedding(weights):
    h = np.random.default_rng(0).normal(size=weights.config.hidden_dim)
    expected = layer_norm(h, LN_EPS, weights.lnf_gain, weights.lnf_bias) @ weights.embed.T
    np.testing.assert_array_equal(weights.lm_head(h), weights.config.logit_scale * expected)


def test_prior_bias_only_on_prior_ids(weights, config):
    nz = set(np.flatnonzero(weights.prior_bias).tolist())
    assert nz == set(config.prior_ids)


# -- visual encoder -----------------------------------------------------------


def test_encode_single_concept_zero_noise(weights):
    vis = encode_image(SyntheticImage({13}), weights, noise=0.0)
    assert np.array_equal(vis[0], weights.embed[13])
    for row in vis[1:]:
        assert np.array_equal(row, weights.pad_embed)


def test_encode_deterministic_per_concept_set(weights):
    a = encode_image(SyntheticImage([9, 14, 20]), weights)
    b = encode_image(SyntheticImage({20, 9, 14}), weights)
    assert np.array_equal(a, b)


def test_encode_errors(weights, config):
    with pytest.raises(CapacityError):
        encode_image(SyntheticImage(range(8, 8 + config.n_visual_tokens + 1)), weights)
    with pytest.raises(PreconditionError):
        encode_image(SyntheticImage({3}), weights)
    with pytest.raises(PreconditionError):
        encode_image(SyntheticImage({config.vocab_size}), weights)
    with pytest.raises(ValueError):
        SyntheticImage([])


def test_concept_embedding_decodes_to_itself(weights, config):
    for c in config.concept_ids:
        p = softmax(weights.lm_head(weights.embed[c]))
        assert int(np.argmax(p)) == c


def test_prefill_visual_logits_argmax_at_concept(weights, config):
    rng = np.random.default_rng(5)
    for _ in range(20):
        k = int(rng.integers(1, 5))
        concepts = sorted(rng.choice(config.concept_ids, size=k, replace=False).tolist())
        _, (_, logits) = _prompt(weights, concepts, noise=0.0)
        for slot, c in enumerate(concepts):
            assert int(np.argmax(logits[slot])) == c


# -- prefill and decode -------------------------------------------------------


def test_prefill_bookkeeping():
    w = build_model(ModelConfig(n_visual_tokens=2, n_concepts=4, n_priors=2))
    vis = encode_image(SyntheticImage({8}), w)
    state, logits = prefill(w, None, vis, [2], [4, 5])
    assert state.cache.length == 5
    assert logits.shape == (2, w.config.vocab_size)
    assert state.segments.labels.tolist() == [Segment.VISUAL] * 2 + [Segment.SYSTEM] + [Segment.TEXT_INPUT] * 2
    assert state.r_prev == 0.0


def test_prefill_twice_identical(weights):
    _, (s1, l1) = _prompt(weights)
    _, (s2, l2) = _prompt(weights)
    assert np.array_equal(s1.cache.keys, s2.cache.keys)
    assert np.array_equal(s1.cache.values, s2.cache.values)
    assert np.array_equal(l1, l2)


def test_prefill_without_prompt_needs_visual_tokens(weights):
    vis = encode_image(SyntheticImage({8}), weights)
    state, _ = prefill(weights, None, vis, [], [])
    assert state.cache.length == weights.config.n_visual_tokens
    with pytest.raises(PreconditionError):
        prefill(weights, None, np.zeros((0, weights.config.hidden_dim)), [], [])


def test_score_row_length_includes_self(weights):
    _, (state, _) = _prompt(weights)
    n0 = state.segments.prefill_length
    seen = []

    def spy(scores, layer):
        seen.append((layer, scores.shape))
        return scores

    for t in range(1, 4):
        decode_step(state, weights, ANSWER_ID, spy)
        H = weights.config.n_heads
        assert {s for l, s in seen[-weights.config.n_layers :]} == {(H, n0 + t)}


def test_identity_and_unit_scaling_callbacks_match_none(weights):
    outs = []
    for cb in (None, iv.identity, lambda s, l: s * 1.0):
        _, (state, _) = _prompt(weights)
        outs.append(np.stack([decode_step(state, weights, t, cb).z for t in (1, 9, 12)]))
    assert np.array_equal(outs[0], outs[1])
    assert np.array_equal(outs[0], outs[2])


def test_nonfinite_callback_raises(weights):
    _, (state, _) = _prompt(weights)
    with pytest.raises(InterventionError):
        decode_step(state, weights, ANSWER_ID, lambda s, l: s + np.inf)


def test_attention_rows_normalised_after_intervention(weights):
    _, (state, _) = _prompt(weights)
    mod = iv.StepModulator(state.segments, 40, 0, weights.config.n_layers, 1.7, iv.Scope.ALL_TEXT)
    mod.set_boost(1.3)
    rows = []

    def capture(scores, layer):
        out = mod(scores, layer)
        rows.append(softmax(out, axis=-1))
        return out

    for t in (1, 10, 11):
        decode_step(state, weights, t, capture)
    for a in rows:
        np.testing.assert_allclose(a.sum(axis=-1), 1.0, atol=1e-9)


def test_step_logits_probabilities(weights):
    _, (state, _) = _prompt(weights)
    out = decode_step(state, weights, ANSWER_ID)
    np.testing.assert_array_equal(out.p, softmax(out.z))


def test_decode_respects_max_positions():
    w = build_model(ModelConfig(max_positions=14))
    vis = encode_image(SyntheticImage({8}), w)
    state, _ = prefill(w, None, vis, [2], [4, 5, 6])
    decode_step(state, w, 1)
    decode_step(state, w, 9)
    with pytest.raises(PreconditionError):
        decode_step(state, w, 9)


def test_cache_matches_full_recompute(weights):
    rng = np.random.default_rng(11)
    for _ in range(5):
        vis = encode_image(SyntheticImage({8, 15, 21}), weights)
        gen = [int(x) for x in rng.integers(1, weights.config.vocab_size, size=32)]
        state, _ = prefill(weights, None, vis, [2, 3], [4, 5, 6])
        inc = np.stack([decode_step(state, weights, t).z for t in gen])
        full = forward_full(weights, vis, [2, 3], [4, 5, 6], gen)
        assert np.max(np.abs(inc - full)) < 1e-9


def _naive_decode(weights, vis, sys, inp, gen, cfg, boosts):
    """Recompute every position from scratch, modulating generated-query rows.

    Generated position i uses boost ``boosts[i]``; prompt rows are unmodified.
    Shares no cache code with decode_step.
    """
    w = weights
    c = w.config
    n_pre = vis.shape[0] + len(sys) + len(inp)
    seg = SegmentMap(vis.shape[0], len(sys), len(inp), len(gen))
    ids = list(sys) + list(inp) + list(gen)
    x = np.vstack([vis, c.embed_scale * w.embed[ids]]) + w.pos[: len(seg)] + w.seg[seg.labels]
    H, dh = c.n_heads, c.head_dim
    for l, lw in enumerate(w.layers):
        h = layer_norm(x, LN_EPS, lw.ln1_gain, lw.ln1_bias)
        q, k, v = h @ lw.wq, h @ lw.wk, h @ lw.wv
        out = np.zeros_like(x)
        for p in range(len(seg)):
            for hd in range(H):
                cols = slice(hd * dh, (hd + 1) * dh)
                row = np.array([q[p, cols] @ k[j, cols] / np.sqrt(dh) for j in range(p + 1)])
                if p >= n_pre:
                    prefix = SegmentMap(seg.n_visual, seg.n_system, seg.n_input, p + 1 - n_pre)
                    row = iv.apply(row, prefix, cfg, boosts[p - n_pre], l)
                a = softmax(row)
                out[p, cols] = a @ v[: p + 1, cols]
        x = x + out @ lw.wo
        hh = layer_norm(x, LN_EPS, lw.ln2_gain, lw.ln2_bias) @ lw.w1 + lw.b1
        hh = 0.5 * hh * (1 + np.tanh(np.sqrt(2 / np.pi) * (hh + 0.044715 * hh**3)))
        x = x + hh @ lw.w2 + lw.b2
    return w.lm_head(x[n_pre:]) + w.prior_bias


def test_decode_under_intervention_matches_naive_recompute(small_weights):
    w = small_weights
    cfg = iv.InterventionConfig(m_vis_max=1.5, m_txt_max=1.4, layer_start=1, layer_end=2, scope=iv.Scope.ALL_TEXT)
    vis = encode_image(SyntheticImage({9, 17}), w)
    gen = [1, 9, 17, 12, 9]
    boosts = [1.0, 1.2, 1.5, 1.1, 1.35]
    state, _ = prefill(w, None, vis, [2], [4, 5])
    mod = iv.StepModulator(state.segments, 30, cfg.layer_start, cfg.layer_end, cfg.m_txt_max, cfg.scope)
    inc = []
    for tok, m in zip(gen, boosts):
        mod.set_boost(m)
        inc.append(decode_step(state, w, tok, mod).z)
    ref = _naive_decode(w, vis, [2], [4, 5], gen, cfg, boosts)
    np.testing.assert_allclose(np.stack(inc), ref, rtol=0, atol=1e-9)


# -- segment map --------------------------------------------------------------


@given(st.integers(1, 8), st.integers(0, 4), st.integers(0, 6), st.integers(0, 10))
def test_segment_map_layout(nv, ns, ni, ng):
    seg = SegmentMap(nv, ns, ni, ng)
    labels = seg.labels.tolist()
    assert len(labels) == len(seg) == nv + ns + ni + ng
    assert labels == sorted(labels)  # Visual < System < TextInput < Generated, contiguous
    assert labels[:nv] == [Segment.VISUAL] * nv
    assert seg.prefill_length == nv + ns + ni
    parts = np.concatenate([seg.visual, seg.system, seg.text_input, seg.generated])
    assert parts.tolist() == list(range(len(seg)))


# -- snapshot -----------------------------------------------------------------


def test_snapshot_roundtrip(tmp_path, small_weights):
    path = tmp_path / "w.bin"
    save_weights(small_weights, path)
    loaded = load_weights(path)
    assert loaded.config == small_weights.config
    for (na, a), (nb, b) in zip(small_weights.tensors(), loaded.tensors()):
        assert na == nb and np.array_equal(a, b)


def test_snapshot_layout(tmp_path, small_weights):
    path = tmp_path / "w.bin"
    save_weights(small_weights, path)
    raw = path.read_bytes()
    assert raw[:8] == MAGIC
    (hlen,) = struct.unpack("<Q", raw[8:16])
    header = json.loads(raw[16 : 16 + hlen])
    assert header["dtype"] == "<f8"
    assert header["seed"] == small_weights.config.seed
    assert header["dims"]["hidden_dim"] == 64
    assert len(raw) == 16 + hlen + header["data_bytes"]
    first = header["tensors"][0]
    assert first["name"] == "embed" and first["offset"] == 0
    data = np.frombuffer(raw[16 + hlen :], dtype="<f8", count=int(np.prod(first["shape"])))
    assert np.array_equal(data.reshape(first["shape"]), small_weights.embed)


def test_snapshot_rejects_corruption(tmp_path, small_weights):
    path = tmp_path / "w.bin"
    save_weights(small_weights, path)
    raw = path.read_bytes()
    (tmp_path / "magic.bin").write_bytes(b"XXXXXXXX" + raw[8:])
    (tmp_path / "short.bin").write_bytes(raw[:-8])
    (tmp_path / "header.bin").write_bytes(raw[:20])
    for name in ("magic.bin", "short.bin", "header.bin"):
        with pytest.raises(ConfigError):
            load_weights(tmp_path / name)
