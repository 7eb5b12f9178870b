import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from adavboost import risk
from adavboost.errors import ConfigError, PreconditionError

import oracles

unit = st.floats(0.0, 1.0)


def test_grounding_vector_elementwise_max():
    # rows whose softmax is exactly [0.7, 0.3] and [0.2, 0.8]
    logits = np.log([[0.7, 0.3], [0.2, 0.8]])
    np.testing.assert_allclose(risk.grounding_vector(logits), [0.7, 0.8], atol=1e-15)


def test_grounding_vector_single_position_is_softmax():
    z = np.array([0.1, 2.0, -1.0])
    np.testing.assert_allclose(risk.grounding_vector(z), oracles.softmax(z.tolist()), atol=1e-15)


def test_grounding_vector_is_read_only_and_rejects_empty():
    g = risk.grounding_vector(np.zeros((2, 4)))
    with pytest.raises(ValueError):
        g[0] = 1.0
    with pytest.raises(PreconditionError):
        risk.grounding_vector(np.zeros((0, 4)))


@given(
    st.tuples(st.integers(1, 6), st.integers(2, 64)).flatmap(
        lambda s: hnp.arrays(np.float64, s, elements=st.floats(-20, 20))
    ),
    st.randoms(use_true_random=False),
)
def test_grounding_vector_double_loop_and_permutation(logits, rnd):
    g = risk.grounding_vector(logits)
    np.testing.assert_allclose(g, oracles.grounding_vector(logits.tolist()), rtol=1e-12, atol=1e-15)
    assert np.all(g > 0) and np.all(g <= 1)
    perm = list(range(logits.shape[0]))
    rnd.shuffle(perm)
    assert np.array_equal(risk.grounding_vector(logits[perm]), g)


def test_normalized_entropy_examples():
    assert risk.normalized_entropy(np.full(4, 0.25)) == pytest.approx(1.0, abs=1e-15)
    assert risk.normalized_entropy([0.0, 1.0, 0.0]) == 0.0
    assert risk.normalized_entropy([0.5, 0.5, 0.0, 0.0]) == pytest.approx(math.log(2) / math.log(4), abs=1e-15)
    assert risk.normalized_entropy([0.5, 0.5, 0.0, 0.0]) == pytest.approx(0.5, abs=1e-15)


def test_normalized_entropy_needs_two_symbols():
    with pytest.raises(PreconditionError):
        risk.normalized_entropy([1.0])


def test_grounding_score_examples():
    G = np.array([0.2, 0.9, 0.5])
    assert risk.grounding_score(G, [1.0, 3.0, 2.0]) == 0.9
    assert risk.grounding_score(G, [0.0, 0.0, 1.0]) == 0.5
    assert risk.grounding_score(G, [4.0, 4.0, 4.0]) == 0.2
    with pytest.raises(PreconditionError):
        risk.grounding_score(G, [1.0, 2.0])


@given(hnp.arrays(np.float64, 8, elements=st.floats(-5, 5)), st.floats(1e-3, 1e3))
def test_grounding_score_invariant_to_positive_rescaling(z, c):
    G = np.linspace(0.1, 0.8, 8)
    assert risk.grounding_score(G, z * c) == risk.grounding_score(G, z)


def test_vge_examples():
    assert risk.vge(0.4, 0.9, 0.5) == pytest.approx(0.25, abs=1e-15)
    assert risk.vge(0.37, 0.6, 1.0) == 0.37
    assert risk.vge(0.37, 0.6, 0.0) == pytest.approx(0.4, abs=1e-15)


def test_risk_score_examples():
    assert risk.risk_score(0.0, 0.5) == 0.0
    assert risk.risk_score(0.25, 0.5) == 0.5
    assert risk.risk_score(0.7, 0.5) == 1.0
    assert risk.risk_score(0.5, 0.5) == 1.0
    for bad in (0.0, -1.0):
        with pytest.raises(ConfigError):
            risk.risk_score(0.1, bad)


def test_boost_strength_examples():
    assert risk.boost_strength(0.0, 1.7) == 1.0
    assert risk.boost_strength(1.0, 1.7) == 1.7
    assert risk.boost_strength(0.5, 1.1) == pytest.approx(1.05, abs=1e-15)


@given(unit, unit, unit, unit, unit)
def test_vge_monotone(h1, h2, g1, g2, a):
    lo_h, hi_h = sorted((h1, h2))
    lo_g, hi_g = sorted((g1, g2))
    assert risk.vge(lo_h, g1, a) <= risk.vge(hi_h, g1, a)
    assert risk.vge(h1, lo_g, a) >= risk.vge(h1, hi_g, a)


@given(unit, unit, unit, st.floats(1e-3, 10), st.floats(1.0, 5.0))
def test_composition_bounds(h, g, a, gamma, mmax):
    v = risk.vge(h, g, a)
    r = risk.risk_score(v, gamma)
    m = risk.boost_strength(r, mmax)
    assert 0.0 <= v <= 1.0 + 1e-15
    assert 0.0 <= r <= 1.0
    assert 1.0 <= m <= mmax


def test_readout_fields_consistent():
    z = np.array([0.0, 2.0, 1.0, -1.0])
    p = np.exp(z) / np.exp(z).sum()
    G = np.array([0.3, 0.6, 0.9, 0.1])
    ro = risk.readout(p, z, G, 0.5, 0.5, 1.1)
    assert ro.g_t == 0.6
    assert ro.h_bar == pytest.approx(oracles.normalized_entropy(p.tolist()), abs=1e-14)
    assert ro.vge == 0.5 * ro.h_bar + 0.5 * (1 - ro.g_t)
    assert ro.r == min(ro.vge / 0.5, 1.0)
    assert ro.m == 1 + 0.1 * ro.r
