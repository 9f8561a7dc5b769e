"""Hypothesis property tests for the spec-level invariants that hold for
arbitrary inputs (kept on small grids so the suite stays fast)."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from bronchograph import Volume, betti_numbers, distance_transform, overlap_metrics
from bronchograph.stats import welch_t_test

small_mask = st.integers(0, 2**24 - 1).map(
    lambda bits: np.array([(bits >> i) & 1 for i in range(24)], dtype=np.uint8).reshape(2, 3, 4)
)

spacing = st.tuples(
    st.floats(0.25, 4.0), st.floats(0.25, 4.0), st.floats(0.25, 4.0)
)


@given(small_mask, spacing)
@settings(max_examples=60, deadline=None)
def test_edt_zero_iff_background(bits, sp):
    v = Volume(bits, sp, "binary")
    d = distance_transform(v).data
    assert np.all((d == 0) == (bits == 0))


@given(small_mask, spacing, st.floats(1.5, 4.0))
@settings(max_examples=40, deadline=None)
def test_edt_scaling_equivariance(bits, sp, k):
    v1 = Volume(bits, sp, "binary")
    v2 = Volume(bits, tuple(s * k for s in sp), "binary")
    d1 = distance_transform(v1).data
    d2 = distance_transform(v2).data
    assert np.allclose(d2, k * d1, rtol=1e-12, atol=1e-12)


@given(small_mask, small_mask)
@settings(max_examples=60, deadline=None)
def test_dsc_symmetry_and_bounds(a, b):
    va = Volume(a, (1, 1, 1), "binary")
    vb = Volume(b, (1, 1, 1), "binary")
    r1 = overlap_metrics(va, vb)
    r2 = overlap_metrics(vb, va)
    assert r1.dsc == r2.dsc
    for x in (r1.dsc, r1.sensitivity, r1.precision):
        assert 0.0 <= x <= 1.0


@given(st.integers(1, 20), st.data())
@settings(max_examples=60, deadline=None)
def test_betti_formula_on_random_graphs(n, data):
    max_edges = n * (n - 1) // 2
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    edges = data.draw(st.lists(st.sampled_from(pairs), max_size=max_edges, unique=True)) if pairs else []
    beta0, beta1 = betti_numbers(n, edges)
    assert 1 <= beta0 <= n or (n == 0 and beta0 == 0)
    assert beta1 >= 0
    assert beta1 == len(edges) - n + beta0


@given(
    st.lists(st.floats(-50, 50), min_size=2, max_size=10),
    st.lists(st.floats(-50, 50), min_size=2, max_size=10),
)
@settings(max_examples=60, deadline=None)
def test_welch_antisymmetry(a, b):
    ta, _, pa = welch_t_test(a, b)
    tb, _, pb = welch_t_test(b, a)
    assert ta == -tb or (ta == 0 and tb == 0)
    assert pa == pb
    assert 0.0 <= pa <= 1.0
