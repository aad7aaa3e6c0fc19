import numpy as np
import numpy.testing as npt
import pytest

from lort.attention import (
    AttentionInput,
    count_ops,
    msar_correct,
    scea,
    softmax_attention,
    taylor_attention,
)
from lort.errors import DegenerateAttentionError, ShapeError
from lort.verify import taylor_reference
from lort.weights import WeightStore


def random_input(h=2, t=4, f=8, dh=6, seed=0):
    rng = np.random.default_rng(seed)
    n = t * f
    return AttentionInput(rng.standard_normal((h, n, dh)),
                          rng.standard_normal((h, n, dh)),
                          rng.standard_normal((h, n, dh)), (t, f))


def test_attention_input_validation():
    with pytest.raises(ShapeError):
        AttentionInput(np.zeros((2, 8, 4)), np.zeros((2, 8, 4)), np.zeros((2, 9, 4)), (2, 4))
    with pytest.raises(ShapeError):
        AttentionInput(np.zeros((2, 8, 4)), np.zeros((2, 8, 4)), np.zeros((2, 8, 4)), (3, 4))


def test_taylor_matches_bruteforce_reference():
    for seed in range(5):
        ain = random_input(seed=seed)
        npt.assert_allclose(taylor_attention(ain), taylor_reference(ain), atol=1e-12)


def test_zero_query_reduces_to_row_mean():
    ain = random_input(seed=1)
    zero_q = AttentionInput(np.zeros_like(ain.q), ain.k, ain.v, ain.grid)
    mean = np.broadcast_to(ain.v.mean(axis=1, keepdims=True), ain.v.shape)
    npt.assert_allclose(taylor_attention(zero_q, normalize=False), mean, atol=1e-12)
    npt.assert_allclose(softmax_attention(zero_q, scale=1.0), mean, atol=1e-12)


def test_softmax_attention_rows_are_convex_combinations():
    ain = random_input(seed=2)
    out = softmax_attention(ain)
    lo = ain.v.min(axis=1, keepdims=True)
    hi = ain.v.max(axis=1, keepdims=True)
    assert np.all(out >= lo - 1e-12) and np.all(out <= hi + 1e-12)


def test_degenerate_taylor_denominator_raises():
    n, dh = 6, 3
    q = np.zeros((1, n, dh))
    q[..., 0] = 1.0
    k = -q
    with pytest.raises(DegenerateAttentionError):
        taylor_attention(AttentionInput(q, k, np.ones((1, n, dh)), (2, 3)))


def msar_params(c, seed=None):
    ws = WeightStore()
    if seed is None:
        ws["m.local.w"] = np.zeros((c, 1, 3, 3))
        ws["m.local.b"] = np.zeros(c)
        ws["m.gate.w"] = np.zeros((c, 2 * c, 1, 1))
        ws["m.gate.b"] = np.zeros(c)
    else:
        rng = np.random.default_rng(seed)
        ws["m.local.w"] = rng.standard_normal((c, 1, 3, 3))
        ws["m.local.b"] = rng.standard_normal(c)
        ws["m.gate.w"] = rng.standard_normal((c, 2 * c, 1, 1))
        ws["m.gate.b"] = rng.standard_normal(c)
    return ws.view("m")


def test_msar_zero_params_is_identity_on_vprime():
    ain = random_input(seed=3)
    vp = taylor_attention(ain)
    npt.assert_array_equal(msar_correct(ain, vp, msar_params(2 * 6)), vp)


def test_msar_correction_is_bounded_by_local_branch():
    ain = random_input(seed=4)
    vp = taylor_attention(ain)
    out = msar_correct(ain, vp, msar_params(2 * 6, seed=5))
    assert out.shape == vp.shape
    assert np.all(np.isfinite(out))
    assert not np.allclose(out, vp)


def scea_params(c, seed=0):
    rng = np.random.default_rng(seed)
    ws = WeightStore()
    ws["s.ch.w"] = rng.standard_normal((1, 1, 3, 1))
    ws["s.ch.b"] = rng.standard_normal(1)
    ws["s.sp.w"] = rng.standard_normal((1, 2, 5, 5))
    ws["s.sp.b"] = rng.standard_normal(1)
    return ws.view("s")


def test_scea_gates_shrink_the_input():
    rng = np.random.default_rng(6)
    x = rng.standard_normal((2, 8, 5, 7))
    out = scea(x, scea_params(8))
    assert out.shape == x.shape
    assert np.all(np.abs(out) <= np.abs(x) + 1e-12)  # both gates are in (0,1)
    with pytest.raises(ShapeError):
        scea(x[0], scea_params(8))


def test_count_ops_closed_forms():
    ops = count_ops(8, 8, 16)
    assert ops.mhsa_ops == 196608
    assert ops.tmsa_ops == 51200
    ops2 = count_ops(2, 3, 5)
    assert ops2.mhsa_ops == 4 * 6 * 25 + 2 * 36 * 5
    assert ops2.tmsa_ops == 18 * 6 * 5 + 2 * 6 * 25
    with pytest.raises(ShapeError):
        count_ops(0, 4, 4)
