from pathlib import Path

import numpy as np
import pytest

from isnrestore.errors import DimensionError, MissingParameterError, SizeError
from isnrestore.network import (UnfoldedModel, dmum, ep_block, forward, init_unfolded, mum, parameter_shapes,
                                random_model, resm, seed_model, simple_gate, sub, zero_residual)

GOLDEN = Path(__file__).parent / "golden" / "blocks.npz"
PARAM_COUNT_16_48 = 5_031_441  # recorded at the first verified build


@pytest.fixture(scope="module")
def small():
    return random_model(n=1, channels=8, seed=21)


def zero_params(prefix_params):
    return {k: np.zeros_like(v) for k, v in prefix_params.items()}


def test_ep_block_zero_is_identity(rng, small):
    x = rng.standard_normal((1, 8, 5, 5))
    np.testing.assert_array_equal(ep_block(x, zero_params(sub(small.params, "init.ep"))), x)


def test_ep_block_shape_and_channel_check(rng, small):
    p = sub(small.params, "init.ep")
    assert ep_block(rng.standard_normal((2, 8, 6, 3)), p).shape == (2, 8, 6, 3)
    with pytest.raises(DimensionError):
        ep_block(rng.standard_normal((1, 6, 4, 4)), p)
    with pytest.raises(DimensionError):
        simple_gate(np.zeros((1, 3, 2, 2)))


def test_block_goldens(small):
    g = np.load(GOLDEN)
    blk = sub(small.params, "blocks.0")
    np.testing.assert_allclose(ep_block(g["x"], sub(small.params, "init.ep")), g["ep_out"], rtol=0, atol=1e-12)
    a, b = dmum(g["i_new"], g["a_prev"], g["b_prev"], g["d_feat"], sub(blk, "dmum"))
    np.testing.assert_allclose(a, g["dmum_a"], rtol=0, atol=1e-12)
    np.testing.assert_allclose(b, g["dmum_b"], rtol=0, atol=1e-12)
    np.testing.assert_allclose(mum(g["lam"], g["i_new"], sub(blk, "mum")), g["mum_out"], rtol=0, atol=1e-12)


def test_dmum_normalized(rng, small):
    i, d = rng.standard_normal((8, 6, 4)), rng.standard_normal((8, 6, 4))
    a, b = dmum(i, np.eye(6)[None].repeat(8, 0), np.eye(4)[None].repeat(8, 0), d, sub(small.params, "blocks.0.dmum"))
    assert a.shape == (8, 6, 6) and b.shape == (8, 4, 4)
    np.testing.assert_allclose(np.linalg.norm(a, axis=(1, 2)), 1.0, atol=1e-12)
    np.testing.assert_allclose(np.linalg.norm(b, axis=(1, 2)), 1.0, atol=1e-12)


def test_mum_zero_network_keeps_multiplier(rng, small):
    p = zero_params(sub(small.params, "blocks.0.mum"))
    lam, i = rng.standard_normal((8, 4, 4)), rng.standard_normal((8, 4, 4))
    # zero EP is the identity, so e = I; zero Convs give 0, hence Lambda + I
    np.testing.assert_allclose(mum(lam, i, p), lam + i, atol=1e-15)
    assert mum(lam, i, sub(small.params, "blocks.0.mum")).shape == lam.shape


def test_init_shapes():
    model = seed_model(n=1)
    st = init_unfolded(np.random.default_rng(0).random((1, 3, 64, 64)), model)
    for t in (st.I, st.Lambda, st.A, st.B, st.D_feat):
        assert t.shape == (48, 16, 16)
    np.testing.assert_allclose(np.linalg.norm(st.A, axis=(1, 2)), 1.0, atol=1e-12)
    assert st.pad == (0, 0)


def test_init_zero_image_guard():
    model = seed_model(n=1)
    st = init_unfolded(np.zeros((1, 3, 12, 12)), model)
    np.testing.assert_array_equal(st.A, np.eye(3)[None].repeat(48, 0))
    np.testing.assert_array_equal(st.Lambda, 0.0)


def test_init_pads_indivisible():
    st = init_unfolded(np.random.default_rng(1).random((1, 3, 14, 13)), seed_model(n=1))
    assert st.pad == (2, 3) and st.I.shape == (48, 4, 4)


def test_init_rejects_tiny_input():
    with pytest.raises(SizeError):
        init_unfolded(np.zeros((1, 3, 8, 16)), seed_model(n=1))


def _resm_inputs(rng, c=8, h=4, w=4):
    a, b = rng.standard_normal((c, h, h)), rng.standard_normal((c, w, w))
    return rng.standard_normal((c, h, w)), a, b, rng.standard_normal((c, h, w)), rng.standard_normal((c, h, w))


def test_resm_eta_zero_and_shape(rng, small):
    i, a, b, lam, d = _resm_inputs(rng)
    p = sub(small.params, "blocks.0.resm")
    np.testing.assert_array_equal(resm(i, a, b, lam, d, p, 0.0), i)
    assert resm(i, a, b, lam, d, p, 0.01, "supplement").shape == i.shape


@pytest.mark.parametrize("variant", ["main", "supplement"])
def test_resm_zero_weights_transcription(rng, small, variant):
    i, a, b, lam, d = _resm_inputs(rng)
    p = zero_params(sub(small.params, "blocks.0.resm"))
    # zero weights: every EP block is the identity, Convs output 0, W_k = 0
    f = a.transpose(0, 2, 1) @ (d - a @ i @ b) @ b.transpose(0, 2, 1) + i + lam
    h = a.transpose(0, 2, 1) @ a @ f @ b @ b.transpose(0, 2, 1) + f
    np.testing.assert_allclose(resm(i, a, b, lam, d, p, 0.25, variant), i - 0.25 * h, atol=1e-12)


def test_seed_model_contract():
    m1, m2 = seed_model(n=2, channels=8, seed=5), seed_model(n=2, channels=8, seed=5)
    assert all(np.array_equal(m1.params[k], m2.params[k]) for k in m1.params)
    assert m1.eta == 0.01 and float(m1.params["blocks.0.resm.wk"]) == 0.1
    assert all(float(v) == 0 for k, v in m1.params.items() if k.endswith((".beta", ".gamma", ".tau")))
    x = np.random.default_rng(0).standard_normal((1, 8, 4, 4))
    np.testing.assert_array_equal(ep_block(x, sub(m1.params, "init.ep")), x)
    with pytest.raises(ValueError):
        seed_model(n=0)


def test_parameter_count():
    assert sum(int(np.prod(s)) for s in parameter_shapes(16, 48).values()) == PARAM_COUNT_16_48
    assert seed_model(n=1, channels=8).parameter_count() == sum(
        int(np.prod(s)) for s in parameter_shapes(1, 8).values())


def test_validate_rejects_missing_and_extra(small):
    params = dict(small.params)
    params.pop("eta")
    params["stray"] = np.zeros(1)
    with pytest.raises(MissingParameterError) as info:
        UnfoldedModel(params)
    assert "eta" in info.value.missing and "stray" in info.value.unexpected
    with pytest.raises(ValueError):
        UnfoldedModel(small.params, "other")


def test_forward_zero_residual_identity():
    model = zero_residual(seed_model(n=1, seed=3))
    x = np.random.default_rng(2).random((1, 3, 16, 12))
    np.testing.assert_array_equal(forward(model, x), x)


@pytest.mark.parametrize("size", [64, 128])
def test_forward_shape_and_range(size):
    x = np.random.default_rng(size).random((1, 3, size, size))
    y = forward(seed_model(n=1, seed=1), x)
    assert y.shape == x.shape and y.min() >= 0 and y.max() <= 1


def test_forward_batch_matches_single():
    model = seed_model(n=1, seed=2)
    x = np.random.default_rng(3).random((2, 3, 12, 16))
    both = forward(model, x)
    np.testing.assert_array_equal(both[1:], forward(model, x[1:]))
