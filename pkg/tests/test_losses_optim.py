import math

import numpy as np
import pytest

from irn import tensor as T
from irn.losses import (LossWeights, discriminator_loss, generator_loss, js_estimate, loss_ce_z, loss_guide,
                        loss_recon)
from irn.optim import Adam, AdamState, NonFiniteGradient, adam_step, halving_lr
from irn.rng import gaussian_logpdf, gaussian_sample, make_rng, rng_from_json, rng_state_json
from irn.tensor import ShapeError, Tensor

pytestmark = pytest.mark.usefixtures("f64")


def test_recon_and_guide_reductions():
    a = Tensor(np.zeros((2, 2, 2, 1)))
    b = Tensor(np.full((2, 2, 2, 1), 0.5))
    assert loss_recon(a, b, "L1").item() == pytest.approx(0.5)
    assert loss_recon(a, b, "L1", "sum").item() == pytest.approx(2.0)  # 4 elements per image
    assert loss_guide(a, b, "L2").item() == pytest.approx(0.25)
    with pytest.raises(ShapeError):
        loss_recon(a, Tensor(np.zeros((2, 2, 2, 2))))


def test_ce_matches_gaussian_density_and_is_minimised_at_zero():
    z = np.random.default_rng(0).standard_normal((3, 2, 2, 3))
    ce = loss_ce_z(Tensor(z)).item()
    expected = -np.mean([gaussian_logpdf(Tensor(zi)).item() for zi in z])
    assert ce == pytest.approx(expected)
    assert loss_ce_z(Tensor(np.zeros((1, 2, 2, 3)))).item() == pytest.approx(0.5 * 12 * math.log(2 * math.pi))
    with pytest.raises(FloatingPointError):
        loss_ce_z(Tensor(np.array([[np.nan]])))


def test_js_estimate_zero_critic_is_exactly_zero():
    zero = Tensor(np.zeros(5))
    assert js_estimate(zero, zero).item() == 0.0
    assert discriminator_loss(zero, zero).item() == pytest.approx(2 * math.log(2))


def test_js_estimate_bounds_and_generator_loss():
    real, fake = Tensor(np.full(4, 30.0)), Tensor(np.full(4, -30.0))
    assert js_estimate(real, fake).item() == pytest.approx(math.log(2), abs=1e-9)
    assert generator_loss(fake).item() == pytest.approx(30.0, rel=1e-9)


def test_loss_weights():
    assert LossWeights.for_scale(4) == LossWeights(1.0, 16.0, 1.0)
    assert LossWeights.for_scale(2, stage=2).lambda1 == 0.01
    with pytest.raises(ValueError):
        LossWeights(lambda4=0.01)
    with pytest.raises(ValueError):
        LossWeights(metric_x="L3")


def test_adam_first_step_by_hand():
    p = {"w": Tensor(np.array([1.0, -2.0]), requires_grad=True)}
    g = np.array([0.5, -0.1])
    st = AdamState(lr=0.1)
    adam_step(p, {"w": g}, st)
    m = 0.1 * g / (1 - 0.9)
    v = 0.001 * g * g / (1 - 0.999)
    np.testing.assert_allclose(p["w"].data, [1.0, -2.0] - 0.1 * m / (np.sqrt(v) + 1e-8))
    assert st.t == 1


def test_adam_zero_lr_and_non_finite():
    w = Tensor(np.array([1.0]), requires_grad=True)
    opt = Adam({"w": w}, lr=0.0)
    w.grad = np.array([3.0])
    opt.step()
    assert w.data[0] == 1.0
    w.grad = np.array([np.nan])
    with pytest.raises(NonFiniteGradient, match="w"):
        opt.step()


def test_adam_minimises_quadratic():
    w = Tensor(np.array([3.0, -4.0]), requires_grad=True)
    opt = Adam({"w": w}, lr=0.1)
    for _ in range(300):
        opt.zero_grad()
        T.backward(T.sum(T.square(w)))
        opt.step()
    assert np.abs(w.data).max() < 1e-2


def test_halving_schedule():
    ms = (10, 20)
    assert [halving_lr(1.0, ms, i) for i in (0, 9, 10, 19, 20, 99)] == [1, 1, 0.5, 0.5, 0.25, 0.25]


def test_rng_state_roundtrip_and_seeding():
    rng = make_rng(5)
    rng.standard_normal(7)
    clone = rng_from_json(rng_state_json(rng))
    np.testing.assert_array_equal(rng.standard_normal(10), clone.standard_normal(10))
    np.testing.assert_array_equal(gaussian_sample((3,), 1).data, gaussian_sample((3,), 1).data)
