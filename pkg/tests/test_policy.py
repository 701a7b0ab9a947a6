import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coopconv.neural import masked_softmax
from coopconv.policy import ModularPolicy, compose


def make_policy(n=2, seed=0, **kw):
    return ModularPolicy("bandit", obs_dim=4, act_dim=8, n_partners=n,
                         rng=np.random.default_rng(seed), **kw)


def test_compose_product_of_distributions():
    mask = np.array([True, True])
    dist = compose(np.array([0.0, 0.0]), np.array([np.log(4.0), 0.0]), mask)
    assert np.allclose(dist.probs, [0.8, 0.2])


def test_compose_uniform_partner_factor_cancels():
    mask = np.ones(4, dtype=bool)
    task_logits = np.array([1.0, -2.0, 0.5, 0.0])
    dist = compose(task_logits, np.full(4, 3.7), mask)
    assert np.allclose(dist.probs, masked_softmax(task_logits, mask))


def test_compose_uniform_task_factor_cancels():
    mask = np.ones(4, dtype=bool)
    partner_logits = np.array([0.3, 2.0, -1.0, 0.0])
    dist = compose(np.full(4, -1.2), partner_logits, mask)
    assert np.allclose(dist.probs, masked_softmax(partner_logits, mask))


@settings(max_examples=40, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5))
def test_compose_shift_invariance(c1, c2):
    rng = np.random.default_rng(0)
    t = rng.standard_normal(6)
    p = rng.standard_normal(6)
    mask = np.array([True, False, True, True, False, True])
    base = compose(t, p, mask).probs
    shifted = compose(t + c1, p + c2, mask).probs
    assert np.allclose(base, shifted, atol=1e-12)


def test_compose_equals_renormalized_product():
    rng = np.random.default_rng(1)
    t = rng.standard_normal(5)
    p = rng.standard_normal(5)
    mask = np.array([True, True, False, True, True])
    composed = compose(t, p, mask).probs
    gt = masked_softmax(t, mask)
    gp = masked_softmax(p, mask)
    product = gt * gp
    product /= product.sum()
    assert np.allclose(composed, product, atol=1e-12)


def test_policy_forward_value_is_sum_of_heads():
    policy = make_policy()
    obs = np.eye(4)[0]
    mask = np.ones(8, dtype=bool)
    out = policy.forward(obs, 0, mask)
    t_logits, t_value, z, _ = policy.task.forward(np.atleast_2d(obs))
    p_logits, p_value, _, _ = policy.partners[0].forward(z)
    assert out["value"][0] == pytest.approx(float(t_value[0] + p_value[0]))


def test_unknown_partner_id_raises():
    policy = make_policy(n=1)
    with pytest.raises(KeyError):
        policy.forward(np.eye(4)[0], 3, np.ones(8, dtype=bool))


def test_fresh_policy_near_uniform_marginal():
    policy = make_policy()
    marg = policy.task_marginal(np.eye(4)[1], np.ones(8, dtype=bool))
    assert marg.max() - marg.min() < 0.05
    assert marg.sum() == pytest.approx(1.0)


def test_identical_partner_nets_give_identical_outputs():
    policy = make_policy(n=2)
    for k, v in policy.partners[0].params.items():
        policy.partners[1].params[k] = v.copy()
    obs = np.eye(4)[2]
    mask = np.ones(8, dtype=bool)
    a = policy.forward(obs, 0, mask)
    b = policy.forward(obs, 1, mask)
    assert np.array_equal(a["dist"].probs, b["dist"].probs)
    assert np.array_equal(a["value"], b["value"])


def test_attach_reinitialize_detach():
    policy = make_policy(n=2)
    pid = policy.attach_partner_module()
    assert pid == 2 and policy.n_partners == 3
    marg_before = policy.forward(np.eye(4)[0], pid, np.ones(8, dtype=bool))["dist"].probs
    # fresh small-head init: near-uniform partner factor
    assert marg_before.max() - marg_before.min() < 0.05
    policy.reinitialize_partner_module(pid)
    policy.detach_partner_module(pid)
    assert policy.n_partners == 2
    with pytest.raises(KeyError):
        policy.freeze(pid)


def test_equal_task_outputs_imply_equal_composed_policies():
    # the policy depends on the observation only through (task logits, z):
    # two observations with identical task-net outputs act identically
    policy = make_policy(n=3)
    w1 = policy.task.params["W1"]
    w1[1, :] = w1[0, :]   # make contexts 0 and 1 indistinguishable to the trunk
    mask = np.ones(8, dtype=bool)
    for pid in range(3):
        a = policy.forward(np.eye(4)[0], pid, mask)
        b = policy.forward(np.eye(4)[1], pid, mask)
        assert np.allclose(a["dist"].probs, b["dist"].probs)
        assert np.allclose(a["value"], b["value"])


def test_low_dim_z_shape():
    policy = make_policy(low_dim_z=True)
    assert policy.z_dim == 5
    out = policy.forward(np.eye(4)[0], 0, np.ones(8, dtype=bool))
    assert out["z"].shape == (1, 5)
