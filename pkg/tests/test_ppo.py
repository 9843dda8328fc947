import numpy as np
import pytest

from bcl.errors import ConfigError
from bcl.harness.evaluation import evaluate
from bcl.nn import Network, Parameters
from bcl.ppo import (ActorCritic, PpoConfig, RolloutBatch, compute_advantages,
                     normalize_advantages, ppo_adv_loss, ppo_standard_loss, ppo_total_loss,
                     tilde_policies, train_ppo_phase)

from oracles import central_diff, clipped_surrogate, gae, softmax_list


def random_batch(rng, agent, n=8, eps=0.05):
    d = agent.policy.spec.input_dim
    k = agent.policy.spec.output_dim
    s = rng.random((n, d))
    delta = np.clip(s + rng.uniform(-eps, eps, (n, d)), 0, 1) - s
    return RolloutBatch(s, rng.integers(0, k, n), rng.normal(size=n), rng.normal(size=(n, k)),
                        rng.normal(size=n), np.zeros(n), rng.normal(size=n), rng.normal(size=n),
                        delta)


def perturbed_agent(rng, obs_dim=5, k=3):
    ag = ActorCritic.create(obs_dim, k, (6,), int(rng.integers(1000)))
    bump = lambda net: Network(net.spec, Parameters.from_arrays(  # noqa: E731
        [a + 0.3 * rng.normal(size=a.shape) for a in net.params.arrays()]))
    return ActorCritic(bump(ag.policy), bump(ag.value))


# ---- surrogate


def test_surrogate_hand_values():
    assert clipped_surrogate(1.5, 1.0, 1.0, 0.2) == pytest.approx(1.2)
    assert clipped_surrogate(0.5, 1.0, -1.0, 0.2) == pytest.approx(-0.8)


def test_standard_loss_matches_oracle(rng):
    for _ in range(5):
        ag = perturbed_agent(rng)
        b = random_batch(rng, ag)
        z = ag.policy.forward(b.s)
        ref = -np.mean([clipped_surrogate(softmax_list(list(z[i]))[b.a[i]],
                                          softmax_list(list(b.logits_old[i]))[b.a[i]],
                                          b.advantages[i], 0.2) for i in range(len(b))])
        assert ppo_standard_loss(ag.policy, b, 0.2)[0] == pytest.approx(ref, rel=1e-10)


def test_adv_loss_matches_oracle(rng):
    for _ in range(5):
        ag = perturbed_agent(rng)
        b = random_batch(rng, ag)
        zc, za = ag.policy.forward(b.s), ag.policy.forward(b.s + b.delta)
        vals = []
        for i in range(len(b)):
            a = b.a[i]
            p_old = softmax_list(list(b.logits_old[i]))[a]
            m1, m2 = list(zc[i]), list(za[i])
            m1[a], m2[a] = za[i][a], zc[i][a]
            vals.append(min(clipped_surrogate(softmax_list(m1)[a], p_old, b.advantages[i], 0.2),
                            clipped_surrogate(softmax_list(m2)[a], p_old, b.advantages[i], 0.2)))
        assert ppo_adv_loss(ag.policy, b, 0.2)[0] == pytest.approx(-np.mean(vals), rel=1e-10)


def test_tilde_policy_hand_values():
    p1, p2 = tilde_policies([0.0, 0.0], [-1.0, 0.0], 0)
    assert p1 == pytest.approx(0.2689, abs=1e-4) and p2 == pytest.approx(0.5)
    p1, p2 = tilde_policies([0.3, -0.2, 1.0], [0.3, -0.2, 1.0], 1)
    assert p1 == pytest.approx(p2) == pytest.approx(softmax_list([0.3, -0.2, 1.0])[1])


def test_zero_delta_adv_equals_standard(rng):
    ag = perturbed_agent(rng)
    b = random_batch(rng, ag, eps=0.0)
    l_s, g_s = ppo_standard_loss(ag.policy, b, 0.2)
    l_a, g_a = ppo_adv_loss(ag.policy, b, 0.2)
    assert l_a == pytest.approx(l_s, rel=1e-12)
    assert np.allclose(g_a.flat(), g_s.flat(), rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("kappa", [1.0, 0.8, 0.0])
def test_total_loss_gradients(rng, kappa):
    cfg = PpoConfig()
    for _ in range(2):
        ag = perturbed_agent(rng)
        b = random_batch(rng, ag)
        _, g_pi, g_v = ppo_total_loss(ag, b, cfg, kappa)
        for net, grads, which in ((ag.policy, g_pi, 0), (ag.value, g_v, 1)):
            arrays = net.params.arrays()
            for k, arr in enumerate(arrays):
                def f(aa, k=k, arrays=arrays, net=net, which=which):
                    new = list(arrays)
                    new[k] = aa
                    n2 = Network(net.spec, Parameters.from_arrays(new))
                    a2 = ActorCritic(n2, ag.value) if which == 0 else ActorCritic(ag.policy, n2)
                    return ppo_total_loss(a2, b, cfg, kappa)[0]
                assert np.allclose(grads.arrays()[k], central_diff(f, arr), rtol=1e-4, atol=1e-6)


def test_total_loss_components(rng):
    cfg = PpoConfig()
    ag = perturbed_agent(rng)
    b = random_batch(rng, ag)
    z = ag.policy.forward(b.s)
    p = np.exp(z - z.max(1, keepdims=True))
    p /= p.sum(1, keepdims=True)
    ent = float(np.mean(-(p * np.log(p)).sum(1)))
    l_v = float(np.mean((ag.value.forward(b.s)[:, 0] - b.returns) ** 2))
    l_s = ppo_standard_loss(ag.policy, b, 0.2)[0]
    l_a = ppo_adv_loss(ag.policy, b, 0.2)[0]
    got = ppo_total_loss(ag, b, cfg, 0.8)[0]
    assert got == pytest.approx(0.8 * l_s + 0.2 * l_a + 0.5 * l_v - 0.01 * ent, rel=1e-10)


# ---- advantages


def test_gae_hand_trace():
    adv, ret = compute_advantages([1.0, 1.0], [0.0, 0.0], [0, 1], 0.0, 0.9, 0.95)
    assert adv == pytest.approx([1.855, 1.0]) and ret == pytest.approx([1.855, 1.0])


def test_gae_matches_oracle(rng):
    for _ in range(20):
        n = int(rng.integers(1, 30))
        r, v = rng.normal(size=n), rng.normal(size=n)
        d = (rng.random(n) < 0.2).astype(float)
        last = float(rng.normal())
        adv, ret = compute_advantages(r, v, d, last, 0.99, 0.95)
        assert np.allclose(adv, gae(r, v, d, last, 0.99, 0.95), rtol=1e-12, atol=1e-12)
        assert np.allclose(ret, adv + v)


def test_gae_lambda_zero_is_one_step_td():
    adv, _ = compute_advantages([1.0, 2.0], [0.5, 0.5], [0, 0], 1.0, 0.9, 0.0)
    assert adv == pytest.approx([1 + 0.45 - 0.5, 2 + 0.9 - 0.5])


def test_normalize_advantages():
    a = normalize_advantages(np.array([1.0, 2.0, 3.0]))
    assert a.mean() == pytest.approx(0.0, abs=1e-12) and a.std() == pytest.approx(1.0, rel=1e-6)


def test_config_validation():
    with pytest.raises(ConfigError):
        PpoConfig(eta=0)
    with pytest.raises(ConfigError):
        PpoConfig(perturb_method="fgsm")
    with pytest.raises(ConfigError):
        PpoConfig(lam=1.5)


# ---- training


def test_phase_determinism():
    cfg = PpoConfig(frames=300, rollout_steps=100, epochs=2, minibatch_size=50)
    ag = ActorCritic.create(24, 2, (8,), 0)
    a = train_ppo_phase(ag, "ridgewalk", 0.0, 0.05, cfg, 1)
    b = train_ppo_phase(ag, "ridgewalk", 0.0, 0.05, cfg, 1)
    assert a.checksum() == b.checksum() != ag.checksum()


def test_ppo_learns_ridgewalk():
    cfg = PpoConfig(frames=20_000, kappa={"kind": "constant", "value": 1.0})
    ag = ActorCritic.create(24, 2, (32, 32), 0)
    trained = train_ppo_phase(ag, "ridgewalk", 0.0, 0.0, cfg, 0)
    assert evaluate(trained, "ridgewalk", [], episodes=5, seed=0).nominal.mean >= 0.7
