import json

import numpy as np
import pytest

from fungrasp.policy import init_params, flatten_params
from fungrasp.rewards import total_reward
from fungrasp.training import (
    AdamState,
    Batch,
    EpisodePool,
    TrainConfig,
    adam_step,
    clipped_surrogate,
    collect_batch,
    config_from_dict,
    config_to_dict,
    episode_rng,
    ppo_update,
    run_bandit,
    run_episode,
    train,
)


@pytest.fixture(scope="module")
def tiny_cfg():
    return TrainConfig(envs_per_iter=8, minibatch=4, epochs=2, iterations=2,
                       m_points=32, seed=17, learning_rate=1e-3)


@pytest.fixture(scope="module")
def tiny_params(assets, tiny_cfg):
    return init_params(episode_rng(tiny_cfg.seed, 4), tiny_cfg.m_points,
                       len(assets.styles), assets.spec.joint_count)


def test_single_episode_deterministic(assets, tiny_cfg, tiny_params):
    a = run_episode(tiny_params, tiny_cfg, assets, {}, 17, (1, 0), 0, train_mode=True)
    b = run_episode(tiny_params, tiny_cfg, assets, {}, 17, (1, 0), 0, train_mode=True)
    assert a.object_name == b.object_name
    assert np.array_equal(a.raw, b.raw)
    assert a.log_prob == b.log_prob
    assert a.reward == b.reward
    assert np.array_equal(a.record.d_series, b.record.d_series)


def test_batch_reward_matches_reward_engine(assets, tiny_cfg, tiny_params):
    batch = collect_batch(tiny_params, tiny_cfg, assets, 0)
    for res in batch.results:
        if res.record is None:
            continue
        terms = total_reward(res.record, tiny_cfg.reward)
        assert res.reward == pytest.approx(terms.total, abs=1e-12)


def test_advantage_normalization(assets, tiny_cfg, tiny_params):
    batch = collect_batch(tiny_params, tiny_cfg, assets, 0)
    assert batch.advantages.mean() == pytest.approx(0.0, abs=1e-9)
    assert batch.advantages.std() == pytest.approx(1.0, abs=1e-6) or batch.rewards.std() < 1e-12
    assert np.allclose(
        batch.advantages * (batch.rewards - batch.values_old).std() + 0,
        (batch.rewards - batch.values_old) - (batch.rewards - batch.values_old).mean(),
        atol=1e-6,
    )


def test_collect_worker_determinism(assets, tiny_cfg, tiny_params):
    serial = collect_batch(tiny_params, tiny_cfg, assets, 3)
    with EpisodePool(2, assets) as pool:
        parallel = collect_batch(tiny_params, tiny_cfg, assets, 3, pool)
    assert np.array_equal(serial.raw, parallel.raw)
    assert np.array_equal(serial.rewards, parallel.rewards)
    assert np.array_equal(serial.log_prob_old, parallel.log_prob_old)
    assert np.array_equal(serial.advantages, parallel.advantages)


def test_clipped_surrogate_hand_computed():
    eps = 0.2
    # at the clip boundary, both branches agree
    s, coef = clipped_surrogate(np.array([1.2]), np.array([2.0]), eps)
    assert s[0] == pytest.approx(min(1.2 * 2.0, 1.2 * 2.0))
    # beyond the boundary with positive advantage: clipped branch wins
    s, coef = clipped_surrogate(np.array([1.5]), np.array([2.0]), eps)
    assert s[0] == pytest.approx(1.2 * 2.0)
    assert coef[0] == 0.0  # gradient blocked
    # negative advantage, ratio above band: unclipped is the min, grad flows
    s, coef = clipped_surrogate(np.array([1.5]), np.array([-2.0]), eps)
    assert s[0] == pytest.approx(1.5 * -2.0)
    assert coef[0] == pytest.approx(1.5 * -2.0)
    # inside the band both agree and gradient flows
    s, coef = clipped_surrogate(np.array([1.1]), np.array([3.0]), eps)
    assert s[0] == pytest.approx(1.1 * 3.0)
    assert coef[0] == pytest.approx(1.1 * 3.0)


def test_surrogate_never_exceeds_clip_bound(assets, tiny_cfg):
    rng = np.random.default_rng(0)
    ratio = np.exp(rng.normal(size=1000))
    adv = rng.normal(size=1000)
    s, _ = clipped_surrogate(ratio, adv, 0.2)
    pos = adv > 0
    assert np.all(s[pos] <= np.clip(ratio[pos], 0.8, 1.2) * adv[pos] + 1e-12)


def test_zero_advantage_only_moves_value_and_logstd(assets, tiny_cfg, tiny_params):
    batch = collect_batch(tiny_params, tiny_cfg, assets, 1)
    batch.advantages[:] = 0.0
    params2, _, _ = ppo_update(tiny_params, batch, tiny_cfg, AdamState.init(tiny_params),
                               episode_rng(0, 3, 0))
    assert np.array_equal(params2.mean_w, tiny_params.mean_w)
    assert np.array_equal(params2.a_w1, tiny_params.a_w1)
    assert not np.array_equal(params2.v_w1, tiny_params.v_w1)
    assert not np.array_equal(params2.log_std, tiny_params.log_std)


def test_ppo_update_deterministic(assets, tiny_cfg, tiny_params):
    batch = collect_batch(tiny_params, tiny_cfg, assets, 2)
    a, _, _ = ppo_update(tiny_params, batch, tiny_cfg, AdamState.init(tiny_params), episode_rng(0, 3, 1))
    b, _, _ = ppo_update(tiny_params, batch, tiny_cfg, AdamState.init(tiny_params), episode_rng(0, 3, 1))
    assert np.array_equal(flatten_params(a), flatten_params(b))


def test_ppo_update_aborts_on_nonfinite(assets, tiny_cfg, tiny_params):
    batch = collect_batch(tiny_params, tiny_cfg, assets, 0)
    batch.advantages[0] = np.nan
    params2, _, stats = ppo_update(tiny_params, batch, tiny_cfg, AdamState.init(tiny_params),
                                   episode_rng(0, 3, 2))
    assert "aborted" in stats
    assert np.array_equal(flatten_params(params2), flatten_params(tiny_params))


def test_adam_zero_gradient_is_noop(tiny_params):
    from fungrasp.policy import zeros_like_params

    state = AdamState.init(tiny_params)
    new, state2 = adam_step(tiny_params, zeros_like_params(tiny_params), state, 1e-3)
    assert np.array_equal(flatten_params(new), flatten_params(tiny_params))
    assert state2.step == 1


def test_train_writes_metrics_and_checkpoint(assets, tmp_path):
    cfg = TrainConfig(envs_per_iter=8, minibatch=8, epochs=1, iterations=3,
                      m_points=32, seed=23)
    out = train(cfg, assets, tmp_path / "run")
    lines = [json.loads(l) for l in out["metrics_path"].read_text().splitlines()]
    assert len(lines) == 3
    assert all(np.isfinite(l["mean_reward"]) for l in lines)
    assert all(l["kind"] == "train" for l in lines)
    assert out["checkpoint_path"].exists()
    from fungrasp.dataio import load_checkpoint

    params, meta = load_checkpoint(out["checkpoint_path"], expect_hand=assets.spec.name)
    assert meta["iteration"] == 3


def test_config_round_trip():
    cfg = TrainConfig(seed=9, envs_per_iter=32, minibatch=16)
    back = config_from_dict(config_to_dict(cfg))
    assert back == cfg


def test_episode_error_becomes_zero_reward(assets, tiny_cfg, tiny_params, monkeypatch):
    import fungrasp.training as tr

    def boom(*a, **k):
        raise RuntimeError("synthetic geometry failure")

    monkeypatch.setattr(tr, "rollout", boom)
    res = tr.run_episode(tiny_params, tiny_cfg, assets, {}, 17, (1, 0), 0, train_mode=True)
    assert res.error is not None
    assert res.reward == 0.0
    assert res.record is None
    assert np.all(np.isfinite(res.raw))


def test_bandit_learns_fast():
    hist = run_bandit(seed=3, iterations=40)
    assert hist[-1] > hist[0] + 0.1
    assert max(hist) > -0.1


def test_one_step_contract(assets, tiny_cfg, tiny_params):
    # advantage is exactly reward - value_old before normalization
    batch = collect_batch(tiny_params, tiny_cfg, assets, 5)
    raw_adv = batch.rewards - batch.values_old
    normalized = (raw_adv - raw_adv.mean()) / (raw_adv.std() + 1e-8)
    assert np.allclose(batch.advantages, normalized, atol=1e-12)
