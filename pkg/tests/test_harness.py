import math

import numpy as np
import pytest

from ndf_lab import harness
from ndf_lab.config import RunConfig, dump_config, parse_config_text
from ndf_lab.harness import (CurvePoint, EpisodeRecord, apply_strategy, average_runs,
                             instances_to_reach, load_datasets, policy_splits, reward_for,
                             run_episode, run_policy_training, run_strategy, train_policy)
from ndf_lab.nncore import InputError
from ndf_lab.policy import TrajectoryLog, init_policy
from ndf_lab.strategies import (NeuralDataFilter, RandDrop, SelfPacedLearning, Unfiltered,
                                read_droplog)

SMALL = RunConfig(
    dataset="blobs:classes=3,per_class=80,dim=6,spread=0.6,seed=3",
    blobs_test_per_class=30, hidden="8", batch_size=10, ndf_subset_size=120, dev_size=40,
    horizon=60, episodes=3, eval_every=2, apply_updates=40, tau=0.8,
)


@pytest.fixture(scope="module")
def small_data():
    train, test = load_datasets(SMALL)
    ptrain, dev, _ = policy_splits(train, SMALL)
    return train, test, ptrain, dev


def keep_all_policy():
    return init_policy(0, input_dim=3 * 2 + 5, final_bias=60.0)


# ------------------------------------------------------------------ rewards


def test_reward_examples():
    assert reward_for(2000, 2000) == 0.0
    assert reward_for(1000, 2000) == pytest.approx(math.log(2), abs=1e-15)
    assert reward_for(1, 100) == pytest.approx(math.log(100))
    for bad in (0, 101):
        with pytest.raises(ValueError):
            reward_for(bad, 100)


def test_tau_zero_stops_at_first_evaluation(small_data):
    _, _, ptrain, dev = small_data
    cfg = SMALL.replace(tau=0.0, eval_every=3, tau_index="updates")
    rec, traj = run_episode(keep_all_policy(), ptrain, dev, cfg, 1, np.random.default_rng(0))
    assert rec.i_tau == 3
    assert rec.reward == pytest.approx(-math.log(3 / cfg.horizon))
    # keep-all: one arrival per update
    assert rec.length == 3 and len(traj) == 3


def test_tau_zero_arrival_index_counts_filtered_batches(small_data):
    _, _, ptrain, dev = small_data
    cfg = SMALL.replace(tau=0.0, eval_every=1)
    policy = init_policy(0, input_dim=11, final_bias=0.0)  # keeps about half
    rec, _ = run_episode(policy, ptrain, dev, cfg, 1, np.random.default_rng(0))
    assert rec.i_tau == rec.length >= 2


@pytest.mark.parametrize("tau_index", ["arrivals", "updates"])
def test_unreachable_tau_gives_zero_reward(small_data, tau_index):
    _, _, ptrain, dev = small_data
    cfg = SMALL.replace(tau=0.999999, horizon=15, tau_index=tau_index, eval_every=1)
    rec, _ = run_episode(keep_all_policy(), ptrain, dev, cfg, 1, np.random.default_rng(0))
    assert rec.i_tau == 15 and rec.reward == 0.0


def test_episode_base_model_identical_across_episodes(small_data):
    _, _, ptrain, dev = small_data
    cfg = SMALL.replace(episode_shuffle="fixed", tau=0.95, horizon=40)
    recs = [run_episode(keep_all_policy(), ptrain, dev, cfg, ep, np.random.default_rng(ep))[0]
            for ep in (1, 2, 7)]
    assert len({(r.i_tau, r.length) for r in recs}) == 1


# ---------------------------------------------------------- policy training


def test_single_episode_training(small_data):
    _, _, ptrain, dev = small_data
    res = train_policy(ptrain, dev, SMALL.replace(episodes=1))
    assert len(res.records) == 1 and res.best_episode == 1
    for a, b in zip(res.best_policy.params(), res.final_policy.params()):
        np.testing.assert_array_equal(a, b)
    assert res.records[0].baseline == pytest.approx(0.2 * res.records[0].reward, abs=1e-15)


def test_best_policy_is_earliest_of_tied_rewards(monkeypatch, small_data):
    _, _, ptrain, dev = small_data
    rewards = iter([0.1, 0.5, 0.5, 0.2])
    feats = np.random.default_rng(1).random((10, 11))

    def fake_episode(policy, train, dev, config, episode, rng):
        traj = TrajectoryLog()
        traj.record(feats, np.arange(10) % 2)
        r = next(rewards)
        return EpisodeRecord(episode, 1, r), traj

    monkeypatch.setattr(harness, "run_episode", fake_episode)
    res = train_policy(ptrain, dev, SMALL.replace(episodes=4, policy_lr=0.05))
    assert res.best_episode == 2
    rewards = iter([0.1, 0.5])
    two = train_policy(ptrain, dev, SMALL.replace(episodes=2, policy_lr=0.05))
    for a, b in zip(res.best_policy.params(), two.final_policy.params()):
        np.testing.assert_array_equal(a, b)
    assert not np.array_equal(res.best_policy.w2, res.final_policy.w2)


def test_policy_training_improves_on_blobs():
    """Mean reward of episodes 41-50 is at least that of episodes 1-10 over 5 seeds.

    A fixed batch order and a larger policy step keep the 50-episode budget
    from drowning in reward noise.
    """
    cfg = RunConfig(dataset="blobs:classes=4,per_class=150,dim=10,spread=0.8,seed=0",
                    blobs_test_per_class=10, hidden="16", batch_size=10, ndf_subset_size=400,
                    dev_size=150, horizon=400, episodes=50, eval_every=1, tau=0.9,
                    policy_lr=0.1, episode_shuffle="fixed")
    train, _ = load_datasets(cfg)
    ptrain, dev, _ = policy_splits(train, cfg)
    gains = []
    for seed in range(5):
        r = [rec.reward for rec in train_policy(ptrain, dev, cfg.replace(seed_policy=seed)).records]
        gains.append(np.mean(r[-10:]) - np.mean(r[:10]))
    assert np.mean(gains) >= 0, gains


# -------------------------------------------------------------- application


def test_unfiltered_accounting(small_data):
    train, test, _, dev = small_data
    res = apply_strategy(train, test, dev, Unfiltered(), SMALL)
    assert res.filtered == 0 and res.pending == 0
    assert set(res.droplog.ratios().values()) == {0.0}
    assert [p.effective_instances for p in res.curve] == [
        k * SMALL.eval_every * SMALL.batch_size for k in range(1, len(res.curve) + 1)]
    assert res.updates == SMALL.apply_updates == res.arrivals


def test_effective_instance_accounting_with_filtering(small_data):
    train, test, _, dev = small_data
    strategy = RandDrop({0: 0.3, 1: 0.6}, np.random.default_rng(5))
    res = apply_strategy(train, test, dev, strategy, SMALL)
    M = SMALL.batch_size
    assert res.updates * M == res.arrivals * M - res.filtered - res.pending
    assert 0 <= res.pending < M
    assert sum(res.hardness.filtered.values()) == res.filtered
    for epoch, counts in res.hardness.counts.items():
        assert counts.sum() == res.hardness.filtered[epoch]


def test_keep_all_filter_matches_unfiltered(small_data):
    train, test, _, dev = small_data
    base = apply_strategy(train, test, dev, Unfiltered(), SMALL)
    ndf = apply_strategy(train, test, dev,
                         NeuralDataFilter(keep_all_policy(), np.random.default_rng(0)), SMALL)
    assert ndf.filtered == 0
    assert ndf.curve == base.curve


def test_spl_single_epoch_schedule(small_data):
    train, test, _, dev = small_data
    cfg = SMALL.replace(apply_updates=60)
    res = apply_strategy(train, test, dev, SelfPacedLearning(cfg.batch_size, 1), cfg)
    ratios = res.droplog.ratios()
    assert ratios[0] == pytest.approx((cfg.batch_size - 1) / cfg.batch_size)
    assert len(ratios) > 1
    assert all(r == 0.0 for e, r in ratios.items() if e >= 1)


def test_missing_policy_is_an_error(small_data, tmp_path):
    cfg = SMALL.replace(strategy="ndf", policy=str(tmp_path / "nope.npz"))
    with pytest.raises(InputError):
        run_strategy(cfg)


# ---------------------------------------------------------------- averaging


def curve(*accs, step=100):
    return [CurvePoint(step * (k + 1), a) for k, a in enumerate(accs)]


def test_average_single_run_is_identity():
    c = curve(0.1, 0.5, 0.7)
    assert average_runs([c]) == c


def test_average_two_runs():
    avg = average_runs([curve(0.8), curve(0.9)])
    assert avg[0].test_accuracy == pytest.approx(0.85, abs=1e-15)


def test_average_matches_manual_mean(rng):
    accs = rng.random((4, 7))
    avg = average_runs([curve(*row) for row in accs])
    manual = [sum(accs[r, k] for r in range(4)) / 4 for k in range(7)]
    np.testing.assert_allclose([p.test_accuracy for p in avg], manual, atol=1e-15)


def test_average_truncates_to_common_prefix():
    avg = average_runs([curve(0.1, 0.2, 0.3), curve(0.3, 0.4)])
    assert len(avg) == 2


def test_average_rejects_mismatched_grids():
    with pytest.raises(InputError):
        average_runs([curve(0.1, 0.2), curve(0.1, 0.2, step=50)])
    with pytest.raises(InputError):
        average_runs([])


def test_instances_to_reach():
    c = curve(0.5, 0.89, 0.9, 0.95)
    assert instances_to_reach(c, 0.9) == 300
    assert instances_to_reach(c, 0.99) is None


# -------------------------------------------------------- files and config


def test_run_strategy_is_deterministic(tmp_path):
    for name in ("a", "b"):
        run_strategy(SMALL.replace(strategy="spl", spl_epochs=2, runs=2), tmp_path / name)
    for rel in ("curve.csv", "run_0/filterlog.csv", "run_1/droplog.csv"):
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()


def test_policy_training_outputs(tmp_path, small_data):
    res = run_policy_training(SMALL, tmp_path)
    lines = (tmp_path / "episodes.csv").read_text().splitlines()
    assert lines[0] == "episode,i_tau,reward,baseline"
    assert len(lines) == 1 + SMALL.episodes
    assert harness.read_episodes_csv(tmp_path / "episodes.csv")[0].i_tau == res.records[0].i_tau
    assert (tmp_path / "policy.npz").is_file() and (tmp_path / "policy_final.npz").is_file()


def test_randdrop_replays_ndf_droplog(tmp_path):
    ndf_dir, rd_dir = tmp_path / "ndf", tmp_path / "rd"
    policy = init_policy(4, input_dim=11, final_bias=0.5)
    run_strategy(SMALL.replace(strategy="ndf"), ndf_dir, policy=policy)
    logged = read_droplog(ndf_dir / "run_0" / "droplog.csv")
    assert 0.2 < logged[0] < 0.6
    res = run_strategy(SMALL.replace(strategy="randdrop", droplog=str(ndf_dir / "run_0" / "droplog.csv")),
                       rd_dir)
    header = (rd_dir / "curve.csv").read_text().splitlines()[0]
    assert header == "run_id,strategy,effective_instances,test_accuracy"
    assert res[0].strategy == "randdrop" and res[0].filtered > 0


def test_config_round_trip():
    cfg = SMALL.replace(strategy="spl", deterministic_policy=True, tau=0.85)
    assert parse_config_text(dump_config(cfg)) == cfg


def test_config_parsing():
    cfg = parse_config_text("# comment\nspl-epochs = 7\n\ntau=0.5  # inline\nhidden = 64,32\n")
    assert cfg.spl_epochs == 7 and cfg.tau == 0.5 and cfg.hidden_sizes() == [64, 32]
    with pytest.raises(ValueError):
        parse_config_text("bogus = 1")
    with pytest.raises(ValueError):
        parse_config_text("tau")
    with pytest.raises(ValueError):
        RunConfig(tau=1.0).validate()


def test_mnist_dataset_spec_requires_files(tmp_path):
    with pytest.raises((FileNotFoundError, ValueError)):
        load_datasets(RunConfig(dataset=f"mnist:{tmp_path}"))


def test_blobs_split_is_disjoint():
    train, test = load_datasets(SMALL)
    assert len(train) == 240 and len(test) == 90
    assert not set(train.ids.tolist()) & set(test.ids.tolist())
