import pytest

from filedes.sim.attacks import generation_experiment, placement_capture, run_attack_experiment, sybil_experiment


def test_generation_without_cache_never_wins():
    stats = generation_experiment(300, leaf_count=8, cached_paths=0, latency_runs=20)
    assert stats.successes == 0
    assert stats.detection_latency_mean == 1.0


def test_generation_rate_near_k_over_n():
    stats = generation_experiment(1500, leaf_count=8, cached_paths=4, latency_runs=300, seed=1)
    assert stats.expected_rate == 0.5
    assert abs(stats.success_rate - 0.5) <= 3 * stats.sigma()
    # geometric latency with failure probability 1/2 has mean 2
    assert stats.detection_latency_mean == pytest.approx(2.0, abs=0.4)


def test_sybil_rate_near_keep_over_ctr():
    stats = sybil_experiment(1500, ctr=4, keep=1, rounds=3, seed=2, latency_runs=100, placement_trials=200)
    assert stats.expected_rate == 0.25
    assert abs(stats.success_rate - 0.25) <= 3 * stats.sigma()
    assert stats.detection_rate == pytest.approx(1 - stats.success_rate)


def test_placement_capture_matches_power_share():
    frac = placement_capture(honest=3, honest_pow=1.0, identities=3, sybil_pow=1.0, ctr=2, trials=4000, seed=3)
    # share 1/2, two independent draws
    assert frac == pytest.approx(0.25, abs=3 * (0.25 * 0.75 / 4000) ** 0.5)


def test_experiments_are_reproducible():
    a = run_attack_experiment("generation", {"leaf_count": 16, "cached_paths": 3}, trials=200, seed=5)
    b = run_attack_experiment("generation", {"leaf_count": 16, "cached_paths": 3}, trials=200, seed=5)
    assert a.to_json() == b.to_json()


def test_bad_parameters():
    with pytest.raises(ValueError):
        run_attack_experiment("flood", {}, trials=1)
    with pytest.raises(ValueError):
        generation_experiment(1, leaf_count=12)
    with pytest.raises(ValueError):
        generation_experiment(1, leaf_count=8, cached_paths=8)
    with pytest.raises(ValueError):
        sybil_experiment(1, ctr=2, keep=2)
