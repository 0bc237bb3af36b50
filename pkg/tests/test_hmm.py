import numpy as np
import pytest

from drumaware.errors import ConfigError
from drumaware.hmm import (Decoder, HmmConfig, build_state_space, observation_logprob,
                           observation_table, path_to_beats, transition_matrix, tune,
                           viterbi, viterbi_decode)
from drumaware.sequences import ActivationMatrix, BeatSequence, BEAT, DOWNBEAT, NONBEAT

from oracles import enumerate_best_path, random_decoder_instance


def ideal_activation(T=1000, beat_every=50, bar=200):
    act = np.zeros((3, T))
    act[NONBEAT] = 0.98
    act[BEAT] = 0.01
    act[DOWNBEAT] = 0.01
    for f in range(0, T, beat_every):
        act[:, f] = (0.9, 0.05, 0.05) if f % bar else (0.05, 0.9, 0.05)
    return ActivationMatrix(act, 100.0)


def test_config_validation():
    assert HmmConfig().tempo_grid()[0] == 28 and HmmConfig().tempo_grid()[-1] == 109
    with pytest.raises(ConfigError):
        HmmConfig(beats_per_bar=(1,))
    with pytest.raises(ConfigError):
        HmmConfig(observation_lambda=1.5)
    with pytest.raises(ConfigError):
        HmmConfig(min_bpm=200.5, max_bpm=200.9)
    cfg = HmmConfig(beats_per_bar=(4,), transition_lambda=30)
    assert HmmConfig.from_dict(cfg.to_dict()) == cfg


def test_state_counts():
    assert build_state_space(HmmConfig(beats_per_bar=(4,), intervals=(50,))).num_states == 200
    assert build_state_space(HmmConfig(beats_per_bar=(4,), intervals=(40, 50))).num_states == 360
    cfg = HmmConfig()
    taus = cfg.tempo_grid()
    assert build_state_space(cfg).num_states == sum(b * taus.sum() for b in (3, 4))


def test_single_tempo_is_one_cycle():
    space = build_state_space(HmmConfig(beats_per_bar=(4,), intervals=(50,)))
    trans = transition_matrix(space).toarray()
    assert np.all(trans.sum(axis=1) == 1)
    assert np.all((trans == 1).sum(axis=1) == 1)
    s = 0
    for _ in range(200):
        s = int(np.argmax(trans[s]))
    assert s == 0


def test_transition_rows_normalised():
    space = build_state_space(HmmConfig(beats_per_bar=(3, 4), intervals=(5, 6, 9),
                                        transition_lambda=3.0))
    sums = np.asarray(transition_matrix(space).sum(axis=1)).ravel()
    assert np.allclose(sums, 1.0, atol=1e-12)


def test_observation_examples():
    space = build_state_space(HmmConfig(beats_per_bar=(4,), intervals=(50,)))
    assert observation_logprob(space, 0, [0, 1, 0]) == 0.0
    nonbeat_state = 25
    assert np.isclose(observation_logprob(space, nonbeat_state, [1, 0, 0]), np.log(1e-12))


def test_beat_window_fraction():
    for tau, lam, b in [(50, 16, 4), (37, 5, 3), (12, 7, 2)]:
        space = build_state_space(HmmConfig(beats_per_bar=(b,), intervals=(tau,),
                                            observation_lambda=lam))
        cls = space.state_classes()
        count = sum(1 for p in range(b * tau) if (p % tau) < tau / lam)
        assert np.sum(cls != NONBEAT) == count == b * int(np.ceil(tau / lam))
        assert np.sum(cls == DOWNBEAT) == int(np.ceil(tau / lam))


def test_ideal_activation():
    beats = viterbi_decode(ideal_activation(), HmmConfig(beats_per_bar=(4,)))
    assert np.allclose(beats.times, np.arange(20) * 0.5)
    assert np.allclose(beats.downbeats, np.arange(5) * 2.0)
    assert list(beats.positions[:5]) == [1, 2, 3, 4, 1]


def test_uniform_activation_constant_tempo():
    act = ActivationMatrix(np.full((3, 400), 1 / 3), 100.0)
    path = viterbi(act, HmmConfig())
    assert np.all(path.tau == path.tau[0])


def test_log_offset_invariance(rng):
    cfg = HmmConfig(beats_per_bar=(3, 4), intervals=(20, 24, 30))
    space = build_state_space(cfg)
    act = rng.dirichlet(np.ones(3), 150).T
    base = viterbi(act, cfg, space)
    # same per-frame constant added to every log-observation
    scaled = act * rng.uniform(0.2, 0.9, 150)[None, :]
    other = viterbi(scaled, cfg, space)
    assert np.array_equal(base.states, other.states)


def test_monotonic_and_intervals(rng):
    cfg = HmmConfig(correct=False)
    act = ActivationMatrix(rng.dirichlet([1, 1, 6], 600).T, 100.0)
    path = viterbi(act, cfg)
    beats = path_to_beats(path, act, cfg)
    assert beats.is_strictly_increasing()
    frames = np.round(beats.times * 100).astype(int)
    assert np.array_equal(np.diff(frames), path.tau[frames[1:]])


@pytest.mark.parametrize("seed", range(20))
def test_viterbi_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    cfg, space, act = random_decoder_instance(rng)
    path = viterbi(act, cfg, space)
    best, score, _ = enumerate_best_path(act, space)
    assert np.isclose(path.log_prob, score, rtol=0, atol=1e-9)
    assert np.array_equal(path.states, best)


def test_decoder_fps_mismatch():
    with pytest.raises(ConfigError):
        viterbi_decode(ActivationMatrix(np.full((3, 10), 1 / 3), 50.0), HmmConfig())


def test_decoder_reuses_space():
    dec = Decoder(HmmConfig(beats_per_bar=(4,)))
    a = dec(ideal_activation())
    b = dec(ideal_activation())
    assert np.array_equal(a.times, b.times)


def test_observation_table_clamp():
    table = observation_table(np.array([[1.0], [0.0], [0.0]]), 16)
    assert table[0, BEAT] == 0 and np.isclose(table[0, NONBEAT], np.log(1e-12))


def test_tune_grid():
    act = ideal_activation(600)
    ref = BeatSequence(np.arange(12) * 0.5, (np.arange(12) % 4) + 1)
    best, table = tune([act], [ref], HmmConfig(beats_per_bar=(4,)), (10, 100), (8, 16))
    assert len(table) == 4
    assert max(t[2] for t in table) == 1.0
    assert best.transition_lambda in (10, 100)
