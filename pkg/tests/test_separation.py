import numpy as np
import pytest

from drumaware.errors import ConfigError, DataError, InvalidInputError
from drumaware.features import AudioClip, SpectralFeature, extract_features
from drumaware.io import save_wav
from drumaware.separation import (StemFeatures, load_sda_triple, make_separator,
                                  reference_stem_features, sda_mode, separate_features,
                                  separation_loss, stem_paths)

from conftest import noise_clip


def _feat(data):
    return SpectralFeature(np.asarray(data, float), 100.0, [(0, np.shape(data)[1], False)])


def test_half_mask(rng):
    sep = make_separator(4, [3], seed=0)
    sep.params["out.W"][...] = 0
    sep.params["out.b"][...] = 0
    mix = _feat(rng.uniform(0, 2, (6, 4)))
    stems = separate_features(mix, sep)
    assert np.array_equal(stems.drum.data, 0.5 * mix.data)
    assert np.array_equal(stems.nodrum.data, 0.5 * mix.data)


def test_zero_mixture():
    stems = separate_features(_feat(np.zeros((5, 3))), make_separator(3, [2], seed=1))
    assert np.all(stems.drum.data == 0) and np.all(stems.nodrum.data == 0)


def test_complementary(rng):
    for seed in range(5):
        sep = make_separator(7, [4, 4], seed=seed)
        for v in sep.params.values():
            v *= 20
        mix = _feat(rng.uniform(0, 5, (30, 7)))
        stems = separate_features(mix, sep)
        assert np.max(np.abs(stems.drum.data + stems.nodrum.data - mix.data)) <= 1e-6
        assert np.all((stems.mask > 0) & (stems.mask < 1))
        assert stems.drum.layout == mix.layout


def test_dimension_mismatch():
    with pytest.raises(ConfigError):
        separate_features(_feat(np.zeros((5, 3))), make_separator(4, [2]))


def test_separation_loss(rng):
    a = StemFeatures(_feat(rng.normal(size=(3, 4))), _feat(rng.normal(size=(3, 4))))
    assert separation_loss(a, a) == 0
    b = StemFeatures(a.drum.with_data(a.drum.data + 1), a.nodrum.with_data(a.nodrum.data + 1))
    assert np.isclose(separation_loss(b, a), 1.0)
    c = StemFeatures(_feat(rng.normal(size=(3, 4))), _feat(rng.normal(size=(3, 4))))
    d = sum((c.drum.data[i, j] - a.drum.data[i, j]) ** 2 for i in range(3) for j in range(4))
    n = sum((c.nodrum.data[i, j] - a.nodrum.data[i, j]) ** 2 for i in range(3) for j in range(4))
    assert np.isclose(separation_loss(c, a), 0.5 * (d / 12 + n / 12))
    assert separation_loss(c, a) > 0
    with pytest.raises(InvalidInputError):
        separation_loss(a, StemFeatures(_feat(np.zeros((2, 4))), _feat(np.zeros((2, 4)))))


def test_reference_stems(small_feature_config):
    cfg = small_feature_config
    drum = AudioClip(np.zeros(22050), 44100)
    nodrum = noise_clip(0.5)
    ref = reference_stem_features(drum, nodrum, cfg, mix_length=22050)
    assert np.all(ref.drum.data == 0)
    mix = extract_features(AudioClip(drum.samples + nodrum.samples, 44100), cfg)
    assert ref.nodrum.data.shape == mix.data.shape
    again = reference_stem_features(drum, nodrum, cfg, mix_length=22050)
    assert np.array_equal(again.nodrum.data, ref.nodrum.data)


def test_reference_stem_alignment(small_feature_config):
    cfg = small_feature_config
    short = noise_clip(0.5)
    ok = reference_stem_features(short, short, cfg, mix_length=len(short) + cfg.hop)
    assert ok.drum.num_frames == -(-(len(short) + cfg.hop) // cfg.hop)
    with pytest.raises(DataError):
        reference_stem_features(short, short, cfg, mix_length=len(short) + cfg.hop + 1)


def test_sda_mode(tmp_path, small_feature_config):
    cfg = small_feature_config
    drum, nodrum = AudioClip(np.zeros(22050), 44100), noise_clip(0.5, seed=3)
    mixture = AudioClip(drum.samples + nodrum.samples, 44100)
    mix, stems = sda_mode(mixture, drum, nodrum, cfg)
    ref = reference_stem_features(drum, nodrum, cfg, len(mixture))
    assert np.array_equal(stems.nodrum.data, ref.nodrum.data)
    assert np.all(stems.drum.data == 0)
    # switching back to the trainable separator gives mask based stems
    sep = make_separator(mix.dim, [2], seed=0)
    masked = separate_features(mix, sep)
    assert np.allclose(masked.drum.data + masked.nodrum.data, mix.data)
    with pytest.raises(DataError):
        sda_mode(mixture, None, nodrum, cfg)
    base = str(tmp_path / "song.wav")
    save_wav(base, mixture)
    with pytest.raises(DataError, match="missing"):
        load_sda_triple(base, cfg)
    d_path, n_path = stem_paths(base)
    assert d_path.endswith("song.drum.wav") and n_path.endswith("song.nodrum.wav")
    save_wav(d_path, drum)
    save_wav(n_path, nodrum)
    mix2, stems2 = load_sda_triple(base, cfg)
    assert mix2.data.shape == mix.data.shape
