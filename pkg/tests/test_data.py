import numpy as np
import pytest

from drumaware import data, synth
from drumaware.errors import DataError
from drumaware.sequences import DOWNBEAT, NONBEAT


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    synth.generate_dataset(synth.SynthConfig(pieces=3, duration_s=1.5, seed=3,
                                             drumless_fraction=0.34), out)
    return out


def test_load_corpus(corpus, small_feature_config):
    items = data.load_corpus(corpus, small_feature_config)
    assert [it.id for it in items] == data.corpus_ids(corpus)
    it = items[0]
    assert it.mix.data.dtype == np.float32 and it.stems.drum.data.shape == it.mix.data.shape
    assert it.labels.size == it.num_frames
    assert data.as_float64(it.mix).data.dtype == np.float64
    assert sum(it.drumless for it in items) == 1


def test_items_match_in_memory(corpus, small_feature_config):
    cfg = synth.SynthConfig(pieces=3, duration_s=1.5, seed=3, drumless_fraction=0.34)
    mem = data.items_from_pieces(list(synth.iter_pieces(cfg)), small_feature_config)
    disk = data.load_corpus(corpus, small_feature_config)
    for a, b in zip(mem, disk):
        # stems are float32 exact; the float32 mixture file rounds their sum
        assert np.allclose(a.mix.data, b.mix.data, atol=1e-4)
        assert np.array_equal(a.stems.nodrum.data, b.stems.nodrum.data)
        assert np.array_equal(a.labels, b.labels)


def test_missing_stems(corpus, tmp_path, small_feature_config):
    import shutil
    for f in corpus.iterdir():
        if not f.name.endswith(".drum.wav"):
            shutil.copy(f, tmp_path / f.name)
    with pytest.raises(DataError, match="missing"):
        data.load_corpus(tmp_path, small_feature_config)
    items = data.load_corpus(tmp_path, small_feature_config, require_stems=False)
    assert all(it.stems is None for it in items)
    with pytest.raises(DataError):
        data.load_corpus(tmp_path / "nothing", small_feature_config)


def test_labels_from_piece(small_feature_config):
    p = synth.generate_piece(synth.SynthConfig(pieces=1, duration_s=2.0), 0,
                             tempo=120, meter=4, offset=0.0)
    it = data.make_item(p.id, p.mixture, p.drum, p.nodrum, p.beats, small_feature_config)
    assert it.labels[0] == DOWNBEAT and it.labels[200 // 2] != NONBEAT
    assert np.sum(it.labels != NONBEAT) == 4
