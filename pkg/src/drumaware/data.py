"""Training items: cached features, reference stems and frame labels."""

import glob
import logging
import os
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .features import FeatureConfig, SpectralFeature, extract_features
from .io import load_wav, read_beats
from .nn import labels_from_annotations
from .separation import StemFeatures, reference_stem_features, stem_paths
from .sequences import BeatSequence

log = logging.getLogger(__name__)

STORE_DTYPE = np.float32


@dataclass
class Item:
    """One song ready for training or evaluation.

    Feature matrices are stored in float32 to bound memory and promoted to
    float64 on access.
    """

    id: str
    mix: SpectralFeature
    stems: StemFeatures
    beats: BeatSequence
    labels: np.ndarray
    drumless: bool = False

    @property
    def num_frames(self):
        return self.mix.num_frames


def _store(feat):
    return SpectralFeature(feat.data.astype(STORE_DTYPE), feat.frame_rate, feat.layout)


def as_float64(feat):
    return SpectralFeature(feat.data.astype(np.float64), feat.frame_rate, feat.layout)


def make_item(song_id, mixture, drum, nodrum, beats, config=None, drumless=None):
    """Build an :class:`Item` from audio clips and annotations."""
    config = config or FeatureConfig()
    mix = extract_features(mixture, config)
    stems = None
    if drum is not None and nodrum is not None:
        ref = reference_stem_features(drum, nodrum, config, mix_length=len(mixture))
        stems = StemFeatures(_store(ref.drum), _store(ref.nodrum))
        if drumless is None:
            drumless = bool(np.mean(np.abs(drum.samples)) < 0.01)
    labels = labels_from_annotations(beats, mix.num_frames, mix.frame_rate)
    return Item(song_id, _store(mix), stems, beats, labels, bool(drumless))


def items_from_pieces(pieces, config=None):
    """Items from in-memory synthetic pieces."""
    return [make_item(p.id, p.mixture, p.drum, p.nodrum, p.beats, config, p.drumless)
            for p in pieces]


def corpus_ids(corpus_dir):
    """Ids of all ``<id>.wav`` mixtures (stem files excluded)."""
    ids = []
    for path in sorted(glob.glob(os.path.join(corpus_dir, "*.wav"))):
        name = os.path.basename(path)[:-4]
        if name.endswith(".drum") or name.endswith(".nodrum"):
            continue
        ids.append(name)
    return ids


def load_corpus(corpus_dir, config=None, require_stems=True, ids=None):
    """
    Read a corpus directory into items.

    Raises :class:`DataError` if stems or annotations are missing while
    required.

    """
    config = config or FeatureConfig()
    ids = corpus_ids(corpus_dir) if ids is None else ids
    if not ids:
        raise DataError(f"no audio found in {corpus_dir}")
    missing = []
    for sid in ids:
        base = os.path.join(corpus_dir, sid)
        need = [base + ".wav", base + ".beats"]
        if require_stems:
            need += list(stem_paths(base + ".wav"))
        missing += [p for p in need if not os.path.exists(p)]
    if missing:
        raise DataError("corpus is missing files: " + ", ".join(missing[:5])
                        + (" ..." if len(missing) > 5 else ""))
    items = []
    rate = config.sample_rate
    for sid in ids:
        base = os.path.join(corpus_dir, sid)
        mixture = load_wav(base + ".wav", rate)
        beats = BeatSequence.from_array(read_beats(base + ".beats"))
        drum = nodrum = None
        d_path, n_path = stem_paths(base + ".wav")
        if os.path.exists(d_path) and os.path.exists(n_path):
            drum, nodrum = load_wav(d_path, rate), load_wav(n_path, rate)
        items.append(make_item(sid, mixture, drum, nodrum, beats, config))
    return items


def split_by_manifest(items, manifest_rows):
    """Drum-less flags from a synth manifest, keyed by id."""
    flags = {r["id"]: r.get("drumless") == "1" for r in manifest_rows}
    for it in items:
        if it.id in flags:
            it.drumless = flags[it.id]
    return items
