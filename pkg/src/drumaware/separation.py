"""
Drum / non-drum separation in the feature domain.

A BLSTM stack predicts a mask ``m`` in (0, 1) for every feature bin; the
drum feature is ``m * mix`` and the non-drum feature ``(1 - m) * mix``, so
the two always add up to the mixture. The separator is trained with the
mean squared error against features of reference stems.

In SDA mode the separator is bypassed and stem features are computed
directly from externally separated stem audio.

"""

import os
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, InvalidInputError
from .features import FeatureConfig, SpectralFeature, extract_features
from .nn import BlstmStack

DRUM_SUFFIX = ".drum.wav"
NODRUM_SUFFIX = ".nodrum.wav"


@dataclass
class StemFeatures:
    """Drum and non-drum features sharing the mixture's shape and layout."""

    drum: SpectralFeature
    nodrum: SpectralFeature
    mask: np.ndarray = None

    def __post_init__(self):
        if self.drum.data.shape != self.nodrum.data.shape:
            raise InvalidInputError("drum and non-drum features differ in shape")


def make_separator(input_dim, hidden_dims=(64, 64, 64), seed=0):
    """Separator stack with an element-wise logistic mask head."""
    return BlstmStack(input_dim, list(hidden_dims), input_dim, "sigmoid", seed)


def separate_features(mix, params, fwd=None):
    """
    Split a mixture feature with the separator's mask.

    Parameters
    ----------
    mix : SpectralFeature
    params : BlstmStack
        Separator with a sigmoid head of width D.
    fwd : nn.Forward, optional
        Re-use an existing forward pass of `params` over `mix`.

    """
    if params.output_kind != "sigmoid" or params.output_dim != mix.dim:
        raise ConfigError("separator head must be a sigmoid mask of width D")
    if fwd is None:
        fwd = params.forward(mix.data)
    mask = fwd.output
    return StemFeatures(mix.with_data(mask * mix.data),
                        mix.with_data((1.0 - mask) * mix.data), mask)


def separation_loss(pred, ref):
    """Mean squared error of both stems, averaged over the two stems."""
    pd, pn = np.asarray(pred.drum.data), np.asarray(pred.nodrum.data)
    rd, rn = np.asarray(ref.drum.data), np.asarray(ref.nodrum.data)
    if pd.shape != rd.shape or pn.shape != rn.shape:
        raise InvalidInputError("predicted and reference stems differ in shape")
    return float(0.5 * (np.mean((pd - rd) ** 2) + np.mean((pn - rn) ** 2)))


def separator_backward(mix, params, ref, fwd=None):
    """
    Loss and gradients of :func:`separation_loss` w.r.t. separator weights.

    Returns ``(loss, grads, fwd)``.

    """
    fwd = fwd or params.forward(mix.data)
    pred = separate_features(mix, params, fwd)
    loss = separation_loss(pred, ref)
    x = mix.data
    n = x.size
    d_drum = (pred.drum.data - ref.drum.data) / n
    d_nodrum = (pred.nodrum.data - ref.nodrum.data) / n
    m = fwd.output
    d_logits = x * (d_drum - d_nodrum) * m * (1.0 - m)
    return loss, params.backward(fwd, d_logits), fwd


def reference_stem_features(drum_audio, nodrum_audio, config=None, mix_length=None):
    """
    Features of time-aligned reference stems.

    `mix_length` (samples) enables the alignment check: stems may differ in
    length from the mixture by at most one hop; they are then trimmed or
    zero-padded to the mixture length.

    """
    config = config or FeatureConfig()
    target = mix_length if mix_length is not None else len(drum_audio)
    clips = []
    for clip in (drum_audio, nodrum_audio):
        if abs(len(clip) - target) > config.hop:
            raise DataError(
                f"stem length {len(clip)} differs from mixture length {target}")
        if len(clip) != target:
            samples = np.zeros(target)
            n = min(target, len(clip))
            samples[:n] = clip.samples[:n]
            clip = type(clip)(samples, clip.sample_rate)
        clips.append(clip)
    return StemFeatures(extract_features(clips[0], config),
                        extract_features(clips[1], config))


def sda_mode(mix_audio, drum_audio, nodrum_audio, config=None):
    """
    Features of an externally separated triple; the trainable separator is
    not involved. Returns ``(mix_feature, StemFeatures)``.

    """
    if drum_audio is None or nodrum_audio is None:
        raise DataError("SDA mode needs both a drum and a non-drum stem")
    config = config or FeatureConfig()
    mix = extract_features(mix_audio, config)
    return mix, reference_stem_features(drum_audio, nodrum_audio, config,
                                        mix_length=len(mix_audio))


def stem_paths(mixture_path):
    """Drum and non-drum stem paths belonging to ``<base>.wav``."""
    base = os.fspath(mixture_path)
    if base.endswith(".wav"):
        base = base[:-4]
    return base + DRUM_SUFFIX, base + NODRUM_SUFFIX


def load_sda_triple(mixture_path, config=None):
    """Read ``<base>.wav``, ``<base>.drum.wav`` and ``<base>.nodrum.wav``
    and return :func:`sda_mode` features."""
    from .io import load_wav

    config = config or FeatureConfig()
    drum_path, nodrum_path = stem_paths(mixture_path)
    for p in (mixture_path, drum_path, nodrum_path):
        if not os.path.exists(p):
            raise DataError(f"missing file for SDA mode: {p}")
    rate = config.sample_rate
    return sda_mode(load_wav(mixture_path, rate), load_wav(drum_path, rate),
                    load_wav(nodrum_path, rate), config)
