"""
drumaware
=========

Drum-aware ensemble for joint beat and downbeat tracking.

A trainable feature-domain separator splits the mixture feature into drum
and non-drum parts, three BLSTM trackers estimate beat / downbeat /
non-beat activations from the mixture, drum and non-drum features, and a
BLSTM fuser combines them. A bar-pointer HMM decodes activations into beat
and downbeat times.

"""

from .errors import ConfigError, DataError, DrumAwareError, InvalidInputError, NumericError
from .features import AudioClip, FeatureConfig, SpectralFeature, extract_features
from .sequences import ActivationMatrix, BeatSequence
from .hmm import HmmConfig, viterbi_decode
from .ensemble import EnsembleParams, ensemble_forward, make_ensemble

__version__ = "0.1.0"

__all__ = ["ConfigError", "DataError", "DrumAwareError", "InvalidInputError", "NumericError",
           "AudioClip", "FeatureConfig", "SpectralFeature", "extract_features",
           "ActivationMatrix", "BeatSequence", "HmmConfig", "viterbi_decode",
           "EnsembleParams", "ensemble_forward", "make_ensemble"]
