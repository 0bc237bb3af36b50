"""
Multi-resolution spectral features.

Audio is framed at a common hop with several window sizes; each magnitude
spectrogram is passed through a logarithmically spaced triangular
filterbank, compressed with ``ln(1 + x)`` and stacked together with its
half-wave rectified first-order difference.

"""

from dataclasses import dataclass, field
from math import ceil

import numpy as np

from .errors import ConfigError, InvalidInputError

__all__ = [
    "AudioClip", "FeatureConfig", "SpectralFeature", "stft_magnitude",
    "filterbank", "log_filtered", "pos_first_diff", "extract_features",
    "to_mono", "resample", "band_counts",
]


@dataclass(frozen=True)
class AudioClip:
    """Mono audio signal.

    Parameters
    ----------
    samples : numpy array
        Sample amplitudes in [-1, 1].
    sample_rate : int
        Sample rate [Hz].

    """

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size == 0:
            raise InvalidInputError("audio must be a non-empty 1-d signal")
        if not np.all(np.isfinite(samples)):
            raise InvalidInputError("audio contains non-finite samples")
        if int(self.sample_rate) <= 0:
            raise InvalidInputError("sample rate must be positive")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self):
        return self.samples.size

    @property
    def duration(self):
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class FeatureConfig:
    """Parameters of the multi-resolution front end."""

    sample_rate: int = 44100
    hop: int = 441
    window_sizes: tuple = (1024, 2048, 4096)
    bands_per_octave: tuple = (3, 6, 12)
    fmin: float = 30.0
    fmax: float = 17000.0

    def __post_init__(self):
        object.__setattr__(self, "window_sizes", tuple(int(w) for w in self.window_sizes))
        object.__setattr__(self, "bands_per_octave",
                           tuple(int(b) for b in self.bands_per_octave))
        ws = self.window_sizes
        if not ws or any(b <= a for a, b in zip(ws, ws[1:])):
            raise ConfigError("window sizes must be strictly increasing")
        if len(ws) != len(self.bands_per_octave):
            raise ConfigError("need one bands_per_octave entry per window size")
        if any(b <= 0 for b in self.bands_per_octave):
            raise ConfigError("bands_per_octave must be positive")
        if self.sample_rate <= 0 or self.hop <= 0:
            raise ConfigError("sample rate and hop must be positive")
        if not 0 < self.fmin < self.fmax <= self.sample_rate / 2:
            raise ConfigError("need 0 < fmin < fmax <= sample_rate / 2")

    @property
    def frame_rate(self):
        return self.sample_rate / self.hop

    def to_dict(self):
        return {"sample_rate": self.sample_rate, "hop": self.hop,
                "window_sizes": list(self.window_sizes),
                "bands_per_octave": list(self.bands_per_octave),
                "fmin": self.fmin, "fmax": self.fmax}

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: d[k] for k in ("sample_rate", "hop", "window_sizes",
                                        "bands_per_octave", "fmin", "fmax")
                      if k in d})


@dataclass
class SpectralFeature:
    """T x D feature matrix with a description of its column layout.

    `layout` is a list of ``(resolution, num_bands, is_difference)`` spans
    in column order.

    """

    data: np.ndarray
    frame_rate: float
    layout: list = field(default_factory=list)

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 2:
            raise InvalidInputError("feature data must be a T x D matrix")
        if self.layout and sum(s[1] for s in self.layout) != self.data.shape[1]:
            raise ConfigError("layout spans do not sum to the feature dimension")

    @property
    def num_frames(self):
        return self.data.shape[0]

    @property
    def dim(self):
        return self.data.shape[1]

    def column_names(self):
        names = []
        for res, width, is_diff in self.layout:
            kind = "diff" if is_diff else "band"
            names.extend(f"r{res}_{kind}{b:02d}" for b in range(width))
        return names

    def with_data(self, data):
        return SpectralFeature(data, self.frame_rate, list(self.layout))


def to_mono(samples):
    """Downmix a (num_samples, num_channels) array by channel averaging."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    return samples


def resample(samples, orig_rate, target_rate):
    """Linearly interpolate `samples` from `orig_rate` to `target_rate`."""
    if orig_rate == target_rate:
        return np.asarray(samples, dtype=np.float64)
    n_out = int(round(len(samples) * target_rate / orig_rate))
    t_out = np.arange(n_out) / target_rate
    t_in = np.arange(len(samples)) / orig_rate
    return np.interp(t_out, t_in, samples)


def _hann(size):
    # periodic Hann window
    n = np.arange(size)
    return 0.5 - 0.5 * np.cos(2 * np.pi * n / size)


def stft_magnitude(audio, window_size, hop):
    """
    Magnitude spectrogram with frames centred on multiples of `hop`.

    Parameters
    ----------
    audio : AudioClip
        Input signal.
    window_size : int
        Frame length [samples].
    hop : int
        Hop size [samples].

    Returns
    -------
    numpy array, shape (ceil(num_samples / hop), window_size // 2 + 1)

    """
    samples = audio.samples if isinstance(audio, AudioClip) else np.asarray(audio, float)
    if samples.size == 0:
        raise InvalidInputError("empty audio")
    num_frames = ceil(samples.size / hop)
    half = window_size // 2
    total = (num_frames - 1) * hop + window_size
    padded = np.zeros(total)
    n = min(samples.size, total - half)
    padded[half:half + n] = samples[:n]
    frames = np.lib.stride_tricks.sliding_window_view(padded, window_size)[::hop]
    frames = frames[:num_frames] * _hann(window_size)
    return np.abs(np.fft.rfft(frames, axis=1))


def _log_frequencies(bands_per_octave, fmin, fmax):
    num = int(np.floor(np.log2(fmax / fmin) * bands_per_octave + 1e-9))
    return fmin * 2.0 ** (np.arange(num + 1) / bands_per_octave)


def _normalize_filters(filters):
    return filters / filters.sum(axis=1, keepdims=True)


def filterbank(window_size, sample_rate, bands_per_octave, fmin, fmax):
    """
    Triangular filterbank with logarithmically spaced centre frequencies.

    Returns a (num_bands, window_size // 2 + 1) matrix whose rows sum to 1.
    Centre frequencies falling on the same FFT bin are merged, so the band
    count depends on the window size.

    """
    num_bins = window_size // 2 + 1
    bin_width = sample_rate / window_size
    freqs = _log_frequencies(bands_per_octave, fmin, fmax)
    bins = np.unique(np.clip(np.round(freqs / bin_width).astype(int), 0, num_bins - 1))
    if bins.size < 3:
        raise ConfigError(
            f"filterbank for window {window_size} resolves to zero filters")
    filters = np.zeros((bins.size - 2, num_bins))
    for b, (lo, mid, hi) in enumerate(zip(bins[:-2], bins[1:-1], bins[2:])):
        rise = np.arange(lo, mid)
        fall = np.arange(mid, hi)
        filters[b, rise] = (rise - lo) / (mid - lo)
        filters[b, fall] = (hi - fall) / (hi - mid)
    return _normalize_filters(filters)


def log_filtered(mag, config, resolution_index):
    """Log-compressed filterbank bands ``ln(1 + F @ mag)`` for one resolution."""
    window = config.window_sizes[resolution_index]
    fb = filterbank(window, config.sample_rate,
                    config.bands_per_octave[resolution_index],
                    config.fmin, config.fmax)
    if mag.shape[1] != fb.shape[1]:
        raise ConfigError("magnitude bins do not match the window size")
    return np.log1p(mag @ fb.T)


def pos_first_diff(bands):
    """Half-wave rectified first-order difference along time; row 0 is zero."""
    bands = np.asarray(bands, dtype=np.float64)
    out = np.zeros_like(bands)
    out[1:] = np.maximum(0.0, bands[1:] - bands[:-1])
    return out


def extract_features(audio, config=None):
    """
    Compute the stacked multi-resolution feature of `audio`.

    Audio at a different rate than `config.sample_rate` is resampled first.

    Returns
    -------
    SpectralFeature
        Columns per resolution: log bands followed by their positive
        differences; resolutions concatenated in window-size order.

    """
    config = config or FeatureConfig()
    if audio.sample_rate != config.sample_rate:
        audio = AudioClip(resample(audio.samples, audio.sample_rate,
                                   config.sample_rate), config.sample_rate)
    blocks, layout = [], []
    for r, window in enumerate(config.window_sizes):
        bands = log_filtered(stft_magnitude(audio, window, config.hop), config, r)
        blocks += [bands, pos_first_diff(bands)]
        layout += [(r, bands.shape[1], False), (r, bands.shape[1], True)]
    return SpectralFeature(np.hstack(blocks), config.frame_rate, layout)


def band_counts(config=None):
    """Number of filterbank bands per resolution for `config`."""
    config = config or FeatureConfig()
    return [filterbank(w, config.sample_rate, b, config.fmin, config.fmax).shape[0]
            for w, b in zip(config.window_sizes, config.bands_per_octave)]
