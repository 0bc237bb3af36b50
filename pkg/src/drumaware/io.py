"""
Readers and writers for the on-disk formats: WAV audio, ``.beats``
annotations, activation CSVs and feature CSVs.

"""

import csv
import logging
import os
import warnings

import numpy as np
from scipy.io import wavfile

from .errors import DataError
from .features import AudioClip, to_mono

log = logging.getLogger(__name__)

ACTIVATION_COLUMNS = ("beat", "downbeat", "nonbeat")


def load_wav(path, sample_rate=None):
    """
    Read a mono or stereo PCM WAV file (16-bit int or 32-bit float).

    Stereo input is downmixed by averaging. If `sample_rate` is given the
    signal is linearly resampled to it.

    """
    from .features import resample

    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", wavfile.WavFileWarning)
            rate, data = wavfile.read(os.fspath(path))
    except (OSError, ValueError) as e:
        raise DataError(f"cannot read {path}: {e}") from e
    if data.dtype == np.int16:
        data = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        data = data.astype(np.float64) / 2147483648.0
    elif data.dtype == np.uint8:
        data = (data.astype(np.float64) - 128.0) / 128.0
    else:
        data = data.astype(np.float64)
    data = to_mono(data)
    if sample_rate is not None and sample_rate != rate:
        data = resample(data, rate, sample_rate)
        rate = sample_rate
    return AudioClip(data, rate)


def save_wav(path, audio):
    """Write `audio` as 32-bit float mono WAV."""
    wavfile.write(os.fspath(path), audio.sample_rate,
                  audio.samples.astype(np.float32))


def write_beats(path, events):
    """Write ``(time, position_in_bar)`` rows as tab separated text."""
    with open(path, "w") as f:
        for time, pos in events:
            f.write(f"{time:.6f}\t{int(pos)}\n")


def read_beats(path):
    """Read a ``.beats`` file into an (N, 2) array of time and bar position."""
    rows = []
    with open(path) as f:
        for n, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            try:
                rows.append((float(parts[0]),
                             int(float(parts[1])) if len(parts) > 1 else 1))
            except (ValueError, IndexError) as e:
                raise DataError(f"{path}:{n}: malformed beat line") from e
    return np.array(rows, dtype=np.float64).reshape(-1, 2)


def write_activations(path, act, frame_rate):
    """Write a 3 x T activation matrix as CSV with one row per frame."""
    act = np.asarray(act)
    with open(path, "w", newline="") as f:
        f.write(f"# frame_rate={frame_rate!r}\n")
        w = csv.writer(f)
        w.writerow(ACTIVATION_COLUMNS)
        for col in act.T:
            w.writerow([repr(float(v)) for v in col])


def read_activations(path):
    """Return ``(act, frame_rate)`` from an activation CSV; act is 3 x T."""
    frame_rate = None
    rows = []
    with open(path, newline="") as f:
        for line in f:
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                if key.strip() == "frame_rate":
                    frame_rate = float(value)
                continue
            rows.append(line)
    reader = csv.reader(rows)
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != ACTIVATION_COLUMNS:
        raise DataError(f"{path}: expected header {','.join(ACTIVATION_COLUMNS)}")
    if frame_rate is None:
        raise DataError(f"{path}: missing frame_rate comment line")
    data = np.array([[float(v) for v in r] for r in reader if r], dtype=np.float64)
    return data.reshape(-1, 3).T.copy(), frame_rate


def write_feature_csv(path, feature):
    """Export a SpectralFeature; the header names every column."""
    with open(path, "w", newline="") as f:
        f.write(f"# frame_rate={feature.frame_rate!r}\n")
        w = csv.writer(f)
        w.writerow(feature.column_names())
        w.writerows(feature.data.tolist())
