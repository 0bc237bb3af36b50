"""
Deterministic synthetic corpora with exact drum / non-drum stems.

Every piece has a constant tempo and meter. The drum stem holds a
decaying low-passed noise kick on every beat, a noise-burst snare on beat
2 (and 4 in 4/4) and soft eighth-note hats; drum-less pieces get a silent
drum stem. The non-drum stem holds a decaying harmonic chord on every
downbeat and a sustained tone whose pitch changes on every beat. The
mixture is the sample-wise sum of both stems.

"""

import logging
import os
from dataclasses import asdict, dataclass
from math import floor

import numpy as np
from scipy import signal

from .errors import DataError
from .features import AudioClip
from .sequences import BeatSequence

log = logging.getLogger(__name__)

MANIFEST = "manifest.tsv"
MANIFEST_COLUMNS = ("id", "tempo", "meter", "offset", "drumless", "duration")


@dataclass(frozen=True)
class SynthConfig:
    pieces: int = 10
    duration_s: float = 10.0
    tempo_range_bpm: tuple = (70.0, 180.0)
    meters: tuple = (3, 4)
    drumless_fraction: float = 0.3
    seed: int = 0
    amplitude_headroom: float = 0.4
    sample_rate: int = 44100

    def __post_init__(self):
        if not 0 <= self.drumless_fraction <= 1:
            raise ValueError("drumless_fraction must lie in [0, 1]")
        if self.amplitude_headroom * 2 > 0.8 + 1e-12:
            raise ValueError("two stems at this headroom could exceed 0.8")

    def to_dict(self):
        d = asdict(self)
        d["tempo_range_bpm"] = list(self.tempo_range_bpm)
        d["meters"] = list(self.meters)
        return d


@dataclass
class Piece:
    id: str
    mixture: AudioClip
    drum: AudioClip
    nodrum: AudioClip
    beats: BeatSequence
    tempo: float
    meter: int
    offset: float
    drumless: bool


def piece_id(index):
    return f"piece{index:04d}"


def num_drumless(config):
    return int(floor(config.drumless_fraction * config.pieces + 0.5))


def drumless_indices(config):
    """Indices of the drum-less pieces (exactly round(fraction * pieces))."""
    rng = np.random.default_rng([config.seed, 0x5eed])
    return set(int(i) for i in rng.permutation(config.pieces)[:num_drumless(config)])


def _decay(n, sr, tau):
    return np.exp(-np.arange(n) / (sr * tau))


def _add(out, start, burst):
    end = min(out.size, start + burst.size)
    if start < end:
        out[start:end] += burst[:end - start]


def _drum_stem(rng, beat_times, positions, ibi, meter, n, sr):
    out = np.zeros(n)
    b_lo, a_lo = signal.butter(2, 150.0 / (sr / 2), "low")
    b_bp, a_bp = signal.butter(2, [1000.0 / (sr / 2), 6000.0 / (sr / 2)], "band")
    b_hi, a_hi = signal.butter(2, 7000.0 / (sr / 2), "high")
    kick_len, snare_len, hat_len = int(0.6 * sr), int(0.4 * sr), int(0.2 * sr)
    snare_beats = {2, 4} if meter == 4 else {2}
    for t, pos in zip(beat_times, positions):
        start = int(round(t * sr))
        kick = signal.lfilter(b_lo, a_lo, rng.standard_normal(kick_len))
        kick *= _decay(kick_len, sr, 0.2) / (np.abs(kick).max() + 1e-12)
        _add(out, start, kick)
        if pos in snare_beats:
            snare = signal.lfilter(b_bp, a_bp, rng.standard_normal(snare_len))
            snare *= 0.7 * _decay(snare_len, sr, 0.1) / (np.abs(snare).max() + 1e-12)
            _add(out, start, snare)
        for eighth in (0.0, 0.5):
            hat = signal.lfilter(b_hi, a_hi, rng.standard_normal(hat_len))
            hat *= 0.5 * _decay(hat_len, sr, 0.04) / (np.abs(hat).max() + 1e-12)
            _add(out, int(round((t + eighth * ibi) * sr)), hat)
    return out


def _midi_hz(m):
    return 440.0 * 2.0 ** ((np.asarray(m, dtype=np.float64) - 69) / 12)


def _harmonic(freq, n, sr, harmonics=3):
    t = np.arange(n) / sr
    return sum(np.sin(2 * np.pi * h * freq * t) / h for h in range(1, harmonics + 1))


def _nodrum_stem(rng, beat_times, positions, n, sr, duration):
    out = np.zeros(n)
    bounds = list(beat_times) + [duration]
    attack = int(0.005 * sr)
    fade = int(0.01 * sr)
    for k, (t, pos) in enumerate(zip(beat_times, positions)):
        start = int(round(t * sr))
        if pos == 1:
            # chord on the downbeat, decaying over the bar
            root = rng.integers(45, 57)
            length = int(2.5 * sr)
            chord = sum(_harmonic(_midi_hz(root + iv), length, sr) for iv in (0, 4, 7))
            env = _decay(length, sr, 0.6)
            env[:attack] *= np.linspace(0, 1, attack)
            _add(out, start, 0.5 * chord * env / 3)
        # sustained tone, new pitch on every beat
        stop = int(round(bounds[k + 1] * sr))
        length = max(stop - start, 2 * fade + 1)
        tone = _harmonic(_midi_hz(rng.integers(62, 79)), length, sr, harmonics=2)
        env = np.ones(length)
        env[:fade] = np.linspace(0, 1, fade)
        env[-fade:] = np.linspace(1, 0, fade)
        _add(out, start, 0.35 * tone * env)
    return out


def _normalize(x, peak):
    m = np.abs(x).max()
    y = x * (peak / m) if m > 0 else x
    # float32-representable so that stems written to disk round-trip exactly
    return y.astype(np.float32).astype(np.float64)


def generate_piece(config, index, tempo=None, meter=None, offset=None, drumless=None):
    """
    Synthesize one piece.

    Tempo, meter, first-beat offset and the drum-less flag are drawn from a
    generator seeded by ``(config.seed, index)`` unless given explicitly.

    Returns
    -------
    Piece

    """
    rng = np.random.default_rng([config.seed, index])
    sr = config.sample_rate
    lo, hi = config.tempo_range_bpm
    draw_tempo = float(rng.uniform(lo, hi))
    draw_meter = int(rng.choice(np.asarray(config.meters)))
    ibi = 60.0 / (tempo if tempo is not None else draw_tempo)
    draw_offset = float(rng.uniform(0.0, ibi))
    tempo = draw_tempo if tempo is None else float(tempo)
    meter = draw_meter if meter is None else int(meter)
    offset = draw_offset if offset is None else float(offset)
    if drumless is None:
        drumless = index in drumless_indices(config)
    n = int(round(config.duration_s * sr))
    count = int(np.floor((config.duration_s - offset) / ibi - 1e-9)) + 1
    count = max(count, 0)
    times = offset + ibi * np.arange(count)
    times = times[times < config.duration_s]
    positions = (np.arange(times.size) % meter) + 1
    drum_rng = np.random.default_rng([config.seed, index, 1])
    tone_rng = np.random.default_rng([config.seed, index, 2])
    drum = _drum_stem(drum_rng, times, positions, ibi, meter, n, sr)
    nodrum = _nodrum_stem(tone_rng, times, positions, n, sr, config.duration_s)
    headroom = config.amplitude_headroom
    drum = np.zeros(n) if drumless else _normalize(drum, headroom)
    nodrum = _normalize(nodrum, headroom)
    mixture = drum + nodrum
    return Piece(piece_id(index), AudioClip(mixture, sr), AudioClip(drum, sr),
                 AudioClip(nodrum, sr), BeatSequence(times, positions),
                 tempo, meter, offset, bool(drumless))


def iter_pieces(config):
    for i in range(config.pieces):
        yield generate_piece(config, i)


def generate_dataset(config, out_dir):
    """
    Write a corpus to `out_dir`: ``<id>.wav``, ``<id>.drum.wav``,
    ``<id>.nodrum.wav`` and ``<id>.beats`` per piece plus ``manifest.tsv``.

    Returns the manifest path.

    """
    from .io import save_wav, write_beats

    os.makedirs(out_dir, exist_ok=True)
    rows = []
    for piece in iter_pieces(config):
        base = os.path.join(out_dir, piece.id)
        try:
            save_wav(base + ".wav", piece.mixture)
            save_wav(base + ".drum.wav", piece.drum)
            save_wav(base + ".nodrum.wav", piece.nodrum)
            write_beats(base + ".beats", piece.beats)
        except OSError as e:
            raise DataError(f"{piece.id}: cannot write corpus files: {e}") from e
        rows.append((piece.id, f"{piece.tempo:.6f}", str(piece.meter),
                     f"{piece.offset:.6f}", str(int(piece.drumless)),
                     f"{config.duration_s:.6f}"))
    path = os.path.join(out_dir, MANIFEST)
    with open(path, "w") as f:
        f.write("\t".join(MANIFEST_COLUMNS) + "\n")
        for r in rows:
            f.write("\t".join(r) + "\n")
    return path


def read_manifest(path):
    """Rows of a corpus manifest as a list of dicts."""
    with open(path) as f:
        header = f.readline().rstrip("\n").split("\t")
        return [dict(zip(header, line.rstrip("\n").split("\t"))) for line in f if line.strip()]
