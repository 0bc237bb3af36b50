"""
Evaluation of beat and downbeat estimates.

Contains the F-measure with a fixed tolerance window, the CMLt continuity
score, a paired one-tailed t-test, drum-presence profiling and averaged
activation profiles around annotated events.

"""

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import InvalidInputError
from .sequences import BeatSequence

log = logging.getLogger(__name__)

FMEASURE_WINDOW = 0.07
CMLT_TOLERANCE = 0.175
DRUMLESS_THRESHOLD = 0.01
METRICS = ("beat_f1", "downbeat_f1", "beat_cmlt", "downbeat_cmlt")


def _times(x):
    if isinstance(x, BeatSequence):
        return x.times
    x = np.asarray(x, dtype=np.float64)
    return x[:, 0] if x.ndim == 2 else x.reshape(-1)


def _check_sorted(x, name):
    if np.any(np.diff(x) < 0):
        raise InvalidInputError(f"{name} times must be sorted ascending")


def f_measure(est, ref, tol=FMEASURE_WINDOW):
    """
    Precision, recall and F-measure of estimated event times.

    References are scanned in time order and each is matched to the
    earliest still unmatched estimate within ``+-tol`` seconds (one-to-one).
    Two empty sequences score 1, exactly one empty sequence scores 0.

    Returns
    -------
    (precision, recall, f1) : tuple of float

    """
    est, ref = _times(est), _times(ref)
    _check_sorted(est, "estimated")
    _check_sorted(ref, "reference")
    if est.size == 0 and ref.size == 0:
        return 1.0, 1.0, 1.0
    if est.size == 0 or ref.size == 0:
        return 0.0, 0.0, 0.0
    tp = len(greedy_matches(est, ref, tol))
    precision = tp / est.size
    recall = tp / ref.size
    if tp == 0:
        return precision, recall, 0.0
    return precision, recall, 2 * precision * recall / (precision + recall)


def greedy_matches(est, ref, tol=FMEASURE_WINDOW):
    """``(ref index, est index)`` pairs of the greedy in-time matching."""
    pairs = []
    j = 0
    for i, r in enumerate(ref):
        # estimates too early for this reference are too early for all later ones
        while j < est.size and est[j] < r - tol:
            j += 1
        if j < est.size and abs(est[j] - r) <= tol:
            pairs.append((i, j))
            j += 1
    return pairs


def cmlt(est, ref, tol=CMLT_TOLERANCE):
    """
    Correct-metrical-level continuity score (total over all runs).

    An estimate is correct when it lies within ``tol`` times the local
    inter-annotation interval of its nearest annotation and its own
    inter-beat interval (to the previous estimate; the first estimate uses
    the following one) deviates from that annotation interval by less than
    the same tolerance. Each annotation can be claimed once. The score is
    the number of correct estimates divided by the number of annotations.

    Returns NaN (and warns) for fewer than two annotations.

    """
    est, ref = _times(est), _times(ref)
    _check_sorted(est, "estimated")
    _check_sorted(ref, "reference")
    if ref.size < 2:
        warnings.warn("cmlt undefined for fewer than two annotations; skipped")
        return float("nan")
    if est.size < 2:
        return 0.0
    ref_ibi = np.diff(ref)
    ref_ibi = np.concatenate([[ref_ibi[0]], ref_ibi])
    est_ibi = np.diff(est)
    est_ibi = np.concatenate([[est_ibi[0]], est_ibi])
    nearest = np.abs(est[:, None] - ref[None, :]).argmin(axis=1)
    claimed = np.zeros(ref.size, dtype=bool)
    correct = 0
    for j, i in enumerate(nearest):
        window = tol * ref_ibi[i]
        if (abs(est[j] - ref[i]) < window and abs(est_ibi[j] - ref_ibi[i]) < window
                and not claimed[i]):
            claimed[i] = True
            correct += 1
    return correct / ref.size


def paired_one_tailed_ttest(diffs):
    """
    One-tailed paired t-test of ``mean(diffs) > 0``.

    Returns ``(t, p)``. With zero spread the result is degenerate:
    ``p = 0`` for a positive mean, ``1`` for a negative mean and ``0.5``
    when all differences are zero.

    """
    d = np.asarray(diffs, dtype=np.float64).reshape(-1)
    n = d.size
    if n < 2:
        raise InvalidInputError("t-test needs at least two paired differences")
    mean = d.mean()
    sd = d.std(ddof=1)
    if sd == 0:
        if mean > 0:
            return float("inf"), 0.0
        if mean < 0:
            return float("-inf"), 1.0
        return 0.0, 0.5
    t = mean / (sd / np.sqrt(n))
    return float(t), float(stats.t.sf(t, n - 1))


def absm(clip):
    samples = clip.samples if hasattr(clip, "samples") else np.asarray(clip, float)
    if samples.size == 0:
        raise InvalidInputError("empty drum stem")
    return float(np.mean(np.abs(samples)))


def drum_presence_rate(stems, threshold=DRUMLESS_THRESHOLD):
    """
    Flag drum-less songs from their drum stems.

    A song is drum-less when the mean absolute sample value of its drum
    stem is below `threshold`.

    Returns
    -------
    drumless : numpy bool array
    rate : float
        Percentage of songs that are not drum-less.

    """
    drumless = np.array([absm(s) < threshold for s in stems], dtype=bool)
    rate = 100.0 * float(np.mean(~drumless)) if drumless.size else 0.0
    return drumless, rate


def _event_frames(ann, kind, frame_rate):
    times = ann.downbeats if kind == "downbeat" else ann.times
    return np.round(times * frame_rate).astype(np.int64)


def activation_profile(acts, anns, radius=10, event_kind="beat"):
    """
    Average activation around annotated events.

    Parameters
    ----------
    acts : list of ActivationMatrix
    anns : list of BeatSequence
    radius : int
        Frames before and after each event.
    event_kind : {'beat', 'downbeat'}
        Downbeat profiles use bar-position-1 events only.

    Returns
    -------
    numpy array, shape (3, 2 * radius + 1)
        One profile per activation row; index `radius` is the event frame.

    """
    if event_kind not in ("beat", "downbeat"):
        raise InvalidInputError(f"unknown event kind {event_kind!r}")
    total = np.zeros((3, 2 * radius + 1))
    count = 0
    offsets = np.arange(-radius, radius + 1)
    for act, ann in zip(acts, anns):
        data = act.data
        T = data.shape[1]
        for f in _event_frames(ann, event_kind, act.frame_rate):
            if f - radius < 0 or f + radius >= T:
                continue
            total += data[:, f + offsets]
            count += 1
    if count == 0:
        raise InvalidInputError("no annotated events inside the activation range")
    return total / count


# per-song reports ------------------------------------------------------------

def evaluate_song(est, ref):
    """Beat/downbeat F1 and CMLt of one song as a dict."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return {
            "beat_f1": f_measure(est.times, ref.times)[2],
            "downbeat_f1": f_measure(est.downbeats, ref.downbeats)[2],
            "beat_cmlt": cmlt(est.times, ref.times),
            "downbeat_cmlt": cmlt(est.downbeats, ref.downbeats),
        }


@dataclass
class EvalReport:
    """Per-song metric rows plus their arithmetic mean."""

    rows: dict = field(default_factory=dict)   # song id -> metric dict

    def add(self, song_id, scores):
        self.rows[song_id] = dict(scores)

    def mean(self):
        out = {}
        for m in METRICS:
            vals = np.array([r[m] for r in self.rows.values()], dtype=np.float64)
            out[m] = float(np.nanmean(vals)) if np.any(~np.isnan(vals)) else float("nan")
        return out

    def column(self, metric, ids=None):
        ids = sorted(self.rows) if ids is None else ids
        return np.array([self.rows[i][metric] for i in ids], dtype=np.float64)

    def to_tsv(self, path):
        with open(path, "w") as f:
            f.write("song\t" + "\t".join(METRICS) + "\n")
            for sid in sorted(self.rows):
                f.write(sid + "\t" + "\t".join(_fmt(self.rows[sid][m]) for m in METRICS) + "\n")
            mean = self.mean()
            f.write("MEAN\t" + "\t".join(_fmt(mean[m]) for m in METRICS) + "\n")

    @classmethod
    def from_tsv(cls, path):
        rep = cls()
        with open(path) as f:
            header = f.readline().rstrip("\n").split("\t")
            for line in f:
                parts = line.rstrip("\n").split("\t")
                if parts[0] == "MEAN":
                    continue
                rep.add(parts[0], {h: float(v) for h, v in zip(header[1:], parts[1:])})
        return rep


def _fmt(v):
    return "nan" if v != v else f"{v:.6f}"


def average_reports(reports):
    """Average per-song scores over several runs (songs common to all)."""
    ids = sorted(set.intersection(*(set(r.rows) for r in reports)))
    out = EvalReport()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for sid in ids:
            out.add(sid, {m: float(np.nanmean([r.rows[sid][m] for r in reports]))
                          for m in METRICS})
    return out


def compare_reports(base, other, metrics=METRICS):
    """Paired t-test of other > base for every metric on the shared songs.

    Returns a list of ``(metric, t, p)``; metrics defined on fewer than
    two songs get NaN entries.
    """
    ids = sorted(set(base.rows) & set(other.rows))
    out = []
    for m in metrics:
        a, b = base.column(m, ids), other.column(m, ids)
        keep = ~(np.isnan(a) | np.isnan(b))
        if keep.sum() < 2:
            warnings.warn(f"{m}: fewer than two songs with defined scores; test skipped")
            out.append((m, float("nan"), float("nan")))
            continue
        t, p = paired_one_tailed_ttest(b[keep] - a[keep])
        out.append((m, t, p))
    return out
