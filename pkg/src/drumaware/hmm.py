"""
Bar-pointer hidden Markov model for joint beat and downbeat decoding.

Each hidden state is a triple (pattern, beat interval ``tau``, bar position
``p``) with ``p`` in ``0 .. b * tau - 1`` for a bar of ``b`` beats. The
position advances by one frame deterministically; whenever the pointer
reaches the start of a beat the interval may change to ``tau'`` with
probability proportional to ``exp(-transition_lambda * |tau' / tau - 1|)``.
Patterns (bar lengths) never mix.

The first ``tau / observation_lambda`` positions of every beat are beat
states (downbeat states for the first beat of the bar); all others are
non-beat states.

"""

from dataclasses import dataclass, field
from math import ceil, floor

import numpy as np
from scipy.special import logsumexp

from .errors import ConfigError
from .sequences import ActivationMatrix, BeatSequence, BEAT, DOWNBEAT, NONBEAT

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class HmmConfig:
    """Decoder hyper-parameters.

    Parameters
    ----------
    beats_per_bar : tuple of int
        Bar lengths (in beats) to model.
    min_bpm, max_bpm : float
        Tempo range; every integer interval between ``60 * fps / max_bpm``
        and ``60 * fps / min_bpm`` frames is modelled.
    transition_lambda : float
        Tempo change penalty.
    observation_lambda : float
        Divides a beat period; the first part is the beat window.
    fps : float
        Frame rate of the activations.
    correct : bool
        Place each beat on the activation peak inside the path's beat window
        instead of at the window start.
    intervals : tuple of int, optional
        Explicit beat intervals [frames], overriding the bpm range.

    """

    beats_per_bar: tuple = (3, 4)
    min_bpm: float = 55.0
    max_bpm: float = 215.0
    transition_lambda: float = 100.0
    observation_lambda: float = 16.0
    fps: float = 100.0
    correct: bool = True
    intervals: tuple = None

    def __post_init__(self):
        bpb = self.beats_per_bar
        bpb = (bpb,) if np.isscalar(bpb) else tuple(int(b) for b in bpb)
        object.__setattr__(self, "beats_per_bar", bpb)
        if self.intervals is not None:
            object.__setattr__(self, "intervals", tuple(sorted(int(t) for t in self.intervals)))
        if not bpb or min(bpb) < 2:
            raise ConfigError("beats_per_bar values must be >= 2")
        if self.observation_lambda < 2:
            raise ConfigError("observation_lambda must be >= 2")
        if self.transition_lambda < 0:
            raise ConfigError("transition_lambda must be >= 0")
        if len(self.tempo_grid()) == 0:
            raise ConfigError("empty tempo grid")

    def tempo_grid(self):
        """Sorted integer beat intervals [frames]."""
        if self.intervals is not None:
            grid = np.array([t for t in self.intervals if t >= 1], dtype=np.int64)
            return grid
        lo = ceil(60.0 * self.fps / self.max_bpm - 1e-9)
        hi = floor(60.0 * self.fps / self.min_bpm + 1e-9)
        return np.arange(max(lo, 1), hi + 1, dtype=np.int64)

    def to_dict(self):
        return {"beats_per_bar": list(self.beats_per_bar), "min_bpm": self.min_bpm,
                "max_bpm": self.max_bpm, "transition_lambda": self.transition_lambda,
                "observation_lambda": self.observation_lambda, "fps": self.fps,
                "correct": self.correct,
                "intervals": None if self.intervals is None else list(self.intervals)}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if d.get("intervals") is not None:
            d["intervals"] = tuple(d["intervals"])
        if "beats_per_bar" in d:
            d["beats_per_bar"] = tuple(d["beats_per_bar"])
        return cls(**d)


@dataclass
class Pattern:
    """States of one bar length, ordered by (tau, position)."""

    beats: int
    taus: np.ndarray
    offsets: np.ndarray        # first state of each tau block (pattern-local)
    log_trans: np.ndarray      # [source tau idx, destination tau idx]
    num_states: int
    state_tau: np.ndarray = field(repr=False, default=None)
    state_pos: np.ndarray = field(repr=False, default=None)


@dataclass
class BarStateSpace:
    """All patterns; global state index = pattern offset + local index."""

    patterns: list
    pattern_offsets: np.ndarray
    observation_lambda: float

    @property
    def num_states(self):
        return int(sum(p.num_states for p in self.patterns))

    def locate(self, state):
        """Return ``(pattern index, tau, position)`` of a global state."""
        k = int(np.searchsorted(self.pattern_offsets, state, side="right") - 1)
        pat = self.patterns[k]
        local = state - self.pattern_offsets[k]
        return k, int(pat.state_tau[local]), int(pat.state_pos[local])

    def state_classes(self):
        """Observation class of every state (BEAT, DOWNBEAT or NONBEAT)."""
        out = []
        for pat in self.patterns:
            out.append(_classes(pat.state_tau, pat.state_pos, self.observation_lambda))
        return np.concatenate(out)


def _classes(tau, pos, obs_lambda):
    window = tau / obs_lambda
    cls = np.full(tau.shape, NONBEAT, dtype=np.int64)
    cls[(pos % tau) < window] = BEAT
    cls[pos < window] = DOWNBEAT
    return cls


def tempo_log_transitions(taus, transition_lambda):
    """Log tempo-change matrix with rows (source interval) normalised."""
    taus = np.asarray(taus, dtype=np.float64)
    ratio = taus[None, :] / taus[:, None]
    logits = -transition_lambda * np.abs(ratio - 1.0)
    return logits - logsumexp(logits, axis=1, keepdims=True)


def build_state_space(config):
    """Discretised bar-pointer state space for `config`."""
    taus = config.tempo_grid()
    if taus.size == 0:
        raise ConfigError("empty tempo grid")
    log_trans = tempo_log_transitions(taus, config.transition_lambda)
    patterns, offsets, total = [], [], 0
    for b in config.beats_per_bar:
        sizes = b * taus
        local = np.concatenate([[0], np.cumsum(sizes)[:-1]])
        st_tau = np.repeat(taus, sizes)
        st_pos = np.concatenate([np.arange(s) for s in sizes])
        patterns.append(Pattern(b, taus, local, log_trans, int(sizes.sum()),
                                st_tau, st_pos))
        offsets.append(total)
        total += int(sizes.sum())
    return BarStateSpace(patterns, np.array(offsets, dtype=np.int64),
                         float(config.observation_lambda))


def transition_matrix(space):
    """
    Explicit (sparse) transition matrix over all global states.

    Intended for inspection and small-scale checks; decoding uses the
    structured form directly.

    """
    from scipy.sparse import csr_matrix

    rows, cols, vals = [], [], []
    for k, pat in enumerate(space.patterns):
        base = space.pattern_offsets[k]
        b = pat.beats
        for i, tau in enumerate(pat.taus):
            for p in range(b * tau):
                src = base + pat.offsets[i] + p
                nxt = (p + 1) % (b * tau)
                if nxt % tau == 0:
                    beat = nxt // tau
                    for j, tau2 in enumerate(pat.taus):
                        rows.append(src)
                        cols.append(base + pat.offsets[j] + beat * tau2)
                        vals.append(np.exp(pat.log_trans[i, j]))
                else:
                    rows.append(src)
                    cols.append(src + 1)
                    vals.append(1.0)
    n = space.num_states
    return csr_matrix((vals, (rows, cols)), shape=(n, n))


def observation_table(act, obs_lambda):
    """Per-frame log-likelihood of the three observation classes (T x 3)."""
    data = act.data if isinstance(act, ActivationMatrix) else np.asarray(act, float)
    table = np.empty((data.shape[1], 3))
    table[:, BEAT] = np.log(np.maximum(data[BEAT], PROB_FLOOR))
    table[:, DOWNBEAT] = np.log(np.maximum(data[DOWNBEAT], PROB_FLOOR))
    table[:, NONBEAT] = np.log(np.maximum(data[NONBEAT] / (obs_lambda - 1), PROB_FLOOR))
    return table


def observation_logprob(space, state, act_column):
    """Log-likelihood of one 3-vector activation column in a global state."""
    _, tau, pos = space.locate(state)
    cls = int(_classes(np.array([tau]), np.array([pos]), space.observation_lambda)[0])
    col = np.asarray(act_column, dtype=np.float64)
    value = col[cls] / (space.observation_lambda - 1) if cls == NONBEAT else col[cls]
    return float(np.log(max(value, PROB_FLOOR)))


@dataclass
class ViterbiPath:
    """Best state sequence; per-frame arrays of pattern, tau and position."""

    states: np.ndarray
    pattern: np.ndarray
    tau: np.ndarray
    pos: np.ndarray
    log_prob: float


def _pattern_index_maps(pat):
    b, taus, off = pat.beats, pat.taus, pat.offsets
    # beat start states [beat, tau idx] and the last state of the previous beat
    starts = off[None, :] + np.arange(b)[:, None] * taus[None, :]
    ends = off[None, :] + ((np.arange(b)[:, None] * taus[None, :] - 1)
                           % (b * taus)[None, :])
    prev = np.arange(pat.num_states) - 1
    return starts, ends, prev


def viterbi(act, config, space=None):
    """Most probable state path through the bar-pointer model."""
    space = space or build_state_space(config)
    table = observation_table(act, space.observation_lambda)
    T = table.shape[0]
    if T < 1:
        raise ConfigError("need at least one frame")
    classes = [_classes(p.state_tau, p.state_pos, space.observation_lambda)
               for p in space.patterns]
    init = -np.log(space.num_states)
    deltas, backptrs, maps = [], [], []
    for pat, cls in zip(space.patterns, classes):
        deltas.append(init + table[0, cls])
        backptrs.append(np.zeros((T, pat.beats, pat.taus.size), dtype=np.int32))
        maps.append(_pattern_index_maps(pat))
    for t in range(1, T):
        obs = table[t]
        for k, pat in enumerate(space.patterns):
            starts, ends, prev = maps[k]
            delta = deltas[k]
            new = delta[prev]
            # (beat, source tau, destination tau)
            cand = delta[ends][:, :, None] + pat.log_trans[None, :, :]
            best = np.argmax(cand, axis=1)
            backptrs[k][t] = best
            new[starts] = np.take_along_axis(cand, best[:, None, :], axis=1)[:, 0, :]
            deltas[k] = new + obs[classes[k]]
    final = np.concatenate(deltas)
    state = int(np.argmax(final))
    log_prob = float(final[state])
    # backtrack
    k = int(np.searchsorted(space.pattern_offsets, state, side="right") - 1)
    pat = space.patterns[k]
    starts, ends, _ = maps[k]
    local = state - int(space.pattern_offsets[k])
    path = np.empty(T, dtype=np.int64)
    path[T - 1] = local
    for t in range(T - 1, 0, -1):
        tau = pat.state_tau[local]
        pos = pat.state_pos[local]
        if pos % tau == 0:
            beat = pos // tau
            ti = int(np.searchsorted(pat.taus, tau))
            local = int(ends[beat, backptrs[k][t, beat, ti]])
        else:
            local -= 1
        path[t - 1] = local
    return ViterbiPath(path + int(space.pattern_offsets[k]), np.full(T, k),
                       pat.state_tau[path], pat.state_pos[path], log_prob)


def path_to_beats(path, act, config, correct=None):
    """
    Beat events of a decoded path.

    Without correction a beat is emitted at every frame whose position is a
    beat start. With correction each contiguous run of beat-window frames
    yields one beat at its activation peak.

    """
    correct = config.correct if correct is None else correct
    data = act.data if isinstance(act, ActivationMatrix) else np.asarray(act, float)
    tau, pos = path.tau, path.pos
    if not correct:
        frames = np.nonzero(pos % tau == 0)[0]
    else:
        window = (pos % tau) < tau / config.observation_lambda
        edges = np.diff(np.concatenate([[0], window.astype(np.int8), [0]]))
        lefts, rights = np.nonzero(edges == 1)[0], np.nonzero(edges == -1)[0]
        strength = data[BEAT] + data[DOWNBEAT]
        frames = np.array([l + int(np.argmax(strength[l:r]))
                           for l, r in zip(lefts, rights)], dtype=np.int64)
    positions = 1 + pos[frames] // tau[frames]
    return BeatSequence(frames / float(config.fps), positions)


def viterbi_decode(act, config=None, space=None):
    """
    Decode a 3 x T activation matrix into beats and downbeats.

    Returns
    -------
    BeatSequence
        Beat times [seconds] with their position in the bar (1 = downbeat).

    """
    config = config or HmmConfig()
    if isinstance(act, ActivationMatrix) and act.frame_rate != config.fps:
        raise ConfigError("activation frame rate differs from the decoder fps")
    path = viterbi(act, config, space)
    return path_to_beats(path, act, config)


class Decoder:
    """Re-usable decoder caching the state space of one configuration."""

    def __init__(self, config=None):
        self.config = config or HmmConfig()
        self.space = build_state_space(self.config)

    def __call__(self, act):
        return viterbi_decode(act, self.config, self.space)


def tune(activations, references, base_config=None,
         transition_lambdas=(10, 30, 100, 300), observation_lambdas=(4, 8, 16, 32)):
    """
    Grid search of the two lambdas maximising mean beat F1.

    Parameters
    ----------
    activations : list of ActivationMatrix
    references : list of BeatSequence
        Ground truth, aligned with `activations`.

    Returns
    -------
    best : HmmConfig
    table : list of (transition_lambda, observation_lambda, mean beat F1)

    """
    from dataclasses import replace

    from .evaluation import f_measure

    base_config = base_config or HmmConfig()
    table = []
    best, best_score = None, -1.0
    for tl in transition_lambdas:
        for ol in observation_lambdas:
            cfg = replace(base_config, transition_lambda=float(tl),
                          observation_lambda=float(ol))
            dec = Decoder(cfg)
            scores = [f_measure(dec(a).times, r.times)[2]
                      for a, r in zip(activations, references)]
            score = float(np.mean(scores))
            table.append((float(tl), float(ol), score))
            if score > best_score:
                best, best_score = cfg, score
    return best, table
