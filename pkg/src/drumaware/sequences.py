"""Activation matrices, frame labels and beat sequences."""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

BEAT, DOWNBEAT, NONBEAT = 0, 1, 2
CLASS_NAMES = ("beat", "downbeat", "nonbeat")


@dataclass
class ActivationMatrix:
    """3 x T per-frame distribution over (beat, downbeat, non-beat)."""

    data: np.ndarray
    frame_rate: float

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2 or self.data.shape[0] != 3:
            raise InvalidInputError("activation matrix must be 3 x T")

    @property
    def num_frames(self):
        return self.data.shape[1]

    def is_distribution(self, atol=1e-9):
        d = self.data
        return bool(np.all(d >= -atol) and np.all(d <= 1 + atol)
                    and np.allclose(d.sum(axis=0), 1.0, rtol=0, atol=atol))


@dataclass
class BeatSequence:
    """Ordered beat events; ``positions == 1`` marks downbeats."""

    times: np.ndarray
    positions: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64).reshape(-1)
        self.positions = np.asarray(self.positions, dtype=np.int64).reshape(-1)
        if self.times.shape != self.positions.shape:
            raise InvalidInputError("times and positions differ in length")

    @classmethod
    def from_array(cls, arr):
        arr = np.asarray(arr, dtype=np.float64).reshape(-1, 2)
        return cls(arr[:, 0], arr[:, 1].astype(np.int64))

    @classmethod
    def empty(cls):
        return cls(np.zeros(0), np.zeros(0, dtype=np.int64))

    def to_array(self):
        return np.column_stack([self.times, self.positions.astype(np.float64)])

    def __len__(self):
        return self.times.size

    def __iter__(self):
        return iter(zip(self.times.tolist(), self.positions.tolist()))

    @property
    def downbeats(self):
        return self.times[self.positions == 1]

    def is_strictly_increasing(self):
        return bool(np.all(np.diff(self.times) > 0))
