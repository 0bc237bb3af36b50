"""
Decoding activations with the bar-pointer model
===============================================

An idealised activation matrix (a beat every 0.5 s, a downbeat every 2 s)
is decoded with the bar-pointer HMM, then the same is repeated after
blurring and adding noise.

"""

import numpy as np

from drumaware.hmm import HmmConfig, build_state_space, viterbi_decode
from drumaware.sequences import BEAT, DOWNBEAT, NONBEAT, ActivationMatrix

T = 1000
act = np.zeros((3, T))
act[NONBEAT] = 0.98
act[BEAT] = act[DOWNBEAT] = 0.01
for f in range(0, T, 50):
    act[:, f] = (0.05, 0.9, 0.05) if f % 200 == 0 else (0.9, 0.05, 0.05)

config = HmmConfig(beats_per_bar=(4,))
space = build_state_space(config)
print("%d states over %d tempi" % (space.num_states, config.tempo_grid().size))

beats = viterbi_decode(ActivationMatrix(act, 100.0), config, space)
print("beats:    ", np.round(beats.times[:8], 2), "...")
print("downbeats:", np.round(beats.downbeats, 2))

# smear the peaks over neighbouring frames and add noise
rng = np.random.default_rng(0)
kernel = np.array([0.25, 0.5, 1.0, 0.5, 0.25])
noisy = np.vstack([np.convolve(act[r], kernel, "same") for r in range(2)])
noisy = np.vstack([noisy, np.full(T, 0.5)]) + rng.uniform(0, 0.3, (3, T))
noisy /= noisy.sum(axis=0)
beats = viterbi_decode(ActivationMatrix(noisy, 100.0), HmmConfig())
print("noisy input: %d beats, median interval %.3f s, downbeats every %d beats"
      % (len(beats), np.median(np.diff(beats.times)), beats.positions.max()))
