"""
Multi-resolution features of a synthetic piece
==============================================

Synthesize one piece, split it into its drum and non-drum stems and look
at the stacked log-filtered spectrogram feature of each part.

"""

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from drumaware.features import band_counts, extract_features
from drumaware.synth import SynthConfig, generate_piece

piece = generate_piece(SynthConfig(duration_s=6.0, seed=3), 0, tempo=110, meter=4,
                       drumless=False)
print("tempo %.1f bpm, meter %d, %d beats" % (piece.tempo, piece.meter, len(piece.beats)))

# three window sizes, each contributing bands plus their positive difference
print("bands per resolution:", band_counts())

feats = {name: extract_features(clip) for name, clip in
         (("mixture", piece.mixture), ("drum", piece.drum), ("non-drum", piece.nodrum))}
mix = feats["mixture"]
print("feature matrix: %d frames x %d dims at %g fps" % (mix.num_frames, mix.dim,
                                                          mix.frame_rate))

fig, axes = plt.subplots(3, 1, figsize=(8, 7), sharex=True)
for ax, (name, feat) in zip(axes, feats.items()):
    ax.imshow(feat.data.T, origin="lower", aspect="auto", cmap="magma",
              extent=(0, feat.num_frames / feat.frame_rate, 0, feat.dim))
    for t in piece.beats.downbeats:
        ax.axvline(t, color="w", lw=0.6, alpha=0.6)
    ax.set_ylabel(name)
axes[-1].set_xlabel("time [s]")
fig.tight_layout()
fig.savefig("features.png", dpi=100)
print("wrote features.png")
