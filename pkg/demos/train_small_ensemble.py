"""
Training a small drum-aware ensemble
====================================

A few synthetic pieces are enough to watch the separator, the three
trackers and the fuser learn side by side. Each module follows its own loss
so the trackers never receive gradients from the fuser.

"""

import numpy as np

from drumaware import ensemble as E
from drumaware.data import items_from_pieces
from drumaware.evaluation import f_measure
from drumaware.features import FeatureConfig
from drumaware.hmm import Decoder
from drumaware.synth import SynthConfig, generate_piece

features = FeatureConfig(window_sizes=(1024, 2048), bands_per_octave=(3, 6))


def corpus(n, seed):
    cfg = SynthConfig(pieces=n, duration_s=8.0, seed=seed)
    return items_from_pieces([generate_piece(cfg, i) for i in range(n)], features)


train, val, test = corpus(24, 1), corpus(4, 2), corpus(6, 3)
print("train on %d pieces, %d feature dims" % (len(train), train[0].mix.dim))

params = E.make_ensemble("da2", train[0].mix.dim, tracker_hidden=(16, 16),
                         separator_hidden=(24, 24), fuser_hidden=(12, 12), seed=0)
for name, stack in params.modules().items():
    print("  %-15s %7d parameters" % (name, stack.num_params))


def report(row):
    print("epoch %d  " % row["epoch"] + "  ".join(
        "%s %.3f" % (k[:-4], v) for k, v in row.items() if k.endswith(".val")))


E.fit(params, train, val, epochs=8, seed=0, on_epoch=report)

decoder = Decoder()
scores = {h: [] for h in params.heads()}
for item in test:
    out = E.ensemble_forward(item.mix, params)
    for head in scores:
        beats = decoder(E.head_activation(out, head, params.variant))
        scores[head].append(f_measure(beats.times, item.beats.times)[2])
for head, vals in scores.items():
    print("%-8s beat F1 %.3f" % (head, np.mean(vals)))
