"""
Evaluation metrics by example
=============================

F-measure with a 70 ms window, the CMLt continuity score and the paired
one-tailed t-test used to compare two systems song by song.

"""

import numpy as np

from drumaware.evaluation import cmlt, f_measure, paired_one_tailed_ttest

ref = [0.5, 1.0, 1.5]
est = [0.51, 1.58]
p, r, f = f_measure(est, ref)
# 0.51 matches 0.5; 1.58 misses 1.5 by 80 ms
print("precision %.3f recall %.3f F1 %.3f" % (p, r, f))

ref = np.arange(11) * 0.5
half = np.arange(21) * 0.25
print("CMLt at the annotated tempo:", cmlt(ref, ref))
print("CMLt at double tempo:       ", cmlt(half, ref))
shifted = ref.copy()
shifted[5] += 0.2
# the displaced beat and its successor lose the continuity condition
print("CMLt with one outlier:       %.4f" % cmlt(shifted, ref))

diffs = [0.1, -0.1, 0.3, 0.2, 0.0]
t, p = paired_one_tailed_ttest(diffs)
print("t = %.3f, one-tailed p = %.3f" % (t, p))
