"""Belief propagation around the uninformative fixed point.

For 4-colorings (a=0) the perturbation grows once b exceeds 6 + sqrt(32).
We print the measured log growth rate next to the linear prediction.
"""

from fractions import Fraction

from plantedcut.bp import BPParams, stability_experiment, threshold_report
from plantedcut.graphs import sample_esbm

k, n = 4, 4000
for b in (8, 11, 12, 15):
    p = BPParams(k, 0, b)
    lg = sample_esbm(n, k, p.d, Fraction(-1, k - 1), seed=b)
    r = stability_experiment(p, lg.graph, T=20, seed=1)
    tr = threshold_report(0, b, k)
    print(f"b={b:2d} d={p.d}: rate {r.rate:+.3f} (predicted {r.predicted_rate:+.3f}) "
          f"unstable={r.unstable} linear-theory unstable={tr.unstable}")
