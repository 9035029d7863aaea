"""Non-backtracking path statistics above and below the spectral threshold.

Above threshold ((d eta)^2 > 4(d-1)) a low-degree dual polynomial refutes the
planted statistics on uniform graphs. Below it the g_eta construction gives a
feasible PSD witness, so the statistic cannot tell the models apart.
"""

from fractions import Fraction

from plantedcut.graphs import sample_esbm, sample_uniform_regular
from plantedcut.nbwalks import path_stats_decide

n = 2000
for d, eta, delta in ((8, Fraction(-3, 4), 0.005), (6, Fraction(-2, 3), 0.2)):
    above = (d * eta) ** 2 > 4 * (d - 1)
    print(f"d={d} eta={eta} ({'above' if above else 'below'} threshold)")
    for name, g in (("uniform", sample_uniform_regular(n, d, seed=0)),
                    ("planted", sample_esbm(n, 2, d, eta, seed=0).graph)):
        r = path_stats_decide(g, 2, float(eta), 2, delta)
        print(f"  {name:8s} verdict {r.verdict} via {r.method}")
