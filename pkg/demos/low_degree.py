"""Low-degree likelihood ratio norms for the spiked Wigner model.

Below lambda = 1 the truncated norm stays bounded as n grows; above it the
value keeps increasing toward a much larger limit.
"""

from plantedcut.lowdeg import ldlr_wigner, spike_prior_pi_k

prior = spike_prior_pi_k(2)
for lam in (0.8, 1.5):
    vals = [ldlr_wigner(lam, prior, n, 20, method="exact").value for n in (50, 100, 200)]
    print(f"lambda={lam}: " + ", ".join(f"{v:.4g}" for v in vals))
