"""
Max-k-cut objectives and certificates.

For a labeling sigma with k colors the partition matrix has entries 1 on
same-color pairs and -1/(k-1) elsewhere. Gamma_k(A) is the largest value of
<P, -A> over partition matrices, and the largest fractional k-cut of a graph
with |E| edges is MC_k = (k-1)/k * (1 + Gamma_k / (2|E|)).

The Hoffman certificate bounds Gamma_k by -lambda_min(A) * n, because
A - lambda_min I is PSD and so is every partition matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numba
import numpy as np
from numpy.typing import NDArray

from .errors import ConfigError, EmptyGraph, TooLarge
from .graphs import Graph, LabeledGraph, RegularGraph
from .linalg import eigh_dense, extreme_eigs_sparse

TWO_P_STAR = 1.526  # ground-state constant for k=2, used only as a reference line
MAX_EXACT_N = 20
# absolute slack used when comparing a float certificate with an exact value
SOUNDNESS_TOL = 1e-6


@dataclass(frozen=True)
class CertBound:
    """Upper bound on Gamma_k together with the matching MC_k bound."""

    value: float
    mc_bound: float | Fraction
    method: str
    witness: object = None
    sound: bool = True


@dataclass(frozen=True)
class PartitionMatrix:
    sigma: NDArray[np.int64]
    k: int

    @property
    def n(self) -> int:
        return len(self.sigma)

    def entry(self, i: int, j: int) -> float:
        return 1.0 if self.sigma[i] == self.sigma[j] else -1.0 / (self.k - 1)

    def dense(self) -> NDArray[np.float64]:
        same = self.sigma[:, None] == self.sigma[None, :]
        return np.where(same, 1.0, -1.0 / (self.k - 1))

    def inner_neg(self, a: NDArray) -> float:
        """<P, -A> computed without materializing P."""
        return gamma_of_labeling(a, self.sigma, self.k)


def partition_matrix(sigma, k: int) -> PartitionMatrix:
    s = np.asarray(sigma, dtype=np.int64)
    if k < 2:
        raise ConfigError("k must be at least 2")
    if len(s) and (s.min() < 0 or s.max() >= k):
        raise ConfigError("labels must lie in 0..k-1")
    return PartitionMatrix(s, k)


def _weights(a) -> NDArray[np.float64]:
    if isinstance(a, LabeledGraph):
        a = a.graph
    if isinstance(a, Graph):
        return a.to_dense(dtype=float)
    m = np.asarray(a, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ConfigError("matrix must be square")
    if not np.allclose(m, m.T, rtol=0, atol=1e-12 * max(1.0, np.abs(m).max(initial=0))):
        raise ConfigError("matrix is not symmetric")
    return m


def gamma_of_labeling(a, sigma, k: int) -> float:
    """<P^(sigma), -A> = T/(k-1) - k/(k-1) * Same, T the total weight and Same
    the weight on ordered same-color pairs (diagonal included)."""
    m = _weights(a)
    s = np.asarray(sigma)
    same = float(m[s[:, None] == s[None, :]].sum())
    return (m.sum() - k * same) / (k - 1)


@numba.njit(cache=True)
def _min_same(w, k, neg_tail):
    # depth-first over restricted-growth labelings (label 0 for vertex 0, a new
    # label only one above the largest used so far), minimizing the weight on
    # same-color unordered pairs; neg_tail[v] bounds what vertices >= v can
    # still subtract
    n = w.shape[0]
    lab = np.zeros(n, np.int64)
    best_lab = np.zeros(n, np.int64)
    best = np.inf
    cost = np.zeros(n + 1)
    used = np.zeros(n + 1, np.int64)
    nxt = np.zeros(n, np.int64)
    v = 1
    used[1] = 1
    if n == 1:
        return 0.0, best_lab
    nxt[1] = 0
    while v >= 1:
        c = nxt[v]
        lim = min(used[v] + 1, k)
        if c >= lim:
            nxt[v] = 0
            v -= 1
            continue
        nxt[v] = c + 1
        lab[v] = c
        add = 0.0
        for u in range(v):
            if lab[u] == c:
                add += w[u, v]
        cv = cost[v] + add
        if cv + neg_tail[v + 1 if v + 1 <= n else n] >= best:
            continue
        if v == n - 1:
            best = cv
            best_lab[:] = lab
            continue
        cost[v + 1] = cv
        used[v + 1] = max(used[v], c + 1)
        v += 1
        nxt[v] = 0
    return best, best_lab


def gamma_k_exact(a, k: int) -> CertBound:
    """Exact Gamma_k by branch and bound over labelings modulo color permutations."""
    m = _weights(a)
    n = m.shape[0]
    if n > MAX_EXACT_N:
        raise TooLarge(f"exact enumeration limited to n <= {MAX_EXACT_N}")
    if k < 2:
        raise ConfigError("k must be at least 2")
    total = float(m.sum())
    diag = float(np.trace(m))
    edges_w = (total - diag) / 2
    if n == 0:
        return CertBound(0.0, Fraction(k - 1, k), "exact", np.zeros(0, np.int64))
    # neg_tail[v]: sum of negative weights on pairs whose later endpoint is >= v
    neg = np.minimum(np.triu(m, 1), 0.0)
    col_neg = neg.sum(axis=0)
    neg_tail = np.concatenate([np.cumsum(col_neg[::-1])[::-1], [0.0]])
    same_upper, lab = _min_same(np.ascontiguousarray(m), k, neg_tail)
    same = 2 * same_upper + diag
    value = (total - k * same) / (k - 1)
    mc = mc_k_from_gamma(value, edges_w, k) if edges_w > 0 else Fraction(k - 1, k)
    return CertBound(float(value), mc, "exact", lab.copy())


def mc_k_from_gamma(gamma, edge_count, k: int) -> float | Fraction:
    """(k-1)/k * (1 + gamma / (2|E|)), exact when the inputs are integral."""
    if edge_count <= 0:
        raise EmptyGraph("graph has no edges")
    gq = gamma if isinstance(gamma, Fraction) else _rational(gamma, k)
    if gq is not None and float(edge_count).is_integer():
        return Fraction(k - 1, k) * (1 + gq / (2 * int(edge_count)))
    return (k - 1) / k * (1 + float(gamma) / (2 * float(edge_count)))


def _rational(x, k: int) -> Fraction | None:
    # Gamma of an integer matrix is an integer multiple of 1/(k-1)
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    y = float(x) * (k - 1)
    if abs(y - round(y)) < 1e-9:
        return Fraction(int(round(y)), k - 1)
    return None


def is_k_colorable(g: Graph, k: int) -> bool:
    """Direct backtracking coloring search (oracle for small graphs)."""
    n = g.n
    col = [-1] * n
    nbrs = [g.neighbors(u).tolist() for u in range(n)]

    def go(v):
        if v == n:
            return True
        top = max(col[:v], default=-1)
        for c in range(min(top + 2, k)):
            if all(col[u] != c for u in nbrs[v] if u < v):
                col[v] = c
                if go(v + 1):
                    return True
        col[v] = -1
        return False

    return go(0)


def hoffman_certificate(g: RegularGraph, k: int, seed: int = 0) -> CertBound:
    """Gamma_k <= -lambda_min n and MC_k <= (k-1)/k (1 - lambda_min / d)."""
    if not isinstance(g, RegularGraph):
        raise ConfigError("Hoffman certificate needs a regular graph")
    if k < 2:
        raise ConfigError("k must be at least 2")
    if g.num_edges == 0:
        raise EmptyGraph("graph has no edges")
    lam, _ = extreme_eigs_sparse(g, which="min", seed=seed)
    return CertBound(-lam * g.n, (k - 1) / k * (1 - lam / g.d), "hoffman", lam)


def psd_gap(sigma, k: int, a) -> float:
    """<P, A - lambda_min I>, nonnegative for every partition matrix."""
    m = _weights(a)
    lam = eigh_dense(m).eigenvalues[0]
    p = partition_matrix(sigma, k).dense()
    return float((p * (m - lam * np.eye(len(m)))).sum())


def planted_witness_value(lg: LabeledGraph) -> Fraction:
    """<P^(sigma), -A> as an exact rational."""
    e = lg.graph.edges()
    same = int(np.count_nonzero(lg.sigma[e[:, 0]] == lg.sigma[e[:, 1]]))
    total = 2 * len(e)
    return Fraction(total - lg.k * 2 * same, lg.k - 1)


def detection_threshold(k: int, eta: float, eps: float) -> float:
    return (k - 1) / k * (1 + abs(eta) - eps)


def default_noise(d: int, k: int, eps: float) -> float:
    """Noise level delta = d eps (k-1) / (5k), small enough that swaps cannot
    push the planted cut below the detection threshold."""
    return d * eps * (k - 1) / (5 * k)


def detect_via_certifier(
    g: RegularGraph,
    k: int,
    eta: float,
    eps: float,
    certifier: Callable[[RegularGraph, int], CertBound] | None = None,
) -> str:
    """'Q' when the certified MC_k bound falls at or below the planted level
    minus eps, otherwise 'P'."""
    cert = (certifier or hoffman_certificate)(g, k)
    return "Q" if float(cert.mc_bound) <= detection_threshold(k, eta, eps) else "P"


@dataclass(frozen=True)
class ComparisonRow:
    n: int
    d: int
    k: int
    hoffman_mc: float
    exact_mc: float | None
    grid_etas: list = field(default_factory=list)
    grid_lines: list = field(default_factory=list)
    spectral_line: float = 0.0
    reference_k2: float | None = None


def admissible_etas(k: int, d: int) -> list[Fraction]:
    """Negative eta in [-1/(k-1), 0) at which the eSBM block degrees are integers."""
    out = []
    for off in range(d // k + 1, d // (k - 1) + 1):
        diag = d - (k - 1) * off
        if diag < 0:
            continue
        eta = Fraction(diag - off, d)
        if eta < 0:
            out.append(eta)
    return sorted(set(out))


def spectral_eta(d: int) -> float:
    return 2 * math.sqrt(d - 1) / d


def compare_row(g: RegularGraph, k: int, seed: int = 0) -> ComparisonRow:
    h = hoffman_certificate(g, k, seed=seed)
    exact = float(gamma_k_exact(g, k).mc_bound) if g.n <= 14 else None
    etas = admissible_etas(k, g.d)
    lines = [(k - 1) / k * (1 + abs(float(e))) for e in etas]
    ref = 0.5 * (1 + TWO_P_STAR / math.sqrt(g.d)) if k == 2 else None
    return ComparisonRow(
        g.n, g.d, k, float(h.mc_bound), exact, [str(e) for e in etas], lines,
        (k - 1) / k * (1 + spectral_eta(g.d)), ref,
    )
