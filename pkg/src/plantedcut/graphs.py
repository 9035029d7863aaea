"""
Graph samplers for the null and planted models.

Uniform random d-regular graphs come from the configuration model. The
equitable stochastic block model (eSBM) plants a balanced k-labeling in which
every vertex of color i has exactly ``dM[i, j]`` neighbors of color j; it is
assembled from independent regular and biregular blocks. Swap noise performs
degree-preserving double-edge swaps, and ``sample_sbm_er`` draws the sparse
Erdos-Renyi style block model with independent edges.
"""

from __future__ import annotations

import io
import math
import os
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, TextIO

import numpy as np
from numpy.typing import NDArray

from .errors import (
    ConfigError,
    EmptyGraph,
    IntegralityViolation,
    ParityViolation,
    ProbabilityOutOfRange,
    RetryExhausted,
)

RETRY_CAP = 1000
# below this acceptance probability whole-sample rejection is hopeless
MIN_REJECTION_ACCEPTANCE = 0.02


def make_rng(seed: int | np.random.Generator | None) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is not None and (int(seed) < 0 or int(seed) >= 2**64):
        raise ConfigError("seed must be a 64-bit unsigned integer")
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class Graph:
    """Simple undirected graph in CSR form with sorted neighbor lists."""

    n: int
    indptr: NDArray[np.int64]
    indices: NDArray[np.int64]

    @classmethod
    def from_edges(cls, n: int, edges: NDArray | Iterable) -> "Graph":
        e = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges, dtype=np.int64)
        e = e.reshape(-1, 2)
        if len(e) and (e.min() < 0 or e.max() >= n):
            raise ConfigError("edge endpoint out of range")
        if np.any(e[:, 0] == e[:, 1]):
            raise ConfigError("self-loop")
        both = np.concatenate([e, e[:, ::-1]])
        order = np.lexsort((both[:, 1], both[:, 0]))
        both = both[order]
        if len(both) > 1 and np.any(np.all(both[1:] == both[:-1], axis=1)):
            raise ConfigError("duplicate edge")
        counts = np.bincount(both[:, 0], minlength=n)
        indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        return cls(n, indptr, both[:, 1].copy())

    @property
    def degrees(self) -> NDArray[np.int64]:
        return np.diff(self.indptr)

    @property
    def num_edges(self) -> int:
        return len(self.indices) // 2

    def neighbors(self, u: int) -> NDArray[np.int64]:
        return self.indices[self.indptr[u] : self.indptr[u + 1]]

    def has_edge(self, u: int, v: int) -> bool:
        nb = self.neighbors(u)
        i = np.searchsorted(nb, v)
        return bool(i < len(nb) and nb[i] == v)

    def edges(self) -> NDArray[np.int64]:
        """Edge list with u < v, lexicographically sorted."""
        src = np.repeat(np.arange(self.n), self.degrees)
        mask = src < self.indices
        return np.stack([src[mask], self.indices[mask]], axis=1)

    def matvec(self, x: NDArray) -> NDArray:
        x = np.asarray(x, dtype=float)
        if len(self.indices) == 0:
            return np.zeros_like(x)
        sums = np.add.reduceat(x[self.indices], self.indptr[:-1], axis=0)
        # reduceat misbehaves on empty rows
        sums[self.degrees == 0] = 0.0
        return sums

    def to_dense(self, dtype=np.int64) -> NDArray:
        a = np.zeros((self.n, self.n), dtype=dtype)
        src = np.repeat(np.arange(self.n), self.degrees)
        a[src, self.indices] = 1
        return a

    def to_sparse(self):
        import scipy.sparse as sp

        data = np.ones(len(self.indices))
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))

    def check_simple(self) -> None:
        src = np.repeat(np.arange(self.n), self.degrees)
        if np.any(src == self.indices):
            raise ConfigError("self-loop")
        for u in range(self.n):
            nb = self.neighbors(u)
            if np.any(np.diff(nb) <= 0):
                raise ConfigError(f"neighbor list of {u} not strictly increasing")
        key = src * self.n + self.indices
        rkey = self.indices * self.n + src
        if not np.array_equal(np.sort(key), np.sort(rkey)):
            raise ConfigError("adjacency not symmetric")


@dataclass(frozen=True)
class RegularGraph(Graph):
    """Simple d-regular graph; ``nbrs`` is the n x d array of sorted neighbors."""

    d: int = 0
    nbrs: NDArray[np.int64] = field(default=None, repr=False, compare=False)  # type: ignore[assignment]

    @classmethod
    def from_graph(cls, g: Graph, d: int | None = None) -> "RegularGraph":
        deg = g.degrees
        if d is None:
            d = int(deg[0]) if g.n else 0
        if np.any(deg != d):
            raise ConfigError("graph is not regular")
        if (g.n * d) % 2:
            raise ParityViolation("n*d must be even")
        nbrs = g.indices.reshape(g.n, d) if g.n else np.zeros((0, d), np.int64)
        return cls(g.n, g.indptr, g.indices, d, nbrs)

    @classmethod
    def from_edges(cls, n: int, edges, d: int | None = None) -> "RegularGraph":  # type: ignore[override]
        return cls.from_graph(Graph.from_edges(n, edges), d)

    def matvec(self, x: NDArray) -> NDArray:
        return np.asarray(x, dtype=float)[self.nbrs].sum(axis=1)


@dataclass(frozen=True)
class LabeledGraph:
    """A graph together with a k-labeling ``sigma`` (values in 0..k-1)."""

    graph: Graph
    sigma: NDArray[np.int64]
    k: int

    def __post_init__(self):
        if len(self.sigma) != self.graph.n:
            raise ConfigError("labeling length differs from vertex count")
        if len(self.sigma) and (self.sigma.min() < 0 or self.sigma.max() >= self.k):
            raise ConfigError("labels out of range")

    def is_balanced(self) -> bool:
        n, k = self.graph.n, self.k
        return n % k == 0 and bool(np.all(np.bincount(self.sigma, minlength=k) == n // k))

    def color_profile(self) -> NDArray[np.int64]:
        """Matrix C with C[u, j] = number of neighbors of u with color j."""
        g = self.graph
        src = np.repeat(np.arange(g.n), g.degrees)
        c = np.zeros((g.n, self.k), dtype=np.int64)
        np.add.at(c, (src, self.sigma[g.indices]), 1)
        return c


@dataclass(frozen=True)
class BlockDegreeMatrix:
    k: int
    entries: NDArray[np.int64]
    d: int
    eta: float

    @property
    def diag(self) -> int:
        return int(self.entries[0, 0])

    @property
    def off(self) -> int:
        return int(self.entries[0, 1]) if self.k > 1 else 0


def _as_int(x: float, what: str) -> int:
    r = round(x)
    if abs(x - r) > 1e-9 * max(1.0, abs(x)):
        raise IntegralityViolation(f"{what} = {x} is not an integer")
    return int(r)


def block_degree_matrix(k: int, d: int, eta: float | Fraction) -> BlockDegreeMatrix:
    """dM = d (eta I + (1 - eta)/k J) as a nonnegative integer matrix."""
    if k < 2 or d < 1:
        raise ConfigError("need k >= 2 and d >= 1")
    eta_f = float(eta)
    if eta_f < -1.0 / (k - 1) - 1e-12 or eta_f > 1 + 1e-12:
        raise ConfigError("eta must lie in [-1/(k-1), 1]")
    if isinstance(eta, Fraction):
        off_q = d * (1 - eta) / k
        diag_q = d * eta + off_q
        if off_q.denominator != 1 or diag_q.denominator != 1:
            raise IntegralityViolation("block degrees are not integers")
        off, diag = int(off_q), int(diag_q)
    else:
        off = _as_int(d * (1 - eta_f) / k, "d(1-eta)/k")
        diag = _as_int(d * eta_f + d * (1 - eta_f) / k, "d(eta + (1-eta)/k)")
    if off < 0 or diag < 0:
        raise IntegralityViolation("negative block degree")
    m = np.full((k, k), off, dtype=np.int64)
    np.fill_diagonal(m, diag)
    return BlockDegreeMatrix(k, m, d, eta_f)


def eta_from_counts(k: int, a: int, b: int) -> Fraction:
    """Signal eta of the eSBM with a same-color and b cross-color neighbors."""
    d = a + b * (k - 1)
    return Fraction(a - b, d)


# ---------------------------------------------------------------------------
# configuration model


def _pairs_simple(lo: NDArray, hi: NDArray, n: int) -> bool:
    if np.any(lo == hi):
        return False
    key = np.minimum(lo, hi) * n + np.maximum(lo, hi)
    return len(np.unique(key)) == len(key)


def _rejection(stubs_a: NDArray, stubs_b: NDArray | None, n: int, rng, cap: int) -> NDArray | None:
    for _ in range(cap):
        if stubs_b is None:
            s = rng.permutation(stubs_a)
            lo, hi = s[0::2], s[1::2]
        else:
            lo, hi = stubs_a, rng.permutation(stubs_b)
        if _pairs_simple(lo, hi, n):
            return np.stack([np.minimum(lo, hi), np.maximum(lo, hi)], axis=1)
    return None


def _sequential(stubs_a: NDArray, stubs_b: NDArray | None, n: int, rng, cap: int, stall: int = 50) -> NDArray | None:
    # shuffle, keep every admissible pair, retry the leftovers
    for _ in range(cap):
        keys = np.zeros(0, dtype=np.int64)
        ra, rb = stubs_a, stubs_b
        stuck = 0
        while len(ra):
            if rb is None:
                s = rng.permutation(ra)
                lo, hi = s[0::2], s[1::2]
            else:
                lo, hi = ra, rng.permutation(rb)
            key = np.minimum(lo, hi) * n + np.maximum(lo, hi)
            ok = (lo != hi) & ~np.isin(key, keys)
            _, first = np.unique(key, return_index=True)
            firstmask = np.zeros(len(key), bool)
            firstmask[first] = True
            ok &= firstmask
            if not ok.any():
                stuck += 1
                if stuck > stall:
                    break
                continue
            stuck = 0
            keys = np.union1d(keys, key[ok])
            if rb is None:
                ra = np.concatenate([lo[~ok], hi[~ok]])
            else:
                ra, rb = lo[~ok], hi[~ok]
        else:
            return np.stack([keys // n, keys % n], axis=1)
    return None


def _pair(stubs_a, stubs_b, n, rng, log_accept: float, method: str) -> NDArray:
    if method not in ("auto", "rejection", "sequential"):
        raise ConfigError(f"unknown sampling method {method!r}")
    use_rej = method == "rejection" or (method == "auto" and log_accept >= math.log(MIN_REJECTION_ACCEPTANCE))
    edges = (_rejection if use_rej else _sequential)(stubs_a, stubs_b, n, rng, RETRY_CAP)
    if edges is None:
        raise RetryExhausted(f"no simple graph after {RETRY_CAP} attempts")
    return edges


def _regular_edges(vertices: NDArray, d: int, rng, method: str) -> NDArray:
    m = len(vertices)
    if d == 0:
        return np.zeros((0, 2), np.int64)
    if (m * d) % 2:
        raise ParityViolation("vertex count times degree must be even")
    if d >= m:
        raise ConfigError("need d < n")
    local = _pair(np.repeat(np.arange(m), d), None, m, rng, -(d * d - 1) / 4, method)
    return vertices[local]


def _biregular_edges(left: NDArray, right: NDArray, d: int, rng, method: str) -> NDArray:
    if d == 0:
        return np.zeros((0, 2), np.int64)
    m = len(left)
    if d > m or len(right) != m:
        raise ConfigError("biregular block infeasible")
    # right side vertices offset by m to share one key space
    local = _pair(np.repeat(np.arange(m), d), np.repeat(np.arange(m, 2 * m), d), 2 * m, rng,
                  -((d - 1) ** 2) / 2, method)
    return np.stack([left[local[:, 0]], right[local[:, 1] - m]], axis=1)


def sample_uniform_regular(n: int, d: int, seed=None, method: str = "auto") -> RegularGraph:
    """Random simple d-regular graph on n vertices (configuration model).

    ``method="rejection"`` resamples the whole stub matching until it is simple,
    which is exactly uniform. ``"sequential"`` keeps admissible pairs and rematches
    the rest, which is asymptotically uniform for fixed d. ``"auto"`` uses
    rejection whenever its acceptance rate exp(-(d^2-1)/4) is reasonable.
    """
    if n <= 0 or d < 0:
        raise ConfigError("need n > 0, d >= 0")
    if (n * d) % 2:
        raise ParityViolation("n*d must be even")
    if d >= n:
        raise ConfigError("need d < n")
    rng = make_rng(seed)
    e = _regular_edges(np.arange(n), d, rng, method)
    return RegularGraph.from_edges(n, e, d)


def balanced_partition(n: int, k: int, rng) -> NDArray[np.int64]:
    if n % k:
        raise ConfigError(f"k={k} does not divide n={n}")
    return rng.permutation(np.repeat(np.arange(k), n // k))


def sample_esbm(n: int, k: int, d: int, eta, seed=None, method: str = "auto") -> LabeledGraph:
    """Equitable SBM: each color-i vertex has exactly dM[i, j] neighbors of color j."""
    if n % k:
        raise ConfigError(f"k={k} does not divide n={n}")
    dm = block_degree_matrix(k, d, eta)
    m = n // k
    if (dm.diag * m) % 2:
        raise ParityViolation("dM_ii * n/k must be even")
    if dm.diag >= m and dm.diag > 0:
        raise ConfigError("within-class degree too large for class size")
    rng = make_rng(seed)
    sigma = balanced_partition(n, k, rng)
    classes = [np.flatnonzero(sigma == i) for i in range(k)]
    parts = []
    for i in range(k):
        parts.append(_regular_edges(classes[i], dm.diag, rng, method))
        for j in range(i + 1, k):
            parts.append(_biregular_edges(classes[i], classes[j], dm.off, rng, method))
    e = np.concatenate(parts) if parts else np.zeros((0, 2), np.int64)
    return LabeledGraph(RegularGraph.from_edges(n, e, d), sigma, k)


def sample_sbm_er(n: int, k: int, d: float, eta: float, seed=None, planted: bool = True) -> LabeledGraph:
    """Sparse SBM with i.i.d. labels; null mode (planted=False) is G(n, d/n)."""
    p_in = (1 + (k - 1) * eta) * d / n
    p_out = (1 - eta) * d / n
    for p in (p_in, p_out, d / n):
        if not 0.0 <= p <= 1.0:
            raise ProbabilityOutOfRange(f"edge probability {p} outside [0, 1]")
    rng = make_rng(seed)
    sigma = rng.integers(0, k, size=n)
    iu, ju = np.triu_indices(n, 1)
    u = rng.random(len(iu))
    if planted:
        p = np.where(sigma[iu] == sigma[ju], p_in, p_out)
    else:
        p = d / n
    keep = u < p
    return LabeledGraph(Graph.from_edges(n, np.stack([iu[keep], ju[keep]], axis=1)), sigma, k)


def apply_swap_noise(g: RegularGraph, delta: float, seed=None, cap: int = 100_000) -> RegularGraph:
    """Apply floor(delta n) sequential double-edge swaps.

    Each swap draws an ordered pair of oriented edges (i,j), (k,l) uniformly,
    conditioned on i != k, j != l, (i,k) and (j,l) not edges, and replaces
    {i,j}, {k,l} with {i,k}, {j,l}. Vertex coincidences such as i == l are
    allowed when the four conditions hold.
    """
    if delta < 0:
        raise ConfigError("delta must be nonnegative")
    swaps = int(math.floor(delta * g.n))
    if swaps == 0:
        return g
    rng = make_rng(seed)
    adj = [set(map(int, g.neighbors(u))) for u in range(g.n)]
    nb = [sorted(s) for s in adj]
    for _ in range(swaps):
        for _try in range(cap):
            i, k_ = (int(x) for x in rng.integers(0, g.n, size=2))
            a, b = (int(x) for x in rng.integers(0, g.d, size=2))
            j, l = nb[i][a], nb[k_][b]
            if {i, j} == {k_, l}:
                continue
            if i == k_ or j == l or k_ in adj[i] or l in adj[j]:
                continue
            break
        else:
            raise RetryExhausted("no admissible swap found")
        for x, y in ((i, j), (k_, l)):
            adj[x].discard(y)
            adj[y].discard(x)
        for x, y in ((i, k_), (j, l)):
            adj[x].add(y)
            adj[y].add(x)
        for x in {i, j, k_, l}:
            nb[x] = sorted(adj[x])
    e = [(u, v) for u in range(g.n) for v in nb[u] if u < v]
    return RegularGraph.from_edges(g.n, e, g.d)


def planted_cut_fraction(lg: LabeledGraph) -> Fraction:
    """Fraction of edges whose endpoints carry different labels."""
    e = lg.graph.edges()
    if len(e) == 0:
        raise EmptyGraph("graph has no edges")
    bi = int(np.count_nonzero(lg.sigma[e[:, 0]] != lg.sigma[e[:, 1]]))
    return Fraction(bi, len(e))


def centered_color_vectors(lg: LabeledGraph) -> NDArray[np.float64]:
    """Columns v_i = sqrt(k) 1[sigma = i] - 1/sqrt(k)."""
    k = lg.k
    ind = (lg.sigma[:, None] == np.arange(k)[None, :]).astype(float)
    return math.sqrt(k) * ind - 1 / math.sqrt(k)


def spectral_planting_residual(lg: LabeledGraph) -> int:
    """max_i ||A x_i - (dM x)_i||_inf with x_i = k 1[sigma=i] - 1, in integers.

    Zero iff every centered color indicator is an exact eigenvector with
    eigenvalue d * eta (the integer vector is sqrt(k) times v_i).
    """
    g = lg.graph
    if not isinstance(g, RegularGraph):
        raise ConfigError("needs a regular graph")
    k = lg.k
    dm = block_degree_matrix(k, g.d, _eta_of(lg))
    lam_num = int(dm.diag - dm.off)  # d * eta
    worst = 0
    for i in range(k):
        x = np.where(lg.sigma == i, k - 1, -1).astype(np.int64)
        ax = x[g.nbrs].sum(axis=1)
        worst = max(worst, int(np.abs(ax - lam_num * x).max()))
    return worst


def _eta_of(lg: LabeledGraph) -> Fraction:
    prof = lg.color_profile()
    same = int(prof[0, lg.sigma[0]])
    d = int(prof[0].sum())
    return Fraction(lg.k * same - d, d * (lg.k - 1))


# ---------------------------------------------------------------------------
# text serialization


def write_graph(g: Graph | LabeledGraph, out: str | os.PathLike | TextIO) -> None:
    lg = g if isinstance(g, LabeledGraph) else None
    gr = lg.graph if lg is not None else g
    deg = gr.d if isinstance(gr, RegularGraph) else int(gr.degrees.max(initial=0))
    buf = io.StringIO()
    buf.write(f"{gr.n} {deg}\n")
    for u, v in gr.edges():
        buf.write(f"{u} {v}\n")
    if lg is not None:
        buf.write("labels: " + " ".join(map(str, lg.sigma.tolist())) + "\n")
    text = buf.getvalue()
    if hasattr(out, "write"):
        out.write(text)  # type: ignore[union-attr]
    else:
        with open(out, "w", newline="\n") as fh:
            fh.write(text)


def read_graph(src: str | os.PathLike | TextIO, k: int | None = None) -> Graph | LabeledGraph:
    text = src.read() if hasattr(src, "read") else open(src).read()  # type: ignore[union-attr]
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    n, d = (int(x) for x in lines[0].split())
    edges, labels = [], None
    for ln in lines[1:]:
        if ln.startswith("labels:"):
            labels = np.array([int(x) for x in ln[len("labels:"):].split()], dtype=np.int64)
        else:
            u, v = (int(x) for x in ln.split())
            edges.append((u, v))
    g = Graph.from_edges(n, np.array(edges, dtype=np.int64).reshape(-1, 2))
    if np.all(g.degrees == d):
        g = RegularGraph.from_graph(g, d)
    if labels is None:
        return g
    return LabeledGraph(g, labels, k if k is not None else int(labels.max()) + 1)
