"""
Low-degree likelihood ratio calculations for spiked matrix models.

Spikes are X = U U^T / n where the rows of U are drawn i.i.d. from a finite
prior on R^k with mean zero and unit covariance norm. For the Wigner model
||L^{<=D}||^2 = E exp^{<=D}(lambda^2 n <X, X'> / 2) over independent spikes,
and for the Wishart model it is E sum_{d<=D} r_d(beta X, beta X'), r_d being
the t^d coefficient of det(I - t^2 X X')^{-N/2}.

Also here: Hermite polynomials and the mismatched-variance pairing formula,
the comparison bound for binary observations with its block-model instance,
and the quiet planting of a Wishart sample space into a GOE spectrum.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations, product
from typing import Callable

import numpy as np
from numpy.typing import NDArray
from scipy.special import gammaln, logsumexp

from .errors import ConfigError, RankDeficientSamples, TooLarge
from .graphs import make_rng
from .linalg import series_exp, series_log1p_neg

DEFAULT_TRIALS = 10_000
MIN_MC_TRIALS = 1000
MAX_EXACT_TABLES = 2_000_000
EXP_LOG_SWITCH = 700.0
THRESHOLD_TOL = 1e-10


@dataclass(frozen=True)
class SpikePrior:
    atoms: NDArray[np.float64]  # (m, k)
    probs: NDArray[np.float64]

    def __post_init__(self):
        if abs(self.probs.sum() - 1) > 1e-12 or np.any(self.probs < 0):
            raise ConfigError("probabilities must be nonnegative and sum to 1")
        if np.abs(self.mean).max() > 1e-12:
            raise ConfigError("prior must have mean zero")
        if abs(np.linalg.norm(self.cov, 2) - 1) > 1e-10:
            raise ConfigError("prior covariance must have operator norm 1")

    @property
    def k(self) -> int:
        return self.atoms.shape[1]

    @property
    def mean(self) -> NDArray[np.float64]:
        return self.probs @ self.atoms

    @property
    def cov(self) -> NDArray[np.float64]:
        c = self.atoms - self.mean
        return (c * self.probs[:, None]).T @ c

    def sample_labels(self, n: int, rng) -> NDArray[np.int64]:
        return rng.choice(len(self.probs), size=n, p=self.probs)

    def sample(self, n: int, rng) -> NDArray[np.float64]:
        return self.atoms[self.sample_labels(n, rng)]


def spike_prior_pi_k(k: int) -> SpikePrior:
    """Uniform over sqrt(k) e_i - 1/sqrt(k), i = 1..k."""
    if k < 2:
        raise ConfigError("need k >= 2")
    atoms = math.sqrt(k) * np.eye(k) - 1 / math.sqrt(k)
    return SpikePrior(atoms, np.full(k, 1.0 / k))


@dataclass(frozen=True)
class LdlrEstimate:
    D: int
    value: float
    stderr: float
    method: str
    log_value: float | None = None
    overflow: bool = False
    zero_branch_rate: float = 0.0


# ---------------------------------------------------------------------------
# truncated exponential


def exp_trunc(x: float, D: int) -> float:
    """sum_{d<=D} x^d / d!; beyond |x| = 700 the sum is formed in log space
    and may return inf (see ``exp_trunc_log``)."""
    if D < 0:
        raise ConfigError("D must be nonnegative")
    if x >= EXP_LOG_SWITCH:
        lv = exp_trunc_log(x, D)
        return math.inf if lv > 709.0 else math.exp(lv)
    acc, term = 1.0, 1.0
    for d in range(1, D + 1):
        term *= x / d
        acc += term
    return acc


def exp_trunc_log(x: float, D: int) -> float:
    """log exp^{<=D}(x) for x > 0."""
    if x <= 0:
        raise ConfigError("log form needs x > 0")
    d = np.arange(D + 1)
    return float(logsumexp(d * math.log(x) - gammaln(d + 1)))


def exp_trunc_array(x: NDArray, D: int) -> NDArray[np.float64]:
    x = np.asarray(x, dtype=float)
    acc = np.ones_like(x)
    term = np.ones_like(x)
    for d in range(1, D + 1):
        term = term * x / d
        acc = acc + term
    return acc


# ---------------------------------------------------------------------------
# trial plumbing


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Independent stream per (master seed, trial index)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(trial)]))


def _run_trials(fn: Callable[[np.random.Generator], float], trials: int, seed: int, threads: int = 1) -> NDArray:
    def chunk(lo_hi):
        lo, hi = lo_hi
        return [fn(trial_rng(seed, t)) for t in range(lo, hi)]

    if threads <= 1:
        return np.array(chunk((0, trials)), dtype=float)
    step = -(-trials // threads)
    parts = [(lo, min(trials, lo + step)) for lo in range(0, trials, step)]
    with ThreadPoolExecutor(threads) as ex:
        out = list(ex.map(chunk, parts))
    return np.array([v for part in out for v in part], dtype=float)


def _summarize(vals: NDArray, D: int, method: str, **kw) -> LdlrEstimate:
    m = len(vals)
    se = float(vals.std(ddof=1) / math.sqrt(m)) if m > 1 else 0.0
    return LdlrEstimate(D, float(vals.mean()), se, method, **kw)


# ---------------------------------------------------------------------------
# Wigner


def wigner_overlap(u: NDArray, u2: NDArray) -> float:
    """<X, X'> = ||U^T U'||_F^2 / n^2."""
    n = u.shape[0]
    r = u.T @ u2
    return float(np.sum(r * r)) / n**2


def _compositions(total: int, parts: int):
    # stars and bars, as rows of an array
    out = []
    for bars in combinations(range(total + parts - 1), parts - 1):
        prev, row = -1, []
        for b in bars:
            row.append(b - prev - 1)
            prev = b
        row.append(total + parts - 2 - prev)
        out.append(row)
    return np.array(out, dtype=np.int64).reshape(-1, parts)


def _count_tables(n: int, cells: int) -> int:
    return math.comb(n + cells - 1, cells - 1)


def ldlr_wigner_exact(lam: float, prior: SpikePrior, n: int, D: int) -> LdlrEstimate:
    """Exact value by summing over co-occurrence count tables C (C_ij = number of
    u with labels i under U and j under U'), which determine <X, X'>."""
    m = len(prior.probs)
    cells = m * m
    if _count_tables(n, cells) > MAX_EXACT_TABLES:
        raise TooLarge("too many count tables for exact enumeration")
    tabs = _compositions(n, cells)
    pair_p = np.outer(prior.probs, prior.probs).ravel()
    logw = gammaln(n + 1) - gammaln(tabs + 1).sum(axis=1) + (tabs * np.log(np.where(pair_p > 0, pair_p, 1))).sum(axis=1)
    logw[np.any((tabs > 0) & (pair_p[None, :] == 0), axis=1)] = -np.inf
    a = prior.atoms
    # R = sum_ij C_ij a_i a_j^T
    outer = np.einsum("ia,jb->ijab", a, a).reshape(cells, prior.k, prior.k)
    r = np.tensordot(tabs.astype(float), outer, axes=(1, 0))
    ov = np.sum(r * r, axis=(1, 2)) / n**2
    vals = exp_trunc_array(lam**2 * n / 2 * ov, D)
    return LdlrEstimate(D, float(np.sum(np.exp(logw) * vals)), 0.0, "exact")


def ldlr_wigner(
    lam: float, prior: SpikePrior, n: int, D: int, trials: int = DEFAULT_TRIALS, seed: int = 0,
    method: str = "mc", threads: int = 1,
) -> LdlrEstimate:
    if method == "exact":
        return ldlr_wigner_exact(lam, prior, n, D)
    if method != "mc":
        raise ConfigError("method must be 'mc' or 'exact'")
    if trials < MIN_MC_TRIALS:
        raise ConfigError(f"Monte Carlo needs at least {MIN_MC_TRIALS} trials")
    if lam == 0:
        return LdlrEstimate(D, 1.0, 0.0, "mc")
    scale = lam**2 * n / 2

    def one(rng):
        u, u2 = prior.sample(n, rng), prior.sample(n, rng)
        return scale * wigner_overlap(u, u2)

    args = _run_trials(one, trials, seed, threads)
    if args.max(initial=0) >= EXP_LOG_SWITCH:
        logs = np.array([exp_trunc_log(x, D) if x > 0 else 0.0 for x in args])
        lv = float(logsumexp(logs) - math.log(trials))
        return LdlrEstimate(D, float(np.exp(lv)), float("nan"), "mc", log_value=lv, overflow=True)
    return _summarize(exp_trunc_array(args, D), D, "mc")


# ---------------------------------------------------------------------------
# Wishart


def wishart_rd_det_series(x, x2, N: int, D: int, mu: NDArray | None = None) -> NDArray[np.float64]:
    """r_0..r_D: Taylor coefficients of det(I - t^2 X X')^{-N/2}.

    ``mu`` may pass the eigenvalues of X X' directly (for X = U U^T / n these are
    the eigenvalues of R R^T / n^2 with R = U^T U').
    """
    if mu is None:
        mu = np.linalg.eigvals(np.asarray(x, float) @ np.asarray(x2, float))
        if np.abs(mu.imag).max(initial=0) > 1e-9 * max(1.0, np.abs(mu).max(initial=0)):
            raise ConfigError("X X' has complex eigenvalues")
        mu = mu.real
    return series_exp(series_log1p_neg(mu, N / 2, D)).coeffs


def has_pole(mu: NDArray) -> bool:
    """True if det(I - t^2 X X') vanishes for some t in [0, 1]."""
    return bool(np.any(np.asarray(mu) >= 1))


@lru_cache(maxsize=None)
def _pairings(m: int) -> tuple[tuple[tuple[int, int], ...], ...]:
    if m == 0:
        return ((),)
    if m % 2:
        return ()
    out = []
    for j in range(1, m):
        rest = [t for t in range(1, m) if t != j]
        for p in _pairings(m - 2):
            out.append(((0, j),) + tuple((rest[a], rest[b]) for a, b in p))
    return tuple(out)


def pairings(elems) -> list[list[tuple]]:
    elems = list(elems)
    return [[(elems[a], elems[b]) for a, b in p] for p in _pairings(len(elems))]


@lru_cache(maxsize=None)
def _cycle_types(m: int) -> tuple[tuple[int, ...], ...]:
    # cycle lengths (in edges of one color) of P0 union P over all pairings P
    base = _pairings(m)[0] if m else ()
    mate0 = {}
    for a, b in base:
        mate0[a], mate0[b] = b, a
    out = []
    for p in _pairings(m):
        mate = {}
        for a, b in p:
            mate[a], mate[b] = b, a
        seen, lens = set(), []
        for s in range(m):
            if s in seen:
                continue
            ln, v = 0, s
            while v not in seen:
                seen.add(v)
                w = mate0[v]
                seen.add(w)
                v = mate[w]
                ln += 1
            lens.append(ln)
        out.append(tuple(lens))
    return tuple(out)


def gaussian_inner_moment(x, x2, m: int) -> float:
    """E <x, x'>^m for independent x ~ N(0, X), x' ~ N(0, X'), by Wick pairings.

    Each pair of pairings glues into cycles; a cycle with l pairs from each side
    contributes tr((X X')^l).
    """
    if m % 2:
        return 0.0
    if m == 0:
        return 1.0
    xx = np.asarray(x, float) @ np.asarray(x2, float)
    tr = {}
    p = np.eye(len(xx))
    for ln in range(1, m // 2 + 1):
        p = p @ xx
        tr[ln] = float(np.trace(p))
    per = sum(math.prod(tr[c] for c in cyc) for cyc in _cycle_types(m))
    # every first pairing sees the same multiset of cycle types
    return per * len(_pairings(m))


def wishart_rd_pairing(x, x2, N: int, d: int) -> float:
    """r_d as a sum over even compositions d_1 + ... + d_N = d of
    prod_i E <x, x'>^{d_i} / d_i!."""
    if d > 10 or np.shape(x)[0] > 6:
        raise TooLarge("pairing formula limited to d <= 10 and n <= 6")
    if d % 2:
        return 0.0
    mom = {m: gaussian_inner_moment(x, x2, m) / math.factorial(m) for m in range(0, d + 1, 2)}
    # polynomial in an auxiliary variable: (sum_m mom[m] s^m)^N, coefficient of s^d
    base = np.zeros(d + 1)
    for m, v in mom.items():
        base[m] = v
    acc = np.zeros(d + 1)
    acc[0] = 1.0
    for _ in range(N):
        acc = np.convolve(acc, base)[: d + 1]
    return float(acc[d])


def wishart_n_samples(n: int, gamma: float) -> int:
    if gamma <= 0:
        raise ConfigError("gamma must be positive")
    N = int(round(n / gamma))
    if N < 1:
        raise ConfigError("gamma too large for this n")
    return N


def ldlr_wishart(
    beta: float, gamma: float, prior: SpikePrior, n: int, D: int, trials: int = DEFAULT_TRIALS,
    seed: int = 0, threads: int = 1,
) -> LdlrEstimate:
    """Monte Carlo over spike pairs of sum_{d<=D} r_d(beta X, beta X'); a spike
    with beta X not > -I is replaced by 0."""
    if trials < MIN_MC_TRIALS:
        raise ConfigError(f"Monte Carlo needs at least {MIN_MC_TRIALS} trials")
    if beta <= -1:
        raise ConfigError("need beta > -1")
    N = wishart_n_samples(n, gamma)
    if beta == 0:
        return LdlrEstimate(D, 1.0, 0.0, "mc")
    zeroed = np.zeros(trials, dtype=bool)

    def spike(rng):
        u = prior.sample(n, rng)
        lam_max = np.linalg.eigvalsh(u.T @ u / n)[-1]
        if beta * lam_max <= -1 + THRESHOLD_TOL:
            return None
        return u

    def one(rng):
        u, u2 = spike(rng), spike(rng)
        if u is None or u2 is None:
            return -1.0
        r = u.T @ u2
        mu = beta**2 * np.linalg.eigvalsh(r @ r.T) / n**2
        return float(wishart_rd_det_series(None, None, N, D, mu=mu).sum())

    vals = _run_trials(one, trials, seed, threads)
    zeroed = vals < 0
    vals[zeroed] = 1.0
    return _summarize(vals, D, "mc", zero_branch_rate=float(zeroed.mean()))


# ---------------------------------------------------------------------------
# Hermite polynomials


@lru_cache(maxsize=None)
def _hermite_coeffs(k: int) -> tuple[float, ...]:
    if k == 0:
        return (1.0,)
    prev = np.array(_hermite_coeffs(k - 1))
    shifted = np.concatenate([[0.0], prev])
    der = np.polynomial.polynomial.polyder(prev)
    shifted[: len(der)] -= der
    return tuple(shifted)


def hermite(k: int) -> np.polynomial.Polynomial:
    """Probabilists' h_k via h_{k+1} = y h_k - h_k'."""
    if k < 0:
        raise ConfigError("index must be nonnegative")
    return np.polynomial.Polynomial(_hermite_coeffs(k))


def hermite_multi(alpha) -> Callable[[NDArray], NDArray]:
    """H_alpha(y) = prod_i h_{alpha_i}(y_i), evaluated on rows of y."""
    alpha = tuple(int(a) for a in alpha)
    polys = [hermite(a) for a in alpha]

    def h(y):
        y = np.atleast_2d(y)
        out = np.ones(y.shape[0])
        for i, p in enumerate(polys):
            if alpha[i]:
                out *= p(y[:, i])
        return out

    return h


def hermite_normalized(alpha) -> Callable[[NDArray], NDArray]:
    h = hermite_multi(alpha)
    c = 1 / math.sqrt(math.prod(math.factorial(a) for a in alpha))
    return lambda y: c * h(y)


def mismatched_variance(alpha, x) -> float:
    """Sum over pairings P of the multiset alpha of prod_{(a,b) in P} X[a, b];
    equals E H_alpha(y) for y ~ N(0, I + X) whenever X > -I."""
    alpha = [int(a) for a in alpha]
    x = np.asarray(x, dtype=float)
    if sum(alpha) > 10 or len(alpha) > 4:
        raise TooLarge("pairing sum limited to |alpha| <= 10 and n <= 4")
    elems = [i for i, a in enumerate(alpha) for _ in range(a)]
    if len(elems) % 2:
        return 0.0
    total = 0.0
    for p in _pairings(len(elems)):
        total += math.prod(x[elems[a], elems[b]] for a, b in p)
    return float(total)


def multi_indices(n: int, max_deg: int) -> list[tuple[int, ...]]:
    return [a for a in product(range(max_deg + 1), repeat=n) if sum(a) <= max_deg]


# ---------------------------------------------------------------------------
# binary observations


def binary_compare_bound(
    overlap_sampler: Callable[[np.random.Generator], float], D: int, trials: int = DEFAULT_TRIALS,
    seed: int = 0, threads: int = 1,
) -> LdlrEstimate:
    """Monte Carlo of E sum_{d<=D} <X, X'>^d / d! for a supplied overlap sampler."""
    vals = _run_trials(overlap_sampler, trials, seed, threads)
    return _summarize(exp_trunc_array(vals, D), D, "mc")


def sbm_effective_snr(d: float, eta: float, n: int) -> float:
    """lambda_eff^2 = eta^2 d / (1 - p) with p = d/n."""
    p = d / n
    if not 0 <= p < 1:
        raise ConfigError("need 0 <= d/n < 1")
    return eta**2 * d / (1 - p)


def sbm_overlap(u: NDArray, u2: NDArray, d: float, eta: float) -> float:
    """(eta^2/2)(p/(1-p)) <U U^T, U' U'^T>, diagonal terms included."""
    n = u.shape[0]
    p = d / n
    r = u.T @ u2
    return eta**2 / 2 * p / (1 - p) * float(np.sum(r * r))


def sbm_ldlr_bound(
    k: int, d: float, eta: float, n: int, D: int, trials: int = DEFAULT_TRIALS, seed: int = 0, threads: int = 1
) -> LdlrEstimate:
    prior = spike_prior_pi_k(k)
    sbm_effective_snr(d, eta, n)

    def one(rng):
        return sbm_overlap(prior.sample(n, rng), prior.sample(n, rng), d, eta)

    return binary_compare_bound(one, D, trials, seed, threads)


# ---------------------------------------------------------------------------
# samplers and quiet planting


def sample_goe(n: int, seed=None) -> NDArray[np.float64]:
    """Diagonal N(0, 2/n), off-diagonal N(0, 1/n)."""
    rng = make_rng(seed)
    g = rng.standard_normal((n, n)) / math.sqrt(n)
    return (g + g.T) / math.sqrt(2)


@dataclass(frozen=True)
class SpikedWignerSample:
    Y: NDArray[np.float64]
    lam: float
    mode: str
    X: NDArray[np.float64]


def sample_spiked_wigner(n: int, lam: float, prior: SpikePrior, seed=None, planted: bool = True) -> SpikedWignerSample:
    rng = make_rng(seed)
    w = sample_goe(n, rng)
    if not planted:
        return SpikedWignerSample(w, lam, "null", np.zeros((n, n)))
    u = prior.sample(n, rng)
    x = u @ u.T / n
    return SpikedWignerSample(lam * x + w, lam, "planted", x)


@dataclass(frozen=True)
class WishartSample:
    y: NDArray[np.float64]  # (N, n)
    beta: float
    gamma_target: float
    X: NDArray[np.float64]
    U: NDArray[np.float64] | None

    @property
    def gamma_realized(self) -> float:
        return self.y.shape[1] / self.y.shape[0]


def sample_wishart(n: int, beta: float, gamma: float, prior: SpikePrior, seed=None, planted: bool = True) -> WishartSample:
    if beta <= -1:
        raise ConfigError("need beta > -1")
    rng = make_rng(seed)
    N = wishart_n_samples(n, gamma)
    z = rng.standard_normal((N, n))
    if not planted:
        return WishartSample(z, beta, gamma, np.zeros((n, n)), None)
    u = prior.sample(n, rng)
    xt = u @ u.T / n
    lam_min = np.linalg.eigvalsh(beta * (u.T @ u) / n)[0]
    if min(lam_min, 0.0) <= -1 + THRESHOLD_TOL:
        return WishartSample(z, beta, gamma, np.zeros((n, n)), u)
    # covariance I + beta X; X = U U^T / n has rank <= k
    q, rr = np.linalg.qr(u)
    m = np.eye(u.shape[1]) + beta * (rr @ rr.T) / n
    lm, vm = np.linalg.eigh(m)
    root = vm @ np.diag(np.sqrt(lm)) @ vm.T
    coef = z @ q
    y = z + (coef @ (root - np.eye(len(root)))) @ q.T
    return WishartSample(y, beta, gamma, xt, u)


def haar_orthogonal(m: int, rng) -> NDArray[np.float64]:
    z = rng.standard_normal((m, m))
    q, r = np.linalg.qr(z)
    return q * np.sign(np.diag(r))[None, :]


def quiet_wishart_plant(samples: WishartSample, seed=None) -> NDArray[np.float64]:
    """GOE spectrum placed so its top N eigenvalues live on the sample span."""
    rng = make_rng(seed)
    y = samples.y
    N, n = y.shape
    if N >= n:
        raise ConfigError("need fewer samples than dimensions")
    lam = np.linalg.eigvalsh(sample_goe(n, rng))
    q, r = np.linalg.qr(y.T, mode="complete")
    if np.sum(np.abs(np.diag(r)) > 1e-10 * max(1.0, np.abs(r).max())) < N:
        raise RankDeficientSamples("samples span fewer than N dimensions")
    span = q[:, :N] @ haar_orthogonal(N, rng)
    comp = q[:, N:] @ haar_orthogonal(n - N, rng)
    v = np.concatenate([comp, span], axis=1)
    return (v * lam[None, :]) @ v.T


def semicircle_cdf(x) -> NDArray[np.float64]:
    x = np.clip(np.asarray(x, dtype=float), -2, 2)
    return 0.5 + x * np.sqrt(4 - x * x) / (4 * math.pi) + np.arcsin(x / 2) / math.pi


def semicircle_ks(eigs) -> float:
    """Kolmogorov distance between the empirical CDF and the semicircle on [-2, 2]."""
    e = np.sort(np.asarray(eigs, dtype=float))
    n = len(e)
    f = semicircle_cdf(e)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))


def partition_witness(u: NDArray, w: NDArray, k: int) -> float:
    """-<U U^T, W>/(k-1); U U^T/(k-1) is a partition matrix for pi_k spikes."""
    return -float(np.sum((u @ u.T) * w)) / (k - 1)
