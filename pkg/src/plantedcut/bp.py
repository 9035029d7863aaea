"""
Belief propagation for the equitable coloring and equitable block models.

Messages live on directed edges. ``msgs[v, j, r, s]`` is the estimated
probability that ``u = nbrs[v, j]`` has color r and v has color s, i.e. the
message u -> v. The coloring model is the block model with a = 0 (same-color
pairs then carry zero mass), so one exact update serves both.

The count-constrained sums over colorings of v's other neighbors are
coefficients of a product of linear forms. They are computed by dynamic
programming over count profiles, with prefix and suffix products so that
leaving out each outgoing neighbor costs one inner product.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np
from numpy.typing import NDArray

from .errors import ConfigError, DegenerateMessage
from .graphs import RegularGraph, make_rng


@dataclass(frozen=True)
class BPParams:
    k: int
    a: int
    b: int

    def __post_init__(self):
        if self.k < 2 or self.a < 0 or self.b < 0:
            raise ConfigError("need k >= 2 and a, b >= 0")
        if self.d < 2:
            raise ConfigError("degree must be at least 2")

    @property
    def d(self) -> int:
        return self.a + self.b * (self.k - 1)

    @property
    def lam(self) -> float:
        return (self.a - self.b) / self.d

    def weights(self) -> NDArray[np.float64]:
        w = np.full((self.k, self.k), float(self.b))
        np.fill_diagonal(w, float(self.a))
        return w

    def prior(self) -> NDArray[np.float64]:
        return self.weights() / (self.k * self.d)


# ---------------------------------------------------------------------------
# count-profile tables


@dataclass(frozen=True)
class _Box:
    radix: NDArray[np.int64]
    layer_ptr: NDArray[np.int64]
    layer_idx: NDArray[np.int64]
    pred: NDArray[np.int64]
    comp: NDArray[np.int64]


def _box(k: int, a: int, b: int) -> _Box:
    # coordinate 0 counts v's own color, coordinates 1..k-1 the others
    target = np.array([a] + [b] * (k - 1), dtype=np.int64)
    radix = target + 1
    size = int(np.prod(radix))
    digits = np.array(np.unravel_index(np.arange(size), tuple(radix))).T
    level = digits.sum(axis=1)
    order = np.argsort(level, kind="stable")
    layer_ptr = np.searchsorted(level[order], np.arange(target.sum() + 2))
    pred = np.full((size, k), -1, dtype=np.int64)
    comp = np.full((size, k), -1, dtype=np.int64)
    for r in range(k):
        dn = digits.copy()
        dn[:, r] -= 1
        ok = dn[:, r] >= 0
        pred[ok, r] = np.ravel_multi_index(tuple(dn[ok].T), tuple(radix))
        c = target[None, :] - digits
        c[:, r] -= 1
        ok = np.all(c >= 0, axis=1)
        comp[ok, r] = np.ravel_multi_index(tuple(c[ok].T), tuple(radix))
    return _Box(radix, layer_ptr.astype(np.int64), order.astype(np.int64), pred, comp)


@numba.njit(cache=True)
def _vertex_update(x, layer_ptr, layer_idx, pred, comp, wrow, out, pre, suf, fac, logpsi, logscale):
    # x[j, r, s]: incoming message from slot j; out[j, s, t]: outgoing to slot j
    # pre, suf, fac, logpsi, logscale are scratch; only layer entries are read
    d, k = x.shape[0], x.shape[1]
    logpsi[:] = -np.inf
    for s in range(k):
        for j in range(d):
            # coordinate 0 is color s, then the other colors in order
            fac[j, 0] = x[j, s, s]
            c = 1
            for r in range(k):
                if r != s:
                    fac[j, c] = x[j, r, s]
                    c += 1
            mx = 0.0
            for r in range(k):
                if fac[j, r] > mx:
                    mx = fac[j, r]
            if mx <= 0.0:
                mx = 1.0
            for r in range(k):
                fac[j, r] /= mx
            logscale[j] = math.log(mx)
        tot = logscale.sum()
        pre[0, :] = 0.0
        pre[0, 0] = 1.0
        for j in range(1, d + 1):
            for p in range(layer_ptr[j], layer_ptr[j + 1]):
                m = layer_idx[p]
                acc = 0.0
                for r in range(k):
                    q = pred[m, r]
                    if q >= 0:
                        acc += fac[j - 1, r] * pre[j - 1, q]
                pre[j, m] = acc
        suf[d, :] = 0.0
        suf[d, 0] = 1.0
        for j in range(d - 1, -1, -1):
            lev = d - j
            for p in range(layer_ptr[lev], layer_ptr[lev + 1]):
                m = layer_idx[p]
                acc = 0.0
                for r in range(k):
                    q = pred[m, r]
                    if q >= 0:
                        acc += fac[j, r] * suf[j + 1, q]
                suf[j, m] = acc
        for j in range(d):
            # leave slot j out: pre[j] has j factors, suf[j+1] has d-1-j
            for tc in range(k):
                acc = 0.0
                for p in range(layer_ptr[j], layer_ptr[j + 1]):
                    m = layer_idx[p]
                    q = comp[m, tc]
                    if q >= 0:
                        acc += pre[j, m] * suf[j + 1, q]
                # map coordinate tc back to a color t
                if tc == 0:
                    t = s
                else:
                    t = tc - 1
                    if t >= s:
                        t += 1
                wt = wrow[s, t]
                if acc > 0.0 and wt > 0.0:
                    logpsi[j, s, t] = math.log(acc) + math.log(wt) + tot - logscale[j]
    bad = 0
    for j in range(d):
        mx = -np.inf
        for s in range(k):
            for t in range(k):
                if logpsi[j, s, t] > mx:
                    mx = logpsi[j, s, t]
        if mx == -np.inf:
            bad += 1
            continue
        z = 0.0
        for s in range(k):
            for t in range(k):
                v = math.exp(logpsi[j, s, t] - mx)
                out[j, s, t] = v
                z += v
        for s in range(k):
            for t in range(k):
                out[j, s, t] /= z
    return bad


@numba.njit(cache=True)
def _scratch(d, k, size):
    return (np.empty((d + 1, size)), np.empty((d + 1, size)), np.empty((d, k)),
            np.empty((d, k, k)), np.empty(d))


@numba.njit(cache=True)
def _sweep(msgs, nbrs, rev, layer_ptr, layer_idx, pred, comp, wrow, new):
    n, d = nbrs.shape
    k = msgs.shape[2]
    out = np.zeros((d, k, k))
    pre, suf, fac, logpsi, logscale = _scratch(d, k, pred.shape[0])
    bad = 0
    for v in range(n):
        out[:] = 0.0
        bad += _vertex_update(msgs[v], layer_ptr, layer_idx, pred, comp, wrow, out, pre, suf, fac, logpsi, logscale)
        for j in range(d):
            w = nbrs[v, j]
            new[w, rev[v, j]] = out[j]
    return bad


def reverse_slots(g: RegularGraph) -> NDArray[np.int64]:
    """rev[v, j] = position of v in the neighbor list of nbrs[v, j]."""
    nb = g.nbrs
    n, d = nb.shape
    # global keys row * n + neighbor are sorted because each row is sorted
    keys = (np.arange(n)[:, None] * n + nb).ravel()
    w = nb.ravel()
    v = np.repeat(np.arange(n), d)
    pos = np.searchsorted(keys, w * n + v) - w * d
    return pos.reshape(n, d)


class BPRunner:
    """Synchronous BP sweeps on a fixed regular graph."""

    def __init__(self, g: RegularGraph, params: BPParams):
        if g.d != params.d:
            raise ConfigError(f"graph degree {g.d} differs from a + b(k-1) = {params.d}")
        self.g = g
        self.p = params
        self.rev = reverse_slots(g)
        self.box = _box(params.k, params.a, params.b)
        self.w = params.weights()

    def fixed_point(self) -> NDArray[np.float64]:
        pr = self.p.prior()
        return np.broadcast_to(pr, (self.g.n, self.g.d, self.p.k, self.p.k)).copy()

    def sweep(self, msgs: NDArray) -> NDArray:
        new = np.empty_like(msgs)
        bx = self.box
        bad = _sweep(msgs, self.g.nbrs, self.rev, bx.layer_ptr, bx.layer_idx, bx.pred, bx.comp, self.w, new)
        if bad:
            raise DegenerateMessage(f"{bad} outgoing messages have zero normalization")
        return new


def vertex_update(incoming: NDArray, params: BPParams) -> NDArray:
    """Outgoing messages at one vertex from its d incoming messages.

    ``incoming[j, r, s]`` is the message from neighbor j; the result ``out[j, s, t]``
    is the message to neighbor j, computed from the other d - 1.
    """
    x = np.ascontiguousarray(incoming, dtype=float)
    if x.shape != (params.d, params.k, params.k):
        raise ConfigError("incoming messages must have shape (d, k, k)")
    bx = _box(params.k, params.a, params.b)
    out = np.zeros_like(x)
    bad = _vertex_update(x, bx.layer_ptr, bx.layer_idx, bx.pred, bx.comp, params.weights(), out,
                         *_scratch(params.d, params.k, bx.pred.shape[0]))
    if bad:
        raise DegenerateMessage("zero normalization")
    return out


def bp_update_esbm(msgs: NDArray, g: RegularGraph, a: int, b: int) -> NDArray:
    """One synchronous sweep of the reweighted block-model update."""
    k = msgs.shape[2]
    return BPRunner(g, BPParams(k, a, b)).sweep(msgs)


def bp_update_coloring(msgs: NDArray, g: RegularGraph, c: int) -> NDArray:
    """One sweep of the equitable coloring update.

    Accepts either full (n, d, k, k) messages with zero diagonal or the
    pair form (n, d, k(k-1)) over ordered pairs r != s.
    """
    if msgs.ndim == 3:
        k = _k_from_pairs(msgs.shape[2])
        full = pairs_to_full(msgs, k)
        return full_to_pairs(bp_update_esbm(full, g, 0, c))
    return bp_update_esbm(msgs, g, 0, c)


def _k_from_pairs(m: int) -> int:
    k = int(round((1 + math.sqrt(1 + 4 * m)) / 2))
    if k * (k - 1) != m:
        raise ConfigError("pair dimension is not k(k-1)")
    return k


def coloring_pairs(k: int) -> list[tuple[int, int]]:
    return [(r, s) for r in range(k) for s in range(k) if r != s]


def pairs_to_full(m: NDArray, k: int) -> NDArray:
    idx = coloring_pairs(k)
    full = np.zeros(m.shape[:-1] + (k, k))
    for p, (r, s) in enumerate(idx):
        full[..., r, s] = m[..., p]
    return full


def full_to_pairs(m: NDArray) -> NDArray:
    k = m.shape[-1]
    return np.stack([m[..., r, s] for r, s in coloring_pairs(k)], axis=-1)


# ---------------------------------------------------------------------------
# Jacobians at the uniform / prior fixed point


@dataclass(frozen=True)
class JacobianBlocks:
    Y: NDArray[np.float64]
    m: NDArray[np.float64]
    eigenvalues: NDArray[np.complex128]
    pairs: list


def jacobian_coloring(k: int, c: int, d: int | None = None) -> JacobianBlocks:
    """Y[(r,s), (s',t)] = d mu_out[s',t] / d mu_in[r,s] for the coloring model."""
    if d is None:
        d = c * (k - 1)
    pairs = coloring_pairs(k)
    y = np.zeros((len(pairs), len(pairs)))
    for i, (r, s) in enumerate(pairs):
        for j, (s2, t) in enumerate(pairs):
            y[i, j] = (-(s == s2) * (r == t) + c * (s == s2)) / (d - 1) - 1 / (k * (k - 1))
    m = np.array([[0.0, 1.0], [-1 / (d - 1), -c / (d - 1)]])
    return JacobianBlocks(y, m, coloring_spectrum(k, c, d), pairs)


def jacobian_esbm(k: int, a: int, b: int, d: int | None = None) -> JacobianBlocks:
    """Jacobian of the block-model update at the prior fixed point (k^2 pairs)."""
    if d is None:
        d = a + b * (k - 1)
    pairs = [(r, s) for r in range(k) for s in range(k)]
    w = np.full((k, k), float(b))
    np.fill_diagonal(w, float(a))
    y = np.zeros((k * k, k * k))
    for i, (r, s) in enumerate(pairs):
        for j, (s2, t) in enumerate(pairs):
            y[i, j] = -(s == s2) * (r == t) / (d - 1) + w[s2, t] * ((s == s2) / (d - 1) - 1 / (k * d))
    m = np.array(
        [
            [-b, -1.0, -a / (k - 1)],
            [b * (k - 1) - 1, 0.0, a],
            [b * (k - 1), 0.0, a - 1],
        ]
    ) / (d - 1)
    return JacobianBlocks(y, m, esbm_spectrum(k, a, b, d), pairs)


def kappa(a: float, b: float, d: float) -> tuple[complex, complex]:
    """Roots kappa_+/- = (a - b +/- sqrt((a-b)^2 - 4(d-1))) / (2(d-1))."""
    disc = (a - b) ** 2 - 4 * (d - 1)
    root = math.sqrt(disc) if disc >= 0 else 1j * math.sqrt(-disc)
    kp = (a - b + root) / (2 * (d - 1))
    km = (a - b - root) / (2 * (d - 1))
    # kappa_+ is the root of larger modulus
    if abs(km) > abs(kp):
        kp, km = km, kp
    return complex(kp), complex(km)


@dataclass(frozen=True)
class KappaInfo:
    kappa_plus: complex
    kappa_minus: complex
    modulus: float
    complex_branch: bool
    discriminant: float


def kappa_plus(a: float, b: float, d: float) -> KappaInfo:
    if d < 2:
        raise ConfigError("need d >= 2")
    kp, km = kappa(a, b, d)
    disc = (a - b) ** 2 - 4 * (d - 1)
    return KappaInfo(kp, km, abs(kp), disc < 0, disc)


def coloring_spectrum(k: int, c: int, d: int) -> NDArray[np.complex128]:
    """Closed-form multiset of eigenvalues of the coloring Jacobian (k >= 4)."""
    kp, km = kappa(0, c, d)
    vals = [0.0]
    vals += [1 / (d - 1)] * ((k - 1) * (k - 2) // 2)
    vals += [-1 / (d - 1)] * (k * (k - 3) // 2)
    vals += [kp, km] * (k - 1)
    return _sorted_c(vals)


def esbm_spectrum(k: int, a: int, b: int, d: int) -> NDArray[np.complex128]:
    kp, km = kappa(a, b, d)
    vals = [0.0, -1 / (d - 1)]
    vals += [1 / (d - 1)] * ((k - 1) * (k - 2) // 2)
    vals += [-1 / (d - 1)] * (k * (k - 3) // 2)
    vals += [-1 / (d - 1), kp, km] * (k - 1)
    return _sorted_c(vals)


def _sorted_c(vals) -> NDArray[np.complex128]:
    v = np.asarray(vals, dtype=complex)
    return v[np.lexsort((np.round(v.imag, 9), np.round(v.real, 9)))]


def match_spectra(numeric: NDArray, analytic: NDArray) -> float:
    """Max distance under the optimal matching of two eigenvalue multisets."""
    from scipy.optimize import linear_sum_assignment

    cost = np.abs(np.asarray(numeric)[:, None] - np.asarray(analytic)[None, :])
    r, c = linear_sum_assignment(cost)
    return float(cost[r, c].max())


def numeric_spectrum(y: NDArray) -> NDArray[np.complex128]:
    return np.linalg.eigvals(y)


# ---------------------------------------------------------------------------
# thresholds


def ks_threshold_eq(eta: float) -> float:
    """Degree at which the equitable model crosses the spectral threshold."""
    if not 0 < abs(eta) <= 1:
        raise ConfigError("need 0 < |eta| <= 1")
    return 2 / eta**2 * (1 + math.sqrt(1 - eta**2))


def ks_threshold_sbm(eta: float) -> float:
    if not 0 < abs(eta) <= 1:
        raise ConfigError("need 0 < |eta| <= 1")
    return 1 / eta**2 + 1


@dataclass(frozen=True)
class ThresholdReport:
    d_ks_eq: float
    d_ks_sbm: float
    discriminant: float
    unstable: bool


def threshold_report(a: int, b: int, k: int) -> ThresholdReport:
    p = BPParams(k, a, b)
    info = kappa_plus(a, b, p.d)
    lam = p.lam
    eq = ks_threshold_eq(lam) if lam != 0 else math.inf
    sbm = ks_threshold_sbm(lam) if lam != 0 else math.inf
    # |kappa_+| sqrt(d-1) > 1 iff the discriminant is positive; on the complex
    # branch the product is exactly 1, so compare the discriminant instead
    return ThresholdReport(eq, sbm, info.discriminant, info.discriminant > 0)


# ---------------------------------------------------------------------------
# stability experiment


# finite-T resolution: below threshold the linearization is exactly marginal
STABILITY_MARGIN = 0.05


@dataclass(frozen=True)
class StabilityResult:
    norms: NDArray[np.float64]
    euclidean_norms: NDArray[np.float64]
    log_growth: NDArray[np.float64]
    rate: float
    predicted_rate: float
    burn_in: int
    margin: float = STABILITY_MARGIN

    @property
    def unstable(self) -> bool:
        return self.rate > self.margin


def _project(delta: NDArray, support: NDArray) -> NDArray:
    # zero-sum per message, zero mean over directed edges, zero off-support
    delta = delta * support
    cnt = support.sum()
    delta = delta - (delta.sum(axis=(2, 3), keepdims=True) / cnt) * support
    delta = delta - delta.mean(axis=(0, 1), keepdims=True)
    return delta


def mode_coordinates(params: BPParams) -> tuple[NDArray[np.bool_], NDArray[np.complex128]]:
    """Support mask over the k^2 pairs and the inverse eigenbasis of the
    local Jacobian on that support (identity if it is ill conditioned)."""
    jb = jacobian_esbm(params.k, params.a, params.b)
    sup = np.array([params.weights()[r, s] > 0 for r, s in jb.pairs])
    ys = jb.Y[np.ix_(sup, sup)]
    # a perturbation propagates as delta_out = Y^T delta_in
    _, vecs = np.linalg.eig(ys.T)
    if np.linalg.cond(vecs) > 1e8:
        return sup, np.eye(int(sup.sum()), dtype=complex)
    return sup, np.linalg.inv(vecs)


def stability_experiment(
    params: BPParams,
    g: RegularGraph,
    T: int = 20,
    eps: float = 1e-5,
    seed=None,
    burn_in: int = 5,
    margin: float = STABILITY_MARGIN,
) -> StabilityResult:
    """Grow a small perturbation of the fixed point under exact BP sweeps.

    The perturbation is kept orthogonal to the uniform direction over directed
    edges (a global shift would unbalance the color classes) by re-centering
    after each sweep. Its size is measured in the eigen-coordinates of the
    local Jacobian, which removes the transient oscillation caused by that
    matrix being non-normal. The rate is the mean log growth per sweep after
    ``burn_in`` sweeps; the run counts as unstable when it exceeds ``margin``.
    """
    if eps > 1e-4 or eps <= 0:
        raise ConfigError("need 0 < eps <= 1e-4")
    if T < 20:
        raise ConfigError("need T >= 20")
    if not 0 <= burn_in < T:
        raise ConfigError("need 0 <= burn_in < T")
    rng = make_rng(seed)
    run = BPRunner(g, params)
    fp = run.fixed_point()
    support = (params.weights() > 0).astype(float)
    sup, vinv = mode_coordinates(params)
    kk = params.k * params.k

    def mode_norm(x):
        return float(np.linalg.norm(x.reshape(-1, kk)[:, sup] @ vinv.T))

    delta = _project(rng.standard_normal(fp.shape), support)
    delta *= eps * math.sqrt(g.n * g.d) / np.linalg.norm(delta)
    msgs = fp + delta
    norms, eucl = [mode_norm(delta)], [float(np.linalg.norm(delta))]
    for _ in range(T):
        msgs = run.sweep(msgs)
        delta = _project(msgs - fp, support)
        msgs = fp + delta
        norms.append(mode_norm(delta))
        eucl.append(float(np.linalg.norm(delta)))
    norms_a = np.array(norms)
    lg = np.diff(np.log(norms_a))
    rate = float(np.mean(lg[burn_in:]))
    info = kappa_plus(params.a, params.b, params.d)
    return StabilityResult(norms_a, np.array(eucl), lg, rate,
                           math.log(info.modulus * math.sqrt(params.d - 1)), burn_in, margin)
