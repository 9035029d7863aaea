"""
Numerical kernels: dense symmetric eigensolver, Lanczos for extreme
eigenvalues of graph adjacency operators, and truncated power series.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg as sla
from numpy.typing import NDArray

from .errors import ConfigError, NonConvergence, NonzeroConstantTerm

JACOBI_MAX_SWEEPS = 100
JACOBI_TOL = 1e-12
# orders above this are handed to LAPACK (same contract, much faster)
JACOBI_MAX_ORDER = 256
LANCZOS_MAX_ITER = 200
LANCZOS_RESTARTS = 30
LANCZOS_TOL = 1e-8


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: NDArray[np.float64]
    eigenvectors: NDArray[np.float64]


def as_symmetric(m: NDArray) -> NDArray[np.float64]:
    a = np.array(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ConfigError("matrix must be square")
    scale = max(np.abs(a).max(initial=0.0), 1e-300)
    if np.abs(a - a.T).max(initial=0.0) > 1e-12 * scale:
        raise ConfigError("matrix is not symmetric")
    return (a + a.T) / 2


def _round_robin(m: int) -> list[tuple[NDArray, NDArray]]:
    # tournament schedule: every pair (p, q) meets exactly once per sweep
    players = list(range(m + (m % 2)))
    size = len(players)
    rounds = []
    for _ in range(size - 1):
        p = np.array(players[: size // 2])
        q = np.array(players[size // 2 :][::-1])
        keep = (p < m) & (q < m)
        p, q = p[keep], q[keep]
        rounds.append((np.minimum(p, q), np.maximum(p, q)))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def jacobi_eigh(m: NDArray) -> Spectrum:
    """Cyclic Jacobi rotations, disjoint pairs rotated together in each round."""
    a = as_symmetric(m)
    n = a.shape[0]
    v = np.eye(n)
    if n <= 1:
        return Spectrum(np.diag(a).copy(), v)
    norm = np.linalg.norm(a)
    rounds = _round_robin(n)
    for _ in range(JACOBI_MAX_SWEEPS):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if off <= JACOBI_TOL * norm:
            break
        for p, q in rounds:
            apq = a[p, q]
            live = np.abs(apq) > 1e-300
            if not live.any():
                continue
            p, q, apq = p[live], q[live], apq[live]
            theta = (a[q, q] - a[p, p]) / (2 * apq)
            big = np.abs(theta) > 1e150
            th = np.where(big, 1.0, theta)
            t = np.where(big, 0.5 / np.where(big, theta, 1.0), np.sign(th) / (np.abs(th) + np.sqrt(th * th + 1)))
            t[theta == 0] = 1.0
            c = 1 / np.sqrt(t * t + 1)
            s = t * c
            ap, aq = a[p, :].copy(), a[q, :].copy()
            a[p, :] = c[:, None] * ap - s[:, None] * aq
            a[q, :] = s[:, None] * ap + c[:, None] * aq
            ap, aq = a[:, p].copy(), a[:, q].copy()
            a[:, p] = ap * c - aq * s
            a[:, q] = ap * s + aq * c
            vp, vq = v[:, p].copy(), v[:, q].copy()
            v[:, p] = vp * c - vq * s
            v[:, q] = vp * s + vq * c
    else:
        raise NonConvergence(f"Jacobi did not converge in {JACOBI_MAX_SWEEPS} sweeps")
    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return Spectrum(w[order], v[:, order])


def eigh_dense(m: NDArray, method: str = "auto") -> Spectrum:
    """Full symmetric eigendecomposition, eigenvalues ascending.

    ``method="jacobi"`` always uses the package's own Jacobi solver; ``"lapack"``
    calls ``scipy.linalg.eigh``; ``"auto"`` picks Jacobi for small orders.
    """
    if method == "jacobi" or (method == "auto" and np.shape(m)[0] <= JACOBI_MAX_ORDER):
        return jacobi_eigh(m)
    if method not in ("auto", "lapack"):
        raise ConfigError(f"unknown method {method!r}")
    a = as_symmetric(m)
    if a.shape[0] > 5000:
        raise ConfigError("dense eigensolver limited to order 5000")
    w, v = sla.eigh(a)
    return Spectrum(w, v)


def lanczos_extreme(
    matvec: Callable[[NDArray], NDArray],
    n: int,
    which: str = "min",
    deflate: NDArray | None = None,
    seed: int = 0,
    tol: float = LANCZOS_TOL,
    max_iter: int = LANCZOS_MAX_ITER,
    restarts: int = LANCZOS_RESTARTS,
) -> tuple[float, NDArray]:
    """Extreme eigenpair of a symmetric operator by Lanczos with full
    reorthogonalization and explicit restarts from the current Ritz vector.

    ``deflate`` is an orthonormal block whose span is projected out, so the
    iteration runs on its orthogonal complement.
    """
    if which not in ("min", "max"):
        raise ConfigError("which must be 'min' or 'max'")
    rng = np.random.default_rng(seed)
    z = np.zeros((n, 0)) if deflate is None else np.asarray(deflate, float).reshape(n, -1)
    dim = n - z.shape[1]
    if dim <= 0:
        raise ConfigError("nothing left after deflation")

    def proj(x, basis):
        for blk in (z, basis):
            if blk.shape[1]:
                x = x - blk @ (blk.T @ x)
                x = x - blk @ (blk.T @ x)
        return x

    x0 = proj(rng.standard_normal(n), np.zeros((n, 0)))
    for _ in range(restarts):
        m = min(max_iter, dim)
        q = np.zeros((n, m))
        alpha, beta = np.zeros(m), np.zeros(m)
        x = x0 / np.linalg.norm(x0)
        k = 0
        for j in range(m):
            q[:, j] = x
            w = proj(matvec(x), np.zeros((n, 0)))
            alpha[j] = x @ w
            w = w - q[:, : j + 1] @ (q[:, : j + 1].T @ w)
            w = w - q[:, : j + 1] @ (q[:, : j + 1].T @ w)
            k = j + 1
            if k == m:
                break
            b = np.linalg.norm(w)
            if b <= 1e-12 * max(1.0, abs(alpha[j])):
                # invariant subspace: continue with a fresh orthogonal direction
                w = proj(rng.standard_normal(n), q[:, : j + 1])
                nw = np.linalg.norm(w)
                if nw < 1e-10:
                    break
                beta[j] = 0.0
                x = w / nw
            else:
                beta[j] = b
                x = w / b
        t = np.diag(alpha[:k]) + np.diag(beta[: k - 1], 1) + np.diag(beta[: k - 1], -1)
        tw, tv = np.linalg.eigh(t)
        idx = 0 if which == "min" else k - 1
        lam = tw[idx]
        vec = q[:, :k] @ tv[:, idx]
        vec = proj(vec, np.zeros((n, 0)))
        vec /= np.linalg.norm(vec)
        res = np.linalg.norm(proj(matvec(vec), np.zeros((n, 0))) - lam * vec)
        if res <= tol:
            return float(lam), vec
        x0 = vec
    raise NonConvergence(f"Lanczos residual above {tol} after {restarts} restarts")


def extreme_eigs_sparse(g, which: str = "min", deflate_ones: bool = False, seed: int = 0) -> tuple[float, NDArray]:
    """Extreme eigenpair of a graph's adjacency matrix.

    With ``deflate_ones`` the all-ones direction is removed, i.e. the operator
    is A - d J / n for a d-regular graph.
    """
    n = g.n
    defl = np.full((n, 1), 1 / np.sqrt(n)) if deflate_ones else None
    return lanczos_extreme(g.matvec, n, which=which, deflate=defl, seed=seed)


# ---------------------------------------------------------------------------
# truncated power series


@dataclass(frozen=True)
class TruncSeries:
    """Power series in t with coefficients c_0..c_D, arithmetic mod t^(D+1)."""

    coeffs: NDArray[np.float64]

    @classmethod
    def of(cls, coeffs, D: int | None = None) -> "TruncSeries":
        c = np.asarray(coeffs, dtype=float)
        if D is not None:
            c = np.concatenate([c[: D + 1], np.zeros(max(0, D + 1 - len(c)))])
        return cls(c)

    @property
    def D(self) -> int:
        return len(self.coeffs) - 1

    def _align(self, other) -> "TruncSeries":
        if not isinstance(other, TruncSeries):
            return TruncSeries.of([float(other)], self.D)
        if other.D != self.D:
            raise ConfigError("degree caps differ")
        return other

    def __add__(self, other):
        return TruncSeries(self.coeffs + self._align(other).coeffs)

    __radd__ = __add__

    def __sub__(self, other):
        return TruncSeries(self.coeffs - self._align(other).coeffs)

    def __neg__(self):
        return TruncSeries(-self.coeffs)

    def __mul__(self, other):
        if np.isscalar(other):
            return TruncSeries(self.coeffs * other)
        o = self._align(other)
        return TruncSeries(np.convolve(self.coeffs, o.coeffs)[: self.D + 1])

    __rmul__ = __mul__

    def __call__(self, t: float) -> float:
        return float(np.polynomial.polynomial.polyval(t, self.coeffs))


def series_exp(s: TruncSeries) -> TruncSeries:
    """exp(s) via n g_n = sum_j j s_j g_{n-j}; requires s_0 = 0."""
    c = s.coeffs
    if c[0] != 0:
        raise NonzeroConstantTerm("series_exp needs a zero constant term")
    g = np.zeros_like(c)
    g[0] = 1.0
    jc = np.arange(len(c)) * c
    for m in range(1, len(c)):
        g[m] = jc[1 : m + 1] @ g[m - 1 :: -1][:m] / m
    return TruncSeries(g)


def series_log(s: TruncSeries) -> TruncSeries:
    """log(s) for s_0 = 1 via m h_m = m s_m - sum_{j<m} j h_j s_{m-j}."""
    c = s.coeffs
    if abs(c[0] - 1) > 1e-14:
        raise ConfigError("series_log needs constant term 1")
    h = np.zeros_like(c)
    for m in range(1, len(c)):
        acc = m * c[m]
        for j in range(1, m):
            acc -= j * h[j] * c[m - j]
        h[m] = acc / m
    return TruncSeries(h)


def series_log1p_neg(mu, scale: float, D: int) -> TruncSeries:
    """Series of -scale * sum_i log(1 - t^2 mu_i), truncated at t^D."""
    if D < 0:
        raise ConfigError("D must be nonnegative")
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    c = np.zeros(D + 1)
    for m in range(1, D // 2 + 1):
        c[2 * m] = scale * np.sum(mu**m) / m
    return TruncSeries(c)
