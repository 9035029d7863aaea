"""
Non-backtracking walk polynomials, Kesten-McKay quadrature, the symmetric
path-statistics test and partially labelled subgraph counts.

On a d-regular graph the number of non-backtracking walks of length s between
u and v is q_s(A)[u, v], where q_0 = 1, q_1 = z, q_2 = z^2 - d and
q_{s+1} = z q_s - (d-1) q_{s-1}. These polynomials are orthogonal for the
Kesten-McKay measure with ||q_s||^2 = q_s(d).

The path-statistics test asks for a PSD matrix P with unit diagonal,
|<P, J>| <= delta n^2 and |<P, q_s(A)> - q_s(d eta) n| <= delta n for s <= D.
``path_stats_decide`` looks for an explicit witness of infeasibility (a
polynomial f that is nonnegative on the spectrum but whose constraint
combination is negative) or of feasibility (a matrix meeting all constraints).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product

import numba
import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from numpy.typing import NDArray

from .errors import ConfigError, MemoryGuard, NonConvergence, TooLarge
from .graphs import LabeledGraph, RegularGraph
from .linalg import eigh_dense, extreme_eigs_sparse

P_CAP = 512
PSD_TOL = 1e-8
UNIT_DIAG_TOL = 1e-9
MAX_NB_ENTRIES = 50_000_000
MAX_PLG_VERTICES = 8
MAX_PLG_EXPECTED_VERTICES = 12


# ---------------------------------------------------------------------------
# q-polynomials


@dataclass(frozen=True)
class QPolynomial:
    """Polynomial in z stored by monomial coefficients (lowest degree first)."""

    d: int
    coeffs: NDArray[np.float64]
    s: int | None = None

    @property
    def degree(self) -> int:
        nz = np.flatnonzero(self.coeffs)
        return int(nz[-1]) if len(nz) else 0

    def __call__(self, z):
        return np.polynomial.polynomial.polyval(z, self.coeffs)

    def q_coeffs(self) -> NDArray[np.float64]:
        return to_q_basis(self.coeffs, self.d)


def q_poly(s: int, d: int) -> QPolynomial:
    if s < 0 or d < 2:
        raise ConfigError("need s >= 0 and d >= 2")
    return QPolynomial(d, q_basis_matrix(s, d)[s], s)


def q_basis_matrix(D: int, d: float) -> NDArray[np.float64]:
    """Row s holds the monomial coefficients of q_s, for s = 0..D."""
    b = np.zeros((D + 1, D + 1))
    b[0, 0] = 1.0
    if D >= 1:
        b[1, 1] = 1.0
    if D >= 2:
        b[2, 2], b[2, 0] = 1.0, -float(d)
    for s in range(2, D):
        b[s + 1, 1:] = b[s, :-1]
        b[s + 1] -= (d - 1) * b[s - 1]
    return b


def q_values(z, d: float, D: int) -> NDArray[np.float64]:
    """Array of shape (D+1, len(z)) with q_s(z)."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    out = np.empty((D + 1, len(z)))
    out[0] = 1.0
    if D >= 1:
        out[1] = z
    if D >= 2:
        out[2] = z * z - d
    for s in range(2, D):
        out[s + 1] = z * out[s] - (d - 1) * out[s - 1]
    return out


def q_norm2(s: int, d: float) -> float:
    """||q_s||^2 = q_s(d), the number of vertices at depth s of the d-regular tree."""
    return 1.0 if s == 0 else d * (d - 1) ** (s - 1)


def to_q_basis(coeffs, d: float) -> NDArray[np.float64]:
    c = np.asarray(coeffs, dtype=float)
    b = q_basis_matrix(len(c) - 1, d)
    return sla.solve_triangular(b.T, c, lower=False, unit_diagonal=True)


def _as_coeffs(f) -> tuple[NDArray[np.float64], int | None]:
    if isinstance(f, QPolynomial):
        return f.coeffs, f.d
    return np.asarray(f, dtype=float), None


def km_inner(f, h, d: float | None = None) -> float:
    """Kesten-McKay inner product, via the q-expansions of both polynomials."""
    cf, df = _as_coeffs(f)
    ch, dh = _as_coeffs(h)
    d = d if d is not None else (df or dh)
    if d is None:
        raise ConfigError("degree d not given")
    m = max(len(cf), len(ch))
    cf = np.pad(cf, (0, m - len(cf)))
    ch = np.pad(ch, (0, m - len(ch)))
    a, b = to_q_basis(cf, d), to_q_basis(ch, d)
    norms = np.array([q_norm2(s, d) for s in range(m)])
    return float(np.sum(a * b * norms))


def km_norm2(f, d: float | None = None) -> float:
    return km_inner(f, f, d)


@dataclass(frozen=True)
class KMQuadrature:
    d: float
    roots: NDArray[np.float64]
    weights: NDArray[np.float64]

    @property
    def s(self) -> int:
        return len(self.roots)

    def integrate(self, values: NDArray) -> NDArray:
        """Sum of weights times values along the last axis."""
        return np.asarray(values) @ self.weights


def km_quadrature(s: int, d: float) -> KMQuadrature:
    """Gauss rule with s nodes for the Kesten-McKay measure (Golub-Welsch)."""
    if s < 1:
        raise ConfigError("need at least one node")
    if d < 2:
        raise ConfigError("need d >= 2")
    off = np.full(s - 1, math.sqrt(d - 1))
    if s > 1:
        off[0] = math.sqrt(d)
    try:
        w, v = sla.eigh_tridiagonal(np.zeros(s), off)
    except np.linalg.LinAlgError as exc:
        raise NonConvergence(str(exc)) from exc
    return KMQuadrature(float(d), w, v[0] ** 2)


# ---------------------------------------------------------------------------
# the feasibility polynomial g


@dataclass(frozen=True)
class GEta:
    """g(z) = prod_i (z - r_i)^2 / zeta, kept in factored form.

    ``roots`` are the squared factors, ``removed`` the roots of q_P left out
    because they lie nearest to d eta.
    """

    d: int
    eta: float
    D: int
    P: int
    roots: NDArray[np.float64]
    removed: NDArray[np.float64]
    log_zeta: float
    moment_errors: NDArray[np.float64]

    def log_value(self, z) -> NDArray[np.float64]:
        z = np.atleast_1d(np.asarray(z, dtype=float))
        with np.errstate(divide="ignore"):
            return 2 * np.log(np.abs(z[:, None] - self.roots[None, :])).sum(axis=1) - self.log_zeta

    def __call__(self, z) -> NDArray[np.float64]:
        return np.exp(self.log_value(z))

    def km_moments(self, s_max: int) -> NDArray[np.float64]:
        """<g, q_s>_KM for s = 0..s_max, exact up to rounding."""
        return _moments(self.roots, self.log_zeta, self.d, s_max)

    def coeffs(self) -> NDArray[np.float64]:
        c = np.polynomial.polynomial.polyfromroots(np.repeat(self.roots, 2))
        return c * math.exp(-self.log_zeta)


def _moments(roots, log_zeta, d, s_max):
    # Gauss rule exact for g * q_s: degree 2 len(roots) + s_max
    quad = km_quadrature(len(roots) + s_max // 2 + 1, d)
    with np.errstate(divide="ignore"):
        lg = 2 * np.log(np.abs(quad.roots[:, None] - roots[None, :])).sum(axis=1) - log_zeta
    return q_values(quad.roots, d, s_max) @ (quad.weights * np.exp(lg))


def _log_norm(roots, d):
    quad = km_quadrature(len(roots) + 1, d)
    with np.errstate(divide="ignore"):
        lg = 2 * np.log(np.abs(quad.roots[:, None] - roots[None, :])).sum(axis=1)
    top = lg.max()
    return top + math.log(np.sum(quad.weights * np.exp(lg - top)))


def g_eta_candidate(P: int, D: int, d: int, eta: float) -> GEta:
    x = d * eta
    m = (D + 2) // 2  # ceil((D+1)/2)
    r = km_quadrature(P, d).roots
    # nearest to x first, ties toward the smaller root
    order = np.lexsort((r, np.abs(r - x)))
    drop = np.zeros(P, dtype=bool)
    drop[order[:m]] = True
    keep = r[~drop]
    lz = _log_norm(keep, d)
    mom = _moments(keep, lz, d, D)
    err = np.abs(mom - q_values(x, d, D)[:, 0])
    return GEta(d, eta, D, P, keep, r[drop], lz, err)


def g_eta_construct(D: int, delta: float, d: int, eta: float, p_cap: int = P_CAP) -> GEta:
    """Nonnegative g with <g, 1> = 1 and |<g, q_s> - q_s(d eta)| < delta for s <= D.

    Every P from D+1 up to ``p_cap`` is tried in turn; the moment errors are
    not monotone in P, so a doubling schedule can skip over the good values.
    """
    if D < 1 or delta <= 0:
        raise ConfigError("need D >= 1 and delta > 0")
    if (d * eta) ** 2 > 4 * (d - 1) + 1e-12:
        raise ConfigError("d eta lies outside the Kesten-McKay support")
    m = (D + 2) // 2
    for P in range(max(D + 1, m + 1), p_cap + 1):
        cand = g_eta_candidate(P, D, d, eta)
        if cand.moment_errors.max() < delta:
            return cand
    raise NonConvergence(f"no P <= {p_cap} meets tolerance {delta}")


# ---------------------------------------------------------------------------
# non-backtracking matrices


def nb_matrices(g: RegularGraph, s_max: int) -> list[sp.csr_matrix]:
    """N^(s) = q_s(A) for s = 0..s_max, as integer sparse matrices."""
    n, d = g.n, g.d
    est = n * sum(min(n, int(q_norm2(s, d))) for s in range(s_max + 1))
    if est > MAX_NB_ENTRIES:
        raise MemoryGuard(f"about {est} nonzeros needed")
    a = g.to_sparse().astype(np.int64).tocsr()
    eye = sp.identity(n, dtype=np.int64, format="csr")
    out = [eye]
    if s_max >= 1:
        out.append(a)
    if s_max >= 2:
        out.append((a @ a - d * eye).tocsr())
    for s in range(2, s_max):
        out.append((a @ out[s] - (d - 1) * out[s - 1]).tocsr())
    for m in out:
        m.eliminate_zeros()
    return out


def count_nb_walks(g, u: int, v: int, s: int) -> int:
    """Non-backtracking walks of length s from u to v by direct search."""
    nb = [g.neighbors(x).tolist() for x in range(g.n)]

    def go(x, prev, left):
        if left == 0:
            return int(x == v)
        return sum(go(y, x, left - 1) for y in nb[x] if y != prev)

    return go(u, -1, s)


# ---------------------------------------------------------------------------
# path-statistics test


def dual_polynomial(d: int, eta: float) -> NDArray[np.float64]:
    """f(z) = 2(d-1) + (d eta)^2/2 - z^2: positive on the bulk, negative at d eta
    once (d eta)^2 > 4(d-1)."""
    return np.array([2 * (d - 1) + 0.5 * (d * eta) ** 2, 0.0, -1.0])


def _poly_min(c, lo, hi) -> float:
    pts = [lo, hi]
    der = np.polynomial.polynomial.polyder(c)
    if len(der) and np.any(der):
        for r in np.polynomial.polynomial.polyroots(der):
            if abs(r.imag) < 1e-12 and lo <= r.real <= hi:
                pts.append(r.real)
    return float(np.min(np.polynomial.polynomial.polyval(np.array(pts), c)))


@dataclass(frozen=True)
class DualWitness:
    f: NDArray[np.float64]
    interval: tuple[float, float]
    f_min: float
    bound: float
    chain: float
    applies: bool


def dual_bound(f, d: int, eta: float, delta: float) -> float:
    """f(d eta) + delta (||f||^2_KM + |f(d)|)."""
    pe = np.polynomial.polynomial.polyval
    return float(pe(d * eta, f) + delta * (km_norm2(f, d) + abs(pe(d, f))))


def dual_chain(f, d: int, eta: float, delta: float) -> float:
    """Upper bound on <P, f(A) - f(d) J/n> / n implied by the constraints.

    Writing f = sum_s a_s q_s, the s = 0 term is fixed by the unit diagonal,
    every other term moves by at most |a_s| delta and the J term by at most
    |f(d)| delta.
    """
    pe = np.polynomial.polynomial.polyval
    a = to_q_basis(f, d)
    return float(pe(d * eta, f) + delta * (np.abs(a[1:]).sum() + abs(pe(d, f))))


def dual_check(g: RegularGraph, eta: float, D: int, delta: float, f=None, seed: int = 0) -> DualWitness:
    d = g.d
    f = dual_polynomial(d, eta) if f is None else np.asarray(f, dtype=float)
    if len(f) - 1 > D:
        raise ConfigError("dual polynomial degree exceeds D")
    lo, _ = extreme_eigs_sparse(g, which="min", deflate_ones=True, seed=seed)
    hi, _ = extreme_eigs_sparse(g, which="max", deflate_ones=True, seed=seed + 1)
    # the all-ones direction of A - dJ/n sits at 0
    lo, hi = min(lo, 0.0), max(hi, 0.0)
    fmin = _poly_min(f, lo, hi)
    bound, chain = dual_bound(f, d, eta, delta), dual_chain(f, d, eta, delta)
    ok = fmin >= -PSD_TOL and bound < 0 and chain < 0
    return DualWitness(f, (lo, hi), fmin, bound, chain, ok)


@dataclass(frozen=True)
class PrimalCheck:
    method: str
    diag_error: float
    j_value: float
    moment_errors: NDArray[np.float64]
    psd_min: float
    ok: bool
    detail: dict = field(default_factory=dict)
    matrix: NDArray[np.float64] | None = field(default=None, repr=False)


def check_pseudo_partition(
    ptilde: NDArray, nbm: list, d: int, eta: float, delta: float, psd_min: float | None = None, method: str = ""
) -> PrimalCheck:
    """Test the three constraints on a dense candidate matrix."""
    n = ptilde.shape[0]
    D = len(nbm) - 1
    diag_err = float(np.abs(np.diag(ptilde) - 1).max())
    jval = float(ptilde.sum()) / n**2
    target = q_values(d * eta, d, D)[:, 0]
    errs = np.zeros(D)
    for s in range(1, D + 1):
        m = nbm[s].tocoo()
        obs = float(np.dot(ptilde[m.row, m.col], m.data))
        errs[s - 1] = abs(obs - target[s] * n) / n
    if psd_min is None:
        psd_min = float(eigh_dense(ptilde).eigenvalues[0])
    ok = diag_err <= UNIT_DIAG_TOL and abs(jval) <= delta and bool(np.all(errs <= delta)) and psd_min >= -1e-9
    return PrimalCheck(method, diag_err, jval, errs, psd_min, ok, matrix=ptilde)


def _gram_unit(b: NDArray) -> NDArray | None:
    nrm = np.sqrt(np.einsum("ij,ij->i", b, b))
    if np.any(nrm <= 1e-300):
        return None
    bn = b / nrm[:, None]
    return bn @ bn.T


@dataclass(frozen=True)
class _Spec:
    values: NDArray[np.float64]
    vectors: NDArray[np.float64]
    ones_idx: int


def _spectral_data(g: RegularGraph) -> _Spec:
    sp_ = eigh_dense(g.to_dense(dtype=float))
    ones = np.full(g.n, 1 / math.sqrt(g.n))
    idx = int(np.argmax(np.abs(ones @ sp_.eigenvectors)))
    return _Spec(sp_.eigenvalues, sp_.eigenvectors, idx)


def g_witness(g: RegularGraph, spec: _Spec, nbm, eta: float, D: int, delta: float) -> PrimalCheck | None:
    """Unit-diagonal rescaling of g(A) - g(d) J/n for a g built at a stricter
    tolerance; several tolerances are tried since the graph adds its own error."""
    d = g.d
    last = None
    for frac in (0.5, 0.25, 0.125):
        try:
            ge = g_eta_construct(D, delta * frac, d, eta)
        except NonConvergence:
            continue
        lg = ge.log_value(spec.values)
        lg[spec.ones_idx] = -np.inf
        w = np.exp(lg - lg.max())
        b = spec.vectors * np.sqrt(w)[None, :]
        pt = _gram_unit(b)
        if pt is None:
            continue
        # PSD by construction: pt is a Gram matrix
        chk = check_pseudo_partition(pt, nbm, d, eta, delta, psd_min=0.0, method="g-witness")
        chk.detail.update(P=ge.P, tolerance=delta * frac)
        if chk.ok:
            return chk
        last = chk
    return last


def window_witness(g: RegularGraph, spec: _Spec, nbm, eta: float, delta: float, width: float = 1e-6) -> PrimalCheck | None:
    """Gram matrix of the eigenvectors whose eigenvalue equals d eta, rescaled
    to unit diagonal. On a planted sample these span the centered color
    indicators and the result is the planted partition matrix."""
    x = g.d * eta
    sel = np.abs(spec.values - x) <= width * max(1.0, abs(x))
    sel[spec.ones_idx] = False
    if not sel.any():
        return None
    pt = _gram_unit(spec.vectors[:, sel])
    if pt is None:
        return None
    return check_pseudo_partition(pt, nbm, g.d, eta, delta, psd_min=0.0, method="spectral-window")


@dataclass(frozen=True)
class PathStatsResult:
    verdict: str
    method: str
    dual: DualWitness | None
    primal: PrimalCheck | None


def path_stats_decide(g: RegularGraph, k: int, eta: float, D: int, delta: float, seed: int = 0) -> PathStatsResult:
    """'Q' on an infeasibility witness, 'P' on a feasibility witness, else 'Undecided'."""
    if D < 2:
        raise ConfigError("need D >= 2")
    if delta <= 0:
        raise ConfigError("need delta > 0")
    if k < 2:
        raise ConfigError("need k >= 2")
    d = g.d
    dual = None
    if (d * eta) ** 2 > 4 * (d - 1):
        dual = dual_check(g, eta, D, delta, seed=seed)
        if dual.applies:
            return PathStatsResult("Q", "dual", dual, None)
    nbm = nb_matrices(g, D)
    spec = _spectral_data(g)
    prim = window_witness(g, spec, nbm, eta, delta)
    if prim is not None and prim.ok:
        return PathStatsResult("P", prim.method, dual, prim)
    if (d * eta) ** 2 <= 4 * (d - 1):
        gw = g_witness(g, spec, nbm, eta, D, delta)
        if gw is not None and gw.ok:
            return PathStatsResult("P", gw.method, dual, gw)
        prim = gw or prim
    return PathStatsResult("Undecided", "none", dual, prim)


def evaluation_witness(lg: LabeledGraph, D: int) -> list[tuple[Fraction, Fraction]]:
    """Exact (<P^(sigma), N^(s)>, q_s(d eta) n) pairs for s = 1..D."""
    g = lg.graph
    k = lg.k
    prof = lg.color_profile()
    same = int(prof[0, lg.sigma[0]])
    eta = Fraction(k * same - g.d, g.d * (k - 1))
    nbm = nb_matrices(g, D)
    out = []
    for s in range(1, D + 1):
        m = nbm[s].tocoo()
        eq = lg.sigma[m.row] == lg.sigma[m.col]
        same_w = int(m.data[eq].sum())
        diff_w = int(m.data[~eq].sum())
        obs = Fraction(same_w) - Fraction(diff_w, k - 1)
        tgt = _q_exact(s, g.d, g.d * eta) * g.n
        out.append((obs, tgt))
    return out


def _q_exact(s: int, d: int, x: Fraction) -> Fraction:
    q = [Fraction(1), Fraction(x), x * x - d]
    for t in range(2, s):
        q.append(x * q[t] - (d - 1) * q[t - 1])
    return q[s]


# ---------------------------------------------------------------------------
# pseudoexpectation of degree (2, D)


@dataclass(frozen=True)
class PseudoPartition:
    matrix: NDArray[np.float64]
    delta: float

    def __post_init__(self):
        m = self.matrix
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ConfigError("matrix must be square")
        if np.abs(np.diag(m) - 1).max(initial=0) > UNIT_DIAG_TOL:
            raise ConfigError("diagonal must be 1")


@dataclass(frozen=True)
class Pseudoexpectation2D:
    """E~ x_{u,i} = 1/k and E~ x_{u,i} x_{v,j} = (1/k)(1/k + P_uv (delta_ij - 1/k))."""

    ptilde: NDArray[np.float64]
    k: int

    @property
    def n(self) -> int:
        return self.ptilde.shape[0]

    @property
    def l(self) -> NDArray[np.float64]:
        return np.full((self.n, self.k), 1.0 / self.k)

    def block(self, i: int, j: int) -> NDArray[np.float64]:
        k = self.k
        return (1.0 / k) * (1.0 / k + self.ptilde * ((i == j) - 1.0 / k))

    @property
    def Q(self) -> NDArray[np.float64]:
        """Dense nk x nk second moments, index (u, i) -> u k + i."""
        k = self.k
        return np.kron(self.ptilde, np.eye(k) - 1.0 / k) / k + 1.0 / k**2


def pseudoexpectation_build(ptilde: PseudoPartition | NDArray, k: int) -> Pseudoexpectation2D:
    pt = ptilde.matrix if isinstance(ptilde, PseudoPartition) else np.asarray(ptilde, dtype=float)
    if not isinstance(ptilde, PseudoPartition):
        PseudoPartition(pt, 0.0)  # validates the unit diagonal
    if k < 2:
        raise ConfigError("need k >= 2")
    return Pseudoexpectation2D(pt, k)


@dataclass(frozen=True)
class ConstraintRow:
    constraint_id: str
    target: float
    observed: float
    slack_units: float


@dataclass(frozen=True)
class PseudoReport:
    positivity_min: float
    hard_error: float
    rows: list[ConstraintRow]
    delta: float

    @property
    def worst(self) -> float:
        return max((abs(r.slack_units) for r in self.rows), default=0.0)

    @property
    def ok(self) -> bool:
        return self.positivity_min >= -1e-9 and self.hard_error <= 1e-9 and self.worst <= self.delta


def block_matrix_poly(s: int, dm: NDArray) -> NDArray[np.float64]:
    """q_s evaluated at the k x k matrix dM (row sums d)."""
    k = dm.shape[0]
    d = float(dm.sum(axis=1)[0])
    eye = np.eye(k)
    q = [eye, dm.astype(float)]
    if s >= 2:
        q.append(dm @ dm - d * eye)
    for t in range(2, s):
        q.append(dm @ q[t] - (d - 1) * q[t - 1])
    return q[s]


def pseudoexpectation_verify(
    pe: Pseudoexpectation2D, g: RegularGraph, k: int, eta: float, D: int, delta: float
) -> PseudoReport:
    """Positivity, hard constraints and the moment constraints on pruned forests
    with at most two labelled vertices. Slack is (observed - target)/n^cc."""
    n, d = g.n, g.d
    if pe.k != k or pe.n != n:
        raise ConfigError("pseudoexpectation does not match the graph")
    # Q - l l^T = (1/k) P (x) (I - J/k); the second factor has spectrum {0, 1}
    if n * k <= 1500:
        c = pe.Q - np.outer(pe.l.ravel(), pe.l.ravel())
        pos = float(eigh_dense(c).eigenvalues[0])
    else:
        pos = min(0.0, float(eigh_dense(pe.ptilde).eigenvalues[0]) / k)
    hard = 0.0
    hard = max(hard, float(np.abs(pe.l.sum(axis=1) - 1).max()))
    colsum = np.zeros((n, n))
    for j in range(k):
        colsum[:] = 0.0
        for i in range(k):
            b = pe.block(i, j)
            colsum += b
            dg = np.diag(b)
            if i == j:
                hard = max(hard, float(np.abs(dg - 1.0 / k).max()))
            else:
                hard = max(hard, float(np.abs(dg).max()))
        hard = max(hard, float(np.abs(colsum - 1.0 / k).max()))
    dm = d * (eta * np.eye(k) + (1 - eta) / k * np.ones((k, k)))
    nbm = nb_matrices(g, D)
    rows = []
    for i in range(k):
        obs = float(pe.l[:, i].sum())
        rows.append(ConstraintRow(f"vertex[{i}]", n / k, obs, (obs - n / k) / n))
    for i in range(k):
        for j in range(k):
            b = pe.block(i, j)
            obs = float(b.sum() - np.trace(b))
            tgt = (n / k) ** 2
            rows.append(ConstraintRow(f"pair[{i},{j}]", tgt, obs, (obs - tgt) / n**2))
    for s in range(1, D + 1):
        m = nbm[s].tocoo()
        qm = block_matrix_poly(s, dm)
        for i in range(k):
            for j in range(k):
                b = pe.block(i, j)
                obs = float(np.dot(b[m.row, m.col], m.data))
                tgt = qm[i, j] * n / k
                rows.append(ConstraintRow(f"path{s}[{i},{j}]", tgt, obs, (obs - tgt) / n))
    return PseudoReport(pos, hard, rows, delta)


# ---------------------------------------------------------------------------
# partially labelled graphs


@dataclass(frozen=True)
class PartiallyLabelledGraph:
    """Small graph H on vertices 0..nv-1 with labels tau (-1 where unlabelled)."""

    nv: int
    edges: tuple[tuple[int, int], ...]
    tau: tuple[int, ...]

    def __post_init__(self):
        if len(self.tau) != self.nv:
            raise ConfigError("tau must give one entry per vertex")
        if self.nv > MAX_PLG_EXPECTED_VERTICES:
            raise TooLarge(f"at most {MAX_PLG_EXPECTED_VERTICES} vertices")
        seen = set()
        for u, v in self.edges:
            if u == v or not (0 <= u < self.nv and 0 <= v < self.nv):
                raise ConfigError("bad edge")
            key = (min(u, v), max(u, v))
            if key in seen:
                raise ConfigError("duplicate edge")
            seen.add(key)

    @classmethod
    def make(cls, nv: int, edges, labels: dict[int, int] | None = None) -> "PartiallyLabelledGraph":
        tau = [-1] * nv
        for v, c in (labels or {}).items():
            tau[v] = int(c)
        return cls(nv, tuple((int(u), int(v)) for u, v in edges), tuple(tau))

    @property
    def S(self) -> tuple[int, ...]:
        return tuple(v for v in range(self.nv) if self.tau[v] >= 0)

    @property
    def chi(self) -> int:
        return self.nv - len(self.edges)

    @property
    def cc(self) -> int:
        parent = list(range(self.nv))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for u, v in self.edges:
            parent[find(u)] = find(v)
        return len({find(v) for v in range(self.nv)})

    def is_forest(self) -> bool:
        return self.chi == self.cc


def path_plg(s: int, i: int | None = None, j: int | None = None) -> PartiallyLabelledGraph:
    labels = {}
    if i is not None:
        labels[0] = i
    if j is not None:
        labels[s] = j
    return PartiallyLabelledGraph.make(s + 1, [(t, t + 1) for t in range(s)], labels)


def _search_order(h: PartiallyLabelledGraph):
    # each vertex after the first of its component is adjacent to an earlier one
    adj = [[] for _ in range(h.nv)]
    for u, v in h.edges:
        adj[u].append(v)
        adj[v].append(u)
    order, parent, placed = [], [], set()
    for root in sorted(range(h.nv), key=lambda v: (h.tau[v] < 0, v)):
        if root in placed:
            continue
        queue = [(root, -1)]
        placed.add(root)
        while queue:
            v, p = queue.pop(0)
            order.append(v)
            parent.append(p)
            for w in adj[v]:
                if w not in placed:
                    placed.add(w)
                    queue.append((w, v))
    pos = {v: t for t, v in enumerate(order)}
    m = h.nv
    back = np.zeros((m, m), dtype=np.bool_)
    for u, v in h.edges:
        a, b = pos[u], pos[v]
        back[max(a, b), min(a, b)] = True
    par = np.array([pos[p] if p >= 0 else -1 for p in parent], dtype=np.int64)
    lab = np.array([h.tau[v] for v in order], dtype=np.int64)
    return par, back, lab


@numba.njit(cache=True)
def _count_occurrences(indptr, indices, sigma, n, par, back, lab):
    m = len(par)
    img = np.full(m, -1, np.int64)
    pos = np.zeros(m, np.int64)
    used = np.zeros(n, np.bool_)
    total = 0
    t = 0
    pos[0] = 0
    while t >= 0:
        # candidate list for slot t: neighbors of its parent image, or all vertices
        if par[t] >= 0:
            base = img[par[t]]
            lo, hi = indptr[base], indptr[base + 1]
        else:
            lo, hi = 0, n
        if img[t] >= 0:
            used[img[t]] = False
            img[t] = -1
        found = False
        while pos[t] < hi - lo:
            c = indices[lo + pos[t]] if par[t] >= 0 else pos[t]
            pos[t] += 1
            if used[c]:
                continue
            if lab[t] >= 0 and sigma[c] != lab[t]:
                continue
            ok = True
            for s in range(t):
                if back[t, s] and s != par[t]:
                    # binary search for the edge (img[s], c)
                    a, b = indptr[c], indptr[c + 1]
                    x = img[s]
                    while a < b:
                        mid = (a + b) // 2
                        if indices[mid] < x:
                            a = mid + 1
                        else:
                            b = mid
                    if a >= indptr[c + 1] or indices[a] != x:
                        ok = False
                        break
            if not ok:
                continue
            found = True
            img[t] = c
            used[c] = True
            break
        if not found:
            pos[t] = 0
            t -= 1
            continue
        if t == m - 1:
            total += 1
            continue
        t += 1
        pos[t] = 0
        img[t] = -1
    return total


def plg_count(plg: PartiallyLabelledGraph, lg: LabeledGraph) -> int:
    """Number of injective, edge- and label-preserving maps of H into the graph."""
    if plg.nv > MAX_PLG_VERTICES:
        raise TooLarge(f"counting limited to {MAX_PLG_VERTICES} vertices")
    if plg.nv == 0:
        return 1
    par, back, lab = _search_order(plg)
    g = lg.graph
    return int(_count_occurrences(g.indptr, g.indices, lg.sigma, g.n, par, back, lab))


def plg_expected(plg: PartiallyLabelledGraph, n: int, k: int, dm) -> float:
    """(n/k)^chi(H) times the sum over label extensions of the falling-factorial
    ratio, using dM[tau(v), j] choices at every vertex for its j-colored
    neighbors and dividing by dM once per edge."""
    m = np.asarray(getattr(dm, "entries", dm), dtype=np.int64)
    free = [v for v in range(plg.nv) if plg.tau[v] < 0]
    adj = [[] for _ in range(plg.nv)]
    for u, v in plg.edges:
        adj[u].append(v)
        adj[v].append(u)
    total = Fraction(0)
    lab = list(plg.tau)
    for ext in product(range(k), repeat=len(free)):
        for v, c in zip(free, ext):
            lab[v] = c
        num = 1
        for v in range(plg.nv):
            cnt = np.bincount([lab[w] for w in adj[v]], minlength=k)
            for j in range(k):
                top = int(m[lab[v], j])
                if cnt[j] > top:
                    num = 0
                    break
                for t in range(cnt[j]):
                    num *= top - t
            if num == 0:
                break
        if num == 0:
            continue
        den = 1
        for u, v in plg.edges:
            den *= int(m[lab[u], lab[v]])
        total += Fraction(num, den)
    return float(total) * (n / k) ** plg.chi
