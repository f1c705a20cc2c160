"""Exact desk-scale oracle: dense generators, top eigenvalues, the
variational principle, Feynman-Kac bounds, the path lemma, and exact
exceedance probabilities by characteristic-function inversion.

Dense matrices are capped at 2**12 states; from there to 2**16 all
operations go through a matrix-free symmetric operator and Lanczos
iterations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse.linalg as spla

from .bundles import JumpRate
from .config_space import pair_swap_indices
from .towers import QuotientGraph

STATE_SITE_CAP = 16
DENSE_SITE_CAP = 12
EIG_TOL = 1e-10
IDENTITY_ATOL = 1e-12
IDENTITY_RTOL = 1e-9


class SpectralCapError(ValueError):
    pass


@dataclass
class DenseOperator:
    dimension: int
    matrix: np.ndarray
    symmetric: bool = True


class GeneratorAction:
    """Matrix-free application of t_m L_m (+ a V) on R^(2**n).

    Per oriented non-loop edge the swap permutation of the state space and
    the rate values over all states are precomputed once; application is a
    handful of vectorised gathers. Reduction order is fixed, so results are
    deterministic.
    """

    def __init__(self, graph: QuotientGraph, rate: JumpRate, t_m: float,
                 a: float = 0.0, V: np.ndarray | None = None):
        n = graph.n
        if n > STATE_SITE_CAP:
            raise SpectralCapError(f"{n} sites exceeds the 2**{STATE_SITE_CAP} state cap")
        self.n = n
        self.dim = 1 << n
        self.t_m = float(t_m)
        self.a = float(a)
        self.V = None if V is None else np.asarray(V, dtype=np.float64)
        self.terms = []
        edges = graph.exchange_edges()
        for e in edges:
            x, y, _ = e
            perm = pair_swap_indices(n, x, y)
            c_arr = rate.values_all_states(graph, e)
            self.terms.append((perm, self.t_m * c_arr))
        self.total_exit = np.zeros(self.dim)
        states = np.arange(self.dim, dtype=np.int64)
        for (x, y, _), (perm, c_arr) in zip(edges, self.terms):
            active = (((states >> x) & 1) != ((states >> y) & 1)).astype(np.float64)
            self.total_exit += c_arr * active

    def matvec(self, F: np.ndarray) -> np.ndarray:
        out = np.zeros(self.dim)
        for perm, c_arr in self.terms:
            out += c_arr * (F[perm] - F)
        if self.V is not None and self.a != 0.0:
            out += self.a * self.V * F
        return out

    def as_linear_operator(self) -> spla.LinearOperator:
        return spla.LinearOperator((self.dim, self.dim), matvec=self.matvec, dtype=np.float64)

    def dense(self) -> np.ndarray:
        if self.n > DENSE_SITE_CAP:
            raise SpectralCapError(f"{self.n} sites exceeds the dense cap 2**{DENSE_SITE_CAP}")
        M = np.zeros((self.dim, self.dim))
        states = np.arange(self.dim)
        for perm, c_arr in self.terms:
            moved = perm != states
            np.add.at(M, (states[moved], perm[moved]), c_arr[moved])
            np.subtract.at(M, (states[moved], states[moved]), c_arr[moved])
        if self.V is not None and self.a != 0.0:
            M[states, states] += self.a * self.V
        return M


def build_generator(graph: QuotientGraph, rate: JumpRate, t_m: float) -> DenseOperator:
    """Explicit matrix of t_m L_m on functions over configurations."""
    action = GeneratorAction(graph, rate, t_m)
    M = action.dense()
    if not np.allclose(M, M.T, atol=IDENTITY_ATOL, rtol=0):
        raise AssertionError("generator is not symmetric")
    return DenseOperator(action.dim, M, symmetric=True)


def largest_eigenvalue(op: DenseOperator | GeneratorAction) -> float:
    if isinstance(op, DenseOperator):
        if not op.symmetric:
            raise ValueError("largest_eigenvalue requires a symmetric operator")
        if op.dimension <= 2048:
            return float(np.linalg.eigvalsh(op.matrix)[-1])
        lin = spla.aslinearoperator(op.matrix)
        dim = op.dimension
    else:
        if op.dim <= 512:
            return float(np.linalg.eigvalsh(op.dense())[-1])
        lin = op.as_linear_operator()
        dim = op.dim
    rng = np.random.Generator(np.random.Philox(12345))
    v0 = rng.standard_normal(dim)
    vals = spla.eigsh(lin, k=1, which="LA", tol=EIG_TOL, v0=v0, return_eigenvectors=False)
    return float(vals[0])


# -- variational principle ----------------------------------------------------


@dataclass
class VariationalResult:
    lambda_eig: float
    lambda_var: float
    gap: float


def _rayleigh_polish(M: np.ndarray, F: np.ndarray, rounds: int = 4) -> tuple[float, np.ndarray]:
    lam = float(F @ M @ F)
    eye = np.eye(M.shape[0])
    for _ in range(rounds):
        try:
            w = np.linalg.solve(M - (lam + 1e-12) * eye, F)
        except np.linalg.LinAlgError:
            break
        w /= np.linalg.norm(w)
        lam_new = float(w @ M @ w)
        if lam_new >= lam:
            F, lam = w, lam_new
        else:
            break
    return lam, F


def _subspace_ascent(M: np.ndarray, F: np.ndarray, iters: int = 2000,
                     tol: float = 1e-13) -> tuple[float, np.ndarray]:
    """Locally optimal ascent of the Rayleigh quotient: each step maximises
    over span{F, residual, previous direction} (Rayleigh-Ritz on a 3-dim
    subspace), which is gradient ascent with the optimal step and a momentum
    term. Monotone, so it cannot leave the basin it climbs into, and the
    extra directions let it escape saddle plateaus of plain ascent."""
    F = F / np.linalg.norm(F)
    lam = float(F @ M @ F)
    prev = None
    for _ in range(iters):
        resid = M @ F - lam * F
        rnorm = np.linalg.norm(resid)
        if rnorm < tol * max(1.0, abs(lam)):
            break
        basis = [F, resid / rnorm]
        if prev is not None:
            basis.append(prev)
        Q, _ = np.linalg.qr(np.column_stack(basis))
        H = Q.T @ M @ Q
        w, U = np.linalg.eigh(H)
        cand = Q @ U[:, -1]
        prev = F
        F = cand / np.linalg.norm(cand)
        lam = float(w[-1])
    return lam, F


def _variational_top(M: np.ndarray, restarts: int, seed: int) -> float:
    """Variational supremum of <F, M F> over the unit sphere: locally optimal
    subspace ascent from random starts, then Rayleigh-iteration polish of the
    best iterate."""
    rng = np.random.Generator(np.random.Philox(seed))
    best = -math.inf
    best_F = None
    for _ in range(restarts):
        F0 = rng.standard_normal(M.shape[0])
        lam, F = _subspace_ascent(M, F0)
        if lam > best:
            best, best_F = lam, F
    lam, _ = _rayleigh_polish(M, best_F)
    return max(best, lam)


def variational_check(graph: QuotientGraph, rate: JumpRate, t_m: float, a: float,
                      V: np.ndarray, restarts: int = 20, seed: int = 0) -> VariationalResult:
    """Top eigenvalue of t_m L_m + a V against the variational supremum of
    the Rayleigh quotient, computed by projected gradient ascent over
    normalised F with random restarts (plus power refinement and
    Rayleigh-iteration polish)."""
    if graph.n > DENSE_SITE_CAP:
        raise SpectralCapError("variational check needs the dense representation")
    action = GeneratorAction(graph, rate, t_m, a=a, V=V)
    M = action.dense()
    lam_eig = float(np.linalg.eigvalsh(M)[-1])
    best = _variational_top(M, restarts, seed)
    return VariationalResult(lam_eig, best, abs(lam_eig - best))


def restricted_variational_check(edges: list[tuple[int, int]], n_sites: int, a: float,
                                 V: np.ndarray, restarts: int = 20, seed: int = 0) -> VariationalResult:
    """Same check for the rate-one operator (1/2) sum of swaps over an edge
    list on n_sites sites, plus a potential."""
    dim = 1 << n_sites
    M = np.zeros((dim, dim))
    states = np.arange(dim)
    for x, y in edges:
        perm = pair_swap_indices(n_sites, x, y)
        moved = perm != states
        M[states[moved], perm[moved]] += 0.5
        M[states[moved], states[moved]] -= 0.5
    M[states, states] += a * np.asarray(V)
    lam_eig = float(np.linalg.eigvalsh(M)[-1])
    best = _variational_top(M, restarts, seed)
    return VariationalResult(lam_eig, best, abs(lam_eig - best))


# -- Feynman-Kac ---------------------------------------------------------------


@dataclass
class FeynmanKacResult:
    expectation: float
    lam: float
    bound: float
    margin: float  # bound - expectation; the inequality asks margin >= -1e-9


def _lanczos_expv(matvec, v: np.ndarray, T: float, m_max: int = 120, tol: float = 1e-12) -> np.ndarray:
    """exp(T A) v for symmetric A via Lanczos with full reorthogonalisation."""
    beta0 = np.linalg.norm(v)
    if beta0 == 0:
        return v.copy()
    Q = [v / beta0]
    alphas: list[float] = []
    betas: list[float] = []
    prev = None
    for j in range(m_max):
        w = matvec(Q[j])
        alpha = float(Q[j] @ w)
        w = w - alpha * Q[j]
        if prev is not None:
            w = w - betas[-1] * prev
        for q in Q:  # full reorthogonalisation; m is small
            w = w - (q @ w) * q
        alphas.append(alpha)
        beta = float(np.linalg.norm(w))
        Tm = np.diag(alphas) + np.diag(betas, 1) + np.diag(betas, -1)
        expT = scipy.linalg.expm(T * Tm)
        y = beta0 * expT[:, 0]
        if beta < 1e-14 or (j > 2 and abs(beta * expT[j, 0]) * beta0 < tol * max(1.0, np.abs(y).max())):
            return np.column_stack(Q) @ y
        betas.append(beta)
        prev = Q[j]
        Q.append(w / beta)
    return np.column_stack(Q[:-1]) @ y


def feynman_kac(graph: QuotientGraph, rate: JumpRate, t_m: float, a: float,
                V: np.ndarray, T: float) -> FeynmanKacResult:
    """Exact equilibrium expectation of exp(a int_0^T V dt) as
    <1, e^{T(t_m L_m + aV)} 1> under the uniform measure, with the top
    eigenvalue bound e^{T lambda(a)} asserted."""
    action = GeneratorAction(graph, rate, t_m, a=a, V=V)
    ones = np.ones(action.dim)
    if graph.n <= DENSE_SITE_CAP:
        w = scipy.linalg.expm(T * action.dense()) @ ones
    else:
        w = _lanczos_expv(action.matvec, ones, T)
    expectation = float(np.mean(w))
    lam = largest_eigenvalue(action)
    bound = math.exp(T * lam)
    margin = bound - expectation
    if margin < -IDENTITY_RTOL * max(1.0, abs(bound)):
        raise AssertionError(f"Feynman-Kac bound violated: E={expectation}, bound={bound}")
    return FeynmanKacResult(expectation, lam, bound, margin)


# -- path lemma and inclusion constant -----------------------------------------


@dataclass
class PathLemmaResult:
    lhs: float
    rhs: float
    margin: float  # rhs - lhs, must be >= 0


def path_lemma_check(graph: QuotientGraph, sigma, F: np.ndarray) -> PathLemmaResult:
    """lhs = int (pi_{o, sigma o} F)^2 dnu against
    rhs = 4 d(o, sigma o)^2 sum over origin out-edges of int (pi_e F)^2 dnu.

    The inequality is the moving-particle bound; it requires F to be
    invariant under the vertex-transitive action (as in its use, where F is
    the square-root density of an invariant measure)."""
    n = graph.n
    if n > STATE_SITE_CAP:
        raise SpectralCapError("path lemma check exceeds state cap")
    F = np.asarray(F, dtype=np.float64)
    o = graph.origin
    target = graph.vertex(graph.spec.reduce(sigma, graph.level))
    d = graph.distance(o, target)
    diff = F[pair_swap_indices(n, o, target)] - F
    lhs = float(np.mean(diff * diff))
    rhs_sum = 0.0
    for x, y, _ in graph.origin_exchange_edges():
        de = F[pair_swap_indices(n, x, y)] - F
        rhs_sum += float(np.mean(de * de))
    rhs = 4.0 * d * d * rhs_sum
    return PathLemmaResult(lhs, rhs, rhs - lhs)


def inclusion_constant(C: float, c0: float) -> float:
    """Two-blocks budget constant 4 C / c0."""
    if C <= 0 or c0 <= 0:
        raise ValueError("C and c0 must be positive")
    return 4.0 * C / c0


# -- exact exceedance probability ----------------------------------------------


def _char_fn_factory(graph: QuotientGraph, rate: JumpRate, t_m: float, V: np.ndarray, T: float):
    action = GeneratorAction(graph, rate, t_m)
    if graph.n > DENSE_SITE_CAP:
        raise SpectralCapError("exact exceedance needs the dense representation")
    Q = scipy.sparse.csr_matrix(action.dense())
    D = scipy.sparse.diags(np.asarray(V, dtype=np.float64))
    dim = action.dim
    ones = np.ones(dim, dtype=complex)

    def phi(us: np.ndarray) -> np.ndarray:
        # one exponential action on a block-diagonal system for the whole batch
        B = scipy.sparse.block_diag([Q + 1j * u * D for u in us], format="csc")
        w = scipy.sparse.linalg.expm_multiply(T * B, np.tile(ones, len(us)))
        return w.reshape(len(us), dim).mean(axis=1)

    # each state contributes an atom at V(eta) T with the no-event mass
    atom_pos = np.asarray(V, dtype=np.float64) * T
    atom_mass = np.exp(-action.total_exit * T) / dim
    return phi, atom_pos, atom_mass


def exceedance_probability(graph: QuotientGraph, rate: JumpRate, t_m: float,
                           V: np.ndarray, T: float, delta: float,
                           tol: float = 1e-4, max_panels: int = 300) -> float:
    """Exact P( (1/N) int_0^T V(eta(t)) dt >= delta ) for the equilibrium
    start, by Gil-Pelaez inversion of the characteristic function computed
    with matrix exponentials.

    The no-event atoms (each state eta contributes mass 2^-n e^{-R(eta) T}
    at V(eta) T, R the total exit rate) are handled exactly and subtracted
    before inversion so the remainder is a continuous distribution and the
    integrand decays.
    """
    x = delta * graph.n
    phi, atom_pos, atom_mass = _char_fn_factory(graph, rate, t_m, V, T)
    p_atoms = float(atom_mass[atom_pos >= x].sum())
    mass_cont = 1.0 - float(atom_mass.sum())
    if mass_cont <= 1e-15:
        return p_atoms

    # panel width tied to the oscillation scale of e^{-iux}
    scale = max(x, float(np.max(np.abs(atom_pos))), 1e-9)
    h = math.pi / scale
    nodes, weights = np.polynomial.legendre.leggauss(16)
    window = 10
    totals: list[float] = []
    smoothed: list[float] = []
    for p in range(max_panels):
        a, b = p * h, (p + 1) * h
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        us = mid + half * nodes
        pc = phi(us) - np.exp(1j * np.outer(us, atom_pos)) @ atom_mass
        vals = (np.exp(-1j * us * x) * pc).imag / us
        contrib = half * float(np.dot(weights, vals))
        totals.append((totals[-1] if totals else 0.0) + contrib)
        # the partial sums oscillate around the limit with a decaying
        # envelope; the window mean averages the oscillation out, and we stop
        # once that smoothed estimate has settled to the tolerance
        if len(totals) >= window:
            smoothed.append(float(np.mean(totals[-window:])))
        if len(smoothed) >= window:
            recent = smoothed[-window:]
            if max(recent) - min(recent) < tol * math.pi / 2:
                break
    total = smoothed[-1] if smoothed else totals[-1]
    return p_atoms + 0.5 * mass_cont + total / math.pi
