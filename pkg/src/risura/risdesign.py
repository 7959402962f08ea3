"""Surface phase design that minimises a sum of per-user error proxies.

Given channel estimates for the users sharing a slot, the design problem is

    minimize_w  sum_i F(w^H C_i(w) w)   s.t. |w_n| = 1,

where C_i couples user i's effective data-phase signature with the MMSE
covariance at the current phases and F maps the resulting SINR proxy to a
finite-blocklength error estimate.  Two solvers are provided: an alternating
SDR scheme (semidefinite relaxation + Gaussian randomisation per round) and
a cheaper averaged principal-eigenvector scheme with early stopping.

Both support the augmented formulation used when users also have a direct
path: the phase vector gains a last coordinate pinned to 1.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .exceptions import DomainError, SdpInfeasibleError
from .numerics import hermitian_evd, qfunc, vec
from .sdp import sdp_solve

log = logging.getLogger(__name__)

_LOG2E = float(np.log2(np.e))


def error_proxy(x, info_bits, block_len):
    """Finite-blocklength error estimate for SINR proxy x in [0, 1).

    With x' = x/(1-x) (the actual SINR), evaluates the normal-approximation
    gap between 0.5*log2(1+x') and the attempted rate info_bits/block_len.
    Returns a value clipped to [0, 1]; x = 0 gives 1.
    """
    if not 0.0 <= x < 1.0:
        raise DomainError(f"SINR proxy must lie in [0, 1), got {x}")
    if x == 0.0:
        return 1.0
    xp = x / (1.0 - x)
    gap = 0.5 * np.log2(1.0 + xp) - info_bits / block_len
    disp = xp * (xp + 2.0) * _LOG2E ** 2 / (2.0 * (xp + 1.0) ** 2 * block_len)
    if disp <= 0.0:
        return 1.0 if gap < 0 else 0.0
    return float(np.clip(qfunc(gap / np.sqrt(disp)), 0.0, 1.0))


def build_Ei(G, h_hat, b_row, strategy="C0"):
    """Per-user design matrix mapping phases to the stacked data signature.

    C0 (one phase vector per slot): E = b^T (x) G diag(h), shape (M*n_s, N).
    C1 (per-chip phases):           E = diag(b) (x) G diag(h),
    shape (M*n_s, N*n_s).  In both cases E @ w equals the column-stacked
    M x n_s signature block of the user.
    """
    Gh = G * np.asarray(h_hat)[None, :]
    b = np.asarray(b_row)
    if strategy == "C0":
        return np.kron(b.reshape(-1, 1), Gh)
    if strategy == "C1":
        return np.kron(np.diag(b), Gh)
    raise DomainError(f"unknown surface strategy {strategy!r}")


@dataclass
class DesignProblem:
    """Inputs of one slot's phase design.

    ``E`` (and ``e`` when a direct path exists) already include the data
    power factor, so w^H C_i w is the unitless SINR proxy in [0, 1).
    """

    E: list                         # per-user (M*n_s, dim) matrices
    sigma_z2: float
    e: list | None = None           # per-user direct-contribution vectors
    alpha_bar: float = 0.53
    t_iter: int = 10
    t_sdr: int = 50
    alpha2: float = 1e-4
    info_bits: int = 106
    block_len: int = 256

    @property
    def direct(self):
        return self.e is not None

    @property
    def dim(self):
        return self.E[0].shape[1]

    @property
    def n_users(self):
        return len(self.E)


def make_problem(G, h_rows, b_rows, p_c, sigma_z2, strategy="C0",
                 d_cols=None, **kwargs):
    """Assemble a :class:`DesignProblem` from channel estimates."""
    root = np.sqrt(p_c)
    E = [root * build_Ei(G, h, b, strategy) for h, b in zip(h_rows, b_rows)]
    e = None
    if d_cols is not None:
        e = [root * vec(np.outer(d, b)) for d, b in zip(d_cols, b_rows)]
    return DesignProblem(E=E, sigma_z2=sigma_z2, e=e, **kwargs)


# ---------------------------------------------------------------------------
# coupling matrices and costs
# ---------------------------------------------------------------------------

def _mmse_cov(signatures, sigma_z2, dim):
    R = sigma_z2 * np.eye(dim, dtype=complex)
    for tvec in signatures:
        R += np.outer(tvec, tvec.conj())
    return R


def compute_Ci(E_list, w, sigma_z2):
    """Coupling matrices C_i = E_i^H R^-1 E_i at the phases ``w``.

    R is the MMSE covariance built from the signatures t_i = E_i w, so
    w^H C_i w is user i's SINR proxy and always lands in [0, 1).
    """
    sigs = [E @ w for E in E_list]
    R = _mmse_cov(sigs, sigma_z2, E_list[0].shape[0])
    cf = cho_factor(R)
    return [E.conj().T @ cho_solve(cf, E) for E in E_list]


def compute_Ci_direct(E_list, e_list, w, sigma_z2):
    """Augmented coupling matrices for users with a direct-path term.

    Signatures are t_i = E_i w + e_i; each C_i acts on the augmented vector
    (w; 1), its last row/column carrying the direct-path cross terms.
    """
    sigs = [E @ w + ev for E, ev in zip(E_list, e_list)]
    R = _mmse_cov(sigs, sigma_z2, E_list[0].shape[0])
    cf = cho_factor(R)
    out = []
    for E, ev in zip(E_list, e_list):
        Eaug = np.concatenate([E, ev[:, None]], axis=1)
        out.append(Eaug.conj().T @ cho_solve(cf, Eaug))
    return out


def _coupling(problem, w_bare):
    if problem.direct:
        return compute_Ci_direct(problem.E, problem.e, w_bare, problem.sigma_z2)
    return compute_Ci(problem.E, w_bare, problem.sigma_z2)


def _proxy_cost(problem, C_list, w_full):
    total = 0.0
    for C in C_list:
        sinr = float(np.real(w_full.conj() @ C @ w_full))
        sinr = min(max(sinr, 0.0), 1.0 - 1e-12)
        total += error_proxy(sinr, problem.info_bits, problem.block_len)
    return total


def design_cost(problem, w):
    """Self-consistent cost sum_i F(sinr_i) with the covariance rebuilt at w.

    Accepts the bare phase vector; the augmented coordinate is appended
    internally for direct-link problems.
    """
    w_bare = np.asarray(w)[:problem.dim]
    return _proxy_cost(problem, _coupling(problem, w_bare),
                       _augment(problem, w_bare))


def phase_project(v):
    """Entrywise projection onto the unit circle; zero entries become 1."""
    v = np.asarray(v, dtype=complex)
    mag = np.abs(v)
    out = np.ones_like(v)
    nz = mag > 0
    out[nz] = v[nz] / mag[nz]
    return out


def random_phases(dim, rng):
    """Uniform unit-modulus vector, the standard initialisation/baseline."""
    return np.exp(2j * np.pi * rng.random(dim))


@dataclass
class RISPhaseVector:
    """Designed phases; ``w`` includes the pinned 1 when ``augmented``."""

    w: np.ndarray
    augmented: bool = False
    history: list = field(default_factory=list)

    @property
    def bare(self):
        return self.w[:-1] if self.augmented else self.w


# ---------------------------------------------------------------------------
# solvers
# ---------------------------------------------------------------------------

def randomization_round(W_mat, cost_fn, t_sdr, rng):
    """Gaussian randomisation: draw candidates from W, phase-project, keep best.

    ``cost_fn`` maps a unit-modulus candidate (bare, without the augmented
    coordinate) to the objective being minimised.  Returns (w, cost).
    """
    evals, evecs = hermitian_evd(W_mat)
    half = evecs * np.sqrt(np.clip(evals, 0.0, None))[None, :]
    best_w, best_cost = None, np.inf
    for _ in range(t_sdr):
        r = (rng.standard_normal(W_mat.shape[0])
             + 1j * rng.standard_normal(W_mat.shape[0])) / np.sqrt(2.0)
        cand = half @ r
        w = phase_project(cand)
        cost = cost_fn(w)
        if cost < best_cost:
            best_w, best_cost = w, cost
    return best_w, best_cost


def _augment(problem, w_bare):
    if problem.direct:
        return np.concatenate([w_bare, [1.0]])
    return w_bare


def asdr(problem, rng):
    """Alternating semidefinite-relaxation design.

    Each round freezes the coupling matrices at the previous phases, solves
    the relaxed SDP (unit diagonal, per-user trace caps alpha_bar), and
    rounds by Gaussian randomisation, scoring every candidate with the
    self-consistent proxy cost.  If the trace caps make the SDP infeasible
    they are dropped for that round.  Returns the best iterate seen.
    """
    w = random_phases(problem.dim, rng)
    best_w, best_cost = w, design_cost(problem, w)
    history = []
    for it in range(problem.t_iter):
        C_list = _coupling(problem, w)
        Gbar = sum(C_list)
        cons = [(C, problem.alpha_bar) for C in C_list]
        try:
            W_mat, sdp_obj, _ = sdp_solve(Gbar, cons)
        except SdpInfeasibleError:
            log.warning("design SDP infeasible at round %d; dropping trace caps", it)
            W_mat, sdp_obj, _ = sdp_solve(Gbar, [])
        if problem.direct:
            # rotate candidates so the augmented coordinate lands on +1
            def rounded(cand):
                tail = cand[-1]
                if abs(tail) == 0:
                    tail = 1e-12
                cand = cand * np.conj(tail / abs(tail))
                return phase_project(cand[:problem.dim])

            evals, evecs = hermitian_evd(W_mat)
            half = evecs * np.sqrt(np.clip(evals, 0.0, None))[None, :]
            w, cost = None, np.inf
            for _ in range(problem.t_sdr):
                r = (rng.standard_normal(problem.dim + 1)
                     + 1j * rng.standard_normal(problem.dim + 1)) / np.sqrt(2.0)
                cand = rounded(half @ r)
                c = design_cost(problem, cand)
                if c < cost:
                    w, cost = cand, c
        else:
            w, cost = randomization_round(
                W_mat, lambda v: design_cost(problem, v), problem.t_sdr, rng)
        history.append({"iteration": it, "cost": cost, "sdp_objective": sdp_obj})
        if cost < best_cost:
            best_w, best_cost = w, cost
    return RISPhaseVector(w=_augment(problem, best_w), augmented=problem.direct,
                          history=history)


def aevd(problem, rng):
    """Averaged principal-eigenvector design with early stopping.

    Each round takes the top eigenvector of every user's coupling matrix,
    averages them, and phase-projects.  Eigenvectors are first rotated to a
    canonical phase (largest entry positive real; the direct variant instead
    rescales by the augmented coordinate) so the average is coherent.  Keeps
    the iterate with the lowest self-consistent proxy cost and stops early
    once the cost falls under alpha2.
    """
    w = random_phases(problem.dim, rng)
    best_w, best_cost = w, np.inf
    history = []
    for it in range(problem.t_iter):
        C_list = _coupling(problem, w)
        vecs = []
        for C in C_list:
            _, U = hermitian_evd(C)
            q = U[:, 0]
            if problem.direct:
                tail = q[-1]
                if abs(tail) == 0:
                    tail = 1e-12
                q = q / tail
                vecs.append(q[:problem.dim])
            else:
                anchor = q[int(np.argmax(np.abs(q)))]
                if abs(anchor) == 0:
                    anchor = 1e-12
                q = q * np.conj(anchor / abs(anchor))
                vecs.append(q)
        w = phase_project(np.mean(vecs, axis=0))
        cost = design_cost(problem, w)
        history.append({"iteration": it, "cost": cost, "sdp_objective": None})
        if cost < best_cost:
            best_w, best_cost = w, cost
        if cost < problem.alpha2:
            break
    return RISPhaseVector(w=_augment(problem, best_w), augmented=problem.direct,
                          history=history)
