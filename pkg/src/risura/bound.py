"""Approximate achievability bound for the slotted cascaded-channel system.

The per-user error probability is bounded by three terms: a codeword
collision term, a power-constraint violation term, and a Monte-Carlo
estimate of the probability that the genie-order scatterer peeling stops
early.  The stopping analysis rests on a Chernoff/Gallager argument whose
moment-generating-function pieces reduce, through a Gaussian-quadratic
expectation identity, to products over the eigenvalues of the scaled
surface-to-receiver Gram matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import angle_grid, assemble_ris_bs, sample_paths
from .exceptions import DomainError
from .numerics import chi2_cdf, sample_cn


def p_coll(k_a, b_bits):
    """Probability that some pair of the K_a users picks the same message."""
    if k_a < 2:
        return 0.0
    return min(1.0, math.comb(k_a, 2) / float(2 ** b_bits))


def p_cons(k_a, n, power, p_prime):
    """Union bound on any user's codeword exceeding the power constraint.

    Codeword entries are CN(0, P'), so the squared norm is a scaled
    chi-squared with 2n degrees of freedom.
    """
    if p_prime == 0.0:
        return 0.0
    tail = 1.0 - chi2_cdf(2.0 * n * power / p_prime, 2 * n)
    return min(1.0, k_a * tail)


def lemma1_rhs(A, Bm, r):
    """Closed form of E[exp(a^H Bm a + Re(r a))] for a ~ CN(0, A).

    Equals det(I - A Bm)^-1 * exp(0.25 r (I - A Bm)^-1 A r^H); requires
    I - A Bm positive definite (the spectrum of A Bm matches the Hermitian
    A^1/2 Bm A^1/2, so it is real), which caps the quadratic growth.  The
    expectation is real and positive; a float is returned.
    """
    A = np.asarray(A, dtype=complex)
    Bm = np.asarray(Bm, dtype=complex)
    r = np.asarray(r, dtype=complex).reshape(-1)
    k = A.shape[0]
    C = np.eye(k, dtype=complex) - A @ Bm
    evals = np.linalg.eigvals(C)
    if np.any(evals.real <= 0.0):
        raise DomainError("I - A*Bm must be positive definite")
    # (A^-1 - Bm)^-1 = (I - A Bm)^-1 A, a Hermitian PD matrix
    quad = 0.25 * (r @ np.linalg.solve(C, A) @ r.conj())
    return float(np.real(np.exp(quad) / np.linalg.det(C)))


def best_qpsk_point(mu):
    """QPSK point maximizing Re(u * conj(mu)); ties break toward +."""
    s = 1.0 / np.sqrt(2.0)
    re = s if mu.real >= 0 else -s
    im = s if mu.imag >= 0 else -s
    return complex(re, im)


def lambda_max(delta_k2, sigma_g, sigma_z2):
    """Largest admissible Chernoff parameter for the given interference level."""
    smax = float(np.max(sigma_g))
    return 2.0 / math.sqrt(smax * sigma_z2 + delta_k2 * smax ** 2)


def eps_lambda(lam, delta_k2, mu_i, u_bar, sigma_g, sigma_z2, n):
    """Chernoff factor for one candidate scatterer at parameter lambda.

    Evaluates exp(-n * sum_j log(1 + c1*s_j + c2*s_j^2)) over the
    eigenvalues s_j of P' G G^H.  Returns inf when a factor is nonpositive
    (lambda too aggressive for this interference level).
    """
    if lam < 0.0:
        raise DomainError("lambda must be nonnegative")
    lam0 = lambda_max(delta_k2, sigma_g, sigma_z2)
    if lam >= lam0:
        raise DomainError(f"lambda {lam} outside [0, {lam0})")
    if lam == 0.0:
        return 1.0
    s1 = lam * (u_bar * np.conj(mu_i)).real
    s2 = -0.5 * lam ** 2
    c1 = s2 * sigma_z2 + s1
    c2 = s2 * delta_k2 - 0.25 * s1 ** 2
    factors = 1.0 + c1 * sigma_g + c2 * sigma_g ** 2
    if np.any(factors <= 0.0):
        return np.inf
    with np.errstate(over="ignore"):    # a huge exponent is a valid inf
        return float(np.exp(-n * np.sum(np.log(factors))))


@dataclass
class BoundConfig:
    """Inputs of the achievability-bound evaluator."""

    k_a: int = 2
    b_bits: int = 100
    n: int = 2560          # channel uses covered by the peeling stage
    m1: int = 8
    m2: int = 8
    n1: int = 8
    n2: int = 8
    power: float = 0.1     # per-symbol power constraint P
    p_prime: float = 0.05  # codebook per-symbol variance P'
    sigma_z2: float = 1e-2
    l_g: int = 2
    l_r: int | tuple = 2   # per-user path count(s)
    ris_bs_distance: float = 100.0
    user_dist_range: tuple = (200.0, 300.0)
    l0: float = 1e-3
    alpha_pl: float = 2.3
    lambda_points: int = 64
    rho_options: tuple = (0, 1)
    mc_count: int = 100

    @property
    def m(self):
        return self.m1 * self.m2

    @property
    def n_ris(self):
        return self.n1 * self.n2

    def path_counts(self):
        if np.isscalar(self.l_r):
            return [int(self.l_r)] * self.k_a
        counts = list(self.l_r)
        if len(counts) != self.k_a:
            raise DomainError("per-user path counts must have K_a entries")
        return counts

    @property
    def l_t(self):
        return int(sum(self.path_counts()))


def _lambda_grid(lam0, points):
    return np.geomspace(lam0 * 1e-6, lam0 * 0.999, points)


def pstop_bound(k, gains, sigma_g, cfg):
    """Upper bound on the peeling stage stopping at its k-th iteration.

    ``gains`` must be sorted ascending by magnitude.  The candidate search
    walks every window of the L_T - k + 1 weakest-possible survivor sets,
    takes each candidate's best Chernoff parameter, keeps the worst
    candidate, and finally applies the union-cardinality exponent with the
    trivial rho = 0 bound as fallback.
    """
    gains = np.asarray(gains)
    l_t = gains.size
    if not 1 <= k <= l_t:
        raise DomainError(f"iteration index {k} outside 1..{l_t}")
    size = l_t - k + 1
    eps_star = 0.0
    for i in range(size - 1, l_t):          # 0-based candidate index
        window = gains[i - size + 1:i + 1]
        delta_k2 = float(np.sum(np.abs(window) ** 2))
        mu_i = complex(gains[i])
        u_bar = best_qpsk_point(mu_i)
        lam0 = lambda_max(delta_k2, sigma_g, cfg.sigma_z2)
        best = 1.0
        for lam in _lambda_grid(lam0, cfg.lambda_points):
            val = eps_lambda(lam, delta_k2, mu_i, u_bar, sigma_g,
                             cfg.sigma_z2, cfg.n)
            if val < best:
                best = val
        eps_star = max(eps_star, best)
    out = 1.0
    for rho in cfg.rho_options:
        if rho == 0:
            cand = 1.0
        else:
            log_p = rho * ((2.0 + cfg.b_bits) * math.log(2.0)
                           + math.log(cfg.n_ris) + math.log(max(eps_star, 1e-300)))
            cand = math.exp(min(0.0, log_p))
        out = min(out, cand)
    return min(1.0, max(0.0, out))


def users_covered(path_counts, detected):
    """Users whose paths all sit among the ``detected`` strongest gains.

    Paths are assigned to users contiguously along the ascending-sorted
    gain list, so user j owns a fixed block of positions; it is covered
    once that whole block lies in the top ``detected`` positions.
    """
    l_t = sum(path_counts)
    cut = l_t - detected
    covered = 0
    start = 0
    for c in path_counts:
        if start >= cut:
            covered += 1
        start += c
    return covered


def pmis_given_pstops(pstops, k_counts, k_a):
    """Missed-user mass of the stopping-time distribution."""
    total = 0.0
    alive = 1.0
    for p_k, k_k in zip(pstops, k_counts):
        total += (1.0 - k_k / k_a) * p_k * alive
        alive *= 1.0 - p_k
    return min(1.0, max(0.0, total))


def _sample_sigma_g(cfg, rng):
    paths = sample_paths(cfg.l_g, cfg.ris_bs_distance,
                         angle_grid(cfg.m1), angle_grid(cfg.m2),
                         cfg.l0, cfg.alpha_pl, rng,
                         tx_grid_phi=angle_grid(cfg.n1),
                         tx_grid_psi=angle_grid(cfg.n2))
    G = assemble_ris_bs(paths, cfg.m1, cfg.m2, cfg.n1, cfg.n2)
    sig = np.linalg.eigvalsh(cfg.p_prime * (G @ G.conj().T))
    return np.clip(sig.real, 0.0, None)


def pmis_mc(cfg, rng):
    """Monte-Carlo average of the missed-user bound over gain realizations."""
    counts = cfg.path_counts()
    l_t = cfg.l_t
    total = 0.0
    for _ in range(cfg.mc_count):
        sigma_g = _sample_sigma_g(cfg, rng)
        gains = []
        for c in counts:
            d = rng.uniform(*cfg.user_dist_range, size=c)
            var = cfg.l0 * d ** (-cfg.alpha_pl)
            gains.extend(sample_cn(v, rng) for v in var)
        gains = np.asarray(gains)
        gains = gains[np.argsort(np.abs(gains), kind="stable")]
        pstops = [pstop_bound(k, gains, sigma_g, cfg) for k in range(1, l_t + 1)]
        k_counts = [users_covered(counts, k - 1) for k in range(1, l_t + 1)]
        total += pmis_given_pstops(pstops, k_counts, cfg.k_a)
    return total / cfg.mc_count


@dataclass
class BoundResult:
    p_coll: float
    p_cons: float
    p_mis: float
    eps: float


def pupe_bound(cfg, rng):
    """Assemble the three-term per-user error bound."""
    coll = p_coll(cfg.k_a, cfg.b_bits)
    cons = p_cons(cfg.k_a, cfg.n, cfg.power, cfg.p_prime)
    mis = pmis_mc(cfg, rng)
    return BoundResult(p_coll=coll, p_cons=cons, p_mis=mis,
                       eps=min(1.0, coll + cons + mis))
