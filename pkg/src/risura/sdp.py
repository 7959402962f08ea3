"""Dense Hermitian semidefinite programming for the surface-design step.

Solves  maximize  tr(C W)
        subject to diag(W) = 1,  tr(A_i W) <= b_i,  W >= 0 (Hermitian PSD)

via a dual barrier method: for the dual

        minimize 1^T y + b^T t   s.t.  S := diag(y) + sum_i t_i A_i - C > 0,
                                       t >= 0,

Newton steps on the log-det barrier are cheap at the dimensions used here
(tens of variables), and the central-path primal iterate W = mu * S^-1 has
an exactly unit diagonal and strictly satisfies the trace constraints at
every barrier stage, so the recovered W is feasible by construction with a
duality gap of mu * (dim + #constraints).

An infeasible constraint set makes the dual objective unbounded below; the
solver detects the resulting divergence and raises SdpInfeasibleError.
"""

from __future__ import annotations

import numpy as np

from .exceptions import ContractViolation, SdpInfeasibleError

_DIVERGENCE_FACTOR = 1e12


def _chol_or_none(S):
    try:
        return np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        return None


def sdp_solve(C, constraints=(), rtol=1e-6, max_newton=400):
    """Solve the unit-diagonal SDP above.

    ``constraints`` is a sequence of (A_i, b_i) pairs with Hermitian A_i.
    Returns ``(W, objective, info)`` where ``info`` reports the certified
    duality gap and iteration counts.  Raises SdpInfeasibleError when the
    constraint set is empty of PSD points with unit diagonal.
    """
    C = np.asarray(C, dtype=complex)
    n = C.shape[0]
    if C.ndim != 2 or C.shape[1] != n:
        raise ContractViolation(f"objective matrix must be square, got {C.shape}")
    if np.linalg.norm(C - C.conj().T) > 1e-10 * max(1.0, np.linalg.norm(C)):
        raise ContractViolation("objective matrix is not Hermitian")
    A = [np.asarray(a, dtype=complex) for a, _ in constraints]
    b = np.array([float(v) for _, v in constraints])
    m = len(A)
    for a in A:
        if a.shape != (n, n):
            raise ContractViolation("constraint matrix shape mismatch")

    scale = float(n + np.sum(np.abs(b)) + np.linalg.norm(C)) + 1.0

    # strictly feasible dual start
    t = np.ones(m)
    shift = C - sum(A, np.zeros_like(C)) if m else C
    y0 = float(np.linalg.eigvalsh(shift).max()) + 1.0
    y = np.full(n, y0)

    def s_matrix(y, t):
        S = np.diag(y).astype(complex) - C
        for ti, Ai in zip(t, A):
            S += ti * Ai
        return S

    def dual_obj(y, t):
        return float(np.sum(y) + b @ t) if m else float(np.sum(y))

    def barrier(y, t, mu):
        S = s_matrix(y, t)
        Lc = _chol_or_none(S)
        if Lc is None or (m and np.any(t <= 0)):
            return np.inf, None
        logdet = 2.0 * np.sum(np.log(np.abs(np.diag(Lc))))
        val = dual_obj(y, t) - mu * logdet
        if m:
            val -= mu * np.sum(np.log(t))
        return val, Lc

    mu = max(1.0, float(np.abs(np.linalg.eigvalsh(C)).max()))
    newton_total = 0
    target_gap = rtol * scale

    while True:
        # ---- inner Newton loop at fixed mu --------------------------------
        for _ in range(60):
            f0, Lc = barrier(y, t, mu)
            if not np.isfinite(f0):
                raise SdpInfeasibleError("barrier stage lost feasibility")
            if f0 < -_DIVERGENCE_FACTOR * scale:
                raise SdpInfeasibleError("dual objective unbounded below")
            Sinv = np.linalg.inv(s_matrix(y, t))
            Sinv = 0.5 * (Sinv + Sinv.conj().T)
            diag_sinv = np.diag(Sinv).real

            grad_y = 1.0 - mu * diag_sinv
            H_yy = mu * np.abs(Sinv) ** 2
            if m:
                Mi = [Sinv @ Ai @ Sinv for Ai in A]
                grad_t = np.array([
                    b[i] - mu * np.trace(Sinv @ A[i]).real - mu / t[i]
                    for i in range(m)])
                H_yt = np.stack([np.diag(Mi[i]).real for i in range(m)], axis=1) * mu
                H_tt = mu * np.array([[np.trace(Mi[i] @ A[j]).real
                                       for j in range(m)] for i in range(m)])
                H_tt[np.diag_indices(m)] += mu / t ** 2
                grad = np.concatenate([grad_y, grad_t])
                H = np.block([[H_yy, H_yt], [H_yt.T, H_tt]])
            else:
                grad = grad_y
                H = H_yy

            try:
                step = np.linalg.solve(H + 1e-14 * scale * np.eye(len(grad)), -grad)
            except np.linalg.LinAlgError:
                step = np.linalg.lstsq(H, -grad, rcond=None)[0]
            decrement2 = float(-grad @ step)
            newton_total += 1
            if newton_total > max_newton:
                break
            if decrement2 <= 1e-11 * max(1.0, abs(f0)):
                break

            dy, dt = step[:n], step[n:]
            alpha = 1.0
            while alpha > 1e-14:
                f1, _ = barrier(y + alpha * dy, t + alpha * dt, mu)
                if f1 < f0 - 1e-4 * alpha * decrement2:
                    break
                alpha *= 0.5
            if alpha <= 1e-14:
                break
            y = y + alpha * dy
            t = t + alpha * dt

        gap = mu * (n + m)
        obj_now = dual_obj(y, t)
        if gap <= max(target_gap, rtol * max(1.0, abs(obj_now))) or newton_total > max_newton:
            break
        mu /= 10.0

    S = s_matrix(y, t)
    W = mu * np.linalg.inv(S)
    W = 0.5 * (W + W.conj().T)
    # pin the diagonal exactly (it is already 1 up to Newton tolerance)
    d = 1.0 / np.sqrt(np.clip(np.diag(W).real, 1e-300, None))
    W = W * np.outer(d, d)
    if m:
        worst = max(float(np.trace(W @ Ai).real - bi)
                    for Ai, bi in zip(A, b))
        if worst > 1e-6 * scale:
            raise SdpInfeasibleError(
                "no feasible point found within the iteration budget")
    objective = float(np.trace(C @ W).real)
    info = {
        "gap": float(mu * (n + m)),
        "dual_objective": dual_obj(y, t),
        "newton_steps": newton_total,
        "mu": float(mu),
    }
    return W, objective, info
