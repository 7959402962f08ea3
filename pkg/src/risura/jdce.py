"""Joint pilot detection and channel estimation on the pilot block.

Iterative greedy detector: each round picks the pilot row that captures the
most residual energy, locates the strongest path on the angle grid for that
pilot, re-estimates all collected path gains jointly by least squares, and
subtracts the fit.  The loop ends on an energy-based noise test, on a
duplicate detection, or at the iteration cap.

Works either on the cascaded (surface) link alone or, in the direct-link
variant, also on the user-to-station path, choosing per round whichever
branch carries the larger pilot metric.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import angle_grid, grid_steering_matrix, steering_vector
from .exceptions import SingularSystemError
from .numerics import ls_solve, vec


@dataclass
class Detection:
    """One detected (pilot, path) pair."""

    pilot: int
    kind: str            # "ris" (cascaded) or "direct"
    phi: float
    psi: float
    gain: complex = 0j
    metric: float = 0.0
    iteration: int = 0


@dataclass
class ChannelEstimates:
    """Per-pilot channel reconstructions assembled from detections."""

    pilots: list
    h_hat: dict          # pilot -> length-N cascaded-link row estimate
    d_hat: dict          # pilot -> length-M direct-link column estimate


# ---------------------------------------------------------------------------
# single detection steps
# ---------------------------------------------------------------------------

def _safe_ratio(num, den):
    out = np.zeros_like(num)
    good = den > 0
    out[good] = num[good] / den[good]
    return out


def detect_pilot(Y, w_ps, pilot_rows):
    """Most energetic pilot row under the cascaded signature metric.

    Metric for row p: trace(Q R Q^H) / trace(Q Q^H) with Q = W_ps diag(p)
    and R = Y^H Y.  Returns (row index, metric value).
    """
    R = Y.conj().T @ Y
    gram_w = w_ps.conj().T @ w_ps                    # (n_p, n_p)
    M = R * gram_w.T
    tmp = pilot_rows @ M
    nums = np.einsum("kt,kt->k", tmp, pilot_rows.conj()).real
    col2 = np.sum(np.abs(w_ps) ** 2, axis=0)
    dens = np.abs(pilot_rows) ** 2 @ col2
    metrics = _safe_ratio(nums, dens)
    k_hat = int(np.argmax(metrics))
    return k_hat, float(metrics[k_hat])


def detect_pilot_direct(Y, pilot_rows):
    """Most energetic pilot row under the plain (direct-link) metric.

    Metric for row p: p R p^H / ||p||^2 with R = Y^H Y.
    """
    R = Y.conj().T @ Y
    tmp = pilot_rows @ R
    nums = np.einsum("kt,kt->k", tmp, pilot_rows.conj()).real
    dens = np.sum(np.abs(pilot_rows) ** 2, axis=1)
    metrics = _safe_ratio(nums, dens)
    k_hat = int(np.argmax(metrics))
    return k_hat, float(metrics[k_hat])


def detect_path(Y, G, w_ps, p_row, n1, n2, spacing=0.5):
    """Strongest cascaded path on the surface angle grid for a given pilot.

    For grid response a the score is trace(F R F^H)/trace(F F^H) with
    F = G diag(a) W_ps diag(p).  Both traces reduce to quadratic forms
    a^H (G^H G o (A X A^H)^T) a with A = W_ps diag(p), which lets one matrix
    product score the whole grid.  Returns (phi, psi, metric).
    """
    A = w_ps * p_row[None, :]
    R = Y.conj().T @ Y
    gram_g = G.conj().T @ G
    num_mat = gram_g * (A @ R @ A.conj().T).T
    den_mat = gram_g * (A @ A.conj().T).T
    Phi = grid_steering_matrix(n1, n2, spacing)
    nums = np.einsum("ng,ng->g", Phi.conj(), num_mat @ Phi).real
    dens = np.einsum("ng,ng->g", Phi.conj(), den_mat @ Phi).real
    metrics = _safe_ratio(nums, dens)
    best = int(np.argmax(metrics))
    i, j = divmod(best, n2)
    return float(angle_grid(n1)[i]), float(angle_grid(n2)[j]), float(metrics[best])


def detect_path_direct(Y, p_row, m1, m2, spacing=0.5):
    """Strongest direct path on the station angle grid for a given pilot.

    Matched-filter magnitude |a^* Y p^H| over the grid.  Returns
    (phi, psi, metric).
    """
    c = Y @ p_row.conj()
    Phi = grid_steering_matrix(m1, m2, spacing)
    metrics = np.abs(Phi.conj().T @ c)
    best = int(np.argmax(metrics))
    i, j = divmod(best, m2)
    return float(angle_grid(m1)[i]), float(angle_grid(m2)[j]), float(metrics[best])


def signature(det, G, w_ps, pilot_rows, power, spacing=0.5, dims=None):
    """Vectorised noiseless pilot response of a unit-gain detection.

    ``dims`` carries (m1, m2, n1, n2).  The cascaded signature is
    sqrt(power * N) * vec(G diag(a_N) W_ps diag(p)); the direct one is
    sqrt(power * M) * vec(a_M^T p), so the fitted coefficient estimates the
    physical path gain itself.
    """
    m1, m2, n1, n2 = dims
    p = pilot_rows[det.pilot]
    if det.kind == "ris":
        a = steering_vector(n1, n2, det.phi, det.psi, spacing)
        block = (G * a[None, :]) @ (w_ps * p[None, :])
        return np.sqrt(power * n1 * n2) * vec(block)
    a = steering_vector(m1, m2, det.phi, det.psi, spacing)
    return np.sqrt(power * m1 * m2) * vec(np.outer(a, p))


def sic_update(y0, signatures):
    """Joint LS refit of all detections and the resulting residual.

    ``y0`` is the vectorised original pilot block; ``signatures`` the list of
    detection signature vectors.  Returns (gains, residual, residual energy).
    Raises SingularSystemError if two signatures coincide.
    """
    U = np.stack(signatures, axis=1)
    gains = ls_solve(U, y0)
    residual = y0 - U @ gains
    return gains, residual, float(np.vdot(residual, residual).real)


# ---------------------------------------------------------------------------
# full loops
# ---------------------------------------------------------------------------

def _run_loop(Y_p, G, w_ps, pilot_rows, power, sigma_z2, alpha1, t_max,
              dims, spacing, branches, trace):
    m1, m2, n1, n2 = dims
    M, n_p = Y_p.shape
    y0 = vec(Y_p)
    Y_res = Y_p
    energy = float(np.vdot(y0, y0).real)
    noise_floor = M * n_p * sigma_z2

    detections = []
    sigs = []
    seen = set()
    gains = np.zeros(0, dtype=complex)

    for it in range(t_max):
        # one candidate per enabled branch; the two pilot metrics are not on
        # a common scale, so candidates compete on residual energy instead
        candidates = []
        if "ris" in branches:
            k_hat, metric = detect_pilot(Y_res, w_ps, pilot_rows)
            phi, psi, _ = detect_path(Y_res, G, w_ps, pilot_rows[k_hat],
                                      n1, n2, spacing)
            candidates.append(Detection(pilot=k_hat, kind="ris", phi=phi,
                                        psi=psi, metric=metric, iteration=it))
        if "direct" in branches:
            k_hat, metric = detect_pilot_direct(Y_res, pilot_rows)
            phi, psi, _ = detect_path_direct(Y_res, pilot_rows[k_hat],
                                             m1, m2, spacing)
            candidates.append(Detection(pilot=k_hat, kind="direct", phi=phi,
                                        psi=psi, metric=metric, iteration=it))

        det, sig_new, fit = None, None, None
        for cand in candidates:
            if (cand.pilot, cand.kind, cand.phi, cand.psi) in seen:
                continue
            sig_c = signature(cand, G, w_ps, pilot_rows, power, spacing, dims)
            try:
                trial = sic_update(y0, sigs + [sig_c])
            except SingularSystemError:
                continue
            if fit is None or trial[2] < fit[2]:
                det, sig_new, fit = cand, sig_c, trial
        if det is None:
            break
        new_gains, residual, new_energy = fit

        if (energy - new_energy) / noise_floor <= alpha1:
            break   # the new component explains only noise-level energy

        sigs.append(sig_new)
        seen.add((det.pilot, det.kind, det.phi, det.psi))
        detections.append(det)
        gains = new_gains
        Y_res = residual.reshape(M, n_p, order="F")
        energy = new_energy
        if trace is not None:
            trace.append({"iteration": it, "pilot": det.pilot,
                          "kind": det.kind, "phi": det.phi, "psi": det.psi,
                          "metric": det.metric,
                          "residual_energy": new_energy})

    for det, g in zip(detections, gains):
        det.gain = complex(g)
    return detections


def jdce_run(Y_p, G, w_ps, pilot_rows, power, sigma_z2, alpha1, t_max,
             n1, n2, spacing=0.5, trace=None):
    """Detector/estimator for the cascaded-only (blocked direct link) case.

    Returns (detections, estimates).
    """
    M = Y_p.shape[0]
    dims = (1, M, n1, n2)   # station split is irrelevant without direct paths
    dets = _run_loop(Y_p, G, w_ps, pilot_rows, power, sigma_z2, alpha1,
                     t_max, dims, spacing, branches=("ris",), trace=trace)
    return dets, assemble_estimates(dets, dims, spacing)


def jdce_run_direct(Y_p, G, w_ps, pilot_rows, power, sigma_z2, alpha1, t_max,
                    m1, m2, n1, n2, spacing=0.5, cascaded=True, trace=None):
    """Detector/estimator when users may also reach the station directly.

    Each round evaluates both branch detectors and keeps whichever candidate
    removes more residual energy; with ``cascaded=False`` (no surface
    deployed) only the direct branch runs.  Returns (detections, estimates).
    """
    dims = (m1, m2, n1, n2)
    branches = ("ris", "direct") if cascaded else ("direct",)
    dets = _run_loop(Y_p, G, w_ps, pilot_rows, power, sigma_z2, alpha1,
                     t_max, dims, spacing, branches=branches, trace=trace)
    return dets, assemble_estimates(dets, dims, spacing)


def assemble_estimates(detections, dims, spacing=0.5):
    """Combine per-path detections into per-pilot channel estimates.

    Cascaded estimate: h = sum gain * sqrt(N) * a_N(phi, psi); direct
    estimate: d = sum gain * sqrt(M) * a_M(phi, psi)^T.
    """
    m1, m2, n1, n2 = dims
    h_hat, d_hat = {}, {}
    pilots = []
    for det in detections:
        if det.pilot not in pilots:
            pilots.append(det.pilot)
        if det.kind == "ris":
            a = steering_vector(n1, n2, det.phi, det.psi, spacing)
            acc = h_hat.setdefault(det.pilot, np.zeros(n1 * n2, dtype=complex))
            acc += det.gain * np.sqrt(n1 * n2) * a
        else:
            a = steering_vector(m1, m2, det.phi, det.psi, spacing)
            acc = d_hat.setdefault(det.pilot, np.zeros(m1 * m2, dtype=complex))
            acc += det.gain * np.sqrt(m1 * m2) * a
    return ChannelEstimates(pilots=pilots, h_hat=h_hat, d_hat=d_hat)
