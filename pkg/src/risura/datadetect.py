"""Data-phase detection: linear MMSE soft estimates with codeword-level SIC.

After the pilot phase has produced per-user channel estimates and the
surface phases are fixed, every user's data symbols arrive through a static
M x n_s spatial signature.  Symbols are recovered with an MMSE filter whose
error variance feeds soft LLRs into the list decoder; successfully decoded
users are re-encoded and subtracted, and the loop repeats until nobody new
decodes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .codec import bpsk, crc_append, polar_encode, scl_decode_batch
from .numerics import vec


def build_Ti(G, h_hat, w_cs, b_row, p_c, d_hat=None):
    """Effective M x n_s data signature of one user at fixed phases.

    Cascaded part G diag(h) W_cs diag(b), plus the rank-one direct part
    d b^T when a direct estimate is given, all scaled by sqrt(p_c).
    """
    T = (G * np.asarray(h_hat)[None, :]) @ w_cs * np.asarray(b_row)[None, :]
    if d_hat is not None:
        T = T + np.outer(d_hat, b_row)
    return np.sqrt(p_c) * T


def stack_signatures(T_list):
    """Column-stack each signature into the (M*n_s, K) MMSE dictionary."""
    return np.stack([vec(T) for T in T_list], axis=1)


def mmse_detect(y, Tbar, sigma_z2):
    """LMMSE symbol estimates for one data symbol across all users.

    Returns (v_hat, delta): the filtered estimates T^H R^-1 y and the
    per-user residual factors diag(I - T^H R^-1 T), each in (0, 1).
    """
    V, delta = mmse_detect_all(np.asarray(y).reshape(-1, 1), Tbar, sigma_z2)
    return V[:, 0], delta


def mmse_detect_all(Y, Tbar, sigma_z2):
    """Batched LMMSE over all n_d data symbols at once.

    Y is (M*n_s, n_d) with one column per data symbol; returns the (K, n_d)
    estimate matrix together with the shared residual factors.
    """
    dim, k = Tbar.shape
    R = sigma_z2 * np.eye(dim, dtype=complex) + Tbar @ Tbar.conj().T
    cf = cho_factor(R)
    RinvT = cho_solve(cf, Tbar)
    V = RinvT.conj().T @ Y
    delta = 1.0 - np.real(np.einsum("ij,ij->j", Tbar.conj(), RinvT))
    delta = np.clip(delta, 1e-15, None)
    return V, delta


def llr_compute(v_hat, delta):
    """Soft demapping of BPSK estimates: 2 Re(v)/delta, positive means bit 0."""
    return 2.0 * np.real(v_hat) / np.reshape(delta, (-1,) + (1,) * (np.ndim(v_hat) - 1))


def sic_remove(Y, T_i, v_row):
    """Subtract one decoded user's contribution from the stacked data block."""
    return Y - np.outer(vec(T_i), v_row)


@dataclass
class DecodedUser:
    pilot: int
    payload: np.ndarray   # information bits, CRC stripped
    metric: float
    round: int


def data_phase(Y, entries, code, sigma_z2, list_size=32, crc_width=16):
    """Iterative MMSE-SIC over the whole data block.

    ``Y`` is the received (M*n_s, n_d) stack, ``entries`` a list of
    (pilot_index, T_i) pairs from the pilot phase.  Each round runs the
    joint MMSE filter over the still-pending users, list-decodes everybody
    in one batch, subtracts the users whose CRC checks, and repeats until a
    round decodes nobody.  Returns (decoded users, residual stack).
    """
    Y = np.asarray(Y, dtype=complex)
    pending = list(range(len(entries)))
    decoded = []
    rnd = 0
    while pending:
        Tbar = stack_signatures([entries[i][1] for i in pending])
        V, delta = mmse_detect_all(Y, Tbar, sigma_z2)
        llr = llr_compute(V, delta)
        payloads, ok, metrics = scl_decode_batch(llr, code, list_size=list_size,
                                                 crc_width=crc_width)
        hits = [j for j in range(len(pending)) if ok[j]]
        if not hits:
            break
        for j in hits:
            i = pending[j]
            bits = crc_append(payloads[j], crc_width)
            v_ref = bpsk(polar_encode(bits, code))
            Y = sic_remove(Y, entries[i][1], v_ref)
            decoded.append(DecodedUser(pilot=entries[i][0],
                                       payload=payloads[j],
                                       metric=float(metrics[j]),
                                       round=rnd))
        pending = [i for j, i in enumerate(pending) if j not in set(hits)]
        rnd += 1
    return decoded, Y
