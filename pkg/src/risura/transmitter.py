"""User-side processing and received-signal synthesis.

Each user splits its message into a preamble part (selecting the pilot row
and the data spreading row from shared codebooks) and a coded part (CRC +
polar + BPSK).  Transmission is slotted: a user is active in exactly one
slot, sending its pilot row during the pilot phase and spread BPSK symbols
during the data phase.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codec import bpsk, crc_append, polar_encode
from .exceptions import ContractViolation
from .numerics import sample_cn


@dataclass
class Codebooks:
    """Shared codebooks: spreading rows B, pilot rows P, pilot-phase RIS phases."""

    B: np.ndarray      # (2^b_p, n_s) complex, rows with squared norm n_s
    P: np.ndarray      # (2^b_p, n_p) complex, rows with squared norm n_p
    W_ps: np.ndarray   # (S, N, n_p) unit-modulus pilot-phase surface patterns


def gen_codebooks(b_p, n_s, n_p, n_elements, s_slots, rng):
    """Draw the shared codebooks.

    All entries start i.i.d. CN(0,1).  The surface patterns are rescaled to
    unit modulus.  Spreading rows are scaled to squared norm n_s.  Pilot rows
    are scaled so the effective pilot blocks W_ps diag(p_i) have identical
    Frobenius norms across i with mean row energy n_p — with unit-modulus
    W_ps both conditions collapse to ||p_i||^2 = n_p for every row.
    """
    n_rows = 2 ** b_p
    B = sample_cn(1.0, rng, (n_rows, n_s))
    B *= np.sqrt(n_s) / np.linalg.norm(B, axis=1, keepdims=True)
    P = sample_cn(1.0, rng, (n_rows, n_p))
    P *= np.sqrt(n_p) / np.linalg.norm(P, axis=1, keepdims=True)
    W = sample_cn(1.0, rng, (s_slots, n_elements, n_p))
    W /= np.abs(W)
    return Codebooks(B=B, P=P, W_ps=W)


@dataclass
class UserTransmission:
    """Everything one user puts on the air during its slot."""

    message: np.ndarray     # (b_p + b_c,) bits
    pilot_index: int        # integer value of the preamble bits (MSB first)
    slot: int               # 0-based slot choice
    p: np.ndarray           # pilot row (n_p,)
    b: np.ndarray           # spreading row (n_s,)
    v: np.ndarray           # (n_d,) BPSK data symbols


def bits_to_index(bits):
    """MSB-first integer value of a bit vector."""
    value = 0
    for b in np.asarray(bits, dtype=int):
        value = (value << 1) | int(b)
    return value


def index_to_bits(value, width):
    """MSB-first bit vector of an integer."""
    return np.array([(value >> (width - 1 - i)) & 1 for i in range(width)],
                    dtype=np.uint8)


def encode_user(message, books, code, s_slots, rng, crc_width=16):
    """Map one message to its transmission.

    The first log2(len(P)) bits pick the pilot/spreading rows; the rest get
    a CRC and a polar codeword.  The slot is drawn uniformly.
    """
    message = np.asarray(message, dtype=np.uint8)
    b_p = int(np.log2(books.P.shape[0]))
    if message.shape[0] <= b_p:
        raise ContractViolation("message has no coded part")
    if code.k != message.shape[0] - b_p + crc_width:
        raise ContractViolation(
            f"code carries {code.k} bits but message needs "
            f"{message.shape[0] - b_p + crc_width}")
    k_idx = bits_to_index(message[:b_p])
    coded = polar_encode(crc_append(message[b_p:], width=crc_width), code)
    return UserTransmission(
        message=message,
        pilot_index=k_idx,
        slot=int(rng.integers(s_slots)),
        p=books.P[k_idx],
        b=books.B[k_idx],
        v=bpsk(coded),
    )


def simulate_pilot_slot(G, h_rows, p_rows, w_ps, power, sigma_z2, rng,
                        d_cols=None):
    """Received pilot block (M x n_p) for one slot.

    Sums sqrt(power) * (G diag(h_i) W_ps diag(p_i) [+ d_i p_i]) over the
    active users, plus circular complex noise of variance sigma_z2 per entry.
    """
    M = G.shape[0]
    n_p = w_ps.shape[1]
    Y = np.zeros((M, n_p), dtype=complex)
    for i, (h, p) in enumerate(zip(h_rows, p_rows)):
        Y += (G * h[None, :]) @ (w_ps * p[None, :])
        if d_cols is not None:
            Y += np.outer(d_cols[i], p)
    Y *= np.sqrt(power)
    Y += sample_cn(sigma_z2, rng, (M, n_p))
    return Y


def simulate_data_symbol(G, h_rows, b_rows, v_f, w_cs, power, sigma_z2, rng,
                         d_cols=None):
    """Received block (M x n_s) for one data symbol interval.

    ``v_f`` holds the users' BPSK symbols for this interval; ``w_cs`` is the
    surface pattern (N x n_s) applied during it.
    """
    M = G.shape[0]
    n_s = w_cs.shape[1]
    Y = np.zeros((M, n_s), dtype=complex)
    for i, (h, b) in enumerate(zip(h_rows, b_rows)):
        T = (G * h[None, :]) @ (w_cs * b[None, :])
        if d_cols is not None:
            T = T + np.outer(d_cols[i], b)
        Y += T * v_f[i]
    Y *= np.sqrt(power)
    Y += sample_cn(sigma_z2, rng, (M, n_s))
    return Y
