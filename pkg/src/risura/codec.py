"""Polar coding chain for the data payload.

Covers CRC attachment, code construction by Gaussian-approximation density
evolution, the natural-order polar transform, BPSK mapping, and a batched
CRC-aided successive-cancellation list decoder.

Conventions: bits are uint8 arrays, LLRs are log(P(bit=0)/P(bit=1)), BPSK
maps 0 -> +1 and 1 -> -1.  The encoder applies x = u F^{(x) log2 n} in
natural bit order (no bit-reversal permutation); the decoder follows the
same ordering.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .exceptions import ContractViolation, DomainError

CRC_WIDTH = 16
CRC_POLY = 0x1021  # x^16 + x^12 + x^5 + 1, zero initial state


# ---------------------------------------------------------------------------
# CRC
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _crc_matrix(k, width, poly):
    """GF(2) generator matrix T (k x width): crc(m) = m @ T mod 2.

    Row i holds the remainder of x^(width + k - 1 - i) modulo the generator
    polynomial, so the CRC of a message is the XOR of the rows selected by
    its one bits (zero initial register, MSB-first message order).
    """
    low = np.array([(poly >> (width - 1 - j)) & 1 for j in range(width)], dtype=np.uint8)
    rem = low.copy()  # x^width mod g(x)
    rows = [rem.copy()]
    for _ in range(k - 1):
        carry = rem[0]
        rem = np.roll(rem, -1)
        rem[-1] = 0
        if carry:
            rem ^= low
        rows.append(rem.copy())
    # rows[j] = x^(width + j) mod g; message bit i has degree k - 1 - i
    T = np.stack(rows[::-1], axis=0)
    return T


def crc_remainder(bits, width=CRC_WIDTH, poly=CRC_POLY):
    """CRC remainder of the trailing axis of a bit array (batch friendly)."""
    bits = np.asarray(bits, dtype=np.uint8)
    k = bits.shape[-1]
    T = _crc_matrix(k, width, poly)
    return (bits.astype(np.int32) @ T.astype(np.int32) % 2).astype(np.uint8)


def crc_append(bits, width=CRC_WIDTH, poly=CRC_POLY):
    """Append the CRC remainder to the message bits (last axis)."""
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.shape[-1] == 0:
        raise ContractViolation("cannot attach a CRC to an empty message")
    return np.concatenate([bits, crc_remainder(bits, width, poly)], axis=-1)


def crc_check(bits_with_crc, width=CRC_WIDTH, poly=CRC_POLY):
    """True where the trailing ``width`` bits match the CRC of the rest."""
    bits_with_crc = np.asarray(bits_with_crc, dtype=np.uint8)
    if bits_with_crc.shape[-1] <= width:
        raise ContractViolation("word is shorter than the CRC itself")
    payload = bits_with_crc[..., :-width]
    tail = bits_with_crc[..., -width:]
    ok = np.all(crc_remainder(payload, width, poly) == tail, axis=-1)
    return bool(ok) if ok.ndim == 0 else ok


# ---------------------------------------------------------------------------
# Construction (Gaussian-approximation density evolution)
# ---------------------------------------------------------------------------

def _ga_phi(x):
    """E[tanh(L/2)] proxy for L ~ N(x, 2x); piecewise approximation."""
    if x == 0.0:
        return 1.0
    if x < 10.0:
        return float(np.exp(-0.4527 * x ** 0.86 + 0.0218))
    return float(np.sqrt(np.pi / x) * np.exp(-x / 4.0) * (1.0 - 10.0 / (7.0 * x)))


def _ga_phi_inv(y):
    """Inverse of :func:`_ga_phi` on (0, 1] by bisection."""
    if y >= 1.0:
        return 0.0
    if y > _ga_phi(10.0):
        return float(((np.log(y) - 0.0218) / -0.4527) ** (1.0 / 0.86))
    lo, hi = 10.0, 20.0
    while _ga_phi(hi) > y:
        hi *= 2.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if _ga_phi(mid) > y:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _ga_means(mean, n):
    """LLR means of the n synthetic channels, natural order."""
    if n == 1:
        return np.array([mean])
    phi = _ga_phi(mean)
    worse = _ga_phi_inv(phi * (2.0 - phi))      # check combination
    return np.concatenate([_ga_means(worse, n // 2), _ga_means(2.0 * mean, n // 2)])


@dataclass(frozen=True)
class PolarCode:
    n: int
    k: int
    info_positions: np.ndarray      # ascending
    frozen_positions: np.ndarray    # ascending
    reliability: np.ndarray         # GA means per synthetic channel
    design_snr_db: float

    @property
    def rate(self):
        return self.k / self.n


def polar_construct(n, k, design_snr_db=2.0, design_rate=None):
    """Pick the k most reliable synthetic channels under GA density evolution.

    ``design_snr_db`` is an energy-per-bit SNR; the initial channel LLR mean
    is 4 * rate * 10^(snr/10).  ``design_rate`` overrides the rate used for
    that conversion (handy for keeping one reliability order across k).
    """
    if n < 2 or (n & (n - 1)) != 0:
        raise DomainError(f"block length must be a power of two >= 2, got {n}")
    if not 1 <= k <= n:
        raise DomainError(f"info length must be in [1, {n}], got {k}")
    rate = (k / n) if design_rate is None else design_rate
    mean0 = 4.0 * rate * 10.0 ** (design_snr_db / 10.0)
    means = _ga_means(mean0, n)
    # ascending by reliability, ties broken toward the lower index
    order = np.lexsort((np.arange(n), means))
    info = np.sort(order[n - k:])
    frozen = np.sort(order[:n - k])
    return PolarCode(n=n, k=k, info_positions=info, frozen_positions=frozen,
                     reliability=means, design_snr_db=design_snr_db)


# ---------------------------------------------------------------------------
# Encoding
# ---------------------------------------------------------------------------

def polar_transform(u):
    """Apply F^{(x) m} over GF(2) to the last axis (length a power of two)."""
    x = np.array(u, dtype=np.uint8)
    n = x.shape[-1]
    if n & (n - 1):
        raise ContractViolation(f"transform length must be a power of two, got {n}")
    h = 1
    while h < n:
        shaped = x.reshape(x.shape[:-1] + (n // (2 * h), 2, h))
        shaped[..., 0, :] ^= shaped[..., 1, :]
        h *= 2
    return x


def polar_encode(info_bits, code):
    """Encode info bits (last axis, length code.k) into length-n codewords."""
    info_bits = np.asarray(info_bits, dtype=np.uint8)
    if info_bits.shape[-1] != code.k:
        raise ContractViolation(
            f"expected {code.k} info bits, got {info_bits.shape[-1]}")
    u = np.zeros(info_bits.shape[:-1] + (code.n,), dtype=np.uint8)
    u[..., code.info_positions] = info_bits
    return polar_transform(u)


def bpsk(bits):
    """Map bits to symbols: 0 -> +1.0, 1 -> -1.0."""
    return 1.0 - 2.0 * np.asarray(bits, dtype=float)


# ---------------------------------------------------------------------------
# CRC-aided successive-cancellation list decoding
# ---------------------------------------------------------------------------

_DEAD_PATH = 1e30  # path metric marking a not-yet-activated list slot


def scl_decode_batch(llr, code, list_size=32, crc_width=CRC_WIDTH, crc_poly=CRC_POLY):
    """Decode a batch of LLR vectors with CRC-aided list decoding.

    ``llr`` has shape (batch, n).  Returns ``(payload, ok, metric)`` where
    ``payload`` is (batch, k - crc_width) — the info word minus the CRC —
    ``ok`` flags which rows had a CRC-passing candidate, and ``metric`` is
    the winning path penalty.  Rows with ``ok == False`` carry the best
    non-passing candidate's payload.

    The decoder uses min-sum updates with the usual penalty path metric and
    splits every path at each info bit, keeping the ``list_size`` best.
    """
    llr = np.asarray(llr, dtype=np.float64)
    if llr.ndim != 2 or llr.shape[1] != code.n:
        raise ContractViolation(f"LLR batch must be (batch, {code.n})")
    n = code.n
    m = n.bit_length() - 1
    batch = llr.shape[0]
    L = int(list_size)
    if L < 1:
        raise DomainError("list size must be >= 1")

    # packed per-level buffers, levels 1..m with sizes n/2, n/4, ..., 1
    sizes = [n >> s for s in range(1, m + 1)]
    offs = np.concatenate([[0], np.cumsum(sizes)])
    sl = [None] + [slice(int(offs[s - 1]), int(offs[s])) for s in range(1, m + 1)]

    chan = llr[:, None, :]                                   # level 0, path independent
    P = np.zeros((batch, L, n - 1), dtype=np.float64)        # node LLRs, levels 1..m
    B = np.zeros((batch, L, n - 1), dtype=np.uint8)          # left partial sums
    u_hist = np.zeros((batch, L, n), dtype=np.uint8)
    pm = np.full((batch, L), _DEAD_PATH)
    pm[:, 0] = 0.0

    is_info = np.zeros(n, dtype=bool)
    is_info[code.info_positions] = True
    rows = np.arange(batch)[:, None]

    def level_view(s):
        return chan if s == 0 else P[:, :, sl[s]]

    def minsum(a, b):
        return np.sign(a) * np.sign(b) * np.minimum(np.abs(a), np.abs(b))

    for phi in range(n):
        # --- propagate LLRs down to the leaf ---------------------------------
        if phi == 0:
            start = 1
        else:
            z = (phi & -phi).bit_length() - 1           # trailing zeros
            s0 = m - z
            parent = level_view(s0 - 1)
            h = n >> s0
            signs = 1.0 - 2.0 * B[:, :, sl[s0]]
            P[:, :, sl[s0]] = signs * parent[..., :h] + parent[..., h:]
            start = s0 + 1
        for s in range(start, m + 1):
            parent = level_view(s - 1)
            h = n >> s
            P[:, :, sl[s]] = minsum(parent[..., :h], parent[..., h:])

        lam = P[:, :, sl[m]][:, :, 0]                   # (batch, L) decision LLRs

        # --- decide / split ---------------------------------------------------
        if not is_info[phi]:
            u = np.zeros((batch, L), dtype=np.uint8)
            pm = pm + np.maximum(0.0, -lam)
        else:
            cand = np.concatenate([pm, pm + np.abs(lam)], axis=1)   # follow | flip
            sel = np.argsort(cand, axis=1, kind="stable")[:, :L]
            parent_idx = sel % L
            flip = (sel >= L)
            lam_par = np.take_along_axis(lam, parent_idx, axis=1)
            u = ((lam_par < 0) ^ flip).astype(np.uint8)
            pm = np.take_along_axis(cand, sel, axis=1)
            P = P[rows, parent_idx]
            Bn = B[rows, parent_idx]
            B = np.ascontiguousarray(Bn)
            u_hist = np.ascontiguousarray(u_hist[rows, parent_idx])

        u_hist[:, :, phi] = u

        # --- propagate partial sums ------------------------------------------
        beta = u[:, :, None]
        t, s = phi, m
        while t & 1:
            left = B[:, :, sl[s]]
            beta = np.concatenate([left ^ beta, beta], axis=2)
            t >>= 1
            s -= 1
            if s == 0:
                break
        if s >= 1:
            B[:, :, sl[s]] = beta

    # --- pick the winner per batch row ---------------------------------------
    info = u_hist[:, :, code.info_positions]            # (batch, L, k)
    alive = pm < _DEAD_PATH / 2
    if crc_width:
        flat = info.reshape(batch * L, code.k)
        passes = crc_check(flat, crc_width, crc_poly).reshape(batch, L)
    else:
        passes = np.ones((batch, L), dtype=bool)
    usable = passes & alive
    ranked = np.where(usable, pm, np.inf)
    ok = usable.any(axis=1)
    best = np.where(ok, np.argmin(ranked, axis=1),
                    np.argmin(np.where(alive, pm, np.inf), axis=1))
    chosen = info[rows[:, 0], best]                     # (batch, k)
    metric = pm[rows[:, 0], best]
    payload = chosen[:, :code.k - crc_width] if crc_width else chosen
    return payload, ok, metric


def scl_decode(llr, code, list_size=32, crc_width=CRC_WIDTH, crc_poly=CRC_POLY):
    """Single-word wrapper around :func:`scl_decode_batch`.

    Returns ``(payload, ok, metric)``; ``payload`` is None when no list
    candidate passes the CRC.
    """
    payload, ok, metric = scl_decode_batch(
        np.asarray(llr)[None, :], code, list_size, crc_width, crc_poly)
    if not ok[0]:
        return None, False, float(metric[0])
    return payload[0], True, float(metric[0])
