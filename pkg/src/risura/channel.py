"""Grid-quantised mmWave channel synthesis for the RIS-aided uplink.

Geometry: single-antenna users, a reconfigurable surface with an N1 x N2
uniform planar array, and a base station with an M1 x M2 planar array.  Every
link follows a sparse multipath model whose direction cosines live on the
canonical angle grid of the corresponding array, so steering vectors of
distinct grid points are orthogonal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ContractViolation, DomainError
from .numerics import sample_cn


def angle_grid(n):
    """Canonical direction-cosine grid with n points: -1 + 2k/n, k = 0..n-1."""
    if n < 1:
        raise DomainError(f"grid size must be positive, got {n}")
    return -1.0 + 2.0 * np.arange(n) / n


def steering_vector(n1, n2, phi_bar, psi_bar, spacing=0.5):
    """Unit-norm planar-array response for direction cosines (phi_bar, psi_bar).

    ``spacing`` is the element pitch in carrier wavelengths.  The response is
    the Kronecker product of the two axis responses, scaled to unit norm;
    returned as a 1-D array of length n1*n2.
    """
    ax1 = np.exp(-2j * np.pi * phi_bar * spacing * np.arange(n1))
    ax2 = np.exp(-2j * np.pi * psi_bar * spacing * np.arange(n2))
    return np.kron(ax1, ax2) / np.sqrt(n1 * n2)


def grid_steering_matrix(n1, n2, spacing=0.5):
    """All grid steering vectors as columns of an (n1*n2, n1*n2) matrix.

    Column order is row-major over (phi index, psi index): column
    ``i*n2 + j`` corresponds to ``(angle_grid(n1)[i], angle_grid(n2)[j])``.
    """
    g1 = angle_grid(n1)
    g2 = angle_grid(n2)
    ax1 = np.exp(-2j * np.pi * spacing * np.outer(np.arange(n1), g1))  # (n1, n1)
    ax2 = np.exp(-2j * np.pi * spacing * np.outer(np.arange(n2), g2))
    # kron over the element axis, row-major over the angle axes
    full = np.einsum("ap,bq->abpq", ax1, ax2).reshape(n1 * n2, n1 * n2)
    return full / np.sqrt(n1 * n2)


@dataclass
class PathComponent:
    """One propagation path.

    ``phi``/``psi`` are the direction cosines at the receive-side array of
    the link.  For the surface-to-station matrix link the transmit side has
    its own pair stored in ``phi_tx``/``psi_tx``.
    """

    gain: complex
    phi: float
    psi: float
    distance: float
    phi_tx: float | None = None
    psi_tx: float | None = None


def sample_paths(count, distance, grid_phi, grid_psi, l0, alpha_pl, rng,
                 tx_grid_phi=None, tx_grid_psi=None):
    """Draw ``count`` paths for one link at the given propagation distance.

    Angles are uniform over the supplied grids and the complex gain is
    CN(0, l0 * distance**-alpha_pl).  Passing the transmit-side grids draws a
    second angle pair per path (matrix links need both ends).
    """
    if count < 0:
        raise DomainError(f"path count must be nonnegative, got {count}")
    if distance <= 0:
        raise DomainError(f"distance must be positive, got {distance}")
    var = l0 * distance ** (-alpha_pl) if np.isfinite(alpha_pl) else 0.0
    paths = []
    for _ in range(count):
        phi = rng.choice(grid_phi)
        psi = rng.choice(grid_psi)
        phi_tx = psi_tx = None
        if tx_grid_phi is not None:
            phi_tx = rng.choice(tx_grid_phi)
            psi_tx = rng.choice(tx_grid_psi)
        gain = sample_cn(var, rng)
        paths.append(PathComponent(gain=gain, phi=float(phi), psi=float(psi),
                                   distance=float(distance),
                                   phi_tx=phi_tx, psi_tx=psi_tx))
    return paths


def assemble_ris_bs(paths, m1, m2, n1, n2, spacing=0.5):
    """Surface-to-station channel G (M x N) from its path list.

    G = sqrt(M*N) * sum_l  gain_l * a_M(rx angles)^T a_N(tx angles)
    with a_M, a_N unit-norm row responses.
    """
    m = m1 * m2
    n = n1 * n2
    G = np.zeros((m, n), dtype=complex)
    for p in paths:
        if p.phi_tx is None or p.psi_tx is None:
            raise ContractViolation("matrix-link path is missing transmit-side angles")
        a_rx = steering_vector(m1, m2, p.phi, p.psi, spacing)
        a_tx = steering_vector(n1, n2, p.phi_tx, p.psi_tx, spacing)
        G += p.gain * np.outer(a_rx, a_tx)
    return np.sqrt(m * n) * G


def assemble_user_ris(paths, n1, n2, spacing=0.5):
    """User-to-surface channel row h (length N): sqrt(N) * sum gain * a_N."""
    n = n1 * n2
    h = np.zeros(n, dtype=complex)
    for p in paths:
        h += p.gain * steering_vector(n1, n2, p.phi, p.psi, spacing)
    return np.sqrt(n) * h


def assemble_user_bs(paths, m1, m2, spacing=0.5):
    """User-to-station channel column d (length M): sqrt(M) * sum gain * a_M^T."""
    m = m1 * m2
    d = np.zeros(m, dtype=complex)
    for p in paths:
        d += p.gain * steering_vector(m1, m2, p.phi, p.psi, spacing)
    return np.sqrt(m) * d


def rayleigh_ris_bs(m, n, l0, alpha_pl, distance, rng):
    """Dense Rayleigh surface-to-station channel: i.i.d. CN(0, l0*d^-alpha)."""
    if distance <= 0:
        raise DomainError(f"distance must be positive, got {distance}")
    var = l0 * distance ** (-alpha_pl)
    return sample_cn(var, rng, size=(m, n))


@dataclass
class ChannelRealization:
    """All channels touching one frame: shared G plus per-user vectors."""

    G: np.ndarray
    h: list = field(default_factory=list)          # per user, length-N rows
    d: list = field(default_factory=list)          # per user, length-M columns (may be zero)
    g_paths: list = field(default_factory=list)
    h_paths: list = field(default_factory=list)    # list of per-user path lists
    d_paths: list = field(default_factory=list)
