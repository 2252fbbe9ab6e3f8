"""Zero-forcing precoding under a per-antenna power constraint.

The ZF matrix is P = H^H (H H^H)^-1 Lambda^(1/2) with the equal-lambda
(max-min fair) loading: lambda_k = lambda for all users, chosen maximal
such that every antenna's average transmit power stays at or below 1.
That makes the constraint tight on at least one antenna and the product
H P = sqrt(lambda) * I.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelMatrix

# Condition-number threshold above which H H^H is treated as rank deficient
CONDITION_LIMIT = 1e12


class RankDeficiencyError(ValueError):
    """Channel matrix has (numerically) deficient rank; ZF is unavailable."""


@dataclass
class PrecodingMatrix:
    """Complex N x K precoder with the achieved per-user loading lambda."""

    entries: np.ndarray
    lam: np.ndarray
    mode: str = "zf"

    def __post_init__(self):
        self.entries = np.atleast_2d(np.asarray(self.entries, dtype=complex))
        self.lam = np.atleast_1d(np.asarray(self.lam, dtype=float))
        if self.mode not in ("zf", "siso-baseline", "passthrough"):
            raise ValueError("mode must be 'zf', 'siso-baseline' or 'passthrough'")
        if np.any(self.lam < 0) or not np.all(np.isfinite(self.lam)):
            raise ValueError("lambda values must be finite and >= 0")
        apc = self.antenna_powers().max()
        if apc > 1.0 + 1e-12:
            raise ValueError(f"per-antenna power constraint violated: {apc}")

    def antenna_powers(self) -> np.ndarray:
        """diag(P P^H): average transmit power per antenna for unit-variance symbols."""
        return np.real(np.einsum("nk,nk->n", self.entries, self.entries.conj()))

    def to_json_dict(self) -> dict:
        n, k = self.entries.shape
        return {
            "shape": [n, k],
            "mode": self.mode,
            "lambda": [float(v) for v in self.lam],
            "entries_re_im": [[float(v.real), float(v.imag)] for v in self.entries.ravel()],
        }


def _gram_inverse(gram: np.ndarray) -> np.ndarray:
    # direct closed form for the 2x2 case; general K via a standard solver
    if gram.shape == (2, 2):
        det = gram[0, 0] * gram[1, 1] - gram[0, 1] * gram[1, 0]
        return np.array([[gram[1, 1], -gram[0, 1]], [-gram[1, 0], gram[0, 0]]]) / det
    return np.linalg.inv(gram)


def zf_precoder(H) -> PrecodingMatrix:
    """ZF precoder for a rank-K channel under the per-antenna power constraint.

    Raises RankDeficiencyError when cond(H H^H) exceeds CONDITION_LIMIT;
    callers fall back to SISO mode in that case.
    """
    h = H.entries if isinstance(H, ChannelMatrix) else np.atleast_2d(np.asarray(H, dtype=complex))
    k, n = h.shape
    if k > n:
        raise ValueError(f"need K <= N, got K={k}, N={n}")
    gram = h @ h.conj().T
    if not np.all(np.isfinite(gram)) or np.linalg.cond(gram) > CONDITION_LIMIT:
        raise RankDeficiencyError(
            f"channel Gram matrix condition number exceeds {CONDITION_LIMIT:.0e}"
        )
    g = h.conj().T @ _gram_inverse(gram)
    lam = 1.0 / np.real(np.einsum("nk,nk->n", g, g.conj())).max()
    return PrecodingMatrix(entries=g * np.sqrt(lam), lam=np.full(k, lam), mode="zf")


def siso_baseline(n_satellites: int, n_streams: int, active_satellite: int = 0,
                  served_stream: int = 0) -> PrecodingMatrix:
    """Single-satellite broadcast baseline: one unit entry, zeros elsewhere."""
    if not 0 <= active_satellite < n_satellites:
        raise IndexError(f"active_satellite {active_satellite} out of range")
    if not 0 <= served_stream < n_streams:
        raise IndexError(f"served_stream {served_stream} out of range")
    p = np.zeros((n_satellites, n_streams), dtype=complex)
    p[active_satellite, served_stream] = 1.0
    lam = np.zeros(n_streams)
    lam[served_stream] = 1.0
    return PrecodingMatrix(entries=p, lam=lam, mode="siso-baseline")


def passthrough(n_satellites: int, n_streams: int) -> PrecodingMatrix:
    """Uncoordinated mapping: satellite n transmits stream n at full power."""
    if n_streams > n_satellites:
        raise ValueError("passthrough needs at least one satellite per stream")
    p = np.zeros((n_satellites, n_streams), dtype=complex)
    for j in range(n_streams):
        p[j, j] = 1.0
    return PrecodingMatrix(entries=p, lam=np.ones(n_streams), mode="passthrough")


def sum_rate(lam, sigma2):
    """Sum and per-user rates [bit/s/Hz]: sum_k log2(1 + lambda_k / sigma2_k)."""
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    sigma2 = np.atleast_1d(np.asarray(sigma2, dtype=float))
    if np.any(sigma2 <= 0):
        raise ValueError("noise variances must be > 0")
    if np.any(lam < 0):
        raise ValueError("lambda values must be >= 0")
    per_user = np.log2(1.0 + lam / sigma2)
    return float(per_user.sum()), per_user


def apply_precoding(P: PrecodingMatrix, d) -> np.ndarray:
    """Transmit vector x = P d; d may be a K vector or a K x W symbol block."""
    d = np.asarray(d, dtype=complex)
    k = P.entries.shape[1]
    if d.shape[0] != k:
        raise ValueError(f"expected {k} streams, got {d.shape[0]}")
    return P.entries @ d
