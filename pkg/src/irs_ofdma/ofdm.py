"""Frequency-domain OFDM pilot model.

The cyclic prefix is taken as ideally removed (``Lcp >= L - 1``), which makes
the time-domain chain equal to a per-tone product with the DFT of the impulse
response. Simulation therefore happens directly in the frequency domain.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .channel import ChannelRealization, SystemConfig, crandn
from .errors import InvalidArgumentError


@lru_cache(maxsize=64)
def _dft_cached(N: int) -> np.ndarray:
    n = np.arange(N)
    out = np.exp(-2j * np.pi * np.outer(n, n) / N) / np.sqrt(N)
    out.setflags(write=False)
    return out


def dft_matrix(N: int) -> np.ndarray:
    """Unitary ``N x N`` DFT matrix (read-only, cached)."""
    if N < 1:
        raise InvalidArgumentError("N must be positive")
    return _dft_cached(int(N))


@dataclass(frozen=True)
class PartialDft:
    """Rows ``J`` and first ``L`` columns of the unitary DFT matrix."""

    rows: tuple[int, ...]
    values: np.ndarray

    @property
    def gram(self) -> np.ndarray:
        return self.values.conj().T @ self.values


def partial_dft(N: int, L: int, J) -> PartialDft:
    """Select the pilot rows ``J`` from the first ``L`` DFT columns.

    ``J`` is sorted; duplicates are rejected rather than silently merged.
    """
    rows = sorted(int(j) for j in J)
    if not rows:
        raise InvalidArgumentError("index set J is empty")
    if len(set(rows)) != len(rows):
        raise InvalidArgumentError(f"duplicate indices in J: {rows}")
    if rows[0] < 0 or rows[-1] >= N:
        raise InvalidArgumentError(f"indices must lie in [0, {N}), got {rows}")
    if not 1 <= L <= N:
        raise InvalidArgumentError(f"need 1 <= L <= N, got L={L}, N={N}")
    values = dft_matrix(N)[rows, :L]
    return PartialDft(rows=tuple(rows), values=values)


@dataclass(frozen=True)
class ReceivedBlock:
    """Received frequency-domain symbols for all training slots.

    ``y`` has shape ``(tau, N)``; row ``t`` is slot ``t`` (0-based).
    """

    y: np.ndarray
    sigma2: float

    @property
    def tau(self) -> int:
        return self.y.shape[0]

    def observe(self, tones, slot: int | None = None) -> np.ndarray:
        """Tone selection. With ``slot=None`` returns a ``(|J|, tau)`` matrix."""
        tones = list(tones)
        if slot is None:
            return self.y[:, tones].T
        return self.y[slot, tones]


def transmit_symbol(N: int, tones, P: float) -> np.ndarray:
    """Pilot OFDM symbol with unit pilots carrying total power ``P``."""
    x = np.zeros(N, dtype=complex)
    tones = list(tones)
    if tones:
        x[tones] = np.sqrt(P / len(tones))
    return x


def synthesize_received(
    config: SystemConfig,
    realization: ChannelRealization,
    allocation,
    pattern,
    slot: int,
    rng: np.random.Generator | None,
) -> np.ndarray:
    """Received symbol of training slot ``slot`` (0-based).

    ``y = sum_k diag(x_k) F (Q_k theta + d_k) + v`` with ``v`` drawn from
    ``rng`` at variance ``config.sigma2`` per tone. ``rng=None`` or
    ``sigma2 == 0`` gives the noiseless signal.
    """
    N, L = config.N, realization.L
    if allocation.K != realization.K:
        raise InvalidArgumentError(
            f"allocation serves {allocation.K} users, realization has {realization.K}"
        )
    if not 0 <= slot < pattern.tau:
        raise InvalidArgumentError(f"slot {slot} outside pattern with {pattern.tau} columns")
    F = dft_matrix(N)[:, :L]
    theta = pattern.Xi[1:, slot]
    y = np.zeros(N, dtype=complex)
    used: set[int] = set()
    for k in range(realization.K):
        tones = allocation.tones(k, slot)
        if not tones:
            continue
        if used.intersection(tones):
            raise InvalidArgumentError(f"tones of user {k} overlap another user in slot {slot}")
        used.update(tones)
        h = realization.Q[k] @ theta + realization.d[k]
        x = transmit_symbol(N, tones, config.P)
        y += x * (F @ h)
    if rng is not None and config.sigma2 > 0:
        y += np.sqrt(config.sigma2) * crandn(rng, N)
    return y


def synthesize_block(
    config: SystemConfig,
    realization: ChannelRealization,
    allocation,
    pattern,
    rng: np.random.Generator | None,
) -> ReceivedBlock:
    """Received symbols for every slot, shape ``(tau, N)``.

    Equal to stacking :func:`synthesize_received` over the slots, noise
    included: the noise is drawn slot by slot in the same order.
    """
    N, L, tau = config.N, realization.L, pattern.tau
    if allocation.K != realization.K:
        raise InvalidArgumentError(
            f"allocation serves {allocation.K} users, realization has {realization.K}"
        )
    if allocation.tau < tau:
        raise InvalidArgumentError(f"allocation has {allocation.tau} slots, pattern needs {tau}")
    F = dft_matrix(N)[:, :L]
    # h[k, :, t] = Q_k theta^(t) + d_k; the allocation guarantees per-slot disjoint tones.
    h = realization.Q @ pattern.Xi[1:, :] + realization.d[:, :, None]
    resp = np.einsum("nl,klt->ktn", F, h)
    weights = allocation.tone_weights[:, :tau, :]
    y = np.sqrt(config.P) * np.sum(weights * resp, axis=0)
    if rng is not None and config.sigma2 > 0:
        for t in range(tau):
            y[t] += np.sqrt(config.sigma2) * crandn(rng, N)
    return ReceivedBlock(y=y, sigma2=config.sigma2)
