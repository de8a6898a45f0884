"""Multipath channel generation for the IRS-assisted uplink.

Three links are drawn per realization: user-AP (direct, ``Ld`` taps), IRS-AP
(``L1`` taps per sub-surface, common to all users) and user-IRS (``L2`` taps
per sub-surface, Rician with the LoS component in tap 0). Every link is drawn
with unit expected total power and then scaled by its distance-dependent path
loss amplitude, so small- and large-scale fading stay separate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidArgumentError

SCHEMES = ("siuce", "seuce")


@dataclass(frozen=True)
class SystemConfig:
    """Scenario constants.

    Tap counts are in samples at rate ``1/B``. Powers are linear (watts),
    ``kappa`` is a linear ratio and distances are in metres. ``P`` is the
    per-user transmit power of one OFDM symbol, split evenly over the user's
    pilot tones.
    """

    N: int = 16
    M: int = 8
    M0: int = 128
    L1: int = 3
    L2: int = 2
    Ld: int = 4
    Lcp: int = 6
    K: int = 4
    scheme: str = "siuce"
    P: float = 1.0
    sigma2: float = 1e-11
    kappa: float = 10 ** 0.45
    decay: float = 2.0
    gamma0: float = 1e-3
    alpha1: float = 2.2
    alpha2: float = 2.4
    alpha3: float = 3.5
    d_user_irs: float = 1.5
    d_irs_ap: float = 50.0
    user_angle_deg: float = 90.0

    def __post_init__(self) -> None:
        for name in ("N", "M", "M0", "L1", "L2", "Ld", "K"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise InvalidArgumentError(f"{name} must be a positive integer, got {value!r}")
        if self.Lcp < 0:
            raise InvalidArgumentError("Lcp must be non-negative")
        if self.scheme not in SCHEMES:
            raise InvalidArgumentError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.M0 % self.M:
            raise InvalidArgumentError(f"M0={self.M0} is not a multiple of M={self.M}")
        if self.L < self.L1 + self.L2 - 1:
            raise InvalidArgumentError(
                f"L={self.L} cannot hold the cascaded channel of length {self.L1 + self.L2 - 1}"
            )
        if self.L > self.N:
            raise InvalidArgumentError(f"L={self.L} exceeds N={self.N}")
        if self.Lcp < self.L - 1:
            raise InvalidArgumentError(f"Lcp={self.Lcp} shorter than L-1={self.L - 1}")
        if self.P < 0 or self.sigma2 < 0:
            raise InvalidArgumentError("P and sigma2 must be non-negative")
        if not self.kappa > 0:
            raise InvalidArgumentError("kappa must be positive")
        if self.decay <= 0:
            raise InvalidArgumentError("decay must be positive")
        if self.d_user_irs <= 0 or self.d_irs_ap <= 0 or self.D3 <= 0:
            raise InvalidArgumentError("link distances must be positive")

    @property
    def eta(self) -> int:
        return self.M0 // self.M

    @property
    def Lr(self) -> int:
        """Delay spread of the reflecting channel as modelled by the scheme."""
        return self.L1 + self.L2 - 1 if self.scheme == "siuce" else self.L1

    @property
    def L(self) -> int:
        return max(self.Lr, self.Ld)

    @property
    def tau(self) -> int:
        return self.M + 1

    @property
    def D1(self) -> float:
        return self.d_user_irs

    @property
    def D2(self) -> float:
        return self.d_irs_ap

    @property
    def D3(self) -> float:
        # IRS at the origin, AP at (d_irs_ap, 0), user on a circle around the IRS.
        phi = math.radians(self.user_angle_deg)
        dx = self.d_user_irs * math.cos(phi) - self.d_irs_ap
        dy = self.d_user_irs * math.sin(phi)
        return math.hypot(dx, dy)

    def amplitudes(self) -> tuple[float, float, float]:
        """Path-loss amplitudes ``(user-IRS, IRS-AP, user-AP)``.

        The user-IRS amplitude carries the sub-surface aggregation gain
        ``eta`` so that ``M`` sub-surfaces together yield ``M0`` in the link
        budget.
        """
        a1 = math.sqrt(self.eta * self.gamma0 * self.D1 ** (-self.alpha1))
        a2 = math.sqrt(self.gamma0 * self.D2 ** (-self.alpha2))
        a3 = math.sqrt(self.gamma0 * self.D3 ** (-self.alpha3))
        return a1, a2, a3

    def snr(self) -> float:
        """Average received pilot SNR (linear) for the configured power."""
        return link_budget(
            self, self.D1, self.D2, self.D3, self.alpha1, self.alpha2, self.alpha3, self.gamma0
        )

    def with_snr_db(self, snr_db: float) -> "SystemConfig":
        """Copy of the config with ``P`` solved so that the SNR equals ``snr_db``."""
        unit = link_budget(
            replace(self, P=1.0), self.D1, self.D2, self.D3,
            self.alpha1, self.alpha2, self.alpha3, self.gamma0,
        )
        return replace(self, P=10 ** (snr_db / 10) / unit)

    def replace(self, **changes) -> "SystemConfig":
        return replace(self, **changes)


def link_budget(
    config: SystemConfig,
    D1: float,
    D2: float,
    D3: float,
    alpha1: float,
    alpha2: float,
    alpha3: float,
    gamma0: float,
) -> float:
    """Average received pilot SNR ``P (M0 g0^2 D1^-a1 D2^-a2 + g0 D3^-a3) / (sigma2 N)``."""
    if min(D1, D2, D3) <= 0:
        raise InvalidArgumentError("distances must be positive")
    if min(alpha1, alpha2, alpha3) <= 0:
        raise InvalidArgumentError("path-loss exponents must be positive")
    reflect = config.M0 * gamma0**2 * D1 ** (-alpha1) * D2 ** (-alpha2)
    direct = gamma0 * D3 ** (-alpha3)
    noise = config.sigma2 * config.N
    if noise == 0:
        return math.inf
    return config.P * (reflect + direct) / noise


def exponential_pdp(taps: int, decay: float) -> np.ndarray:
    """Exponentially decaying power delay profile normalised to unit power.

    >>> exponential_pdp(2, 2.0)
    array([0.66666667, 0.33333333])
    """
    if taps < 1:
        raise InvalidArgumentError(f"taps must be >= 1, got {taps}")
    if decay <= 0:
        raise InvalidArgumentError("decay must be positive")
    profile = float(decay) ** -np.arange(taps, dtype=float)
    return profile / profile.sum()


def crandn(rng: np.random.Generator, size) -> np.ndarray:
    """Unit-variance circularly-symmetric complex Gaussian samples."""
    return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / math.sqrt(2.0)


def sample_rayleigh_taps(taps: int, profile: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw one Rayleigh multipath channel with the given tap powers."""
    profile = np.asarray(profile, dtype=float)
    if profile.shape != (taps,):
        raise InvalidArgumentError(f"profile has length {profile.size}, expected {taps}")
    if abs(profile.sum() - 1.0) > 1e-9 or np.any(profile < 0):
        raise InvalidArgumentError("profile must be non-negative and sum to 1")
    return np.sqrt(profile) * crandn(rng, taps)


def _rayleigh_matrix(taps: int, cols: int, decay: float, rng: np.random.Generator) -> np.ndarray:
    profile = exponential_pdp(taps, decay)
    return np.sqrt(profile)[:, None] * crandn(rng, (taps, cols))


def sample_rician_user_irs(
    L2: int, M: int, kappa: float, rng: np.random.Generator, decay: float = 2.0
) -> np.ndarray:
    """User-IRS channel for ``M`` sub-surfaces, shape ``(L2, M)``.

    Row 0 is the LoS tap: constant magnitude, independent uniform phase per
    sub-surface. Rows ``1..L2-1`` are Rayleigh NLoS taps sharing power
    ``1/(kappa+1)`` along an exponential profile. With ``L2 == 1`` the whole
    unit power sits in the LoS tap.
    """
    if L2 < 1:
        raise InvalidArgumentError(f"L2 must be >= 1, got {L2}")
    if not kappa > 0:
        raise InvalidArgumentError("kappa must be positive")
    los_phase = rng.uniform(0.0, 2 * np.pi, size=M)
    if L2 == 1:
        return np.exp(1j * los_phase)[None, :]
    los_power = 1.0 if math.isinf(kappa) else kappa / (kappa + 1.0)
    out = np.empty((L2, M), dtype=complex)
    out[0] = math.sqrt(los_power) * np.exp(1j * los_phase)
    out[1:] = math.sqrt(1.0 - los_power) * _rayleigh_matrix(L2 - 1, M, decay, rng)
    return out


def cascade(u_col: np.ndarray, g_col: np.ndarray, L: int) -> np.ndarray:
    """Linear convolution ``u * g`` zero-padded to length ``L``."""
    u_col = np.asarray(u_col)
    g_col = np.asarray(g_col)
    full = u_col.size + g_col.size - 1
    if L < full:
        raise InvalidArgumentError(f"L={L} shorter than convolution length {full}")
    out = np.zeros(L, dtype=complex)
    out[:full] = np.convolve(u_col, g_col)
    return out


def superimpose(Q: np.ndarray, theta: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Superimposed impulse response ``Q @ theta + d``."""
    Q = np.asarray(Q)
    theta = np.asarray(theta)
    d = np.asarray(d)
    if Q.ndim != 2 or theta.shape != (Q.shape[1],) or d.shape != (Q.shape[0],):
        raise InvalidArgumentError(
            f"dimension mismatch: Q {Q.shape}, theta {theta.shape}, d {d.shape}"
        )
    return Q @ theta + d


@dataclass(frozen=True)
class ChannelRealization:
    """One draw of every link, path loss included.

    Attributes:
        d: direct channels, ``(K, L)``, zero beyond tap ``Ld-1``.
        G: IRS-AP channel, ``(L1, M)``.
        U: user-IRS channels, ``(K, L2, M)``.
        Q: cascaded channels, ``(K, L, M)``; column ``m`` of ``Q[k]`` is
            ``U[k, :, m] * G[:, m]`` zero-padded.
    """

    d: np.ndarray
    G: np.ndarray
    U: np.ndarray
    Q: np.ndarray = field(repr=False)

    @property
    def K(self) -> int:
        return self.d.shape[0]

    @property
    def L(self) -> int:
        return self.d.shape[1]

    @property
    def M(self) -> int:
        return self.G.shape[1]

    def q_tilde(self, k: int) -> np.ndarray:
        """``[d_k, Q_k]``, shape ``(L, M+1)``."""
        return np.column_stack([self.d[k], self.Q[k]])

    def a(self, k: int) -> np.ndarray:
        """LoS user-IRS gains of user ``k`` normalised by those of user 0."""
        return self.U[k, 0] / self.U[0, 0]


def build_cascaded(G: np.ndarray, U: np.ndarray, L: int) -> np.ndarray:
    """Cascade every user/sub-surface pair, returning ``(K, L, M)``.

    Same result as :func:`cascade` column by column, accumulated tap pair by
    tap pair so all users and sub-surfaces are handled at once.
    """
    K, L2, M = U.shape
    L1 = G.shape[0]
    if L < L1 + L2 - 1:
        raise InvalidArgumentError(f"L={L} shorter than convolution length {L1 + L2 - 1}")
    Q = np.zeros((K, L, M), dtype=complex)
    for i in range(L1):
        for j in range(L2):
            Q[:, i + j, :] += G[i][None, :] * U[:, j, :]
    return Q


def draw_realization(config: SystemConfig, rng: np.random.Generator) -> ChannelRealization:
    """Draw all channels of one coherence block.

    Draw order is fixed (IRS-AP, then per user: direct, user-IRS) so a seed
    determines the realization bit for bit.
    """
    c = config
    a1, a2, a3 = c.amplitudes()
    L = c.L
    G = a2 * _rayleigh_matrix(c.L1, c.M, c.decay, rng)
    d = np.zeros((c.K, L), dtype=complex)
    U = np.empty((c.K, c.L2, c.M), dtype=complex)
    direct_profile = exponential_pdp(c.Ld, c.decay)
    for k in range(c.K):
        d[k, : c.Ld] = a3 * sample_rayleigh_taps(c.Ld, direct_profile, rng)
        U[k] = a1 * sample_rician_user_irs(c.L2, c.M, c.kappa, rng, decay=c.decay)
    return ChannelRealization(d=d, G=G, U=U, Q=build_cascaded(G, U, L))
