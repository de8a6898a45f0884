"""MSE bookkeeping, the allocation-search objective and rank probing.

The search objective for a non-reference user is ``tr(D_k^-1)`` with
``D_k = C_k^H C_k``: the LS error energy of ``[a_k; d_k]`` per unit noise
variance. Its expectation over the reference cascaded channel has no closed
form, so it is averaged over sampled ``Q_1`` draws. The same draws are reused
for every candidate allocation (common random numbers), which keeps rankings
stable at modest sample counts.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .channel import ChannelRealization, crandn, exponential_pdp
from .errors import FeasibilityError, InstanceTooLargeError, InvalidArgumentError
from .estimation import ChannelEstimate
from .ofdm import dft_matrix, partial_dft
from .training import (
    RANK_COND_LIMIT,
    PilotAllocation,
    ReflectionPattern,
    check_feasibility,
)

Q1Sampler = Callable[[np.random.Generator], np.ndarray]


@dataclass(frozen=True)
class MseReport:
    """One row of experiment output.

    ``mse_analytic`` is ``None`` where no closed form exists (the sequential
    scheme). A report with ``diagnostic`` set marks a grid point that was
    aborted; its MSE fields are ``None`` and ``trials`` counts the trials
    completed before the failure.
    """

    experiment: str
    scheme: str
    allocation: str
    pattern: str
    snr_db: float | None
    kappa_db: float | None
    K: int
    trials: int
    seed: int
    mse_empirical: float | None
    mse_analytic: float | None
    stderr: float | None
    diagnostic: str | None = None

    def __post_init__(self) -> None:
        if self.diagnostic is None and self.trials < 1:
            raise InvalidArgumentError("a report needs at least one trial")
        if self.trials < 0:
            raise InvalidArgumentError("trial count cannot be negative")


@dataclass(frozen=True)
class SampleMean:
    """Sample mean with its standard error (``nan`` for a single sample)."""

    mean: float
    stderr: float
    count: int

    @classmethod
    def of(cls, values: Sequence[float]) -> "SampleMean":
        x = np.asarray(values, dtype=float)
        if x.size == 0:
            raise InvalidArgumentError("no samples")
        se = float(np.std(x, ddof=1) / np.sqrt(x.size)) if x.size > 1 else float("nan")
        return cls(mean=float(np.mean(x)), stderr=se, count=int(x.size))


# --------------------------------------------------------------------------
# Analytic and empirical MSE


def _trace_inv(gram: np.ndarray, what: str) -> float:
    if np.linalg.cond(gram) > RANK_COND_LIMIT:
        raise FeasibilityError(f"{what}: Gram matrix is singular")
    return float(np.real(np.trace(np.linalg.inv(gram))))


def siuce_error_energy(
    pattern: ReflectionPattern, allocation: PilotAllocation, P: float, sigma2: float, L: int
) -> np.ndarray:
    """Expected ``||Q~_hat_k - Q~_k||_F^2`` of every user under the simultaneous scheme.

    ``(|J_k| sigma2 / P) tr((F_k^H F_k)^-1) tr((Xi Xi^H)^-1)``; independent of
    the channel realization.
    """
    Xi = pattern.Xi
    xi_term = _trace_inv(Xi @ Xi.conj().T, "training_slots")
    out = np.empty(allocation.K)
    for k in range(allocation.K):
        if not allocation.is_slot_invariant(k):
            raise FeasibilityError(f"slot_invariance: user {k} changes tones across slots")
        tones = allocation.tones(k, 0)
        F = partial_dft(allocation.N, L, tones)
        f_term = _trace_inv(F.gram, f"pilot_count (user {k})")
        out[k] = len(tones) * sigma2 / P * f_term * xi_term
    return out


def theoretical_siuce_mse(
    pattern: ReflectionPattern, allocation: PilotAllocation, P: float, sigma2: float, L: int
) -> float:
    """Average per-entry error power of the simultaneous scheme.

    Sum of the per-user error energies divided by ``K L (M+1)``. With the DFT
    pattern and equispaced pilots this equals ``sigma2 N / (P (M+1))``.

    Raises:
        FeasibilityError: a Gram matrix is singular or a user is not
            slot-invariant.
    """
    energy = siuce_error_energy(pattern, allocation, P, sigma2, L)
    return float(energy.sum() / (allocation.K * L * (pattern.M + 1)))


def normalized_analytic_mse(
    pattern: ReflectionPattern,
    allocation: PilotAllocation,
    P: float,
    sigma2: float,
    L: int,
    realization: ChannelRealization,
) -> float:
    """Expected normalized error of one realization under the simultaneous scheme.

    Each user's expected error energy divided by its true channel energy,
    averaged and scaled by ``1 / (K L (M+1))``; the Monte-Carlo mean of this
    quantity is the analytic counterpart of :func:`empirical_normalized_mse`.
    """
    energy = siuce_error_energy(pattern, allocation, P, sigma2, L)
    return normalized_from_energy(energy, realization)


def normalized_from_energy(energy: np.ndarray, realization: ChannelRealization) -> float:
    """Per-user expected error energies normalized by this realization's channel energies."""
    norms = np.array([np.sum(np.abs(realization.q_tilde(k)) ** 2) for k in range(realization.K)])
    return float(np.sum(energy / norms) / (realization.K * realization.L * (realization.M + 1)))


def normalized_error(estimate: ChannelEstimate, truth: ChannelRealization) -> float | None:
    """Normalized error of one trial, ``sum_k ||err_k||^2 / ||Q~_k||^2 / (K L (M+1))``.

    Returns ``None`` (and warns) when some user's true channel has zero energy,
    in which case the trial carries no information.
    """
    K, L, M = truth.K, truth.L, truth.M
    total = 0.0
    for k in range(K):
        ref = truth.q_tilde(k)
        energy = float(np.sum(np.abs(ref) ** 2))
        if energy == 0.0:
            warnings.warn(f"user {k} has an all-zero channel; trial skipped", RuntimeWarning)
            return None
        total += float(np.sum(np.abs(estimate.q_tilde(k) - ref) ** 2)) / energy
    return total / (K * L * (M + 1))


def raw_error(estimate: ChannelEstimate, truth: ChannelRealization) -> float:
    """Un-normalized per-entry squared error of one trial."""
    K, L, M = truth.K, truth.L, truth.M
    total = sum(
        float(np.sum(np.abs(estimate.q_tilde(k) - truth.q_tilde(k)) ** 2)) for k in range(K)
    )
    return total / (K * L * (M + 1))


def empirical_normalized_mse(
    estimates: Sequence[ChannelEstimate], truths: Sequence[ChannelRealization]
) -> SampleMean:
    """Sample mean and standard error of the normalized error over trials.

    Trials whose truth has a zero-energy user are skipped with a warning.

    Raises:
        InvalidArgumentError: no usable trial, or mismatched inputs.
    """
    if len(estimates) != len(truths):
        raise InvalidArgumentError("one truth per estimate required")
    values = [v for e, t in zip(estimates, truths) if (v := normalized_error(e, t)) is not None]
    if not values:
        raise InvalidArgumentError("no usable trials")
    return SampleMean.of(values)


def snr_shift(snr_db: Sequence[float], mse_ref: Sequence[float], mse_test: Sequence[float]) -> np.ndarray:
    """Horizontal gap between two MSE-versus-SNR curves, in dB.

    For every point of the reference curve, the SNR at which the test curve
    reaches the same MSE is found by linear interpolation of ``log10(MSE)``
    against SNR; the entry is ``snr_ref - snr_test`` (positive means the test
    curve needs less SNR). Reference levels outside the test curve's range give
    ``nan``. The test curve is scanned segment by segment, so it need not be
    strictly monotone; the first crossing is used.
    """
    x = np.asarray(snr_db, dtype=float)
    ref = np.log10(np.asarray(mse_ref, dtype=float))
    test = np.log10(np.asarray(mse_test, dtype=float))
    if not (x.shape == ref.shape == test.shape) or x.size < 2:
        raise InvalidArgumentError("curves need matching lengths of at least two")
    out = np.full(x.size, np.nan)
    for i, level in enumerate(ref):
        for j in range(x.size - 1):
            lo, hi = test[j], test[j + 1]
            if min(lo, hi) <= level <= max(lo, hi):
                frac = 0.0 if hi == lo else (level - lo) / (hi - lo)
                out[i] = x[i] - (x[j] + frac * (x[j + 1] - x[j]))
                break
    return out


# --------------------------------------------------------------------------
# Search objective


def reference_cascade_sampler(L: int, M: int, decay: float = 2.0) -> Q1Sampler:
    """Sampler of unit-power reference cascaded channels ``G diag(u)``.

    ``G`` has ``L`` Rayleigh taps per sub-surface with an exponential power
    profile; ``u`` has unit-modulus entries with uniform phase.
    """
    profile = np.sqrt(exponential_pdp(L, decay))

    def sample(rng: np.random.Generator) -> np.ndarray:
        G = profile[:, None] * crandn(rng, (L, M))
        u = np.exp(2j * np.pi * rng.uniform(size=M))
        return G * u[None, :]

    return sample


def draw_q1(sampler: Q1Sampler, n_samples: int, seed: int = 0) -> np.ndarray:
    """``n_samples`` draws stacked to shape ``(n, L, M)``; the same seed gives the same draws."""
    if n_samples < 1:
        raise InvalidArgumentError("n_samples must be positive")
    rng = np.random.default_rng(seed)
    return np.stack([sampler(rng) for _ in range(n_samples)])


def _batched_ck(
    Q1: np.ndarray, pattern: ReflectionPattern, slot_tones, P: float, N: int
) -> np.ndarray:
    """Design matrices for a stack of reference channels, shape ``(n, rows, M + L)``.

    Slots without tones contribute no rows, so violating placements can be probed.
    """
    n, L, M = Q1.shape
    F = dft_matrix(N)[:, :L]
    blocks = []
    for t, tones in enumerate(slot_tones):
        tones = sorted(tones)
        if not tones:
            continue
        Ft = F[tones]
        left = np.einsum("rl,slm->srm", Ft, Q1) * pattern.theta(t)[None, None, :]
        right = np.broadcast_to(Ft, (n,) + Ft.shape)
        blocks.append(np.sqrt(P / len(tones)) * np.concatenate([left, right], axis=2))
    if not blocks:
        return np.zeros((n, 0, M + L), dtype=complex)
    return np.concatenate(blocks, axis=1)


def _trace_and_cond(C: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``tr(D^-1)`` and ``cond(D)`` of ``D = C^H C`` for a stack of matrices.

    Both come from the singular values of ``C``: ``tr(D^-1) = sum s^-2`` and
    ``cond(D) = (s_max / s_min)^2``. Tall-enough ``C`` only; otherwise ``D``
    is singular and the condition number is infinite.
    """
    n, rows, cols = C.shape
    if rows < cols:
        return np.full(n, np.inf), np.full(n, np.inf)
    s = np.linalg.svd(C, compute_uv=False)
    smin = s[:, -1]
    with np.errstate(divide="ignore"):
        cond = np.where(smin > 0, (s[:, 0] / np.where(smin > 0, smin, 1.0)) ** 2, np.inf)
        trace = np.where(smin > 0, np.sum(1.0 / np.where(s > 0, s, 1.0) ** 2, axis=1), np.inf)
    return trace, cond


def _non_reference_users(allocation: PilotAllocation) -> list[int]:
    ref = 0 if allocation.reference is None else allocation.reference
    return [k for k in range(allocation.K) if k != ref]


@dataclass(frozen=True)
class P2Evaluation:
    """Monte-Carlo search objective of one allocation.

    ``value`` is ``+inf`` as soon as any sample had a singular ``D_k``.
    """

    value: float
    singular: int
    n_samples: int


def p2_objective_samples(
    allocation: PilotAllocation, pattern: ReflectionPattern, q1: np.ndarray, P: float = 1.0
) -> P2Evaluation:
    """Search objective on pre-drawn reference channels ``q1`` of shape ``(n, L, M)``."""
    n, L, M = q1.shape
    if M != pattern.M:
        raise InvalidArgumentError(f"samples have M={M}, pattern has M={pattern.M}")
    report = check_feasibility(allocation, "seuce", allocation.N, M, L)
    if not report.ok:
        v = report.violations[0]
        raise FeasibilityError(f"{v.code}: {v.message}")
    total = np.zeros(n)
    singular = np.zeros(n, dtype=bool)
    for k in _non_reference_users(allocation):
        C = _batched_ck(q1, pattern, allocation.sets[k], P, allocation.N)
        trace, cond = _trace_and_cond(C)
        bad = ~(cond < RANK_COND_LIMIT)
        singular |= bad
        total += np.where(bad, 0.0, trace)
    count = int(singular.sum())
    value = float("inf") if count else float(np.mean(total))
    return P2Evaluation(value=value, singular=count, n_samples=n)


def p2_objective_mc(
    allocation: PilotAllocation,
    pattern: ReflectionPattern,
    Q1_sampler: Q1Sampler,
    n_samples: int,
    seed: int = 0,
    P: float = 1.0,
) -> P2Evaluation:
    """Monte-Carlo mean of ``sum_k tr(D_k^-1)`` over reference-channel draws.

    Raises:
        FeasibilityError: the allocation violates a sequential-scheme
            condition; it is rejected before any evaluation.
    """
    return p2_objective_samples(allocation, pattern, draw_q1(Q1_sampler, n_samples, seed), P)


@dataclass(frozen=True)
class RankedAllocation:
    objective: P2Evaluation
    allocation: PilotAllocation


@dataclass(frozen=True)
class BruteForceResult:
    """Exhaustive search outcome; ``ranking`` is sorted by objective, best first."""

    ranking: tuple[RankedAllocation, ...]

    @property
    def best(self) -> RankedAllocation:
        return self.ranking[0]

    def rank_of(self, allocation: PilotAllocation) -> int:
        """0-based position of an allocation with identical tone sets."""
        key = _allocation_key(allocation)
        for i, entry in enumerate(self.ranking):
            if _allocation_key(entry.allocation) == key:
                return i
        raise InvalidArgumentError("allocation not among the enumerated candidates")


def _allocation_key(allocation: PilotAllocation):
    return tuple(tuple(frozenset(s) for s in per_user) for per_user in allocation.sets)


def count_candidates(N: int, M: int, J_ref: Sequence[int], zetas: Sequence[int]) -> int:
    """Number of disjoint tone placements before feasibility filtering."""
    cells = (N - len(set(J_ref))) * (M + 1)
    count = 1
    for z in zetas:
        count *= math.comb(cells, z)
        cells -= z
    return count


def brute_force_p2(
    N: int,
    M: int,
    L: int,
    J_ref: Sequence[int],
    zetas: Sequence[int],
    pattern: ReflectionPattern,
    n_samples: int,
    seed: int = 0,
    P: float = 1.0,
    cap: int = 10**6,
    sampler: Q1Sampler | None = None,
) -> BruteForceResult:
    """Evaluate every feasible placement of the non-reference users' tones.

    Each non-reference user ``k`` gets exactly ``zetas[k-1]`` (slot,
    sub-carrier) cells outside the reference tones, disjoint from the other
    users. Placements failing any sequential-scheme condition are dropped;
    the rest are scored with one shared set of reference-channel draws.

    Raises:
        InstanceTooLargeError: more than ``cap`` raw placements.
    """
    if pattern.M != M:
        raise InvalidArgumentError(f"pattern has M={pattern.M}, expected {M}")
    count = count_candidates(N, M, J_ref, zetas)
    if count > cap:
        raise InstanceTooLargeError(f"{count} candidate placements exceed the cap of {cap}", count)
    ref = sorted(set(int(n) for n in J_ref))
    tau = M + 1
    cells = [(t, n) for t in range(tau) for n in range(N) if n not in ref]
    q1 = draw_q1(sampler or reference_cascade_sampler(L, M), n_samples, seed)
    ref_sets = tuple(tuple(ref) for _ in range(tau))
    ranked: list[RankedAllocation] = []

    def place(user: int, remaining: list[tuple[int, int]], chosen: list):
        if user == len(zetas):
            sets = (ref_sets,) + tuple(chosen)
            alloc = PilotAllocation(N=N, sets=sets, kind="brute_force", reference=0)
            ranked.append(RankedAllocation(p2_objective_samples(alloc, pattern, q1, P), alloc))
            return
        for combo in itertools.combinations(remaining, zetas[user]):
            per_slot = [[] for _ in range(tau)]
            for t, n in combo:
                per_slot[t].append(n)
            if any(not s for s in per_slot):
                continue
            if len({n for _, n in combo}) < L or len(combo) < M + L:
                continue
            rest = [c for c in remaining if c not in combo]
            place(user + 1, rest, chosen + [tuple(tuple(s) for s in per_slot)])

    place(0, cells, [])
    if not ranked:
        raise FeasibilityError("tone_budget: no feasible placement exists")
    ranked.sort(key=lambda r: r.objective.value)
    return BruteForceResult(ranking=tuple(ranked))


# --------------------------------------------------------------------------
# Rank probing


def full_rank_frequency(
    allocation: PilotAllocation,
    pattern: ReflectionPattern,
    n_draws: int,
    L: int,
    seed: int = 0,
    sampler: Q1Sampler | None = None,
) -> float:
    """Fraction of reference-channel draws giving full-rank ``D_k`` for every non-reference user.

    Full rank means ``cond(D_k) < 1e12``. No feasibility gate is applied, so
    deliberately violating placements (empty slots, too few sub-carriers or
    tones) can be probed; empty slots simply contribute no rows.
    """
    q1 = draw_q1(sampler or reference_cascade_sampler(L, pattern.M), n_draws, seed)
    ok = np.ones(n_draws, dtype=bool)
    for k in _non_reference_users(allocation):
        C = _batched_ck(q1, pattern, allocation.sets[k], 1.0, allocation.N)
        _, cond = _trace_and_cond(C)
        ok &= cond < RANK_COND_LIMIT
    return float(np.mean(ok))
