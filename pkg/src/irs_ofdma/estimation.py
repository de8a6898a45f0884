"""Least-squares estimators for the simultaneous and sequential schemes.

Simultaneous (SiUCE): every user's ``[d_k, Q_k]`` is recovered from its own
tones with a two-sided LS solve, ``sqrt(|J|/P) F^+ Y Xi^+``.

Sequential (SeUCE): user 0 is estimated as above with a square pattern; every
other user then only needs ``[a_k; d_k]`` (``M + L`` unknowns), because its
cascaded channel is user 0's with the sub-surface columns rescaled,
``Q_k = Q_0 diag(a_k)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import FeasibilityError, InvalidArgumentError, RankDeficientError
from .ofdm import ReceivedBlock, dft_matrix, partial_dft
from .training import RANK_COND_LIMIT, PilotAllocation, ReflectionPattern


@dataclass(frozen=True)
class LstsqResult:
    x: np.ndarray
    cond: float


def lstsq_solve(A: np.ndarray, B: np.ndarray, cond_limit: float = RANK_COND_LIMIT) -> LstsqResult:
    """Least-squares solution of ``A x = B`` through a Householder QR.

    Columns of ``A`` are equilibrated to unit norm first, so the reported
    condition number ignores pure column scaling. ``B`` may be a vector or a
    matrix of right-hand sides.

    Raises:
        InvalidArgumentError: ``A`` has fewer rows than columns.
        RankDeficientError: the equilibrated condition number exceeds
            ``cond_limit``.
    """
    A = np.asarray(A)
    B = np.asarray(B)
    if A.ndim != 2:
        raise InvalidArgumentError("A must be a matrix")
    m, n = A.shape
    if m < n:
        raise InvalidArgumentError(f"underdetermined system: {m} rows < {n} unknowns")
    if B.shape[0] != m:
        raise InvalidArgumentError(f"right-hand side has {B.shape[0]} rows, expected {m}")
    norms = np.linalg.norm(A, axis=0)
    if np.any(norms == 0):
        raise RankDeficientError("matrix has an all-zero column", float("inf"))
    Q, R = np.linalg.qr(A / norms)
    sv = np.linalg.svd(R, compute_uv=False)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else float("inf")
    if not cond <= cond_limit:
        raise RankDeficientError("least-squares system is rank deficient", cond)
    x = np.linalg.solve(R, Q.conj().T @ B)
    scale = norms if B.ndim == 1 else norms[:, None]
    return LstsqResult(x=x / scale, cond=cond)


@dataclass(frozen=True)
class ChannelEstimate:
    """Estimated channels of all users.

    Attributes:
        d_hat: ``(K, L)`` direct channels.
        Q_hat: ``(K, L, M)`` cascaded channels.
        a_hat: ``(K, M)`` normalised user-IRS gains (sequential scheme only;
            row 0 is all ones).
        scheme: ``"siuce"`` or ``"seuce"``.
    """

    d_hat: np.ndarray
    Q_hat: np.ndarray
    scheme: str
    a_hat: np.ndarray | None = None

    def q_tilde(self, k: int) -> np.ndarray:
        return np.column_stack([self.d_hat[k], self.Q_hat[k]])

    def lambda_hat(self, k: int) -> np.ndarray:
        if self.a_hat is None:
            raise InvalidArgumentError("lambda is only defined for the sequential scheme")
        return np.concatenate([self.a_hat[k], self.d_hat[k]])


def _is_scaled_identity(gram: np.ndarray, tol: float = 1e-10) -> bool:
    c = gram[0, 0].real
    return c > 0 and np.allclose(gram, c * np.eye(gram.shape[0]), rtol=0.0, atol=tol * c)


def _as_matrix(F) -> np.ndarray:
    return F.values if hasattr(F, "values") else np.asarray(F)


@dataclass(frozen=True)
class TwoSidedOperator:
    """Precomputed ``sqrt(|J|/P) F^+`` and ``Xi^+`` of one user.

    The estimate of an observation ``Y`` is ``left @ Y @ right``; building the
    operator once per design avoids refactorising per trial.
    """

    left: np.ndarray
    right: np.ndarray
    fast: bool

    def apply(self, Y: np.ndarray) -> np.ndarray:
        return self.left @ Y @ self.right


def two_sided_operator(F: np.ndarray, Xi: np.ndarray, P: float, fast: bool = True) -> TwoSidedOperator:
    """Pseudo-inverse pair of :func:`two_sided_ls`.

    Raises:
        FeasibilityError: ``F`` lacks full column rank (``pilot_count``) or
            ``Xi`` lacks full row rank (``training_slots``).
    """
    F = np.asarray(F)
    Xi = np.asarray(Xi)
    J = F.shape[0]
    gain = np.sqrt(J / P) if P > 0 else np.inf
    gram_f = F.conj().T @ F
    gram_x = Xi @ Xi.conj().T
    if fast and _is_scaled_identity(gram_f) and _is_scaled_identity(gram_x):
        left = gain * F.conj().T / gram_f[0, 0].real
        right = Xi.conj().T / gram_x[0, 0].real
        return TwoSidedOperator(left=left, right=right, fast=True)
    try:
        left = gain * lstsq_solve(F, np.eye(J)).x
    except (RankDeficientError, InvalidArgumentError) as exc:
        raise FeasibilityError(f"pilot_count: pilot DFT rows lack full column rank ({exc})") from exc
    try:
        right = lstsq_solve(Xi.conj().T, np.eye(Xi.shape[1])).x.conj().T
    except (RankDeficientError, InvalidArgumentError) as exc:
        raise FeasibilityError(f"training_slots: reflection pattern lacks full row rank ({exc})") from exc
    return TwoSidedOperator(left=left, right=right, fast=False)


def two_sided_ls(
    Y: np.ndarray, F: np.ndarray, Xi: np.ndarray, P: float, fast: bool = True
) -> np.ndarray:
    """``sqrt(|J|/P) F^+ Y Xi^+`` with scaled adjoints when both grams are scaled identities."""
    return two_sided_operator(F, Xi, P, fast).apply(Y)


def siuce_estimate(
    Y_k: np.ndarray, F_k, Xi: np.ndarray, P: float, fast: bool = True
) -> tuple[np.ndarray, np.ndarray]:
    """Simultaneous-scheme LS estimate ``(d_hat, Q_hat)`` of one user.

    ``Y_k`` is ``(|J_k|, tau)``: the user's tones in every slot.
    """
    F = _as_matrix(F_k)
    Xi = np.asarray(Xi)
    if Y_k.shape != (F.shape[0], Xi.shape[1]):
        raise InvalidArgumentError(f"Y_k has shape {Y_k.shape}, expected {(F.shape[0], Xi.shape[1])}")
    if F.shape[0] < F.shape[1]:
        raise FeasibilityError(f"pilot_count: {F.shape[0]} tones < L={F.shape[1]}")
    if Xi.shape[1] < Xi.shape[0]:
        raise FeasibilityError(f"training_slots: tau={Xi.shape[1]} < M+1={Xi.shape[0]}")
    qt = two_sided_ls(Y_k, F, Xi, P, fast=fast)
    return qt[:, 0], qt[:, 1:]


def seuce_reference_estimate(
    Y_1: np.ndarray, F_1, Xi: np.ndarray, P: float, fast: bool = True
) -> tuple[np.ndarray, np.ndarray]:
    """Reference-user estimate ``(d_hat, Q_hat)``; the pattern must be square and invertible."""
    Xi = np.asarray(Xi)
    if Xi.shape[0] != Xi.shape[1]:
        raise InvalidArgumentError(f"reference estimate needs a square pattern, got {Xi.shape}")
    if np.linalg.cond(Xi) > RANK_COND_LIMIT:
        raise InvalidArgumentError("reflection pattern is singular")
    return siuce_estimate(Y_1, F_1, Xi, P, fast=fast)


def assemble_Ck(
    Q1_hat: np.ndarray,
    pattern: ReflectionPattern,
    slot_tones: Sequence[Sequence[int]],
    P: float,
    N: int,
    L: int,
) -> np.ndarray:
    """Design matrix of one non-reference user, ``(zeta_k, M + L)``.

    Slot ``t`` contributes ``sqrt(P/|J^(t)|) F^(t) [Q1 diag(theta^(t)), I_L]``
    with its rows in ascending tone order; blocks are stacked by slot.
    """
    Q1_hat = np.asarray(Q1_hat)
    M = pattern.M
    if Q1_hat.shape != (L, M):
        raise InvalidArgumentError(f"Q1_hat has shape {Q1_hat.shape}, expected {(L, M)}")
    if len(slot_tones) != pattern.tau:
        raise InvalidArgumentError("one tone set per pattern column required")
    F = dft_matrix(N)[:, :L]
    blocks = []
    for t, tones in enumerate(slot_tones):
        tones = sorted(tones)
        if not tones:
            raise FeasibilityError(f"slot_coverage: no pilot tones in slot {t}")
        Ft = F[tones]
        left = (Ft @ Q1_hat) * pattern.theta(t)[None, :]
        blocks.append(np.sqrt(P / len(tones)) * np.hstack([left, Ft]))
    return np.vstack(blocks)


def stack_observation(block: ReceivedBlock, slot_tones: Sequence[Sequence[int]]) -> np.ndarray:
    """Concatenate the received tones of one user slot by slot (ascending tone order)."""
    return np.concatenate([block.y[t, sorted(tones)] for t, tones in enumerate(slot_tones)])


def seuce_nonref_estimate(z_k: np.ndarray, C_k: np.ndarray, M: int) -> tuple[np.ndarray, np.ndarray]:
    """LS estimate ``(a_hat, d_hat)`` of a non-reference user.

    Raises:
        RankDeficientError: ``C_k`` lacks full column rank; carries the
            condition number.
    """
    C_k = np.asarray(C_k)
    if C_k.shape[0] < C_k.shape[1]:
        raise RankDeficientError(
            f"only {C_k.shape[0]} observations for {C_k.shape[1]} unknowns", float("inf")
        )
    lam = lstsq_solve(C_k, z_k).x
    return lam[:M], lam[M:]


def recover_cascaded(Q1_hat: np.ndarray, a_hat_k: np.ndarray) -> np.ndarray:
    """``Q1_hat @ diag(a_hat_k)``."""
    Q1_hat = np.asarray(Q1_hat)
    a_hat_k = np.asarray(a_hat_k)
    if Q1_hat.ndim != 2 or a_hat_k.shape != (Q1_hat.shape[1],):
        raise InvalidArgumentError(f"shape mismatch: {Q1_hat.shape} vs {a_hat_k.shape}")
    return Q1_hat * a_hat_k[None, :]


# --------------------------------------------------------------------------
# Whole-block pipelines


@dataclass(frozen=True)
class SiucePlan:
    """Per-user tones and operators for repeated simultaneous-scheme estimates."""

    tones: tuple[tuple[int, ...], ...]
    operators: tuple[TwoSidedOperator, ...]


def prepare_siuce(
    allocation: PilotAllocation, pattern: ReflectionPattern, P: float, L: int, fast: bool = True
) -> SiucePlan:
    """Build the operators of every user once for a fixed design.

    Raises:
        FeasibilityError: a user is not slot-invariant, has fewer than ``L``
            tones, or the pattern lacks full row rank.
    """
    N = allocation.N
    tones, ops = [], []
    for k in range(allocation.K):
        if not allocation.is_slot_invariant(k):
            raise FeasibilityError(f"slot_invariance: user {k} changes tones across slots")
        J = allocation.tones(k, 0)
        if len(J) < L:
            raise FeasibilityError(f"pilot_count: user {k} has {len(J)} tones < L={L}")
        if pattern.tau < pattern.M + 1:
            raise FeasibilityError(f"training_slots: tau={pattern.tau} < M+1={pattern.M + 1}")
        tones.append(J)
        ops.append(two_sided_operator(partial_dft(N, L, J).values, pattern.Xi, P, fast))
    return SiucePlan(tones=tuple(tones), operators=tuple(ops))


def estimate_siuce(
    block: ReceivedBlock,
    allocation: PilotAllocation,
    pattern: ReflectionPattern,
    P: float,
    L: int,
    fast: bool = True,
    plan: SiucePlan | None = None,
) -> ChannelEstimate:
    """Run the simultaneous scheme for every user of the allocation.

    ``plan`` (from :func:`prepare_siuce` with the same design) skips the
    per-call factorisations.
    """
    plan = plan or prepare_siuce(allocation, pattern, P, L, fast)
    qt = np.stack([op.apply(block.observe(J)) for J, op in zip(plan.tones, plan.operators)])
    return ChannelEstimate(d_hat=qt[:, :, 0], Q_hat=qt[:, :, 1:], scheme="siuce")


def estimate_seuce(
    block: ReceivedBlock,
    allocation: PilotAllocation,
    pattern: ReflectionPattern,
    P: float,
    L: int,
    Q1_override: np.ndarray | None = None,
    fast: bool = True,
) -> ChannelEstimate:
    """Run the sequential scheme: reference user first, then all others.

    ``Q1_override`` replaces the estimated reference cascaded channel inside
    the non-reference design matrices (e.g. the true one, to isolate the
    second-stage error). The returned ``Q_hat`` of non-reference users is
    still built from the estimated reference channel.
    """
    N, M = allocation.N, pattern.M
    ref = 0 if allocation.reference is None else allocation.reference
    if not allocation.is_slot_invariant(ref):
        raise FeasibilityError("slot_invariance: reference user changes tones across slots")
    ref_tones = allocation.tones(ref, 0)
    d1, Q1 = seuce_reference_estimate(
        block.observe(ref_tones), partial_dft(N, L, ref_tones), pattern.Xi, P, fast=fast
    )
    Q1_design = Q1 if Q1_override is None else np.asarray(Q1_override)
    K = allocation.K
    d_hat = np.empty((K, L), dtype=complex)
    Q_hat = np.empty((K, L, M), dtype=complex)
    a_hat = np.empty((K, M), dtype=complex)
    for k in range(K):
        if k == ref:
            d_hat[k], Q_hat[k], a_hat[k] = d1, Q1, 1.0
            continue
        slot_tones = allocation.sets[k]
        C = assemble_Ck(Q1_design, pattern, slot_tones, P, N, L)
        a, d = seuce_nonref_estimate(stack_observation(block, slot_tones), C, M)
        d_hat[k], a_hat[k] = d, a
        Q_hat[k] = recover_cascaded(Q1, a)
    return ChannelEstimate(d_hat=d_hat, Q_hat=Q_hat, scheme="seuce", a_hat=a_hat)
