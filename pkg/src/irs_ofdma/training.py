"""Training designs: pilot-tone allocations and IRS reflection patterns.

Users and slots are 0-based throughout. In allocations built for the
sequential (reference-user) scheme, user 0 is the reference user.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import CapacityError, InvalidArgumentError

RANK_COND_LIMIT = 1e12


@dataclass(frozen=True)
class PilotAllocation:
    """Per-user, per-slot pilot tone sets on ``N`` sub-carriers.

    ``sets[k][t]`` is the sorted tuple of tones of user ``k`` in slot ``t``.
    Sets of different users are disjoint in every slot; construction fails
    otherwise.
    """

    N: int
    sets: tuple[tuple[tuple[int, ...], ...], ...]
    kind: str = "custom"
    reference: int | None = None

    def __post_init__(self) -> None:
        if not self.sets:
            raise InvalidArgumentError("allocation has no users")
        taus = {len(s) for s in self.sets}
        if len(taus) != 1 or 0 in taus:
            raise InvalidArgumentError("every user needs the same, non-zero number of slots")
        normalized = tuple(
            tuple(tuple(sorted(int(n) for n in tones)) for tones in per_user)
            for per_user in self.sets
        )
        object.__setattr__(self, "sets", normalized)
        for t in range(self.tau):
            seen: set[int] = set()
            for k in range(self.K):
                tones = self.sets[k][t]
                if len(set(tones)) != len(tones):
                    raise InvalidArgumentError(f"user {k} lists a tone twice in slot {t}")
                if tones and (tones[0] < 0 or tones[-1] >= self.N):
                    raise InvalidArgumentError(f"user {k} uses a tone outside [0, {self.N})")
                clash = seen.intersection(tones)
                if clash:
                    raise InvalidArgumentError(
                        f"slot {t}: tones {sorted(clash)} assigned to more than one user"
                    )
                seen.update(tones)
        if self.reference is not None and not 0 <= self.reference < self.K:
            raise InvalidArgumentError("reference user index out of range")

    @classmethod
    def slot_invariant_from(
        cls, N: int, per_user: Sequence[Iterable[int]], tau: int, kind: str = "custom"
    ) -> "PilotAllocation":
        sets = tuple(tuple(tuple(tones) for _ in range(tau)) for tones in map(tuple, per_user))
        return cls(N=N, sets=sets, kind=kind)

    @property
    def K(self) -> int:
        return len(self.sets)

    @property
    def tau(self) -> int:
        return len(self.sets[0])

    def tones(self, k: int, t: int) -> tuple[int, ...]:
        return self.sets[k][t]

    def zeta(self, k: int) -> int:
        """Total number of pilot tones of user ``k`` over all slots."""
        return sum(len(s) for s in self.sets[k])

    def subcarriers(self, k: int) -> set[int]:
        """Distinct sub-carriers user ``k`` occupies in any slot."""
        return set().union(*self.sets[k])

    def is_slot_invariant(self, k: int | None = None) -> bool:
        users = range(self.K) if k is None else [k]
        return all(len(set(self.sets[u])) == 1 for u in users)

    @property
    def slot_invariant(self) -> bool:
        return self.is_slot_invariant()

    @cached_property
    def tone_weights(self) -> np.ndarray:
        """``(K, tau, N)`` read-only array of ``1/sqrt(|J_k^(t)|)`` on owned tones, 0 elsewhere.

        Multiplied by ``sqrt(P)`` this is every user's pilot symbol in every slot.
        """
        w = np.zeros((self.K, self.tau, self.N))
        for k in range(self.K):
            for t, tones in enumerate(self.sets[k]):
                if tones:
                    w[k, t, list(tones)] = 1.0 / np.sqrt(len(tones))
        w.setflags(write=False)
        return w

    def owner_grid(self) -> np.ndarray:
        """``(tau, N)`` array of user indices, ``-1`` for unassigned tones."""
        grid = np.full((self.tau, self.N), -1, dtype=int)
        for k in range(self.K):
            for t in range(self.tau):
                grid[t, list(self.sets[k][t])] = k
        return grid

    def to_grid(self) -> str:
        """Plain-text slot x sub-carrier grid; users numbered from 1, ``.`` = idle."""
        header = f"# N={self.N} tau={self.tau} K={self.K} kind={self.kind}"
        if self.reference is not None:
            header += f" reference={self.reference + 1}"
        lines = [header]
        for row in self.owner_grid():
            lines.append(" ".join("." if k < 0 else str(k + 1) for k in row))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_grid(cls, text: str) -> "PilotAllocation":
        """Parse the format written by :meth:`to_grid`."""
        meta: dict[str, str] = {}
        rows: list[list[int]] = []
        for raw in text.splitlines():
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                for token in line[1:].split():
                    if "=" in token:
                        key, value = token.split("=", 1)
                        meta[key] = value
                continue
            rows.append([-1 if tok == "." else int(tok) - 1 for tok in line.split()])
        if not rows:
            raise InvalidArgumentError("grid has no slot rows")
        N = len(rows[0])
        if any(len(r) != N for r in rows):
            raise InvalidArgumentError("grid rows have different lengths")
        K = int(meta.get("K", max(max(r) for r in rows) + 1))
        sets = tuple(
            tuple(tuple(n for n, owner in enumerate(row) if owner == k) for row in rows)
            for k in range(K)
        )
        ref = meta.get("reference")
        return cls(
            N=int(meta.get("N", N)),
            sets=sets,
            kind=meta.get("kind", "custom"),
            reference=None if ref is None else int(ref) - 1,
        )


@dataclass(frozen=True)
class ReflectionPattern:
    """IRS coefficients over the training slots.

    ``Xi`` is ``(M+1, tau)``; row 0 is the constant 1 of the direct path and
    column ``t`` stacks ``[1, theta^(t)]``.
    """

    Xi: np.ndarray = field(repr=False)
    kind: str = "custom"

    def __post_init__(self) -> None:
        Xi = np.array(self.Xi, dtype=complex)
        if Xi.ndim != 2 or Xi.shape[0] < 2:
            raise InvalidArgumentError(f"Xi must be (M+1, tau) with M >= 1, got {Xi.shape}")
        if not np.allclose(Xi[0], 1.0):
            raise InvalidArgumentError("first row of Xi must be all ones")
        Xi.setflags(write=False)
        object.__setattr__(self, "Xi", Xi)

    @property
    def M(self) -> int:
        return self.Xi.shape[0] - 1

    @property
    def tau(self) -> int:
        return self.Xi.shape[1]

    def theta(self, t: int) -> np.ndarray:
        return self.Xi[1:, t]

    def trace_inv_gram(self) -> float:
        """``tr{(Xi Xi^H)^-1}``; 1 for an orthogonal unit-modulus pattern."""
        gram = self.Xi @ self.Xi.conj().T
        return float(np.real(np.trace(np.linalg.inv(gram))))


def dft_pattern(M: int) -> ReflectionPattern:
    """``(M+1) x (M+1)`` DFT pattern, entry ``(m, t) = exp(-2j pi m t / (M+1))``."""
    if M < 1:
        raise InvalidArgumentError("M must be >= 1")
    idx = np.arange(M + 1)
    return ReflectionPattern(np.exp(-2j * np.pi * np.outer(idx, idx) / (M + 1)), kind="dft")


def onoff_pattern(M: int) -> ReflectionPattern:
    """All sub-surfaces off in slot 0, then sub-surface ``t-1`` alone on in slot ``t``."""
    if M < 1:
        raise InvalidArgumentError("M must be >= 1")
    Xi = np.zeros((M + 1, M + 1), dtype=complex)
    Xi[0] = 1.0
    Xi[1:, 1:] = np.eye(M)
    return ReflectionPattern(Xi, kind="onoff")


def random_pattern(M: int, rng: np.random.Generator, max_attempts: int = 100) -> ReflectionPattern:
    """Unit-modulus pattern with i.i.d. uniform phases, redrawn if near-singular."""
    if M < 1:
        raise InvalidArgumentError("M must be >= 1")
    for _ in range(max_attempts):
        Xi = np.ones((M + 1, M + 1), dtype=complex)
        Xi[1:] = np.exp(1j * rng.uniform(0.0, 2 * np.pi, size=(M, M + 1)))
        if np.linalg.cond(Xi) <= RANK_COND_LIMIT:
            return ReflectionPattern(Xi, kind="random")
    raise InvalidArgumentError(f"no well-conditioned random pattern in {max_attempts} draws")


def make_pattern(kind: str, M: int, rng: np.random.Generator | None = None) -> ReflectionPattern:
    if kind == "dft":
        return dft_pattern(M)
    if kind == "onoff":
        return onoff_pattern(M)
    if kind == "random":
        if rng is None:
            raise InvalidArgumentError("random pattern needs an rng")
        return random_pattern(M, rng)
    raise InvalidArgumentError(f"unknown pattern kind {kind!r}")


# --------------------------------------------------------------------------
# Allocations


def equispaced_pilots(N: int, K: int, L_p: int, tau: int = 1) -> PilotAllocation:
    """Comb allocation: user ``k`` takes tones ``n`` with ``n mod (N/L_p) == k``."""
    if L_p < 1 or N % L_p:
        raise InvalidArgumentError(f"N={N} is not divisible by L_p={L_p}")
    spacing = N // L_p
    if not 1 <= K <= spacing:
        raise InvalidArgumentError(f"K={K} users do not fit combs of spacing {spacing}")
    per_user = [range(k, N, spacing) for k in range(K)]
    return PilotAllocation.slot_invariant_from(N, per_user, tau, kind="equispaced")


def adjacent_pilots(N: int, K: int, L_p: int, tau: int = 1) -> PilotAllocation:
    """Block allocation: user ``k`` takes tones ``k*L_p .. (k+1)*L_p - 1``."""
    if L_p < 1 or K < 1:
        raise InvalidArgumentError("K and L_p must be positive")
    if K * L_p > N:
        raise InvalidArgumentError(f"K*L_p={K * L_p} exceeds N={N}")
    per_user = [range(k * L_p, (k + 1) * L_p) for k in range(K)]
    return PilotAllocation.slot_invariant_from(N, per_user, tau, kind="adjacent")


def _check_seuce_request(N: int, M: int, L: int, J_ref: Sequence[int], zetas: Sequence[int]):
    J_ref = sorted(set(int(n) for n in J_ref))
    if len(J_ref) < L:
        raise InvalidArgumentError(f"reference user needs at least L={L} tones, got {len(J_ref)}")
    if J_ref[0] < 0 or J_ref[-1] >= N:
        raise InvalidArgumentError("reference tones out of range")
    for k, z in enumerate(zetas, start=1):
        if z < M + L:
            raise InvalidArgumentError(f"user {k}: zeta={z} below M+L={M + L}")
    free = [n for n in range(N) if n not in set(J_ref)]
    capacity = (M + 1) * len(free)
    if sum(zetas) > capacity:
        raise CapacityError(
            f"non-reference users need {sum(zetas)} tones, only {capacity} are free"
        )
    return J_ref, free


def span_conditioning(N: int, L: int, subcarriers) -> float:
    """``tr((F_S^H F_S)^-1)`` for the first ``L`` DFT columns on rows ``S``.

    Measures how well a user's distinct sub-carriers pin down an ``L``-tap
    direct channel, using the unitary DFT scaling; ``inf`` when ``|S| < L``
    or the rows are numerically rank deficient. Equispaced rows reach the
    minimum ``N * L / |S|``.
    """
    rows = sorted(subcarriers)
    if len(rows) < L:
        return float("inf")
    n = np.asarray(rows)[:, None]
    A = np.exp(-2j * np.pi * n * np.arange(L)[None, :] / N)
    gram = A.conj().T @ A
    if np.linalg.cond(gram) > RANK_COND_LIMIT:
        return float("inf")
    return float(N * np.real(np.trace(np.linalg.inv(gram))))


def _strictly_better(score: float, incumbent: float) -> bool:
    # Relative tolerance keeps ties deterministic despite round-off.
    if math.isinf(incumbent):
        return score < incumbent
    return score < incumbent - 1e-9 * max(1.0, abs(incumbent))


def _spread_pool(N: int, L: int, free: list[int], size: int) -> list[int]:
    """Pick ``size`` free sub-carriers spread as evenly as possible around the DFT circle.

    Every rotation of an equispaced grid is snapped to the nearest unused free
    sub-carrier; the rotation whose pool, completed by any one other free
    sub-carrier, gives the best-conditioned span wins (earliest rotation on ties).
    """
    if size <= 0:
        return []
    if size >= len(free):
        return list(free)
    best, best_score = None, float("inf")
    for offset in range(N):
        pool: list[int] = []
        for i in range(size):
            target = offset + i * N / size
            candidates = [n for n in free if n not in pool]
            pool.append(min(candidates, key=lambda n: (abs((n - target + N / 2) % N - N / 2), n)))
        others = [n for n in free if n not in pool]
        score = sum(span_conditioning(N, L, set(pool) | {n}) for n in others)
        if _strictly_better(score, best_score):
            best, best_score = sorted(pool), score
    return best if best is not None else sorted(free[:size])


def seuce_two_step_allocation(
    N: int, M: int, L: int, J_ref: Sequence[int], zetas: Sequence[int]
) -> PilotAllocation:
    """Two-step allocation for the non-reference users.

    Step 1 gives user ``k`` the same ``floor((zeta_k - L + 1)/(M + 1))``
    sub-carriers in every slot. Step 2 puts the remaining tones on distinct
    sub-carriers of a single slot. All users finish step 1 before anyone
    starts step 2.

    Which sub-carriers to use is left open by the two rules, and the choice
    matters: a user whose span is a tight cluster of sub-carriers gets an
    ill-conditioned direct-channel estimate. Step 1 therefore keeps a pool of
    evenly spread sub-carriers in reserve for step 2 and hands out the rest in
    ascending order; step 2 picks, over all slots with room, the subset giving
    the best-conditioned span (earliest slot, then smallest indices, on ties).
    """
    J_ref, free = _check_seuce_request(N, M, L, J_ref, zetas)
    tau = M + 1
    n_full = [(zeta - L + 1) // tau for zeta in zetas]
    rests = [zeta - tau * f for zeta, f in zip(zetas, n_full)]
    if sum(n_full) > len(free):
        user = next(k for k in range(1, len(zetas) + 1) if sum(n_full[:k]) > len(free))
        raise CapacityError(f"user {user}: not enough free sub-carriers for step 1", user=user)
    pool = _spread_pool(N, L, free, len(free) - sum(n_full)) if any(rests) else []
    step1 = [n for n in free if n not in pool]
    occupied = [set(J_ref) for _ in range(tau)]
    sets: list[list[set[int]]] = [[set(J_ref) for _ in range(tau)]]
    pos = 0
    for f in n_full:
        chosen = step1[pos : pos + f]
        pos += f
        for occ in occupied:
            occ.update(chosen)
        sets.append([set(chosen) for _ in range(tau)])
    for k, rest in enumerate(rests, start=1):
        if rest == 0:
            continue
        full = sets[k][0]
        best = None
        for t in range(tau):
            avail = [n for n in free if n not in occupied[t] and n not in full]
            if len(avail) < rest:
                continue
            for subset in _bounded_combinations(avail, rest):
                score = span_conditioning(N, L, full | set(subset))
                if best is None or _strictly_better(score, best[0]):
                    best = (score, t, subset)
        if best is None:
            raise CapacityError(
                f"user {k}: no slot has {rest} free sub-carriers for the remaining tones", user=k
            )
        _, t, subset = best
        occupied[t].update(subset)
        sets[k][t].update(subset)
    frozen = tuple(tuple(tuple(s) for s in per_user) for per_user in sets)
    return PilotAllocation(N=N, sets=frozen, kind="two_step", reference=0)


def _bounded_combinations(items: list[int], r: int, limit: int = 2000):
    """All ``r``-subsets of ``items`` when there are at most ``limit`` of them.

    Larger searches fall back to evenly strided subsets, which keeps the step-2
    choice cheap on big grids while still favouring spread spans.
    """
    if math.comb(len(items), r) <= limit:
        yield from itertools.combinations(items, r)
        return
    for start in range(len(items)):
        yield tuple(sorted(items[(start + round(i * len(items) / r)) % len(items)] for i in range(r)))


def _torus_order(tau: int, F: int) -> list[tuple[int, int]]:
    # Walk the tau x F grid so that consecutive cells advance slot and sub-carrier together.
    g = math.gcd(tau, F)
    span = tau * F // g
    return [(i % tau, (i + i // span) % F) for i in range(tau * F)]


def permuted_allocation(
    N: int,
    M: int,
    L: int,
    J_ref: Sequence[int],
    zetas: Sequence[int],
    rng: np.random.Generator,
) -> PilotAllocation:
    """Benchmark allocation spreading each user's tones over slots and sub-carriers.

    Free (slot, sub-carrier) cells are enumerated along wrapped diagonals and
    cut into consecutive runs, one run per user, so that within a run slots
    and sub-carriers change at every step. Slot labels, sub-carrier labels and
    the user-to-run mapping are randomly permuted.
    """
    J_ref, free = _check_seuce_request(N, M, L, J_ref, zetas)
    tau = M + 1
    order = _torus_order(tau, len(free))
    slot_perm = rng.permutation(tau)
    sub_perm = rng.permutation(len(free))
    run_order = rng.permutation(len(zetas))
    sets: list[list[set[int]]] = [[set(J_ref) for _ in range(tau)]]
    sets += [[set() for _ in range(tau)] for _ in zetas]
    pos = 0
    for idx in run_order:
        k = int(idx) + 1
        for t, j in order[pos : pos + zetas[idx]]:
            sets[k][int(slot_perm[t])].add(free[int(sub_perm[j])])
        pos += zetas[idx]
    frozen = tuple(tuple(tuple(s) for s in per_user) for per_user in sets)
    alloc = PilotAllocation(N=N, sets=frozen, kind="permuted", reference=0)
    report = check_feasibility(alloc, "seuce", N, M, L)
    if not report.ok:
        raise CapacityError(f"permuted placement infeasible: {report.violations[0].message}")
    return alloc


# --------------------------------------------------------------------------
# Feasibility and capacity


@dataclass(frozen=True)
class Violation:
    """One failed training-design constraint.

    ``code`` is one of ``pilot_count``, ``slot_invariance``, ``training_slots``,
    ``disjointness``, ``slot_coverage``, ``subcarrier_span``, ``tone_budget``.
    """

    code: str
    user: int | None
    message: str


@dataclass(frozen=True)
class FeasibilityReport:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def codes(self) -> set[str]:
        return {v.code for v in self.violations}

    def __bool__(self) -> bool:
        return self.ok


def _full_estimation_checks(alloc: PilotAllocation, k: int, L: int) -> list[Violation]:
    out = []
    if not alloc.is_slot_invariant(k):
        out.append(Violation("slot_invariance", k, f"user {k} changes tones across slots"))
    smallest = min(len(s) for s in alloc.sets[k])
    if smallest < L:
        out.append(Violation("pilot_count", k, f"user {k} has {smallest} < L={L} tones in a slot"))
    return out


def check_feasibility(
    allocation: PilotAllocation, scheme: str, N: int, M: int, L: int
) -> FeasibilityReport:
    """Diagnose whether an allocation supports the chosen estimator.

    Simultaneous scheme: every user slot-invariant with at least ``L`` tones,
    at least ``M+1`` slots. Sequential scheme: the reference user as above;
    each other user has a tone in every slot, spans at least ``L`` distinct
    sub-carriers, holds at least ``M+L`` tones in total and avoids the
    reference tones.
    """
    alloc = allocation
    v: list[Violation] = []
    if alloc.N != N:
        v.append(Violation("disjointness", None, f"allocation built for N={alloc.N}, not {N}"))
    if alloc.tau < M + 1:
        v.append(Violation("training_slots", None, f"tau={alloc.tau} < M+1={M + 1}"))
    if scheme == "siuce":
        for k in range(alloc.K):
            v.extend(_full_estimation_checks(alloc, k, L))
    elif scheme == "seuce":
        if alloc.tau != M + 1:
            v.append(Violation("training_slots", None, f"tau={alloc.tau} must equal M+1={M + 1}"))
        ref = 0 if alloc.reference is None else alloc.reference
        v.extend(_full_estimation_checks(alloc, ref, L))
        ref_tones = alloc.subcarriers(ref)
        for k in range(alloc.K):
            if k == ref:
                continue
            if any(len(s) == 0 for s in alloc.sets[k]):
                v.append(Violation("slot_coverage", k, f"user {k} has a slot without pilots"))
            span = len(alloc.subcarriers(k))
            if span < L:
                v.append(Violation("subcarrier_span", k, f"user {k} spans {span} < L={L} sub-carriers"))
            if alloc.zeta(k) < M + L:
                v.append(Violation("tone_budget", k, f"user {k} has {alloc.zeta(k)} < M+L={M + L} tones"))
            if alloc.subcarriers(k) & ref_tones:
                v.append(Violation("disjointness", k, f"user {k} reuses reference tones"))
    else:
        raise InvalidArgumentError(f"unknown scheme {scheme!r}")
    return FeasibilityReport(tuple(v))


def k1_max(N: int, L: int) -> int:
    """Maximum users of the simultaneous scheme, ``floor(N / L)``."""
    if not 1 <= L <= N:
        raise InvalidArgumentError(f"need 1 <= L <= N, got L={L}, N={N}")
    return N // L


def k2_max(N: int, M: int, L: int) -> int:
    """Maximum users of the sequential scheme, ``floor((M+1)(N-L)/(M+L)) + 1``."""
    if not 1 <= L <= N or M < 1:
        raise InvalidArgumentError(f"need 1 <= L <= N and M >= 1, got N={N}, M={M}, L={L}")
    return (M + 1) * (N - L) // (M + L) + 1
