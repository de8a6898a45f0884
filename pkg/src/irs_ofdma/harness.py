"""Experiment orchestration: config parsing, Monte-Carlo sweeps and CSV output.

Seeding: trial ``i`` of grid point ``g`` uses
``SeedSequence(seed, spawn_key=(g, i))``, split into independent streams for
the channel, the noise and (for random patterns) the reflection pattern.
Every design combination at a grid point therefore sees the same channels and
noise (common random numbers), and trials can run in any order or in parallel
without changing a single output byte.
"""

from __future__ import annotations

import csv
import io
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .analysis import (
    MseReport,
    SampleMean,
    brute_force_p2,
    normalized_error,
    normalized_from_energy,
    raw_error,
    full_rank_frequency,
    siuce_error_energy,
)
from .channel import SystemConfig, draw_realization
from .errors import (
    CapacityError,
    ConfigError,
    FeasibilityError,
    InvalidArgumentError,
    RankDeficientError,
)
from .estimation import SiucePlan, estimate_seuce, estimate_siuce, prepare_siuce
from .ofdm import partial_dft, synthesize_block
from .training import (
    PilotAllocation,
    ReflectionPattern,
    adjacent_pilots,
    check_feasibility,
    equispaced_pilots,
    k1_max,
    k2_max,
    make_pattern,
    permuted_allocation,
    seuce_two_step_allocation,
)

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised only on older interpreters
    import tomli as tomllib

EXPERIMENTS = ("mse_vs_snr", "mse_vs_rician", "mse_vs_users", "p2_search", "invariant_suite")
SIUCE_ALLOCATIONS = ("equispaced", "adjacent")
SEUCE_ALLOCATIONS = ("two_step", "permuted")
PATTERNS = ("dft", "onoff", "random")
METRICS = ("normalized", "raw")
Q1_MODES = ("estimated", "true")

CSV_HEADER = (
    "experiment",
    "scheme",
    "allocation",
    "pattern",
    "snr_db",
    "kappa_db",
    "K",
    "trials",
    "seed",
    "mse_empirical",
    "mse_analytic",
    "stderr",
)

# Config keys that map one-to-one onto SystemConfig fields.
_SYSTEM_KEYS = {
    "N": int, "M": int, "M0": int, "L1": int, "L2": int, "Ld": int, "Lcp": int,
    "decay": float, "alpha1": float, "alpha2": float, "alpha3": float,
    "d_user_irs": float, "d_irs_ap": float, "user_angle_deg": float,
}


@dataclass(frozen=True)
class Design:
    """An (allocation kind, pattern kind) pair, written ``allocation:pattern``."""

    allocation: str
    pattern: str

    @property
    def scheme(self) -> str:
        return "siuce" if self.allocation in SIUCE_ALLOCATIONS else "seuce"

    @classmethod
    def parse(cls, text: str) -> "Design":
        alloc, sep, pattern = str(text).partition(":")
        alloc, pattern = alloc.strip(), (pattern.strip() if sep else "dft")
        if alloc not in SIUCE_ALLOCATIONS + SEUCE_ALLOCATIONS:
            raise ConfigError(f"unknown allocation kind {alloc!r}", "designs")
        if pattern not in PATTERNS:
            raise ConfigError(f"unknown pattern kind {pattern!r}", "designs")
        if alloc in SEUCE_ALLOCATIONS and pattern == "onoff":
            # The ON-OFF pattern has a zero entry per column except one, so the
            # sequential scheme's design matrices lose full column rank.
            raise ConfigError("the ON-OFF pattern cannot drive the sequential scheme", "designs")
        return cls(alloc, pattern)

    def __str__(self) -> str:
        return f"{self.allocation}:{self.pattern}"


@dataclass(frozen=True)
class ExperimentSpec:
    """Validated experiment description.

    ``snr_db``, ``kappa_db`` and ``users`` are the sweep axes; only the one
    matching ``experiment`` may hold more than one value. ``scheme`` is
    ``siuce``, ``seuce`` or ``auto`` (simultaneous up to its user capacity,
    sequential beyond).
    """

    experiment: str = "mse_vs_snr"
    config: SystemConfig = field(default_factory=SystemConfig)
    scheme: str = "siuce"
    designs: tuple[Design, ...] = (Design("equispaced", "dft"),)
    snr_db: tuple[float, ...] = (10.0,)
    kappa_db: tuple[float, ...] = (4.5,)
    users: tuple[int, ...] = (4,)
    trials: int = 10_000
    seed: int = 0
    output: str | None = None
    metric: str = "normalized"
    pilots_per_user: int | None = None
    zeta: int | None = None
    permutation_seed: int | None = None
    q1: str = "estimated"
    p2_samples: int = 1000
    p2_cap: int = 10**6
    probe_draws: int = 1000

    def __post_init__(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}", "experiment")
        if self.trials < 1:
            raise ConfigError("must be at least 1", "trials")
        for name in ("snr_db", "kappa_db", "users", "designs"):
            if not getattr(self, name):
                raise ConfigError("grid must not be empty", name)
        if self.metric not in METRICS:
            raise ConfigError(f"must be one of {METRICS}", "metric")
        if self.q1 not in Q1_MODES:
            raise ConfigError(f"must be one of {Q1_MODES}", "q1")

    @property
    def grid(self) -> list[tuple[float, float, int]]:
        """Grid points ``(snr_db, kappa_db, K)`` in sweep order."""
        return [(s, k, u) for u in self.users for k in self.kappa_db for s in self.snr_db]

    def scheme_for(self, K: int) -> str:
        if self.scheme != "auto":
            return self.scheme
        L = self.config.replace(scheme="siuce").L
        return "siuce" if K <= k1_max(self.config.N, L) else "seuce"


# --------------------------------------------------------------------------
# Config parsing


def _flatten(doc: dict) -> dict:
    flat: dict = {}
    for key, value in doc.items():
        items = value.items() if isinstance(value, dict) else [(key, value)]
        for k, v in items:
            if isinstance(v, dict):
                raise ConfigError("sections may not be nested", key)
            if k in flat:
                raise ConfigError("given twice", k)
            flat[k] = v
    return flat


def _as_tuple(value, cast, name: str) -> tuple:
    values = value if isinstance(value, list) else [value]
    try:
        return tuple(cast(v) for v in values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), name) from None


def _as_scalar(value, cast, name: str):
    if isinstance(value, (list, dict)) or isinstance(value, bool):
        raise ConfigError("expected a single value", name)
    try:
        out = cast(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), name) from None
    if cast is int and out != value:
        raise ConfigError("expected an integer", name)
    return out


def _integer_list(value, name: str) -> tuple[int, ...]:
    out = _as_tuple(value, int, name)
    if isinstance(value, list) and any(int(v) != v for v in value):
        raise ConfigError("expected integers", name)
    return out


def parse_config(text: str) -> ExperimentSpec:
    """Parse a TOML experiment description.

    Keys may sit at top level or inside single-level sections (the section
    names are ignored). Unknown keys are errors. Decibel quantities carry a
    ``_db`` suffix (``snr_db``, ``kappa_db``, ``gamma0_db``) and the noise
    power is ``sigma2_dbm``. Sweep axes accept a scalar or a list.

    Raises:
        ConfigError: malformed document, unknown key or infeasible
            combination; ``field`` names the offending key.
    """
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"not valid TOML: {exc}") from None
    flat = _flatten(doc)
    known = set(_SYSTEM_KEYS) | {
        "experiment", "scheme", "designs", "allocation", "pattern", "snr_db", "kappa_db",
        "K", "users", "gamma0_db", "sigma2_dbm", "trials", "seed", "output", "metric",
        "pilots_per_user", "zeta", "permutation_seed", "q1", "p2_samples", "p2_cap",
        "probe_draws",
    }
    unknown = sorted(set(flat) - known)
    if unknown:
        raise ConfigError("unknown key", unknown[0])

    experiment = flat.get("experiment", "mse_vs_snr")
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"must be one of {EXPERIMENTS}", "experiment")
    scheme = flat.get("scheme", "auto" if experiment == "mse_vs_users" else "siuce")
    if scheme not in ("siuce", "seuce", "auto"):
        raise ConfigError("must be siuce, seuce or auto", "scheme")
    if scheme == "auto" and experiment != "mse_vs_users":
        raise ConfigError("auto is only meaningful for mse_vs_users", "scheme")

    # Scenario defaults for the reflecting-channel lengths: the sequential
    # scheme is studied with a LoS-only user-IRS link unless the Rician factor
    # is the sweep variable.
    system = {}
    if scheme == "seuce" and experiment != "mse_vs_rician":
        system.update(L1=4, L2=1)
    for key, cast in _SYSTEM_KEYS.items():
        if key in flat:
            system[key] = _as_scalar(flat[key], cast, key)
    if "gamma0_db" in flat:
        system["gamma0"] = 10 ** (_as_scalar(flat["gamma0_db"], float, "gamma0_db") / 10)
    if "sigma2_dbm" in flat:
        system["sigma2"] = 10 ** (_as_scalar(flat["sigma2_dbm"], float, "sigma2_dbm") / 10) / 1000

    if "K" in flat and "users" in flat:
        raise ConfigError("give either K or users", "users")
    users_key = "users" if "users" in flat else "K"
    if users_key in flat:
        users = _integer_list(flat[users_key], users_key)
    else:
        users = tuple(range(1, 11)) if experiment == "mse_vs_users" else (4,)

    snr = _as_tuple(flat.get("snr_db", 20.0 if experiment == "mse_vs_rician" else 10.0), float, "snr_db")
    kappa = _as_tuple(flat.get("kappa_db", 4.5), float, "kappa_db")
    for name, axis, sweep in (("snr_db", snr, "mse_vs_snr"), ("kappa_db", kappa, "mse_vs_rician"),
                              (users_key, users, "mse_vs_users")):
        if len(axis) > 1 and experiment != sweep:
            raise ConfigError(f"only {sweep} sweeps this axis", name)

    if "designs" in flat and ("allocation" in flat or "pattern" in flat):
        raise ConfigError("give either designs or allocation/pattern", "designs")
    if "designs" in flat:
        raw_designs = flat["designs"] if isinstance(flat["designs"], list) else [flat["designs"]]
    elif "allocation" in flat or "pattern" in flat:
        default_alloc = "two_step" if scheme == "seuce" else "equispaced"
        raw_designs = [f"{flat.get('allocation', default_alloc)}:{flat.get('pattern', 'dft')}"]
    elif scheme == "seuce":
        raw_designs = ["two_step:dft"]
    elif scheme == "auto":
        raw_designs = ["equispaced:dft", "two_step:dft", "permuted:dft"]
    else:
        raw_designs = ["equispaced:dft"]
    designs = tuple(Design.parse(d) for d in raw_designs)
    if scheme != "auto":
        for d in designs:
            if d.scheme != scheme:
                raise ConfigError(f"{d} does not belong to the {scheme} scheme", "designs")

    try:
        config = SystemConfig(scheme="siuce" if scheme == "auto" else scheme, K=max(users), **system)
    except InvalidArgumentError as exc:
        raise ConfigError(str(exc), "config") from None

    options = {}
    for key, cast in (("trials", int), ("seed", int), ("pilots_per_user", int), ("zeta", int),
                      ("permutation_seed", int), ("p2_samples", int), ("p2_cap", int),
                      ("probe_draws", int)):
        if key in flat:
            options[key] = _as_scalar(flat[key], cast, key)
    for key in ("output", "metric", "q1"):
        if key in flat:
            options[key] = str(flat[key])
    spec = ExperimentSpec(
        experiment=experiment, config=config, scheme=scheme, designs=designs,
        snr_db=snr, kappa_db=kappa, users=users, **options,
    )
    validate_spec(spec)
    return spec


def validate_spec(spec: ExperimentSpec) -> None:
    """Check user counts against the scheme capacities and build every design once.

    Raises:
        ConfigError: with the field that makes the combination infeasible.
    """
    cfg = spec.config
    for K in spec.users:
        if K < 1:
            raise ConfigError("user counts must be positive", "K")
        seq_L = cfg.replace(scheme="seuce").L
        k2 = k2_max(cfg.N, cfg.M, seq_L)
        if K > k2:
            raise ConfigError(f"K={K} exceeds the sequential-scheme capacity K2={k2}", "K")
        scheme = spec.scheme_for(K)
        L = cfg.replace(scheme=scheme).L
        if scheme == "siuce" and K > k1_max(cfg.N, L):
            raise ConfigError(
                f"K={K} exceeds the simultaneous-scheme capacity K1={k1_max(cfg.N, L)}", "K"
            )
        for design in designs_for(spec, K):
            try:
                build_allocation(spec, design, K)
            except (InvalidArgumentError, CapacityError) as exc:
                raise ConfigError(str(exc), "pilots_per_user" if design.scheme == "siuce" else "zeta") from None


# --------------------------------------------------------------------------
# Design construction


def designs_for(spec: ExperimentSpec, K: int) -> list[Design]:
    """Designs evaluated at ``K`` users: under ``auto`` only those of the active scheme."""
    if spec.experiment in ("p2_search",):
        return []
    scheme = spec.scheme_for(K)
    return [d for d in spec.designs if d.scheme == scheme]


def default_pilots_per_user(N: int, K: int, L: int) -> int:
    """Largest divisor of ``N`` between ``L`` and ``N / K``; ``N // K`` if there is none."""
    candidates = [p for p in range(L, N // K + 1) if N % p == 0]
    return max(candidates) if candidates else N // K


def reference_tones(N: int, L: int) -> list[int]:
    """``L`` reference tones spread evenly over the band, starting at tone 0."""
    return sorted({(i * N) // L for i in range(L)})


def build_allocation(spec: ExperimentSpec, design: Design, K: int) -> PilotAllocation:
    """Allocation of ``design`` for ``K`` users under the experiment's system constants."""
    cfg = spec.config.replace(scheme=design.scheme, K=K)
    N, M, L, tau = cfg.N, cfg.M, cfg.L, cfg.tau
    if design.scheme == "siuce":
        L_p = spec.pilots_per_user or default_pilots_per_user(N, K, L)
        if design.allocation == "equispaced":
            return equispaced_pilots(N, K, L_p, tau)
        return adjacent_pilots(N, K, L_p, tau)
    J_ref = reference_tones(N, L)
    zetas = [spec.zeta or (M + L)] * (K - 1)
    if design.allocation == "two_step":
        return seuce_two_step_allocation(N, M, L, J_ref, zetas)
    seed = spec.seed if spec.permutation_seed is None else spec.permutation_seed
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(K,)))
    return permuted_allocation(N, M, L, J_ref, zetas, rng)


def trial_streams(seed: int, grid_index: int, trial: int) -> tuple[np.random.Generator, ...]:
    """Independent (channel, noise, pattern) generators of one trial."""
    ss = np.random.SeedSequence(seed, spawn_key=(grid_index, trial))
    return tuple(np.random.default_rng(child) for child in ss.spawn(3))


# --------------------------------------------------------------------------
# Monte-Carlo sweeps


@dataclass(frozen=True)
class _TrialOutcome:
    empirical: float | None
    analytic: float | None


@dataclass(frozen=True)
class _DesignCache:
    """Trial-independent pieces of a fixed-pattern design."""

    pattern: ReflectionPattern
    plan: SiucePlan | None
    energy: np.ndarray | None


def _design_cache(cfg: SystemConfig, design: Design, allocation: PilotAllocation,
                  pattern: ReflectionPattern) -> _DesignCache:
    if design.scheme != "siuce":
        return _DesignCache(pattern, None, None)
    plan = prepare_siuce(allocation, pattern, cfg.P, cfg.L)
    energy = siuce_error_energy(pattern, allocation, cfg.P, cfg.sigma2, cfg.L)
    return _DesignCache(pattern, plan, energy)


def _run_trial(
    spec: ExperimentSpec,
    cfg: SystemConfig,
    design: Design,
    allocation: PilotAllocation,
    cache: _DesignCache | None,
    grid_index: int,
    trial: int,
) -> _TrialOutcome:
    ch_rng, noise_rng, pat_rng = trial_streams(spec.seed, grid_index, trial)
    realization = draw_realization(cfg, ch_rng)
    if cache is None:
        cache = _design_cache(cfg, design, allocation, make_pattern(design.pattern, cfg.M, pat_rng))
    pattern = cache.pattern
    block = synthesize_block(cfg, realization, allocation, pattern, noise_rng)
    if design.scheme == "siuce":
        est = estimate_siuce(block, allocation, pattern, cfg.P, cfg.L, plan=cache.plan)
    else:
        override = realization.Q[0] if spec.q1 == "true" else None
        est = estimate_seuce(block, allocation, pattern, cfg.P, cfg.L, Q1_override=override)
    analytic = None
    if spec.metric == "raw":
        empirical = raw_error(est, realization)
        if cache.energy is not None:
            analytic = float(cache.energy.sum() / (cfg.K * cfg.L * (cfg.M + 1)))
    else:
        empirical = normalized_error(est, realization)
        if cache.energy is not None and empirical is not None:
            analytic = normalized_from_energy(cache.energy, realization)
    return _TrialOutcome(empirical, analytic)


def _point_config(spec: ExperimentSpec, scheme: str, snr_db: float, kappa_db: float, K: int) -> SystemConfig:
    cfg = spec.config.replace(scheme=scheme, K=K, kappa=10 ** (kappa_db / 10))
    return cfg.with_snr_db(snr_db)


def run_experiment(
    spec: ExperimentSpec,
    threads: int = 1,
    progress: Callable[[str], None] | None = None,
) -> list[MseReport]:
    """Monte-Carlo sweep of an MSE experiment.

    One report per (grid point, design), grid points in sweep order and
    designs in the order given. A feasibility or rank failure aborts only that
    grid point's design and yields a report with ``diagnostic`` set.
    ``threads > 1`` runs trials concurrently; results are aggregated in trial
    order, so the output does not depend on ``threads``.
    """
    if spec.experiment not in ("mse_vs_snr", "mse_vs_rician", "mse_vs_users"):
        raise InvalidArgumentError(f"{spec.experiment} is not a Monte-Carlo MSE sweep")
    reports: list[MseReport] = []
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for g, (snr, kappa, K) in enumerate(spec.grid):
            for design in designs_for(spec, K):
                reports.append(_run_point(spec, design, g, snr, kappa, K, pool))
                if progress:
                    progress(f"{design} snr_db={snr} kappa_db={kappa} K={K}")
    finally:
        if pool is not None:
            pool.shutdown()
    return reports


def _run_point(spec, design, g, snr, kappa, K, pool) -> MseReport:
    cfg = _point_config(spec, design.scheme, snr, kappa, K)
    kappa_field = kappa if spec.experiment == "mse_vs_rician" else None
    base = dict(
        experiment=spec.experiment, scheme=design.scheme, allocation=design.allocation,
        pattern=design.pattern, snr_db=snr, kappa_db=kappa_field, K=K, seed=spec.seed,
    )
    allocation = build_allocation(spec, design, K)
    outcomes: list[_TrialOutcome] = []
    try:
        cache = None
        if design.pattern != "random":
            cache = _design_cache(cfg, design, allocation, make_pattern(design.pattern, cfg.M))

        def one(i: int) -> _TrialOutcome:
            return _run_trial(spec, cfg, design, allocation, cache, g, i)

        if pool is None:
            for i in range(spec.trials):
                outcomes.append(one(i))
        else:
            outcomes.extend(pool.map(one, range(spec.trials)))
    except (FeasibilityError, RankDeficientError) as exc:
        return MseReport(**base, trials=len(outcomes), mse_empirical=None,
                         mse_analytic=None, stderr=None, diagnostic=str(exc))
    emp = [o.empirical for o in outcomes if o.empirical is not None]
    if not emp:
        return MseReport(**base, trials=0, mse_empirical=None, mse_analytic=None,
                         stderr=None, diagnostic="every trial had a zero-energy channel")
    stat = SampleMean.of(emp)
    ana = [o.analytic for o in outcomes if o.analytic is not None]
    analytic = float(np.mean(ana)) if ana else None
    return MseReport(**base, trials=stat.count, mse_empirical=stat.mean,
                     mse_analytic=analytic, stderr=stat.stderr)


# --------------------------------------------------------------------------
# Allocation search and invariant checks


def run_p2_search(spec: ExperimentSpec):
    """Exhaustive allocation search on the experiment's instance.

    The instance has ``K - 1`` non-reference users with ``zeta`` tones each
    (default ``M + L``) and evenly spread reference tones. Returns the
    :class:`~irs_ofdma.analysis.BruteForceResult` and the two-step heuristic's
    allocation for comparison.
    """
    cfg = spec.config.replace(scheme="seuce")
    K = spec.users[0]
    if K < 2:
        raise ConfigError("the search needs at least one non-reference user", "K")
    N, M, L = cfg.N, cfg.M, cfg.L
    J_ref = reference_tones(N, L)
    zetas = [spec.zeta or (M + L)] * (K - 1)
    pattern = make_pattern("dft", M)
    result = brute_force_p2(N, M, L, J_ref, zetas, pattern, spec.p2_samples,
                            seed=spec.seed, cap=spec.p2_cap)
    heuristic = seuce_two_step_allocation(N, M, L, J_ref, zetas)
    return result, heuristic


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def check_designs(spec: ExperimentSpec) -> list[CheckResult]:
    """Feasibility report of every design the experiment would run."""
    out = []
    for K in spec.users:
        for design in designs_for(spec, K):
            cfg = spec.config.replace(scheme=design.scheme, K=K)
            alloc = build_allocation(spec, design, K)
            report = check_feasibility(alloc, design.scheme, cfg.N, cfg.M, cfg.L)
            detail = "feasible" if report.ok else "; ".join(f"{v.code}: {v.message}" for v in report.violations)
            out.append(CheckResult(f"{design} K={K}", report.ok, detail))
    return out


def run_invariant_suite(spec: ExperimentSpec) -> list[CheckResult]:
    """Quick structural and noiseless checks of the configured designs.

    Covers the capacity formulas, the orthogonality of the DFT pattern and of
    equispaced pilots, noiseless recovery by each configured design, and full
    rank of the sequential design matrices over random reference channels.
    """
    cfg = spec.config
    results: list[CheckResult] = []
    for scheme in ("siuce", "seuce"):
        L = cfg.replace(scheme=scheme).L
        results.append(CheckResult(
            f"capacity {scheme}", True,
            f"N={cfg.N} M={cfg.M} L={L}: K1={k1_max(cfg.N, L)} K2={k2_max(cfg.N, cfg.M, L)}",
        ))
    Xi = make_pattern("dft", cfg.M).Xi
    err = float(np.max(np.abs(Xi @ Xi.conj().T - (cfg.M + 1) * np.eye(cfg.M + 1))))
    results.append(CheckResult("dft pattern orthogonality", err < 1e-10, f"max deviation {err:.2e}"))
    for K in spec.users:
        for design in designs_for(spec, K):
            alloc = build_allocation(spec, design, K)
            pcfg = cfg.replace(scheme=design.scheme, K=K, sigma2=0.0)
            if design.scheme == "siuce" and design.allocation == "equispaced":
                worst = 0.0
                for k in range(alloc.K):
                    F = partial_dft(cfg.N, pcfg.L, alloc.tones(k, 0))
                    J = len(F.rows)
                    worst = max(worst, float(np.max(np.abs(F.gram - J / cfg.N * np.eye(pcfg.L)))))
                results.append(CheckResult(f"pilot orthogonality {design} K={K}", worst < 1e-10,
                                           f"max deviation {worst:.2e}"))
            results.append(_noiseless_check(spec, pcfg, design, alloc))
            if design.scheme == "seuce":
                pattern = make_pattern(design.pattern, cfg.M, np.random.default_rng(spec.seed))
                freq = full_rank_frequency(alloc, pattern, spec.probe_draws, pcfg.L, seed=spec.seed)
                results.append(CheckResult(f"full rank {design} K={K}", freq == 1.0,
                                           f"full-rank frequency {freq:.3f} over {spec.probe_draws} draws"))
    return results


def _noiseless_check(spec, cfg, design, alloc) -> CheckResult:
    if design.scheme == "seuce" and cfg.L2 != 1:
        cfg = cfg.replace(L2=1)
    worst = 0.0
    try:
        for i in range(20):
            ch_rng, _, pat_rng = trial_streams(spec.seed, 0, i)
            real = draw_realization(cfg, ch_rng)
            pattern = make_pattern(design.pattern, cfg.M, pat_rng)
            block = synthesize_block(cfg, real, alloc, pattern, None)
            if design.scheme == "siuce":
                est = estimate_siuce(block, alloc, pattern, cfg.P, cfg.L)
            else:
                est = estimate_seuce(block, alloc, pattern, cfg.P, cfg.L)
            for k in range(real.K):
                ref = real.q_tilde(k)
                worst = max(worst, float(np.linalg.norm(est.q_tilde(k) - ref) / np.linalg.norm(ref)))
    except (FeasibilityError, RankDeficientError) as exc:
        return CheckResult(f"noiseless recovery {design} K={alloc.K}", False, str(exc))
    return CheckResult(f"noiseless recovery {design} K={alloc.K}", worst <= 1e-9,
                       f"worst relative error {worst:.2e}")


# --------------------------------------------------------------------------
# CSV


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def format_csv(reports: Sequence[MseReport]) -> str:
    """CSV text of the reports; ``None`` fields are empty, floats round-trip exactly."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in reports:
        writer.writerow([_fmt(getattr(r, name)) for name in CSV_HEADER])
    return buf.getvalue()


def write_csv(reports: Sequence[MseReport], path: str | Path) -> None:
    """Write the reports to ``path``.

    Raises:
        OSError: the file cannot be written; the message names the path.
    """
    path = Path(path)
    try:
        path.write_text(format_csv(reports), encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


_CSV_TYPES = {
    "snr_db": float, "kappa_db": float, "K": int, "trials": int, "seed": int,
    "mse_empirical": float, "mse_analytic": float, "stderr": float,
}


def parse_csv(text: str) -> list[MseReport]:
    """Inverse of :func:`format_csv` (diagnostics are not serialized)."""
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != CSV_HEADER:
        raise InvalidArgumentError(f"unexpected CSV header {reader.fieldnames}")
    out = []
    for row in reader:
        values = {}
        for name in CSV_HEADER:
            raw = row[name]
            cast = _CSV_TYPES.get(name, str)
            values[name] = None if raw == "" and cast is not str else cast(raw)
        if values["mse_empirical"] is None:
            values["diagnostic"] = "aborted"
        out.append(MseReport(**values))
    return out


def read_csv(path: str | Path) -> list[MseReport]:
    return parse_csv(Path(path).read_text(encoding="utf-8"))
