from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from irs_ofdma.analysis import MseReport
from irs_ofdma.errors import ConfigError, InvalidArgumentError
from irs_ofdma.harness import (
    CSV_HEADER,
    Design,
    ExperimentSpec,
    build_allocation,
    check_designs,
    format_csv,
    parse_config,
    parse_csv,
    read_csv,
    run_experiment,
    run_invariant_suite,
    trial_streams,
    write_csv,
)

FIG5 = """
experiment = "mse_vs_snr"
designs = ["equispaced:dft", "adjacent:dft", "equispaced:random", "equispaced:onoff"]
snr_db = [0, 5, 10, 15, 20]
trials = 20
"""


# --------------------------------------------------------------------------
# Configuration


def test_empty_document_gives_default_scenario():
    spec = parse_config("")
    c = spec.config
    assert (c.N, c.M, c.M0, c.L1, c.L2, c.Ld, c.Lcp) == (16, 8, 128, 3, 2, 4, 6)
    assert spec.trials == 10_000
    assert spec.scheme == "siuce"
    assert spec.designs == (Design("equispaced", "dft"),)
    assert c.sigma2 == pytest.approx(1e-11)


def test_sequential_scheme_defaults():
    spec = parse_config('scheme = "seuce"\nK = 10')
    assert (spec.config.L1, spec.config.L2) == (4, 1)
    assert spec.designs == (Design("two_step", "dft"),)
    rician = parse_config('experiment = "mse_vs_rician"\nscheme = "seuce"\nK = 10')
    assert (rician.config.L1, rician.config.L2) == (3, 2)


def test_too_many_users_names_capacity():
    with pytest.raises(ConfigError) as info:
        parse_config('scheme = "seuce"\nK = 11')
    assert info.value.field == "K"
    assert "K2=10" in str(info.value)


def test_too_many_simultaneous_users():
    with pytest.raises(ConfigError, match="K1=4"):
        parse_config("K = 5")


@pytest.mark.parametrize("grid", [[0, 5, 10, 15, 20], [20, 0, 10]])
def test_snr_grid_keeps_order(grid):
    spec = parse_config(f"snr_db = {grid}")
    assert spec.snr_db == tuple(float(x) for x in grid)
    assert [g[0] for g in spec.grid] == [float(x) for x in grid]


def test_sections_are_flattened():
    spec = parse_config("[system]\nN = 32\n[run]\ntrials = 7")
    assert spec.config.N == 32
    assert spec.trials == 7


@pytest.mark.parametrize(
    "text,field",
    [
        ("bogus = 1", "bogus"),
        ('experiment = "mse_vs_snr"\nkappa_db = [0, 10]', "kappa_db"),
        ('designs = ["two_step:onoff"]\nscheme = "seuce"', "designs"),
        ('designs = ["two_step:dft"]', "designs"),
        ('metric = "peak"', "metric"),
        ("trials = 0", "trials"),
        ('scheme = "auto"', "scheme"),
        ("N = 4\nL1 = 4", "config"),
    ],
)
def test_invalid_documents_name_the_field(text, field):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.field == field


def test_malformed_toml():
    with pytest.raises(ConfigError, match="TOML"):
        parse_config("N = = 3")


def test_users_sweep_switches_scheme():
    spec = parse_config('experiment = "mse_vs_users"')
    assert spec.users == tuple(range(1, 11))
    assert [spec.scheme_for(K) for K in (4, 5)] == ["siuce", "seuce"]


def test_noise_power_in_dbm():
    assert parse_config("sigma2_dbm = -90").config.sigma2 == pytest.approx(1e-12)


def test_permuted_allocation_follows_its_seed():
    spec = parse_config('scheme = "seuce"\ndesigns = ["permuted:dft"]\nK = 10')
    d = spec.designs[0]
    a = build_allocation(spec, d, 10)
    assert build_allocation(spec, d, 10).sets == a.sets
    assert build_allocation(replace(spec, permutation_seed=99), d, 10).sets != a.sets


# --------------------------------------------------------------------------
# Experiments


def test_fig5_run_has_twenty_rows():
    reports = run_experiment(parse_config(FIG5))
    assert len(reports) == 20
    assert [r.snr_db for r in reports[:4]] == [0.0] * 4
    assert [f"{r.allocation}:{r.pattern}" for r in reports[:4]] == [
        "equispaced:dft", "adjacent:dft", "equispaced:random", "equispaced:onoff",
    ]
    assert len(format_csv(reports).splitlines()) == 21


def test_mse_falls_one_decade_per_ten_db():
    spec = parse_config("snr_db = [0, 10, 20]\ntrials = 400")
    values = [r.mse_empirical for r in run_experiment(spec)]
    ratios = np.array(values[:-1]) / np.array(values[1:])
    np.testing.assert_allclose(ratios, 10.0, rtol=0.1)


def test_same_seed_gives_identical_csv():
    spec = parse_config(FIG5.replace("trials = 20", "trials = 10"))
    first = format_csv(run_experiment(spec))
    assert format_csv(run_experiment(spec)) == first
    assert format_csv(run_experiment(spec, threads=4)) == first
    assert format_csv(run_experiment(replace(spec, seed=1))) != first


def test_users_sweep_rows():
    spec = parse_config('experiment = "mse_vs_users"\ntrials = 5')
    reports = run_experiment(spec)
    schemes = [(r.K, r.scheme, r.allocation) for r in reports]
    assert schemes[:4] == [(K, "siuce", "equispaced") for K in range(1, 5)]
    assert schemes[4:6] == [(5, "seuce", "two_step"), (5, "seuce", "permuted")]
    assert len(reports) == 4 + 2 * 6
    assert all(r.kappa_db is None for r in reports)


def test_rician_rows_carry_kappa():
    spec = parse_config('experiment = "mse_vs_rician"\nscheme = "seuce"\nK = 10\n'
                        'kappa_db = [0, 20]\ntrials = 5')
    assert [r.kappa_db for r in run_experiment(spec)] == [0.0, 20.0]


def test_infeasible_design_gives_diagnostic_row():
    spec = replace(parse_config("trials = 3"), pilots_per_user=2)
    (report,) = run_experiment(spec)
    assert report.diagnostic and report.diagnostic.startswith("pilot_count")
    assert report.mse_empirical is None


def test_run_rejects_non_sweep():
    with pytest.raises(InvalidArgumentError):
        run_experiment(parse_config('experiment = "invariant_suite"'))


def test_trial_seeds_are_distinct():
    firsts = set()
    for g in range(5):
        for t in range(200):
            streams = trial_streams(0, g, t)
            firsts.update(int(r.integers(2**63)) for r in streams)
    assert len(firsts) == 5 * 200 * 3


def test_trial_streams_reproducible():
    a = [r.random() for r in trial_streams(3, 1, 2)]
    b = [r.random() for r in trial_streams(3, 1, 2)]
    assert a == b


# --------------------------------------------------------------------------
# Checks


def test_check_designs_feasible():
    spec = parse_config('experiment = "mse_vs_users"')
    results = check_designs(spec)
    assert len(results) == 16
    assert all(r.passed for r in results)


@pytest.mark.parametrize(
    "text",
    [
        'experiment = "invariant_suite"\ndesigns = ["equispaced:dft", "adjacent:random"]',
        'experiment = "invariant_suite"\nscheme = "seuce"\nK = 10\n'
        'designs = ["two_step:dft", "permuted:random"]\nprobe_draws = 200',
    ],
)
def test_invariant_suite_passes(text):
    results = run_invariant_suite(parse_config(text))
    assert results and all(r.passed for r in results), [r.line() for r in results if not r.passed]


# --------------------------------------------------------------------------
# CSV


def _report(**changes) -> MseReport:
    base = dict(experiment="mse_vs_snr", scheme="siuce", allocation="equispaced", pattern="dft",
                snr_db=10.0, kappa_db=None, K=4, trials=100, seed=0,
                mse_empirical=0.0123456789012345, mse_analytic=0.0123, stderr=1e-4)
    base.update(changes)
    return MseReport(**base)


def test_csv_header_only_for_no_reports():
    assert format_csv([]) == ",".join(CSV_HEADER) + "\n"


def test_csv_single_report_round_trip(tmp_path):
    path = tmp_path / "out.csv"
    write_csv([_report()], path)
    text = path.read_text()
    assert len(text.splitlines()) == 2
    assert ",10.0,,4," in text
    assert read_csv(path) == [_report()]


def test_csv_nan_stderr_round_trips():
    (back,) = parse_csv(format_csv([_report(trials=1, stderr=float("nan"))]))
    assert math.isnan(back.stderr)


def test_csv_write_failure_names_path(tmp_path):
    target = tmp_path / "missing" / "out.csv"
    with pytest.raises(OSError, match="missing"):
        write_csv([], target)


def test_csv_rejects_foreign_header():
    with pytest.raises(InvalidArgumentError):
        parse_csv("a,b\n1,2\n")


finite = st.floats(allow_nan=False, allow_infinity=False)


@given(
    snr=st.one_of(st.none(), finite),
    kappa=st.one_of(st.none(), finite),
    K=st.integers(1, 100),
    trials=st.integers(1, 10**6),
    seed=st.integers(0, 2**63),
    emp=finite,
    ana=st.one_of(st.none(), finite),
    se=st.one_of(st.none(), finite),
    scheme=st.sampled_from(["siuce", "seuce"]),
)
def test_csv_round_trip_property(snr, kappa, K, trials, seed, emp, ana, se, scheme):
    report = _report(snr_db=snr, kappa_db=kappa, K=K, trials=trials, seed=seed,
                     mse_empirical=emp, mse_analytic=ana, stderr=se, scheme=scheme)
    assert parse_csv(format_csv([report])) == [report]
