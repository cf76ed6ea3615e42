import itertools

import numpy as np
import pytest

import oracles
from coexist.analytic import (CHAIN_SOLVE, CLOSED_FORM, alpha_C, alpha_C_integer, aloha_throughput_integer,
                              build_A, csma_throughput_integer, solve_idle, span_counts, throughput_grid,
                              throughput_report)
from coexist.model import SystemConfig, derive_rates

RHO = (0.1, 0.5, 0.9)


def exact(cfg):
    r = derive_rates(cfg)
    return r.rho_A, r.rho_C


@pytest.mark.parametrize("ra,rc", list(itertools.product(RHO, RHO)))
def test_worked_l2_s4_expressions(ra, rc):
    cfg = SystemConfig.from_rho(3, 7, ra, rc, 4, 2)
    ra_, rc_ = exact(cfg)
    rep = throughput_report(cfg)
    assert rep.alpha_C == pytest.approx(oracles.alpha_lc2_s4(ra_, rc_), abs=1e-12)
    assert rep.lambda_A == pytest.approx(oracles.lamA_lc2_s4(ra_, rc_, 3), abs=1e-12)
    assert rep.lambda_C == pytest.approx(oracles.lamC_lc2_s4(ra_, rc_, 7), abs=1e-12)


def test_exact_idle_value_l5_s4():
    cfg = SystemConfig.from_rho(1, 1, 0.5, 0.5, 4, 5)
    assert solve_idle(cfg).y[0] == pytest.approx(oracles.PI_II0_LC5_S4_HALF, abs=1e-14)


def test_cli_example_value():
    cfg = SystemConfig.from_rho(1, 20, 0.5, 0.5, 2, 2)
    assert throughput_report(cfg).lambda_A == pytest.approx(oracles.LAMBDA_A_CLI_EXAMPLE, abs=1e-14)


@pytest.mark.parametrize("S", [1, 2, 3, 4, 7, 10, 12])
def test_span_counts_brute_force(S):
    for l_C in range(1, 4 * S + 3):
        M = span_counts(SystemConfig(1, 1, 0.1, 0.1, S, l_C)).M
        assert list(M) == oracles.brute_span_counts(S, l_C)


def test_templates():
    assert build_A(SystemConfig(1, 1, 0.1, 0.1, 4, 8)).template == "integer-multiple"
    assert build_A(SystemConfig(1, 1, 0.1, 0.1, 4, 5)).template == "l_C >= S"
    assert build_A(SystemConfig(1, 1, 0.1, 0.1, 4, 3)).template == "l_C < S"


@pytest.mark.parametrize("S,mult", [(4, 1), (4, 3), (10, 2)])
def test_integer_closed_form_equals_linear_solve(S, mult):
    for ra, rc in itertools.product(RHO, RHO):
        cfg = SystemConfig.from_rho(5, 5, ra, rc, S, S * mult)
        assert alpha_C_integer(cfg) == pytest.approx(solve_idle(cfg).alpha_C, abs=1e-12)
        y = solve_idle(cfg).y
        f = derive_rates(cfg).f
        assert np.allclose(y, y[0] * f ** np.arange(S), atol=1e-12)


def test_notes_and_provenance():
    assert throughput_report(SystemConfig(2, 2, 0.2, 0.2, 4, 5)).note == "general case (linear solve)"
    assert throughput_report(SystemConfig(2, 2, 0.2, 0.2, 4, 8)).note == "integer multiple (explicit formulas)"
    assert throughput_report(SystemConfig(2, 2, 0.2, 0.2, 4, 5), CHAIN_SOLVE).provenance == CHAIN_SOLVE


def test_fig7a_monotone_in_packet_length():
    lam = [throughput_report(SystemConfig.from_rho(20, 20, 0.5, 0.5, 10, l)).lambda_A for l in (1, 5, 10, 15, 30)]
    assert all(b <= a + 1e-15 for a, b in zip(lam, lam[1:]))


@pytest.mark.parametrize("l_C,S", [(1, 2), (3, 4), (5, 4), (8, 4), (17, 20)])
def test_ranges(l_C, S):
    for ra, rc in itertools.product((0.05, 0.5, 0.95), repeat=2):
        rep = throughput_report(SystemConfig.from_rho(4, 4, ra, rc, S, l_C))
        for v in (rep.lambda_A, rep.lambda_C, rep.alpha_C):
            assert 0 <= v <= 1
        assert rep.lambda_total + rep.alpha_C <= 1 + 1e-12


def test_grid_matches_scalar_reports():
    ra = np.array([0.2, 0.5, 0.8])
    rc = np.array([0.3, 0.6, 0.95])
    for l_C in (3, 10, 17, 25):
        lam_A, lam_C, al = throughput_grid(ra, rc, 1, 20, 10, l_C)
        for i in range(3):
            rep = throughput_report(SystemConfig.from_rho(1, 20, ra[i], rc[i], 10, l_C))
            assert lam_A[i] == pytest.approx(rep.lambda_A, abs=1e-12)
            assert lam_C[i] == pytest.approx(rep.lambda_C, abs=1e-12)
            assert al[i] == pytest.approx(rep.alpha_C, abs=1e-12)


def test_zero_traffic():
    rep = throughput_report(SystemConfig(3, 3, 0.0, 0.0, 4, 6))
    assert (rep.lambda_A, rep.lambda_C, rep.alpha_C) == (0.0, 0.0, 1.0)
    assert alpha_C(SystemConfig(3, 3, 0.0, 0.0, 4, 4)) == pytest.approx(1.0)


def test_integer_throughputs_are_finite_near_saturation():
    cfg = SystemConfig.from_rho(1, 20, 0.999, 0.999, 20, 40)
    assert np.isfinite(aloha_throughput_integer(cfg)) and np.isfinite(csma_throughput_integer(cfg))


def test_closed_form_and_chain_reports_agree():
    cfg = SystemConfig.from_rho(2, 3, 0.4, 0.7, 8, 11)
    a, b = throughput_report(cfg, CLOSED_FORM), throughput_report(cfg, CHAIN_SOLVE)
    assert a.lambda_total == pytest.approx(b.lambda_total, abs=1e-12)
