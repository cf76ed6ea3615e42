import math

import numpy as np
import pytest

import oracles
from coexist.analytic import throughput_report
from coexist.model import SystemConfig
from coexist.optimizer import (CLOSED_NA1, OptimizationError, OptimizationSpec, closed_form_optimum,
                               lambert_w0, lambert_w0_exp, optimize, ratio_solve_rhoC)


def test_lambert_w():
    for x in (-1 / math.e, -0.2, 0.0, 1.0, 10.0, 1e5):
        w = lambert_w0(x)
        assert w * math.exp(w) == pytest.approx(x, abs=1e-12, rel=1e-12)
    with pytest.raises(ValueError):
        lambert_w0(-0.5)
    # large arguments through the exp form do not overflow
    w = lambert_w0_exp(2000.0)
    assert w + math.log(w) == pytest.approx(2000.0, rel=1e-14)


@pytest.mark.parametrize("kw", [dict(gamma=0), dict(gamma=float("inf")), dict(S=0),
                                dict(l_C_candidates=[]), dict(l_C_candidates=[0, 3])])
def test_spec_validation(kw):
    base = dict(gamma=1.0, n_A=1, n_C=20, S=10)
    base.update(kw)
    with pytest.raises(ValueError):
        OptimizationSpec(**base)


def test_default_candidates():
    assert OptimizationSpec(1.0, 1, 20, 10).candidates() == list(range(1, 31))


@pytest.mark.parametrize("gamma", [0.1, 1.0])
def test_matches_brute_force_reference(gamma):
    res = optimize(OptimizationSpec(gamma, 1, 20, 20))
    l_ref, lam_ref = oracles.BRUTE_S20[gamma]
    assert res.l_C_opt == l_ref
    assert res.lambda_max == pytest.approx(lam_ref, abs=2e-6)


@pytest.mark.parametrize("gamma,n_A", [(0.3, 1), (3.0, 1), (1.0, 20), (5.0, 20)])
def test_constraint_satisfied(gamma, n_A):
    res = optimize(OptimizationSpec(gamma, n_A, 20, 10))
    rep = throughput_report(SystemConfig.from_rho(n_A, 20, res.rho_A_opt, res.rho_C_opt, 10, res.l_C_opt))
    assert abs(rep.lambda_A / rep.lambda_C - gamma) <= 1e-6 * gamma
    assert rep.lambda_total == pytest.approx(res.lambda_max, rel=1e-9)


@pytest.mark.parametrize("gamma", [0.1, 1.0, 10.0])
@pytest.mark.parametrize("n_A", [1, 20])
def test_optimal_length_slightly_below_one_slot(gamma, n_A):
    S = 20
    res = optimize(OptimizationSpec(gamma, n_A, 20, S))
    assert S - math.ceil(S / 4) <= res.l_C_opt < S


def test_dip_mitigation():
    best = optimize(OptimizationSpec(1.0, 1, 20, 20))
    one_slot = optimize(OptimizationSpec(1.0, 1, 20, 20, l_C_candidates=[20]))
    assert best.lambda_max - one_slot.lambda_max > 1e-3


@pytest.mark.parametrize("gamma", [0.01, 0.1, 1.0, 10.0, 100.0])
def test_rho_c_near_one_at_integer_optimum(gamma):
    res = optimize(OptimizationSpec(gamma, 20, 20, 20, l_C_candidates=[20, 40, 60]))
    assert res.rho_C_opt >= 0.8


@pytest.mark.parametrize("gamma", [0.5, 1.0, 2.0])
def test_closed_form_vs_numeric_many_nodes(gamma):
    cf = closed_form_optimum(gamma, "nAlarge", 20)
    num = optimize(OptimizationSpec(gamma, 50, 20, 20, l_C_candidates=[20, 40, 60]))
    assert abs(num.rho_A_opt - cf.rho_A_opt) <= 2e-2
    assert abs(num.lambda_max - cf.lambda_max) <= 2e-2


def test_closed_form_many_nodes_values():
    cf = closed_form_optimum(1.0, "nAlarge", 20)
    assert cf.rho_A_opt == pytest.approx(oracles.RHO_A_LARGE_G1, abs=1e-14)
    assert cf.lambda_max == pytest.approx(oracles.LAMBDA_LARGE_G1, abs=1e-14)
    assert cf.rho_C_opt == pytest.approx(0.918, abs=1e-3)


def test_single_node_closed_form_near_numeric():
    cf = closed_form_optimum(1.0, "nA1", 20)
    num = optimize(OptimizationSpec(1.0, 1, 20, 20, l_C_candidates=[20]))
    assert cf.method == CLOSED_NA1
    assert abs(cf.rho_A_opt - num.rho_A_opt) <= 5e-2


def test_unknown_regime():
    with pytest.raises(ValueError):
        closed_form_optimum(1.0, "nA2", 20)


def test_tie_break_prefers_shorter_packets():
    # identical candidates collapse; a duplicate list must still give one answer
    res = optimize(OptimizationSpec(1.0, 1, 20, 10, l_C_candidates=[10, 10, 20]))
    assert res.l_C_opt == 10


def test_ratio_solve():
    rc = ratio_solve_rhoC(1.0, 0.6, 10, 1, 20, 10)
    assert rc is not None
    rep = throughput_report(SystemConfig.from_rho(1, 20, 0.6, rc, 10, 10))
    assert rep.lambda_A / rep.lambda_C == pytest.approx(1.0, rel=1e-8)
    with pytest.raises(ValueError):
        ratio_solve_rhoC(1.0, 1.0, 10, 1, 20, 10)


def test_result_serialises():
    d = optimize(OptimizationSpec(1.0, 1, 20, 10, l_C_candidates=[5, 10])).to_dict()
    assert d["feasible"] and d["l_C_opt"] in (5, 10)
    assert all(not (isinstance(v, float) and np.isnan(v)) for v in d.values())


def test_infeasible_result_shape():
    r = __import__("coexist.optimizer", fromlist=["OptimizationResult"]).OptimizationResult.infeasible(2.0)
    assert not r.feasible and r.to_dict()["rho_A_opt"] is None
    assert issubclass(OptimizationError, RuntimeError)
