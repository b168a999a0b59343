import copy
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from selab import plans
from selab import state_evolution as S
from selab.errors import DegenerateCovariance, InvalidArgument
from selab.plans import FIRST_ORDER, SADDLE, Step, UpdatePlan, unit_init
from selab.updates import (Identity, LinearCombo, LinearForm, LogcoshPenalty, QuadraticPenalty, RidgePenalty,
                           scalar_prox)
from selab.verify import TestFunction


def quick(plan, R=400, d_mc=100, seed=0, **kw):
    return S.run_state_evolution(plan, 2.0, R=R, d_mc=d_mc, seed=seed, **kw)


def test_base_case_unit_norms():
    se, bank = S.init_se(unit_init(), R=300, d_mc=100, aspect=2.0)
    assert se.K_g[0, 0] == pytest.approx(1.0)
    assert se.K_h[0, 0] == pytest.approx(1.0)
    assert np.all(se.L_u == 0) and np.all(se.L_v == 0)
    assert np.all(bank.vhat[0] == 0)
    assert se.alpha[0, 0] == pytest.approx(1.0)


def test_base_case_zero_u_is_flagged():
    se, bank = S.init_se(unit_init(0.0, 1.0), R=100, d_mc=50, aspect=2.0)
    assert se.K_g[0, 0] == 0.0
    assert np.all(bank.g[0] == 0.0)
    assert se.diagnostics[0]["degenerate"]


def test_base_case_gaussian_norms_match_iterate_norms():
    se, bank = S.init_se(unit_init(1.3, 0.7), R=2000, d_mc=200, aspect=2.0, seed=3)
    est, err = S.query_expectation(bank, TestFunction("norm2", "v", ("g", 1)))
    assert abs(est - 1.3**2) <= 3 * err
    est, err = S.query_expectation(bank, TestFunction("inner", "u", ("h", 1, "h", 1)))
    assert abs(est - 0.7**2) <= 3 * err
    est, err = S.query_expectation(bank, TestFunction("inner", "v", ("v", 1, "v", 1)))
    assert est == pytest.approx(0.49) and err == pytest.approx(0.0, abs=1e-15)


def test_constant_maps_give_constant_rows():
    plan = UpdatePlan([unit_init(), Step(FIRST_ORDER, LinearCombo(LinearForm(const=2.0)),
                                         LinearCombo(LinearForm(const=-1.0)))])
    se, bank = quick(plan)
    assert se.K_g[1, 0] == pytest.approx(2.0) and se.K_g[1, 1] == pytest.approx(4.0)
    assert se.K_h[1, 0] == pytest.approx(-1.0) and se.K_h[1, 1] == pytest.approx(1.0)
    # deterministic v_2 against a centred Gaussian g_1: coefficient is the MC cross moment
    cross = np.mean(np.sum(bank.g[0] * bank.v[1], 1))
    assert se.L_u[1, 0] == pytest.approx(cross / se.K_g[0, 0])
    assert se.L_u[1, 1] == 0.0


def test_map_ignoring_argument_has_no_correction():
    plan = UpdatePlan([unit_init(), Step(FIRST_ORDER, LinearCombo(LinearForm(aux=((1, 1.0),))),
                                         LinearCombo(LinearForm(aux=((1, 1.0),))))])
    se, bank = quick(plan, R=2000, d_mc=200)
    # cross moments with independent draws are MC noise around zero
    assert np.all(np.abs(se.L_u[1]) < 4 / math.sqrt(2000 * 1.0))
    assert np.abs(se.L_v[1]).max() < 4 * math.sqrt(2.0) / math.sqrt(2000)


def test_amp_tau_recursion_values():
    assert S.amp_tau_recursion(1.0, 2.0, [], 1.0)[0] == 3.0
    assert S.amp_tau_recursion(1.0, 2.0, [0.5], 1.0)[1] == pytest.approx(2.5)
    assert np.all(S.amp_tau_recursion(0.0, 2.0, [0.0, 0.0, 0.0])[1:] == 0.0)
    with pytest.raises(InvalidArgument):
        S.amp_tau_recursion(-1.0, 2.0, [])


def test_amp_plan_u_norms_follow_recursion():
    se, bank = S.run_state_evolution(plans.amp_linear_plan(1.0, 0.5, 2.0, 4), 2.0, R=2000, d_mc=200, seed=1,
                                     pinv=True)
    taus = S.amp_tau_recursion(1.0, 2.0, [0.5] * 3)
    assert np.allclose(np.diag(se.K_g)[1::2], taus, rtol=0.03)
    # Onsager memory: vhat_2 = -aspect * v_1 (v_2 copies v_1)
    assert se.L_v[2, :2].sum() == pytest.approx(-2.0, rel=0.03)


def test_amp_plan_needs_pinv():
    with pytest.raises(DegenerateCovariance):
        quick(plans.amp_linear_plan(macro_steps=2))


def test_zero_saddle_fixed_point():
    plan = UpdatePlan([unit_init(), Step(SADDLE, QuadraticPenalty(1.0), QuadraticPenalty(1.0))])
    se, bank = S.init_se(plan.steps[0], R=200, d_mc=100, aspect=2.0)
    se, bank, theta = S.se_saddle_step(se, bank, plan.steps[1].u, plan.steps[1].v, init=S.SaddleMoments.zeros(1))
    assert np.all(theta.pack() == 0.0)
    assert np.all(se.K_g[1] == [0.0, 0.0]) and np.all(se.K_h[1] == [0.0, 0.0])
    assert theta.p_u == 0.0 and theta.p_v == 0.0
    assert all(np.all(np.isfinite(c)) for c in bank.u + bank.v + bank.g + bank.h)


def test_zero_saddle_from_warm_start_has_no_nan():
    plan = UpdatePlan([unit_init(), Step(SADDLE, QuadraticPenalty(1.0), QuadraticPenalty(1.0))])
    se, bank = quick(plan, R=200, d_mc=100)
    assert np.all(np.isfinite(se.L_u)) and np.all(np.isfinite(se.L_v))
    assert se.K_h[1, 1] < 1e-12
    assert se.diagnostics[-1]["sign_ok"] and se.diagnostics[-1]["zero_pair_ok"]


def test_quadratic_saddle_uniqueness_and_coefficient_identities():
    plan = plans.quadratic_saddle_plan()
    se0, bank0 = S.init_se(plan.steps[0], R=300, d_mc=100, aspect=2.0)
    out = []
    for init in (S.SaddleMoments.zeros(1), S.SaddleMoments.unpack(np.random.default_rng(0).uniform(0.1, 1, 8), 1)):
        se, bank = copy.deepcopy((se0, bank0))
        se, bank, theta = S.se_saddle_step(se, bank, plan.steps[1].u, plan.steps[1].v, init=init)
        out.append(theta)
    assert np.max(np.abs(out[0].pack() - out[1].pack())) < 1e-6
    th = out[0]
    # <g, v> = a_g . m_vG + p_u s_g, so s_g is recovered from the cross moment
    a_g = th.m_uU / se.K_g[0, 0]
    assert th.s_g == pytest.approx((th.c_gv - th.m_vG @ a_g) / th.p_u, rel=1e-6)
    assert th.s_g >= -1e-8 and th.s_h >= -1e-8
    # span invariant: vhat is a combination of the v columns
    vh = bank.vhat[1]
    assert np.allclose(vh, se.L_v[1, 0] * bank.v[0] + se.L_v[1, 1] * bank.v[1])


def test_quadratic_saddle_prediction_against_spectral_formula():
    # E|v|^2 for v = -(I + XᵀX)^{-1} Xᵀ eps equals (1/n) E tr XᵀX (I + XᵀX)^{-2}
    se, _ = S.run_state_evolution(plans.quadratic_saddle_plan(), 2.0, R=1000, d_mc=300, seed=2)
    rng = np.random.default_rng(0)
    vals = []
    for _ in range(4):
        X = rng.standard_normal((3000, 1500)) / math.sqrt(1500)
        ev = np.linalg.eigvalsh(X.T @ X)
        vals.append(np.sum(ev / (1 + ev) ** 2) / 3000)
    assert se.K_h[1, 1] == pytest.approx(np.mean(vals), rel=0.01)


def test_se_json_round_trip():
    se, _ = quick(plans.soft_ridge_plan(), R=200, d_mc=60)
    from selab import io
    back = S.SEParameters.from_dict(__import__("json").loads(io.dumps(se.to_dict())))
    for name in ("K_g", "K_h", "L_u", "L_v", "alpha", "beta"):
        assert np.array_equal(getattr(back, name), getattr(se, name))
    assert back.kinds == se.kinds and back.plan_signature == se.plan_signature


def test_bank_save_load(tmp_path):
    _, bank = quick(plans.first_order_plan(), R=30, d_mc=20)
    bank.save(tmp_path / "bank.npz")
    back = S.SEBank.load(tmp_path / "bank.npz")
    assert back.kinds == bank.kinds and back.plan_signature == bank.plan_signature
    for name in ("u", "v", "g", "h", "uhat", "vhat"):
        assert all(np.array_equal(a, b) for a, b in zip(getattr(back, name), getattr(bank, name)))


def test_bank_is_reproducible():
    a = quick(plans.first_order_plan(), R=50, d_mc=40, seed=7)[0]
    b = quick(plans.first_order_plan(), R=50, d_mc=40, seed=7)[0]
    assert np.array_equal(a.K_g, b.K_g) and np.array_equal(a.L_v, b.L_v)


def test_query_expectation_checks_side():
    _, bank = quick(plans.first_order_plan(), R=20, d_mc=20)
    with pytest.raises(InvalidArgument):
        S.query_expectation(bank, TestFunction("norm2", "v", ("v", 1)), side="u")


# ---------------------------------------------------------------- scalar system

RIDGE = scalar_prox(QuadraticPenalty(1.0))


def test_ridge_system_converges_to_trivial_point():
    res = S.scalar_m_estimation_fixed_point(RIDGE, RIDGE, 1.0, 2.0)
    assert res.degenerate
    assert max(abs(res.alpha), abs(res.beta)) < 1e-8
    assert np.max(np.abs(res.residuals)) <= 1e-8
    k, nu = res.kappa, res.nu
    assert k == pytest.approx(1 / (nu + 1.0), rel=1e-8) and nu == pytest.approx(2.0 / (1 + k), rel=1e-8)


def test_trivial_point_satisfies_equations_exactly():
    k, nu = 0.5, 1.5
    assert np.max(np.abs(S.m_estimation_residuals(RIDGE, RIDGE, 1.0, 2.0, 0.0, 0.0, k, nu))) == 0.0


def test_ridge_with_noise_matches_closed_form():
    a, b, k, nu = S.ridge_closed_form(1.0, 2.0, 1.0)
    res = S.scalar_m_estimation_fixed_point(RIDGE, RIDGE, 1.0, 2.0, sigma=1.0)
    assert res.alpha == pytest.approx(a, rel=1e-6) and res.beta == pytest.approx(b, rel=1e-6)
    assert np.max(np.abs(res.residuals)) < 1e-8


def test_alpha_decreases_with_regularization():
    alphas = [S.scalar_m_estimation_fixed_point(RIDGE, RIDGE, lam, 2.0, sigma=1.0).alpha
              for lam in (0.5, 1.0, 4.0, 16.0, 64.0)]
    assert all(b < a for a, b in zip(alphas, alphas[1:]))
    assert alphas[-1] < 0.05


def test_scalar_solver_rejects_few_nodes():
    with pytest.raises(InvalidArgument):
        S.scalar_m_estimation_fixed_point(RIDGE, RIDGE, 1.0, 2.0, quadrature_nodes=11)


@given(st.floats(0.2, 5.0), st.floats(0.5, 4.0), st.floats(0.0, 2.0))
def test_ridge_closed_form_solves_scalar_equations(lam, aspect, sigma):
    a, b, k, nu = S.ridge_closed_form(lam, aspect, sigma)
    res = S.m_estimation_residuals(RIDGE, RIDGE, lam, aspect, a, b, k, nu, sigma)
    assert np.max(np.abs(res)) < 1e-7 * (1 + a * a + b * b)


# ---------------------------------------------------------------- rate envelopes


def test_delta1_examples():
    n = math.e * (math.log(9) + 1) * 4
    assert S.delta1_rate(1, 1, n, math.exp(-1)) == pytest.approx(((math.log(9) + 1) / n) ** 0.5)
    assert S.delta1_exponent(3) == 1 / 8
    assert S.delta1_exponent(3, first_order=True) == 0.5
    assert S.delta1_rate(2, 3, 1000, 0.1, first_order=True) == pytest.approx(
        4 * ((3 * math.log(21) + math.log(10)) / 1000) ** 0.5)
    with pytest.raises(InvalidArgument):
        S.delta1_rate(4, 3, 100, 0.1)
