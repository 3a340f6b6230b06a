import numpy as np
import pytest

from totaldp.extreal import INF, sup_dist
from totaldp.model import Policy
from totaldp.operators import bellman_T, bellman_T_mu, h_backup
from totaldp.chains import evaluate_policy
from totaldp.ftheta import FixedPointOptions
from totaldp.solvers import (
    CustomB,
    EmptyB,
    FullB,
    OccupationSupportB,
    SolverCapError,
    SolverConfig,
    SpliceB,
    build_n_stage_policy,
    cone_multiplier,
    extract_policy_discounted,
    mixed_vpi,
    modified_policy_iteration,
    policy_iteration,
    value_iteration,
    verify_certificates,
)
from totaldp.fixtures import fixture, random_model, random_policy


class TestValueIteration:
    def test_constant_trace_on_stationary_start(self):
        fx = fixture("FX-P3b")
        J_mu = np.array([0.0, 1.0, 2.0])
        res = value_iteration(fx.model, J_mu,
                              SolverConfig(algorithm="vi", tol=1e-15, max_iter=10,
                                           stop_on_tol=False))
        assert np.array_equal(res.J, J_mu)
        assert all(row.residual == 0.0 for row in res.trace.rows)

    def test_cap_error_carries_bound_direction(self):
        fx = fixture("FX-P4")
        with pytest.raises(SolverCapError) as err:
            value_iteration(fx.model, np.zeros(3),
                            SolverConfig(algorithm="vi", tol=1e-30, max_iter=2))
        assert err.value.bound == "lower"
        assert err.value.trace.rows

    def test_monotone_direction_recorded(self):
        fx = fixture("FX-P4")
        res = value_iteration(fx.model, 2.0 * fx.Jstar,
                              SolverConfig(algorithm="vi", tol=1e-12, max_iter=50))
        assert res.trace.rows[0].extra["direction"] == "nonincreasing"


class TestPolicyIteration:
    def test_discounted_runs_decrease_and_reach_the_optimum(self):
        fx = fixture("FX-D")
        mu0 = Policy.deterministic(fx.model, [1, 1, 1])
        out = policy_iteration(fx.model, mu0,
                               SolverConfig(algorithm="pi", tol=1e-9,
                                            ground_truth=fx.ground_truth()))
        assert out.termination == "optimal-certified"
        for a, b in zip(out.values, out.values[1:]):
            assert np.all(b <= a + 1e-12)
        assert sup_dist(out.values[-1], fx.Jstar) <= 1e-9

    def test_convergent_scenario_with_positive_costs(self):
        # strictly positive transient costs keep every policy value
        # inside a finite multiple of the optimum, so the values converge
        for seed in (1, 2, 3):
            model, Jstar = random_model(400 + seed, regime="P",
                                        cost_range=(0.5, 2.0))
            mu0 = random_policy(seed, model, deterministic=True)
            out = policy_iteration(model, mu0,
                                   SolverConfig(algorithm="pi", tol=1e-9,
                                                ground_truth=(Jstar, None)))
            assert out.termination == "optimal-certified"
            assert cone_multiplier(out.values[0], Jstar) < INF

    def test_cycle_detection_reports(self):
        # a 2-cycle cannot arise with exact evaluation on these suites,
        # but the detector must at least never misfire on convergent runs
        model, _ = random_model(411, regime="D")
        out = policy_iteration(model, random_policy(0, model, deterministic=True),
                               SolverConfig(algorithm="pi"))
        assert out.termination in ("stuck", "optimal-certified")


class TestModifiedPolicyIteration:
    def test_single_backup_schedule_is_value_iteration(self):
        fx = fixture("FX-D")
        mu0 = Policy.deterministic(fx.model, [0, 0, 0])
        J0 = np.zeros(3)
        out = modified_policy_iteration(
            fx.model, mu0, J0,
            SolverConfig(algorithm="mpi", nk=1, tol=1e-15, max_iter=20,
                         stop_on_tol=False))
        # after the first round the greedy values replay plain backups of
        # the evaluation sequence J_{k+1} = T(J_k) from T_mu0(0)
        J = bellman_T_mu(fx.model, mu0, J0)
        for row in out.trace.rows:
            assert sup_dist(np.array(row.extra["J_greedy"]),
                            bellman_T(fx.model, J)) <= 1e-13
            J = bellman_T(fx.model, J)

    def test_matches_policy_iteration_limit(self):
        fx = fixture("FX-D")
        mu0 = Policy.deterministic(fx.model, [1, 1, 1])
        out = modified_policy_iteration(
            fx.model, mu0, np.zeros(3),
            SolverConfig(algorithm="mpi", nk=20, tol=1e-12, max_iter=500))
        assert sup_dist(out.J, fx.Jstar) <= 1e-9


class TestMixed:
    def test_empty_b_replays_value_iteration_exactly(self):
        model, Jstar = random_model(421, regime="P")
        J0 = 1.5 * Jstar
        cfg = SolverConfig(algorithm="mixed", J0=J0, Q0=h_backup(model, J0),
                           nk=1, bstrategy=EmptyB(), tol=1e-15, max_iter=30,
                           stop_on_tol=False)
        out = mixed_vpi(model, cfg)
        J = J0.copy()
        for row in out.trace.rows:
            J = bellman_T(model, J)
            assert np.array_equal(np.array(row.extra["J_snapshot"]), J)

    def test_custom_b_schedule_cycles(self):
        model, Jstar = random_model(431, regime="D")
        sets = (frozenset({0}), frozenset({1, 2}))
        cfg = SolverConfig(algorithm="mixed", J0=np.zeros(model.num_states),
                           Q0=np.zeros(model.num_pairs()), nk=2,
                           bstrategy=CustomB(sets), tol=1e-15, max_iter=4,
                           stop_on_tol=False)
        out = mixed_vpi(model, cfg)
        assert out.trace.rows[0].b_set == "{0}"
        assert out.trace.rows[1].b_set == "{1,2}"
        assert out.trace.rows[2].b_set == "{0}"

    def test_occupation_support_strategy_converges(self):
        model, Jstar = random_model(433, regime="D")
        cfg = SolverConfig(algorithm="mixed", J0=np.zeros(model.num_states),
                           Q0=np.zeros(model.num_pairs()), nk=5,
                           bstrategy=OccupationSupportB(beta=0.6),
                           tol=1e-11, max_iter=2000,
                           ground_truth=(Jstar, h_backup(model, Jstar)))
        out = mixed_vpi(model, cfg)
        assert sup_dist(out.J, Jstar) <= 1e-9

    def test_splice_strategy_uses_fallback_off_support(self):
        model, Jstar = random_model(439, regime="D")
        fallback = random_policy(77, model, deterministic=True)
        rho = np.zeros(model.num_states)
        rho[0] = 1.0
        cfg = SolverConfig(algorithm="mixed", J0=np.zeros(model.num_states),
                           Q0=np.zeros(model.num_pairs()), nk=3,
                           bstrategy=SpliceB(fallback, beta=0.5, rho=rho,
                                             threshold=0.9),  # tiny support
                           tol=1e-11, max_iter=1500,
                           ground_truth=(Jstar, h_backup(model, Jstar)))
        out = mixed_vpi(model, cfg)
        assert sup_dist(out.J, Jstar) <= 1e-9

    def test_clamped_iterates_respect_bounds(self):
        model, Jstar = random_model(443, regime="P")
        lo = np.zeros(model.num_states)
        hi = Jstar + 0.25
        cfg = SolverConfig(algorithm="mixed", J0=1.5 * Jstar,
                           Q0=h_backup(model, 1.5 * Jstar), nk=3,
                           bstrategy=FullB(), clamp_lo=lo, clamp_hi=hi,
                           tol=1e-11, max_iter=2000)
        out = mixed_vpi(model, cfg)
        for row in out.trace.rows:
            J = np.array(row.extra["J_snapshot"])
            assert np.all(J <= hi + 1e-15) and np.all(J >= lo - 1e-15)
        assert sup_dist(out.J, Jstar) <= 1e-8

    def test_policy_injection_schedule(self):
        fx = fixture("FX-P2")
        go = Policy.deterministic(fx.model, [0, 1])
        stay = Policy.deterministic(fx.model, [0, 0])
        cfg = SolverConfig(algorithm="mixed", J0=np.zeros(2),
                           Q0=h_backup(fx.model, np.zeros(2)), nk=2,
                           bstrategy=FullB(), policy_schedule=[go, stay],
                           tol=1e-15, max_iter=2, stop_on_tol=False)
        out = mixed_vpi(fx.model, cfg)
        assert out.trace.rows[0].policy == go.descriptor()
        assert out.trace.rows[1].policy == stay.descriptor()


class TestExtraction:
    def test_greedy_on_the_optimum_is_optimal(self):
        fx = fixture("FX-D")
        nu, bound = extract_policy_discounted(fx.model, fx.Qstar, epsilon=0.0,
                                              delta=0.0, k=0)
        J_nu = evaluate_policy(fx.model, nu).J
        assert sup_dist(J_nu, fx.Jstar) <= 1e-9
        assert bound == 0.0

    def test_bound_shape(self):
        fx = fixture("FX-D")
        _, bound = extract_policy_discounted(fx.model, fx.Qstar, epsilon=0.01,
                                             delta=2.0, k=3)
        assert bound == (2 * 0.9 ** 3 * 2.0 + 0.01) / (1.0 - 0.9)

    def test_requires_discounted_model(self):
        fx = fixture("FX-P2")
        with pytest.raises(ValueError):
            extract_policy_discounted(fx.model, fx.Qstar, 0.0)


class TestNStagePolicy:
    def test_optimum_needs_one_stage(self):
        fx = fixture("FX-P4")
        stages, slack = build_n_stage_policy(fx.model, fx.Jstar, delta=0.5)
        assert len(stages) == 1
        assert np.all(slack <= 0.5)

    def test_cone_start_meets_target(self):
        for seed in (0, 1, 2):
            model, Jstar = random_model(449 + seed, regime="P")
            J = 1.3 * Jstar
            stages, slack = build_n_stage_policy(model, J, delta=0.05)
            composed = J.copy()
            for mu in reversed(stages):
                composed = bellman_T_mu(model, mu, composed)
            assert np.all(composed <= J + 0.05 + 1e-12)
            assert np.array_equal(slack, composed - J)

    def test_near_fixed_point_gets_tiny_slack(self):
        model, Jstar = random_model(457, regime="P")
        stages, slack = build_n_stage_policy(model, Jstar + 1e-9, delta=1e-6)
        assert np.all(slack <= 1e-6)

    def test_unreachable_target_reports_margin(self):
        fx = fixture("FX-P4")
        bad = np.array([0.0, 0.25, 0.5])  # far below the optimum
        with pytest.raises(ValueError) as err:
            build_n_stage_policy(fx.model, bad, delta=0.01, n_max=5)
        assert "best margin" in str(err.value)


class TestVerifyCertificates:
    def test_discounted_trace_passes_rate_check(self):
        fx = fixture("FX-D")
        cfg = SolverConfig(algorithm="mixed", J0=np.zeros(3),
                           Q0=np.zeros(6), nk=5, bstrategy=FullB(),
                           tol=1e-12, max_iter=400,
                           ground_truth=fx.ground_truth(),
                           fp_options=FixedPointOptions(tol=1e-14))
        out = mixed_vpi(fx.model, cfg)
        report = verify_certificates(fx.model, out.trace, fx.ground_truth())
        geo = [c for c in report.checks if c.name == "geometric-rate"]
        assert geo and geo[0].passed and geo[0].margin <= 0.0

    def test_nonpositive_sandwich_passes(self):
        fx = fixture("FX-N2")
        cfg = SolverConfig(algorithm="mixed", J0=np.zeros(2),
                           Q0=np.zeros(3), nk=3, bstrategy=FullB(),
                           tol=1e-12, max_iter=100,
                           ground_truth=fx.ground_truth())
        out = mixed_vpi(fx.model, cfg)
        report = verify_certificates(fx.model, out.trace, fx.ground_truth())
        names = {c.name: c for c in report.checks}
        assert names["envelope-upper"].passed
        assert names["dominance-lower"].passed

    def test_stationary_start_fails_cone_check_with_witness(self):
        fx = fixture("FX-P3b")
        J_mu = np.array([0.0, 1.0, 2.0])
        res = value_iteration(fx.model, J_mu,
                              SolverConfig(algorithm="vi", tol=1e-12, max_iter=5,
                                           ground_truth=(fx.Jstar, None)))
        report = verify_certificates(fx.model, res.trace, (fx.Jstar, None))
        cone = [c for c in report.checks if c.name == "cone-membership"][0]
        assert not cone.passed
        assert "state 1" in cone.detail

    def test_summary_renders(self):
        fx = fixture("FX-P4")
        res = value_iteration(fx.model, np.zeros(3),
                              SolverConfig(algorithm="vi", tol=1e-12, max_iter=10,
                                           ground_truth=fx.ground_truth()))
        report = verify_certificates(fx.model, res.trace, fx.ground_truth())
        text = report.summary()
        assert "cone-membership" in text

    def test_cone_checks_are_nonnegative_regime_only(self):
        fx = fixture("FX-N2")
        res = value_iteration(fx.model, np.zeros(2),
                              SolverConfig(algorithm="vi", tol=1e-12, max_iter=10,
                                           ground_truth=fx.ground_truth()))
        report = verify_certificates(fx.model, res.trace, fx.ground_truth())
        assert all(c.name != "cone-membership" for c in report.checks)


class TestConeMultiplier:
    def test_finite_ratio(self):
        assert cone_multiplier(np.array([0.0, 2.0]), np.array([0.0, 1.0])) == 2.0

    def test_zero_set_violation(self):
        assert cone_multiplier(np.array([0.5, 1.0]), np.array([0.0, 1.0])) == INF

    def test_infinite_optimum_never_constrains(self):
        assert cone_multiplier(np.array([5.0, 1.0]), np.array([INF, 1.0])) == 1.0
