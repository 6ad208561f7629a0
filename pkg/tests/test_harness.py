import numpy as np
import pytest

from savwave.harness import (
    AuxGapStudy,
    ConvergenceStudy,
    EnergyStudy,
    SpatialStudy,
    Statistics,
    WeakEnergyStudy,
    aux_gap_scaling,
    energy_evolution,
    fit_loglog,
    invariant_suite,
    spatial_refinement,
    strong_convergence,
    weak_energy_error,
)

MINI = ConvergenceStudy(
    f="sine", g="sine", modes=16, T=0.5, tau_exps=(4, 5, 6), ref_exp=9,
    schemes=("exponential",), realizations=16, seed=321, chunk=8,
)


class TestStatistics:
    def test_from_samples(self):
        s = Statistics.from_samples([1.0, 2.0, 3.0, 4.0])
        assert s.mean == 2.5
        assert s.count == 4
        assert s.stderr == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2.0)

    def test_single_sample_has_zero_stderr(self):
        assert Statistics.from_samples([3.0]).stderr == 0.0

    def test_loglog_fit_recovers_slope(self):
        x = np.array([0.5, 0.25, 0.125])
        slope, intercept = fit_loglog(x, 3.0 * x**1.5)
        assert slope == pytest.approx(1.5, abs=1e-12)
        assert 2.0**intercept == pytest.approx(3.0, rel=1e-12)


class TestStrongConvergence:
    def test_self_comparison_is_exact_zero(self):
        study = ConvergenceStudy(
            f="linear", g="sine", modes=8, T=0.25, tau_exps=(5,), ref_exp=5,
            schemes=("exponential",), realizations=4, seed=1, chunk=4,
        )
        res = strong_convergence(study).per_scheme[0]
        assert np.all(res.rms_error == 0.0)
        assert res.excluded == 0

    def test_errors_decrease_monotonically_on_shared_paths(self):
        res = strong_convergence(MINI).per_scheme[0]
        # taus are listed coarse to fine, so errors must decrease
        assert np.all(np.diff(res.rms_error) < 0)

    def test_worker_count_does_not_change_results(self):
        a = strong_convergence(MINI, workers=1).per_scheme[0]
        b = strong_convergence(MINI, workers=3).per_scheme[0]
        assert np.array_equal(a.rms_error, b.rms_error)
        assert np.array_equal(a.stderr, b.stderr)

    def test_h_norm_errors_dominate_l2(self):
        l2 = strong_convergence(MINI).per_scheme[0]
        hn = strong_convergence(type(MINI)(**{**MINI.__dict__, "norm": "h"})).per_scheme[0]
        assert np.all(hn.rms_error >= l2.rms_error)

    def test_invalid_ladder_rejected(self):
        with pytest.raises(ValueError):
            ConvergenceStudy(tau_exps=(4,), ref_exp=3)

    def test_cross_scheme_reference_supported(self):
        study = type(MINI)(**{**MINI.__dict__, "schemes": ("midpoint",),
                              "reference_scheme": "exponential"})
        res = strong_convergence(study).per_scheme[0]
        assert np.all(res.rms_error > 0)
        assert 0.5 < res.slope < 1.5


class TestEnergyEvolution:
    def test_conservative_run_is_flat_with_zero_band(self):
        study = EnergyStudy(f="sine", g="zero", modes=16, T=0.25, tau=2.0**-5,
                            realizations=6, seed=5, chunk=3)
        res = energy_evolution(study)
        assert np.max(np.abs(res.mean_V - res.predicted_V)) <= 1e-12
        assert np.max(res.stderr_V) <= 1e-12

    def test_additive_noise_matches_exact_law(self):
        study = EnergyStudy(f="linear", g="constant", sigma=1.0, modes=32, T=0.5,
                            tau=2.0**-6, realizations=400, seed=7, chunk=200)
        res = energy_evolution(study)
        dev = np.abs(res.mean_V - res.predicted_V)
        assert np.all(dev[1:] <= 3.0 * res.stderr_V[1:])
        # growth is linear: the predicted points sit on one line
        inc = np.diff(res.predicted_V)
        assert np.max(np.abs(inc - inc[0])) <= 1e-15

    def test_multiplicative_prediction_tracks_mean(self):
        study = EnergyStudy(f="linear", g="sine", modes=16, T=0.25, tau=2.0**-5,
                            realizations=300, seed=11, chunk=100)
        res = energy_evolution(study)
        dev = np.abs(res.mean_V - res.predicted_V)
        assert np.all(dev[1:] <= 4.0 * np.maximum(res.stderr_V[1:], 1e-12))

    def test_worker_determinism(self):
        study = EnergyStudy(f="linear", g="sine", modes=16, T=0.25, tau=2.0**-5,
                            realizations=40, seed=3, chunk=10)
        a = energy_evolution(study, workers=1)
        b = energy_evolution(study, workers=4)
        assert np.array_equal(a.mean_V, b.mean_V)
        assert np.array_equal(a.predicted_V, b.predicted_V)


class TestAuxGap:
    def test_zero_drift_keeps_gap_zero(self):
        study = AuxGapStudy(f="zero", g="sine", modes=16, T=0.25, tau_exps=(5, 6),
                            realizations=4, seed=1, chunk=4)
        res = aux_gap_scaling(study)
        assert np.all(res.mean_max_gap == 0.0)

    def test_deterministic_drift_scales_linearly(self):
        study = AuxGapStudy(f="sine", g="zero", modes=32, T=1.0, tau_exps=(5, 6, 7, 8),
                            realizations=1, seed=1, chunk=1)
        res = aux_gap_scaling(study)
        assert np.all((res.ratios > 1.5) & (res.ratios < 2.7))

    def test_multiplicative_halving_ratio_in_band(self):
        study = AuxGapStudy(f="sine", g="sine", modes=32, T=0.5, tau_exps=(5, 6, 7),
                            realizations=32, seed=9, chunk=16)
        res = aux_gap_scaling(study)
        assert np.all((res.ratios > 1.5) & (res.ratios < 2.7))


class TestSpatialRefinement:
    def test_error_decreases_with_mesh_refinement(self):
        study = SpatialStudy(f="sine", g="sine", ref_modes=128, h_exps=(3, 4, 5),
                             T=0.5, tau=2.0**-8, realizations=8, seed=13, chunk=8)
        res = spatial_refinement(study)
        assert np.all(np.diff(res.rms_error) < 0)
        assert res.slope >= 0.6


class TestWeakEnergy:
    def test_additive_drift_shrinks_with_mesh(self):
        drifts = []
        for elems in (8, 16):
            study = WeakEnergyStudy(f="linear", g="constant", elements=elems,
                                    ref_modes=64, T=0.5, tau=2.0**-6,
                                    realizations=64, seed=17, chunk=32)
            res = weak_energy_error(study)
            drifts.append(res.drift[-1])
        assert drifts[1] < drifts[0]

    def test_multiplicative_drift_monotone_over_two_levels(self):
        drifts = []
        for elems in (16, 32):
            study = WeakEnergyStudy(f="sine", g="sine", elements=elems,
                                    ref_modes=64, T=0.5, tau=2.0**-6,
                                    realizations=64, seed=17, chunk=32)
            res = weak_energy_error(study)
            drifts.append(res.drift[-1])
        assert drifts[1] < drifts[0]

    def test_err0_is_initialization_defect(self):
        study = WeakEnergyStudy(f="sine", g="sine", elements=16, ref_modes=64,
                                T=0.25, tau=2.0**-6, realizations=8, seed=2, chunk=8)
        res = weak_energy_error(study)
        assert res.gap[0] == res.err0
        # err0 is dominated by the delta0 offset carried by q^2
        assert 0.8 <= res.err0 <= 1.05

    def test_matched_discretization_gap_is_initialization_only(self):
        # V - V1 = q^2 - F(u) stays within O(tau) of its initial value delta0
        from savwave.model import make_problem
        from savwave.noise import RngStream
        from savwave.schemes import run_trajectory

        problem = make_problem(f="sine", g="sine", modes=32)
        tau = 2.0**-7
        diffs = np.zeros(33)
        paths = 4
        for i in range(paths):
            records = run_trajectory(problem, tau=tau, n_steps=32, rng=RngStream(40, i))
            diffs += np.array([r.V - r.V1 for r in records]) / paths
        assert abs(diffs[0] - problem.delta0) <= 1e-12
        assert np.max(np.abs(diffs - diffs[0])) <= 20 * tau


class TestInvariantSuite:
    def test_default_run_passes_everything(self):
        results = invariant_suite()
        failed = [r.name for r in results if not r.passed]
        assert failed == []

    def test_filter_selects_module_prefix(self):
        results = invariant_suite(name_filter="spectral")
        assert results
        assert all(r.name.startswith("spectral") for r in results)

    def test_dropping_balancing_term_fails_energy_checks(self):
        results = invariant_suite(mutations={"drop_balancing"})
        failed = {r.name for r in results if not r.passed}
        assert "schemes.pathwise_energy" in failed
        assert "fem.pathwise_energy" in failed
        # nothing unrelated breaks
        assert failed <= {"schemes.pathwise_energy", "fem.pathwise_energy"}
