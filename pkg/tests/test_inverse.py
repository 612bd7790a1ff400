"""Reconstruction engine: residuals, Jacobians, multi-start fits, selection."""

import math

import numpy as np
import pytest
from scipy.special import expit

from pwcheat import (
    ConductivityProfile,
    ProfileParameterization,
    TransferDataset,
    UnderdeterminedError,
    ValidationError,
    distance,
    jacobian,
    model_select,
    reconstruct,
    residuals,
    synthesize_dataset,
    transfer_function,
)

from conftest import random_profile

TWO_PIECE = ConductivityProfile([0, 0.4, 1], [1.0, 3.0])
LAM16 = np.geomspace(0.01, 100.0, 16)


class TestParameterization:
    def test_round_trip(self, rng):
        for n in (1, 2, 4):
            param = ProfileParameterization(n, 1e-3, 1e3)
            p = random_profile(rng, n)
            back = param.to_profile(param.from_profile(p))
            assert np.allclose(back.values, p.values, rtol=1e-9)
            assert np.allclose(back.breakpoints, p.breakpoints, atol=1e-9)

    def test_widths_respect_floor(self, rng):
        param = ProfileParameterization(3, 1e-3, 1e3, min_width=0.05)
        theta = rng.normal(0, 10, size=param.n_params)
        prof = param.to_profile(theta)
        assert prof.widths.min() >= 0.05 - 1e-12

    def test_invalid_configurations(self):
        with pytest.raises(ValidationError):
            ProfileParameterization(0, 1e-3, 1e3)
        with pytest.raises(ValidationError):
            ProfileParameterization(2, 1e-3, 1e3, min_width=0.6)


class TestResiduals:
    def test_noiseless_consistency(self):
        data = synthesize_dataset(TWO_PIECE, LAM16)
        r = residuals(TWO_PIECE, data)
        assert np.allclose(r, 0.0, atol=1e-14)

    def test_single_sample_closed_form(self):
        h = math.tanh(1.0)
        data = TransferDataset([1.0], [h], [0.01 * h])
        assert abs(residuals(ConductivityProfile.constant(1.0), data)[0]) < 1e-12

    def test_sign_tracks_transfer_monotonicity(self):
        # H decreases in a, so an overestimated conductivity gives negative
        # log-misfit residuals.
        h = math.tanh(1.0)
        data = TransferDataset([1.0], [h], [0.01 * h])
        r = residuals(ConductivityProfile.constant(1.1), data)[0]
        assert r < 0.0

    def test_duplicate_lam_refused_upstream(self):
        with pytest.raises(ValidationError):
            TransferDataset([1.0, 1.0], [0.5, 0.5], [0.01, 0.01])


class TestJacobian:
    def test_matches_analytic_derivative_constant_profile(self):
        one = ConductivityProfile.constant(1.0)
        data = synthesize_dataset(one, np.geomspace(0.1, 10.0, 6))
        J = jacobian(one, data)
        u = np.sqrt(data.lam)
        # d log H / d log a for H = tanh(sqrt(lam/a))/sqrt(lam a) at a = 1.
        dlogH_dloga = -u / np.sinh(2.0 * u) - 0.5
        param = ProfileParameterization(1, 1e-3, 1e3)
        theta = param.from_profile(one)
        sig = expit(theta[0])
        dloga_dtheta = (1e3 - 1e-3) * sig * (1.0 - sig)
        expected = dlogH_dloga * dloga_dtheta / (data.sigma / data.H)
        assert np.max(np.abs(J[:, 0] - expected) / np.abs(expected)) < 1e-5

    def test_h_rel_domain(self):
        data = synthesize_dataset(TWO_PIECE, LAM16)
        with pytest.raises(ValidationError):
            jacobian(TWO_PIECE, data, h_rel=1e-2)

    def test_one_sided_flag_at_transform_boundary(self):
        # A value at the lower bound saturates its logit: flagged, finite.
        edge = ConductivityProfile([0, 0.5, 1], [1e-3, 1.0])
        data = synthesize_dataset(edge, LAM16)
        J, flags = jacobian(edge, data, return_flags=True)
        assert flags[0]
        assert np.all(np.isfinite(J))

    def test_condition_grows_toward_small_lam_designs(self):
        target = TWO_PIECE
        conds = []
        for lo, hi in ((1e-1, 1e2), (1e-2, 1e0), (1e-3, 1e-1)):
            data = synthesize_dataset(target, np.geomspace(lo, hi, 12))
            J = jacobian(target, data)
            s = np.linalg.svd(J, compute_uv=False)
            conds.append(s.max() / s.min())
        assert conds[0] < conds[1] < conds[2]


class TestReconstruct:
    def test_constant_target_exact_recovery(self):
        data = synthesize_dataset(ConductivityProfile.constant(2.0), np.geomspace(0.01, 50.0, 8))
        res = reconstruct(data, 1, restarts=4)
        assert res.converged
        assert abs(res.profile.values[0] - 2.0) / 2.0 < 1e-6

    def test_two_piece_inverse_crime(self):
        data = synthesize_dataset(TWO_PIECE, LAM16)
        res = reconstruct(data, 2)
        assert res.converged
        assert np.max(np.abs(res.profile.values - [1.0, 3.0]) / [1.0, 3.0]) < 1e-4
        assert abs(res.profile.breakpoints[1] - 0.4) < 1e-3

    def test_noisy_objective_chi_square_scale_and_worse_breakpoint(self):
        clean = reconstruct(synthesize_dataset(TWO_PIECE, LAM16), 2, restarts=4)
        clean_err = abs(clean.profile.breakpoints[1] - 0.4)
        noisy_objs, noisy_errs = [], []
        for seed in range(10):
            data = synthesize_dataset(TWO_PIECE, LAM16, 0.01, seed=seed)
            res = reconstruct(data, 2, restarts=4, seed=seed)
            noisy_objs.append(res.objective)
            noisy_errs.append(abs(res.profile.breakpoints[1] - 0.4))
        assert max(noisy_objs) <= 2.0 * len(LAM16)
        assert np.median(noisy_errs) > clean_err

    def test_objective_reproducible_from_profile(self):
        data = synthesize_dataset(TWO_PIECE, LAM16, 0.01, seed=3)
        res = reconstruct(data, 2, restarts=4)
        r = residuals(res.profile, data)
        assert abs(res.objective - float(r @ r)) <= 1e-12 * max(1.0, res.objective)

    def test_under_determined_rejected(self):
        data = synthesize_dataset(TWO_PIECE, np.geomspace(0.1, 10, 5))
        with pytest.raises(UnderdeterminedError):
            reconstruct(data, 3)

    def test_agreement_counts_converged_restarts(self):
        data = synthesize_dataset(TWO_PIECE, LAM16)
        res = reconstruct(data, 2)
        assert res.restarts_converged >= 4
        assert res.restarts_agreeing >= res.restarts_converged
        for p, ok in zip(res.restart_profiles, res.restart_converged_flags):
            if ok:
                assert distance(p, res.profile, "l1") <= 1e-3

    def test_uniqueness_shadow_small(self, rng):
        for _ in range(3):
            target = random_profile(rng, 2, value_range=(0.5, 4.0), min_width=0.15)
            data = synthesize_dataset(target, LAM16)
            res = reconstruct(data, 2, seed=7)
            conv = [
                p
                for p, ok in zip(res.restart_profiles, res.restart_converged_flags)
                if ok
            ]
            assert len(conv) >= 2
            for p in conv:
                for q in conv:
                    assert distance(p, q, "l1") < 1e-3

    def test_ill_posedness_monotone_noise_sweep(self):
        medians = []
        for noise in (0.0, 0.003, 0.01, 0.03):
            errs = []
            for seed in range(10):
                data = synthesize_dataset(TWO_PIECE, LAM16, noise, seed=seed)
                res = reconstruct(data, 2, restarts=4, seed=seed)
                errs.append(abs(res.profile.breakpoints[1] - 0.4))
            medians.append(float(np.median(errs)))
        assert all(b >= a for a, b in zip(medians, medians[1:]))

    def test_ridge_shrinks_value_contrast(self):
        data = synthesize_dataset(TWO_PIECE, LAM16, 0.01, seed=1)
        free = reconstruct(data, 2, restarts=3, seed=1)
        ridged = reconstruct(data, 2, restarts=3, seed=1, ridge=10.0)
        spread_free = abs(np.diff(np.log(free.profile.values))).max()
        spread_ridged = abs(np.diff(np.log(ridged.profile.values))).max()
        assert spread_ridged <= spread_free

    def test_threaded_restarts_match_serial(self):
        data = synthesize_dataset(TWO_PIECE, LAM16)
        serial = reconstruct(data, 2, restarts=4, threads=1)
        threaded = reconstruct(data, 2, restarts=4, threads=4)
        assert serial.objective == threaded.objective
        assert np.array_equal(serial.profile.values, threaded.profile.values)


class TestModelSelect:
    def test_constant_data_selects_one_piece(self):
        data = synthesize_dataset(ConductivityProfile.constant(2.0), LAM16)
        best_n, res = model_select(data, 3, restarts=4)
        assert best_n == 1
        assert abs(res.profile.values[0] - 2.0) / 2.0 < 1e-6

    def test_two_piece_data_selects_two(self):
        data = synthesize_dataset(TWO_PIECE, LAM16)
        single = reconstruct(data, 1, restarts=4)
        assert single.objective > 0.05
        best_n, res = model_select(data, 3, restarts=4)
        assert best_n == 2
        assert np.max(np.abs(res.profile.values - [1.0, 3.0])) < 1e-3

    def test_n_max_one_degenerate(self):
        data = synthesize_dataset(TWO_PIECE, LAM16)
        best_n, res = model_select(data, 1, restarts=3)
        assert best_n == 1
        assert res.profile.n_pieces == 1

    def test_skips_underdetermined_n(self):
        data = synthesize_dataset(TWO_PIECE, np.geomspace(0.1, 10.0, 5))
        best_n, _ = model_select(data, 4, restarts=2)
        assert best_n <= 2
