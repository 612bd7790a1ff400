"""The sklearn-facing estimator: protocol compliance and fit quality."""

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.model_selection import GridSearchCV

from pwcheat import (
    ConductivityProfile,
    PiecewiseConductivityEstimator,
    ValidationError,
    synthesize_dataset,
    transfer_curve,
)

TARGET = ConductivityProfile([0, 0.4, 1], [1.0, 3.0])
LAM = np.geomspace(0.01, 100.0, 16)
DATA = synthesize_dataset(TARGET, LAM)


class TestSklearnProtocol:
    def test_get_set_params_and_clone(self):
        est = PiecewiseConductivityEstimator(n_pieces=2, restarts=3)
        params = est.get_params()
        assert params["n_pieces"] == 2 and params["restarts"] == 3
        twin = clone(est)
        twin.set_params(seed=5)
        assert twin.get_params()["seed"] == 5
        assert est.get_params()["seed"] == 0

    def test_not_fitted_raises(self):
        with pytest.raises(NotFittedError):
            PiecewiseConductivityEstimator().predict([1.0])

    def test_fit_returns_self_and_sets_attributes(self):
        est = PiecewiseConductivityEstimator(n_pieces=2, restarts=3)
        out = est.fit(LAM.reshape(-1, 1), DATA.H, sigma=DATA.sigma)
        assert out is est
        assert est.n_features_in_ == 1
        assert est.n_pieces_ == 2
        assert est.result_.converged

    def test_grid_search_over_piece_count(self):
        est = PiecewiseConductivityEstimator(restarts=2, max_iter=40)
        search = GridSearchCV(est, {"n_pieces": [1, 2]}, cv=2)
        search.fit(LAM.reshape(-1, 1), DATA.H)
        assert search.best_params_["n_pieces"] == 2


class TestFitQuality:
    def test_recovers_two_piece_profile(self):
        est = PiecewiseConductivityEstimator(n_pieces=2).fit(LAM, DATA.H)
        assert np.max(np.abs(est.profile_.values - [1.0, 3.0]) / [1.0, 3.0]) < 1e-4
        assert abs(est.profile_.breakpoints[1] - 0.4) < 1e-3

    def test_predict_matches_fitted_forward_model(self):
        est = PiecewiseConductivityEstimator(n_pieces=2, restarts=3).fit(LAM, DATA.H)
        pred = est.predict(LAM)
        assert np.array_equal(pred, transfer_curve(est.profile_, LAM))
        assert est.score(LAM, DATA.H) > 0.999999

    def test_unsorted_input_accepted(self, rng):
        perm = rng.permutation(LAM.size)
        est = PiecewiseConductivityEstimator(n_pieces=2, restarts=3)
        est.fit(LAM[perm], DATA.H[perm])
        assert abs(est.profile_.breakpoints[1] - 0.4) < 1e-3

    def test_model_selection_mode(self):
        est = PiecewiseConductivityEstimator(n_max=3, restarts=3).fit(LAM, DATA.H)
        assert est.n_pieces_ == 2

    def test_sigma_weights_used(self):
        noisy = synthesize_dataset(TARGET, LAM, 0.01, seed=4)
        est = PiecewiseConductivityEstimator(n_pieces=2, restarts=3)
        est.fit(noisy.lam, noisy.H, sigma=noisy.sigma)
        assert est.result_.objective <= 2.0 * LAM.size


class TestValidation:
    def test_rejects_multi_column_x(self):
        with pytest.raises(ValidationError):
            PiecewiseConductivityEstimator().fit([[1.0, 2.0]], [0.5])

    def test_rejects_nonpositive_lambda(self):
        with pytest.raises(ValidationError):
            PiecewiseConductivityEstimator().fit([-1.0, 1.0], [0.5, 0.5])

    def test_rejects_mismatched_lengths(self):
        with pytest.raises(ValidationError):
            PiecewiseConductivityEstimator().fit([1.0, 2.0], [0.5])

    def test_rejects_nonpositive_h(self):
        with pytest.raises(ValidationError):
            PiecewiseConductivityEstimator().fit([1.0, 2.0], [0.5, -0.5])
