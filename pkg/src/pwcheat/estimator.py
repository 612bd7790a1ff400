"""Scikit-learn estimator facade over the reconstruction engine.

Samples of the boundary transfer function play the role of training data:
X holds the lam values (one column or 1-D), y the measured H values.
Fitting recovers the piecewise-constant conductivity; prediction evaluates
the fitted rod's transfer function at new lam values, so the estimator
composes with sklearn model selection and pipelines.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import as_lambda_array, as_positive_array
from .dataset import TransferDataset
from .inverse import model_select, reconstruct
from .laplace import transfer_curve
from .piecewise import DEFAULT_LOWER_BOUND, DEFAULT_UPPER_BOUND


class PiecewiseConductivityEstimator(RegressorMixin, BaseEstimator):
    """Fit a piecewise-constant conductivity to transfer-function samples.

    Parameters
    ----------
    n_pieces : int, default 1
        Number of conductivity pieces to fit.  Ignored when ``n_max`` is
        set, in which case the piece count is chosen by an information
        criterion over 1..n_max.
    n_max : int or None
        Enables model selection when given.
    c0, c1 : float
        Admissible conductivity bounds.
    restarts, max_iter, tol_grad, tol_step, min_width, damping_init, ridge,
    seed, threads
        Optimizer knobs, passed through to :func:`pwcheat.inverse.reconstruct`.

    Attributes
    ----------
    profile_ : ConductivityProfile
        Recovered conductivity.
    result_ : ReconstructionResult
        Full diagnostics of the winning fit.
    n_pieces_ : int
        Piece count of the recovered profile.
    """

    def __init__(
        self,
        n_pieces: int = 1,
        n_max: int | None = None,
        c0: float = DEFAULT_LOWER_BOUND,
        c1: float = DEFAULT_UPPER_BOUND,
        restarts: int = 8,
        max_iter: int = 100,
        tol_grad: float = 1e-10,
        tol_step: float = 1e-12,
        min_width: float = 0.02,
        damping_init: float = 1e-3,
        ridge: float = 0.0,
        seed: int = 0,
        threads: int = 1,
    ):
        self.n_pieces = n_pieces
        self.n_max = n_max
        self.c0 = c0
        self.c1 = c1
        self.restarts = restarts
        self.max_iter = max_iter
        self.tol_grad = tol_grad
        self.tol_step = tol_step
        self.min_width = min_width
        self.damping_init = damping_init
        self.ridge = ridge
        self.seed = seed
        self.threads = threads

    def _dataset(self, X, y, sigma) -> TransferDataset:
        lam = as_lambda_array(X)
        H = as_positive_array(y, "H", lam.size)
        if sigma is None:
            sigma_arr = H.copy()
        else:
            sigma_arr = as_positive_array(sigma, "sigma", lam.size)
        order = np.argsort(lam)
        return TransferDataset(lam[order], H[order], sigma_arr[order])

    def fit(self, X, y, sigma=None):
        """Recover the conductivity from samples (lam_i, H_i).

        sigma gives per-sample absolute uncertainties of H; omitted, every
        sample carries unit weight on the log scale.
        """
        data = self._dataset(X, y, sigma)
        opts = dict(
            c0=self.c0,
            c1=self.c1,
            restarts=self.restarts,
            max_iter=self.max_iter,
            tol_grad=self.tol_grad,
            tol_step=self.tol_step,
            min_width=self.min_width,
            damping_init=self.damping_init,
            ridge=self.ridge,
            seed=self.seed,
            threads=self.threads,
        )
        if self.n_max is not None:
            self.n_pieces_, self.result_ = model_select(data, self.n_max, **opts)
        else:
            self.result_ = reconstruct(data, self.n_pieces, **opts)
            self.n_pieces_ = self.result_.profile.n_pieces
        self.profile_ = self.result_.profile
        self.n_features_in_ = 1
        return self

    def predict(self, X) -> np.ndarray:
        """Transfer-function values of the fitted rod at the given lam."""
        check_is_fitted(self, "profile_")
        return transfer_curve(self.profile_, as_lambda_array(X))
