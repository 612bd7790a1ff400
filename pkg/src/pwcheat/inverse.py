"""Least-squares reconstruction of the conductivity from transfer data.

The data map lam -> H(lam) is fit in log space (H spans orders of magnitude
across a lam grid and the noise model is multiplicative).  Unknowns are
packed into an unconstrained vector: piece values through a scaled logistic
map into [c0, c1], interior breakpoints through a softmax over piece widths
with a configurable minimum width.  Minimization is damped Gauss-Newton
(Levenberg-Marquardt) on finite-difference Jacobians, restarted from several
seeded initial points; agreement of the restarts is reported because the
underlying problem has at most one solution while the numerical problem is
ill-posed.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logit, softmax

from .dataset import TransferDataset
from .exceptions import NumericalError, UnderdeterminedError, ValidationError
from .laplace import transfer_function
from .piecewise import ConductivityProfile, distance

# Logistic parameters saturate irrecoverably past this magnitude.
THETA_CLIP = 36.0
# Restart solutions within this L1 distance of the best count as agreeing.
AGREEMENT_TOL_L1 = 1e-3
DEFAULT_MIN_WIDTH = 0.02


@dataclass(frozen=True)
class ProfileParameterization:
    """Bijection between profiles with n pieces and R^(2n-1).

    theta[:n] are value logits, theta[n:] are width logits (softmax over n
    widths with the last logit pinned to zero); widths get a floor of
    min_width, a deliberate identifiability guard that theory does not need
    but finite-precision optimization does.  Set min_width = 0 to remove it.
    """

    n: int
    c0: float
    c1: float
    min_width: float = DEFAULT_MIN_WIDTH

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError("need at least one piece")
        if not 0.0 < self.c0 <= self.c1:
            raise ValidationError("bounds must satisfy 0 < c0 <= c1")
        if self.min_width < 0.0 or self.n * self.min_width >= 1.0:
            raise ValidationError("min_width must satisfy 0 <= n*min_width < 1")

    @property
    def n_params(self) -> int:
        return 2 * self.n - 1

    def values_from(self, theta: np.ndarray) -> np.ndarray:
        return self.c0 + (self.c1 - self.c0) * expit(theta[: self.n])

    def widths_from(self, theta: np.ndarray) -> np.ndarray:
        if self.n == 1:
            return np.array([1.0])
        z = softmax(np.append(theta[self.n :], 0.0))
        return self.min_width + (1.0 - self.n * self.min_width) * z

    def to_profile(self, theta: np.ndarray) -> ConductivityProfile:
        theta = np.asarray(theta, dtype=float)
        if theta.size != self.n_params:
            raise ValidationError(f"expected {self.n_params} parameters")
        values = self.values_from(theta)
        widths = self.widths_from(theta)
        breaks = np.concatenate([[0.0], np.cumsum(widths)])
        breaks[-1] = 1.0
        return ConductivityProfile(breaks, values, c0=self.c0, c1=self.c1)

    def to_theta(self, values, widths=None) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        u = (values - self.c0) / (self.c1 - self.c0)
        u = np.clip(u, expit(-THETA_CLIP), expit(THETA_CLIP))
        theta_v = np.clip(logit(u), -THETA_CLIP, THETA_CLIP)
        if self.n == 1:
            return theta_v
        widths = np.asarray(widths, dtype=float)
        z = (widths - self.min_width) / (1.0 - self.n * self.min_width)
        z = np.clip(z, 1e-12, None)
        theta_w = np.clip(np.log(z[:-1] / z[-1]), -THETA_CLIP, THETA_CLIP)
        return np.concatenate([theta_v, theta_w])

    def from_profile(self, profile: ConductivityProfile) -> np.ndarray:
        if profile.n_pieces != self.n:
            raise ValidationError(
                f"profile has {profile.n_pieces} pieces, parameterization {self.n}"
            )
        return self.to_theta(profile.values, profile.widths)


def residuals(a: ConductivityProfile, data: TransferDataset) -> np.ndarray:
    """Scaled log-misfit (log H_model - log H_data) / (sigma/H) per sample."""
    s = data.sigma / data.H
    model = np.array([transfer_function(a, lam) for lam in data.lam])
    return (np.log(model) - np.log(data.H)) / s


def _fd_jacobian(fn, theta: np.ndarray, h_rel: float):
    """Central-difference Jacobian; one-sided (flagged) at the clip boundary."""
    r0 = fn(theta)
    J = np.empty((r0.size, theta.size))
    onesided = np.zeros(theta.size, dtype=bool)
    for j in range(theta.size):
        h = h_rel * max(1.0, abs(theta[j]))
        lo, hi = theta[j] - h, theta[j] + h
        if hi > THETA_CLIP or lo < -THETA_CLIP:
            onesided[j] = True
            if hi > THETA_CLIP:
                hi, lo = theta[j], theta[j] - h
            else:
                hi, lo = theta[j] + h, theta[j]
        tp = theta.copy()
        tp[j] = hi
        tm = theta.copy()
        tm[j] = lo
        J[:, j] = (fn(tp) - fn(tm)) / (hi - lo)
    return J, onesided, r0


def jacobian(
    a: ConductivityProfile,
    data: TransferDataset,
    h_rel: float = 1e-6,
    return_flags: bool = False,
):
    """Finite-difference Jacobian of the residuals at a given profile.

    Differentiation is with respect to the transformed parameters used by
    :func:`reconstruct`, evaluated at the parameter image of ``a``.
    """
    if not 1e-8 <= h_rel <= 1e-3:
        raise ValidationError("h_rel must lie in [1e-8, 1e-3]")
    min_width = DEFAULT_MIN_WIDTH
    if a.n_pieces > 1:
        min_width = min(DEFAULT_MIN_WIDTH, 0.5 * float(a.widths.min()))
    param = ProfileParameterization(a.n_pieces, a.c0, a.c1, min_width)
    theta = param.from_profile(a)
    J, flags, _ = _fd_jacobian(
        lambda th: residuals(param.to_profile(th), data), theta, h_rel
    )
    return (J, flags) if return_flags else J


def _lm_minimize(fn, theta0, *, max_iter, tol_grad, tol_step, damping_init, h_rel):
    theta = np.clip(np.asarray(theta0, dtype=float), -THETA_CLIP, THETA_CLIP)
    r = fn(theta)
    cost = float(r @ r)
    history = [cost]
    mu = damping_init
    converged = False
    iterations = 0
    while iterations < max_iter and not converged:
        iterations += 1
        J, _, r = _fd_jacobian(fn, theta, h_rel)
        cost = float(r @ r)
        g = J.T @ r
        if np.linalg.norm(g, np.inf) < tol_grad:
            converged = True
            break
        jtj = J.T @ J
        scale = np.maximum(np.diag(jtj), 1e-14)
        accepted = False
        while not accepted:
            try:
                step = np.linalg.solve(jtj + mu * np.diag(scale), -g)
            except np.linalg.LinAlgError:
                step = None
            if step is not None:
                if np.linalg.norm(step) < tol_step * (np.linalg.norm(theta) + tol_step):
                    converged = True
                    break
                trial = np.clip(theta + step, -THETA_CLIP, THETA_CLIP)
                r_trial = fn(trial)
                cost_trial = float(r_trial @ r_trial)
                if cost_trial < cost:
                    theta, cost = trial, cost_trial
                    history.append(cost)
                    mu = max(mu / 3.0, 1e-14)
                    accepted = True
                    break
            mu *= 10.0
            if mu > 1e15:
                break
        if not accepted and not converged:
            break
    # At the clip the bounded transforms saturate and theta-space gradients
    # vanish regardless of the profile-space misfit, so stationarity tests
    # prove nothing there: flag such runs as not converged.
    if np.any(np.abs(theta) >= THETA_CLIP - 1e-9):
        converged = False
    return theta, cost, iterations, converged, history


@dataclass(frozen=True)
class ReconstructionResult:
    """Best multi-start fit plus agreement and conditioning diagnostics.

    ``objective`` is the plain data misfit of ``profile`` (any ridge penalty
    excluded) and reproduces ``sum(residuals(profile, data)**2)`` exactly.
    ``covariance`` is the Gauss-Newton proxy pinv(J^T J) at the solution.
    """

    profile: ConductivityProfile
    objective: float
    iterations: int
    converged: bool
    restarts_agreeing: int
    restarts_converged: int
    jacobian_condition: float
    covariance: np.ndarray
    objective_history: tuple
    restart_objectives: tuple
    restart_converged_flags: tuple
    restart_profiles: tuple

    def to_dict(self) -> dict:
        return {
            "profile": self.profile.to_dict(),
            "objective": self.objective,
            "iterations": self.iterations,
            "converged": self.converged,
            "restarts_agreeing": self.restarts_agreeing,
            "restarts_converged": self.restarts_converged,
            "jacobian_condition": self.jacobian_condition,
            "covariance": [list(map(float, row)) for row in self.covariance],
            "objective_history": list(self.objective_history),
            "restart_objectives": list(self.restart_objectives),
            "restart_converged": list(self.restart_converged_flags),
        }


def _initial_thetas(data, param, restarts, seed):
    """Deterministic multi-start seeds: steady-state anchor, then jitter.

    The smallest-lam sample pins the harmonic mean of the profile
    (H(0+) = integral of 1/a), so all values start there; breakpoints start
    uniform.  Restarts beyond the first perturb the packed parameters.
    """
    a0 = 1.0 / float(data.H[0])
    a0 = min(max(a0, param.c0 * (1.0 + 1e-9)), param.c1 * (1.0 - 1e-9))
    base = param.to_theta(
        np.full(param.n, a0), np.full(param.n, 1.0 / param.n)
    )
    rng = np.random.Generator(np.random.PCG64(seed))
    thetas = [base]
    for _ in range(restarts - 1):
        thetas.append(base + rng.normal(0.0, 1.5, size=base.size))
    return thetas


def reconstruct(
    data: TransferDataset,
    n: int,
    *,
    c0: float = 1e-3,
    c1: float = 1e3,
    restarts: int = 8,
    max_iter: int = 100,
    tol_grad: float = 1e-10,
    tol_step: float = 1e-12,
    min_width: float = DEFAULT_MIN_WIDTH,
    damping_init: float = 1e-3,
    seed: int = 0,
    ridge: float = 0.0,
    h_rel: float = 1e-6,
    threads: int = 1,
) -> ReconstructionResult:
    """Fit an n-piece profile to transfer samples by damped least squares.

    Needs at least 2n samples for the 2n-1 unknowns.  ``ridge`` adds a
    quadratic penalty on differences of adjacent value logits (off by
    default so noiseless recovery is unbiased).  If no restart converges the
    best effort is still returned, flagged ``converged=False``.
    """
    if n < 1:
        raise ValidationError("n must be >= 1")
    if len(data) < 2 * n:
        raise UnderdeterminedError(
            f"{len(data)} samples cannot determine {2 * n - 1} unknowns; "
            f"need at least {2 * n}"
        )
    if restarts < 1:
        raise ValidationError("restarts must be >= 1")
    param = ProfileParameterization(n, c0, c1, min_width)

    def cost_residuals(theta):
        r = residuals(param.to_profile(theta), data)
        if ridge > 0.0 and n > 1:
            r = np.concatenate([r, math.sqrt(ridge) * np.diff(theta[:n])])
        return r

    thetas = _initial_thetas(data, param, restarts, seed)
    lm_kwargs = dict(
        max_iter=max_iter,
        tol_grad=tol_grad,
        tol_step=tol_step,
        damping_init=damping_init,
        h_rel=h_rel,
    )

    def run(theta0):
        return _lm_minimize(cost_residuals, theta0, **lm_kwargs)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(run, thetas))
    else:
        outcomes = [run(t) for t in thetas]

    profiles = [param.to_profile(theta) for theta, *_ in outcomes]
    objectives = [float(residuals(p, data) @ residuals(p, data)) for p in profiles]
    converged_flags = [out[3] for out in outcomes]

    ranked = sorted(
        range(len(outcomes)),
        key=lambda i: (not converged_flags[i], objectives[i]),
    )
    best = ranked[0]
    best_profile = profiles[best]
    agreeing = sum(
        1 for p in profiles if distance(p, best_profile, "l1") <= AGREEMENT_TOL_L1
    )

    theta_best = outcomes[best][0]
    J, _, _ = _fd_jacobian(
        lambda th: residuals(param.to_profile(th), data), theta_best, h_rel
    )
    svals = np.linalg.svd(J, compute_uv=False)
    cond = math.inf if svals.min() == 0.0 else float(svals.max() / svals.min())
    covariance = np.linalg.pinv(J.T @ J)

    return ReconstructionResult(
        profile=best_profile,
        objective=objectives[best],
        iterations=outcomes[best][2],
        converged=converged_flags[best],
        restarts_agreeing=agreeing,
        restarts_converged=sum(converged_flags),
        jacobian_condition=cond,
        covariance=covariance,
        objective_history=tuple(outcomes[best][4]),
        restart_objectives=tuple(objectives),
        restart_converged_flags=tuple(converged_flags),
        restart_profiles=tuple(profiles),
    )


def merge_similar_pieces(
    profile: ConductivityProfile, merge_tol: float
) -> ConductivityProfile:
    """Merge adjacent pieces whose values differ by < merge_tol relatively.

    Merged values are width-weighted averages, so the integral of the
    profile is preserved.
    """
    breaks = list(profile.breakpoints)
    vals = list(profile.values)
    widths = list(profile.widths)
    j = 0
    while j < len(vals) - 1:
        if abs(vals[j + 1] - vals[j]) < merge_tol * max(abs(vals[j]), abs(vals[j + 1])):
            w = widths[j] + widths[j + 1]
            vals[j] = (widths[j] * vals[j] + widths[j + 1] * vals[j + 1]) / w
            widths[j] = w
            del vals[j + 1], widths[j + 1], breaks[j + 1]
        else:
            j += 1
    return ConductivityProfile(breaks, vals, c0=profile.c0, c1=profile.c1)


def model_select(
    data: TransferDataset,
    n_max: int,
    *,
    penalty: float = 1e-2,
    merge_tol: float = 1e-3,
    **opts,
) -> tuple[int, ReconstructionResult]:
    """Pick the piece count minimizing objective + penalty*(2n-1)*log(m).

    The information-criterion penalty is expressed in objective units: with
    sigma-weighted data the objective is chi-square scaled and penalty ~ 1
    reproduces a BIC-style rule; the small default keeps noiseless fits from
    being starved of pieces.  Near-equal adjacent values of the winning fit
    are merged before reporting.
    """
    if n_max < 1:
        raise ValidationError("n_max must be >= 1")
    results: dict[int, ReconstructionResult] = {}
    failures: dict[int, Exception] = {}
    for n in range(1, n_max + 1):
        try:
            results[n] = reconstruct(data, n, **opts)
        except (ValidationError, NumericalError) as exc:
            failures[n] = exc
    if not results:
        raise NumericalError(f"reconstruction failed for every n: {failures}")

    m = len(data)
    def criterion(n):
        return results[n].objective + penalty * (2 * n - 1) * math.log(m)

    best_n = min(results, key=criterion)
    best = results[best_n]
    merged = merge_similar_pieces(best.profile, merge_tol)
    if merged.n_pieces != best.profile.n_pieces:
        r = residuals(merged, data)
        best = ReconstructionResult(
            profile=merged,
            objective=float(r @ r),
            iterations=best.iterations,
            converged=best.converged,
            restarts_agreeing=best.restarts_agreeing,
            restarts_converged=best.restarts_converged,
            jacobian_condition=best.jacobian_condition,
            covariance=best.covariance,
            objective_history=best.objective_history,
            restart_objectives=best.restart_objectives,
            restart_converged_flags=best.restart_converged_flags,
            restart_profiles=best.restart_profiles,
        )
    return merged.n_pieces, best
