"""Numerical checks of the completeness machinery behind uniqueness.

The reconstruction problem is identifiable because products of flux-form
solutions for two coefficient profiles span the piecewise-constant class:
if the weighted moments of such products vanish for every spectral value,
the weight must vanish.  This module turns the ingredients of that argument
into computable quantities:

* exact product moments of two flux solutions against a piecewise weight,
* the finite moment matrix on a fixed partition and its smallest singular
  value (a conditioning certificate, not a proof),
* the integration-by-parts identity tying the profile difference to
  boundary data,
* per-interval exponential coefficients, their dominance inequalities and
  the large-k growth of solutions relative to the growing coefficient.

All quantities are evaluated through scaled mantissa/exponent arithmetic so
the large-k regime, where the argument actually bites, stays representable.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._scaled import Scaled, sum_scaled
from .exceptions import NumericalError, ValidationError
from .laplace import (
    FluxSolution,
    TemperatureSolution,
    flux_integral_residual,
    solve_flux,
    solve_temperature,
)
from .piecewise import ConductivityProfile, PiecewiseFunction, refine_pair

# Guard added to defect denominators; keeps 0/0 cases defined without
# influencing any representable ratio.
DEFECT_DENOMINATOR_GUARD = 1e-290


def _growth_integral(gamma: float, width: float) -> Scaled:
    """integral_0^w e^(gamma*xi) d(xi) as a scaled value, stable for any gamma."""
    z = gamma * width
    if z == 0.0:
        return Scaled(width, 0.0)
    if z > 0.0:
        return Scaled(-math.expm1(-z) / gamma, z)
    return Scaled(math.expm1(z) / gamma, 0.0)


def _hyperbolic_product_integral(
    coeffs1, rate1: float, coeffs2, rate2: float, width: float
) -> Scaled:
    """integral over a piece of two growing/decaying exponential pairs."""
    a1, b1 = coeffs1
    a2, b2 = coeffs2
    terms = [
        Scaled(a1 * a2, 0.0) * _growth_integral(rate1 + rate2, width),
        Scaled(a1 * b2, 0.0) * _growth_integral(rate1 - rate2, width),
        Scaled(b1 * a2, 0.0) * _growth_integral(rate2 - rate1, width),
        Scaled(b1 * b2, 0.0) * _growth_integral(-rate1 - rate2, width),
    ]
    return sum_scaled(terms)


def _flux_exp_coeffs(sol: FluxSolution, x: float):
    """(growing, decaying, rate, scale) of psi on the piece right of x."""
    mp, md, scale = sol.scaled_at(x)
    r = sol.resistivity.value_at(min(x, 1.0 - 1e-15))
    ks = sol.k * math.sqrt(r)
    return (0.5 * (mp + md / ks), 0.5 * (mp - md / ks)), ks, scale


def _temperature_gradient_coeffs(sol: TemperatureSolution, x: float):
    """(growing, decaying, rate, scale) of v' on the piece right of x."""
    mv, mf, scale = sol.scaled_at(x)
    a = sol.conductivity.value_at(min(x, 1.0 - 1e-15))
    mu = math.sqrt(sol.lam / a)
    dv = mf / a
    return (0.5 * (mv * mu + dv), 0.5 * (dv - mv * mu)), mu, scale


def _union_edges(*functions: PiecewiseFunction) -> np.ndarray:
    edges = np.unique(np.concatenate([f.breakpoints for f in functions]))
    return edges


def product_moment_scaled(
    weight: PiecewiseFunction,
    r1: PiecewiseFunction,
    r2: PiecewiseFunction,
    k: float,
) -> Scaled:
    """Exact integral of weight * psi1 * psi2 over [0, 1], scaled form."""
    if k <= 0.0:
        raise ValidationError("k must be > 0")
    sol1 = solve_flux(r1, k)
    sol2 = solve_flux(r2, k)
    return _weighted_product_integrals(weight, sol1, sol2)


def _weighted_product_integrals(
    weight: PiecewiseFunction, sol1: FluxSolution, sol2: FluxSolution
) -> Scaled:
    edges = _union_edges(weight, sol1.resistivity, sol2.resistivity)
    terms = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        c = weight.value_at(0.5 * (lo + hi))
        if c == 0.0:
            continue
        p1, rate1, s1 = _flux_exp_coeffs(sol1, lo)
        p2, rate2, s2 = _flux_exp_coeffs(sol2, lo)
        piece = _hyperbolic_product_integral(p1, rate1, p2, rate2, hi - lo)
        terms.append(Scaled(c * piece.mantissa, piece.exponent + s1 + s2))
    return sum_scaled(terms)


def product_moment(
    weight: PiecewiseFunction,
    r1: PiecewiseFunction,
    r2: PiecewiseFunction,
    k: float,
) -> float:
    """Plain-float product moment (overflows to inf only beyond double range)."""
    return product_moment_scaled(weight, r1, r2, k).value


@dataclass(frozen=True)
class MomentMatrix:
    """Moments of psi1*psi2 against an indicator basis, row-scaled.

    ``entries[i, m] * exp(row_log_sup[i])`` is the integral of the product at
    k_grid[i] over partition piece m.  The smallest singular value of the
    row-normalized entries certifies (at this discretization) that only the
    zero weight annihilates every sampled moment.
    """

    k_grid: np.ndarray
    partition: np.ndarray
    entries: np.ndarray
    row_log_sup: np.ndarray
    min_singular_value_scaled: float
    condition_number: float

    def null_vector_norm(self) -> float:
        """Norm of the least-squares solution of entries @ h = 0."""
        rhs = np.zeros(self.entries.shape[0])
        h, *_ = np.linalg.lstsq(self.entries, rhs, rcond=None)
        return float(np.linalg.norm(h))


def moment_matrix(
    r1: PiecewiseFunction,
    r2: PiecewiseFunction,
    k_grid,
    partition,
    threads: int = 1,
) -> MomentMatrix:
    """Assemble the moment matrix and its scaled singular-value certificate."""
    k_grid = np.asarray(k_grid, dtype=float)
    partition = np.asarray(partition, dtype=float)
    if partition.ndim != 1 or partition.size < 2:
        raise ValidationError("partition needs at least two boundaries")
    if partition[0] != 0.0 or partition[-1] != 1.0 or np.any(np.diff(partition) <= 0):
        raise ValidationError("partition must increase strictly from 0 to 1")
    n_pieces = partition.size - 1
    if np.any(k_grid <= 0) or np.unique(k_grid).size != k_grid.size:
        raise ValidationError("k grid must be distinct positive values")
    if k_grid.size < n_pieces:
        raise ValidationError("need at least as many k values as partition pieces")

    def row(k: float):
        sol1 = solve_flux(r1, k)
        sol2 = solve_flux(r2, k)
        out = []
        for m in range(n_pieces):
            w = _indicator(partition, m)
            out.append(_weighted_product_integrals(w, sol1, sol2))
        return out

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(row, k_grid))
    else:
        rows = [row(k) for k in k_grid]

    logs = np.array([[t.log_abs for t in r] for r in rows])
    row_sup = logs.max(axis=1)
    entries = np.exp(logs - row_sup[:, None])
    if not np.all(np.isfinite(entries)):
        raise NumericalError("moment matrix entries not finite after row scaling")
    try:
        svals = np.linalg.svd(entries, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"singular value computation failed: {exc}") from exc
    smin, smax = float(svals.min()), float(svals.max())
    cond = math.inf if smin == 0.0 else smax / smin
    return MomentMatrix(k_grid, partition, entries, row_sup, smin, cond)


def _indicator(partition: np.ndarray, m: int) -> PiecewiseFunction:
    vals = np.zeros(partition.size - 1)
    vals[m] = 1.0
    return PiecewiseFunction(partition, vals)


def default_k_grid(n_partition_pieces: int, per_piece: int = 3) -> np.ndarray:
    """Log-spaced grid on [0.25, 64], per_piece points per partition piece."""
    return np.geomspace(0.25, 64.0, per_piece * n_partition_pieces)


def orthogonality_identity_defect(
    a1: ConductivityProfile, a2: ConductivityProfile, lam: float
) -> float:
    """Relative defect of the integration-by-parts identity at one lam.

    Both sides are computed independently: the left side by exact piecewise
    integration of (a1-a2) v1' v2', the right side from boundary values of
    the two temperature solutions.  The identity is exact, so the returned
    value is pure roundoff.
    """
    sol1 = solve_temperature(a1, lam)
    sol2 = solve_temperature(a2, lam)
    ref = float(sol1.node_scale[-1] + sol2.node_scale[-1])

    edges = _union_edges(a1, a2)
    terms = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        mid = 0.5 * (lo + hi)
        p = a1.value_at(mid) - a2.value_at(mid)
        if p == 0.0:
            continue
        c1, mu1, s1 = _temperature_gradient_coeffs(sol1, lo)
        c2, mu2, s2 = _temperature_gradient_coeffs(sol2, lo)
        piece = _hyperbolic_product_integral(c1, mu1, c2, mu2, hi - lo)
        terms.append(Scaled(p * piece.mantissa, piece.exponent + s1 + s2))
    lhs = _relative_value(sum_scaled(terms), ref)

    rhs = _boundary_terms(a1, a2, sol1, sol2, ref)
    denom = abs(lhs) + abs(rhs) + DEFECT_DENOMINATOR_GUARD
    return abs(lhs - rhs) / denom


def _relative_value(x: Scaled, ref: float) -> float:
    if x.mantissa == 0.0:
        return 0.0
    return math.copysign(math.exp(x.log_abs - ref), x.mantissa)


def _boundary_terms(
    a1: ConductivityProfile,
    a2: ConductivityProfile,
    sol1: TemperatureSolution,
    sol2: TemperatureSolution,
    ref: float,
) -> float:
    """p v2' v1 + a1 w' v1 - a1 w v1' evaluated at 1 minus at 0, over exp(ref)."""
    total = 0.0
    for x, sgn in ((1.0, 1.0), (0.0, -1.0)):
        a1x = a1.value_at(min(x, 1.0 - 1e-15))
        a2x = a2.value_at(min(x, 1.0 - 1e-15))
        mv1, mf1, s1 = sol1.scaled_at(x)
        mv2, mf2, s2 = sol2.scaled_at(x)
        v1 = _relative_value(Scaled(mv1, s1 + sol2.node_scale[-1]), ref)
        v2 = _relative_value(Scaled(mv2, s2 + sol1.node_scale[-1]), ref)
        dv1 = _relative_value(Scaled(mf1 / a1x, s1 + sol2.node_scale[-1]), ref)
        dv2 = _relative_value(Scaled(mf2 / a2x, s2 + sol1.node_scale[-1]), ref)
        p = a1x - a2x
        term = p * dv2 * v1 + a1x * (dv1 - dv2) * v1 - a1x * (v1 - v2) * dv1
        total += sgn * term
    return total


@dataclass(frozen=True)
class ExponentialCoefficients:
    """Growing/decaying coefficients of a flux solution on its last piece.

    On the piece right of x0 the solution is
    a_coef * e^(k q (x - x0)) + b_coef * e^(-k q (x - x0)); the growing
    coefficient dominates: a >= |b| >= 0 and 2a >= psi(x0), strict whenever
    psi'(x0) > 0.
    """

    k: float
    x0: float
    q_last: float
    a_coef: Scaled
    b_coef: Scaled

    @property
    def log_a(self) -> float:
        return self.a_coef.log_abs


def exponential_coefficients(
    sol: FluxSolution, x0: float, q_last: float
) -> ExponentialCoefficients:
    """Coefficients from the node pair at x0: a,b = (psi +- psi'/(k q))/2."""
    if sol.k <= 0.0:
        raise ValidationError("exponential coefficients need k > 0")
    if q_last <= 0.0:
        raise ValidationError("q_last must be positive")
    nodes = sol.nodes
    idx = int(np.argmin(np.abs(nodes - x0)))
    if abs(nodes[idx] - x0) > 1e-12:
        raise ValidationError(f"x0={x0} is not a node of the solution")
    mp, md = sol.node_mantissa[idx]
    scale = float(sol.node_scale[idx])
    kq = sol.k * q_last
    a_m = 0.5 * (mp + md / kq)
    b_m = 0.5 * (mp - md / kq)
    if not (a_m > 0.0 and a_m >= abs(b_m) and 2.0 * a_m >= mp):
        raise NumericalError("coefficient dominance violated; inconsistent inputs")
    return ExponentialCoefficients(
        sol.k, float(nodes[idx]), q_last, Scaled(a_m, scale), Scaled(b_m, scale)
    )


def last_discontinuity(profile: PiecewiseFunction) -> float:
    """Position of the last interior breakpoint; 0 for a constant profile."""
    return float(profile.breakpoints[-2]) if profile.n_pieces > 1 else 0.0


def growth_ratio(resistivity: PiecewiseFunction, y: float, k: float) -> Scaled:
    """psi(y, k) / a_coef(k) on the last piece, in scaled form.

    Diverges as k grows; bounded below by
    e^(k q (y - x0)) - e^(-k q (y - x0)) (see :func:`growth_lower_bound`).
    """
    if k <= 0.0:
        raise ValidationError("k must be > 0")
    x0 = last_discontinuity(resistivity)
    if not x0 < y < 1.0:
        raise ValidationError(f"y must lie strictly inside ({x0}, 1)")
    sol = solve_flux(resistivity, k)
    q_last = math.sqrt(float(resistivity.values[-1]))
    coeffs = exponential_coefficients(sol, x0, q_last)
    return Scaled(1.0, sol.log_psi_at(y) - coeffs.log_a)


def growth_lower_bound(q_last: float, k: float, dy: float) -> Scaled:
    """e^(k q dy) - e^(-k q dy) in scaled form."""
    t = k * q_last * dy
    return Scaled(-math.expm1(-2.0 * t), t)


DEFAULT_VERIFY_K = (0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0)
DEFAULT_VERIFY_LAM = (0.5, 2.0, 8.0)


class _Check:
    """Tracks the worst margin seen; pass means the margin stayed >= 0."""

    def __init__(self, name: str):
        self.name = name
        self.worst = math.inf
        self.location = ""

    def see(self, margin: float, location: str):
        if margin < self.worst:
            self.worst = margin
            self.location = location

    def as_dict(self, threshold: float = 0.0) -> dict:
        finite = math.isfinite(self.worst)
        return {
            "name": self.name,
            "pass": bool(finite and self.worst >= threshold),
            "worst_value": self.worst if finite else None,
            "location": self.location,
        }


def verify_report(
    r1: PiecewiseFunction,
    r2: PiecewiseFunction,
    partition_pieces: int = 4,
    k_grid=None,
    k_values=DEFAULT_VERIFY_K,
    lam_values=DEFAULT_VERIFY_LAM,
    quadrature_points: int = 1024,
    residual_tol: float = 1e-6,
    defect_tol: float = 1e-8,
    threads: int = 1,
) -> dict:
    """Run the full invariant battery on a pair of reciprocal profiles.

    Returns a JSON-ready report: one entry per invariant with the worst
    margin (negative margin = violation) and where it occurred, plus the
    moment-matrix certificate on an equal partition.
    """
    lower = _Check("solution_lower_bound")
    gradient = _Check("gradient_nonnegative")
    mono_x = _Check("monotone_in_position")
    mono_k = _Check("monotone_in_k")
    volterra = _Check("volterra_residual")
    dominance = _Check("coefficient_dominance")
    sum_bound = _Check("coefficient_sum_bound")
    chain = _Check("pre_discontinuity_bound_chain")
    growth = _Check("growth_lower_bound")
    defect = _Check("identity_defect")

    for label, r in (("q1", r1), ("q2", r2)):
        x0 = last_discontinuity(r)
        q_last = math.sqrt(float(r.values[-1]))
        y = 0.5 * (x0 + 1.0)
        prev_logs = None
        for k in k_values:
            sol = solve_flux(r, k)
            logs = np.array([sol.log_psi(j) for j in range(sol.nodes.size)])
            mants = sol.node_mantissa
            here = f"{label}, k={k:g}"
            lower.see(float(logs.min()), f"{here}, min over nodes")
            gradient.see(float(mants[:, 1].min()), f"{here}, min over nodes")
            mono_x.see(float(np.diff(logs).min()) if logs.size > 1 else 0.0, here)
            if prev_logs is not None:
                mono_k.see(float((logs - prev_logs).min()), here)
            prev_logs = logs
            res = flux_integral_residual(r, k, quadrature_points)
            volterra.see(residual_tol - res, f"{here}, residual={res:.3e}")

            coeffs = exponential_coefficients(sol, x0, q_last)
            a_m, b_m = coeffs.a_coef.mantissa, coeffs.b_coef.mantissa
            dominance.see((a_m - abs(b_m)) / a_m, here)
            idx0 = int(np.argmin(np.abs(sol.nodes - x0)))
            psi0_m = float(sol.node_mantissa[idx0, 0])
            sum_bound.see((2.0 * a_m - psi0_m) / a_m, here)
            log_psi0 = sol.log_psi(idx0)
            log_2a = math.log(2.0 * a_m) + coeffs.a_coef.exponent
            for j in range(idx0 + 1):
                chain.see(float(log_psi0 - logs[j]), f"{here}, x={sol.nodes[j]:g}")
                chain.see(float(log_2a - logs[j]), f"{here}, x={sol.nodes[j]:g}")
            ratio = growth_ratio(r, y, k)
            bound = growth_lower_bound(q_last, k, y - x0)
            growth.see(float(ratio.log_abs - bound.log_abs), f"{here}, y={y:g}")

    a1 = ConductivityProfile(r1.breakpoints, 1.0 / r1.values, c0=0.0 + 1e-12, c1=1e12)
    a2 = ConductivityProfile(r2.breakpoints, 1.0 / r2.values, c0=0.0 + 1e-12, c1=1e12)
    for lam in lam_values:
        d = orthogonality_identity_defect(a1, a2, lam)
        defect.see(defect_tol - d, f"lam={lam:g}, defect={d:.3e}")

    partition = np.linspace(0.0, 1.0, partition_pieces + 1)
    if k_grid is None:
        k_grid = default_k_grid(partition_pieces)
    certificate = moment_matrix(r1, r2, k_grid, partition, threads=threads)

    return {
        "invariants": [
            c.as_dict()
            for c in (
                lower,
                gradient,
                mono_x,
                mono_k,
                volterra,
                dominance,
                sum_bound,
                chain,
                growth,
                defect,
            )
        ],
        "moment_certificate": {
            "min_sv": certificate.min_singular_value_scaled,
            "cond": certificate.condition_number,
            "null_norm": certificate.null_vector_norm(),
            "k_grid": [float(k) for k in certificate.k_grid],
            "partition": [float(x) for x in certificate.partition],
        },
    }
