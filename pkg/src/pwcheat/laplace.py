"""Exact Laplace-domain solvers for the layered rod.

Two equivalent formulations are propagated interval by interval with
constant-coefficient closed forms (cosh/sinh transfer matrices):

* the flux form: ``-psi'' + k^2 r(x) psi = 0`` with ``psi(0)=1, psi'(0)=0``,
  where ``r = 1/a`` is the reciprocal conductivity and ``psi`` is the
  Laplace-transformed heat flux ``a u_x``; matching at interfaces is C^1.
* the temperature form: ``lam v - (a v')' = 0`` with ``v(0)=0`` and unit
  boundary flux ``a(0)v'(0)=1``; matching keeps ``v`` and the flux ``a v'``
  continuous.

Both grow like exp(k * sqrt(r) * x), so states are carried as mantissa pairs
with a shared log-scale exponent (see :mod:`pwcheat._scaled`); plain cosh
would overflow near k*sqrt(r)*dx ~ 710 while the verification sweeps need
k up to 1e4.

The transfer function H(lam) = v(1)/(a(1)v'(1)) is the ratio of boundary
temperature to boundary flux; it is the data of the reconstruction problem.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .exceptions import ValidationError
from .piecewise import ConductivityProfile, PiecewiseFunction


def _halved_exponentials(t: float):
    """Return (cosh(t)*e^-t, sinh(t)*e^-t) without forming large numbers."""
    em = math.exp(-2.0 * t)
    return 0.5 * (1.0 + em), 0.5 * (1.0 - em)


def _check_positive_pieces(r: PiecewiseFunction, what: str):
    if np.any(r.values <= 0.0):
        raise ValidationError(f"{what} must be strictly positive on every piece")


@dataclass(frozen=True)
class FluxSolution:
    """Flux-form solution at one spectral value k (lam = k^2).

    ``node_mantissa[j] = (psi, psi')`` at breakpoint j, true values being
    mantissa * exp(node_scale[j]).  ``coeff_mantissa[j] = (growing, decaying)``
    are the per-interval exponential coefficients relative to the interval's
    left endpoint, sharing that endpoint's scale.
    """

    k: float
    resistivity: PiecewiseFunction
    node_mantissa: np.ndarray
    node_scale: np.ndarray
    coeff_mantissa: np.ndarray

    @property
    def nodes(self) -> np.ndarray:
        return self.resistivity.breakpoints

    def psi(self, j: int) -> float:
        return float(self.node_mantissa[j, 0] * math.exp(self.node_scale[j]))

    def dpsi(self, j: int) -> float:
        return float(self.node_mantissa[j, 1] * math.exp(self.node_scale[j]))

    def log_psi(self, j: int) -> float:
        return float(math.log(self.node_mantissa[j, 0]) + self.node_scale[j])

    def _interval_of(self, x) -> np.ndarray:
        idx = np.searchsorted(self.nodes, x, side="right") - 1
        return np.clip(idx, 0, self.resistivity.n_pieces - 1)

    def log_psi_at(self, x):
        """log psi(x, k), vectorized, stable for arbitrarily large k."""
        xs = np.asarray(x, dtype=float)
        if np.any(xs < 0.0) or np.any(xs > 1.0):
            raise ValidationError("evaluation point outside [0, 1]")
        if self.k == 0.0:
            return np.zeros_like(xs) if xs.ndim else 0.0
        j = self._interval_of(xs)
        ks = self.k * np.sqrt(self.resistivity.values[j])
        t = ks * (xs - self.nodes[j])
        a = self.coeff_mantissa[j, 0]
        b = self.coeff_mantissa[j, 1]
        out = self.node_scale[j] + t + np.log(a) + np.log1p((b / a) * np.exp(-2.0 * t))
        return out if xs.ndim else float(out)

    def scaled_at(self, x: float):
        """(psi mantissa, psi' mantissa, scale) at an arbitrary point."""
        if not 0.0 <= x <= 1.0:
            raise ValidationError("evaluation point outside [0, 1]")
        if self.k == 0.0:
            return 1.0, 0.0, 0.0
        j = int(self._interval_of(x))
        ks = self.k * math.sqrt(self.resistivity.values[j])
        t = ks * (x - self.nodes[j])
        c, s = _halved_exponentials(t)
        mp, md = self.node_mantissa[j]
        return (
            float(mp * c + (md / ks) * s),
            float(mp * ks * s + md * c),
            float(self.node_scale[j] + t),
        )


def solve_flux(resistivity: PiecewiseFunction, k: float) -> FluxSolution:
    """Propagate the flux-form solution across all pieces.

    For k = 0 the exact solution is psi = 1, psi' = 0.  Node values satisfy
    psi >= 1 and psi' >= 0 by construction (all transfer entries are
    nonnegative), matching the comparison-principle bounds the verification
    module asserts.
    """
    k = float(k)
    if k < 0.0 or not math.isfinite(k):
        raise ValidationError("spectral parameter k must be finite and >= 0")
    _check_positive_pieces(resistivity, "reciprocal conductivity")

    n = resistivity.n_pieces
    node_m = np.empty((n + 1, 2))
    node_s = np.empty(n + 1)
    coeff_m = np.empty((n, 2))
    node_m[0] = (1.0, 0.0)
    node_s[0] = 0.0

    if k == 0.0:
        node_m[:, 0], node_m[:, 1] = 1.0, 0.0
        node_s[:] = 0.0
        coeff_m[:, :] = 0.5
        return FluxSolution(k, resistivity, node_m, node_s, coeff_m)

    mp, md, scale = 1.0, 0.0, 0.0
    breaks = resistivity.breakpoints
    vals = resistivity.values
    for j in range(n):
        ks = k * math.sqrt(vals[j])
        coeff_m[j, 0] = 0.5 * (mp + md / ks)
        coeff_m[j, 1] = 0.5 * (mp - md / ks)
        t = ks * (breaks[j + 1] - breaks[j])
        c, s = _halved_exponentials(t)
        mp, md = mp * c + (md / ks) * s, mp * ks * s + md * c
        scale += t
        # Renormalize so the psi mantissa stays exactly 1.
        scale += math.log(mp)
        md /= mp
        mp = 1.0
        node_m[j + 1] = (mp, md)
        node_s[j + 1] = scale
    return FluxSolution(k, resistivity, node_m, node_s, coeff_m)


@dataclass(frozen=True)
class TemperatureSolution:
    """Temperature-form solution at one lam > 0, scaled like FluxSolution.

    ``node_mantissa[j] = (v, a v')`` at breakpoint j.  The solution is
    normalized by its boundary flux at x = 0 (default 1); every ratio the
    package exposes is independent of that constant.
    """

    lam: float
    conductivity: ConductivityProfile
    node_mantissa: np.ndarray
    node_scale: np.ndarray

    @property
    def nodes(self) -> np.ndarray:
        return self.conductivity.breakpoints

    def value(self, j: int) -> float:
        return float(self.node_mantissa[j, 0] * math.exp(self.node_scale[j]))

    def flux(self, j: int) -> float:
        return float(self.node_mantissa[j, 1] * math.exp(self.node_scale[j]))

    def scaled_at(self, x: float):
        """(v mantissa, flux mantissa, scale) at an arbitrary point."""
        if not 0.0 <= x <= 1.0:
            raise ValidationError("evaluation point outside [0, 1]")
        idx = np.searchsorted(self.nodes, x, side="right") - 1
        j = int(np.clip(idx, 0, self.conductivity.n_pieces - 1))
        a = float(self.conductivity.values[j])
        mu = math.sqrt(self.lam / a)
        z = math.sqrt(self.lam * a)
        t = mu * (x - self.nodes[j])
        c, s = _halved_exponentials(t)
        mv, mf = self.node_mantissa[j]
        return (
            float(mv * c + (mf / z) * s),
            float(mv * z * s + mf * c),
            float(self.node_scale[j] + t),
        )


def solve_temperature(
    conductivity: ConductivityProfile, lam: float, initial_flux: float = 1.0
) -> TemperatureSolution:
    """Propagate (v, a v') with flux-continuous interface matching."""
    lam = float(lam)
    if lam <= 0.0 or not math.isfinite(lam):
        raise ValidationError("lam must be finite and > 0")
    if initial_flux <= 0.0:
        raise ValidationError("initial flux normalization must be positive")

    n = conductivity.n_pieces
    node_m = np.empty((n + 1, 2))
    node_s = np.empty(n + 1)
    mv, mf, scale = 0.0, float(initial_flux), 0.0
    node_m[0] = (mv, mf)
    node_s[0] = scale

    breaks = conductivity.breakpoints
    vals = conductivity.values
    for j in range(n):
        a = float(vals[j])
        mu = math.sqrt(lam / a)
        z = math.sqrt(lam * a)
        t = mu * (breaks[j + 1] - breaks[j])
        c, s = _halved_exponentials(t)
        mv, mf = mv * c + (mf / z) * s, mv * z * s + mf * c
        scale += t
        # Renormalize on the flux component, positive throughout.
        scale += math.log(mf)
        mv /= mf
        mf = 1.0
        node_m[j + 1] = (mv, mf)
        node_s[j + 1] = scale
    return TemperatureSolution(lam, conductivity, node_m, node_s)


def transfer_function(conductivity: ConductivityProfile, lam: float) -> float:
    """H(lam) = v(1)/(a(1) v'(1)): boundary temperature per unit boundary flux.

    Strictly positive, strictly decreasing in lam, with
    H(lam -> 0+) = integral of 1/a.  For constant conductivity,
    H = tanh(sqrt(lam/a)) / sqrt(lam*a).
    """
    sol = solve_temperature(conductivity, lam)
    mv, mf = sol.node_mantissa[-1]
    return float(mv / mf)


def transfer_curve(conductivity: ConductivityProfile, lams) -> np.ndarray:
    """Vectorized convenience wrapper around :func:`transfer_function`."""
    return np.array([transfer_function(conductivity, lam) for lam in np.asarray(lams, dtype=float)])


def constant_transfer(a_value: float, lam) -> np.ndarray | float:
    """Closed form tanh(sqrt(lam/a))/sqrt(lam*a) for a constant rod."""
    lam = np.asarray(lam, dtype=float)
    out = np.tanh(np.sqrt(lam / a_value)) / np.sqrt(lam * a_value)
    return float(out) if out.ndim == 0 else out


@lru_cache(maxsize=8)
def _gauss_rule(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


def _panel_nodes(lo: float, hi: float, n_points: int, order: int = 32):
    """Composite Gauss-Legendre nodes/weights on [lo, hi] using >= n_points."""
    panels = max(1, math.ceil(n_points / order))
    xg, wg = _gauss_rule(order)
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * xg[None, :]).ravel()
    weights = (half[:, None] * wg[None, :]).ravel()
    return nodes, weights


def flux_integral_residual(
    resistivity: PiecewiseFunction, k: float, quadrature_points: int = 256
) -> float:
    """Defect of the Volterra identity psi(x) = 1 + k^2 I(x) at the nodes.

    I(x) = integral_0^x (x-s) r(s) psi(s) ds, evaluated by piece-aligned
    composite Gauss-Legendre quadrature on the exact closed-form psi, all
    relative to psi(x) so the check stays finite for large k.  Returns the
    maximum relative defect over the breakpoints; pure quadrature error,
    vanishing as quadrature_points grows.
    """
    if quadrature_points < 16:
        raise ValidationError("quadrature_points must be >= 16")
    sol = solve_flux(resistivity, k)
    if k == 0.0:
        return 0.0

    breaks = resistivity.breakpoints
    vals = resistivity.values
    worst = 0.0
    for node in range(1, breaks.size):
        x = float(breaks[node])
        log_psi_x = sol.log_psi(node)
        integral = 0.0
        for j in range(node):
            lo, hi = float(breaks[j]), float(breaks[j + 1])
            share = max(16, math.ceil(quadrature_points * (hi - lo) / x))
            s_nodes, s_weights = _panel_nodes(lo, hi, share)
            rel = np.exp(sol.log_psi_at(s_nodes) - log_psi_x)
            integral += float(np.dot(s_weights, (x - s_nodes) * vals[j] * rel))
        defect = abs(1.0 - math.exp(-log_psi_x) - k * k * integral)
        worst = max(worst, defect)
    return worst
