"""Time-domain simulation of the rod and numerical Laplace transforms.

The solver is a cell-centered finite volume scheme whose faces include every
conductivity breakpoint, so each cell sees a single material and interface
transmissibilities (series/harmonic resistances) are exact.  Time stepping is
Crank-Nicolson with backward-Euler half-step smoothing at t = 0 and after
each flux discontinuity; the left end is held at zero temperature and the
prescribed flux enters the balance of the last cell directly.

Measured output is the boundary temperature g(t) = u(1, t), reconstructed
from the last cell center through the half-cell resistance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .dataset import TransferDataset
from .exceptions import NumericalError, TailDominationError, ValidationError
from .laplace import transfer_function
from .piecewise import ConductivityProfile, format_float

# |last sample| below this fraction of the signal peak counts as decayed.
TAIL_TOL_REL = 1e-8
# Truncated-tail bound must stay below this fraction of the integral.
TAIL_BOUND_REL = 1e-3


@dataclass(frozen=True)
class FluxSpec:
    """Prescribed boundary flux f(t) at x = 1.

    kinds: "constant" (f = amplitude for t >= 0), "pulse" (amplitude on
    [t_on, t_off), sampled at half height exactly at interior jumps so
    trapezoidal transforms stay second order), "custom" (samples on the
    simulation grid).
    """

    kind: str = "pulse"
    amplitude: float = 1.0
    t_on: float = 0.0
    t_off: float = 1.0
    custom_samples: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("constant", "pulse", "custom"):
            raise ValidationError(f"unknown flux kind {self.kind!r}")
        if self.kind == "pulse":
            if not 0.0 <= self.t_on < self.t_off:
                raise ValidationError("pulse needs 0 <= t_on < t_off")
            if self.amplitude == 0.0:
                raise ValidationError("flux must not vanish identically")
        if self.kind == "constant" and self.amplitude == 0.0:
            raise ValidationError("flux must not vanish identically")
        if self.kind == "custom":
            samples = np.asarray(self.custom_samples, dtype=float)
            if samples.ndim != 1 or samples.size < 2:
                raise ValidationError("custom flux needs a 1-D sample array")
            if not np.any(samples != 0.0):
                raise ValidationError("flux must not vanish identically")
            samples = samples.copy()
            samples.flags.writeable = False
            object.__setattr__(self, "custom_samples", samples)

    def sample(self, times: np.ndarray) -> np.ndarray:
        times = np.asarray(times, dtype=float)
        if self.kind == "constant":
            return np.full_like(times, self.amplitude)
        if self.kind == "custom":
            if self.custom_samples.size != times.size:
                raise ValidationError(
                    "custom flux sample count must match the time grid"
                )
            return self.custom_samples.copy()
        out = np.where(
            (times > self.t_on) & (times < self.t_off), self.amplitude, 0.0
        )
        for jump in (self.t_on, self.t_off):
            at = np.isclose(times, jump, rtol=0.0, atol=1e-12)
            out = np.where(at, 0.5 * self.amplitude, out)
        if self.t_on == 0.0:
            out = np.where(
                np.isclose(times, 0.0, rtol=0.0, atol=1e-12), self.amplitude, out
            )
        return out

    def value_at(self, t: float) -> float:
        if self.kind == "constant":
            return self.amplitude
        if self.kind == "pulse":
            return float(self.sample(np.array([t]))[0])
        raise ValidationError("custom flux has no off-grid values")

    def jump_times(self) -> list[float]:
        if self.kind == "pulse":
            return [t for t in (self.t_on, self.t_off) if t > 0.0]
        return []


@dataclass(frozen=True)
class TimeSeries:
    """Sampled flux/measurement pair on the uniform grid t_m = m * dt."""

    dt: float
    f: np.ndarray
    g: np.ndarray

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValidationError("dt must be positive")
        f = np.asarray(self.f, dtype=float)
        g = np.asarray(self.g, dtype=float)
        if f.shape != g.shape or f.ndim != 1 or f.size < 2:
            raise ValidationError("f and g must be equal-length 1-D arrays")
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(g))):
            raise ValidationError("time series contains non-finite values")
        if g[0] != 0.0:
            raise ValidationError("g(0) must be 0 (zero initial temperature)")
        for name, arr in (("f", f), ("g", g)):
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.f.size)

    def to_csv(self, path, metadata: dict | None = None) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for key, val in (metadata or {}).items():
                fh.write(f"# {key}: {val}\n")
            fh.write("t,f,g\n")
            for t, fv, gv in zip(self.times, self.f, self.g):
                fh.write(
                    f"{format_float(t)},{format_float(fv)},{format_float(gv)}\n"
                )

    @classmethod
    def from_csv(cls, path) -> "TimeSeries":
        rows = []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#") or line.startswith("t,"):
                    continue
                rows.append([float(p) for p in line.split(",")])
        if len(rows) < 2:
            raise ValidationError("time series file needs at least two samples")
        arr = np.array(rows)
        dt = float(arr[1, 0] - arr[0, 0])
        return cls(dt, arr[:, 1], arr[:, 2])


def _build_grid(a: ConductivityProfile, nx: int):
    """Faces aligned to breakpoints, roughly nx cells total."""
    faces = [0.0]
    cell_a = []
    for j in range(a.n_pieces):
        lo, hi = a.breakpoints[j], a.breakpoints[j + 1]
        cells = max(1, int(round(nx * (hi - lo))))
        sub = np.linspace(lo, hi, cells + 1)[1:]
        faces.extend(sub.tolist())
        cell_a.extend([a.values[j]] * cells)
    return np.array(faces), np.array(cell_a)


def simulate(
    a: ConductivityProfile,
    flux: FluxSpec,
    nx: int = 200,
    dt: float = 5e-4,
    T: float = 12.0,
    return_state: bool = False,
):
    """March the rod from zero temperature and record g(t) = u(1, t).

    With ``return_state`` the full cell-center history and the centers are
    returned as well (for positivity/energy diagnostics).
    """
    if nx < 2 * a.n_pieces:
        raise ValidationError("nx must be at least twice the number of pieces")
    if dt <= 0.0 or T <= 0.0:
        raise ValidationError("dt and T must be positive")
    steps = int(round(T / dt))
    if steps < 2:
        raise ValidationError("T must cover at least two time steps")

    faces, cell_a = _build_grid(a, nx)
    dx = np.diff(faces)
    n = dx.size
    times = dt * np.arange(steps + 1)
    f_samples = flux.sample(times)

    # Interface transmissibilities: series resistance of adjacent half cells;
    # the left boundary couples the first cell to the fixed zero temperature.
    g_iface = 1.0 / (dx[:-1] / (2.0 * cell_a[:-1]) + dx[1:] / (2.0 * cell_a[1:]))
    g_left = 2.0 * cell_a[0] / dx[0]

    diag = np.zeros(n)
    diag[0] = g_left + (g_iface[0] if n > 1 else 0.0)
    if n > 1:
        diag[1:-1] = g_iface[:-1] + g_iface[1:]
        diag[-1] = g_iface[-1]
    off = -g_iface

    def banded(mass_over_tau: np.ndarray, stiff_weight: float) -> np.ndarray:
        ab = np.zeros((3, n))
        ab[0, 1:] = stiff_weight * off
        ab[1] = mass_over_tau + stiff_weight * diag
        ab[2, :-1] = stiff_weight * off
        return ab

    def apply_stiff(u: np.ndarray) -> np.ndarray:
        out = diag * u
        if n > 1:
            out[:-1] += off * u[1:]
            out[1:] += off * u[:-1]
        return out

    ab_cn = banded(dx / dt, 0.5)
    ab_be_half = banded(dx / (0.5 * dt), 1.0)

    def f_at(t: float) -> float:
        if flux.kind == "custom":
            return float(np.interp(t, times, f_samples))
        return flux.value_at(t)

    smoothing_starts = {0.0}
    for jump in flux.jump_times():
        if jump < T:
            m = jump / dt
            if abs(m - round(m)) < 1e-9:
                smoothing_starts.add(round(m) * dt)

    u = np.zeros(n)
    g_out = np.zeros(steps + 1)
    states = np.zeros((steps + 1, n)) if return_state else None
    half_dx_resistance = dx[-1] / (2.0 * cell_a[-1])

    for m in range(steps):
        t = m * dt
        if any(abs(t - s) < 1e-9 * max(dt, 1.0) for s in smoothing_starts):
            for half in (1, 2):
                rhs = (dx / (0.5 * dt)) * u
                rhs[-1] += f_at(t + half * 0.5 * dt)
                u = solve_banded((1, 1), ab_be_half, rhs)
        else:
            rhs = (dx / dt) * u - 0.5 * apply_stiff(u)
            rhs[-1] += 0.5 * (f_samples[m] + f_samples[m + 1])
            u = solve_banded((1, 1), ab_cn, rhs)
        if not np.all(np.isfinite(u)):
            raise NumericalError(f"non-finite state at t={t + dt:.6g}")
        g_out[m + 1] = u[-1] + f_samples[m + 1] * half_dx_resistance
        if return_state:
            states[m + 1] = u

    series = TimeSeries(dt, f_samples, g_out)
    if return_state:
        centers = 0.5 * (faces[:-1] + faces[1:])
        return series, centers, dx, states
    return series


def _select_signal(series: TimeSeries, which: str) -> np.ndarray:
    if which == "f":
        return series.f
    if which == "g":
        return series.g
    raise ValidationError("which must be 'f' or 'g'")


def laplace_tail_bound(series: TimeSeries, which: str, lam: float) -> float:
    """Bound |integral beyond the last sample| assuming monotone decay."""
    sig = _select_signal(series, which)
    t_end = series.dt * (sig.size - 1)
    return abs(float(sig[-1])) * math.exp(-lam * t_end) / lam


def laplace_of_samples(series: TimeSeries, which: str, lam: float) -> float:
    """Trapezoidal transform integral of the sampled signal.

    Requires the signal to have decayed: if the truncated tail bound exceeds
    TAIL_BOUND_REL of the integral while the last sample is above
    TAIL_TOL_REL of the peak, a TailDominationError is raised.
    """
    if lam <= 0.0:
        raise ValidationError("lam must be positive")
    sig = _select_signal(series, which)
    peak = float(np.max(np.abs(sig)))
    if peak == 0.0:
        return 0.0
    integrand = np.exp(-lam * series.times) * sig
    integral = float(np.trapezoid(integrand, dx=series.dt))
    tail = laplace_tail_bound(series, which, lam)
    if abs(float(sig[-1])) > TAIL_TOL_REL * peak and tail > TAIL_BOUND_REL * abs(
        integral
    ):
        raise TailDominationError(
            f"signal {which!r} not decayed: tail bound {tail:.3g} vs "
            f"integral {integral:.3g} at lam={lam:.3g}"
        )
    return integral


def synthesize_dataset(
    a: ConductivityProfile,
    lam_grid,
    noise_rel: float = 0.0,
    seed: int = 0,
) -> TransferDataset:
    """Exact transfer samples with multiplicative Gaussian noise.

    Noise is drawn from numpy's PCG64 generator seeded explicitly, so outputs
    are reproducible across platforms.  sigma records noise_rel * H; for
    noise_rel = 0 the weights default to sigma = H (unit log-residual scale),
    keeping sigma positive as the dataset requires.
    """
    lam_grid = np.asarray(lam_grid, dtype=float)
    if lam_grid.size == 0 or np.any(lam_grid <= 0):
        raise ValidationError("lam grid must be nonempty and positive")
    if noise_rel < 0.0:
        raise ValidationError("noise_rel must be >= 0")
    order = np.argsort(lam_grid)
    lam_sorted = lam_grid[order]
    H = np.array([transfer_function(a, lam) for lam in lam_sorted])
    if noise_rel > 0.0:
        rng = np.random.Generator(np.random.PCG64(seed))
        xi = rng.standard_normal(lam_sorted.size)
        H_obs = H * (1.0 + noise_rel * xi)
        H_obs = np.maximum(H_obs, 1e-12 * H)
        sigma = noise_rel * H_obs
    else:
        H_obs = H
        sigma = H.copy()
    return TransferDataset(
        lam_sorted,
        H_obs,
        sigma,
        provenance={"kind": "synthetic", "seed": int(seed), "noise_rel": float(noise_rel)},
    )
