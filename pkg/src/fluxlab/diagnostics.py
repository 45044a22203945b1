"""Theorem-checking layer for recorded runs.

Everything here is a pure function of a reduced history: time series of
sphere fluxes, ball energies, and ball dissipation on a fixed radius
ladder.  The checks compare those series against the analytic flux and
dissipation bounds, measure how sparse the set of energy-gaining radii
is, accumulate occupancy statistics near a reference state, and count
kinks for the coarsening scenarios.

Limsup statements are operationalized as finite-horizon inequalities:
the asymptotic constant is multiplied by (1 + asymptotic_slack) and the
check only fires once the horizon passes ASYMPTOTIC_T_MIN.  Sharp
finite-time bounds carry no slack.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
import scipy.integrate

from .grids import ScalarField, ball_integral, sphere_flux
from .models import ModelState, energy_triple, model_step
from .specfun import h_n, h_tilde, omega_n
from .vorticity import CylinderHistory, window_dissipation_check

# Dead band for declaring a bound satisfied: passed iff margin >= -REPORT_TOL.
REPORT_TOL = 1.0e-6
# Finite-horizon stand-in for limsup bounds: constant scaled by (1 + slack),
# checked only for horizons past ASYMPTOTIC_T_MIN.
ASYMPTOTIC_SLACK = 0.5
ASYMPTOTIC_T_MIN = 10.0
# Energy-difference dead band (relative to the initial ball energies) for
# membership in the energy-gain set; absorbs round-off at exact equality.
JT_DEAD_BAND = 1.0e-9
# The localized topology: distances to the reference state are measured
# over a fixed ball around the origin.
DEFAULT_OBSERVATION_RADIUS = 20.0

BOUND_KINDS = frozenset({
    "F1bd", "FNbd", "dissip0", "dissip1", "dissip2", "dissip3", "dissip4",
    "cor43_gamma", "cor43_log", "omconv1", "timeN",
})


# ---------------------------------------------------------------------------
# Recorded histories

@dataclass(frozen=True)
class SampledHistory:
    """Ball reductions of one trajectory on a fixed radius ladder.

    flux, ball_energy, and ball_dissipation are (n_times, n_radii); e_sup
    and b_sup are the spatial sups of the energy density and of b(e) at
    each recorded time.  Spacing and step are carried along so tolerance
    formulas downstream can see the discretization.
    """

    n_dim: int
    radii: tuple
    times: np.ndarray
    flux: np.ndarray
    ball_energy: np.ndarray
    ball_dissipation: np.ndarray
    e_sup: np.ndarray
    b_sup: np.ndarray
    spacing: tuple = ()
    dt: float = 0.0

    def __post_init__(self) -> None:
        if self.n_dim < 1:
            raise ValueError("dimension must be at least 1")
        radii = tuple(float(r) for r in self.radii)
        if not radii or any(r <= 0 for r in radii):
            raise ValueError("radius ladder must be positive")
        if list(radii) != sorted(set(radii)):
            raise ValueError("radius ladder must be strictly increasing")
        object.__setattr__(self, "radii", radii)
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or times.size == 0 or times[0] != 0.0:
            raise ValueError("times must be a 1D series starting at 0")
        if times.size > 1 and np.min(np.diff(times)) <= 0:
            raise ValueError("times must be strictly increasing")
        object.__setattr__(self, "times", times)
        shape = (times.size, len(radii))
        for name in ("flux", "ball_energy", "ball_dissipation"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != shape:
                raise ValueError(f"{name} must have shape {shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")
            object.__setattr__(self, name, arr)
        for name in ("e_sup", "b_sup"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (times.size,):
                raise ValueError(f"{name} must have one entry per time")
            if np.min(arr) < 0:
                raise ValueError(f"{name} must be nonnegative")
            object.__setattr__(self, name, arr)
        if np.min(self.ball_dissipation) < 0:
            raise ValueError("ball dissipation must be nonnegative")

    @property
    def e0(self) -> float:
        return float(self.e_sup[0])

    @property
    def beta(self) -> float:
        return float(np.max(self.b_sup))

    @property
    def final_time(self) -> float:
        return float(self.times[-1])


def record_model_run(state: ModelState, dt: float, n_steps: int,
                     radii, record_every: int = 1,
                     on_record: Callable | None = None,
                     ) -> tuple[ModelState, SampledHistory]:
    """Advance a model and reduce snapshots onto the radius ladder.

    Snapshots are taken every record_every steps plus the final step, at
    cost one energy triple and one ball reduction per ladder radius.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if n_steps < 0:
        raise ValueError("n_steps must be nonnegative")
    if record_every < 1:
        raise ValueError("record_every must be at least 1")
    radii = tuple(float(r) for r in radii)
    times: list[float] = []
    rows: dict[str, list] = {"flux": [], "e": [], "d": []}
    sups: dict[str, list] = {"e": [], "b": []}

    def record(s: ModelState) -> None:
        triple = energy_triple(s, dt)
        times.append(s.time)
        rows["flux"].append([sphere_flux(triple.f, r) for r in radii])
        rows["e"].append([ball_integral(triple.e, r) for r in radii])
        rows["d"].append([ball_integral(triple.d, r) for r in radii])
        sups["e"].append(float(np.max(triple.e.values)))
        sups["b"].append(float(np.max(triple.b_values)))
        if on_record is not None:
            on_record(s)

    record(state)
    for step in range(1, n_steps + 1):
        state = model_step(state, dt)
        if step % record_every == 0 or step == n_steps:
            record(state)
    history = SampledHistory(
        n_dim=state.domain.n_dim, radii=radii,
        times=np.asarray(times) - times[0],
        flux=np.asarray(rows["flux"]),
        ball_energy=np.asarray(rows["e"]),
        ball_dissipation=np.asarray(rows["d"]),
        e_sup=np.asarray(sups["e"]), b_sup=np.asarray(sups["b"]),
        spacing=state.domain.spacing, dt=dt)
    return state, history


def _ladder_index(history: SampledHistory, radius: float) -> int:
    for i, r in enumerate(history.radii):
        if abs(r - radius) <= 1.0e-9 * max(1.0, abs(radius)):
            return i
    raise ValueError(
        f"radius {radius} is not on the recorded ladder {history.radii}")


def _time_integral(times: np.ndarray, values: np.ndarray,
                   horizon: float) -> float:
    """Trapezoid integral of the sampled series over [0, horizon]."""
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    if horizon > times[-1] * (1.0 + 1.0e-12):
        raise ValueError(
            f"horizon {horizon} exceeds the recorded span {times[-1]}")
    horizon = min(horizon, float(times[-1]))
    cut = int(np.searchsorted(times, horizon))
    t = np.concatenate([times[:cut], [horizon]])
    v = np.concatenate([values[:cut], [np.interp(horizon, times, values)]])
    return float(np.trapezoid(v, t))


def integrated_flux(history: SampledHistory, radius: float,
                    horizon: float) -> float:
    """Time-integrated sphere flux through the ladder radius up to horizon."""
    i = _ladder_index(history, radius)
    return _time_integral(history.times, history.flux[:, i], horizon)


def dissipation_integral(history: SampledHistory, radius: float,
                         horizon: float) -> float:
    """Time-integrated ball dissipation at the ladder radius up to horizon."""
    i = _ladder_index(history, radius)
    return _time_integral(history.times, history.ball_dissipation[:, i],
                          horizon)


# ---------------------------------------------------------------------------
# Flux series and balance

@dataclass(frozen=True)
class FluxSeries:
    """Integrated fluxes F(R, T) on the ladder, with the run's budget caps.

    F has one row per radius and one column per time; the first column is
    identically zero since no flux has accumulated at T = 0.
    """

    radii: tuple
    times: np.ndarray
    F: np.ndarray
    E0: np.ndarray
    e0: float
    beta: float

    def __post_init__(self) -> None:
        radii = tuple(float(r) for r in self.radii)
        if not radii or any(r <= 0 for r in radii):
            raise ValueError("radii must be positive")
        if list(radii) != sorted(set(radii)):
            raise ValueError("radii must be strictly increasing")
        object.__setattr__(self, "radii", radii)
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or times.size == 0 or times[0] != 0.0:
            raise ValueError("times must start at 0")
        if times.size > 1 and np.min(np.diff(times)) <= 0:
            raise ValueError("times must be strictly increasing")
        object.__setattr__(self, "times", times)
        F = np.asarray(self.F, dtype=float)
        if F.shape != (len(radii), times.size):
            raise ValueError("F must be radii-by-times")
        if not np.all(np.isfinite(F)):
            raise ValueError("F contains non-finite values")
        if np.max(np.abs(F[:, 0])) != 0.0:
            raise ValueError("F at T = 0 must vanish")
        object.__setattr__(self, "F", F)
        E0 = np.asarray(self.E0, dtype=float)
        if E0.shape != (len(radii),) or np.min(E0) < 0:
            raise ValueError("E0 must hold one nonnegative energy per radius")
        object.__setattr__(self, "E0", E0)
        if self.e0 < 0 or self.beta < 0:
            raise ValueError("budget caps must be nonnegative")


def flux_series(history: SampledHistory) -> FluxSeries:
    """Cumulative time integrals of the recorded sphere fluxes."""
    F = scipy.integrate.cumulative_trapezoid(
        history.flux, history.times, axis=0, initial=0.0).T
    return FluxSeries(history.radii, history.times, F,
                      history.ball_energy[0], history.e0, history.beta)


def dissipation_series(history: SampledHistory) -> np.ndarray:
    """Cumulative dissipation D(R, T), shaped like FluxSeries.F."""
    return scipy.integrate.cumulative_trapezoid(
        history.ball_dissipation, history.times, axis=0, initial=0.0).T


def balance_residuals(history: SampledHistory) -> np.ndarray:
    """|F - (E(T) - E(0)) - D| per (radius, time) sample.

    The residual is pure discretization: trapezoid time quadrature plus
    the scheme's own balance defect.  Tolerances are the caller's
    business since they depend on the scenario's dx and dt.
    """
    F = flux_series(history).F
    D = dissipation_series(history)
    delta_e = (history.ball_energy - history.ball_energy[0]).T
    return np.abs(F - delta_e - D)


# ---------------------------------------------------------------------------
# Analytic bounds

def point_flux_bound(horizon: float, e0: float, beta: float) -> float:
    """Single-point bound sqrt(beta T e0) for the 1D integrated flux."""
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    if e0 < 0 or beta < 0:
        raise ValueError("budget caps must be nonnegative")
    return math.sqrt(beta * horizon * e0)


def flux_bound(n_dim: int, radius: float, horizon: float,
               e0: float, beta: float) -> float:
    """Upper bound on F(R, T): omega_N R^{N-1} sqrt(beta T e0) h_N(...).

    The degenerate caps are handled by their limits: beta = 0 kills the
    bound entirely, while e0 = 0 leaves the finite remainder
    (N-2) beta T omega_N R^{N-2} in dimensions three and higher.
    """
    if radius <= 0 or horizon <= 0:
        raise ValueError("radius and horizon must be positive")
    if e0 < 0 or beta < 0:
        raise ValueError("budget caps must be nonnegative")
    area = omega_n(n_dim).omega * radius ** (n_dim - 1)
    if beta == 0.0:
        return 0.0
    if e0 == 0.0:
        if n_dim <= 2:
            return 0.0
        return area * (n_dim - 2) * beta * horizon / radius
    r = radius * math.sqrt(e0 / (beta * horizon))
    return area * math.sqrt(beta * horizon * e0) * h_n(n_dim, r)


def _self_similar_rhs(n_dim: int, r0: float, e0: float, beta: float) -> float:
    """e0 (h_tilde(R0 sqrt(e0/beta)) + 1) with the degenerate caps as limits."""
    if beta == 0.0:
        return e0
    if e0 == 0.0:
        if n_dim <= 2:
            return 0.0
        return n_dim * (n_dim - 2) * beta / (r0 * r0)
    return e0 * (h_tilde(n_dim, r0 * math.sqrt(e0 / beta)) + 1.0)


# ---------------------------------------------------------------------------
# Bound reports

@dataclass(frozen=True)
class BoundReport:
    """One checked inequality: lhs <= rhs up to the report dead band."""

    kind: str
    lhs: float
    rhs: float
    margin: float
    passed: bool
    context: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in BOUND_KINDS:
            raise ValueError(f"unknown bound kind {self.kind!r}")
        if not (math.isfinite(self.lhs) and math.isfinite(self.rhs)):
            raise ValueError("bound sides must be finite")
        if abs(self.margin - (self.rhs - self.lhs)) > 1.0e-9 * max(
                1.0, abs(self.rhs), abs(self.lhs)):
            raise ValueError("margin must equal rhs - lhs")


def _report(kind: str, lhs: float, rhs: float, report_tol: float,
            **context) -> BoundReport:
    margin = rhs - lhs
    context["report_tol"] = report_tol
    return BoundReport(kind, float(lhs), float(rhs), float(margin),
                       bool(margin >= -report_tol), context)


def check_flux_bounds(series: FluxSeries, n_dim: int, *,
                      report_tol: float = REPORT_TOL) -> list[BoundReport]:
    """One report per (R, T > 0) sample against the integrated-flux bound."""
    kind = "F1bd" if n_dim == 1 else "FNbd"
    out = []
    for j, t in enumerate(series.times):
        if t <= 0:
            continue
        for i, r in enumerate(series.radii):
            rhs = flux_bound(n_dim, r, float(t), series.e0, series.beta)
            out.append(_report(kind, series.F[i, j], rhs, report_tol,
                               n_dim=n_dim, radius=r, horizon=float(t)))
    return out


def check_dissipation_bounds(series: FluxSeries, dissipation: np.ndarray,
                             n_dim: int, *, gamma: float = 0.25,
                             report_tol: float = REPORT_TOL,
                             asymptotic_slack: float = ASYMPTOTIC_SLACK,
                             ) -> list[BoundReport]:
    """Reports for the dissipation-bound family on every ladder sample.

    The sharp finite-time bounds (dissip0 and the self-similar dissip4)
    are emitted at every positive time.  The limsup-style bounds carry
    the (1 + asymptotic_slack) factor, fire only for horizons past
    ASYMPTOTIC_T_MIN, and are tagged asymptotic in their context.  The
    moving-radius variants interpolate the dissipation linearly on the
    ladder and skip horizons whose radius leaves it.
    """
    D = np.asarray(dissipation, dtype=float)
    if D.shape != series.F.shape:
        raise ValueError("dissipation matrix must match the flux series")
    if np.min(D) < -1.0e-12:
        raise ValueError("dissipation must be nonnegative")
    if not 0.0 <= gamma < 0.5:
        raise ValueError(f"gamma must lie in [0, 1/2), got {gamma}")
    e0, beta = series.e0, series.beta
    omega = omega_n(n_dim).omega
    up = 1.0 + asymptotic_slack
    radii = np.asarray(series.radii)
    out = []
    for j, t in enumerate(series.times):
        t = float(t)
        if t <= 0:
            continue
        asymptotic = t >= ASYMPTOTIC_T_MIN
        for i, r in enumerate(series.radii):
            d_rt = float(D[i, j])
            ctx = dict(n_dim=n_dim, radius=r, horizon=t, mass=d_rt)
            rhs0 = flux_bound(n_dim, r, t, e0, beta) \
                + omega / n_dim * r ** n_dim * e0
            out.append(_report("dissip0", d_rt, rhs0, report_tol, **ctx))
            r0 = r / math.sqrt(t)
            out.append(_report(
                "dissip4", n_dim * d_rt / (omega * r ** n_dim),
                _self_similar_rhs(n_dim, r0, e0, beta), report_tol,
                r0=r0, **ctx))
            if not asymptotic:
                continue
            actx = dict(asymptotic=True, slack=asymptotic_slack, **ctx)
            if n_dim == 1:
                out.append(_report(
                    "dissip1", d_rt / math.sqrt(t),
                    2.0 * math.sqrt(beta * e0) * up, report_tol, **actx))
            elif n_dim == 2:
                out.append(_report(
                    "dissip2", math.log(t) / t * d_rt,
                    4.0 * math.pi * beta * up, report_tol, **actx))
            else:
                out.append(_report(
                    "dissip3", d_rt / t,
                    beta * (n_dim - 2) * omega * r ** (n_dim - 2) * up,
                    report_tol, **actx))
        if n_dim != 2 or not asymptotic:
            continue
        # Moving radii R(T) = R0 T^gamma and R0 sqrt(T)/log T.
        for r0 in series.radii:
            for kind, moving, rhs in (
                ("cor43_gamma", r0 * t ** gamma,
                 4.0 * math.pi * beta / (1.0 - 2.0 * gamma) * up),
                ("cor43_log", r0 * math.sqrt(t) / math.log(t),
                 2.0 * math.pi * beta * up),
            ):
                if not radii[0] <= moving <= radii[-1]:
                    continue
                d_moving = float(np.interp(moving, radii, D[:, j]))
                scale = math.log(t) if kind == "cor43_gamma" \
                    else math.log(math.log(t))
                out.append(_report(
                    kind, scale / t * d_moving, rhs, report_tol,
                    n_dim=n_dim, r0=r0, radius=moving, horizon=t,
                    mass=d_moving, gamma=gamma, asymptotic=True,
                    slack=asymptotic_slack))
    return out


def vorticity_bound_reports(history: CylinderHistory, *,
                            report_tol: float = REPORT_TOL,
                            ) -> list[BoundReport]:
    """Window dissipation rows of a cylinder run in BoundReport form."""
    out = []
    for row in window_dissipation_check(history).rows:
        out.append(_report("omconv1", row.lhs, row.rhs, report_tol,
                           n_dim=2, radius=row.radius, horizon=row.time))
    return out


# ---------------------------------------------------------------------------
# Sparsity of energy-gain radii

@dataclass(frozen=True)
class JTRecord:
    """Radii whose ball energy did not decrease, and how sparse they are."""

    horizon: float
    radii: tuple
    in_jt: tuple
    sparsity_integral: float

    def __post_init__(self) -> None:
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if len(self.in_jt) != len(self.radii):
            raise ValueError("need one membership flag per radius")
        if self.sparsity_integral < 0:
            raise ValueError("sparsity integral must be nonnegative")


def jt_sparsity(history: SampledHistory, horizon: float, *,
                dead_band: float | None = None) -> JTRecord:
    """Mark energy-gaining radii and integrate 1/r^{N-1} over them.

    Membership uses E(R, T) - E(R, 0) >= -dead_band so that exact
    equality (equilibria) lands inside the set instead of flickering at
    round-off.  The integral runs over the sampled ladder restricted to
    [1, R_max] by trapezoid on the membership indicator.
    """
    j = int(np.argmin(np.abs(history.times - horizon)))
    if abs(history.times[j] - horizon) > 1.0e-9 * max(1.0, horizon):
        raise ValueError(f"horizon {horizon} is not a recorded time")
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    if dead_band is None:
        dead_band = JT_DEAD_BAND * max(1.0, float(np.max(
            history.ball_energy[0], initial=0.0)))
    delta = history.ball_energy[j] - history.ball_energy[0]
    in_jt = delta >= -dead_band
    radii = np.asarray(history.radii)
    sel = radii >= 1.0
    if np.count_nonzero(sel) >= 2:
        r = radii[sel]
        integrand = in_jt[sel].astype(float) / r ** (history.n_dim - 1)
        integral = float(np.trapezoid(integrand, r))
    else:
        integral = 0.0
    return JTRecord(float(history.times[j]), history.radii,
                    tuple(bool(b) for b in in_jt), integral)


# ---------------------------------------------------------------------------
# Occupancy near a reference state

@dataclass(frozen=True)
class OccupancyRecord:
    """Time spent within a metric radius of the reference, and its weight."""

    horizon: float
    metric: str
    radius: float
    observation_radius: float
    occupied_time: float
    weighted: float

    def __post_init__(self) -> None:
        if self.occupied_time < 0:
            raise ValueError("occupied time must be nonnegative")
        if self.occupied_time > self.horizon * (1.0 + 1.0e-12):
            raise ValueError("occupied time cannot exceed the horizon")


def _time_weights(times: np.ndarray, horizon: float) -> np.ndarray:
    """Lebesgue weight of each sample inside [0, horizon]."""
    mids = 0.5 * (times[1:] + times[:-1])
    lo = np.concatenate([[0.0], mids])
    hi = np.concatenate([mids, [times[-1]]])
    return np.clip(hi, 0.0, horizon) - np.clip(lo, 0.0, horizon)


def _observation_mask(state: ModelState, radius: float) -> np.ndarray:
    dom = state.domain
    deltas = []
    for ax in range(dom.n_dim):
        d = dom.coords(ax)
        if dom.axes[ax].boundary == "periodic":
            d = d - dom.axes[ax].length * np.round(d / dom.axes[ax].length)
        deltas.append(d)
    if dom.n_dim == 1:
        return np.abs(deltas[0]) <= radius
    D1, D2 = np.meshgrid(deltas[0], deltas[1], indexing="ij")
    return D1 * D1 + D2 * D2 <= radius * radius


def state_distance(state: ModelState, reference: ModelState,
                   metric: str = "sup_on_ball",
                   observation_radius: float = DEFAULT_OBSERVATION_RADIUS,
                   ) -> float:
    """Distance between two states of one model on the observation ball."""
    if state.model_id != reference.model_id:
        raise ValueError("states belong to different models")
    if state.domain != reference.domain:
        raise ValueError("states live on different domains")
    if metric == "sup_on_ball":
        mask = _observation_mask(state, observation_radius)
        if not np.any(mask):
            raise ValueError("observation ball contains no grid points")
        return max(
            float(np.max(np.abs(state.fields[k] - reference.fields[k])[mask]))
            for k in state.fields)
    if metric == "l2_on_ball":
        total = 0.0
        for k in state.fields:
            diff = state.fields[k] - reference.fields[k]
            total += ball_integral(
                ScalarField(state.domain, diff * diff), observation_radius)
        return math.sqrt(total)
    raise ValueError(f"unknown metric {metric!r}")


def occupancy(times, states, reference: ModelState, radius: float,
              metric: str = "sup_on_ball", horizon: float | None = None,
              observation_radius: float = DEFAULT_OBSERVATION_RADIUS,
              ) -> OccupancyRecord:
    """Measure the time a recorded trajectory spends near the reference.

    The neighborhood is the strict metric ball of the given radius; each
    snapshot owns the midpoint cell around its sample time.  The weight
    uses sqrt(T) on a line and log(T) on a plane, so a bounded weighted
    value is the finite-horizon shadow of the occupation-time bound.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size != len(states) or times.size == 0:
        raise ValueError("need matching nonempty times and states")
    if times.size > 1 and np.min(np.diff(times)) <= 0:
        raise ValueError("times must be strictly increasing")
    if radius <= 0:
        raise ValueError("metric radius must be positive")
    n_dim = reference.domain.n_dim
    if n_dim > 2:
        raise ValueError("occupancy weights are defined for 1D and 2D only")
    if horizon is None:
        horizon = float(times[-1])
    if horizon <= 0 or horizon > times[-1] * (1.0 + 1.0e-12):
        raise ValueError("horizon must lie inside the recorded span")
    dists = np.array([
        state_distance(s, reference, metric, observation_radius)
        for s in states])
    weights = _time_weights(times, horizon)
    occupied = float(np.sum(weights[dists < radius]))
    psi = math.sqrt(horizon) if n_dim == 1 else math.log(horizon)
    return OccupancyRecord(horizon, metric, radius, observation_radius,
                           occupied, psi / horizon * occupied)


def occupancy_trend(records) -> float:
    """Log-log growth rate of the weighted occupancy across horizons.

    Zero-weight records carry no trend information and are dropped; with
    fewer than two informative records the trend is flat by convention.
    """
    pts = [(r.horizon, r.weighted) for r in records if r.weighted > 0]
    if len(pts) < 2:
        return 0.0
    t, w = zip(*pts)
    return float(np.polyfit(np.log(t), np.log(w), 1)[0])


def occupancy_bound_report(records, *, report_tol: float = REPORT_TOL,
                           asymptotic_slack: float = ASYMPTOTIC_SLACK,
                           ) -> BoundReport:
    """Boundedness of the weighted occupancy, calibrated on early horizons.

    The cap is the largest weighted value within the first decade of
    horizons; later records must stay below it up to the asymptotic
    slack.  With no later records the check passes vacuously.
    """
    records = sorted(records, key=lambda r: r.horizon)
    if not records:
        raise ValueError("need at least one occupancy record")
    t_min = records[0].horizon
    early = [r.weighted for r in records if r.horizon <= 10.0 * t_min]
    late = [r.weighted for r in records if r.horizon > 10.0 * t_min]
    cap = max(early) * (1.0 + asymptotic_slack)
    lhs = max(late) if late else 0.0
    return _report("timeN", lhs, cap, report_tol,
                   n_dim=None, horizons=(records[0].horizon,
                                         records[-1].horizon),
                   asymptotic=True, slack=asymptotic_slack)


# ---------------------------------------------------------------------------
# Kink counting

class KinkCensus(NamedTuple):
    count: int
    positions: np.ndarray


def kink_census(state: ModelState, level: float = 0.0) -> KinkCensus:
    """Count transversal crossings of the level with a +-0.5 hysteresis band.

    A crossing is registered only when the profile moves from one side of
    the band to the other, so grid noise and overshoots near the level do
    not inflate the count.  Positions come from linear interpolation of
    the sign change inside each band-to-band transit.
    """
    if state.domain.n_dim != 1:
        raise ValueError("kink counting works on one-dimensional states")
    if state.model_id != "reaction_diffusion":
        raise ValueError("kink counting is defined for reaction_diffusion")
    x = state.domain.coords(0)
    dev = state.fields["u"] - level
    positions = []
    side = 0
    anchor = 0
    for i, v in enumerate(dev):
        if v >= 0.5:
            here = 1
        elif v <= -0.5:
            here = -1
        else:
            continue
        if side != 0 and here != side:
            for k in range(anchor, i):
                if dev[k] == 0.0 or (dev[k] > 0) != (dev[k + 1] > 0):
                    frac = dev[k] / (dev[k] - dev[k + 1])
                    positions.append(x[k] + frac * (x[k + 1] - x[k]))
                    break
        side = here
        anchor = i
    return KinkCensus(len(positions), np.asarray(positions))


def annihilation_count(counts) -> int:
    """Pairs lost across a series of censuses; each annihilation drops two."""
    counts = [int(c) for c in counts]
    if any(c < 0 for c in counts):
        raise ValueError("kink counts must be nonnegative")
    drop = sum(max(0, a - b) for a, b in zip(counts, counts[1:]))
    return drop // 2
