"""Special functions for radial flux envelopes.

The envelope h_n(r) is the unique positive solution of the Riccati equation

    H'(r) + (n - 1) H(r) / r = H(r)^2 - 1

that stays finite and positive for all r > 0; it equals the modified Bessel
ratio K_{n/2}(r) / K_{n/2-1}(r).  This module evaluates h_n two independent
ways (Bessel quadrature and backward ODE integration), integrates the Riccati
equation forward to classify super- and sub-threshold data, and supplies the
Gamma function and unit-sphere areas used by the flux bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SurfaceConstant",
    "SpecFunTable",
    "RiccatiTrajectory",
    "gamma_fn",
    "omega_n",
    "bessel_k",
    "h_n",
    "h_tilde",
    "h_corridor_upper",
    "riccati_integrate",
    "h_n_via_backward_ode",
]

BLOWUP_THRESHOLD = 1.0e6
STEP_FLOOR = 1.0e-14
DEFAULT_RTOL = 1.0e-10
DEFAULT_ATOL = 1.0e-12
# Initial offsets below this fraction of h_n(r0) cannot be classified:
# round-off alone moves a finite-precision trajectory across the separatrix.
NEAR_SEPARATRIX_MARGIN = 1.0e-6


def gamma_fn(alpha: float) -> float:
    """Gamma(alpha) for alpha > 0."""
    if not alpha > 0:
        raise ValueError(f"gamma_fn requires alpha > 0, got {alpha}")
    return math.gamma(alpha)


@dataclass(frozen=True)
class SurfaceConstant:
    """Surface measure omega of the unit sphere in dimension n."""

    n: int
    omega: float


def omega_n(n: int) -> SurfaceConstant:
    """Unit-sphere area 2 pi^{n/2} / Gamma(n/2), with omega_1 = 2 by convention."""
    if n < 1:
        raise ValueError(f"omega_n requires n >= 1, got {n}")
    if n == 1:
        return SurfaceConstant(1, 2.0)
    return SurfaceConstant(n, 2.0 * math.pi ** (0.5 * n) / gamma_fn(0.5 * n))


# ---------------------------------------------------------------------------
# Modified Bessel K

_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gl_rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    if n not in _GL_CACHE:
        x, w = np.polynomial.legendre.leggauss(n)
        _GL_CACHE[n] = (x, w)
    return _GL_CACHE[n]


def _scaled_k_quad(nu: float, r: float) -> float:
    """exp(r) K_nu(r) by Gauss-Legendre panels on the defining integral.

    Integrates exp(-r (cosh t - 1)) cosh(nu t) over [0, T] where T is chosen
    so the discarded tail is below 1e-300 in absolute terms.  Panel count is
    doubled until two successive composite values agree to 1e-13 relative;
    the integrand is positive and analytic, so convergence is geometric.
    """
    t_hi = 1.0
    for _ in range(100):
        t_new = math.acosh(1.0 + (760.0 + nu * t_hi) / r)
        if abs(t_new - t_hi) < 1.0e-9 * (1.0 + t_hi):
            break
        t_hi = t_new

    nodes, weights = _gl_rule(24)
    prev = None
    panels = 8
    while panels <= 4096:
        edges = np.linspace(0.0, t_hi, panels + 1)
        mid = 0.5 * (edges[1:] + edges[:-1])
        half = 0.5 * (edges[1:] - edges[:-1])
        t = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
        w = (half[:, None] * weights[None, :]).ravel()
        vals = np.exp(-r * (np.cosh(t) - 1.0)) * np.cosh(nu * t)
        total = float(np.dot(w, vals))
        if prev is not None and abs(total - prev) <= 1.0e-13 * abs(total):
            return total
        prev = total
        panels *= 2
    raise ArithmeticError(
        f"Bessel quadrature did not converge for nu={nu}, r={r}"
    )


def _k_asym_tail(nu: float, r: float) -> float:
    """Large-r series sum for exp(r) K_nu(r) / sqrt(pi/(2r))."""
    mu = 4.0 * nu * nu
    term, acc = 1.0, 1.0
    for k in range(1, 4):
        term *= (mu - (2.0 * k - 1.0) ** 2) / (k * 8.0 * r)
        acc += term
    return acc


def _scaled_k(nu: float, r: float) -> float:
    """exp(r) K_nu(r) for nu >= 0, r > 0."""
    if r < 0.5 and nu > 0.0:
        # Small-r growth is ~ (Gamma(nu)/2) (2/r)^nu; refuse what a double
        # cannot hold rather than overflowing inside the quadrature.
        log_estimate = math.lgamma(nu) - math.log(2.0) + nu * math.log(2.0 / r)
        if log_estimate > 705.0:
            raise OverflowError(
                f"K_{nu}({r}) exceeds the representable double range"
            )
    half_steps = nu - 0.5
    if half_steps >= 0 and half_steps == math.floor(half_steps):
        # Closed form: K_{m+1/2}(r) = sqrt(pi/(2r)) e^{-r}
        #   * sum_k (m+k)! / (k! (m-k)!) (2r)^{-k}
        m = int(half_steps)
        acc = 0.0
        for k in range(m + 1):
            coeff = (
                math.factorial(m + k)
                / (math.factorial(k) * math.factorial(m - k))
            )
            acc += coeff / (2.0 * r) ** k
        return math.sqrt(math.pi / (2.0 * r)) * acc
    if r >= 1.0e4:
        # Far field: the quadrature's 1e-13 agreement target sinks into the
        # dot-product roundoff floor, while the asymptotic series truncates
        # at O(r^-4), comfortably finer.
        return math.sqrt(math.pi / (2.0 * r)) * _k_asym_tail(nu, r)
    return _scaled_k_quad(nu, r)


def bessel_k(nu: float, r: float) -> float:
    """Modified Bessel function K_nu(r), symmetric in nu.

    Half-integer orders use the closed form; all others are evaluated by
    quadrature of the integral representation
    K_nu(r) = int_0^inf exp(-r cosh t) cosh(nu t) dt.
    """
    if not r > 0:
        raise ValueError(f"bessel_k requires r > 0, got {r}")
    nu = abs(float(nu))
    scaled = _scaled_k(nu, r)
    log_val = math.log(scaled) - r
    if log_val > 705.0:
        raise OverflowError(f"K_{nu}({r}) exceeds the representable double range")
    if log_val < -745.0:
        return 0.0
    return scaled * math.exp(-r)


# ---------------------------------------------------------------------------
# The envelope h_n and its corridor


def _check_dim(n: int) -> None:
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ValueError(f"dimension must be a positive integer, got {n!r}")


def h_n(n: int, r: float) -> float:
    """Envelope h_n(r) = K_{n/2}(r) / K_{n/2-1}(r); exact for n = 1 and n = 3."""
    _check_dim(n)
    if not r > 0:
        raise ValueError(f"h_n requires r > 0, got {r}")
    if n == 1:
        return 1.0
    if n == 3:
        return 1.0 + 1.0 / r
    # K_{-nu} = K_nu makes the n = 1 branch consistent with this ratio too.
    return _scaled_k(0.5 * n, r) / _scaled_k(abs(0.5 * n - 1.0), r)


def h_tilde(n: int, r: float) -> float:
    """Rescaled envelope n h_n(r) / r used by the self-similar dissipation bound."""
    return n * h_n(n, r) / r


def h_corridor_upper(n: int, r: float) -> float:
    """Upper corridor wall (n-1)/(2r) + sqrt(1 + (n-1)^2/(4r^2)); h_n lies below it."""
    s = (n - 1.0) / (2.0 * r)
    return s + math.sqrt(1.0 + s * s)


@dataclass(frozen=True)
class SpecFunTable:
    """Tabulated envelope values on a grid, tagged with the method that made them."""

    dimension: int
    r_grid: np.ndarray
    h_values: np.ndarray
    method: str  # "bessel_ratio" or "riccati_backward"
    cross_check_error: float

    def __post_init__(self) -> None:
        r = np.asarray(self.r_grid, dtype=float)
        h = np.asarray(self.h_values, dtype=float)
        if r.ndim != 1 or h.shape != r.shape:
            raise ValueError("r_grid and h_values must be matching 1D arrays")
        if not np.all(r > 0) or not np.all(np.diff(r) > 0):
            raise ValueError("r_grid must be strictly increasing and positive")
        if not np.all(h > 0):
            raise ValueError("h_values must be positive")
        if self.method not in ("bessel_ratio", "riccati_backward"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.cross_check_error < 0:
            raise ValueError("cross_check_error must be nonnegative")
        if self.dimension >= 2:
            if not np.all(np.diff(h) < 0):
                raise ValueError("h_values must strictly decrease for n >= 2")
            upper = np.array([h_corridor_upper(self.dimension, ri) for ri in r])
            if not (np.all(h > 1.0) and np.all(h < upper)):
                raise ValueError("h_values left the admissible corridor")
        object.__setattr__(self, "r_grid", r)
        object.__setattr__(self, "h_values", h)


# ---------------------------------------------------------------------------
# Riccati integration (Dormand-Prince 4(5), adaptive)

_DP_C = (0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0)
_DP_A = (
    (0.2,),
    (3.0 / 40.0, 9.0 / 40.0),
    (44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0),
    (19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0),
    (9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0,
     -5103.0 / 18656.0),
    (35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0,
     11.0 / 84.0),
)
_DP_B5 = (35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0,
          11.0 / 84.0, 0.0)
_DP_B4 = (5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0,
          -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0)


def _riccati_rhs(n: int, r: float, h: float) -> float:
    return h * h - 1.0 - (n - 1.0) * h / r


def _dp_step(n: int, r: float, h: float, dr: float) -> tuple[float, float]:
    """One Dormand-Prince step; returns (h_new, error_estimate)."""
    k = [_riccati_rhs(n, r, h)]
    for stage in range(6):
        acc = 0.0
        for a, ki in zip(_DP_A[stage], k):
            acc += a * ki
        k.append(_riccati_rhs(n, r + _DP_C[stage] * dr, h + dr * acc))
    h5 = h + dr * sum(b * ki for b, ki in zip(_DP_B5, k))
    h4 = h + dr * sum(b * ki for b, ki in zip(_DP_B4, k))
    return h5, abs(h5 - h4)


def _integrate(
    n: int,
    r0: float,
    h0: float,
    targets: list[float],
    *,
    rtol: float,
    atol: float,
    max_spacing: float | None,
    detect_events: bool,
    corridor: bool,
) -> tuple[list[float], list[float], dict[float, float], str | None, float | None]:
    """Adaptive march from r0 through the sorted target list.

    Returns (rs, hs, landed values, event, r_event).  Targets must be strictly
    monotone in the direction of integration; the march lands on each exactly.
    Events: "blowup" when |h| passes BLOWUP_THRESHOLD (or the step size
    underflows while |h| grows), "zero" at a sign change, "corridor" when a
    backward trajectory leaves the admissible corridor.
    """
    direction = 1.0 if targets[-1] > r0 else -1.0
    r, h = float(r0), float(h0)
    rs, hs = [r], [h]
    landed: dict[float, float] = {}
    queue = list(targets)
    dr = direction * min(0.1, abs(targets[-1] - r0) * 0.05 + 1.0e-6)
    if max_spacing is not None:
        dr = direction * min(abs(dr), max_spacing)

    while queue:
        target = queue[0]
        remaining = target - r
        if direction * remaining <= 1.0e-15 * max(1.0, abs(r)):
            landed[target] = h
            queue.pop(0)
            continue
        step = direction * min(abs(dr), abs(remaining))
        if max_spacing is not None:
            step = direction * min(abs(step), max_spacing)
        if abs(step) < STEP_FLOOR * max(1.0, abs(r)):
            if abs(h) > 1.0:
                return rs, hs, landed, "blowup", r
            raise ArithmeticError(
                f"step underflow at r={r} without blow-up (n={n})"
            )
        h_new, err = _dp_step(n, r, h, step)
        scale = atol + rtol * max(abs(h), abs(h_new))
        if err > scale and abs(step) > STEP_FLOOR * max(1.0, abs(r)):
            dr = step * max(0.2, 0.9 * (scale / err) ** 0.2)
            continue
        r_new = r + step
        if detect_events:
            if abs(h_new) > BLOWUP_THRESHOLD:
                rs.append(r_new)
                hs.append(h_new)
                return rs, hs, landed, "blowup", r_new
            if h_new <= 0.0 < h:
                # Linear interpolation for the crossing point.
                frac = h / (h - h_new)
                rs.append(r + frac * step)
                hs.append(0.0)
                return rs, hs, landed, "zero", r + frac * step
        if corridor and n >= 2:
            if not 0.0 < h_new < 1.05 * h_corridor_upper(n, r_new):
                return rs, hs, landed, "corridor", r_new
        r, h = r_new, h_new
        rs.append(r)
        hs.append(h)
        grow = 0.9 * (scale / err) ** 0.2 if err > 0 else 5.0
        dr = step * min(5.0, max(0.2, grow))
    return rs, hs, landed, None, None


@dataclass(frozen=True)
class RiccatiTrajectory:
    """One forward Riccati trajectory and its classification."""

    n: int
    r0: float
    h0: float
    rs: np.ndarray
    hs: np.ndarray
    outcome: str  # converged_to_one | blew_up | crossed_zero | indeterminate
    r_star: float | None


def riccati_integrate(
    n: int,
    r0: float,
    h0: float,
    r_max: float,
    *,
    rtol: float = DEFAULT_RTOL,
    max_sample_spacing: float = 0.25,
) -> RiccatiTrajectory:
    """Integrate h' = h^2 - 1 - (n-1)h/r forward and classify the outcome.

    Initial data above the envelope blows up at finite r_star; data below it
    crosses zero.  For n >= 2 the envelope itself is not representable in
    floats, so offsets within NEAR_SEPARATRIX_MARGIN of h_n(r0) are reported
    as "indeterminate" rather than classified from round-off noise.
    """
    _check_dim(n)
    if not r0 > 0:
        raise ValueError(f"riccati_integrate requires r0 > 0, got {r0}")
    if not r_max > r0:
        raise ValueError(f"r_max must exceed r0, got {r_max} <= {r0}")
    if n >= 2:
        href = h_n(n, r0)
        if abs(h0 - href) < NEAR_SEPARATRIX_MARGIN * href:
            return RiccatiTrajectory(
                n, r0, h0, np.array([r0]), np.array([h0]), "indeterminate", None
            )
    rs, hs, _, event, r_event = _integrate(
        n, r0, h0, [r_max],
        rtol=rtol, atol=DEFAULT_ATOL, max_spacing=max_sample_spacing,
        detect_events=True, corridor=False,
    )
    if event == "blowup":
        outcome, r_star = "blew_up", r_event
    elif event == "zero":
        outcome, r_star = "crossed_zero", r_event
    else:
        # Reached r_max without an event; n = 1 sits on the exact fixed
        # point, while for n >= 2 a trajectory still near 1 is unresolved.
        if abs(hs[-1] - 1.0) <= 0.5:
            outcome, r_star = "converged_to_one", None
        else:
            outcome, r_star = "indeterminate", None
    return RiccatiTrajectory(
        n, r0, h0, np.asarray(rs), np.asarray(hs), outcome, r_star
    )


def h_n_via_backward_ode(
    n: int,
    r_grid,
    *,
    rtol: float = DEFAULT_RTOL,
) -> SpecFunTable:
    """Evaluate h_n on a grid by backward integration from a far seed.

    Seeds at r_seed = max(20, 10 * max(grid)) with the two-term asymptote
    1 + (n-1)/(2 r_seed).  Backward integration contracts the seed error like
    exp(-2 (r_seed - r)), so the landed values are limited by the integrator
    tolerance, not the seed.  The cross_check_error field records the largest
    deviation from the Bessel-ratio method over the grid.
    """
    _check_dim(n)
    grid = np.sort(np.asarray(r_grid, dtype=float))
    if grid.ndim != 1 or grid.size == 0 or not np.all(grid > 0):
        raise ValueError("r_grid must be a nonempty 1D array of positive reals")
    if n == 1:
        values = np.ones_like(grid)
        return SpecFunTable(1, grid, values, "riccati_backward", 0.0)

    r_seed = max(20.0, 10.0 * float(grid.max()))
    h_seed = 1.0 + (n - 1.0) / (2.0 * r_seed)
    targets = list(grid[::-1])
    _, _, landed, event, r_event = _integrate(
        n, r_seed, h_seed, targets,
        rtol=rtol, atol=DEFAULT_ATOL, max_spacing=None,
        detect_events=False, corridor=True,
    )
    if event == "corridor":
        raise ArithmeticError(
            f"backward integration left the admissible corridor at r={r_event}"
        )
    values = np.array([landed[t] for t in grid])
    reference = np.array([h_n(n, ri) for ri in grid])
    err = float(np.max(np.abs(values - reference)))
    return SpecFunTable(n, grid, values, "riccati_backward", err)
