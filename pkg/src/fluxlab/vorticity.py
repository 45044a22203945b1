"""Cylinder vorticity flow and its enstrophy ledger.

Vorticity on the truncated-periodic cylinder splits into a vertical-mean
channel and a mean-free remainder: omega = d1 m + omega_hat, where m is the
column-averaged vertical velocity.  The remainder induces a divergence-free
velocity through a streamfunction with no k2 = 0 content, the mean channel
rides on top as (0, m), and the pair evolves by advection-diffusion:

    d_t omega + u . grad omega = Lap omega,      u = (u1, m + u2),
    d_t m + d1 <u1 u2> = d1^2 m.

Everything is spectral: the streamfunction solve is exact per mode, diffusion
uses the integrating factor, and advection products are 2/3-dealiased, so
band-limited states never alias and the column-mean / mean-channel split is
preserved to round-off.  Enstrophy bookkeeping happens per x1 column: density
e = (1/2)<omega^2>, flux f = <omega d1 omega> - (1/2)<u1 omega^2>,
dissipation d = <|grad omega|^2>.  The kernel constants c1, c2, c3 that cap
velocity and flux in terms of e and d come from adaptive quadrature of the
explicit cylinder Green function; the flow solver never touches the kernel,
which is kept as an independent cross-check.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
import scipy.fft

from .grids import Domain, ScalarField, VectorField, line_domain
from .models import InstabilityError, make_rng

__all__ = [
    "ADVECTIVE_CFL",
    "CONSISTENCY_TOL",
    "MEAN_FREE_TOL",
    "KAPPA_BALANCE",
    "DEFAULT_TRUNCATION",
    "DEFAULT_QUAD_POINTS",
    "QUAD_DRIFT_LIMIT",
    "CylinderState",
    "KernelConstants",
    "EnstrophyProfile",
    "CylinderHistory",
    "DecayMeasure",
    "SupBoundReport",
    "DissipationRow",
    "BalanceRow",
    "VelocityRow",
    "MeanFlowRow",
    "WindowDissipationReport",
    "WindowBalanceReport",
    "VelocityBoundReport",
    "MeanFlowReport",
    "biot_savart",
    "kernel_constants",
    "cylinder_step",
    "advection_term",
    "enstrophy_profile",
    "profile_flux_excess",
    "run_cylinder",
    "window_dissipation_check",
    "window_balance_check",
    "velocity_bound_check",
    "mean_flow_bound_check",
    "decay_measure",
    "measured_m1",
    "fit_mean_growth",
    "sup_bound_mean_gradient",
    "sup_bound_l2_lipschitz",
    "make_cylinder_initial",
]

# Diffusion is exact in the integrating factor, so only advection limits dt.
ADVECTIVE_CFL = 0.5
# A state is accepted when <omega> and d1 m agree to this relative level.
CONSISTENCY_TOL = 1.0e-6
# biot_savart refuses inputs whose column means exceed this relative level.
MEAN_FREE_TOL = 1.0e-10
# Window balance residuals scale like dt^2 on a resolved grid; the measured
# prefactor is about 0.4, frozen here with a factor-10 headroom.
KAPPA_BALANCE = 4.0

DEFAULT_TRUNCATION = 12.0
DEFAULT_QUAD_POINTS = 24
QUAD_DRIFT_LIMIT = 1.0e-3
# Polar refinement radius around the log singularity of the kernel.  Must
# stay below 1/6 so the kernel's zero curve cannot enter the patch.
_SINGULAR_PATCH = 0.1


# ---------------------------------------------------------------------------
# Spectral plumbing

@dataclass(frozen=True)
class _Spectral:
    k1: np.ndarray
    k2: np.ndarray
    ik1: np.ndarray
    ik2: np.ndarray
    ksq: np.ndarray
    inv_lap: np.ndarray
    mask: np.ndarray
    mask1: np.ndarray
    k1v: np.ndarray
    ik1v: np.ndarray


@functools.lru_cache(maxsize=32)
def _spectral(domain: Domain) -> _Spectral:
    n1, n2 = domain.shape
    length = domain.axes[0].length
    k1 = 2.0 * math.pi * np.fft.fftfreq(n1, d=length / n1)[:, None]
    k2 = 2.0 * math.pi * np.fft.fftfreq(n2, d=1.0 / n2)[None, :]
    ik1 = 1j * k1.copy()
    ik2 = 1j * k2.copy()
    # Odd derivatives drop the Nyquist line so real fields stay real.
    if n1 % 2 == 0:
        ik1[n1 // 2, :] = 0.0
    if n2 % 2 == 0:
        ik2[:, n2 // 2] = 0.0
    ksq = k1 * k1 + k2 * k2
    guarded = ksq.copy()
    guarded[0, 0] = 1.0
    inv_lap = -1.0 / guarded
    # The streamfunction has no k2 = 0 content; zeroing the whole row also
    # scrubs round-off column means from the input.
    inv_lap[:, 0] = 0.0
    i1 = np.abs(np.fft.fftfreq(n1) * n1)
    i2 = np.abs(np.fft.fftfreq(n2) * n2)
    mask1 = i1 <= n1 // 3
    mask = mask1[:, None] & (i2 <= n2 // 3)[None, :]
    k1v = k1[:, 0].copy()
    ik1v = ik1[:, 0].copy()
    return _Spectral(k1, k2, ik1, ik2, ksq, inv_lap, mask, mask1, k1v, ik1v)


@functools.lru_cache(maxsize=64)
def _decay_factors(domain: Domain, dt: float):
    sp = _spectral(domain)
    return np.exp(-sp.ksq * dt), np.exp(-sp.k1v ** 2 * dt)


def _d1_line(values: np.ndarray, domain: Domain) -> np.ndarray:
    """Spectral x1-derivative of a 1D profile on the cylinder axis."""
    n = values.size
    k = 2.0 * math.pi * np.fft.fftfreq(n, d=domain.axes[0].length / n)
    ik = 1j * k
    if n % 2 == 0:
        ik[n // 2] = 0.0
    return scipy.fft.ifft(ik * scipy.fft.fft(values)).real


def _trig_eval(series: np.ndarray, length: float, points) -> np.ndarray:
    """Trig interpolant of cell-centered 1D samples at arbitrary points."""
    n = series.size
    coeff = scipy.fft.fft(series) / n
    k = np.fft.fftfreq(n) * n
    if n % 2 == 0:
        coeff[n // 2] = 0.0
    x0 = -0.5 * length + 0.5 * length / n
    out = np.empty(len(points))
    for i, x in enumerate(points):
        phase = np.exp(2j * math.pi * k * (x - x0) / length)
        out[i] = np.sum(coeff * phase).real
    return out


# ---------------------------------------------------------------------------
# States

@dataclass(frozen=True)
class CylinderState:
    """Vorticity on the cylinder plus its mean vertical-velocity channel.

    The two fields are redundant along the column mean: <omega> = d1 m must
    hold, and construction rejects pairs that disagree beyond round-off
    accumulation.  Time is carried explicitly so histories can be replayed.
    """

    omega: ScalarField
    m: ScalarField
    time_tag: float = 0.0

    def __post_init__(self) -> None:
        if self.omega.domain.kind != "cylinder":
            raise ValueError("vorticity lives on a cylinder domain")
        if self.m.domain.kind != "line":
            raise ValueError("the mean channel lives on a line domain")
        if self.m.domain.axes[0] != self.omega.domain.axes[0]:
            raise ValueError(
                "mean channel axis must match the cylinder x1 axis")
        col = self.omega.values.mean(axis=1)
        d1m = _d1_line(self.m.values, self.m.domain)
        scale = max(1.0, float(np.max(np.abs(self.omega.values))))
        worst = float(np.max(np.abs(col - d1m)))
        if worst > CONSISTENCY_TOL * scale:
            raise ValueError(
                f"<omega> and d1 m disagree by {worst:.3e} "
                f"(allowed {CONSISTENCY_TOL * scale:.3e})")

    @property
    def domain(self) -> Domain:
        return self.omega.domain

    @property
    def mean_profile(self) -> np.ndarray:
        return self.omega.values.mean(axis=1)

    @property
    def mean_free(self) -> ScalarField:
        hat = self.omega.values - self.mean_profile[:, None]
        return ScalarField(self.omega.domain, hat, self.time_tag)

    def sup(self) -> float:
        return float(np.max(np.abs(self.omega.values)))


# ---------------------------------------------------------------------------
# Biot-Savart

def biot_savart(omega_hat: ScalarField) -> tuple[VectorField, ScalarField]:
    """Velocity and streamfunction induced by a mean-free vorticity field.

    The inversion happens per Fourier mode, which keeps div u at round-off
    and drops the k2 = 0 modes the streamfunction does not have.  Inputs
    carrying a nonzero column mean are rejected rather than projected:
    silently discarding mean vorticity would hide bookkeeping bugs upstream.
    """
    if omega_hat.domain.kind != "cylinder":
        raise ValueError("biot_savart expects a cylinder field")
    w = omega_hat.values
    scale = max(1.0, float(np.max(np.abs(w))))
    col = float(np.max(np.abs(w.mean(axis=1))))
    if col > MEAN_FREE_TOL * scale:
        raise ValueError(
            f"input has column means up to {col:.3e}; "
            "subtract the mean channel before inverting")
    sp = _spectral(omega_hat.domain)
    psi_hat = scipy.fft.fft2(w) * sp.inv_lap
    u1 = scipy.fft.ifft2(-sp.ik2 * psi_hat).real
    u2 = scipy.fft.ifft2(sp.ik1 * psi_hat).real
    psi = scipy.fft.ifft2(psi_hat).real
    velocity = VectorField(omega_hat.domain, (u1, u2), omega_hat.time_tag)
    return velocity, ScalarField(omega_hat.domain, psi, omega_hat.time_tag)


# ---------------------------------------------------------------------------
# Kernel constants

@dataclass(frozen=True)
class KernelConstants:
    """Norms of the cylinder Green function and the derived budget caps.

    c1 caps velocity by vorticity sup, c2 caps the streamfunction by the
    columnwise L2 of the mean-free part, and c3 = max(4, 8 c2^2) is the
    prefactor of the flux budget |f|^2 <= c3 (1 + sup e) e d.
    """

    norm_k_l1: float
    norm_grad_k_l1: float
    m0: float
    c1: float
    c2: float
    c3: float

    def __post_init__(self) -> None:
        for name in ("norm_k_l1", "norm_grad_k_l1", "m0"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        # The sup-in-x2 envelope dominates the unit-width L1 norm.
        if self.norm_k_l1 > self.m0 * (1.0 + 1.0e-9):
            raise ValueError("norm_k_l1 cannot exceed m0")
        checks = (
            ("c1", 2.0 * self.norm_grad_k_l1),
            ("c2", math.sqrt(self.m0 * self.norm_k_l1)),
            ("c3", max(4.0, 8.0 * self.c2 ** 2)),
        )
        for name, want in checks:
            got = getattr(self, name)
            if abs(got - want) > 1.0e-9 * max(1.0, want):
                raise ValueError(
                    f"{name} = {got!r} breaks its defining identity "
                    f"(expected {want!r})")


@functools.lru_cache(maxsize=8)
def _gl_nodes(n: int):
    return np.polynomial.legendre.leggauss(n)


def _k_quadrant(x1, x2):
    # x1 >= 0 assumed.  2 cosh a - 2 cos b = 4 (sinh^2(a/2) + sin^2(b/2))
    # survives near the origin where the naive exponential form cancels.
    s1 = np.sinh(math.pi * x1)
    s2 = np.sin(math.pi * x2)
    return np.log(4.0 * (s1 * s1 + s2 * s2)) / (4.0 * math.pi) - x1 / 2.0


def _grad_norm_quadrant(x1, x2):
    s1 = np.sinh(math.pi * x1)
    s2 = np.sin(math.pi * x2)
    den = 2.0 * (s1 * s1 + s2 * s2)
    d1 = 0.5 * np.sinh(2.0 * math.pi * x1) / den - 0.5
    d2 = 0.5 * np.sin(2.0 * math.pi * x2) / den
    return np.hypot(d1, d2)


def _zero_curve(x1):
    """x2 level where the kernel changes sign, for splitting |K| panels."""
    arg = np.minimum(1.0, np.exp(-2.0 * math.pi * x1) / 2.0)
    return np.arccos(arg) / (2.0 * math.pi)


def _geometric_panels(lo: float, hi: float, ratio: float = 0.5,
                      floor: float = 1.0e-14) -> np.ndarray:
    edges = [hi]
    width = hi - lo
    while width > floor * hi:
        width *= ratio
        edges.append(lo + width)
    edges.append(lo)
    return np.array(edges[::-1])


def _corner_polar(npts: int) -> tuple[float, float]:
    """Integrals of |K| and |grad K| over the singular corner square."""
    tx, tw = _gl_nodes(npts)
    tot_k = tot_g = 0.0
    for tlo, thi in ((0.0, 0.25 * math.pi), (0.25 * math.pi, 0.5 * math.pi)):
        theta = 0.5 * (thi - tlo) * tx + 0.5 * (thi + tlo)
        theta_w = 0.5 * (thi - tlo) * tw
        edge = _SINGULAR_PATCH / np.maximum(np.cos(theta), np.sin(theta))
        for j, (t, wt) in enumerate(zip(theta, theta_w)):
            r_edges = _geometric_panels(0.0, edge[j])
            for a, b in zip(r_edges[:-1], r_edges[1:]):
                r = 0.5 * (b - a) * tx + 0.5 * (b + a)
                rw = 0.5 * (b - a) * tw
                x1 = r * math.cos(t)
                x2 = r * math.sin(t)
                tot_k += wt * np.sum(rw * r * np.abs(_k_quadrant(x1, x2)))
                tot_g += wt * np.sum(rw * r * _grad_norm_quadrant(x1, x2))
    return tot_k, tot_g


def _strip_integral(x1_edges: np.ndarray, npts: int,
                    x2_floor: float) -> tuple[float, float]:
    """Iterated integral over x1 panels, x2 from x2_floor up to 1/2.

    Each inner integral splits at the kernel's zero curve so |K| stays
    smooth on every Gauss panel; |grad K| has no kink in this region.
    """
    tx, tw = _gl_nodes(npts)
    tot_k = tot_g = 0.0
    for a, b in zip(x1_edges[:-1], x1_edges[1:]):
        x1 = 0.5 * (b - a) * tx + 0.5 * (b + a)
        x1w = 0.5 * (b - a) * tw
        for xi, wi in zip(x1, x1w):
            split = float(_zero_curve(xi))
            for c, d in ((x2_floor, split), (split, 0.5)):
                x2 = 0.5 * (d - c) * tx + 0.5 * (d + c)
                x2w = 0.5 * (d - c) * tw
                tot_k += wi * np.sum(x2w * np.abs(_k_quadrant(xi, x2)))
                tot_g += wi * np.sum(x2w * _grad_norm_quadrant(xi, x2))
    return tot_k, tot_g


def _m0_integral(truncation: float, npts: int) -> float:
    # K is monotone in cos(2 pi x2), so the x2-sup of |K| sits at x2 = 0 or
    # x2 = 1/2 and the 2D sup-integral collapses to a 1D quadrature.
    tx, tw = _gl_nodes(npts)
    edges = np.concatenate([
        _geometric_panels(0.0, _SINGULAR_PATCH),
        np.geomspace(2.0 * _SINGULAR_PATCH, truncation, 12),
    ])
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        x1 = 0.5 * (b - a) * tx + 0.5 * (b + a)
        w = 0.5 * (b - a) * tw
        v0 = np.abs(_k_quadrant(x1, np.zeros_like(x1)))
        vh = np.abs(_k_quadrant(x1, np.full_like(x1, 0.5)))
        total += np.sum(w * np.maximum(v0, vh))
    return 2.0 * total


def _kernel_norms(truncation: float, npts: int) -> tuple[float, float, float]:
    corner_k, corner_g = _corner_polar(npts)
    strip_k, strip_g = _strip_integral(
        np.array([0.0, 0.5 * _SINGULAR_PATCH, _SINGULAR_PATCH]), npts,
        x2_floor=_SINGULAR_PATCH)
    tail_edges = np.concatenate([
        [_SINGULAR_PATCH],
        np.geomspace(2.0 * _SINGULAR_PATCH, truncation, 14),
    ])
    tail_k, tail_g = _strip_integral(tail_edges, npts, x2_floor=0.0)
    norm_k = 4.0 * (corner_k + strip_k + tail_k)
    norm_g = 4.0 * (corner_g + strip_g + tail_g)
    return norm_k, norm_g, _m0_integral(truncation, npts)


@functools.lru_cache(maxsize=8)
def kernel_constants(truncation: float = DEFAULT_TRUNCATION,
                     quad_points: int = DEFAULT_QUAD_POINTS) -> KernelConstants:
    """Kernel norms by adaptive Gauss quadrature, verified by point doubling.

    The kernel decays like exp(-2 pi |x1|), so truncating the axis at 10 or
    beyond leaves a tail far below the quadrature error.  Each norm is
    computed at quad_points and at twice that; a relative drift above
    QUAD_DRIFT_LIMIT means the panel layout failed and is reported as an
    arithmetic error rather than returned as data.
    """
    truncation = float(truncation)
    quad_points = int(quad_points)
    if truncation < 10.0:
        raise ValueError("truncation below 10 leaves a visible kernel tail")
    if quad_points < 8:
        raise ValueError("need at least 8 Gauss points per panel")
    coarse = _kernel_norms(truncation, quad_points)
    fine = _kernel_norms(truncation, 2 * quad_points)
    for c, f in zip(coarse, fine):
        if abs(c - f) > QUAD_DRIFT_LIMIT * abs(f):
            raise ArithmeticError(
                f"kernel quadrature has not settled: {c!r} vs {f!r}")
    norm_k, norm_g, m0 = fine
    c1 = 2.0 * norm_g
    c2 = math.sqrt(m0 * norm_k)
    c3 = max(4.0, 8.0 * c2 * c2)
    return KernelConstants(norm_k, norm_g, m0, c1, c2, c3)


# ---------------------------------------------------------------------------
# Stepping

def _nonlinear(w: np.ndarray, m: np.ndarray, sp: _Spectral):
    """Dealiased advection tendencies and the advective velocity sup."""
    F = scipy.fft.fft2(w)
    psi_hat = F * sp.inv_lap
    u1 = scipy.fft.ifft2(-sp.ik2 * psi_hat).real
    u2 = scipy.fft.ifft2(sp.ik1 * psi_hat).real
    wx1 = scipy.fft.ifft2(sp.ik1 * F).real
    wx2 = scipy.fft.ifft2(sp.ik2 * F).real
    vertical = m[:, None] + u2
    adv = u1 * wx1 + vertical * wx2
    nw = -scipy.fft.fft2(adv) * sp.mask
    q = (u1 * u2).mean(axis=1)
    nm = sp.ik1v * (-scipy.fft.fft(q))
    nm = np.where(sp.mask1, nm, 0.0)
    u_sup = float(np.max(np.hypot(u1, vertical)))
    return nw, nm, u_sup


def cylinder_step(state: CylinderState, dt: float) -> CylinderState:
    """One Heun step with exact diffusion via the integrating factor.

    Both advection evaluations are dealiased with the same mask, which is
    what keeps <omega> = d1 m exact in the discrete system: the quadratic
    terms cannot fold energy onto the column-mean row from inside the band.
    """
    if not (dt > 0.0 and math.isfinite(dt)):
        raise ValueError(f"step size must be positive, got {dt}")
    dom = state.domain
    sp = _spectral(dom)
    w = state.omega.values
    mvals = state.m.values
    nw0, nm0, u_sup = _nonlinear(w, mvals, sp)
    limit = ADVECTIVE_CFL * min(dom.spacing) / max(1.0, u_sup)
    if dt > limit:
        raise InstabilityError(
            f"dt = {dt:.3e} exceeds the advective limit {limit:.3e} "
            f"(|u| up to {u_sup:.3e})")
    big_e, small_e = _decay_factors(dom, dt)
    W = scipy.fft.fft2(w)
    M = scipy.fft.fft(mvals)
    w_star = scipy.fft.ifft2(big_e * (W + dt * nw0)).real
    m_star = scipy.fft.ifft(small_e * (M + dt * nm0)).real
    nw1, nm1, _ = _nonlinear(w_star, m_star, sp)
    w_new = scipy.fft.ifft2(big_e * W + 0.5 * dt * (big_e * nw0 + nw1)).real
    m_new = scipy.fft.ifft(small_e * M + 0.5 * dt * (small_e * nm0 + nm1)).real
    if not (np.all(np.isfinite(w_new)) and np.all(np.isfinite(m_new))):
        raise InstabilityError("step produced non-finite values")
    t = state.time_tag + dt
    return CylinderState(ScalarField(dom, w_new, t),
                         ScalarField(state.m.domain, m_new, t), t)


def advection_term(state: CylinderState) -> ScalarField:
    """The dealiased u . grad omega, exposed for residual diagnostics."""
    sp = _spectral(state.domain)
    F = scipy.fft.fft2(state.omega.values)
    psi_hat = F * sp.inv_lap
    u1 = scipy.fft.ifft2(-sp.ik2 * psi_hat).real
    u2 = scipy.fft.ifft2(sp.ik1 * psi_hat).real
    wx1 = scipy.fft.ifft2(sp.ik1 * F).real
    wx2 = scipy.fft.ifft2(sp.ik2 * F).real
    adv = u1 * wx1 + (state.m.values[:, None] + u2) * wx2
    clean = scipy.fft.ifft2(scipy.fft.fft2(adv) * sp.mask).real
    return ScalarField(state.domain, clean, state.time_tag)


# ---------------------------------------------------------------------------
# Enstrophy accounting

@dataclass(frozen=True)
class EnstrophyProfile:
    """Columnwise enstrophy density, flux, and dissipation at one time."""

    domain: Domain
    e: np.ndarray
    f: np.ndarray
    d: np.ndarray
    e0: float
    beta: float
    time_tag: float = 0.0

    def __post_init__(self) -> None:
        if self.domain.kind != "line":
            raise ValueError("profiles live on the x1 line")
        for name in ("e", "f", "d"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != self.domain.shape:
                raise ValueError(f"profile {name} does not match the domain")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"profile {name} contains non-finite values")
            object.__setattr__(self, name, arr)
        if np.min(self.e) < 0 or np.min(self.d) < 0:
            raise ValueError("density and dissipation must be nonnegative")
        if self.e0 < 0 or self.beta < 0:
            raise ValueError("budget caps must be nonnegative")


class _Observation(NamedTuple):
    e: np.ndarray
    f: np.ndarray
    d: np.ndarray
    column_sup: np.ndarray
    omega_sup: float
    u_hat_sup: float
    v_sup: float
    m_sup: float
    hat_l2_sup: float
    mixed_sup: float


def _observe(state: CylinderState) -> _Observation:
    sp = _spectral(state.domain)
    w = state.omega.values
    F = scipy.fft.fft2(w)
    psi_hat = F * sp.inv_lap
    u1 = scipy.fft.ifft2(-sp.ik2 * psi_hat).real
    u2 = scipy.fft.ifft2(sp.ik1 * psi_hat).real
    v = scipy.fft.ifft2(psi_hat).real
    wx1 = scipy.fft.ifft2(sp.ik1 * F).real
    wx2 = scipy.fft.ifft2(sp.ik2 * F).real
    mixed = scipy.fft.ifft2(sp.ik1 * sp.ik2 * F).real
    e = 0.5 * (w * w).mean(axis=1)
    f = (w * wx1).mean(axis=1) - 0.5 * (u1 * w * w).mean(axis=1)
    d = (wx1 * wx1 + wx2 * wx2).mean(axis=1)
    hat = w - w.mean(axis=1, keepdims=True)
    column_sup = np.max(np.abs(w), axis=1)
    return _Observation(
        e=e, f=f, d=d,
        column_sup=column_sup,
        omega_sup=float(column_sup.max()),
        u_hat_sup=float(np.max(np.hypot(u1, u2))),
        v_sup=float(np.max(np.abs(v))),
        m_sup=float(np.max(np.abs(state.m.values))),
        hat_l2_sup=float(math.sqrt(np.max((hat * hat).mean(axis=1)))),
        mixed_sup=float(math.sqrt(np.max((mixed * mixed).mean(axis=1)))),
    )


def _budget_caps(sup0: float, constants: KernelConstants):
    e0 = 0.5 * sup0 * sup0
    return e0, constants.c3 * e0 * (1.0 + e0)


def enstrophy_profile(state: CylinderState, *,
                      constants: KernelConstants | None = None,
                      initial_sup: float | None = None) -> EnstrophyProfile:
    """Enstrophy triple of one state, with the budget caps of its run.

    The caps e0 and beta belong to the trajectory, not the instant, so for a
    mid-run state pass initial_sup = sup |omega(0)|; by the maximum
    principle the current sup is an admissible stand-in only at t = 0.
    """
    constants = constants or kernel_constants()
    obs = _observe(state)
    sup0 = state.sup() if initial_sup is None else float(initial_sup)
    e0, beta = _budget_caps(sup0, constants)
    profile_dom = line_domain(state.domain.axes[0].length,
                              state.domain.shape[0])
    return EnstrophyProfile(profile_dom, obs.e, obs.f, obs.d,
                            e0, beta, state.time_tag)


def profile_flux_excess(profile: EnstrophyProfile,
                        constants: KernelConstants | None = None) -> float:
    """Worst value of f^2 - c3 (1 + sup e) e d; nonpositive when the flux
    budget holds pointwise."""
    constants = constants or kernel_constants()
    cap = constants.c3 * (1.0 + float(np.max(profile.e)))
    excess = profile.f ** 2 - cap * profile.e * profile.d
    return float(np.max(excess))


# ---------------------------------------------------------------------------
# Histories

class _StepIntegral:
    """Cumulative time integral on the uniform step grid.

    Completed sample pairs are summed by Simpson's rule; at odd parity the
    trailing panel is closed provisionally with a trapezoid and reopened
    when its pair completes.
    """

    def __init__(self, dt: float, first: float) -> None:
        self._dt = dt
        self._tail = [first]
        self._base = 0.0
        self.value = 0.0

    def push(self, sample: float) -> None:
        self._tail.append(sample)
        if len(self._tail) == 3:
            a, b, c = self._tail
            self._base += self._dt * (a + 4.0 * b + c) / 3.0
            self._tail = [c]
            self.value = self._base
        else:
            self.value = self._base + 0.5 * self._dt * (
                self._tail[0] + sample)


@dataclass
class CylinderHistory:
    """Recorded diagnostics of one trajectory, densely accumulated.

    Profiles and sups are appended at the record cadence; the window
    dissipation and edge-flux integrals are accumulated at every step, so
    their recorded values are full-rate quadratures, not cadence-sampled
    ones.  Radii index symmetric windows [-R, R].
    """

    x1: np.ndarray
    dx1: float
    length: float
    dt: float
    radii: tuple[float, ...]
    constants: KernelConstants
    omega0_sup: float
    m0_sup: float
    e0: float
    beta: float
    times: list[float] = field(default_factory=list)
    e_profiles: list[np.ndarray] = field(default_factory=list)
    f_profiles: list[np.ndarray] = field(default_factory=list)
    d_profiles: list[np.ndarray] = field(default_factory=list)
    column_sup: list[np.ndarray] = field(default_factory=list)
    omega_sup: list[float] = field(default_factory=list)
    u_hat_sup: list[float] = field(default_factory=list)
    v_sup: list[float] = field(default_factory=list)
    m_sup: list[float] = field(default_factory=list)
    hat_l2_sup: list[float] = field(default_factory=list)
    mixed_sup: list[float] = field(default_factory=list)
    window_energy: dict = field(default_factory=dict)
    edge_flux_integral: dict = field(default_factory=dict)
    window_dissipation: dict = field(default_factory=dict)

    @property
    def final_time(self) -> float:
        return self.times[-1] if self.times else 0.0


def _window_ramp(x1: np.ndarray, dx1: float, radius: float) -> np.ndarray:
    # Cell-coverage weights of [-R, R], matching the ball-integral rule.
    return np.clip((radius - np.abs(x1)) / dx1 + 0.5, 0.0, 1.0)


def run_cylinder(state: CylinderState, dt: float, n_steps: int, *,
                 radii=(), record_every: int = 1,
                 constants: KernelConstants | None = None,
                 on_record: Callable | None = None,
                 ) -> tuple[CylinderState, CylinderHistory]:
    """Advance a state and keep the bookkeeping the bound checks need.

    Records land every record_every steps and always at the final step.
    on_record, when given, is called with each recorded state after its
    diagnostics are appended; the runner uses it to write snapshots.
    """
    if n_steps < 1:
        raise ValueError("need at least one step")
    if record_every < 1:
        raise ValueError("record cadence must be a positive step count")
    constants = constants or kernel_constants()
    dom = state.domain
    length = dom.axes[0].length
    x1 = dom.coords(0)
    dx1 = dom.axes[0].spacing
    radii = tuple(float(r) for r in radii)
    for r in radii:
        if not 0.0 < 2.0 * r <= length:
            raise ValueError(f"window radius {r} does not fit the domain")
    if len(set(radii)) != len(radii):
        raise ValueError("window radii must be distinct")

    obs = _observe(state)
    e0, beta = _budget_caps(obs.omega_sup, constants)
    hist = CylinderHistory(
        x1=x1, dx1=dx1, length=length, dt=dt, radii=radii,
        constants=constants, omega0_sup=obs.omega_sup, m0_sup=obs.m_sup,
        e0=e0, beta=beta,
        window_energy={r: [] for r in radii},
        edge_flux_integral={r: [] for r in radii},
        window_dissipation={r: [] for r in radii},
    )
    ramps = {r: _window_ramp(x1, dx1, r) for r in radii}

    def edge_flux(obs_now: _Observation, r: float) -> float:
        lo, hi = _trig_eval(obs_now.f, length, (-r, r))
        return hi - lo

    flux_acc = {r: _StepIntegral(dt, edge_flux(obs, r)) for r in radii}
    diss_acc = {
        r: _StepIntegral(dt, float(np.sum(ramps[r] * obs.d) * dx1))
        for r in radii
    }

    def append(state_now: CylinderState, obs_now: _Observation) -> None:
        hist.times.append(state_now.time_tag)
        hist.e_profiles.append(obs_now.e)
        hist.f_profiles.append(obs_now.f)
        hist.d_profiles.append(obs_now.d)
        hist.column_sup.append(obs_now.column_sup)
        hist.omega_sup.append(obs_now.omega_sup)
        hist.u_hat_sup.append(obs_now.u_hat_sup)
        hist.v_sup.append(obs_now.v_sup)
        hist.m_sup.append(obs_now.m_sup)
        hist.hat_l2_sup.append(obs_now.hat_l2_sup)
        hist.mixed_sup.append(obs_now.mixed_sup)
        for r in radii:
            hist.window_energy[r].append(
                float(np.sum(ramps[r] * obs_now.e) * dx1))
            hist.edge_flux_integral[r].append(flux_acc[r].value)
            hist.window_dissipation[r].append(diss_acc[r].value)
        if on_record is not None:
            on_record(state_now, hist)

    append(state, obs)
    for step_index in range(1, n_steps + 1):
        state = cylinder_step(state, dt)
        obs = _observe(state)
        for r in radii:
            flux_acc[r].push(edge_flux(obs, r))
            diss_acc[r].push(float(np.sum(ramps[r] * obs.d) * dx1))
        if step_index % record_every == 0 or step_index == n_steps:
            append(state, obs)
    return state, hist


# ---------------------------------------------------------------------------
# Bound checks over a history

class DissipationRow(NamedTuple):
    time: float
    radius: float
    lhs: float
    rhs: float
    margin: float


class BalanceRow(NamedTuple):
    radius: float
    worst_residual: float
    tolerance: float


class VelocityRow(NamedTuple):
    time: float
    u_sup: float
    u_bound: float
    v_sup: float
    v_bound: float


class MeanFlowRow(NamedTuple):
    time: float
    observed: float
    bound: float


@dataclass(frozen=True)
class WindowDissipationReport:
    rows: tuple
    worst_margin: float
    satisfied: bool


@dataclass(frozen=True)
class WindowBalanceReport:
    rows: tuple
    satisfied: bool


@dataclass(frozen=True)
class VelocityBoundReport:
    rows: tuple
    satisfied: bool


@dataclass(frozen=True)
class MeanFlowReport:
    rows: tuple
    violations: int
    satisfied: bool


def window_dissipation_check(history: CylinderHistory
                             ) -> WindowDissipationReport:
    """Accumulated window dissipation against 2 sqrt(beta T e0) + 2 R e0,
    at every recorded time and every window radius."""
    rows = []
    worst = math.inf
    for i, t in enumerate(history.times):
        for r in history.radii:
            lhs = history.window_dissipation[r][i]
            rhs = (2.0 * math.sqrt(max(history.beta * t * history.e0, 0.0))
                   + 2.0 * r * history.e0)
            margin = rhs - lhs
            worst = min(worst, margin)
            rows.append(DissipationRow(t, r, lhs, rhs, margin))
    if not rows:
        worst = 0.0
    return WindowDissipationReport(tuple(rows), worst, worst >= 0.0)


def window_balance_check(history: CylinderHistory) -> WindowBalanceReport:
    """Residual of the integrated balance dE = flux in - dissipation.

    The tolerance is the calibrated dt^2 law scaled by the run length and
    the window's energy throughput; a residual above it means the recorded
    trajectory and its integrals disagree beyond discretization error.
    """
    rows = []
    for r in history.radii:
        energy = np.asarray(history.window_energy[r])
        flux = np.asarray(history.edge_flux_integral[r])
        diss = np.asarray(history.window_dissipation[r])
        resid = np.abs(energy - energy[0] - flux + diss)
        scale = 1.0 + energy[0] + diss[-1]
        tol = (KAPPA_BALANCE * history.dt ** 2
               * (1.0 + history.final_time) * scale)
        rows.append(BalanceRow(r, float(np.max(resid)), tol))
    ok = all(row.worst_residual <= row.tolerance for row in rows)
    return WindowBalanceReport(tuple(rows), ok)


def velocity_bound_check(history: CylinderHistory) -> VelocityBoundReport:
    """Velocity and streamfunction sups against their kernel-norm caps."""
    c = history.constants
    rows = []
    ok = True
    for i, t in enumerate(history.times):
        u_bound = c.c1 * history.omega_sup[i]
        v_bound = c.c2 * history.hat_l2_sup[i]
        row = VelocityRow(t, history.u_hat_sup[i], u_bound,
                          history.v_sup[i], v_bound)
        slack = 1.0e-13 * max(1.0, u_bound, v_bound)
        if row.u_sup > u_bound + slack or row.v_sup > v_bound + slack:
            ok = False
        rows.append(row)
    return VelocityBoundReport(tuple(rows), ok)


def mean_flow_bound_check(history: CylinderHistory) -> MeanFlowReport:
    """sup |m(t)| against the heat-kernel drift bound.

    The cap grows like sqrt(t) from the initial mean sup with the squared
    velocity prefactor c1^2 sup|omega(0)|^2.  Violations are counted and
    reported, never raised: a failed bound here is a finding, not a crash.
    """
    c = history.constants
    cap0 = history.m0_sup
    m_sq = history.omega0_sup ** 2
    rows = []
    violations = 0
    for t, observed in zip(history.times, history.m_sup):
        bound = cap0 + 2.0 * math.sqrt(max(t, 0.0) / math.pi) * c.c1 ** 2 * m_sq
        if observed > bound + 1.0e-12 * max(1.0, bound):
            violations += 1
        rows.append(MeanFlowRow(t, observed, bound))
    return MeanFlowReport(tuple(rows), violations, violations == 0)


# ---------------------------------------------------------------------------
# Decay statistics

class DecayMeasure(NamedTuple):
    j_alpha_measure: float
    excursion_measure: float
    k0_estimate: float


def _time_weights(times: np.ndarray, horizon: float) -> np.ndarray:
    """Lebesgue weight of each recorded sample inside [0, horizon]."""
    mids = 0.5 * (times[1:] + times[:-1])
    lo = np.concatenate([[0.0], mids])
    hi = np.concatenate([mids, [times[-1]]])
    return np.clip(hi, 0.0, horizon) - np.clip(lo, 0.0, horizon)


def decay_measure(history: CylinderHistory, alpha: float, beta_exp: float,
                  m1: float, m2: float, horizon: float) -> DecayMeasure:
    """Occupation measures of the slow-dissipation and excursion sets.

    The first measure covers times whose dissipation inside |x1| <= sqrt(T)
    stays above T^-alpha.  The second covers times where the vorticity sup
    over the narrower window |x1| <= T^((alpha+2 beta)/3) exceeds
    K0 T^-((alpha-beta)/3), with K0 the smallest constant for which that
    measure stays below K0 T^(alpha+1/2); K0 is found by bisection, so the
    reported value is empirical, certified by this trajectory only.
    """
    if not 0.0 <= alpha <= 0.5:
        raise ValueError(f"alpha must lie in [0, 1/2], got {alpha}")
    if not 0.0 <= beta_exp <= alpha:
        raise ValueError(
            f"beta_exp must lie in [0, alpha], got {beta_exp}")
    if m1 <= 0 or m2 <= 0:
        raise ValueError("regularity caps m1 and m2 must be positive")
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    if not history.times or history.final_time < horizon * (1.0 - 1.0e-9):
        raise ValueError("history does not cover the requested horizon")

    diss_radius = math.sqrt(horizon)
    sup_radius = horizon ** ((alpha + 2.0 * beta_exp) / 3.0)
    for needed in (diss_radius, sup_radius):
        if 2.0 * needed > history.length:
            raise ValueError(
                f"window radius {needed:.3g} does not fit the domain")

    times = np.asarray(history.times)
    inside = times <= horizon * (1.0 + 1.0e-12)
    times = times[inside]
    weights = _time_weights(times, horizon)

    ramp = _window_ramp(history.x1, history.dx1, diss_radius)
    diss = np.array([
        float(np.sum(ramp * d) * history.dx1)
        for d, keep in zip(history.d_profiles, inside) if keep
    ])
    j_measure = float(np.sum(weights[diss >= horizon ** (-alpha)]))

    core = np.abs(history.x1) <= sup_radius
    sups = np.array([
        float(np.max(cs[core])) if np.any(core) else 0.0
        for cs, keep in zip(history.column_sup, inside) if keep
    ])

    decay = horizon ** (-(alpha - beta_exp) / 3.0)

    def excursion(k0: float) -> float:
        return float(np.sum(weights[sups > k0 * decay]))

    budget = horizon ** (alpha + 0.5)
    hi = 2.0 * max(float(np.max(sups, initial=0.0)) / decay, 1.0)
    lo = 0.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if excursion(mid) <= mid * budget:
            hi = mid
        else:
            lo = mid
    k0 = hi
    return DecayMeasure(j_measure, excursion(k0), k0)


def measured_m1(history: CylinderHistory, burn_in: float = 1.0) -> float:
    """Peak columnwise L2 of the mixed second derivative past the burn-in.

    Early times are excluded: rough initial data regularizes on an O(1)
    time scale and would dominate the cap with transient values.
    """
    sel = [s for t, s in zip(history.times, history.mixed_sup)
           if t >= burn_in]
    if not sel:
        raise ValueError("history has no samples past the burn-in")
    return max(sel)


def fit_mean_growth(times, sups) -> tuple[float, float]:
    """Growth exponent and envelope constant for sup |m(t)|.

    Fits log sup against log(1 + t) on samples with t >= 1 and clips the
    exponent to [0, 1/2]; with too few usable samples the generic 1/2 is
    kept.  The returned constant makes sup <= m2 (1 + t)^beta hold on every
    sample, so the envelope is certified even when the fit is poor.
    """
    times = np.asarray(times, dtype=float)
    sups = np.asarray(sups, dtype=float)
    if times.shape != sups.shape or times.ndim != 1 or times.size == 0:
        raise ValueError("times and sups must be matching 1D samples")
    if np.max(sups) <= 1.0e-14:
        return 0.0, float(np.max(sups))
    usable = (times >= 1.0) & (sups > 1.0e-14)
    if np.count_nonzero(usable) >= 2:
        slope = np.polyfit(np.log1p(times[usable]),
                           np.log(sups[usable]), 1)[0]
        beta = float(np.clip(slope, 0.0, 0.5))
    else:
        beta = 0.5
    m2 = float(np.max(sups / (1.0 + times) ** beta))
    return beta, m2


# ---------------------------------------------------------------------------
# Sup bounds from integral data

@dataclass(frozen=True)
class SupBoundReport:
    bound: float
    observed_sup: float
    precondition_ok: bool


def _closed_samples(samples) -> np.ndarray:
    arr = np.asarray(samples, dtype=float)
    if arr.ndim != 1 or arr.size < 2:
        raise ValueError("need a 1D array of at least two samples")
    if not np.all(np.isfinite(arr)):
        raise ValueError("samples must be finite")
    return arr


def sup_bound_mean_gradient(samples, length: float, eps: float,
                            mean_bound: float) -> SupBoundReport:
    """Bound sup |g| by M/L + sqrt(L eps) from gradient and mean control.

    samples are g on the closed uniform grid over [0, L].  The certificates
    (integral of g'^2 at most eps, |integral of g| at most M) are re-checked
    on the samples with finite differences; by Cauchy-Schwarz the discrete
    gradient energy never exceeds the true one, so a certified input can
    never be flagged, while a clearly violating one is.
    """
    g = _closed_samples(samples)
    if length <= 0:
        raise ValueError("interval length must be positive")
    if eps < 0 or mean_bound < 0:
        raise ValueError("certificates must be nonnegative")
    h = length / (g.size - 1)
    grad_energy = float(np.sum(np.diff(g) ** 2) / h)
    mean = float(np.trapezoid(g, dx=h))
    ok = (grad_energy <= eps * (1.0 + 1.0e-9) + 1.0e-12
          and abs(mean) <= mean_bound * (1.0 + 1.0e-9) + 1.0e-12)
    bound = mean_bound / length + math.sqrt(length * eps)
    return SupBoundReport(bound, float(np.max(np.abs(g))), ok)


def sup_bound_l2_lipschitz(samples, length: float, eps: float,
                           slope_bound: float) -> SupBoundReport:
    """Bound sup |h| by max((3 M eps)^(1/3), sqrt(3 eps / L)).

    Certificates: integral of h^2 at most eps, sup |h'| at most M.  The
    discrete slope is a difference quotient and cannot exceed the true
    Lipschitz constant, so the same one-sided re-check logic applies.
    """
    hval = _closed_samples(samples)
    if length <= 0:
        raise ValueError("interval length must be positive")
    if eps < 0 or slope_bound < 0:
        raise ValueError("certificates must be nonnegative")
    h = length / (hval.size - 1)
    l2 = float(np.trapezoid(hval * hval, dx=h))
    slope = float(np.max(np.abs(np.diff(hval)))) / h
    ok = (l2 <= eps * (1.0 + 1.0e-9) + 1.0e-12
          and slope <= slope_bound * (1.0 + 1.0e-9) + 1.0e-12)
    bound = max((3.0 * slope_bound * eps) ** (1.0 / 3.0),
                math.sqrt(3.0 * eps / length))
    return SupBoundReport(bound, float(np.max(np.abs(hval))), ok)


# ---------------------------------------------------------------------------
# Initial data

def make_cylinder_initial(domain: Domain, preset: dict) -> CylinderState:
    """Starting states: shear eigenmode, pure mean-flow mode, rest, or
    band-limited random data smoothed by a short heat warmup.

    The warmup factor exp(-|k|^2 warmup) removes the under-resolved modes a
    raw noise spectrum would otherwise dump into the first few steps; with
    it, time-integrated budgets converge at the scheme's own order.
    """
    if domain.kind != "cylinder":
        raise ValueError("initial data lives on a cylinder domain")
    name = preset.get("preset", "random_smooth")
    n1, n2 = domain.shape
    length = domain.axes[0].length
    m_dom = line_domain(length, n1)
    x1 = domain.coords(0)
    x2 = domain.coords(1)
    amp = float(preset.get("amplitude", 1.0))

    if name == "rest":
        w = np.zeros(domain.shape)
        m = np.zeros(n1)
    elif name == "shear_mode":
        k = int(preset.get("k", 1))
        w = np.broadcast_to(amp * np.sin(2.0 * math.pi * k * x2),
                            domain.shape).copy()
        m = np.zeros(n1)
    elif name == "mean_mode":
        k = int(preset.get("k", 1))
        m = amp * np.sin(2.0 * math.pi * k * x1 / length)
        d1m = amp * (2.0 * math.pi * k / length) * np.cos(
            2.0 * math.pi * k * x1 / length)
        w = np.broadcast_to(d1m[:, None], domain.shape).copy()
    elif name == "random_smooth":
        seed = int(preset.get("seed", 0))
        amp = float(preset.get("amplitude", 0.5))
        warmup = float(preset.get("warmup", 0.05))
        mean_amp = float(preset.get("mean_amplitude", 0.3))
        if warmup < 0:
            raise ValueError("warmup must be nonnegative")
        sp = _spectral(domain)
        rng = make_rng(seed)
        spec = scipy.fft.fft2(rng.standard_normal(domain.shape))
        spec *= np.exp(-sp.ksq * warmup) * sp.mask
        spec[:, 0] = 0.0
        hat = scipy.fft.ifft2(spec).real
        m_spec = scipy.fft.fft(rng.standard_normal(n1))
        m_spec *= np.exp(-sp.k1v ** 2 * warmup)
        m_spec = np.where(sp.mask1, m_spec, 0.0)
        m_spec[0] = 0.0
        m = scipy.fft.ifft(m_spec).real
        peak = float(np.max(np.abs(m)))
        if peak > 0:
            m *= mean_amp / peak
        w = hat + scipy.fft.ifft(sp.ik1v * scipy.fft.fft(m)).real[:, None]
        sup = float(np.max(np.abs(w)))
        if sup > 0:
            w *= amp / sup
            m *= amp / sup
    else:
        raise ValueError(f"unknown initial data preset {name!r}")
    return CylinderState(ScalarField(domain, w), ScalarField(m_dom, m), 0.0)
