"""Dissipative model problems and their energy accounting.

Four scalar models share one stepping idiom: diffusion is treated implicitly
in the exact eigenbasis of the compact finite-difference Laplacian (FFT on
periodic axes, DCT-II on Neumann axes), everything else explicitly.  Because
the implicit solve diagonalizes the same stencil the energy triples
differentiate with, the pointwise flux inequality |f|^2 <= b(e) d holds for
the discrete fields by the same algebra as in the continuum; the slack term
only has to absorb round-off.

Time derivatives entering e, f, d are always evaluated from the discrete
right-hand side of the equation, never by differencing consecutive states.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft

from .grids import (
    Domain, EnergyTriple, ScalarField, VectorField, ball_integral, gradient,
    laplacian,
)

__all__ = [
    "InstabilityError",
    "PotentialSpec",
    "ModelState",
    "MODEL_IDS",
    "model_step",
    "energy_triple",
    "rd_energy_triple",
    "dw_energy_triple",
    "cgl_energy_triple",
    "nld_energy_triple",
    "is_near_equilibrium",
    "make_initial",
    "stable_dt",
    "make_rng",
]

MODEL_IDS = ("reaction_diffusion", "damped_wave", "ginzburg_landau",
             "nonlinear_diffusion")

AMPLITUDE_CEILING = 1.0e6
SLACK_KAPPA = 10.0
# Explicit reaction terms limit dt through the mesh, not the physics.
DT_SAFETY = 0.25


class InstabilityError(RuntimeError):
    """A step produced non-finite values or left the amplitude ceiling."""


# ---------------------------------------------------------------------------
# Potentials and conductivities

@dataclass(frozen=True)
class PotentialSpec:
    """Nonnegative on-site potential V(u) for the gradient-flow models."""

    kind: str = "double_well"
    params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in ("double_well", "quadratic_tail", "custom_table"):
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if self.kind == "quadratic_tail" and self.params.get("mass", 1.0) <= 0:
            raise ValueError("quadratic_tail needs a positive mass")
        if self.kind == "custom_table":
            v = np.asarray(self.params["V"], dtype=float)
            if v.ndim != 1 or v.size < 4:
                raise ValueError("custom_table needs at least 4 samples")
            if np.min(v) < 0:
                raise ValueError("potential table must be nonnegative")

    def V(self, u: np.ndarray) -> np.ndarray:
        if self.kind == "double_well":
            return 0.25 * (1.0 - u * u) ** 2
        if self.kind == "quadratic_tail":
            return 0.5 * self.params.get("mass", 1.0) * u * u
        table_u = np.asarray(self.params["u"], dtype=float)
        table_v = np.asarray(self.params["V"], dtype=float)
        return np.interp(u, table_u, table_v)

    def dV(self, u: np.ndarray) -> np.ndarray:
        if self.kind == "double_well":
            return u * u * u - u
        if self.kind == "quadratic_tail":
            return self.params.get("mass", 1.0) * u
        table_u = np.asarray(self.params["u"], dtype=float)
        table_v = np.asarray(self.params["V"], dtype=float)
        slopes = np.gradient(table_v, table_u)
        return np.interp(u, table_u, slopes)


def _potential(params: dict) -> PotentialSpec:
    spec = params.get("potential")
    if spec is None:
        return PotentialSpec()
    if isinstance(spec, PotentialSpec):
        return spec
    return PotentialSpec(spec.get("kind", "double_well"),
                         {k: v for k, v in spec.items() if k != "kind"})


def _conductivity(params: dict, u: np.ndarray) -> np.ndarray:
    coeffs = params.get("a_coeffs", (1.0,))
    a = np.polynomial.polynomial.polyval(u, np.asarray(coeffs, dtype=float))
    if np.min(a) <= 0:
        raise ValueError(
            f"conductivity must stay positive; min a = {np.min(a):.3e}")
    return np.asarray(a, dtype=float)


def _conductivity_envelope(params: dict, s: np.ndarray) -> np.ndarray:
    """sup of a over [-sigma, sigma] for each sigma in s, conservatively."""
    coeffs = np.asarray(params.get("a_coeffs", (1.0,)), dtype=float)
    s_max = float(np.max(s)) if s.size else 1.0
    grid = np.linspace(0.0, max(s_max, 1e-12) * (1.0 + 1e-9), 2049)
    samples = np.maximum(
        np.polynomial.polynomial.polyval(grid, coeffs),
        np.polynomial.polynomial.polyval(-grid, coeffs))
    env = np.maximum.accumulate(samples)
    idx = np.minimum(np.ceil(s / grid[-1] * 2048).astype(int), 2048)
    return env[idx]


# ---------------------------------------------------------------------------
# States

@dataclass(frozen=True)
class ModelState:
    model_id: str
    domain: Domain
    fields: dict
    params: dict
    time: float = 0.0

    def __post_init__(self) -> None:
        if self.model_id not in MODEL_IDS:
            raise ValueError(f"unknown model {self.model_id!r}")
        expected = {
            "reaction_diffusion": ("u",),
            "damped_wave": ("u", "w"),
            "ginzburg_landau": ("re", "im"),
            "nonlinear_diffusion": ("u",),
        }[self.model_id]
        if tuple(sorted(self.fields)) != tuple(sorted(expected)):
            raise ValueError(
                f"{self.model_id} needs fields {expected}, got "
                f"{tuple(sorted(self.fields))}")
        for name, arr in self.fields.items():
            arr = np.asarray(arr, dtype=float)
            if arr.shape != self.domain.shape:
                raise ValueError(f"field {name} shape {arr.shape} does not "
                                 f"match domain {self.domain.shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"field {name} contains non-finite values")
            self.fields[name] = arr

    def sup_amplitude(self) -> float:
        return max(float(np.max(np.abs(a))) for a in self.fields.values())


def stable_dt(domain: Domain, dt_max: float = 0.1) -> float:
    """Step size keeping the explicit terms within their stability region."""
    dx = min(domain.spacing)
    return min(DT_SAFETY * dx * dx, dt_max)


# ---------------------------------------------------------------------------
# Eigenbasis transforms for the implicit solves

def _axis_eigenvalues(domain: Domain) -> list[np.ndarray]:
    lams = []
    for ax in domain.axes:
        k = np.arange(ax.count)
        if ax.boundary == "periodic":
            lam = -(2.0 / ax.spacing ** 2) * (1.0 - np.cos(2.0 * np.pi * k / ax.count))
        else:
            lam = -(2.0 / ax.spacing ** 2) * (1.0 - np.cos(np.pi * k / ax.count))
        lams.append(lam)
    return lams


def _eigen_sum(domain: Domain) -> np.ndarray:
    lams = _axis_eigenvalues(domain)
    total = lams[0]
    if domain.n_dim == 2:
        total = lams[0][:, None] + lams[1][None, :]
    return total


def _dct_any(values: np.ndarray, axis: int, inverse: bool) -> np.ndarray:
    fn = scipy.fft.idct if inverse else scipy.fft.dct
    if np.iscomplexobj(values):
        return fn(values.real, type=2, axis=axis) \
            + 1j * fn(values.imag, type=2, axis=axis)
    return fn(values, type=2, axis=axis)


def _forward(domain: Domain, values: np.ndarray) -> np.ndarray:
    out = values
    for ax_i, ax in enumerate(domain.axes):
        if ax.boundary == "periodic":
            out = scipy.fft.fft(out, axis=ax_i)
        else:
            out = _dct_any(out, ax_i, inverse=False)
    return out


def _backward(domain: Domain, coeffs: np.ndarray) -> np.ndarray:
    out = coeffs
    for ax_i, ax in enumerate(domain.axes):
        if ax.boundary == "periodic":
            out = scipy.fft.ifft(out, axis=ax_i)
        else:
            out = _dct_any(out, ax_i, inverse=True)
    return out


def _helmholtz(domain: Domain, rhs: np.ndarray, coeff: complex) -> np.ndarray:
    """(I - coeff * Laplacian)^{-1} rhs, exact for the compact stencil."""
    lam = _eigen_sum(domain)
    out = _backward(domain, _forward(domain, rhs) / (1.0 - coeff * lam))
    return out if np.iscomplexobj(rhs) else np.real(out)


# ---------------------------------------------------------------------------
# Steppers

def _conservative_div(domain: Domain, u: np.ndarray, a: np.ndarray) -> np.ndarray:
    """div(a grad u) in flux form with face-averaged conductivities.

    Mirror ghosts make the flux through a Neumann wall vanish, so the scheme
    conserves the integral of u on any closed domain.
    """
    from .grids import _shift

    acc = np.zeros(domain.shape)
    for ax_i, ax in enumerate(domain.axes):
        up_u = _shift(u, ax_i, +1, ax.boundary)
        dn_u = _shift(u, ax_i, -1, ax.boundary)
        up_a = _shift(a, ax_i, +1, ax.boundary)
        dn_a = _shift(a, ax_i, -1, ax.boundary)
        hi = 0.5 * (a + up_a) * (up_u - u)
        lo = 0.5 * (dn_a + a) * (u - dn_u)
        acc += (hi - lo) / ax.spacing ** 2
    return acc


def _lap(domain: Domain, values: np.ndarray) -> np.ndarray:
    return laplacian(ScalarField(domain, values)).values


def _step_reaction_diffusion(state: ModelState, dt: float) -> dict:
    u = state.fields["u"]
    pot = _potential(state.params)
    rhs = u - dt * pot.dV(u)
    return {"u": _helmholtz(state.domain, rhs, dt)}


def _step_damped_wave(state: ModelState, dt: float) -> dict:
    u, w = state.fields["u"], state.fields["w"]
    alpha = float(state.params.get("alpha", 0.0))
    pot = _potential(state.params)
    explicit = w + dt * (_lap(state.domain, u) - pot.dV(u) - w)
    w_new = _helmholtz(state.domain, explicit, dt * alpha) if alpha > 0 else explicit
    return {"u": u + dt * w_new, "w": w_new}


def _step_ginzburg_landau(state: ModelState, dt: float) -> dict:
    v = state.fields["re"] + 1j * state.fields["im"]
    alpha = float(state.params.get("alpha", 0.0))
    mu = 1.0 + 1j * alpha
    rhs = v + dt * mu * (v - np.abs(v) ** 2 * v)
    v_new = _helmholtz(state.domain, rhs, dt * mu)
    return {"re": v_new.real, "im": v_new.imag}


def _step_nonlinear_diffusion(state: ModelState, dt: float) -> dict:
    u = state.fields["u"]
    a = _conductivity(state.params, u)
    a_bar = float(np.max(a))
    rhs = u + dt * (_conservative_div(state.domain, u, a) - a_bar * _lap(state.domain, u))
    return {"u": _helmholtz(state.domain, rhs, dt * a_bar)}


_STEPPERS = {
    "reaction_diffusion": _step_reaction_diffusion,
    "damped_wave": _step_damped_wave,
    "ginzburg_landau": _step_ginzburg_landau,
    "nonlinear_diffusion": _step_nonlinear_diffusion,
}


def model_step(state: ModelState, dt: float) -> ModelState:
    """Advance one step; raises InstabilityError on blow-up or NaN."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    new_fields = _STEPPERS[state.model_id](state, dt)
    for name, arr in new_fields.items():
        if not np.all(np.isfinite(arr)):
            raise InstabilityError(
                f"{state.model_id} produced non-finite {name} at "
                f"t={state.time + dt:.6g}")
        if np.max(np.abs(arr)) > AMPLITUDE_CEILING:
            raise InstabilityError(
                f"{state.model_id} amplitude exceeded {AMPLITUDE_CEILING:g} "
                f"at t={state.time + dt:.6g}")
    return ModelState(state.model_id, state.domain, new_fields, state.params,
                      state.time + dt)


# ---------------------------------------------------------------------------
# Energy triples

def _slack(domain: Domain, e: np.ndarray, dt: float) -> np.ndarray:
    dx = min(domain.spacing)
    grad_e = gradient(ScalarField(domain, e)).components
    mag = np.sqrt(sum(c * c for c in grad_e))
    return SLACK_KAPPA * (dx * dx + dt) * (1.0 + mag)


def rd_energy_triple(state: ModelState, dt: float = 0.0) -> EnergyTriple:
    """e = |grad u|^2/2 + V(u), f = u_t grad u, d = u_t^2, b(e) = 2e."""
    dom = state.domain
    u = state.fields["u"]
    pot = _potential(state.params)
    grad_u = gradient(ScalarField(dom, u, state.time))
    u_t = _lap(dom, u) - pot.dV(u)
    e = 0.5 * sum(c * c for c in grad_u.components) + pot.V(u)
    f = tuple(u_t * c for c in grad_u.components)
    d = u_t * u_t
    return EnergyTriple(
        ScalarField(dom, e, state.time),
        VectorField(dom, f, state.time),
        ScalarField(dom, d, state.time),
        b_values=2.0 * e,
        slack=_slack(dom, e, dt),
    )


def dw_energy_triple(state: ModelState, dt: float = 0.0) -> EnergyTriple:
    """e = w^2/2 + |grad u|^2/2 + V(u), f = w (grad u + alpha grad w),
    d = w^2 + alpha |grad w|^2, b(e) = 2 max(1, alpha) e."""
    dom = state.domain
    u, w = state.fields["u"], state.fields["w"]
    alpha = float(state.params.get("alpha", 0.0))
    pot = _potential(state.params)
    grad_u = gradient(ScalarField(dom, u, state.time)).components
    grad_w = gradient(ScalarField(dom, w, state.time)).components
    e = 0.5 * w * w + 0.5 * sum(c * c for c in grad_u) + pot.V(u)
    f = tuple(w * (gu + alpha * gw) for gu, gw in zip(grad_u, grad_w))
    d = w * w + alpha * sum(c * c for c in grad_w)
    return EnergyTriple(
        ScalarField(dom, e, state.time),
        VectorField(dom, f, state.time),
        ScalarField(dom, d, state.time),
        b_values=2.0 * max(1.0, alpha) * e,
        slack=_slack(dom, e, dt),
    )


def cgl_energy_triple(state: ModelState, dt: float = 0.0) -> EnergyTriple:
    """e = |grad v|^2/2 + (1-|v|^2)^2/4, f = Re(v_t grad conj(v)),
    d = |v_t|^2/(1+alpha^2), b(e) = 2(1+alpha^2) e."""
    dom = state.domain
    re, im = state.fields["re"], state.fields["im"]
    alpha = float(state.params.get("alpha", 0.0))
    v = re + 1j * im
    v_t = (1.0 + 1j * alpha) * (
        _lap(dom, re) + 1j * _lap(dom, im) + v - np.abs(v) ** 2 * v)
    grad_re = gradient(ScalarField(dom, re, state.time)).components
    grad_im = gradient(ScalarField(dom, im, state.time)).components
    e = 0.5 * sum(c * c for c in grad_re) + 0.5 * sum(c * c for c in grad_im) \
        + 0.25 * (1.0 - np.abs(v) ** 2) ** 2
    f = tuple(v_t.real * gr + v_t.imag * gi for gr, gi in zip(grad_re, grad_im))
    d = np.abs(v_t) ** 2 / (1.0 + alpha * alpha)
    return EnergyTriple(
        ScalarField(dom, e, state.time),
        VectorField(dom, f, state.time),
        ScalarField(dom, d, state.time),
        b_values=2.0 * (1.0 + alpha * alpha) * e,
        slack=_slack(dom, e, dt),
    )


def nld_energy_triple(state: ModelState, dt: float = 0.0) -> EnergyTriple:
    """e = u^2/2, f = u a(u) grad u, d = a(u) |grad u|^2,
    b(e) = 2e sup{a(s) : s^2 <= 2e}."""
    dom = state.domain
    u = state.fields["u"]
    a = _conductivity(state.params, u)
    grad_u = gradient(ScalarField(dom, u, state.time)).components
    e = 0.5 * u * u
    f = tuple(u * a * c for c in grad_u)
    d = a * sum(c * c for c in grad_u)
    b = 2.0 * e * _conductivity_envelope(state.params, np.abs(u))
    return EnergyTriple(
        ScalarField(dom, e, state.time),
        VectorField(dom, f, state.time),
        ScalarField(dom, d, state.time),
        b_values=b,
        slack=_slack(dom, e, dt),
    )


_TRIPLES = {
    "reaction_diffusion": rd_energy_triple,
    "damped_wave": dw_energy_triple,
    "ginzburg_landau": cgl_energy_triple,
    "nonlinear_diffusion": nld_energy_triple,
}


def energy_triple(state: ModelState, dt: float = 0.0) -> EnergyTriple:
    return _TRIPLES[state.model_id](state, dt)


def is_near_equilibrium(state: ModelState, epsilon: float, radius: float,
                        center=None) -> bool:
    """True when the dissipation mass in the ball falls below epsilon."""
    triple = energy_triple(state)
    return ball_integral(triple.d, radius, center) < epsilon


# ---------------------------------------------------------------------------
# Initial data

def make_rng(seed: int) -> np.random.Generator:
    # Counter-based so that checkpointed runs can replay draws exactly.
    return np.random.Generator(np.random.Philox(seed))


def _kink(x: np.ndarray) -> np.ndarray:
    return np.tanh(x / np.sqrt(2.0))


def _random_smooth(domain: Domain, seed: int, amplitude: float,
                   correlation_length: float) -> np.ndarray:
    rng = make_rng(seed)
    noise = rng.standard_normal(domain.shape)
    lam = _eigen_sum(domain)
    filt = np.exp(0.5 * lam * correlation_length ** 2)  # lam <= 0
    smooth = np.real(_backward(domain, _forward(domain, noise) * filt))
    peak = np.max(np.abs(smooth))
    if peak == 0:
        return smooth
    return amplitude * smooth / peak


def _scalar_preset(domain: Domain, preset: dict) -> np.ndarray:
    name = preset.get("preset", "constant")
    if name == "constant":
        return np.full(domain.shape, float(preset.get("value", 0.0)))
    if name == "eigenmode":
        ks = preset.get("k", [1] * domain.n_dim)
        if np.isscalar(ks):
            ks = [ks] * domain.n_dim
        amp = float(preset.get("amplitude", 1.0))
        out = np.full(domain.shape, amp)
        mesh = domain.mesh()
        for ax_i, ax in enumerate(domain.axes):
            k = int(ks[ax_i])
            if ax.boundary == "periodic":
                out = out * np.sin(2.0 * np.pi * k * mesh[ax_i] / ax.length)
            else:
                out = out * np.cos(np.pi * k * (mesh[ax_i] + 0.5 * ax.length)
                                   / ax.length)
        return out
    if domain.n_dim != 1 and name in ("kink", "kink_pair", "kink_lattice"):
        raise ValueError(f"{name} initial data is one-dimensional")
    x = domain.mesh()[0] if domain.n_dim == 1 else None
    if name == "kink":
        return _kink(x - float(preset.get("center", 0.0)))
    if name == "kink_pair":
        a = float(preset["a"])
        return _kink(x - a) - _kink(x + a) + 1.0
    if name == "kink_lattice":
        shells = [float(b) for b in preset["b"]]
        if sorted(shells) != shells:
            raise ValueError("kink_lattice shells must increase")
        out = -np.ones_like(x)
        for i, b in enumerate(shells):
            sign = 1.0 if i % 2 == 0 else -1.0
            out = out + sign * (1.0 + _kink(np.abs(x) - b))
        return out
    if name == "random_smooth":
        return _random_smooth(domain, int(preset.get("seed", 0)),
                              float(preset.get("amplitude", 1.0)),
                              float(preset.get("correlation_length", 1.0)))
    raise ValueError(f"unknown initial data preset {name!r}")


def make_initial(model_id: str, domain: Domain, preset: dict,
                 params: dict | None = None) -> ModelState:
    """Build the starting state for a model from a preset description."""
    params = dict(params or {})
    if model_id == "damped_wave":
        fields = {"u": _scalar_preset(domain, preset),
                  "w": np.zeros(domain.shape)}
    elif model_id == "ginzburg_landau":
        name = preset.get("preset", "constant")
        if name == "random_smooth":
            base = int(preset.get("seed", 0))
            re = _random_smooth(domain, 2 * base,
                                float(preset.get("amplitude", 1.0)),
                                float(preset.get("correlation_length", 1.0)))
            im = _random_smooth(domain, 2 * base + 1,
                                float(preset.get("amplitude", 1.0)),
                                float(preset.get("correlation_length", 1.0)))
            fields = {"re": re, "im": im}
        else:
            fields = {"re": _scalar_preset(domain, preset),
                      "im": np.zeros(domain.shape)}
    else:
        fields = {"u": _scalar_preset(domain, preset)}
    return ModelState(model_id, domain, fields, params, 0.0)
