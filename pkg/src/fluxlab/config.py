"""Scenario descriptions: the YAML schema and its validator.

A scenario file is one YAML mapping describing one experiment end to end.
Top-level keys (schema_version 1):

    schema_version   required, must be 1
    name             filesystem-safe token naming the run
    model            reaction_diffusion | damped_wave | ginzburg_landau |
                     nonlinear_diffusion | vorticity
    domain           kind (line | plane | cylinder), lengths, counts, and
                     boundaries per axis; cylinder takes lengths [L1] and
                     counts [n1, n2], both axes fixed periodic
    initial          preset name plus its parameters (a, b, k, amplitude,
                     seed, correlation_length, warmup, ...)
    params           model parameters: potential, alpha, a_coeffs
    time             dt, t_final, record_every (steps per record,
                     default 1), checkpoint_every (steps per checkpoint,
                     default 0 = none)
    radii            strictly increasing observation radii
    bounds           "all" (default) or the dissipation-family bound kinds
                     to check; flux bounds are always checked
    tolerances       balance_kappa, slack_kappa, asymptotic_slack,
                     report_tol, all positive
    contamination_pad  clearance subtracted from L/2 on truncated neumann
                     axes (default 2.0)
    occupancy        optional: radius, observation_radius, reference preset
                     (reference defaults to the run's own initial data)
    snapshot_every   records between state snapshots (default 0 = none)
    decay            optional (vorticity): alpha for the decay measures
    seed             default RNG seed, overridable on the command line
    output_dir       run directory name (default: name)

Validation aggregates every defect instead of stopping at the first one;
each message starts with the offending key.  Radii on truncated neumann
axes must satisfy R + sqrt(t_final) <= L/2 - contamination_pad so that no
diagnostic ball ever sees boundary reflections; on periodic axes the ball
only has to fit (R <= L/2).
"""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass, field

import yaml

from .diagnostics import BOUND_KINDS, DEFAULT_OBSERVATION_RADIUS
from .grids import Domain, cylinder_domain, line_domain, plane_domain
from .models import MODEL_IDS, PotentialSpec, stable_dt

__all__ = [
    "SCHEMA_VERSION",
    "ConfigError",
    "ScenarioConfig",
    "validate_config",
    "load_config",
    "config_digest",
]

SCHEMA_VERSION = 1

DEFAULT_TOLERANCES = {
    "balance_kappa": 500.0,
    "slack_kappa": 10.0,
    "asymptotic_slack": 0.5,
    "report_tol": 1.0e-6,
}
DEFAULT_CONTAMINATION_PAD = 2.0
DEFAULT_DECAY_ALPHA = 0.25

_SCALAR_PRESETS = ("constant", "eigenmode", "kink", "kink_pair",
                   "kink_lattice", "random_smooth")
_CYLINDER_PRESETS = ("rest", "shear_mode", "mean_mode", "random_smooth")
# Parameters each stepper actually reads; anything else is a typo.
_MODEL_PARAM_KEYS = {
    "reaction_diffusion": {"potential"},
    "damped_wave": {"alpha", "potential"},
    "ginzburg_landau": {"alpha"},
    "nonlinear_diffusion": {"a_coeffs"},
    "vorticity": set(),
}
_TOP_KEYS = {
    "schema_version", "name", "model", "domain", "initial", "params",
    "time", "radii", "bounds", "tolerances", "contamination_pad",
    "occupancy", "snapshot_every", "decay", "seed", "output_dir",
}
_NAME_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9_.-]*$")


class ConfigError(ValueError):
    """Raised with the full list of validation failures."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


@dataclass(frozen=True)
class ScenarioConfig:
    """One validated experiment description."""

    name: str
    model: str
    domain: Domain
    initial: dict
    params: dict = field(default_factory=dict)
    dt: float = 0.0
    t_final: float = 0.0
    record_every: int = 1
    checkpoint_every: int = 0
    radii: tuple = ()
    bounds: tuple | None = None
    balance_kappa: float = DEFAULT_TOLERANCES["balance_kappa"]
    slack_kappa: float = DEFAULT_TOLERANCES["slack_kappa"]
    asymptotic_slack: float = DEFAULT_TOLERANCES["asymptotic_slack"]
    report_tol: float = DEFAULT_TOLERANCES["report_tol"]
    contamination_pad: float = DEFAULT_CONTAMINATION_PAD
    occupancy: dict | None = None
    snapshot_every: int = 0
    decay_alpha: float = DEFAULT_DECAY_ALPHA
    seed: int = 0
    output_dir: str = ""

    @property
    def is_vorticity(self) -> bool:
        return self.model == "vorticity"

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.t_final / self.dt)))

    @property
    def wants_census(self) -> bool:
        # The crossing census only means something for the scalar
        # double-well dynamics on a line.
        return (self.model == "reaction_diffusion"
                and self.domain.n_dim == 1)


class _Collector:
    def __init__(self) -> None:
        self.errors: list[str] = []

    def add(self, key: str, constraint: str) -> None:
        self.errors.append(f"{key}: {constraint}")


def _as_number(raw, key: str, errs: _Collector, *, positive=False,
               nonnegative=False, default=None):
    if raw is None:
        return default
    if isinstance(raw, bool) or not isinstance(raw, (int, float)):
        errs.add(key, f"must be a number, got {raw!r}")
        return default
    value = float(raw)
    if positive and value <= 0:
        errs.add(key, f"must be positive, got {raw}")
        return default
    if nonnegative and value < 0:
        errs.add(key, f"must be nonnegative, got {raw}")
        return default
    return value


def _as_int(raw, key: str, errs: _Collector, *, minimum: int,
            default=None):
    if raw is None:
        return default
    if isinstance(raw, bool) or not isinstance(raw, int):
        errs.add(key, f"must be an integer, got {raw!r}")
        return default
    if raw < minimum:
        errs.add(key, f"must be at least {minimum}, got {raw}")
        return default
    return raw


def _domain_from(raw, errs: _Collector) -> Domain | None:
    if not isinstance(raw, dict):
        errs.add("domain", "must be a mapping with kind, lengths, counts")
        return None
    kind = raw.get("kind")
    if kind not in ("line", "plane", "cylinder"):
        errs.add("domain.kind", f"must be line, plane, or cylinder, "
                                f"got {kind!r}")
        return None
    unknown = set(raw) - {"kind", "lengths", "counts", "boundaries"}
    for key in sorted(unknown):
        errs.add(f"domain.{key}", "unknown key")
    lengths = raw.get("lengths")
    counts = raw.get("counts")
    boundaries = raw.get("boundaries")
    try:
        if kind == "line":
            (length,) = lengths
            (count,) = counts
            boundary = "periodic" if boundaries is None else boundaries[0]
            return line_domain(float(length), int(count), boundary)
        if kind == "plane":
            if boundaries is None:
                boundaries = ("periodic", "periodic")
            return plane_domain([float(v) for v in lengths],
                                [int(v) for v in counts],
                                tuple(boundaries))
        if boundaries is not None:
            errs.add("domain.boundaries",
                     "cylinder axes are fixed periodic; drop this key")
            return None
        (length,) = lengths
        n1, n2 = counts
        return cylinder_domain(float(length), int(n1), int(n2))
    except (TypeError, ValueError) as exc:
        errs.add("domain", str(exc))
        return None


def _check_initial(raw, model: str, domain: Domain | None,
                   errs: _Collector, key: str = "initial") -> dict:
    if not isinstance(raw, dict):
        errs.add(key, "must be a mapping with a preset name")
        return {}
    preset = raw.get("preset")
    allowed = _CYLINDER_PRESETS if model == "vorticity" else _SCALAR_PRESETS
    if preset not in allowed:
        errs.add(f"{key}.preset",
                 f"must be one of {', '.join(allowed)}, got {preset!r}")
        return dict(raw)
    if preset in ("kink", "kink_pair", "kink_lattice"):
        if domain is not None and domain.kind != "line":
            errs.add(f"{key}.preset", f"{preset} data is one-dimensional")
    if preset == "kink_pair":
        _as_number(raw.get("a"), f"{key}.a", errs, positive=True)
        if "a" not in raw:
            errs.add(f"{key}.a", "kink_pair needs the half-separation a")
    if preset == "kink_lattice":
        shells = raw.get("b")
        if (not isinstance(shells, list) or len(shells) < 1
                or any(isinstance(b, bool)
                       or not isinstance(b, (int, float)) for b in shells)):
            errs.add(f"{key}.b", "kink_lattice needs a list of shell radii")
        elif sorted(shells) != shells or shells[0] <= 0:
            errs.add(f"{key}.b", "shell radii must be positive and increasing")
    if preset == "random_smooth":
        _as_number(raw.get("amplitude"), f"{key}.amplitude", errs,
                   positive=True)
        _as_number(raw.get("correlation_length"),
                   f"{key}.correlation_length", errs, positive=True)
        _as_number(raw.get("warmup"), f"{key}.warmup", errs,
                   nonnegative=True)
        _as_int(raw.get("seed"), f"{key}.seed", errs, minimum=0)
    return dict(raw)


def _check_params(raw, model: str, errs: _Collector) -> dict:
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        errs.add("params", "must be a mapping of model parameters")
        return {}
    allowed = _MODEL_PARAM_KEYS[model]
    for key in sorted(set(raw) - allowed):
        errs.add(f"params.{key}",
                 f"not a parameter of {model}"
                 + (f" (expects {', '.join(sorted(allowed))})"
                    if allowed else " (takes none)"))
    if "potential" in raw and "potential" in allowed:
        spec = raw["potential"]
        if not isinstance(spec, dict):
            errs.add("params.potential", "must be a mapping with a kind")
        else:
            try:
                PotentialSpec(spec.get("kind", "double_well"),
                              {k: v for k, v in spec.items() if k != "kind"})
            except (KeyError, ValueError) as exc:
                errs.add("params.potential", str(exc))
    if "alpha" in raw and "alpha" in allowed:
        _as_number(raw["alpha"], "params.alpha", errs, nonnegative=True)
    if "a_coeffs" in raw and "a_coeffs" in allowed:
        coeffs = raw["a_coeffs"]
        if (not isinstance(coeffs, list) or not coeffs
                or any(isinstance(c, bool)
                       or not isinstance(c, (int, float)) for c in coeffs)):
            errs.add("params.a_coeffs",
                     "must be a list of polynomial coefficients")
    return dict(raw)


def _check_radii(raw, domain: Domain | None, model: str, t_final,
                 pad, errs: _Collector) -> tuple:
    if (not isinstance(raw, list) or not raw
            or any(isinstance(r, bool)
                   or not isinstance(r, (int, float)) for r in raw)):
        errs.add("radii", "must be a nonempty list of numbers")
        return ()
    radii = tuple(float(r) for r in raw)
    if any(r <= 0 for r in radii) or list(radii) != sorted(set(radii)):
        errs.add("radii", "must be positive and strictly increasing")
        return radii
    if domain is None or t_final is None or pad is None:
        return radii
    r_max = radii[-1]
    axes = domain.axes[:1] if model == "vorticity" else domain.axes
    for i, ax in enumerate(axes):
        if ax.boundary == "neumann":
            allowed = 0.5 * ax.length - pad - math.sqrt(t_final)
            if r_max > allowed * (1.0 + 1.0e-12):
                errs.add("radii",
                         f"ladder violates the contamination margin on "
                         f"axis {i}: R + sqrt(t_final) = "
                         f"{r_max + math.sqrt(t_final):.6g} exceeds "
                         f"L/2 - pad = {0.5 * ax.length - pad:.6g}")
                break
        elif r_max > 0.5 * ax.length * (1.0 + 1.0e-12):
            errs.add("radii",
                     f"ball of radius {r_max:g} does not fit the periodic "
                     f"axis {i} (limit L/2 = {0.5 * ax.length:g})")
            break
    return radii


def _check_occupancy(raw, model: str, domain: Domain | None,
                     errs: _Collector) -> dict | None:
    if raw is None:
        return None
    if model == "vorticity":
        errs.add("occupancy", "only defined for the scalar models")
        return None
    if not isinstance(raw, dict):
        errs.add("occupancy", "must be a mapping")
        return None
    for key in sorted(set(raw) - {"radius", "observation_radius",
                                  "reference"}):
        errs.add(f"occupancy.{key}", "unknown key")
    out = {
        "radius": _as_number(raw.get("radius"), "occupancy.radius", errs,
                             positive=True),
        "observation_radius": _as_number(
            raw.get("observation_radius"), "occupancy.observation_radius",
            errs, positive=True, default=DEFAULT_OBSERVATION_RADIUS),
    }
    if out["radius"] is None:
        errs.add("occupancy.radius", "required (neighborhood size)")
    reference = raw.get("reference")
    if reference is None:
        out["reference"] = None
    else:
        out["reference"] = _check_initial(reference, model, domain, errs,
                                          key="occupancy.reference")
    return out


def validate_config(text: str) -> ScenarioConfig:
    """Parse and validate one scenario; raises ConfigError with every
    defect found, each message naming the offending key."""
    errs = _Collector()
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError([f"config: not parseable YAML ({exc})"]) from exc
    if not isinstance(raw, dict):
        raise ConfigError(["config: top level must be a mapping"])

    for key in sorted(set(raw) - _TOP_KEYS):
        errs.add(key, "unknown key")

    version = raw.get("schema_version")
    if version != SCHEMA_VERSION:
        errs.add("schema_version",
                 f"expected {SCHEMA_VERSION}, got {version!r}")

    name = raw.get("name")
    if not isinstance(name, str) or not _NAME_RE.match(name or ""):
        errs.add("name", "must be a filesystem-safe token "
                         "(letters, digits, _ . -)")
        name = ""

    model = raw.get("model")
    if model not in MODEL_IDS + ("vorticity",):
        errs.add("model", f"must be one of {', '.join(MODEL_IDS)}, "
                          f"or vorticity; got {model!r}")
        model = None

    domain = _domain_from(raw.get("domain"), errs)
    if domain is not None and model is not None:
        if model == "vorticity" and domain.kind != "cylinder":
            errs.add("domain.kind", "vorticity runs need a cylinder domain")
        if model != "vorticity" and domain.kind == "cylinder":
            errs.add("domain.kind",
                     f"{model} runs need a line or plane domain")

    initial_raw = raw.get("initial")
    initial = dict(initial_raw) if isinstance(initial_raw, dict) else {}
    params = {}
    if model is not None:
        initial = _check_initial(raw.get("initial"), model, domain, errs)
        params = _check_params(raw.get("params"), model, errs)

    time_block = raw.get("time")
    dt = t_final = None
    record_every, checkpoint_every = 1, 0
    if not isinstance(time_block, dict):
        errs.add("time", "must be a mapping with dt and t_final")
    else:
        for key in sorted(set(time_block) - {"dt", "t_final",
                                             "record_every",
                                             "checkpoint_every"}):
            errs.add(f"time.{key}", "unknown key")
        dt = _as_number(time_block.get("dt"), "time.dt", errs,
                        positive=True)
        if "dt" not in time_block:
            errs.add("time.dt", "required")
        t_final = _as_number(time_block.get("t_final"), "time.t_final",
                             errs, positive=True)
        if "t_final" not in time_block:
            errs.add("time.t_final", "required")
        record_every = _as_int(time_block.get("record_every"),
                               "time.record_every", errs, minimum=1,
                               default=1)
        checkpoint_every = _as_int(time_block.get("checkpoint_every"),
                                   "time.checkpoint_every", errs,
                                   minimum=0, default=0)
    if dt is not None and t_final is not None and t_final < dt:
        errs.add("time.t_final", f"must be at least dt = {dt:g}")
    if (dt is not None and domain is not None and model is not None
            and model != "vorticity"):
        cap = stable_dt(domain, dt_max=math.inf)
        if dt > cap * (1.0 + 1.0e-12):
            errs.add("time.dt",
                     f"exceeds the stability cap 0.25*dx^2 = {cap:.6g} "
                     f"for the explicit terms of {model}")
    if (t_final is not None and domain is not None and model == "vorticity"
            and domain.kind == "cylinder"):
        length = domain.axes[0].length
        if 2.0 * math.sqrt(t_final) > length * (1.0 + 1.0e-12):
            errs.add("time.t_final",
                     f"decay window 2*sqrt(t_final) = "
                     f"{2.0 * math.sqrt(t_final):.6g} exceeds the cylinder "
                     f"circumference {length:g}")
    if record_every and checkpoint_every:
        if checkpoint_every % record_every != 0:
            errs.add("time.checkpoint_every",
                     f"must be a multiple of record_every = {record_every} "
                     f"so resumed recording stays aligned")
        if model == "vorticity":
            errs.add("time.checkpoint_every",
                     "checkpointing is not supported for vorticity runs")

    pad = _as_number(raw.get("contamination_pad"), "contamination_pad",
                     errs, nonnegative=True,
                     default=DEFAULT_CONTAMINATION_PAD)
    radii = _check_radii(raw.get("radii"), domain, model, t_final, pad,
                         errs)

    bounds_raw = raw.get("bounds", "all")
    bounds: tuple | None = None
    if bounds_raw != "all":
        if (not isinstance(bounds_raw, list)
                or any(not isinstance(b, str) for b in bounds_raw)):
            errs.add("bounds", 'must be "all" or a list of bound kinds')
        else:
            unknown = sorted(set(bounds_raw) - BOUND_KINDS)
            for kind in unknown:
                errs.add("bounds", f"unknown bound kind {kind!r} (known: "
                                   f"{', '.join(sorted(BOUND_KINDS))})")
            bounds = tuple(bounds_raw)

    tol = dict(DEFAULT_TOLERANCES)
    tol_block = raw.get("tolerances")
    if tol_block is not None:
        if not isinstance(tol_block, dict):
            errs.add("tolerances", "must be a mapping")
        else:
            for key in sorted(set(tol_block) - set(DEFAULT_TOLERANCES)):
                errs.add(f"tolerances.{key}", "unknown key")
            for key in DEFAULT_TOLERANCES:
                if key in tol_block:
                    value = _as_number(tol_block[key],
                                       f"tolerances.{key}", errs,
                                       positive=True)
                    if value is not None:
                        tol[key] = value

    occupancy = _check_occupancy(raw.get("occupancy"), model, domain, errs)
    snapshot_every = _as_int(raw.get("snapshot_every"), "snapshot_every",
                             errs, minimum=0, default=0)

    decay_alpha = DEFAULT_DECAY_ALPHA
    decay_block = raw.get("decay")
    if decay_block is not None and model is not None:
        if model != "vorticity":
            errs.add("decay", "only defined for vorticity runs")
        elif not isinstance(decay_block, dict):
            errs.add("decay", "must be a mapping")
        else:
            for key in sorted(set(decay_block) - {"alpha"}):
                errs.add(f"decay.{key}", "unknown key")
            value = _as_number(decay_block.get("alpha"), "decay.alpha",
                               errs, nonnegative=True)
            if value is not None:
                if value > 0.5:
                    errs.add("decay.alpha", "must lie in [0, 1/2]")
                else:
                    decay_alpha = value

    seed = _as_int(raw.get("seed"), "seed", errs, minimum=0, default=0)
    output_dir = raw.get("output_dir", name)
    if "output_dir" in raw and (not isinstance(output_dir, str)
                                or not _NAME_RE.match(output_dir or "")):
        errs.add("output_dir", "must be a filesystem-safe token")
        output_dir = name

    if errs.errors:
        raise ConfigError(errs.errors)
    return ScenarioConfig(
        name=name, model=model, domain=domain, initial=initial,
        params=params, dt=dt, t_final=t_final, record_every=record_every,
        checkpoint_every=checkpoint_every, radii=radii, bounds=bounds,
        balance_kappa=tol["balance_kappa"],
        slack_kappa=tol["slack_kappa"],
        asymptotic_slack=tol["asymptotic_slack"],
        report_tol=tol["report_tol"], contamination_pad=pad,
        occupancy=occupancy, snapshot_every=snapshot_every,
        decay_alpha=decay_alpha, seed=seed, output_dir=output_dir)


def load_config(path) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as handle:
        return validate_config(handle.read())


def config_digest(text: str) -> str:
    """Stable identity of a scenario: hash of the exact file text."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()
