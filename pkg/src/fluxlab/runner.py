"""Scenario execution: stepping, checkpoints, CSV emission, manifests.

A run turns one validated ScenarioConfig into a directory of artifacts:
the exact config text, per-sample bound checks as CSV, the recorded
history as npz (so diagnostics can be replayed without stepping), state
snapshots, checkpoints for long scalar runs, and a manifest listing every
emitted file with its content digest.

Numbers in CSV files are printed at 12 significant digits in scientific
notation; a re-run of the same config and seed reproduces the bytes
exactly, which is what the manifest digests certify.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import NamedTuple

import numpy as np
import yaml

from . import __version__
from .config import SCHEMA_VERSION, ConfigError, ScenarioConfig, \
    config_digest, validate_config
from .diagnostics import (BoundReport, OccupancyRecord, SampledHistory,
                          balance_residuals, check_dissipation_bounds,
                          check_flux_bounds, dissipation_series, flux_series,
                          jt_sparsity, kink_census, occupancy_bound_report,
                          record_model_run, state_distance,
                          vorticity_bound_reports)
from .grids import ScalarField, write_snapshot
from .models import ModelState, make_initial
from .specfun import h_n
from .vorticity import (CylinderHistory, KernelConstants, decay_measure,
                        fit_mean_growth, make_cylinder_initial,
                        mean_flow_bound_check, measured_m1, run_cylinder,
                        velocity_bound_check, window_balance_check,
                        window_dissipation_check)

__all__ = ["RunManifest", "run_scenario", "verify_run", "hn_table_csv"]

CSV_FMT = "%.11e"


def _f(value) -> str:
    return CSV_FMT % float(value)


def _csv(header: str, rows) -> str:
    lines = [header]
    lines.extend(",".join(row) for row in rows)
    return "\n".join(lines) + "\n"


def _sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


def _field_names(model: str) -> tuple[str, ...]:
    if model == "damped_wave":
        return ("u", "w")
    if model == "ginzburg_landau":
        return ("im", "re")
    return ("u",)


def hn_table_csv(r_min: float = 0.05, r_max: float = 20.0,
                 samples: int = 121) -> str:
    """The h_N family on a log-spaced grid, one column per dimension."""
    rs = np.geomspace(r_min, r_max, samples)
    return _csv("r,h1,h2,h3,h4",
                ((_f(r), _f(h_n(1, r)), _f(h_n(2, r)), _f(h_n(3, r)),
                  _f(h_n(4, r))) for r in rs))


# ---------------------------------------------------------------------------
# Manifest

@dataclass(frozen=True)
class RunManifest:
    """What a finished run claims about itself.

    files maps run-relative names to sha256 digests of the emitted bytes;
    summary maps each checked bound kind to its sample count, failure
    count, and worst margin.  Everything except the wall times is a pure
    function of (config, seed).
    """

    name: str
    config_hash: str
    code_version: str
    seed: int
    started_at: str
    finished_at: str
    final_time: float
    exit_code: int
    summary: dict
    files: dict

    def write(self, path) -> None:
        payload = {
            "name": self.name,
            "config_hash": self.config_hash,
            "code_version": self.code_version,
            "seed": self.seed,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "final_time": self.final_time,
            "exit_code": self.exit_code,
            "summary": self.summary,
            "files": self.files,
        }
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True)
                              + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "RunManifest":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(**payload)


def _scenario_text(cfg: ScenarioConfig, config_text: str | None) -> str:
    """The text stored as config.yaml: the caller's bytes when available,
    otherwise a canonical dump that validates back to the same scenario."""
    if config_text is not None:
        return config_text
    domain = {
        "kind": cfg.domain.kind,
        "lengths": [ax.length for ax in cfg.domain.axes],
        "counts": [ax.count for ax in cfg.domain.axes],
        "boundaries": [ax.boundary for ax in cfg.domain.axes],
    }
    if cfg.domain.kind == "cylinder":
        domain = {"kind": "cylinder",
                  "lengths": [cfg.domain.axes[0].length],
                  "counts": [ax.count for ax in cfg.domain.axes]}
    raw = {
        "schema_version": SCHEMA_VERSION,
        "name": cfg.name,
        "model": cfg.model,
        "domain": domain,
        "initial": dict(cfg.initial),
        "time": {"dt": cfg.dt, "t_final": cfg.t_final,
                 "record_every": cfg.record_every,
                 "checkpoint_every": cfg.checkpoint_every},
        "radii": list(cfg.radii),
        "bounds": "all" if cfg.bounds is None else list(cfg.bounds),
        "tolerances": {"balance_kappa": cfg.balance_kappa,
                       "slack_kappa": cfg.slack_kappa,
                       "asymptotic_slack": cfg.asymptotic_slack,
                       "report_tol": cfg.report_tol},
        "contamination_pad": cfg.contamination_pad,
        "snapshot_every": cfg.snapshot_every,
        "seed": cfg.seed,
        "output_dir": cfg.output_dir,
    }
    if cfg.params:
        raw["params"] = dict(cfg.params)
    if cfg.occupancy is not None:
        occ = {"radius": cfg.occupancy["radius"],
               "observation_radius": cfg.occupancy["observation_radius"]}
        if cfg.occupancy.get("reference") is not None:
            occ["reference"] = dict(cfg.occupancy["reference"])
        raw["occupancy"] = occ
    if cfg.is_vorticity:
        raw["decay"] = {"alpha": cfg.decay_alpha}
    return yaml.safe_dump(raw, sort_keys=True)


# ---------------------------------------------------------------------------
# Scalar runs

@dataclass(frozen=True)
class _ScalarBundle:
    history: SampledHistory
    censuses: np.ndarray
    dists: np.ndarray


class _BalanceRow(NamedTuple):
    radius: float
    worst: float
    tol: float


class _ScalarRecorder:
    """Per-record accumulation across checkpoint segments.

    record_model_run reports every recorded state through on_record.  The
    first record of a continuation segment repeats the previous segment's
    last state, so it is skipped here and its reduction row dropped in
    absorb; raw state times are collected directly to keep resumed and
    uninterrupted runs bit-identical.
    """

    def __init__(self, cfg: ScenarioConfig, run_dir: Path, reference):
        self.cfg = cfg
        self.run_dir = run_dir
        self.reference = reference
        self.step = 0
        self.record_count = 0
        self.times: list[float] = []
        self.flux: list[np.ndarray] = []
        self.ball_e: list[np.ndarray] = []
        self.ball_d: list[np.ndarray] = []
        self.e_sup: list[float] = []
        self.b_sup: list[float] = []
        self.censuses: list[int] = []
        self.dists: list[float] = []
        self._skip_next = False

    def begin_segment(self) -> None:
        self._skip_next = self.step > 0

    def on_record(self, state: ModelState) -> None:
        if self._skip_next:
            self._skip_next = False
            return
        idx = self.record_count
        self.record_count += 1
        self.times.append(state.time)
        if self.cfg.wants_census:
            self.censuses.append(kink_census(state).count)
        if self.reference is not None:
            self.dists.append(state_distance(
                state, self.reference, "sup_on_ball",
                self.cfg.occupancy["observation_radius"]))
        every = self.cfg.snapshot_every
        if every and idx % every == 0:
            for name in sorted(state.fields):
                write_snapshot(
                    ScalarField(state.domain, state.fields[name],
                                state.time),
                    self.run_dir / f"{name}_{idx:06d}.npz")

    def absorb(self, hist: SampledHistory, *, drop_first: bool) -> None:
        rows = slice(1, None) if drop_first else slice(None)
        self.flux.extend(hist.flux[rows])
        self.ball_e.extend(hist.ball_energy[rows])
        self.ball_d.extend(hist.ball_dissipation[rows])
        self.e_sup.extend(hist.e_sup[rows])
        self.b_sup.extend(hist.b_sup[rows])


def _save_checkpoint(path: Path, *, state: ModelState, acc: _ScalarRecorder,
                     config_hash: str, seed: int) -> None:
    fields = {f"field_{k}": v for k, v in state.fields.items()}
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as handle:
        np.savez(handle,
                 step=np.int64(acc.step), time=np.float64(state.time),
                 record_count=np.int64(acc.record_count),
                 config_hash=np.array(config_hash), seed=np.int64(seed),
                 times=np.asarray(acc.times),
                 flux=np.asarray(acc.flux),
                 ball_energy=np.asarray(acc.ball_e),
                 ball_dissipation=np.asarray(acc.ball_d),
                 e_sup=np.asarray(acc.e_sup), b_sup=np.asarray(acc.b_sup),
                 censuses=np.asarray(acc.censuses, dtype=np.int64),
                 dists=np.asarray(acc.dists), **fields)
    os.replace(tmp, path)


def _load_checkpoint(path: Path, cfg: ScenarioConfig, config_hash: str,
                     seed: int, acc: _ScalarRecorder) -> ModelState:
    with np.load(path, allow_pickle=False) as data:
        if str(data["config_hash"]) != config_hash:
            raise ConfigError(
                ["resume: checkpoint was written by a different config"])
        if int(data["seed"]) != seed:
            raise ConfigError(
                ["resume: checkpoint was written with a different seed"])
        acc.step = int(data["step"])
        acc.record_count = int(data["record_count"])
        n = data["times"].shape[0]
        if acc.record_count != n or (cfg.wants_census
                                     and data["censuses"].shape[0] != n) \
                or (cfg.occupancy is not None
                    and data["dists"].shape[0] != n):
            raise ConfigError(["resume: checkpoint arrays are inconsistent"])
        acc.times = [float(t) for t in data["times"]]
        acc.flux = list(data["flux"])
        acc.ball_e = list(data["ball_energy"])
        acc.ball_d = list(data["ball_dissipation"])
        acc.e_sup = [float(v) for v in data["e_sup"]]
        acc.b_sup = [float(v) for v in data["b_sup"]]
        acc.censuses = [int(c) for c in data["censuses"]]
        acc.dists = [float(v) for v in data["dists"]]
        fields = {k[len("field_"):]: data[k] for k in data.files
                  if k.startswith("field_")}
        return ModelState(cfg.model, cfg.domain, fields, dict(cfg.params),
                          float(data["time"]))


def _run_scalar(cfg: ScenarioConfig, run_dir: Path, seed: int,
                resume: bool, config_hash: str) -> _ScalarBundle:
    initial = dict(cfg.initial)
    if initial.get("preset") == "random_smooth":
        initial.setdefault("seed", seed)
    state = make_initial(cfg.model, cfg.domain, initial, cfg.params)
    reference = None
    if cfg.occupancy is not None:
        ref = cfg.occupancy.get("reference") or initial
        reference = make_initial(cfg.model, cfg.domain, dict(ref),
                                 cfg.params)
    acc = _ScalarRecorder(cfg, run_dir, reference)
    cp_path = run_dir / "checkpoint.npz"
    if resume and cp_path.exists():
        state = _load_checkpoint(cp_path, cfg, config_hash, seed, acc)
    while acc.step < cfg.n_steps:
        remaining = cfg.n_steps - acc.step
        seg = min(cfg.checkpoint_every, remaining) \
            if cfg.checkpoint_every else remaining
        continuation = acc.step > 0
        acc.begin_segment()
        state, seg_hist = record_model_run(
            state, cfg.dt, seg, cfg.radii, cfg.record_every,
            on_record=acc.on_record)
        acc.absorb(seg_hist, drop_first=continuation)
        acc.step += seg
        if cfg.checkpoint_every:
            _save_checkpoint(cp_path, state=state, acc=acc,
                             config_hash=config_hash, seed=seed)
    history = SampledHistory(
        n_dim=cfg.domain.n_dim, radii=cfg.radii,
        times=np.asarray(acc.times), flux=np.asarray(acc.flux),
        ball_energy=np.asarray(acc.ball_e),
        ball_dissipation=np.asarray(acc.ball_d),
        e_sup=np.asarray(acc.e_sup), b_sup=np.asarray(acc.b_sup),
        spacing=cfg.domain.spacing, dt=cfg.dt)
    bundle = _ScalarBundle(history,
                           np.asarray(acc.censuses, dtype=np.int64),
                           np.asarray(acc.dists, dtype=float))
    _write_history_npz(run_dir / "history.npz", bundle)
    return bundle


def _write_history_npz(path: Path, bundle: _ScalarBundle) -> None:
    h = bundle.history
    np.savez(path, n_dim=np.int64(h.n_dim), radii=np.asarray(h.radii),
             times=h.times, flux=h.flux, ball_energy=h.ball_energy,
             ball_dissipation=h.ball_dissipation, e_sup=h.e_sup,
             b_sup=h.b_sup, spacing=np.asarray(h.spacing),
             dt=np.float64(h.dt), censuses=bundle.censuses,
             dists=bundle.dists)


def _load_history_npz(path: Path) -> _ScalarBundle:
    with np.load(path, allow_pickle=False) as d:
        history = SampledHistory(
            n_dim=int(d["n_dim"]), radii=tuple(d["radii"]),
            times=d["times"], flux=d["flux"],
            ball_energy=d["ball_energy"],
            ball_dissipation=d["ball_dissipation"],
            e_sup=d["e_sup"], b_sup=d["b_sup"],
            spacing=tuple(d["spacing"]), dt=float(d["dt"]))
        return _ScalarBundle(history, d["censuses"], d["dists"])


def _lebesgue_weights(times: np.ndarray, horizon: float) -> np.ndarray:
    # Midpoint-cell ownership, the same rule the occupancy diagnostic uses.
    mids = 0.5 * (times[1:] + times[:-1])
    lo = np.concatenate([[0.0], mids])
    hi = np.concatenate([mids, [times[-1]]])
    return np.clip(hi, 0.0, horizon) - np.clip(lo, 0.0, horizon)


def _occupancy_records(cfg: ScenarioConfig, history: SampledHistory,
                       dists: np.ndarray) -> list[OccupancyRecord]:
    occ = cfg.occupancy
    radius, obs = occ["radius"], occ["observation_radius"]
    records = []
    for t in history.times[1:]:
        horizon = float(t)
        weights = _lebesgue_weights(history.times, horizon)
        occupied = float(np.sum(weights[dists < radius]))
        psi = math.sqrt(horizon) if history.n_dim == 1 \
            else math.log(horizon)
        records.append(OccupancyRecord(horizon, "sup_on_ball", radius, obs,
                                       occupied,
                                       psi / horizon * occupied))
    return records


def _balance_rows(cfg: ScenarioConfig, history: SampledHistory
                  ) -> list[_BalanceRow]:
    resid = balance_residuals(history)
    dx = max(history.spacing)
    n = history.n_dim
    rows = []
    for i, r in enumerate(history.radii):
        tol = cfg.balance_kappa * (dx * dx + history.dt) \
            * (r ** n + r ** (n - 1))
        rows.append(_BalanceRow(r, float(np.max(resid[i])), tol))
    return rows


def _scalar_csvs(cfg: ScenarioConfig, bundle: _ScalarBundle):
    """Render every CSV of a scalar run from its recorded history."""
    history = bundle.history
    series = flux_series(history)
    D = dissipation_series(history)
    reports = check_flux_bounds(series, history.n_dim,
                                report_tol=cfg.report_tol)
    diss = check_dissipation_bounds(
        series, D, history.n_dim, report_tol=cfg.report_tol,
        asymptotic_slack=cfg.asymptotic_slack)
    if cfg.bounds is not None:
        keep = set(cfg.bounds)
        diss = [r for r in diss if r.kind in keep]
    texts = {
        "flux.csv": _csv(
            "T,R,F,bound,margin",
            ((_f(r.context["horizon"]), _f(r.context["radius"]),
              _f(r.lhs), _f(r.rhs), _f(r.margin)) for r in reports)),
        "dissipation.csv": _csv(
            "T,R,D,bound_kind,bound,margin",
            ((_f(r.context["horizon"]), _f(r.context["radius"]),
              _f(r.context["mass"]), r.kind, _f(r.rhs), _f(r.margin))
             for r in diss)),
        "hn.csv": hn_table_csv(),
    }
    jt = jt_sparsity(history, history.final_time)
    texts["jt.csv"] = _csv(
        "T,r,in_JT,sparsity_integral",
        ((_f(jt.horizon), _f(r), str(int(flag)),
          _f(jt.sparsity_integral))
         for r, flag in zip(jt.radii, jt.in_jt)))
    if bundle.censuses.size:
        texts["kinks.csv"] = _csv(
            "t,count",
            ((_f(t), str(int(c)))
             for t, c in zip(history.times, bundle.censuses)))
    reports = reports + diss
    if bundle.dists.size and cfg.occupancy is not None:
        records = _occupancy_records(cfg, history, bundle.dists)
        texts["occupancy.csv"] = _csv(
            "T,occupied,weighted",
            ((_f(rec.horizon), _f(rec.occupied_time), _f(rec.weighted))
             for rec in records))
        reports.append(occupancy_bound_report(
            records, report_tol=cfg.report_tol,
            asymptotic_slack=cfg.asymptotic_slack))
    return texts, reports, _balance_rows(cfg, history)


def _summarize(reports: list[BoundReport]) -> dict:
    out: dict = {}
    for r in reports:
        s = out.setdefault(r.kind, {"checked": 0, "failed": 0,
                                    "worst_margin": math.inf})
        s["checked"] += 1
        s["failed"] += 0 if r.passed else 1
        s["worst_margin"] = min(s["worst_margin"], r.margin)
    return out


def _scalar_summary(reports: list[BoundReport],
                    balance: list[_BalanceRow]) -> tuple[dict, int]:
    summary = _summarize(reports)
    breaches = sum(row.worst > row.tol for row in balance)
    summary["balance"] = {
        "checked": len(balance), "failed": int(breaches),
        "worst_margin": min(row.tol - row.worst for row in balance),
    }
    hard = any(not r.passed and not r.context.get("asymptotic")
               for r in reports)
    return summary, 1 if hard or breaches else 0


# ---------------------------------------------------------------------------
# Vorticity runs

class _SnapshotWriter:
    def __init__(self, cfg: ScenarioConfig, run_dir: Path):
        self.every = cfg.snapshot_every
        self.run_dir = run_dir
        self.idx = 0

    def on_record(self, state, hist) -> None:
        if self.idx % self.every == 0:
            stem = f"{self.idx:06d}"
            write_snapshot(state.omega, self.run_dir / f"omega_{stem}.npz")
            write_snapshot(state.m, self.run_dir / f"mean_{stem}.npz")
        self.idx += 1


def _run_vorticity(cfg: ScenarioConfig, run_dir: Path,
                   seed: int) -> CylinderHistory:
    initial = dict(cfg.initial)
    if initial.get("preset", "random_smooth") == "random_smooth":
        initial.setdefault("seed", seed)
    state = make_cylinder_initial(cfg.domain, initial)
    snap = _SnapshotWriter(cfg, run_dir) if cfg.snapshot_every else None
    _, hist = run_cylinder(
        state, cfg.dt, cfg.n_steps, radii=cfg.radii,
        record_every=cfg.record_every,
        on_record=snap.on_record if snap else None)
    _write_vorticity_npz(run_dir / "vorticity_history.npz", hist)
    return hist


def _write_vorticity_npz(path: Path, hist: CylinderHistory) -> None:
    c = hist.constants
    np.savez(
        path, x1=hist.x1, dx1=np.float64(hist.dx1),
        length=np.float64(hist.length), dt=np.float64(hist.dt),
        radii=np.asarray(hist.radii),
        constants=np.array([c.norm_k_l1, c.norm_grad_k_l1, c.m0,
                            c.c1, c.c2, c.c3]),
        omega0_sup=np.float64(hist.omega0_sup),
        m0_sup=np.float64(hist.m0_sup),
        e0=np.float64(hist.e0), beta=np.float64(hist.beta),
        times=np.asarray(hist.times),
        e_profiles=np.stack(hist.e_profiles),
        f_profiles=np.stack(hist.f_profiles),
        d_profiles=np.stack(hist.d_profiles),
        column_sup=np.stack(hist.column_sup),
        omega_sup=np.asarray(hist.omega_sup),
        u_hat_sup=np.asarray(hist.u_hat_sup),
        v_sup=np.asarray(hist.v_sup),
        m_sup=np.asarray(hist.m_sup),
        hat_l2_sup=np.asarray(hist.hat_l2_sup),
        mixed_sup=np.asarray(hist.mixed_sup),
        window_energy=np.array(
            [hist.window_energy[r] for r in hist.radii]),
        edge_flux_integral=np.array(
            [hist.edge_flux_integral[r] for r in hist.radii]),
        window_dissipation=np.array(
            [hist.window_dissipation[r] for r in hist.radii]))


def _load_vorticity_npz(path: Path) -> CylinderHistory:
    with np.load(path, allow_pickle=False) as d:
        radii = tuple(float(r) for r in d["radii"])
        return CylinderHistory(
            x1=d["x1"], dx1=float(d["dx1"]), length=float(d["length"]),
            dt=float(d["dt"]), radii=radii,
            constants=KernelConstants(*map(float, d["constants"])),
            omega0_sup=float(d["omega0_sup"]), m0_sup=float(d["m0_sup"]),
            e0=float(d["e0"]), beta=float(d["beta"]),
            times=[float(t) for t in d["times"]],
            e_profiles=list(d["e_profiles"]),
            f_profiles=list(d["f_profiles"]),
            d_profiles=list(d["d_profiles"]),
            column_sup=list(d["column_sup"]),
            omega_sup=[float(v) for v in d["omega_sup"]],
            u_hat_sup=[float(v) for v in d["u_hat_sup"]],
            v_sup=[float(v) for v in d["v_sup"]],
            m_sup=[float(v) for v in d["m_sup"]],
            hat_l2_sup=[float(v) for v in d["hat_l2_sup"]],
            mixed_sup=[float(v) for v in d["mixed_sup"]],
            window_energy={r: list(map(float, row)) for r, row in
                           zip(radii, d["window_energy"])},
            edge_flux_integral={r: list(map(float, row)) for r, row in
                                zip(radii, d["edge_flux_integral"])},
            window_dissipation={r: list(map(float, row)) for r, row in
                                zip(radii, d["window_dissipation"])})


def _cylinder_csvs(cfg: ScenarioConfig, hist: CylinderHistory):
    """Render the vorticity CSVs and rerun every windowed check."""
    wd = window_dissipation_check(hist)
    texts = {
        "enstrophy.csv": _csv(
            "t,x1,e,f,d",
            ((_f(t), _f(x), _f(e), _f(fv), _f(dv))
             for i, t in enumerate(hist.times)
             for x, e, fv, dv in zip(hist.x1, hist.e_profiles[i],
                                     hist.f_profiles[i],
                                     hist.d_profiles[i]))),
        "bounds.csv": _csv(
            "t,R,lhs,rhs,margin",
            ((_f(row.time), _f(row.radius), _f(row.lhs), _f(row.rhs),
              _f(row.margin)) for row in wd.rows)),
        "hn.csv": hn_table_csv(),
    }
    horizon = hist.final_time
    # Rough data regularizes on an O(1) time scale; short runs keep the
    # burn-in inside the recorded span so the cap stays measurable.
    burn_in = min(1.0, 0.5 * horizon)
    m1 = max(measured_m1(hist, burn_in=burn_in), 1.0e-12)
    beta_fit, m2 = fit_mean_growth(hist.times, hist.m_sup)
    beta_exp = min(beta_fit, cfg.decay_alpha)
    m2 = max(m2, 1.0e-12)
    dm = decay_measure(hist, cfg.decay_alpha, beta_exp, m1, m2, horizon)
    texts["decay.csv"] = _csv(
        "T,alpha,beta,J_measure,excursion_measure,K0",
        [(_f(horizon), _f(cfg.decay_alpha), _f(beta_exp),
          _f(dm.j_alpha_measure), _f(dm.excursion_measure),
          _f(dm.k0_estimate))])
    reports = vorticity_bound_reports(hist, report_tol=cfg.report_tol)
    checks = {"window_balance": window_balance_check(hist),
              "velocity": velocity_bound_check(hist),
              "mean_flow": mean_flow_bound_check(hist)}
    return texts, reports, checks


def _cylinder_summary(reports: list[BoundReport],
                      checks: dict) -> tuple[dict, int]:
    summary = _summarize(reports)
    wb = checks["window_balance"]
    summary["window_balance"] = {
        "checked": len(wb.rows),
        "failed": int(sum(row.worst_residual > row.tolerance
                          for row in wb.rows)),
        "worst_margin": float(min(row.tolerance - row.worst_residual
                                  for row in wb.rows)),
    }
    vb = checks["velocity"]
    v_failed = 0
    v_worst = math.inf
    for row in vb.rows:
        slack = 1.0e-13 * max(1.0, row.u_bound, row.v_bound)
        if row.u_sup > row.u_bound + slack or row.v_sup > row.v_bound + slack:
            v_failed += 1
        v_worst = min(v_worst, row.u_bound - row.u_sup,
                      row.v_bound - row.v_sup)
    summary["velocity"] = {"checked": len(vb.rows), "failed": v_failed,
                           "worst_margin": float(v_worst)}
    mf = checks["mean_flow"]
    summary["mean_flow"] = {
        "checked": len(mf.rows), "failed": int(mf.violations),
        "worst_margin": float(min(row.bound - row.observed
                                  for row in mf.rows)),
    }
    hard = (any(not r.passed for r in reports)
            or not wb.satisfied or not vb.satisfied or not mf.satisfied)
    return summary, 1 if hard else 0


# ---------------------------------------------------------------------------
# Entry points

def _snapshot_names(cfg: ScenarioConfig, n_records: int) -> list[str]:
    if not cfg.snapshot_every:
        return []
    stems = [f"{i:06d}" for i in range(0, n_records, cfg.snapshot_every)]
    if cfg.is_vorticity:
        return [f"{kind}_{s}.npz" for s in stems
                for kind in ("omega", "mean")]
    return [f"{name}_{s}.npz" for s in stems
            for name in sorted(_field_names(cfg.model))]


def run_scenario(config: ScenarioConfig, out_root=".", *,
                 seed: int | None = None, resume: bool = False,
                 config_text: str | None = None) -> RunManifest:
    """Execute one validated scenario into out_root/<output_dir>.

    Deterministic given (config, seed): CSV bytes depend only on those
    two.  resume continues a checkpointed scalar run from its last saved
    segment and refuses checkpoints written under a different config or
    seed.  Numerical blow-up propagates as InstabilityError; the exit
    code for bound violations lives in the returned manifest.
    """
    cfg = config
    run_dir = Path(out_root) / cfg.output_dir
    run_dir.mkdir(parents=True, exist_ok=True)
    text = _scenario_text(cfg, config_text)
    config_hash = config_digest(text)
    (run_dir / "config.yaml").write_text(text, encoding="utf-8")
    effective_seed = cfg.seed if seed is None else int(seed)
    started = _now()
    if cfg.is_vorticity:
        hist = _run_vorticity(cfg, run_dir, effective_seed)
        texts, reports, checks = _cylinder_csvs(cfg, hist)
        summary, exit_code = _cylinder_summary(reports, checks)
        final_time = hist.final_time
        extra = ["vorticity_history.npz"]
        n_records = len(hist.times)
    else:
        bundle = _run_scalar(cfg, run_dir, effective_seed, resume,
                             config_hash)
        texts, reports, balance = _scalar_csvs(cfg, bundle)
        summary, exit_code = _scalar_summary(reports, balance)
        final_time = bundle.history.final_time
        extra = ["history.npz"]
        if cfg.checkpoint_every:
            extra.append("checkpoint.npz")
        n_records = bundle.history.times.size
    for name, body in texts.items():
        (run_dir / name).write_text(body, encoding="utf-8")
    files = {}
    for name in ["config.yaml", *sorted(texts), *extra,
                 *_snapshot_names(cfg, n_records)]:
        files[name] = _sha256_file(run_dir / name)
    manifest = RunManifest(
        name=cfg.name, config_hash=config_hash, code_version=__version__,
        seed=effective_seed, started_at=started, finished_at=_now(),
        final_time=float(final_time), exit_code=exit_code,
        summary=summary, files=files)
    manifest.write(run_dir / "manifest.json")
    return manifest


def verify_run(run_dir) -> list[str]:
    """Re-derive a run's CSVs from its recorded history and re-hash its
    files; returns one message per disagreement (empty means verified)."""
    run_dir = Path(run_dir)
    problems = []
    try:
        manifest = RunManifest.load(run_dir / "manifest.json")
    except (OSError, ValueError, TypeError) as exc:
        return [f"manifest.json: unreadable ({exc})"]
    try:
        text = (run_dir / "config.yaml").read_text(encoding="utf-8")
    except OSError as exc:
        return [f"config.yaml: unreadable ({exc})"]
    if config_digest(text) != manifest.config_hash:
        problems.append("config.yaml: digest differs from the manifest")
    try:
        cfg = validate_config(text)
    except ConfigError as exc:
        problems.append(f"config.yaml: no longer validates ({exc})")
        return problems
    for name, digest in sorted(manifest.files.items()):
        path = run_dir / name
        if not path.exists():
            problems.append(f"{name}: listed in the manifest but missing")
        elif _sha256_file(path) != digest:
            problems.append(f"{name}: bytes differ from the manifest digest")
    try:
        if cfg.is_vorticity:
            hist = _load_vorticity_npz(run_dir / "vorticity_history.npz")
            texts, _, _ = _cylinder_csvs(cfg, hist)
        else:
            bundle = _load_history_npz(run_dir / "history.npz")
            texts, _, _ = _scalar_csvs(cfg, bundle)
    except OSError as exc:
        problems.append(f"history: unreadable ({exc})")
        return problems
    for name, body in texts.items():
        path = run_dir / name
        if path.exists() and path.read_bytes() != body.encode("utf-8"):
            problems.append(f"{name}: recomputed diagnostics disagree")
    return problems
