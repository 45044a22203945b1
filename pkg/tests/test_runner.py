"""End-to-end checks of scenario execution and its emitted artifacts."""

import dataclasses
import hashlib
import re

import numpy as np
import pytest
import yaml

from fluxlab import __version__
from fluxlab import runner as rn
from fluxlab.config import ConfigError, config_digest, validate_config
from fluxlab.diagnostics import BoundReport, record_model_run
from fluxlab.grids import read_snapshot
from fluxlab.models import InstabilityError, make_initial

HEAT = {
    "schema_version": 1,
    "name": "mini-heat",
    "model": "reaction_diffusion",
    "domain": {"kind": "line", "lengths": [1.0], "counts": [64],
               "boundaries": ["periodic"]},
    "initial": {"preset": "eigenmode", "k": 1, "amplitude": 1.0},
    "params": {"potential": {"kind": "custom_table",
                             "u": [-10.0, -1.0, 1.0, 10.0],
                             "V": [0.0, 0.0, 0.0, 0.0]}},
    "time": {"dt": 5.0e-5, "t_final": 0.05, "record_every": 50},
    "radii": [0.2, 0.4],
    "snapshot_every": 2,
    "seed": 0,
}

KINKS = {
    "schema_version": 1,
    "name": "mini-kinks",
    "model": "reaction_diffusion",
    "domain": {"kind": "line", "lengths": [60.0], "counts": [480],
               "boundaries": ["neumann"]},
    "initial": {"preset": "kink_pair", "a": 2.0},
    "time": {"dt": 2.0e-3, "t_final": 2.0, "record_every": 50,
             "checkpoint_every": 250},
    "radii": [1.0, 3.0, 6.0],
    "occupancy": {"radius": 0.6},
    "seed": 0,
}

GL = {
    "schema_version": 1,
    "name": "mini-gl",
    "model": "ginzburg_landau",
    "domain": {"kind": "plane", "lengths": [16.0, 16.0],
               "counts": [32, 32]},
    "initial": {"preset": "random_smooth", "amplitude": 0.5,
                "correlation_length": 1.0},
    "params": {"alpha": 0.5},
    "time": {"dt": 5.0e-2, "t_final": 2.5, "record_every": 5},
    "radii": [2.0, 4.0],
    "seed": 11,
}

CYL = {
    "schema_version": 1,
    "name": "mini-cyl",
    "model": "vorticity",
    "domain": {"kind": "cylinder", "lengths": [8.0], "counts": [64, 16]},
    "initial": {"preset": "random_smooth", "amplitude": 0.4},
    "time": {"dt": 5.0e-3, "t_final": 0.5, "record_every": 20},
    "radii": [1.0, 2.0],
    "snapshot_every": 2,
    "decay": {"alpha": 0.25},
    "seed": 3,
}


def _text(mapping):
    return yaml.safe_dump(mapping, sort_keys=True)


def _sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _run(mapping, root, **kw):
    text = _text(mapping)
    cfg = validate_config(text)
    manifest = rn.run_scenario(cfg, root, config_text=text, **kw)
    return {"cfg": cfg, "text": text, "dir": root / cfg.output_dir,
            "manifest": manifest}


@pytest.fixture(scope="module")
def heat_run(tmp_path_factory):
    return _run(HEAT, tmp_path_factory.mktemp("heat"))


@pytest.fixture(scope="module")
def kink_run(tmp_path_factory):
    return _run(KINKS, tmp_path_factory.mktemp("kinks"))


@pytest.fixture(scope="module")
def gl_run(tmp_path_factory):
    return _run(GL, tmp_path_factory.mktemp("gl"))


@pytest.fixture(scope="module")
def cyl_run(tmp_path_factory):
    return _run(CYL, tmp_path_factory.mktemp("cyl"))


def _columns(path):
    lines = path.read_text().splitlines()
    header = lines[0].split(",")
    rows = [line.split(",") for line in lines[1:]]
    return header, rows


class TestManifest:
    def test_minimal_heat_run_passes_everything(self, heat_run):
        man = heat_run["manifest"]
        assert man.exit_code == 0
        assert "flux.csv" in man.files
        assert "dissipation.csv" in man.files
        for kind, entry in man.summary.items():
            assert entry["failed"] == 0, kind
            assert entry["checked"] >= 1

    def test_digests_match_disk(self, heat_run):
        for name, digest in heat_run["manifest"].files.items():
            assert _sha(heat_run["dir"] / name) == digest, name

    def test_config_text_stored_verbatim(self, heat_run):
        stored = (heat_run["dir"] / "config.yaml").read_text()
        assert stored == heat_run["text"]
        assert heat_run["manifest"].config_hash == config_digest(stored)

    def test_round_trips_through_json(self, heat_run):
        loaded = rn.RunManifest.load(heat_run["dir"] / "manifest.json")
        assert loaded == heat_run["manifest"]

    def test_identity_fields(self, heat_run):
        man = heat_run["manifest"]
        assert man.code_version == __version__
        assert man.seed == 0
        assert man.name == "mini-heat"
        assert man.final_time == pytest.approx(0.05, rel=1e-9)

    def test_csv_numbers_use_twelve_digits(self, heat_run):
        _, rows = _columns(heat_run["dir"] / "flux.csv")
        pattern = re.compile(r"^-?\d\.\d{11}e[+-]\d{2,3}$")
        for row in rows[:5]:
            for cell in row:
                assert pattern.match(cell), cell


class TestDeterminism:
    def test_rerun_is_bit_identical(self, heat_run, tmp_path):
        again = _run(HEAT, tmp_path)
        assert again["manifest"].files == heat_run["manifest"].files
        for name in heat_run["manifest"].files:
            if name.endswith(".csv"):
                assert (again["dir"] / name).read_bytes() == \
                    (heat_run["dir"] / name).read_bytes(), name

    def test_seed_override_changes_random_data(self, gl_run, tmp_path):
        other = _run(GL, tmp_path, seed=9)
        assert other["manifest"].seed == 9
        assert gl_run["manifest"].seed == 11
        assert (other["dir"] / "flux.csv").read_bytes() != \
            (gl_run["dir"] / "flux.csv").read_bytes()

    def test_canonical_text_round_trips(self, heat_run, cyl_run):
        for run in (heat_run, cyl_run):
            text = rn._scenario_text(run["cfg"], None)
            assert validate_config(text) == run["cfg"]


class TestCheckpoint:
    def _half_run(self, cfg, text, run_dir, seed=0):
        """Advance half the steps along segment boundaries and leave a
        checkpoint, as an interrupted run would."""
        run_dir.mkdir(parents=True, exist_ok=True)
        state = make_initial(cfg.model, cfg.domain, dict(cfg.initial),
                             cfg.params)
        reference = make_initial(cfg.model, cfg.domain, dict(cfg.initial),
                                 cfg.params) if cfg.occupancy else None
        acc = rn._ScalarRecorder(cfg, run_dir, reference)
        target = cfg.n_steps // 2
        while acc.step < target:
            seg = min(cfg.checkpoint_every, target - acc.step)
            acc.begin_segment()
            state, hist = record_model_run(
                state, cfg.dt, seg, cfg.radii, cfg.record_every,
                on_record=acc.on_record)
            acc.absorb(hist, drop_first=acc.step > 0)
            acc.step += seg
        rn._save_checkpoint(run_dir / "checkpoint.npz", state=state,
                            acc=acc, config_hash=config_digest(text),
                            seed=seed)

    def test_resume_matches_uninterrupted(self, kink_run, tmp_path):
        cfg, text = kink_run["cfg"], kink_run["text"]
        self._half_run(cfg, text, tmp_path / cfg.output_dir)
        man = rn.run_scenario(cfg, tmp_path, resume=True, config_text=text)
        assert man.files == kink_run["manifest"].files
        for name in man.files:
            assert _sha(tmp_path / cfg.output_dir / name) == \
                _sha(kink_run["dir"] / name), name

    def test_resume_refuses_other_config(self, kink_run, tmp_path):
        cfg, text = kink_run["cfg"], kink_run["text"]
        self._half_run(cfg, text, tmp_path / cfg.output_dir)
        other = dict(KINKS, radii=[1.0, 3.0])
        cfg2 = validate_config(_text(other))
        with pytest.raises(ConfigError, match="different config"):
            rn.run_scenario(cfg2, tmp_path, resume=True,
                            config_text=_text(other))

    def test_resume_refuses_other_seed(self, kink_run, tmp_path):
        cfg, text = kink_run["cfg"], kink_run["text"]
        self._half_run(cfg, text, tmp_path / cfg.output_dir)
        with pytest.raises(ConfigError, match="different seed"):
            rn.run_scenario(cfg, tmp_path, resume=True, seed=5,
                            config_text=text)

    def test_resume_of_finished_run_regenerates(self, kink_run, tmp_path):
        cfg, text = kink_run["cfg"], kink_run["text"]
        first = rn.run_scenario(cfg, tmp_path, config_text=text)
        (tmp_path / cfg.output_dir / "flux.csv").unlink()
        again = rn.run_scenario(cfg, tmp_path, resume=True,
                                config_text=text)
        assert again.files == first.files
        assert (tmp_path / cfg.output_dir / "flux.csv").exists()

    def test_checkpoint_is_listed(self, kink_run):
        assert "checkpoint.npz" in kink_run["manifest"].files


class TestVerify:
    def test_clean_run_verifies(self, heat_run):
        assert rn.verify_run(heat_run["dir"]) == []

    def test_tampered_csv_is_reported_twice(self, heat_run, tmp_path):
        run = _run(HEAT, tmp_path)
        path = run["dir"] / "flux.csv"
        lines = path.read_text().splitlines()
        lines[1] = lines[1].replace("e", "E", 1)
        path.write_text("\n".join(lines) + "\n")
        problems = rn.verify_run(run["dir"])
        assert any("digest" in p for p in problems)
        assert any("recomputed" in p for p in problems)
        assert all("flux.csv" in p for p in problems)

    def test_missing_file_is_reported(self, kink_run, tmp_path):
        run = _run(KINKS, tmp_path)
        (run["dir"] / "kinks.csv").unlink()
        problems = rn.verify_run(run["dir"])
        assert ["kinks.csv: listed in the manifest but missing"] == problems

    def test_edited_config_is_reported(self, heat_run, tmp_path):
        run = _run(HEAT, tmp_path)
        path = run["dir"] / "config.yaml"
        path.write_text(path.read_text() + "# touched\n")
        problems = rn.verify_run(run["dir"])
        assert len(problems) == 2
        assert all("config.yaml" in p for p in problems)


class TestScalarOutputs:
    def test_kinks_and_occupancy_emitted(self, kink_run):
        files = kink_run["manifest"].files
        assert "kinks.csv" in files
        assert "occupancy.csv" in files
        assert "timeN" in kink_run["manifest"].summary

    def test_census_counts_are_plausible(self, kink_run):
        _, rows = _columns(kink_run["dir"] / "kinks.csv")
        counts = {int(row[1]) for row in rows}
        assert counts <= {0, 2}
        assert int(rows[0][1]) == 2

    def test_occupancy_rows_cover_positive_horizons(self, kink_run):
        header, rows = _columns(kink_run["dir"] / "occupancy.csv")
        assert header == ["T", "occupied", "weighted"]
        horizons = [float(row[0]) for row in rows]
        assert horizons[0] == pytest.approx(0.1)
        occupied = [float(row[1]) for row in rows]
        assert all(0.0 <= v <= h * (1 + 1e-12)
                   for v, h in zip(occupied, horizons))

    def test_no_census_outside_reaction_diffusion(self, gl_run):
        assert "kinks.csv" not in gl_run["manifest"].files
        assert "occupancy.csv" not in gl_run["manifest"].files

    def test_plane_run_uses_two_dimensional_kinds(self, gl_run):
        _, rows = _columns(gl_run["dir"] / "dissipation.csv")
        kinds = {row[3] for row in rows}
        assert kinds == {"dissip0", "dissip4"}
        _, flux_rows = _columns(gl_run["dir"] / "flux.csv")
        assert gl_run["manifest"].summary["FNbd"]["checked"] \
            == len(flux_rows)

    def test_jt_membership_flags(self, heat_run):
        header, rows = _columns(heat_run["dir"] / "jt.csv")
        assert header == ["T", "r", "in_JT", "sparsity_integral"]
        assert {row[2] for row in rows} <= {"0", "1"}
        assert len({row[3] for row in rows}) == 1

    def test_hn_table_is_shared(self, heat_run):
        body = (heat_run["dir"] / "hn.csv").read_text()
        assert body == rn.hn_table_csv()

    def test_snapshots_readable(self, heat_run):
        files = [n for n in heat_run["manifest"].files
                 if n.startswith("u_")]
        assert len(files) == 11
        field = read_snapshot(heat_run["dir"] / "u_000004.npz")
        assert field.values.shape == (64,)
        assert field.time_tag == pytest.approx(4 * 50 * 5.0e-5)

    def test_bounds_filter_drops_other_kinds(self, tmp_path):
        cfg = dataclasses.replace(validate_config(_text(HEAT)),
                                  bounds=("dissip4",))
        man = rn.run_scenario(cfg, tmp_path)
        _, rows = _columns(tmp_path / cfg.output_dir / "dissipation.csv")
        assert {row[3] for row in rows} == {"dissip4"}
        assert "dissip0" not in man.summary
        assert "F1bd" in man.summary


class TestVorticityOutputs:
    def test_emits_cylinder_artifacts(self, cyl_run):
        files = cyl_run["manifest"].files
        for name in ("enstrophy.csv", "bounds.csv", "decay.csv",
                     "vorticity_history.npz", "omega_000000.npz",
                     "mean_000002.npz"):
            assert name in files, name

    def test_all_window_checks_pass(self, cyl_run):
        man = cyl_run["manifest"]
        assert man.exit_code == 0
        for kind in ("omconv1", "window_balance", "velocity", "mean_flow"):
            assert man.summary[kind]["failed"] == 0, kind

    def test_decay_row(self, cyl_run):
        header, rows = _columns(cyl_run["dir"] / "decay.csv")
        assert header == ["T", "alpha", "beta", "J_measure",
                          "excursion_measure", "K0"]
        (row,) = rows
        assert float(row[0]) == pytest.approx(0.5, rel=1e-9)
        assert 0.0 <= float(row[2]) <= float(row[1]) <= 0.5
        assert float(row[5]) > 0.0

    def test_verifies_cleanly(self, cyl_run):
        assert rn.verify_run(cyl_run["dir"]) == []

    def test_rough_seed_breaks_window_balance(self, tmp_path):
        man = _run(CYL, tmp_path, seed=4)["manifest"]
        assert man.exit_code == 1
        assert man.summary["window_balance"]["failed"] >= 1


class TestExitCodes:
    def _report(self, kind, passed, **context):
        lhs = 2.0 if not passed else 0.0
        return BoundReport(kind, lhs, 1.0, 1.0 - lhs, passed, context)

    def test_asymptotic_failure_keeps_success(self):
        reports = [self._report("dissip1", False, asymptotic=True),
                   self._report("F1bd", True)]
        balance = [rn._BalanceRow(1.0, 0.0, 1.0)]
        summary, code = rn._scalar_summary(reports, balance)
        assert code == 0
        assert summary["dissip1"]["failed"] == 1

    def test_sharp_failure_fails_the_run(self):
        reports = [self._report("F1bd", False)]
        balance = [rn._BalanceRow(1.0, 0.0, 1.0)]
        _, code = rn._scalar_summary(reports, balance)
        assert code == 1

    def test_balance_breach_fails_the_run(self):
        reports = [self._report("F1bd", True)]
        balance = [rn._BalanceRow(1.0, 5.0, 1.0)]
        summary, code = rn._scalar_summary(reports, balance)
        assert code == 1
        assert summary["balance"]["failed"] == 1

    def test_instability_propagates(self, tmp_path):
        # The wave stepper keeps its Laplacian explicit, so a dt far past
        # the advective limit blows up within a few steps.
        cfg = dataclasses.replace(validate_config(_text(HEAT)),
                                  model="damped_wave", dt=5.0e-2,
                                  t_final=5.0)
        with pytest.raises(InstabilityError):
            rn.run_scenario(cfg, tmp_path)


class TestHnTable:
    def test_exact_columns(self):
        header, rows = _columns_from_text(rn.hn_table_csv())
        assert header == ["r", "h1", "h2", "h3", "h4"]
        assert len(rows) == 121
        for row in rows:
            r = float(row[0])
            assert float(row[1]) == 1.0
            assert float(row[3]) == pytest.approx(1.0 + 1.0 / r, rel=1e-10)

    def test_grid_is_increasing(self):
        _, rows = _columns_from_text(rn.hn_table_csv())
        rs = [float(row[0]) for row in rows]
        assert rs == sorted(rs)
        assert rs[0] == pytest.approx(0.05)
        assert rs[-1] == pytest.approx(20.0)


def _columns_from_text(text):
    lines = text.splitlines()
    return lines[0].split(","), [line.split(",") for line in lines[1:]]
