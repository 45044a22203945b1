from pathlib import Path

import pytest
import yaml

from fluxlab import config as cf

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def scalar(**over):
    """A valid truncated-line scenario; tests mutate single keys."""
    base = {
        "schema_version": 1,
        "name": "t",
        "model": "reaction_diffusion",
        "domain": {"kind": "line", "lengths": [40.0], "counts": [256],
                   "boundaries": ["neumann"]},
        "initial": {"preset": "kink_pair", "a": 2.0},
        "time": {"dt": 5.0e-3, "t_final": 25.0},
        "radii": [1.0, 4.0],
    }
    base.update(over)
    return base


def cylinder(**over):
    base = {
        "schema_version": 1,
        "name": "v",
        "model": "vorticity",
        "domain": {"kind": "cylinder", "lengths": [16.0],
                   "counts": [64, 8]},
        "initial": {"preset": "rest"},
        "time": {"dt": 1.0e-2, "t_final": 1.0},
        "radii": [2.0],
    }
    base.update(over)
    return base


def validate(mapping):
    return cf.validate_config(yaml.safe_dump(mapping))


def errors_of(mapping):
    with pytest.raises(cf.ConfigError) as info:
        validate(mapping)
    return info.value.errors


class TestParse:
    def test_minimal_scalar(self):
        cfg = validate(scalar())
        assert cfg.name == "t"
        assert cfg.model == "reaction_diffusion"
        assert cfg.domain.axes[0].boundary == "neumann"
        assert cfg.initial == {"preset": "kink_pair", "a": 2.0}
        assert cfg.dt == 5.0e-3
        assert cfg.radii == (1.0, 4.0)
        assert cfg.record_every == 1 and cfg.checkpoint_every == 0
        assert cfg.bounds is None
        assert cfg.balance_kappa == 500.0
        assert cfg.contamination_pad == 2.0
        assert cfg.seed == 0
        assert cfg.output_dir == "t"
        assert cfg.n_steps == 5000
        assert cfg.wants_census and not cfg.is_vorticity

    def test_vorticity_minimal(self):
        cfg = validate(cylinder())
        assert cfg.is_vorticity and not cfg.wants_census
        assert cfg.decay_alpha == 0.25
        assert cfg.domain.axes[1].length == 1.0

    def test_radius_at_the_margin(self):
        # L/2 - pad - sqrt(t_final) = 20 - 2 - 5 exactly.
        cfg = validate(scalar(radii=[13.0]))
        assert cfg.radii == (13.0,)

    def test_tolerance_override_is_partial(self):
        cfg = validate(scalar(tolerances={"slack_kappa": 4.0}))
        assert cfg.slack_kappa == 4.0
        assert cfg.report_tol == 1.0e-6
        assert cfg.asymptotic_slack == 0.5

    def test_bounds_subset(self):
        cfg = validate(scalar(bounds=["dissip1", "dissip4"]))
        assert cfg.bounds == ("dissip1", "dissip4")

    def test_checkpoint_alignment_accepted(self):
        cfg = validate(scalar(time={"dt": 5.0e-3, "t_final": 25.0,
                                    "record_every": 5,
                                    "checkpoint_every": 500}))
        assert cfg.checkpoint_every == 500

    def test_occupancy_defaults(self):
        cfg = validate(scalar(occupancy={"radius": 0.5}))
        assert cfg.occupancy["radius"] == 0.5
        assert cfg.occupancy["observation_radius"] == 20.0
        assert cfg.occupancy["reference"] is None

    def test_load_config(self, tmp_path):
        path = tmp_path / "s.yaml"
        path.write_text(yaml.safe_dump(scalar()), encoding="utf-8")
        assert cf.load_config(path).name == "t"

    def test_digest_tracks_text(self):
        a = cf.config_digest("name: a\n")
        assert len(a) == 64 and int(a, 16) >= 0
        assert a == cf.config_digest("name: a\n")
        assert a != cf.config_digest("name: b\n")

    def test_golden_files_validate(self):
        paths = sorted(CONFIG_DIR.glob("*.yaml"))
        assert len(paths) == 6
        for path in paths:
            cfg = cf.load_config(path)
            assert cfg.name == path.stem


class TestErrors:
    def test_nonpositive_dt_names_the_key(self):
        errs = errors_of(scalar(time={"dt": 0.0, "t_final": 25.0}))
        assert any(e.startswith("time.dt:") and "positive" in e
                   for e in errs)

    def test_contamination_margin(self):
        errs = errors_of(scalar(radii=[14.0]))
        assert len(errs) == 1
        assert errs[0].startswith("radii:")
        assert "contamination" in errs[0] and "axis 0" in errs[0]

    def test_periodic_ball_must_fit(self):
        over = scalar(radii=[21.0])
        del over["domain"]["boundaries"]
        errs = errors_of(over)
        assert "does not fit the periodic axis" in errs[0]

    def test_defects_are_aggregated(self):
        errs = errors_of(scalar(name="no spaces",
                                time={"dt": -1.0, "t_final": 25.0},
                                radii=[14.0]))
        keys = {e.split(":")[0] for e in errs}
        assert {"name", "time.dt", "radii"} <= keys

    def test_schema_version(self):
        errs = errors_of(scalar(schema_version=2))
        assert errs == ["schema_version: expected 1, got 2"]
        over = scalar()
        del over["schema_version"]
        assert any("schema_version" in e for e in errors_of(over))

    def test_unknown_top_level_key(self):
        assert errors_of(scalar(extra=1)) == ["extra: unknown key"]

    def test_unknown_model_does_not_stop_validation(self):
        errs = errors_of(scalar(model="navier",
                                time={"dt": 0.0, "t_final": 25.0}))
        keys = {e.split(":")[0] for e in errs}
        assert {"model", "time.dt"} <= keys

    def test_domain_kind(self):
        over = scalar()
        over["domain"] = {"kind": "cube", "lengths": [1.0], "counts": [64]}
        assert any(e.startswith("domain.kind:") for e in errors_of(over))

    def test_domain_too_coarse(self):
        over = scalar()
        over["domain"]["counts"] = [4]
        assert any(e.startswith("domain:") for e in errors_of(over))

    def test_cylinder_rejects_boundaries(self):
        over = cylinder()
        over["domain"]["boundaries"] = ["periodic", "periodic"]
        assert any(e.startswith("domain.boundaries:")
                   for e in errors_of(over))

    def test_model_domain_mismatch(self):
        errs = errors_of(cylinder(domain={"kind": "line", "lengths": [16.0],
                                          "counts": [64]}))
        assert any("cylinder domain" in e for e in errs)
        errs = errors_of(scalar(domain={"kind": "cylinder",
                                        "lengths": [16.0],
                                        "counts": [64, 8]},
                                initial={"preset": "constant"}))
        assert any("line or plane" in e for e in errs)

    def test_unknown_preset(self):
        errs = errors_of(scalar(initial={"preset": "blob"}))
        assert errs[0].startswith("initial.preset:")
        assert "kink_lattice" in errs[0]

    def test_kink_pair_needs_a(self):
        errs = errors_of(scalar(initial={"preset": "kink_pair"}))
        assert any(e.startswith("initial.a:") for e in errs)

    def test_kink_lattice_shell_order(self):
        errs = errors_of(scalar(initial={"preset": "kink_lattice",
                                         "b": [3.0, 2.0]}))
        assert any("increasing" in e for e in errs)

    def test_kink_is_one_dimensional(self):
        over = scalar(initial={"preset": "kink"})
        over["domain"] = {"kind": "plane", "lengths": [16.0, 16.0],
                         "counts": [64, 64]}
        over["radii"] = [4.0]
        assert any("one-dimensional" in e for e in errors_of(over))

    def test_random_smooth_amplitude(self):
        errs = errors_of(scalar(initial={"preset": "random_smooth",
                                         "amplitude": -1.0}))
        assert any(e.startswith("initial.amplitude:") for e in errs)

    def test_foreign_model_parameter(self):
        errs = errors_of(scalar(params={"alpha": 0.1}))
        assert errs[0].startswith("params.alpha:")
        assert "not a parameter" in errs[0]

    def test_bad_potential_table(self):
        errs = errors_of(scalar(params={"potential": {"kind": "cubic"}}))
        assert errs[0].startswith("params.potential:")

    def test_negative_alpha(self):
        over = scalar(model="ginzburg_landau",
                      initial={"preset": "constant", "value": 1.0},
                      params={"alpha": -0.5})
        assert any(e.startswith("params.alpha:") for e in errors_of(over))

    def test_a_coeffs_must_be_a_list(self):
        over = scalar(model="nonlinear_diffusion",
                      initial={"preset": "constant", "value": 1.0},
                      params={"a_coeffs": "x"})
        assert any(e.startswith("params.a_coeffs:")
                   for e in errors_of(over))

    def test_stability_cap(self):
        errs = errors_of(scalar(time={"dt": 1.0e-2, "t_final": 25.0}))
        assert any("stability cap" in e for e in errs)

    def test_checkpoint_must_align_with_records(self):
        errs = errors_of(scalar(time={"dt": 5.0e-3, "t_final": 25.0,
                                      "record_every": 3,
                                      "checkpoint_every": 10}))
        assert any("multiple of record_every" in e for e in errs)

    def test_no_vorticity_checkpoints(self):
        errs = errors_of(cylinder(time={"dt": 1.0e-2, "t_final": 1.0,
                                        "checkpoint_every": 10}))
        assert any("not supported" in e for e in errs)

    def test_unknown_bound_kind(self):
        errs = errors_of(scalar(bounds=["dissipX"]))
        assert any("unknown bound kind" in e for e in errs)

    def test_tolerances(self):
        errs = errors_of(scalar(tolerances={"foo": 1.0,
                                            "report_tol": -1.0}))
        keys = {e.split(":")[0] for e in errs}
        assert {"tolerances.foo", "tolerances.report_tol"} <= keys

    def test_occupancy_needs_radius(self):
        errs = errors_of(scalar(occupancy={}))
        assert any(e.startswith("occupancy.radius:") for e in errs)

    def test_occupancy_is_scalar_only(self):
        errs = errors_of(cylinder(occupancy={"radius": 0.5}))
        assert any("scalar models" in e for e in errs)

    def test_occupancy_reference_is_checked(self):
        errs = errors_of(scalar(occupancy={"radius": 0.5,
                                           "reference": {"preset": "blob"}}))
        assert any(e.startswith("occupancy.reference.preset:")
                   for e in errs)

    def test_decay_is_vorticity_only(self):
        errs = errors_of(scalar(decay={"alpha": 0.25}))
        assert any("vorticity" in e for e in errs)
        errs = errors_of(cylinder(decay={"alpha": 0.7}))
        assert any("[0, 1/2]" in e for e in errs)

    def test_t_final_below_dt(self):
        errs = errors_of(scalar(time={"dt": 5.0e-3, "t_final": 1.0e-3}))
        assert any(e.startswith("time.t_final:") for e in errs)

    def test_decay_window_must_fit_the_cylinder(self):
        # 2 sqrt(100) = 20 > 16, so the sqrt(T) window wraps around.
        errs = errors_of(cylinder(time={"dt": 1.0e-2, "t_final": 100.0}))
        assert any("decay window" in e for e in errs)

    def test_boolean_is_not_an_integer(self):
        errs = errors_of(scalar(seed=True))
        assert any(e.startswith("seed:") for e in errs)

    def test_output_dir_token(self):
        errs = errors_of(scalar(output_dir="a/b"))
        assert any(e.startswith("output_dir:") for e in errs)

    def test_unparseable_yaml(self):
        with pytest.raises(cf.ConfigError) as info:
            cf.validate_config("a: [unclosed")
        assert "not parseable" in info.value.errors[0]

    def test_top_level_must_be_mapping(self):
        with pytest.raises(cf.ConfigError) as info:
            cf.validate_config("- 1\n- 2\n")
        assert "top level" in info.value.errors[0]
