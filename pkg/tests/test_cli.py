"""Config schema, presets, CSV/manifest emission, exit codes."""

import copy
import csv
import json
import os

import pytest

from coopsense.cli import (
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_RUNTIME,
    PRESETS,
    SCENARIOS,
    ConfigError,
    main,
    validate_config,
)


def croc_config(out_dir, **over):
    cfg = {
        "scenario": "croc",
        "network": {"K": 3, "N": 20, "L": 0, "sigma_z2": 10.0,
                    "alpha": 0.05, "eta": 0.3},
        "channels": [{"snr_db": 12.0}, {"snr_db": 5.0}, {"snr_db": 10.0}],
        "signal": {"power": 1.0, "rho": 0.1},
        "schedule": {"source": "fixed", "p0": 0.7},
        "trials": 1500,
        "seed": 11,
        "out_dir": str(out_dir),
        "sweep": {"alphas": [0.05, 0.2]},
    }
    cfg.update(over)
    return cfg


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh)
    return str(path)


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


class TestValidation:
    def test_resolves_defaults(self):
        """Optional fields come back filled with their documented defaults."""
        cfg = croc_config("x")
        del cfg["trials"], cfg["seed"]
        out = validate_config(cfg)
        assert out["trials"] == 100_000
        assert out["seed"] == 0
        assert out["weights"] == "optimal"
        assert out["summary_mode"] == "physics"
        assert out["network"]["prior_h1"] == 0.5

    def test_unknown_field_rejected_with_path(self):
        cfg = croc_config("x")
        cfg["network"]["bogus"] = 1
        with pytest.raises(ConfigError, match="network.bogus: unknown"):
            validate_config(cfg)

    def test_scenario_mismatched_field(self):
        """Known fields that a scenario does not consume are refused too."""
        cfg = {"scenario": "fig4", "network": {"K": 3, "N": 20},
               "signal": {"rho": 0.1},
               "channels": [{"snr_db": 5.0}] * 3}
        with pytest.raises(ConfigError, match="channels: not used"):
            validate_config(cfg)

    def test_empty_channel_list(self):
        cfg = croc_config("x", channels=[])
        with pytest.raises(ConfigError, match="channels: must be a nonempty"):
            validate_config(cfg)

    def test_channel_count_must_match_K(self):
        cfg = croc_config("x")
        cfg["channels"] = cfg["channels"][:2]
        with pytest.raises(ConfigError, match="network.K = 3"):
            validate_config(cfg)

    def test_missing_required_field(self):
        cfg = croc_config("x")
        del cfg["schedule"]
        with pytest.raises(ConfigError, match="schedule: required field"):
            validate_config(cfg)

    def test_nested_range_diagnostics(self):
        cfg = croc_config("x")
        cfg["sweep"]["alphas"] = [0.05, 1.5]
        with pytest.raises(ConfigError, match=r"sweep.alphas\[1\]"):
            validate_config(cfg)

    def test_schedule_needs_exactly_one_parameterization(self):
        cfg = croc_config("x")
        cfg["schedule"] = {"source": "fixed", "p0": 0.7,
                           "p": [0.7, 0.7, 0.7]}
        with pytest.raises(ConfigError, match="exactly one of p0 or p"):
            validate_config(cfg)

    def test_schedule_vector_length(self):
        cfg = croc_config("x")
        cfg["schedule"] = {"source": "fixed", "p": [0.7, 0.7]}
        with pytest.raises(ConfigError, match="exactly 3 entries"):
            validate_config(cfg)

    def test_signal_parameterizations_exclusive(self):
        cfg = croc_config("x")
        cfg["signal"] = {"rho": 0.1, "ma_window": 4}
        with pytest.raises(ConfigError, match="not both"):
            validate_config(cfg)

    def test_node_count_divisibility(self):
        cfg = {"scenario": "fig9", "network": {"K": 4, "N": 20},
               "signal": {"rho": 0.1}}
        with pytest.raises(ConfigError, match="multiple of 3"):
            validate_config(cfg)

    def test_fig9_target_domain(self):
        cfg = {"scenario": "fig9", "network": {"K": 3, "N": 20},
               "signal": {"rho": 0.1}, "sweep": {"target_pmd": 1.5}}
        with pytest.raises(ConfigError, match="target_pmd"):
            validate_config(cfg)

    def test_assumed_annotation_shape(self):
        cfg = croc_config("x", assumed={"seed": False})
        with pytest.raises(ConfigError, match="assumed"):
            validate_config(cfg)

    def test_resolution_is_idempotent(self):
        """Validating an already-resolved config returns it unchanged."""
        resolved = validate_config(croc_config("x"))
        assert validate_config(copy.deepcopy(resolved)) == resolved

    def test_all_presets_validate(self):
        """Every bundled preset passes its own schema."""
        for name, preset in PRESETS.items():
            out = validate_config(copy.deepcopy(preset))
            assert out["scenario"] == name
            assert name in SCENARIOS


class TestMainEntry:
    def test_no_arguments_is_config_error(self, capsys):
        assert main([]) == EXIT_CONFIG
        capsys.readouterr()

    def test_help_exits_clean(self, capsys):
        assert main(["--help"]) == EXIT_OK
        capsys.readouterr()

    def test_invalid_json_reports_line(self, tmp_path, capsys):
        path = tmp_path / "broken.json"
        path.write_text('{"scenario": "croc",')
        assert main(["validate", str(path)]) == EXIT_CONFIG
        assert "invalid JSON at line" in capsys.readouterr().err

    def test_missing_file(self, tmp_path, capsys):
        assert main(["validate", str(tmp_path / "nope.json")]) == EXIT_CONFIG
        assert "unreadable" in capsys.readouterr().err

    def test_unknown_preset(self, capsys):
        assert main(["preset", "fig99"]) == EXIT_CONFIG
        assert "unknown preset" in capsys.readouterr().err

    def test_bad_thread_env(self, tmp_path, monkeypatch, capsys):
        cfg = write_json(tmp_path / "c.json", croc_config(tmp_path / "o"))
        monkeypatch.setenv("COOPSENSE_THREADS", "zero")
        assert main(["validate", cfg]) == EXIT_CONFIG
        assert "COOPSENSE_THREADS" in capsys.readouterr().err

    def test_thread_cap_accepted(self, tmp_path, monkeypatch, capsys):
        cfg = write_json(tmp_path / "c.json", croc_config(tmp_path / "o"))
        monkeypatch.setenv("COOPSENSE_THREADS", "1")
        assert main(["validate", cfg]) == EXIT_OK
        capsys.readouterr()


class TestRunCommand:
    def test_croc_end_to_end(self, tmp_path, capsys):
        """A validated config produces the CSV, the manifest, no marker."""
        out = tmp_path / "out"
        cfg = write_json(tmp_path / "c.json", croc_config(out))
        assert main(["run", cfg]) == EXIT_OK
        capsys.readouterr()
        rows = read_csv(out / "croc.csv")
        assert rows[0] == ["alpha", "pf_emp", "pf_ci", "pmd_emp", "pmd_ci",
                           "pmd_analytic"]
        assert len(rows) == 3
        man = json.load(open(out / "croc_manifest.json"))
        assert man["tool"] == "coopsense"
        assert man["seed"] == 11
        assert man["config"]["scenario"] == "croc"
        assert {o["file"] for o in man["outputs"]} == {"croc.csv"}
        assert all("sha256" in o and "rows" in o for o in man["outputs"])
        assert "wall_time_s" in man and "numpy" in man
        assert not (out / "croc.partial").exists()

    def test_identical_config_reproduces_bytes(self, tmp_path, capsys):
        """Same seed and config give byte-identical CSV output."""
        a = tmp_path / "a"
        b = tmp_path / "b"
        main(["run", write_json(tmp_path / "a.json", croc_config(a))])
        main(["run", write_json(tmp_path / "b.json", croc_config(b))])
        capsys.readouterr()
        assert (a / "croc.csv").read_bytes() == (b / "croc.csv").read_bytes()

    def test_manifest_round_trip(self, tmp_path, capsys):
        """Re-running from the emitted manifest reproduces the same bytes."""
        out = tmp_path / "out"
        main(["run", write_json(tmp_path / "c.json", croc_config(out))])
        man = json.load(open(out / "croc_manifest.json"))
        man["config"]["out_dir"] = str(tmp_path / "redo")
        redo = write_json(tmp_path / "redo.json", man)
        assert main(["run", redo]) == EXIT_OK
        capsys.readouterr()
        assert (out / "croc.csv").read_bytes() == \
            (tmp_path / "redo" / "croc.csv").read_bytes()

    def test_runtime_failure_leaves_marker(self, tmp_path, capsys):
        """A config that is schema-valid but fails during execution exits 2
        and leaves the .partial marker behind."""
        out = tmp_path / "out"
        cfg = croc_config(out)
        cfg["signal"] = {"power": 1.0, "rho": 0.9}
        path = write_json(tmp_path / "c.json", cfg)
        assert main(["run", path]) == EXIT_RUNTIME
        capsys.readouterr()
        assert (out / "croc.partial").exists()

    def test_dc_schedule_source(self, tmp_path, capsys):
        """The dc-sdp schedule source solves the design program in-line."""
        out = tmp_path / "out"
        cfg = croc_config(out, schedule={"source": "dc-sdp", "n_radii": 6,
                                         "refine_iters": 1})
        assert main(["run", write_json(tmp_path / "c.json", cfg)]) == EXIT_OK
        capsys.readouterr()
        assert (out / "croc.csv").exists()

    def test_npc_schedule_source(self, tmp_path, capsys):
        out = tmp_path / "out"
        cfg = croc_config(out, schedule={"source": "npc-kkt"})
        assert main(["run", write_json(tmp_path / "c.json", cfg)]) == EXIT_OK
        capsys.readouterr()
        assert (out / "croc.csv").exists()


class TestPresetRuns:
    def test_fig4_columns(self, tmp_path, capsys):
        out = tmp_path / "fig4"
        assert main(["preset", "fig4", "--trials", "300", "--out",
                     str(out)]) == EXIT_OK
        capsys.readouterr()
        rows = read_csv(out / "fig4_delta1_L0.csv")
        assert rows[0] == ["snr0_db", "delta_db", "L", "p0", "pd_analytic",
                           "pd_empirical", "ci_lo", "ci_hi"]
        assert len(rows) == 7
        pd_an = [float(r[4]) for r in rows[1:]]
        assert pd_an == sorted(pd_an)

    def test_fig6_columns(self, tmp_path, capsys):
        out = tmp_path / "fig6"
        assert main(["preset", "fig6", "--trials", "300", "--out",
                     str(out)]) == EXIT_OK
        capsys.readouterr()
        names = sorted(p.name for p in out.glob("*.csv"))
        assert len(names) == 8
        rows = read_csv(out / "fig6_eta0.9_L1.csv")
        assert rows[0] == ["eta", "L", "alpha", "pf_emp", "pmd_emp",
                           "pmd_analytic"]
        assert all(r[0] == "0.9" and r[1] == "1" for r in rows[1:])

    def test_fig8_small(self, tmp_path, capsys):
        out = tmp_path / "fig8"
        assert main(["preset", "fig8", "--trials", "200", "--out",
                     str(out)]) == EXIT_OK
        capsys.readouterr()
        for method in ("interrupted", "benchmark"):
            rows = read_csv(out / f"fig8_{method}.csv")
            assert rows[0] == ["var", "n_seeds", "pe_mean", "pe_sd"]
            assert len(rows) == 7
            assert rows[1][1] == "1" and rows[2][1] == "5"

    def test_seed_override_changes_output(self, tmp_path, capsys):
        a = tmp_path / "a"
        b = tmp_path / "b"
        main(["preset", "fig5", "--trials", "300", "--out", str(a)])
        main(["preset", "fig5", "--trials", "300", "--seed", "77",
              "--out", str(b)])
        capsys.readouterr()
        pa = a / "fig5_p00.6_L0.csv"
        pb = b / "fig5_p00.6_L0.csv"
        assert pa.read_bytes() != pb.read_bytes()


class TestCustomScenarios:
    def test_fig7_small(self, tmp_path, capsys):
        cfg = {
            "scenario": "fig7",
            "network": {"K": 3, "N": 20, "L": 0, "sigma_z2": 10.0,
                        "alpha": 0.01},
            "signal": {"power": 1.0, "rho": 0.1},
            "trials": 1500,
            "seed": 7,
            "out_dir": str(tmp_path / "fig7"),
            "sweep": {"node_counts": [3], "alphas": [0.05, 0.1],
                      "n_radii": 6, "refine_iters": 1},
        }
        assert main(["run", write_json(tmp_path / "c.json", cfg)]) == EXIT_OK
        capsys.readouterr()
        rows = read_csv(tmp_path / "fig7" / "fig7_K3.csv")
        assert rows[0] == ["K", "alpha", "pf_emp", "pmd_emp", "pmd_model",
                           "pmd_benchmark"]
        for r in rows[1:]:
            assert 0.0 <= float(r[4]) <= 1.0
            assert 0.0 <= float(r[5]) <= 1.0

    def test_fig9_small(self, tmp_path, capsys):
        cfg = {
            "scenario": "fig9",
            "network": {"K": 3, "N": 20, "L": 0, "sigma_z2": 10.0,
                        "alpha": 0.1},
            "signal": {"power": 1.0, "rho": 0.1},
            "seed": 9,
            "out_dir": str(tmp_path / "fig9"),
            "sweep": {"snr0_db": [5.0], "deltas_db": [1.0],
                      "etas": [0.1, 0.9], "target_pmd": 0.7,
                      "n_radii": 6, "refine_iters": 1, "tol_db": 0.05},
        }
        assert main(["run", write_json(tmp_path / "c.json", cfg)]) == EXIT_OK
        capsys.readouterr()
        rows = read_csv(tmp_path / "fig9" / "fig9_snr5_delta1.csv")
        assert rows[0] == ["snr0_db", "delta_db", "eta", "target_pmd",
                           "loss_db", "reachable"]
        assert [r[5] for r in rows[1:]] == ["true", "true"]
        assert float(rows[2][4]) > float(rows[1][4])


class TestDumpSdp:
    def test_dump_to_file(self, tmp_path, capsys):
        cfg = write_json(tmp_path / "c.json", croc_config(tmp_path / "o"))
        out = tmp_path / "sdp.json"
        assert main(["dump-sdp", cfg, "--out", str(out)]) == EXIT_OK
        capsys.readouterr()
        payload = json.load(open(out))
        assert payload["n"] == 3
        assert len(payload["d_mu"]) == 3
        assert len(payload["sweep"]["p"]) == 3
        assert all(0.0 <= p <= 1.0 for p in payload["sweep"]["p"])
        assert payload["r_feasible"] <= payload["r_max"] + 1e-12

    def test_requires_explicit_channels(self, tmp_path, capsys):
        cfg = {"scenario": "fig9", "network": {"K": 3, "N": 20},
               "signal": {"rho": 0.1}}
        path = write_json(tmp_path / "c.json", cfg)
        assert main(["dump-sdp", path]) == EXIT_CONFIG
        assert "explicit channel" in capsys.readouterr().err
