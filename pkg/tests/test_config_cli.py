import json
import os

import numpy as np
import pytest

from kgeft.cli import RunManifest, dispatch, emit_plot_data, main, run_directory
from kgeft.config import RunConfig, parse_config, parse_text, serialize, write_config
from kgeft.errors import MissingArtifact, ParseError, ValidationError

SMALL = """[grid]
n = 128
L = 100
[data]
generator = gaussian
[numerics]
T = 4
"""


def write(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def listed_files(man):
    found = set()
    for root, _, files in os.walk(man.directory):
        for f in files:
            rel = os.path.relpath(os.path.join(root, f), man.directory)
            if rel != "manifest.json":
                found.add(rel)
    return found


class TestConfig:
    def test_minimal_config_gets_defaults(self, tmp_path):
        cfg = parse_config(write(tmp_path, "[grid]\nn = 512\nL = 400\n[data]\ngenerator = gaussian\n"))
        assert cfg.physics.M == 16.0 and cfg.numerics.T == 150.0 and cfg.numerics.dt is None

    def test_causality_rule(self, tmp_path):
        text = "[grid]\nL = 100\n[data]\nsupport_radius = 10\n[numerics]\nT = 100\n"
        with pytest.raises(ValidationError) as err:
            parse_config(write(tmp_path, text))
        assert err.value.rule == "causality" and "needs L >= 220" in str(err.value)

    def test_audit_flags(self):
        audit = RunConfig().with_values(numerics={"N": 8, "k": 5, "a_reg": 2.0}).audit()
        assert audit["N>=k+3"] and not audit["N>k+6"]

    def test_parse_error_location(self):
        with pytest.raises(ParseError) as err:
            parse_text("[grid]\nL = abc\n")
        assert (err.value.line, err.value.column) == (2, 5)

    def test_unknown_key(self):
        with pytest.raises(ParseError):
            parse_text("[grid]\nsize = 3\n")

    def test_grid_size_rule(self):
        with pytest.raises(ValidationError):
            RunConfig().with_values(grid={"n": 100}).validate()

    def test_round_trip(self, tmp_path):
        cfg = RunConfig().with_values(physics={"M": 32.0, "include_u2v": True}, run={"M_list": (4.0, 8.0)})
        assert parse_text(serialize(cfg)) == cfg
        assert parse_config(write_config(cfg, tmp_path / "c.ini"), validate=False) == cfg

    def test_hash_is_stable(self):
        a = RunConfig().with_values(physics={"M": 8.0})
        b = parse_text(serialize(a))
        assert a.config_hash == b.config_hash
        assert a.config_hash != RunConfig().config_hash

    def test_seed_streams(self):
        cfg = RunConfig()
        a = cfg.rng(1).standard_normal(4)
        assert np.array_equal(a, cfg.rng(1).standard_normal(4))
        assert not np.array_equal(a, cfg.rng(2).standard_normal(4))


class TestDispatch:
    def test_zero_simulation(self, tmp_path):
        cfg = parse_config(write(tmp_path, SMALL.replace("gaussian", "zero")))
        man = dispatch(cfg, tmp_path / "run")
        assert man.passed and man.monitors
        with open(man.path("trace.csv")) as fh:
            rows = list(fh)[1:]
        assert rows and all(float(v) == 0.0 for r in rows for v in r.strip().split(",")[1:] if v != "untracked")

    def test_every_file_is_listed(self, tmp_path):
        cfg = parse_config(write(tmp_path, SMALL))
        man = dispatch(cfg, tmp_path / "run")
        emit_plot_data(man, "decay_curves")
        back = RunManifest.read(man.directory)
        assert listed_files(back) == set(back.artifacts)

    def test_missing_artifact(self, tmp_path):
        cfg = parse_config(write(tmp_path, SMALL))
        man = dispatch(cfg, tmp_path / "run")
        with pytest.raises(MissingArtifact):
            emit_plot_data(man, "sweep_slopes")

    def test_content_addressed_directory(self, tmp_path, monkeypatch):
        monkeypatch.setenv("KGEFT_OUTPUT_ROOT", str(tmp_path / "root"))
        cfg = parse_config(write(tmp_path, SMALL))
        man = dispatch(cfg)
        assert man.directory == os.path.abspath(run_directory(cfg))
        assert os.path.basename(man.directory) == f"simulate-{cfg.config_hash[:12]}"


class TestCommandLine:
    def test_simulate_exit_zero(self, tmp_path, capsys):
        cfg = write(tmp_path, SMALL)
        assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
        assert json.loads(capsys.readouterr().out)["monitors"]["xnorm_bound"] is True

    def test_monitor_failure_exit_one(self, tmp_path):
        cfg = write(tmp_path, SMALL + "[monitors]\nxnorm_bound = 1e-9\n")
        assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "a")]) == 1

    def test_config_error_exit_two(self, tmp_path):
        cfg = write(tmp_path, SMALL)
        assert main(["simulate", "--config", cfg, "--T", "500"]) == 2
        assert main(["simulate", "--bogus"]) == 2

    def test_runtime_error_exit_three(self, tmp_path):
        cfg = write(tmp_path, SMALL)
        assert main(["certify", "--config", cfg, "--trajectory", str(tmp_path / "none"),
                     "--out", str(tmp_path / "c")]) == 3

    def test_eft_solve_then_certify(self, tmp_path):
        cfg = write(tmp_path, SMALL)
        assert main(["eft-solve", "--config", cfg, "--order", "0", "--out", str(tmp_path / "e")]) in (0, 1)
        code = main(["certify", "--config", cfg, "--trajectory", str(tmp_path / "e"), "--out", str(tmp_path / "c")])
        assert code in (0, 1)
        assert os.path.exists(tmp_path / "c" / "residual.csv")

    def test_resonance_sheets(self, tmp_path):
        out = tmp_path / "r"
        assert main(["resonance", "--M", "4,32", "--check", "separation", "--out", str(out)]) in (0, 1)
        files = emit_plot_data(RunManifest.read(out), "resonance_sheets")
        names = sorted(os.path.basename(f) for f in files)
        assert names == ["resonance_sheet_M32_large.csv", "resonance_sheet_M32_small.csv",
                         "resonance_sheet_M4_large.csv", "resonance_sheet_M4_small.csv"]
        header = open(files[0]).readline().strip()
        assert header == "nu_par,nu_perp,phi,grad_phi_norm,chi_S"

    def test_sweep_layout_and_determinism(self, tmp_path):
        cfg = write(tmp_path, SMALL)
        args = ["sweep", "--config", cfg, "--experiment", "scattering_gap", "--orders", "0", "--M", "8,16,32,64"]
        for d in ("a", "b"):
            assert main(args + ["--out", str(tmp_path / d)]) in (0, 1)
        for name in ("sweep.csv", "M8-n0/trace.csv", "M64-n0/trace.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        man = RunManifest.read(tmp_path / "a")
        assert listed_files(man) == set(man.artifacts)
        slopes = emit_plot_data(man, "sweep_slopes")[0]
        assert open(slopes).readline().strip() == "series,M,metric,fit,residual"
