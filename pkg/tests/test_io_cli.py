import json
import os
from pathlib import Path

import numpy as np
import pytest
import yaml

from tdmtrap.chain import ChainParams, Trace, pick, simulate
from tdmtrap.cli import format_uncertainty, main
from tdmtrap.compiler import compile_schedule
from tdmtrap.config import ConfigError, RunConfig
from tdmtrap.io import (atomic_write_text, read_schedule_csv, read_trace_csv,
                        write_schedule_csv, write_trace_csv)
from tdmtrap.waveform import constant_waveform

DEMO_CONFIG = Path(__file__).resolve().parents[1] / "configs" / "demonstration.yaml"
DEMO_LEVELS = [0.0, 0.0, 10.4, 10.4, 0.8, 0.0, 10.4, 10.4, 0.0, 0.0]


def constants(levels, duration=1e-6):
    return [{"channel": c, "segments": [{"kind": "constant", "duration": duration, "level": v}]}
            for c, v in enumerate(levels)]


def write_config(tmp_path, **sections):
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump(sections))
    return path


def run(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr()


class TestFormats:
    def test_schedule_csv_round_trip(self, tmp_path, spec, gain):
        sched, _ = compile_schedule([constant_waveform(c, 3.0 * c, 1e-6) for c in range(3)], spec, gain)
        path = write_schedule_csv(tmp_path / "s.csv", sched)
        assert path.read_text().splitlines()[0] == "code,channel"
        back = read_schedule_csv(path, sched.frame_period)
        assert np.array_equal(back.codes, sched.codes) and back.n_channels == 3

    def test_trace_csv_round_trip_is_exact(self, tmp_path):
        tr = Trace("amp_out", 4, 0.0, 1 / 3e8, np.random.default_rng(0).normal(size=500))
        back = read_trace_csv(write_trace_csv(tmp_path / "t.csv", tr))
        assert (back.node, back.channel) == ("amp_out", 4)
        assert np.array_equal(back.samples, tr.samples)
        assert back.dt == pytest.approx(tr.dt, rel=1e-12)

    def test_scope_export(self, tmp_path):
        lines = ["# exported", "Time(s)  CH1(V)"] + [f"{k * 1e-3:.6e}  {np.exp(-k / 233):.6f}"
                                                      for k in range(100)]
        (tmp_path / "scope.txt").write_text("\n".join(lines))
        tr = read_trace_csv(tmp_path / "scope.txt")
        assert len(tr) == 100 and tr.dt == pytest.approx(1e-3)

    def test_non_uniform_time_rejected(self, tmp_path):
        (tmp_path / "bad.csv").write_text("time,v\n0,1\n1,1\n3,1\n")
        with pytest.raises(ValueError, match="uniform"):
            read_trace_csv(tmp_path / "bad.csv")

    def test_atomic_write_leaves_no_temp_files(self, tmp_path):
        atomic_write_text(tmp_path / "a" / "x.txt", "hello")
        assert os.listdir(tmp_path / "a") == ["x.txt"]

    @pytest.mark.parametrize("value, sigma, text", [(-7.864, 0.332, "-7.9(3)"), (15.428, 0.516, "15.4(5)"),
                                                    (233.2, 0.96, "233(1)"), (1234.0, 56.0, "1230(60)")])
    def test_format_uncertainty(self, value, sigma, text):
        assert format_uncertainty(value, sigma) == text


class TestConfig:
    def test_demonstration_config_sections(self):
        cfg = RunConfig.load(DEMO_CONFIG)
        assert cfg.chain().tau_hold == 0.233
        assert cfg.compile_options() == (5, "one-hot")
        assert [w.channel_id for w in cfg.waveforms()] == list(range(10))
        assert cfg.drive().dc_voltages["center"] == 5.5
        assert cfg.channel_map()[2] == "s3"

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown"):
            RunConfig.from_dict({"chain": {"r_off": 1}}).chain()

    def test_string_numbers_and_infinity(self):
        cfg = RunConfig.from_dict({"chain": {"tau_hold": "inf", "r_on": "1e1"}})
        p = cfg.chain()
        assert p.tau_hold == float("inf") and p.r_on == 10.0

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            RunConfig.load(tmp_path / "nope.yaml")


class TestCli:
    def test_compile_demonstration_constants(self, tmp_path, capsys):
        cfg = write_config(tmp_path, waveforms=constants(DEMO_LEVELS), compile={"group_size": 5})
        code, _ = run(capsys, "compile", "--config", str(cfg), "--out", str(tmp_path / "o"))
        assert code == 0
        assert sorted(p.name for p in (tmp_path / "o").glob("schedule_dac*.csv")) == \
            ["schedule_dac0.csv", "schedule_dac1.csv"]
        rep = json.loads((tmp_path / "o" / "compile_report.json").read_text())
        assert rep["total_clamps"] == 0
        assert len(rep["config_hash"]) == 64

    def test_compile_clamp_is_a_warning(self, tmp_path, capsys):
        cfg = write_config(tmp_path, waveforms=constants([20.0, 0.0]))
        code, _ = run(capsys, "compile", "--config", str(cfg), "--out", str(tmp_path / "o"))
        assert code == 0
        rep = json.loads((tmp_path / "o" / "compile_report.json").read_text())
        assert rep["total_clamps"] > 0

    @pytest.mark.parametrize("waveforms", [constants([0.0, 1.0])[1:], []])
    def test_invalid_channel_set(self, tmp_path, capsys, waveforms):
        cfg = write_config(tmp_path, waveforms=waveforms)
        for cmd in ("compile", "simulate"):
            code, out = run(capsys, cmd, "--config", str(cfg), "--out", str(tmp_path / "o"))
            assert code == 2
            err = json.loads(out.err.strip().splitlines()[-1])
            assert err["command"] == cmd and err["message"]
        assert not (tmp_path / "o").exists()

    def test_simulate_is_byte_identical(self, tmp_path, capsys):
        cfg = write_config(tmp_path, waveforms=constants([10.4, 0.8], 0.3e-6))
        for out in ("a", "b"):
            assert run(capsys, "simulate", "--config", str(cfg), "--out", str(tmp_path / out))[0] == 0
        files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
        assert Path("traces/amp_out_ch1.csv") in files
        for f in files:
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_simulate_constant_matches_library(self, tmp_path, capsys):
        cfg = write_config(tmp_path, waveforms=constants([10.4], 1e-6), simulate={"sim_dt": 3.3333333333333335e-9})
        run(capsys, "simulate", "--config", str(cfg), "--out", str(tmp_path / "o"))
        got = read_trace_csv(tmp_path / "o" / "traces" / "cap_ch0.csv")
        rc = RunConfig.load(cfg)
        sched, _ = compile_schedule(rc.waveforms(), rc.dac(), rc.gain())
        want = pick(simulate(sched, ChainParams(), 3.3333333333333335e-9), "cap", 0)
        assert np.array_equal(got.samples, want.samples)

    def test_simulate_full_range_sine_clips(self, tmp_path, capsys):
        wave = [{"channel": 0, "segments": [{"kind": "sine", "duration": 100e-6, "offset": 1.25,
                                             "amplitude": 11.5, "frequency": 20e3}]}]
        cfg = write_config(tmp_path, waveforms=wave, simulate={"sim_dt": 3.3333333333333335e-9},
                           chain={"lpf_cutoff": None})
        assert run(capsys, "simulate", "--config", str(cfg), "--out", str(tmp_path / "o"))[0] == 0
        amp = read_trace_csv(tmp_path / "o" / "traces" / "amp_out_ch0.csv").samples
        assert amp.max() == pytest.approx(14.2) and amp.min() == pytest.approx(-7.5)

    def test_tolerances_and_feasibility(self, tmp_path, capsys):
        out = tmp_path / "o"
        assert run(capsys, "tolerances", "--config", str(DEMO_CONFIG), "--out", str(out))[0] == 0
        assert run(capsys, "feasibility", "--config", str(DEMO_CONFIG), "--out", str(out))[0] == 0
        tol = json.loads((out / "tolerance_report.json").read_text())
        assert tol["summary"] == "-7.9(3) V to 15.4(5) V"
        feas = json.loads((out / "feasibility_report.json").read_text())
        assert feas["n_max"] >= 100
        assert tol["config_hash"] == feas["config_hash"]

    def test_trap_solve(self, tmp_path, capsys, trap_minimum):
        out = tmp_path / "o"
        assert run(capsys, "trap-solve", "--config", str(DEMO_CONFIG), "--out", str(out))[0] == 0
        rep = json.loads((out / "trap_report.json").read_text())
        assert rep["positive_definite"] and rep["grid_agrees"]
        assert len(rep["secular_frequencies"]) == 3
        np.testing.assert_allclose(rep["minimum"], trap_minimum, atol=1e-9)

    def test_analyze_exponential(self, tmp_path, capsys):
        t = np.linspace(-45e-3, 300e-3, 346)
        write_trace_csv(tmp_path / "decay.csv", Trace("amp_out", 0, t[0], t[1] - t[0], 5 * np.exp(-t / 0.233)))
        cfg = write_config(tmp_path, analyze={"tasks": [{"kind": "exponential", "trace": "decay.csv"}]})
        assert run(capsys, "analyze", "--config", str(cfg), "--out", str(tmp_path / "o"))[0] == 0
        rep = json.loads((tmp_path / "o" / "analysis_report.json").read_text())
        assert rep["results"][0]["result"]["tau"] == pytest.approx(0.233, rel=1e-6)

    def test_analyze_unknown_kind(self, tmp_path, capsys):
        write_trace_csv(tmp_path / "x.csv", Trace("amp_out", 0, 0.0, 1.0, np.ones(5)))
        cfg = write_config(tmp_path, analyze={"tasks": [{"kind": "fourier", "trace": "x.csv"}]})
        assert run(capsys, "analyze", "--config", str(cfg), "--out", str(tmp_path / "o"))[0] == 2

    def test_missing_config(self, tmp_path, capsys):
        code, out = run(capsys, "feasibility", "--config", str(tmp_path / "none.yaml"))
        assert code == 2 and "ConfigError" in out.err
