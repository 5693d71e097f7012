import json

import numpy as np
import pytest

from tarnpricer.cli import (
    ConfigError,
    PRESETS,
    ResultRecord,
    emit,
    fingerprint,
    main,
    parse_config,
    read_records,
    run,
)
from tarnpricer.fd import BoundaryKind, PinPolicy

MINIMAL = """
[contract]
strike = 1.0
target = 0.3
knockout = no_gain
fixing_times = 0.25, 0.5, 0.75

[model]
volatility = 0.2

[run]
spot = 1.05
"""

SMALL_RUN = """
[contract]
strike = 1.0
target = 0.3, 0.5
knockout = no_gain, full_gain
fixing_times = 0.1, 0.2, 0.3, 0.4

[model]
volatility = 0.2
domestic_rate = 0.01

[run]
spot = 1.05
engines = fd, mc

[fd]
spot_nodes = 60
accumulation_nodes = 10
time_steps = 16

[mc]
paths = 4000
seed = 7

[output]
format = records
"""


class TestParseConfig:
    def test_minimal_config_applies_defaults(self):
        cfg = parse_config(MINIMAL)
        assert cfg.fd.theta == 0.5
        assert cfg.fd.domain_width_sigmas == 3.5
        assert cfg.fd.spot_nodes == 500
        assert cfg.mc.control_variate is True
        assert cfg.mc.cv_coefficient is None
        assert cfg.engines == ("fd", "mc")
        assert cfg.beta == 1
        assert cfg.output_format == "human"
        assert cfg.fd.pin_policy is PinPolicy.STRIKE_AND_SPOT
        assert cfg.fd.boundary is BoundaryKind.ZERO_GAMMA

    def test_unknown_keys_listed(self):
        bad = MINIMAL + "\n[fd]\nbanana = 1\nsplit = 2\n"
        with pytest.raises(ConfigError) as err:
            parse_config(bad)
        assert "banana" in str(err.value)
        assert "split" in str(err.value)

    def test_unknown_section_rejected(self):
        with pytest.raises(ConfigError, match="pricing"):
            parse_config(MINIMAL + "\n[pricing]\nx = 1\n")

    def test_negative_target_names_constraint(self):
        bad = MINIMAL.replace("target = 0.3", "target = -1")
        with pytest.raises(ConfigError, match="target must be positive"):
            parse_config(bad)

    def test_extra_payments_length_mismatch(self):
        bad = MINIMAL + "\n"
        bad = bad.replace("fixing_times = 0.25, 0.5, 0.75",
                          "fixing_times = 0.25, 0.5, 0.75\nextra_payments = 0.1, 0.1")
        with pytest.raises(ConfigError, match="3 entries"):
            parse_config(bad)

    def test_missing_volatility(self):
        bad = MINIMAL.replace("volatility = 0.2", "")
        with pytest.raises(ConfigError, match="volatility"):
            parse_config(bad)

    def test_conflicting_volatility_specs(self):
        bad = MINIMAL.replace(
            "volatility = 0.2",
            "volatility = 0.2\nvolatility_times = 0.0\nvolatility_values = 0.2")
        with pytest.raises(ConfigError, match="conflicting"):
            parse_config(bad)

    def test_unknown_engine(self):
        bad = MINIMAL.replace("spot = 1.05", "spot = 1.05\nengines = fd, pde")
        with pytest.raises(ConfigError, match="pde"):
            parse_config(bad)

    def test_local_vol_file(self, tmp_path):
        surface = tmp_path / "vol.txt"
        body = np.zeros((3, 3))
        body[0, 1:] = [0.5, 2.0]
        body[1:, 0] = [0.0, 1.0]
        body[1:, 1:] = 0.2
        np.savetxt(surface, body)
        text = MINIMAL.replace("volatility = 0.2", "volatility_file = vol.txt")
        cfg = parse_config(text, base_dir=str(tmp_path))
        assert cfg.model.vol.values.shape == (2, 2)

    def test_missing_local_vol_file(self):
        text = MINIMAL.replace("volatility = 0.2", "volatility_file = nope.txt")
        with pytest.raises(ConfigError, match="not found"):
            parse_config(text)

    def test_term_structure_rates(self):
        text = MINIMAL.replace(
            "volatility = 0.2",
            "volatility = 0.2\ndomestic_rate_times = 0.0, 0.5\n"
            "domestic_rate_values = 0.02, 0.04")
        cfg = parse_config(text)
        assert cfg.model.domestic.rates == (0.02, 0.04)


class TestFingerprint:
    def test_changes_with_pricing_fields(self):
        base = parse_config(SMALL_RUN)
        changed = parse_config(SMALL_RUN.replace("target = 0.3, 0.5",
                                                 "target = 0.31, 0.5"))
        assert fingerprint(base) != fingerprint(changed)
        seeded = parse_config(SMALL_RUN.replace("seed = 7", "seed = 8"))
        assert fingerprint(base) != fingerprint(seeded)

    def test_unchanged_by_output_settings(self):
        base = parse_config(SMALL_RUN)
        human = parse_config(SMALL_RUN.replace("format = records",
                                               "format = human"))
        assert fingerprint(base) == fingerprint(human)


class TestRunAndEmit:
    def test_small_run_produces_expected_records(self):
        cfg = parse_config(SMALL_RUN)
        records = run(cfg)
        engines = [r.engine for r in records]
        # 4 cases x (fd, mc, diff)
        assert engines.count("fd") == 4
        assert engines.count("mc") == 4
        assert engines.count("diff") == 4
        for r in records:
            if r.engine == "mc":
                assert r.error_kind == "stderr"
                assert r.error_metric > 0
            if r.engine == "diff":
                assert r.error_kind == "relative_difference"

    def test_records_round_trip(self):
        cfg = parse_config(SMALL_RUN)
        records = run(cfg)
        text = emit(records, "records")
        back = read_records(text)
        assert back == records

    def test_emit_to_file(self, tmp_path):
        rec = ResultRecord(engine="fd", knockout="no_gain", target=0.3,
                           price=0.1, error_metric=None, error_kind="none",
                           grid="10x4x10", wall_time_s=0.0, fingerprint="ab")
        out = tmp_path / "results.jsonl"
        emit([rec], "records", str(out))
        assert read_records(out.read_text()) == [rec]

    def test_empty_records_rejected(self):
        with pytest.raises(ValueError, match="no records"):
            emit([], "records")

    def test_human_table_layout(self):
        cfg = parse_config(SMALL_RUN)
        records = run(cfg)
        table = emit(records, "human")
        assert "== no_gain ==" in table
        assert "== full_gain ==" in table
        assert "MC" in table and "FD" in table and "diff %" in table

    def test_determinism_excluding_wall_time(self):
        cfg = parse_config(SMALL_RUN)
        first = emit(run(cfg), "records")
        second = emit(run(cfg), "records")

        def strip(text):
            out = []
            for line in text.splitlines():
                d = json.loads(line)
                d.pop("wall_time_s")
                out.append(json.dumps(d, sort_keys=True))
            return "\n".join(out)

        assert strip(first) == strip(second)

    def test_fd_error_metric_present_with_refine(self):
        import dataclasses

        cfg = parse_config(SMALL_RUN)
        cfg = dataclasses.replace(cfg, refine=True, engines=("fd",),
                                  targets=(0.3,), knockouts=cfg.knockouts[:1])
        records = run(cfg)
        fd = [r for r in records if r.engine == "fd"][0]
        assert fd.error_kind == "refined_relative_error"
        assert fd.error_metric >= 0.0

    def test_convergence_mode_emits_order(self):
        import dataclasses

        cfg = parse_config(SMALL_RUN)
        cfg = dataclasses.replace(cfg, convergence=True, engines=("fd",),
                                  targets=(0.3,), knockouts=cfg.knockouts[:1])
        records = run(cfg)
        grids = [r.grid for r in records if r.engine == "fd"]
        assert grids == ["60x10x16", "120x20x32", "240x40x64"]
        orders = [r for r in records if r.engine == "fd_order"]
        assert len(orders) == 1


class TestMain:
    def test_preset_registered(self):
        assert "table1" in PRESETS
        cfg = PRESETS["table1"]()
        assert cfg.spot == 1.05
        assert cfg.strike == 1.0
        assert len(cfg.targets) == 4
        assert len(cfg.knockouts) == 3
        assert len(cfg.fixing_times) == 20
        assert cfg.fixing_times[0] == pytest.approx(30 / 365)

    def test_config_file_run(self, tmp_path, capsys):
        path = tmp_path / "run.cfg"
        path.write_text(SMALL_RUN)
        code = main([str(path)])
        out = capsys.readouterr().out
        assert code == 0
        assert len(read_records(out)) == 12

    def test_output_file_and_engine_filter(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text(SMALL_RUN)
        dest = tmp_path / "out.jsonl"
        code = main([str(path), "--engines", "fd", "--output", str(dest),
                     "--format", "records"])
        assert code == 0
        records = read_records(dest.read_text())
        assert {r.engine for r in records} == {"fd"}

    def test_seed_override_changes_mc(self, tmp_path, capsys):
        path = tmp_path / "run.cfg"
        path.write_text(SMALL_RUN)
        main([str(path), "--engines", "mc", "--seed", "1"])
        first = capsys.readouterr().out
        main([str(path), "--engines", "mc", "--seed", "2"])
        second = capsys.readouterr().out
        p1 = [r.price for r in read_records(first)]
        p2 = [r.price for r in read_records(second)]
        assert p1 != p2

    def test_validation_error_exit_code(self, tmp_path, capsys):
        path = tmp_path / "bad.cfg"
        path.write_text(MINIMAL.replace("target = 0.3", "target = -1"))
        assert main([str(path)]) == 1
        assert "target must be positive" in capsys.readouterr().err

    def test_missing_config_exit_code(self, capsys):
        assert main([]) == 1

    def test_engine_failure_exit_code(self, tmp_path, capsys):
        # 4 fixing intervals but only 2 time steps: the FD engine refuses
        path = tmp_path / "fail.cfg"
        path.write_text(SMALL_RUN.replace("time_steps = 16", "time_steps = 2"))
        code = main([str(path)])
        out = capsys.readouterr().out
        assert code == 2
        records = read_records(out)
        assert any(r.status.startswith("error") for r in records)
        # partial results still emitted: mc records are fine
        assert any(r.engine == "mc" and r.status.startswith("ok")
                   for r in records)
