import csv
import json

import numpy as np
import pytest
import yaml
from pydantic import BaseModel

from xpsram.cli import main, sweep_dl
from xpsram.config import PRESETS, Scenario, dump_scenario, load_scenario, parse_scenario, preset
from xpsram.errors import ConfigurationError, InvalidParameter
from xpsram.optics import RingParams, fsr


def run_cli(capsys, *argv):
    code = main(list(map(str, argv)))
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.mark.parametrize("name", ["fig3", "fig4", "fig5", "fig6", "table1"])
def test_presets_exit_zero(tmp_path, capsys, name):
    code, _, err = run_cli(capsys, PRESETS[name]["command"], "--preset", name, "--out", tmp_path)
    assert code == 0, err
    assert (tmp_path / "effective_config.yaml").exists()


class TestBitcellCommand:
    def test_fig3_trace(self, tmp_path, capsys):
        code, out, _ = run_cli(capsys, "bitcell", "--preset", "fig3", "--out", tmp_path)
        assert code == 0
        lines = (tmp_path / "trace.csv").read_text().splitlines()
        assert lines[0] == "# units: ps,V,V,W,W,W,W,W"
        assert lines[1] == "time_ps,Y,YB,Z,WBL,WBLB,X,XB"
        rows = np.loadtxt(tmp_path / "trace.csv", delimiter=",", skiprows=2)
        t, y = rows[:, 0], rows[:, 1]
        assert y[t == 700][0] > 0.95 and y[t == 850][0] < 0.05 and y[t == 1350][0] > 0.95
        ops = json.loads((tmp_path / "report.json").read_text())["ops"]
        assert [o["bit"] for o in ops] == [0, 0, 1, 1]

    def test_fig4_truth_table(self, tmp_path, capsys):
        code, out, _ = run_cli(capsys, "bitcell", "--preset", "fig4", "--out", tmp_path)
        assert code == 0
        table = json.loads((tmp_path / "report.json").read_text())["truth_table"]
        assert sorted(map(tuple, table)) == [(0, 0, 0), (0, 1, 1), (1, 0, 1), (1, 1, 0)]
        assert "truth table" in out

    def test_diagnostic_exit(self, tmp_path, capsys):
        cfg = tmp_path / "c.yaml"
        cfg.write_text(yaml.safe_dump({"device": {"bias_power_uW": 0.0}, "engine": {"initial_bit": 1},
                                       "ops": [{"op": "hold", "t_start_ps": 10, "duration_ps": 2000}]}))
        code, _, _ = run_cli(capsys, "bitcell", "--config", cfg, "--out", tmp_path)
        assert code == 2


class TestArrayCommand:
    def test_fig6(self, tmp_path, capsys):
        code, out, _ = run_cli(capsys, "array", "--preset", "fig6", "--out", tmp_path)
        assert code == 0 and "Z=01011001" in out
        rows = list(csv.DictReader((tmp_path / "spectrum.csv").open()))
        assert list(rows[0]) == ["column", "channel", "wavelength_nm", "power_uW", "decoded_bit"]
        assert "".join(r["decoded_bit"] for r in rows) == "01011001"

    def test_identity(self, tmp_path, capsys):
        code, out, _ = run_cli(capsys, "array", "--preset", "identity", "--out", tmp_path)
        assert code == 0 and "Z=00000000" in out

    def test_random_deterministic(self, tmp_path, capsys):
        cfg = tmp_path / "r.yaml"
        cfg.write_text(yaml.safe_dump({"command": "array", "array": {"rows": 8, "random_pairs": 50}}))
        a, b = tmp_path / "a", tmp_path / "b"
        assert run_cli(capsys, "array", "--config", cfg, "--seed", 7, "--out", a)[0] == 0
        assert run_cli(capsys, "array", "--config", cfg, "--seed", 7, "--out", b)[0] == 0
        assert (a / "spectrum.csv").read_bytes() == (b / "spectrum.csv").read_bytes()
        words = json.loads((a / "report.json").read_text())["words"]
        assert all(w["output"] == w["oracle"] for w in words)

    def test_capacity_is_config_error(self, tmp_path, capsys):
        cfg = tmp_path / "c.yaml"
        cfg.write_text(yaml.safe_dump({"array": {"rows": 9}, "ops": [{"op": "array-xor", "input": ["0" * 9]}]}))
        assert run_cli(capsys, "array", "--config", cfg, "--out", tmp_path)[0] == 1


class TestSweep:
    def test_one_fsr(self, tmp_path, capsys):
        code, out, _ = run_cli(capsys, "sweep-dl", "--preset", "fig5", "--out", tmp_path)
        assert code == 0
        data = np.loadtxt(tmp_path / "sweep_dl.csv", delimiter=",", skiprows=1)
        assert data.shape == (9, 2)
        assert data[-1, 1] - data[0, 1] == pytest.approx(fsr(RingParams()), abs=1e-5)
        summary = json.loads((tmp_path / "report.json").read_text())
        assert summary["slope_nm_per_nm"] == pytest.approx(summary["expected_slope_nm_per_nm"], rel=1e-9)

    def test_empty_range(self, tmp_path):
        dl, lam = sweep_dl(10.0, 0.0, 34.0)
        assert dl.size == lam.size == 0

    def test_empty_range_cli(self, tmp_path, capsys):
        cfg = tmp_path / "s.yaml"
        cfg.write_text(yaml.safe_dump({"sweep": {"dl_start_nm": 10, "dl_stop_nm": 0}}))
        assert run_cli(capsys, "sweep-dl", "--config", cfg, "--out", tmp_path)[0] == 0
        assert (tmp_path / "sweep_dl.csv").read_text().splitlines() == ["dL_nm,lambda_nm"]

    def test_negative_step(self, tmp_path, capsys):
        cfg = tmp_path / "s.yaml"
        cfg.write_text(yaml.safe_dump({"sweep": {"dl_step_nm": -34}}))
        assert run_cli(capsys, "sweep-dl", "--config", cfg, "--out", tmp_path)[0] == 1
        with pytest.raises(InvalidParameter):
            sweep_dl(0, 10, 0)


class TestEnergyCommand:
    def test_table1(self, tmp_path, capsys):
        code, out, _ = run_cli(capsys, "energy", "--preset", "table1", "--out", tmp_path)
        rep = json.loads((tmp_path / "report.json").read_text())
        assert code == 0
        assert rep["total_fJ"] == pytest.approx(13.2, rel=0.1)
        assert [r["energy_fJ_per_bit"] for r in rep["comparison"]] == [17.25, 3679.0, 7960.0, 13.15]

    @pytest.mark.parametrize(
        "op, optical",
        [({"op": "write", "bit": 1, "t_start_ps": 20}, 50.5), ({"op": "hold", "duration_ps": 1000, "t_start_ps": 20}, 10.0)],
    )
    def test_ops(self, tmp_path, capsys, op, optical):
        cfg = tmp_path / "e.yaml"
        cfg.write_text(yaml.safe_dump({"ops": [op]}))
        assert run_cli(capsys, "energy", "--config", cfg, "--out", tmp_path)[0] == 0
        rep = json.loads((tmp_path / "report.json").read_text())
        assert rep["optical_fJ"] == pytest.approx(optical, rel=1e-12)

    def test_compare_flag(self, tmp_path, capsys):
        run_cli(capsys, "energy", "--compare", "--out", tmp_path)
        assert "comparison" in json.loads((tmp_path / "report.json").read_text())


class TestConfig:
    def test_unknown_key(self, tmp_path, capsys):
        cfg = tmp_path / "bad.yaml"
        cfg.write_text("device:\n  bias_power_W: 1e-5\n")
        code, _, err = run_cli(capsys, "bitcell", "--config", cfg, "--out", tmp_path)
        assert code == 1 and "device.bias_power_W" in err

    def test_yaml_syntax_line(self, tmp_path, capsys):
        cfg = tmp_path / "bad.yaml"
        cfg.write_text("ops:\n  - op: write\n    bit: [1\n")
        code, _, err = run_cli(capsys, "bitcell", "--config", cfg, "--out", tmp_path)
        assert code == 1 and "bad.yaml:" in err

    def test_bad_op_args(self):
        with pytest.raises(ConfigurationError, match="ops.0"):
            parse_scenario({"ops": [{"op": "write"}]})

    def test_wrong_command(self, tmp_path, capsys):
        assert run_cli(capsys, "array", "--preset", "fig3", "--out", tmp_path)[0] == 1

    def test_missing_file(self, tmp_path, capsys):
        assert run_cli(capsys, "bitcell", "--config", tmp_path / "nope.yaml", "--out", tmp_path)[0] == 1

    @pytest.mark.parametrize("name", sorted(PRESETS))
    def test_round_trip(self, tmp_path, name):
        sc = preset(name)
        for suffix in (".yaml", ".json"):
            path = dump_scenario(sc, tmp_path / f"eff{suffix}")
            assert load_scenario(path) == sc

    def test_effective_config_reruns_identically(self, tmp_path, capsys):
        a, b = tmp_path / "a", tmp_path / "b"
        assert run_cli(capsys, "bitcell", "--preset", "fig4", "--dt-ps", 0.5, "--out", a)[0] == 0
        assert run_cli(capsys, "bitcell", "--config", a / "effective_config.yaml", "--out", b)[0] == 0
        assert (a / "trace.csv").read_bytes() == (b / "trace.csv").read_bytes()

    def test_units_in_keys(self):
        units = ("_nm", "_ps", "_uW", "_mW", "_V", "_fF", "_um", "_dB", "_nS", "_S_per_W", "_A_per_W", "_nm_per_V")
        dimensionless = {"gain", "guard_band", "group_index"}

        def leaves(model):
            for name, field in model.model_fields.items():
                ann = field.annotation
                if isinstance(ann, type) and issubclass(ann, BaseModel):
                    yield from leaves(ann)
                elif "float" in str(ann):
                    yield name

        floats = list(leaves(Scenario))
        assert len(floats) > 20
        assert [k for k in floats if not k.endswith(units) and k not in dimensionless] == []

    def test_overrides_apply(self):
        sc = parse_scenario({"device": {"ring": {"fwhm_nm": 0.1, "s_eo_nm_per_V": 0.5}, "bias_power_uW": 20}})
        cfg = sc.bitcell_config()
        assert cfg.latch_rings[0].fwhm_nm == 0.1 and cfg.bias_power_W == pytest.approx(20e-6)
        assert cfg.failed_checks() == []


def test_log_env(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("XPSRAM_LOG", "debug")
    assert run_cli(capsys, "sweep-dl", "--out", tmp_path)[0] == 0
