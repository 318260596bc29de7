"""Scenario files: strict schema, unit-suffixed keys, YAML or JSON.

A scenario bundles device overrides, an operation script, engine settings and
output names. Unknown keys are rejected so that a typo cannot silently fall
back to a default.
"""

from __future__ import annotations

import json
from dataclasses import replace
from pathlib import Path
from typing import Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from xpsram.bitcell import BitcellConfig, Op
from xpsram.errors import ConfigurationError
from xpsram.latch import DriverParams
from xpsram.optics import PdParams, RingParams


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class RingOverrides(_Strict):
    radius_um: float | None = Field(None, gt=0)
    fwhm_nm: float | None = Field(None, gt=0)
    s_eo_nm_per_V: float | None = None
    il_thru_dB: float | None = Field(None, ge=0)
    il_drop_dB: float | None = Field(None, ge=0)
    group_index: float | None = Field(None, gt=0)

    def apply(self, ring: RingParams) -> RingParams:
        keys = {
            "radius_um": "radius_um",
            "fwhm_nm": "fwhm_nm",
            "s_eo_nm_per_V": "s_eo_nm_per_V",
            "il_thru_dB": "il_thru_db",
            "il_drop_dB": "il_drop_db",
            "group_index": "group_index",
        }
        changes = {dst: getattr(self, src) for src, dst in keys.items() if getattr(self, src) is not None}
        if not changes:
            return ring
        new = ring.with_(**changes)
        # keep the ring resonant at its design wavelength under full drive
        if "s_eo_nm_per_V" in changes:
            new = new.with_(lambda_geo_nm=ring.lambda_geo_nm + ring.s_eo_nm_per_V - new.s_eo_nm_per_V)
        return new


class PdOverrides(_Strict):
    gamma_S_per_W: float | None = Field(None, ge=0)
    g_dark_nS: float | None = Field(None, ge=0)
    responsivity_A_per_W: float | None = Field(None, ge=0)

    def apply(self, pd: PdParams) -> PdParams:
        changes = {}
        if self.gamma_S_per_W is not None:
            changes["gamma_S_per_W"] = self.gamma_S_per_W
        if self.g_dark_nS is not None:
            changes["g_dark_S"] = self.g_dark_nS * 1e-9
        if self.responsivity_A_per_W is not None:
            changes["responsivity_A_per_W"] = self.responsivity_A_per_W
        return replace(pd, **changes) if changes else pd


class DriverOverrides(_Strict):
    gain: float | None = Field(None, gt=0)
    v_out_min_V: float | None = None
    v_out_max_V: float | None = None
    tau_ps: float | None = Field(None, ge=0)

    def apply(self, d: DriverParams) -> DriverParams:
        changes = {
            k: v
            for k, v in {
                "gain": self.gain,
                "v_out_min": self.v_out_min_V,
                "v_out_max": self.v_out_max_V,
                "tau_ps": self.tau_ps,
            }.items()
            if v is not None
        }
        return replace(d, **changes) if changes else d


class DeviceOverrides(_Strict):
    ring: RingOverrides = RingOverrides()
    pd: PdOverrides = PdOverrides()
    driver: DriverOverrides = DriverOverrides()
    latch_mismatch_nm: tuple[float, float] = (0.0, 0.0)
    latch_heat_mW: tuple[float, float] = (0.0, 0.0)
    vdd_V: float = Field(1.0, gt=0)
    c_node_fF: float = Field(1.0, gt=0)
    c_drv_fF: float = Field(1.4, ge=0)
    bias_power_uW: float = Field(10.0, ge=0)
    write_power_uW: float = Field(1000.0, gt=0)
    write_width_ps: float = Field(50.0, gt=0)
    read_power_uW: float = Field(100.0, ge=0)
    read_width_ps: float = Field(100.0, gt=0)
    il_split_dB: float = Field(0.0, ge=0)
    il_mmi_dB: float = Field(0.5, ge=0)
    guard_band: float = Field(0.2, ge=0, lt=1)

    def bitcell_config(self) -> BitcellConfig:
        ring = self.ring.apply(RingParams())
        pd = self.pd.apply(PdParams())
        drv = self.driver.apply(DriverParams())
        cfg = BitcellConfig(
            latch_rings=(ring, ring),
            compute_rings=(ring, ring),
            pd_params=(pd,) * 4,
            drivers=(drv, drv),
            vdd=self.vdd_V,
            c_node_fF=self.c_node_fF,
            bias_power_W=self.bias_power_uW * 1e-6,
            latch_heat_mW=tuple(self.latch_heat_mW),
            il_split_db=self.il_split_dB,
            il_mmi_db=self.il_mmi_dB,
            write_power_W=self.write_power_uW * 1e-6,
            write_width_ps=self.write_width_ps,
            read_power_W=self.read_power_uW * 1e-6,
            read_width_ps=self.read_width_ps,
            guard_band=self.guard_band,
            c_drv_fF=self.c_drv_fF,
        )
        return cfg.with_latch_mismatch(*self.latch_mismatch_nm)


OpKind = Literal["hold", "write", "read", "xor", "xnor", "array-xor"]


class OpSpec(_Strict):
    op: OpKind
    t_start_ps: float = Field(0.0, ge=0)
    bit: int | None = Field(None, ge=0, le=1)
    duration_ps: float | None = Field(None, gt=0)
    port: Literal["X", "XB"] = "XB"
    power_uW: float | None = Field(None, ge=0)
    stored: list[str] | None = None
    input: list[str] | None = None

    @model_validator(mode="after")
    def _fields_for_kind(self) -> OpSpec:
        if self.op == "array-xor":
            if not self.input:
                raise ValueError("array-xor needs input words")
        else:
            if self.stored is not None or self.input is not None:
                raise ValueError(f"{self.op} does not take stored/input words")
            self.to_op()  # surface per-kind argument errors at parse time
        return self

    def to_op(self) -> Op:
        try:
            return Op(
                self.op,
                self.t_start_ps,
                bit=self.bit,
                duration_ps=self.duration_ps,
                port=self.port,
                power_W=None if self.power_uW is None else self.power_uW * 1e-6,
            )
        except ConfigurationError as exc:
            raise ValueError(str(exc)) from None


class EngineSettings(_Strict):
    dt_ps: float = Field(1.0, gt=0)
    t_end_ps: float | None = Field(None, gt=0)
    initial_bit: int = Field(0, ge=0, le=1)


class ArraySettings(_Strict):
    rows: int = Field(8, ge=1)
    columns: int = Field(1, ge=1)
    random_pairs: int = Field(0, ge=0)
    xnor: bool = False


class SweepSettings(_Strict):
    dl_start_nm: float = 0.0
    dl_stop_nm: float = 272.0
    dl_step_nm: float = 34.0


class Outputs(_Strict):
    trace_csv: str = "trace.csv"
    spectrum_csv: str = "spectrum.csv"
    report_json: str = "report.json"
    sweep_csv: str = "sweep_dl.csv"
    effective_config: str = "effective_config.yaml"


class Scenario(_Strict):
    name: str = "custom"
    command: Literal["bitcell", "array", "sweep-dl", "energy"] | None = None
    seed: int = 0
    device: DeviceOverrides = DeviceOverrides()
    ops: list[OpSpec] = []
    engine: EngineSettings = EngineSettings()
    probes: list[str] = ["Y", "YB", "Z", "WBL", "WBLB", "X", "XB"]
    array: ArraySettings = ArraySettings()
    sweep: SweepSettings = SweepSettings()
    outputs: Outputs = Outputs()
    compare: bool = False

    @field_validator("ops")
    @classmethod
    def _sorted(cls, ops: list[OpSpec]) -> list[OpSpec]:
        return sorted(ops, key=lambda o: o.t_start_ps)

    def bitcell_config(self) -> BitcellConfig:
        return self.device.bitcell_config()

    def dump(self) -> dict:
        return self.model_dump(mode="json")


def _format_validation(exc: ValidationError) -> list[str]:
    out = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        out.append(f"{loc}: {err['msg']}")
    return out


def parse_scenario(data: dict) -> Scenario:
    try:
        return Scenario.model_validate(data)
    except ValidationError as exc:
        raise ConfigurationError("invalid scenario", _format_validation(exc)) from None


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{path}:{mark.line + 1}:{mark.column + 1}" if mark else str(path)
        raise ConfigurationError(f"{where}: {getattr(exc, 'problem', None) or exc}") from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: top level must be a mapping")
    return parse_scenario(data)


def dump_scenario(scenario: Scenario, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(scenario.dump(), indent=2) if path.suffix == ".json" else yaml.safe_dump(scenario.dump(), sort_keys=False)
    path.write_text(text)
    return path


PRESETS: dict[str, dict] = {
    "fig3": {
        "name": "fig3",
        "command": "bitcell",
        "engine": {"initial_bit": 1, "t_end_ps": 1600},
        "ops": [
            {"op": "write", "bit": 0, "t_start_ps": 750},
            {"op": "read", "t_start_ps": 880},
            {"op": "write", "bit": 1, "t_start_ps": 1250},
            {"op": "read", "t_start_ps": 1380},
        ],
    },
    "fig4": {
        "name": "fig4",
        "command": "bitcell",
        "engine": {"initial_bit": 1, "t_end_ps": 2100},
        "ops": [
            {"op": "write", "bit": 0, "t_start_ps": 100},
            {"op": "xor", "bit": 1, "t_start_ps": 700},
            {"op": "xor", "bit": 0, "t_start_ps": 900},
            {"op": "write", "bit": 1, "t_start_ps": 1100},
            {"op": "xor", "bit": 1, "t_start_ps": 1700},
            {"op": "xor", "bit": 0, "t_start_ps": 1900},
        ],
    },
    "fig5": {"name": "fig5", "command": "sweep-dl", "sweep": {"dl_start_nm": 0, "dl_stop_nm": 272, "dl_step_nm": 34}},
    "fig6": {
        "name": "fig6",
        "command": "array",
        "array": {"rows": 8, "columns": 1},
        "ops": [{"op": "array-xor", "stored": ["10010011"], "input": ["11001010"]}],
    },
    "identity": {
        "name": "identity",
        "command": "array",
        "array": {"rows": 8, "columns": 1},
        "ops": [{"op": "array-xor", "stored": ["10010011"], "input": ["10010011"]}],
    },
    "random": {
        "name": "random",
        "command": "array",
        "array": {"rows": 8, "columns": 1, "random_pairs": 1000},
    },
    "table1": {
        "name": "table1",
        "command": "energy",
        "compare": True,
        "ops": [{"op": "xor", "bit": 1, "t_start_ps": 20}],
    },
}


def preset(name: str) -> Scenario:
    if name not in PRESETS:
        raise ConfigurationError(f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}")
    return parse_scenario(PRESETS[name])
