"""WDM array: m rows x n columns, one wavelength per row.

Every row's compute rings are length-tuned (dL) to their own channel while the
storage rings of all rows stay at the bias wavelength. In each column the X
waveguide threads through the M3 rings of rows 1..m in order and the XB
waveguide through the M4 rings; the two bus ends meet in the column's MMI,
whose output Z carries one XOR result per wavelength.
"""

from __future__ import annotations

import logging
import math
import warnings
from collections.abc import Sequence
from dataclasses import dataclass, replace

import numpy as np

from xpsram.bitcell import (
    MIN_CONTRAST,
    RAIL_BAND,
    BitcellConfig,
    add_bitcell,
    add_compute_output,
    encode_input,
    hold_state,
)
from xpsram.engine import PulseEvent, RunResult, Schedule, run
from xpsram.errors import (
    AmbiguousCount,
    CalibrationFailure,
    CapacityError,
    ConfigurationError,
    IndeterminateRead,
    InvalidParameter,
    WriteFailure,
)
from xpsram.netlist import Device, Netlist
from xpsram.optics import (
    CHANNELS_PER_FSR,
    DL_STEP_NM,
    WAVELENGTH_TOL_NM,
    RingParams,
    WdmSignal,
    dl_shift,
    fsr,
    lorentzian_response,
    wrap_detuning,
)

log = logging.getLogger(__name__)

CROSSTALK_LIMIT = 0.05
POPCOUNT_TOL = 0.4


@dataclass(frozen=True)
class Channel:
    row: int
    dL_nm: float
    lambda_nm: float


@dataclass(frozen=True)
class ChannelPlan:
    channels: tuple[Channel, ...]
    fsr_nm: float

    def __post_init__(self) -> None:
        lams = [c.lambda_nm for c in self.channels]
        if any(b - a <= WAVELENGTH_TOL_NM for a, b in zip(lams, lams[1:])):
            raise ConfigurationError("channel wavelengths must be strictly increasing")
        if lams and lams[-1] - lams[0] > self.fsr_nm + WAVELENGTH_TOL_NM:
            raise ConfigurationError("channel plan spans more than one FSR")
        min_gap = 0.9 * self.fsr_nm / CHANNELS_PER_FSR
        if any(b - a < min_gap - WAVELENGTH_TOL_NM for a, b in zip(lams, lams[1:])):
            raise ConfigurationError(f"channels closer than {min_gap:.4f} nm")

    def __len__(self) -> int:
        return len(self.channels)

    @property
    def wavelengths_nm(self) -> np.ndarray:
        return np.array([c.lambda_nm for c in self.channels])

    @property
    def spacing_nm(self) -> float:
        return self.fsr_nm / CHANNELS_PER_FSR


def plan_channels(m: int, ring: RingParams | None = None, lambda_base_nm: float | None = None) -> ChannelPlan:
    """Channel i (0-based) gets dL = 34 nm * i, i.e. one eighth of an FSR per row."""
    ring = ring or RingParams()
    if m < 1:
        raise InvalidParameter(f"need at least one channel, got {m}")
    if m > CHANNELS_PER_FSR:
        raise CapacityError(
            f"{m} channels requested, but one FSR holds {CHANNELS_PER_FSR} at {DL_STEP_NM:g} nm dL steps"
        )
    base = ring.lambda_geo_nm + ring.s_eo_nm_per_V * 1.0 if lambda_base_nm is None else lambda_base_nm
    chans = tuple(
        Channel(i, i * DL_STEP_NM, base + dl_shift(i * DL_STEP_NM, ring)) for i in range(m)
    )
    return ChannelPlan(chans, fsr(ring))


def parse_word(word: str | Sequence[int], m: int | None = None) -> list[int]:
    bits = [int(c) for c in word] if isinstance(word, str) else [int(b) for b in word]
    if any(b not in (0, 1) for b in bits):
        raise InvalidParameter(f"word {word!r} is not binary")
    if m is not None and len(bits) != m:
        raise InvalidParameter(f"word {word!r} has {len(bits)} bits, array has {m} rows")
    return bits


def word_str(bits: Sequence[int]) -> str:
    return "".join(str(int(b)) for b in bits)


def encode_input_word(word, plan: ChannelPlan, p_x_W: float, xnor: bool = False) -> tuple[WdmSignal, WdmSignal]:
    """(X, XB) multiplexed signals: bit i puts ``p_x_W`` at channel i on X (1) or XB (0)."""
    bits = parse_word(word, len(plan))
    if p_x_W == 0:
        warnings.warn("input power is zero; both waveguides are dark", stacklevel=2)
    x, xb = {}, {}
    for bit, ch in zip(bits, plan.channels):
        lit = encode_input(bit, xnor)
        x[ch.lambda_nm] = p_x_W if lit == "X" else 0.0
        xb[ch.lambda_nm] = p_x_W if lit == "XB" else 0.0
    return WdmSignal(x), WdmSignal(xb)


@dataclass
class ColumnSpectrum:
    wavelengths_nm: np.ndarray
    powers_W: np.ndarray
    bits: list[int] | None = None

    def as_rows(self) -> list[dict]:
        rows = []
        for i, (lam, p) in enumerate(zip(self.wavelengths_nm, self.powers_W)):
            rows.append(
                {
                    "channel": i + 1,
                    "wavelength_nm": float(lam),
                    "power_uW": float(p) * 1e6,
                    "decoded_bit": None if self.bits is None else self.bits[i],
                }
            )
        return rows


def decode_column_spectrum(spectrum: ColumnSpectrum, thresholds_W, guard_band: float = 0.2) -> list[int]:
    thr = np.asarray(thresholds_W, dtype=float)
    p = np.asarray(spectrum.powers_W, dtype=float)
    inside = np.abs(p - thr) <= guard_band * thr
    if inside.any():
        bad = [int(i) + 1 for i in np.flatnonzero(inside)]
        raise IndeterminateRead(f"channels {bad} fall inside the +/-{guard_band:.0%} guard band")
    return [int(b) for b in p > thr]


@dataclass
class ArrayXorResult:
    stored: list[list[int]]
    inputs: list[list[int]]
    spectra: list[ColumnSpectrum]
    run: RunResult
    compute_window: tuple[float, float]

    @property
    def outputs(self) -> list[list[int]]:
        return [s.bits for s in self.spectra]

    def words(self) -> list[str]:
        return [word_str(b) for b in self.outputs]


class WdmArray:
    LEAD_PS = 20.0
    WRITE_GAP_PS = 150.0  # after the write pulse, before the compute pulse

    def __init__(self, m: int, n: int, plan: ChannelPlan, cfg: BitcellConfig | None = None):
        cfg = cfg or BitcellConfig()
        if len(plan) != m:
            raise ConfigurationError(f"channel plan has {len(plan)} channels but the array has {m} rows")
        if n < 1:
            raise ConfigurationError("array needs at least one column")
        self.m, self.n, self.plan, self.cfg = m, n, plan, cfg
        self.row_cfgs = []
        for ch in plan.channels:
            m3, m4 = (replace(r, dL_nm=ch.dL_nm) for r in cfg.compute_rings)
            rc = replace(cfg, compute_rings=(m3, m4), lambda_compute_nm=ch.lambda_nm)
            bad = rc.failed_checks()
            if bad:
                raise ConfigurationError(f"row {ch.row} configuration invalid", bad)
            self.row_cfgs.append(rc)
        self.netlist = self._build((n,))
        self.thresholds_rel: np.ndarray | None = None
        self.calibration: dict | None = None
        self.reset(0)

    def _build(self, batch: tuple[int, ...]) -> Netlist:
        lams = list(self.plan.wavelengths_nm)
        if not any(abs(l - self.cfg.lambda_in_nm) <= WAVELENGTH_TOL_NM for l in lams):
            lams.append(self.cfg.lambda_in_nm)
        net = Netlist(channels_nm=sorted(lams), batch=batch, vdd=self.cfg.vdd)
        net.add(Device("X", "source"))
        net.add(Device("XB", "source"))
        x_end, xb_end = "X.out", "XB.out"
        for i, rc in enumerate(self.row_cfgs):
            x_end, xb_end = add_bitcell(net, rc, f"[{i}]", x_end, xb_end)
        add_compute_output(net, x_end, xb_end, self.cfg.il_mmi_db)
        net.compile()
        return net

    @property
    def n_compute_rings(self) -> int:
        return sum(1 for name, d in self.netlist.devices.items() if d.kind == "ring" and name[:2] in ("M3", "M4"))

    @property
    def output_ports(self) -> list[str]:
        return [f"Z{j + 1}" for j in range(self.n)]

    def reset(self, bits=0) -> None:
        """Load settled hold states; ``bits`` broadcasts to (rows, columns)."""
        bits = np.broadcast_to(np.asarray(bits), (self.m, self.n))
        s0, s1 = hold_state(self.cfg, 0), hold_state(self.cfg, 1)
        volts = {}
        for i in range(self.m):
            volts[f"Y[{i}]"] = np.where(bits[i] == 1, s1[0], s0[0])
            volts[f"YB[{i}]"] = np.where(bits[i] == 1, s1[1], s0[1])
        self.netlist.reset(volts)

    def stored_words(self) -> list[list[int | None]]:
        vdd, band = self.cfg.vdd, RAIL_BAND * self.cfg.vdd
        out = []
        for j in range(self.n):
            word = []
            for i in range(self.m):
                y, yb = float(self.netlist.node(f"Y[{i}]")[j]), float(self.netlist.node(f"YB[{i}]")[j])
                word.append(1 if y >= vdd - band and yb <= band else 0 if y <= band and yb >= vdd - band else None)
            out.append(word)
        return out

    # single-shot XOR -----------------------------------------------------------------

    def _words(self, words, what: str) -> list[list[int]]:
        if isinstance(words, (str, bytes)) or (words and isinstance(words[0], int)):
            words = [words]
        words = [parse_word(w, self.m) for w in words]
        if len(words) != self.n:
            raise InvalidParameter(f"{len(words)} {what} words for {self.n} columns")
        return words

    def single_shot_xor(self, stored, inputs, *, p_x_W: float | None = None, xnor: bool = False,
                        dt_ps: float = 1.0) -> ArrayXorResult:
        """Write ``stored`` (one word per column, or ``None`` to keep contents), then
        apply all input bits in one compute window and decode every channel."""
        cfg = self.cfg
        p_x = cfg.read_power_W if p_x_W is None else p_x_W
        inputs = self._words(inputs, "input")
        events = []
        t = self.LEAD_PS
        if stored is not None:
            stored = self._words(stored, "stored")
            for j, word in enumerate(stored):
                for i, bit in enumerate(word):
                    port = f"WBL[{i}]" if bit else f"WBLB[{i}]"
                    events.append(PulseEvent(port, t, cfg.write_width_ps, cfg.write_power_W, cfg.lambda_in_nm, j))
            t_write = t
            t += cfg.write_width_ps + self.WRITE_GAP_PS
        t_compute = t
        for j, word in enumerate(inputs):
            for ch, bit in zip(self.plan.channels, word):
                if p_x > 0:
                    events.append(PulseEvent(encode_input(bit, xnor), t, cfg.read_width_ps, p_x, ch.lambda_nm, j))
        t_end = t + cfg.read_width_ps
        if cfg.bias_power_W > 0:
            for i in range(self.m):
                events.append(PulseEvent(f"IN[{i}]", 0.0, t_end, cfg.bias_power_W, cfg.lambda_in_nm))
        probes = ["Z:spectrum"] + [f"{n}[{i}]" for i in range(self.m) for n in ("Y", "YB", "P1", "P2", "P3", "P4")]
        res = run(self.netlist, Schedule(tuple(events), t_end, dt_ps), probes)

        if stored is not None:
            self._check_writes(res, stored, t_write, t_compute)
        else:
            stored = self.stored_words()
        if self.thresholds_rel is None:
            self.calibrate()
        z = res["Z:spectrum"].mean(t_compute, t_end)  # (n, channels)
        idx = [self.netlist.channel_index(c.lambda_nm) for c in self.plan.channels]
        spectra = []
        for j in range(self.n):
            spec = ColumnSpectrum(self.plan.wavelengths_nm, z[j, idx])
            try:
                spec.bits = decode_column_spectrum(spec, self.thresholds_rel * p_x, cfg.guard_band)
            except IndeterminateRead as exc:
                raise IndeterminateRead(f"column {j + 1}: {exc}") from None
            spectra.append(spec)
        return ArrayXorResult(stored, inputs, spectra, res, (t_compute, t_end))

    def _check_writes(self, res: RunResult, stored, t0: float, t1: float) -> None:
        vdd, band = self.cfg.vdd, RAIL_BAND * self.cfg.vdd
        bits = np.array(stored).T  # (rows, columns)
        failures = []
        for i in range(self.m):
            y = res[f"Y[{i}]"].at(t1 - res.schedule.dt_ps)
            yb = res[f"YB[{i}]"].at(t1 - res.schedule.dt_ps)
            ok = np.where(bits[i] == 1, (y >= vdd - band) & (yb <= band), (y <= band) & (yb >= vdd - band))
            failures += [(i + 1, j + 1) for j in np.flatnonzero(~ok)]
        if failures:
            raise WriteFailure(f"cells (row, column) not settled before the compute window: {failures[:10]}")

    # calibration ----------------------------------------------------------------------

    def calibrate(self) -> np.ndarray:
        """Per-channel thresholds from the four all-0/all-1 stored x input corners."""
        cfg = self.cfg
        probe = WdmArray.__new__(WdmArray)
        probe.__dict__.update(self.__dict__)
        probe.n = 4
        probe.netlist = self._build((4,))
        probe.thresholds_rel = np.ones(self.m)  # placeholder, overwritten below
        stored = np.array([0, 0, 1, 1])
        inputs = np.array([0, 1, 0, 1])
        probe.reset(np.broadcast_to(stored, (self.m, 4)))
        t0, width = self.LEAD_PS, cfg.read_width_ps
        events = [PulseEvent(f"IN[{i}]", 0.0, t0 + width, cfg.bias_power_W, cfg.lambda_in_nm) for i in range(self.m)
                  if cfg.bias_power_W > 0]
        for lane, bit in enumerate(inputs):
            for ch in self.plan.channels:
                events.append(PulseEvent(encode_input(int(bit)), t0, width, cfg.read_power_W, ch.lambda_nm, lane))
        res = run(probe.netlist, Schedule(tuple(events), t0 + width), ["Z:spectrum"])
        idx = [probe.netlist.channel_index(c.lambda_nm) for c in self.plan.channels]
        z = res["Z:spectrum"].mean(t0, t0 + width)[:, idx]  # (4, m)
        high = z[stored != inputs].min(axis=0)
        low = np.maximum(z[stored == inputs].max(axis=0), 1e-30)
        contrast = high / low
        if (contrast < MIN_CONTRAST).any():
            bad = [int(i) + 1 for i in np.flatnonzero(contrast < MIN_CONTRAST)]
            raise CalibrationFailure(f"channels {bad} have XOR contrast below {MIN_CONTRAST:g}")
        thr = np.sqrt(high * low)
        self.thresholds_rel = thr / cfg.read_power_W
        self.calibration = {"high_W": high, "low_W": low, "threshold_W": thr, "contrast": contrast}
        return thr

    # crosstalk / popcount ---------------------------------------------------------------

    def crosstalk_matrix(self) -> np.ndarray:
        """Worst-case fraction of channel j's power that row i's compute ring acts on.

        Both drive states of the ring count (resonant at full drive, shifted
        down by the electro-optic swing when undriven); the diagonal is 1.
        """
        lams = self.plan.wavelengths_nm
        mat = np.ones((self.m, self.m))
        for i, rc in enumerate(self.row_cfgs):
            ring = rc.compute_rings[0]
            f = fsr(ring)
            for j, lam in enumerate(lams):
                if i == j:
                    continue
                worst = 0.0
                for v in (0.0, self.cfg.vdd):
                    res = ring.lambda_geo_nm + ring.s_eo_nm_per_V * v + dl_shift(ring.dL_nm, ring)
                    worst = max(worst, lorentzian_response(wrap_detuning(lam - res, f), ring.fwhm_nm))
                mat[i, j] = worst
        worst_off = float((mat - np.eye(self.m)).max()) if self.m > 1 else 0.0
        if worst_off >= CROSSTALK_LIMIT:
            warnings.warn(f"channel plan crosstalk {worst_off:.3f} exceeds {CROSSTALK_LIMIT:g}", stacklevel=2)
        return mat

    def popcount(self, spectrum: ColumnSpectrum, responsivity_A_per_W: float | None = None,
                 p_x_W: float | None = None) -> tuple[int, float]:
        return popcount_accumulate(spectrum, self, responsivity_A_per_W, p_x_W)


def build_array(m: int, n: int, plan: ChannelPlan | None = None, cfg: BitcellConfig | None = None) -> WdmArray:
    cfg = cfg or BitcellConfig()
    plan = plan or plan_channels(m, cfg.compute_rings[0], cfg.lambda_in_nm)
    return WdmArray(m, n, plan, cfg)


def crosstalk_matrix(array: WdmArray) -> np.ndarray:
    return array.crosstalk_matrix()


def popcount_accumulate(
    spectrum: ColumnSpectrum,
    array: WdmArray,
    responsivity_A_per_W: float | None = None,
    p_x_W: float | None = None,
) -> tuple[int, float]:
    """Photocurrent of one broadband detector at Z and the number of lit channels.

    The count removes the calibrated dark-level current of all channels and
    divides by the mean per-channel high-minus-low step.
    """
    if array.calibration is None:
        array.calibrate()
    r = array.cfg.pd_params[0].responsivity_A_per_W if responsivity_A_per_W is None else responsivity_A_per_W
    scale = (array.cfg.read_power_W if p_x_W is None else p_x_W) / array.cfg.read_power_W
    current = r * float(np.sum(spectrum.powers_W))
    high = array.calibration["high_W"] * scale
    low = array.calibration["low_W"] * scale
    step = r * float(np.mean(high - low))
    estimate = (current - r * float(np.sum(low))) / step
    count = int(round(estimate))
    if abs(estimate - count) > POPCOUNT_TOL or not 0 <= count <= array.m:
        raise AmbiguousCount(f"photocurrent corresponds to {estimate:.2f} lit channels")
    return count, current
