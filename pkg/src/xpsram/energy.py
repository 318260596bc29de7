"""Per-operation energy accounting.

Optical energy is exact bookkeeping of the rectangular pulses. Electrical
energy is photodiode bias power integrated over the window plus a fixed
switching charge per driver transition. Heater power is static and stays out
of the per-operation figure.
"""

from __future__ import annotations

import re
from collections.abc import Mapping
from dataclasses import asdict, dataclass

import numpy as np

from xpsram.engine import Schedule, Waveform
from xpsram.errors import InvalidParameter, UnknownProbe
from xpsram.optics import RingParams, fsr

# reference energies per bit of other designs, fJ (comparison rows only)
TABLE1 = (
    {"design": "8T-SRAM IMC", "latency_ns": 3.0, "energy_fJ_per_bit": 17.25},
    {"design": "SRAM IMC (XNOR)", "latency_ns": 0.85, "energy_fJ_per_bit": 3679.0},
    {"design": "InP optical flip-flop", "latency_ns": 0.2, "energy_fJ_per_bit": 7960.0},
    {"design": "photonic IMC XOR (reference)", "latency_ns": 0.1, "energy_fJ_per_bit": 13.15},
)

_PD_RE = re.compile(r"^P[1-4](\[\d+\])?$")
_NODE_RE = re.compile(r"^YB?(\[\d+\])?$")


@dataclass(frozen=True)
class EnergyReport:
    op: str
    window_ps: tuple[float, float]
    optical_fJ: float
    electrical_fJ: float
    thermal_static_mW: float = 0.0

    def __post_init__(self) -> None:
        if min(self.optical_fJ, self.electrical_fJ, self.thermal_static_mW) < 0:
            raise InvalidParameter("energy components must be >= 0")

    @property
    def total_fJ(self) -> float:
        return self.optical_fJ + self.electrical_fJ

    def as_dict(self) -> dict:
        d = asdict(self)
        d["window_ps"] = list(self.window_ps)
        d["total_fJ"] = self.total_fJ
        return {k: d[k] for k in ("op", "window_ps", "optical_fJ", "electrical_fJ", "total_fJ", "thermal_static_mW")}


def optical_energy(schedule: Schedule, window: tuple[float, float], n_lanes: int = 1) -> float:
    """Sum of power x overlap over all pulses, in fJ.

    Pulses without a lane drive every copy of a batched netlist and are
    counted ``n_lanes`` times.
    """
    t0, t1 = window
    total = 0.0
    for e in schedule.events:
        copies = n_lanes if e.lane is None else 1
        total += e.power_W * e.overlap_ps(t0, t1) * copies
    return total * 1e3  # W * ps = 1e-12 J = 1e3 fJ


def _integral(w: Waveform, window: tuple[float, float]) -> float:
    mask = w.window(*window)
    return float(np.sum(w.values[mask])) * w.dt_ps


def count_transitions(w: Waveform, window: tuple[float, float], vdd: float) -> int:
    """Crossings of VDD/2 inside the window, summed over batch lanes."""
    mask = w.window(*window)
    k = np.flatnonzero(mask)
    if k.size == 0:
        return 0
    lo = max(int(k[0]) - 1, 0)
    hi = np.asarray(w.values[lo : int(k[-1]) + 1]) > vdd / 2
    return int(np.count_nonzero(hi[1:] != hi[:-1]))


def electrical_energy(
    waveforms: Mapping[str, Waveform],
    window: tuple[float, float],
    *,
    vdd: float = 1.0,
    responsivity_A_per_W: float = 0.9,
    c_drv_fF: float = 1.4,
    sense_events: int = 0,
) -> float:
    """Photodiode bias energy plus driver switching energy over ``window``, in fJ.

    Each photodiode is biased at VDD and sources ``responsivity * P``. Every
    VDD/2 crossing of a storage node switches one driver, and every sensed
    output (``sense_events``) switches one more; each costs ``C_drv VDD^2``.
    """
    pds = [w for name, w in waveforms.items() if _PD_RE.match(name)]
    nodes = [w for name, w in waveforms.items() if _NODE_RE.match(name)]
    if not pds:
        raise UnknownProbe("P1", sorted(waveforms))
    if not nodes:
        raise UnknownProbe("Y", sorted(waveforms))
    if sense_events < 0:
        raise InvalidParameter("sense_events must be >= 0")
    # W * ps * V * A/W -> 1e-12 J = 1e3 fJ
    e_pd = sum(_integral(w, window) for w in pds) * responsivity_A_per_W * vdd * 1e3
    transitions = sum(count_transitions(w, window, vdd) for w in nodes) + sense_events
    e_drv = transitions * c_drv_fF * vdd**2  # fF * V^2 = fJ
    return max(e_pd, 0.0) + e_drv


def thermal_tuning_power(delta_lambda_nm: float, ring: RingParams | None = None) -> float:
    """Heater power (mW) for a resonance shift of ``delta_lambda_nm``.

    Only shifts up to half an FSR are meaningful; anything larger is better
    corrected by aiming at the neighbouring resonance order.
    """
    ring = ring or RingParams()
    half = fsr(ring) / 2
    if abs(delta_lambda_nm) > half * (1 + 1e-12):
        raise InvalidParameter(
            f"shift of {delta_lambda_nm:g} nm exceeds half an FSR ({half:.4f} nm); tune to the other order"
        )
    return abs(delta_lambda_nm) / ring.s_th_nm_per_mW


def report(
    op_kind: str,
    schedule: Schedule,
    waveforms: Mapping[str, Waveform],
    window: tuple[float, float],
    *,
    vdd: float = 1.0,
    responsivity_A_per_W: float = 0.9,
    c_drv_fF: float = 1.4,
    n_lanes: int = 1,
    heater_mW: float = 0.0,
    sense_events: int | None = None,
) -> EnergyReport:
    """Assemble optical, electrical and static thermal figures for one operation.

    By default reads and compute operations count one sensed output
    transition; multi-bit operations pass one per decided bit.
    """
    if sense_events is None:
        sense_events = 1 if op_kind in ("read", "xor", "xnor", "array-xor") else 0
    sense = sense_events
    return EnergyReport(
        op=op_kind,
        window_ps=(float(window[0]), float(window[1])),
        optical_fJ=optical_energy(schedule, window, n_lanes),
        electrical_fJ=electrical_energy(
            waveforms,
            window,
            vdd=vdd,
            responsivity_A_per_W=responsivity_A_per_W,
            c_drv_fF=c_drv_fF,
            sense_events=sense,
        ),
        thermal_static_mW=heater_mW,
    )
