"""Behavioral models of the passive and active optical devices.

Every device works on incoherent optical power: phases are ignored and signals
on distinct wavelengths never interact. Wavelengths are in nm, powers in W.

Functions accept floats or numpy arrays and broadcast, so the same code path
serves scalar checks and the batched transient engine.
"""

from __future__ import annotations

import math
import warnings
from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass, replace

import numpy as np

from xpsram.errors import InvalidParameter

#: Two wavelengths closer than this are the same channel.
WAVELENGTH_TOL_NM = 1e-6

#: Wavelength at which the latch rings resonate under full drive.
LAMBDA_IN_NM = 1310.52

#: Heater power that shifts a ring by half a free spectral range.
HALF_FSR_HEATER_MW = 7.2

#: Geometric length step that moves a resonance by one eighth of an FSR.
DL_STEP_NM = 34.0
CHANNELS_PER_FSR = 8


def db_to_linear(loss_db):
    """Power transmission of an insertion loss given in dB."""
    return 10.0 ** (-loss_db / 10.0)


def same_wavelength(a: float, b: float) -> bool:
    return abs(a - b) <= WAVELENGTH_TOL_NM


def _key(wavelength_nm: float) -> float:
    if not wavelength_nm > 0:
        raise InvalidParameter(f"wavelength must be positive, got {wavelength_nm}")
    return round(float(wavelength_nm), 6)


class WdmSignal(Mapping[float, float]):
    """Per-channel optical power on one waveguide.

    Keys are wavelengths in nm (channels within 1e-6 nm merge), values are
    powers in W.

    >>> s = WdmSignal({1310.52: 1e-4})
    >>> s[1310.5200000001]
    0.0001
    """

    __slots__ = ("_p",)

    def __init__(self, powers: Mapping[float, float] | Iterable[tuple[float, float]] = ()):
        self._p: dict[float, float] = {}
        items = powers.items() if isinstance(powers, Mapping) else powers
        for lam, p in items:
            if p < 0:
                raise InvalidParameter(f"optical power must be >= 0, got {p} at {lam} nm")
            k = _key(lam)
            self._p[k] = self._p.get(k, 0.0) + float(p)

    def __getitem__(self, wavelength_nm: float) -> float:
        return self._p[_key(wavelength_nm)]

    def __iter__(self) -> Iterator[float]:
        return iter(sorted(self._p))

    def __len__(self) -> int:
        return len(self._p)

    def __repr__(self) -> str:
        body = ", ".join(f"{k:.6f}: {v:.6g}" for k, v in sorted(self._p.items()))
        return f"WdmSignal({{{body}}})"

    def get(self, wavelength_nm: float, default: float = 0.0) -> float:
        return self._p.get(_key(wavelength_nm), default)

    def total(self) -> float:
        return sum(self._p.values())

    def scaled(self, factor: float) -> WdmSignal:
        return WdmSignal({k: v * factor for k, v in self._p.items()})


@dataclass(frozen=True)
class RingParams:
    """Add-drop microring parameters.

    ``mismatch_nm`` is a fabrication offset of the resonance. It is part of the
    physical resonance but not of the design, so configuration checks ignore it
    and tolerance studies perturb it.

    ``s_th_nm_per_mW`` defaults to the value at which 7.2 mW of heater power
    moves the resonance by exactly half an FSR.
    """

    radius_um: float = 7.5
    dL_nm: float = 0.0
    lambda_geo_nm: float = LAMBDA_IN_NM - 0.6
    fwhm_nm: float = 0.2
    s_eo_nm_per_V: float = 0.6
    s_th_nm_per_mW: float | None = None
    il_thru_db: float = 0.1
    il_drop_db: float = 1.0
    group_index: float = 4.0
    mismatch_nm: float = 0.0

    def __post_init__(self) -> None:
        bad = []
        if not self.fwhm_nm > 0:
            bad.append(f"fwhm_nm={self.fwhm_nm} must be > 0")
        if not self.radius_um > 0:
            bad.append(f"radius_um={self.radius_um} must be > 0")
        if self.il_thru_db < 0 or self.il_drop_db < 0:
            bad.append("insertion losses must be >= 0")
        if not self.group_index > 1:
            bad.append(f"group_index={self.group_index} must be > 1")
        if bad:
            raise InvalidParameter("; ".join(bad))
        if self.s_th_nm_per_mW is None:
            object.__setattr__(self, "s_th_nm_per_mW", fsr(self) / 2 / HALF_FSR_HEATER_MW)

    def with_(self, **changes) -> RingParams:
        # a derived thermal coefficient must follow geometry changes
        if "s_th_nm_per_mW" not in changes and ({"radius_um", "group_index"} & changes.keys()):
            changes["s_th_nm_per_mW"] = None
        return replace(self, **changes)


@dataclass(frozen=True)
class RingState:
    params: RingParams
    v_drive: float = 0.0
    p_heat_mW: float = 0.0

    def __post_init__(self) -> None:
        if self.p_heat_mW < 0:
            raise InvalidParameter(f"heater power must be >= 0, got {self.p_heat_mW}")


@dataclass(frozen=True)
class PdParams:
    """Photodiode as a light-controlled conductance.

    The responsivity is only used for energy accounting; the latch dynamics
    see the conductance ``g_dark_S + gamma_S_per_W * P``.
    """

    gamma_S_per_W: float = 2.0
    g_dark_S: float = 1e-9
    responsivity_A_per_W: float = 0.9

    def __post_init__(self) -> None:
        if min(self.gamma_S_per_W, self.g_dark_S, self.responsivity_A_per_W) < 0:
            raise InvalidParameter("photodiode parameters must be >= 0")


def lorentzian_response(detuning_nm, fwhm_nm):
    """Normalized single-pole resonance, ``1 / (1 + (2 detuning / fwhm)^2)``."""
    if np.any(np.asarray(fwhm_nm) <= 0):
        raise InvalidParameter(f"fwhm must be > 0, got {fwhm_nm}")
    x = 2.0 * np.asarray(detuning_nm, dtype=float) / fwhm_nm
    out = 1.0 / (1.0 + x * x)
    return float(out) if out.ndim == 0 else out


def fsr(params: RingParams) -> float:
    """Free spectral range in nm, evaluated at the operating wavelength."""
    if params.radius_um <= 0 or params.group_index <= 0:
        raise InvalidParameter("radius and group index must be positive")
    circumference_nm = 2.0 * math.pi * params.radius_um * 1e3
    return LAMBDA_IN_NM**2 / (params.group_index * circumference_nm)


def dl_shift(dL_nm, params: RingParams):
    """Resonance shift from a geometric length adjustment.

    Linear, with eight 34 nm steps spanning exactly one FSR.
    """
    limit = CHANNELS_PER_FSR * DL_STEP_NM
    if np.any(np.abs(np.asarray(dL_nm)) > limit + 1e-9):
        warnings.warn(f"dL={dL_nm} nm outside the calibrated +/-{limit:g} nm range", stacklevel=2)
    return dL_nm * (fsr(params) / limit)


def resonance_wavelength(state: RingState) -> float:
    p = state.params
    return (
        p.lambda_geo_nm
        + p.mismatch_nm
        + p.s_eo_nm_per_V * state.v_drive
        + p.s_th_nm_per_mW * state.p_heat_mW
        + dl_shift(p.dL_nm, p)
    )


def wrap_detuning(detuning_nm, fsr_nm: float):
    """Detuning from the nearest resonance order (rings are periodic in FSR)."""
    d = np.asarray(detuning_nm, dtype=float)
    out = d - fsr_nm * np.round(d / fsr_nm)
    return float(out) if out.ndim == 0 else out


def ring_power_split(detuning_nm, params: RingParams):
    """(thru, drop) power transmissions for the given raw detuning."""
    L = lorentzian_response(wrap_detuning(detuning_nm, fsr(params)), params.fwhm_nm)
    return (1.0 - L) * db_to_linear(params.il_thru_db), L * db_to_linear(params.il_drop_db)


def ring_transfer(p_in: float, wavelength_nm: float, state: RingState) -> tuple[float, float]:
    """Thru and drop powers of an add-drop ring fed at its input port."""
    if p_in < 0:
        raise InvalidParameter(f"optical power must be >= 0, got {p_in}")
    t_thru, t_drop = ring_power_split(wavelength_nm - resonance_wavelength(state), state.params)
    return p_in * t_thru, p_in * t_drop


def ring_transfer_signal(signal: WdmSignal, state: RingState) -> tuple[WdmSignal, WdmSignal]:
    lam_res = resonance_wavelength(state)
    thru, drop = {}, {}
    for lam, p in signal.items():
        t, d = ring_power_split(lam - lam_res, state.params)
        thru[lam], drop[lam] = p * t, p * d
    return WdmSignal(thru), WdmSignal(drop)


def split_5050(p_in, il_split_db: float = 0.0):
    if np.any(np.asarray(p_in) < 0):
        raise InvalidParameter(f"optical power must be >= 0, got {p_in}")
    half = p_in * 0.5 * db_to_linear(il_split_db)
    return half, half


def mmi_combine(inputs: list[WdmSignal], il_mmi_db: float = 0.5) -> WdmSignal:
    """Incoherent power sum of all inputs, per channel, minus the coupler loss."""
    if not inputs:
        raise InvalidParameter("mmi_combine needs at least one input")
    t = db_to_linear(il_mmi_db)
    total: dict[float, float] = {}
    for sig in inputs:
        for lam, p in sig.items():
            total[lam] = total.get(lam, 0.0) + p
    return WdmSignal({lam: p * t for lam, p in total.items()})


def pd_conductance(p_incident, params: PdParams):
    return params.g_dark_S + params.gamma_S_per_W * p_incident
