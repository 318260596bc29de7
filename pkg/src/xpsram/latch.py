"""Electrical side of the storage loop.

Each storage node sits between a pull-up photodiode (to VDD) and a pull-down
photodiode (to GND); the node capacitance integrates the difference of the two
photoconductance currents. Drivers are clamped non-inverting buffers that turn
node voltages into ring drive voltages.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from xpsram.errors import InvalidParameter, NonConvergence
from xpsram.optics import RingState, db_to_linear, pd_conductance, resonance_wavelength, ring_power_split

if TYPE_CHECKING:
    from xpsram.bitcell import BitcellConfig

# dt[ps] / C[fF] -> dt / C in s/F
_PS_PER_FF = 1e-12 / 1e-15


@dataclass(frozen=True)
class LatchState:
    v_y: float
    v_yb: float
    c_node_fF: float = 1.0

    def __post_init__(self) -> None:
        if not self.c_node_fF > 0:
            raise InvalidParameter(f"node capacitance must be > 0, got {self.c_node_fF}")

    def bit(self, vdd: float = 1.0) -> int | None:
        """Stored bit if both nodes sit within 5% of opposite rails, else None."""
        band = 0.05 * vdd
        if self.v_y >= vdd - band and self.v_yb <= band:
            return 1
        if self.v_y <= band and self.v_yb >= vdd - band:
            return 0
        return None


@dataclass(frozen=True)
class DriverParams:
    gain: float = 1.0
    v_out_min: float = 0.0
    v_out_max: float = 1.0
    tau_ps: float = 0.0

    def __post_init__(self) -> None:
        if not self.v_out_min < self.v_out_max:
            raise InvalidParameter("driver needs v_out_min < v_out_max")
        if self.tau_ps < 0:
            raise InvalidParameter("driver tau_ps must be >= 0")


def node_step(v, g_up, g_down, dt_ps: float, vdd: float, c_fF: float):
    """One explicit-Euler step of ``C dV/dt = g_up (VDD - V) - g_down V``, clamped to the rails."""
    if not dt_ps > 0:
        raise InvalidParameter(f"dt must be > 0, got {dt_ps}")
    dv = (g_up * (vdd - v) - g_down * v) * (dt_ps / c_fF * _PS_PER_FF)
    return np.clip(v + dv, 0.0, vdd)


def driver_output(v_node, params: DriverParams, v_prev=None, dt_ps: float | None = None):
    """Clamped buffer output; with ``tau_ps > 0`` and a previous output, lags it by one step."""
    target = np.clip(params.gain * np.asarray(v_node, dtype=float), params.v_out_min, params.v_out_max)
    if params.tau_ps > 0 and v_prev is not None:
        if dt_ps is None:
            raise InvalidParameter("lagged driver needs dt_ps")
        alpha = 1.0 - math.exp(-dt_ps / params.tau_ps)
        target = v_prev + (target - v_prev) * alpha
    return float(target) if np.ndim(target) == 0 else target


@dataclass(frozen=True)
class FixedPoints:
    """Outcome of settling the storage loop from corner initializations."""

    attractors: list[tuple[float, float]]
    metastable: list[tuple[float, float]]
    settle_time_ps: list[float]


def _loop_rates(cfg: BitcellConfig, y, yb):
    """Node currents / C for the bias-only storage loop (no netlist involved).

    Returns (dY/dt, dYB/dt) in V/ps together with the instantaneous divider
    targets, so callers can both integrate and inspect the drift.
    """
    m1, m2 = cfg.latch_rings
    p1, p2, p3, p4 = cfg.pd_params
    d1, d2 = cfg.drivers
    p_ring = cfg.bias_power_W * 0.5 * db_to_linear(cfg.il_split_db)
    h1, h2 = cfg.latch_heat_mW
    # M1 follows YB (via D2), M2 follows Y (via D1)
    res1 = resonance_wavelength(RingState(m1, 0.0, h1)) + m1.s_eo_nm_per_V * driver_output(yb, d2)
    res2 = resonance_wavelength(RingState(m2, 0.0, h2)) + m2.s_eo_nm_per_V * driver_output(y, d1)
    t1, r1 = ring_power_split(cfg.lambda_in_nm - res1, m1)
    t2, r2 = ring_power_split(cfg.lambda_in_nm - res2, m2)
    g_up_y, g_dn_y = pd_conductance(p_ring * t1, p1), pd_conductance(p_ring * r1, p2)
    g_up_yb, g_dn_yb = pd_conductance(p_ring * t2, p3), pd_conductance(p_ring * r2, p4)
    k = _PS_PER_FF / cfg.c_node_fF
    vdd = cfg.vdd
    dy = (g_up_y * (vdd - y) - g_dn_y * y) * k
    dyb = (g_up_yb * (vdd - yb) - g_dn_yb * yb) * k
    target = (vdd * g_up_y / (g_up_y + g_dn_y), vdd * g_up_yb / (g_up_yb + g_dn_yb))
    return dy, dyb, target


def settle(
    cfg: BitcellConfig,
    y0,
    yb0,
    dt_ps: float = 1.0,
    horizon_ps: float = 100_000.0,
    tol_V: float = 1e-9,
):
    """Integrate the bias-only loop until no node moves more than ``tol_V`` per step.

    Vectorized over the initial conditions. Returns ``(y, yb, settle_time_ps)``.
    """
    vdd = cfg.vdd
    y = np.array(y0, dtype=float, ndmin=1)
    yb = np.array(yb0, dtype=float, ndmin=1)
    settled = np.full(y.shape, np.nan)
    n_steps = int(round(horizon_ps / dt_ps))
    for k in range(n_steps):
        dy, dyb, _ = _loop_rates(cfg, y, yb)
        y_new = np.clip(y + dy * dt_ps, 0.0, vdd)
        yb_new = np.clip(yb + dyb * dt_ps, 0.0, vdd)
        moved = np.maximum(np.abs(y_new - y), np.abs(yb_new - yb))
        y, yb = y_new, yb_new
        newly = np.isnan(settled) & (moved < tol_V)
        settled[newly] = (k + 1) * dt_ps
        if not np.isnan(settled).any():
            break
    if np.isnan(settled).any():
        _, _, target = _loop_rates(cfg, y, yb)
        drift = (float(np.mean(target[0])), float(np.mean(target[1])))
        raise NonConvergence(
            f"storage loop did not settle within {horizon_ps:g} ps; nodes drifting toward {drift}",
            drift_target=drift,
        )
    return y, yb, settled


def latch_fixed_points(cfg: BitcellConfig, dt_ps: float = 1.0, horizon_ps: float = 100_000.0) -> FixedPoints:
    """Settle the bias-only loop from (0, VDD), (VDD, 0) and (VDD/2, VDD/2).

    Settled points with an unstable linearization are reported as metastable
    instead of as attractors.
    """
    vdd = cfg.vdd
    y, yb, settled = settle(cfg, [0.0, vdd, vdd / 2], [vdd, 0.0, vdd / 2], dt_ps, horizon_ps)

    attractors: list[tuple[float, float]] = []
    metastable: list[tuple[float, float]] = []
    for yi, ybi in zip(y, yb):
        point = (float(yi), float(ybi))
        bucket = metastable if _is_saddle(cfg, *point) else attractors
        if not any(abs(point[0] - q[0]) < 1e-3 * vdd and abs(point[1] - q[1]) < 1e-3 * vdd for q in bucket):
            bucket.append(point)
    return FixedPoints(attractors=attractors, metastable=metastable, settle_time_ps=settled.tolist())


def _is_saddle(cfg: BitcellConfig, y: float, yb: float, h: float = 1e-6) -> bool:
    jac = np.empty((2, 2))
    for j, (ey, eyb) in enumerate(((h, 0.0), (0.0, h))):
        fp = _loop_rates(cfg, y + ey, yb + eyb)[:2]
        fm = _loop_rates(cfg, y - ey, yb - eyb)[:2]
        jac[:, j] = (np.array(fp) - np.array(fm)) / (2 * h)
    return bool(np.max(np.linalg.eigvals(jac).real) > 0)
