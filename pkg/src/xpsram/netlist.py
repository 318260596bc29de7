"""Optical/electrical netlist: devices, wiring, and the per-step evaluation.

Optics are memoryless, so one evaluation propagates every source through the
device graph in topological order. The only state lives on electrical nodes
(storage node voltages and, optionally, lagged driver outputs); feedback from
a node back into the optics goes through a driver, which is what keeps the
optical graph acyclic.

All signals carry a leading *batch* shape (independent copies of the circuit,
e.g. the columns of an array) and a trailing channel axis.
"""

from __future__ import annotations

import copy
import graphlib
from dataclasses import dataclass, field

import numpy as np

from xpsram.errors import ConfigurationError, TopologyError, UnknownProbe
from xpsram.latch import DriverParams, driver_output, node_step
from xpsram.optics import (
    PdParams,
    RingParams,
    WAVELENGTH_TOL_NM,
    db_to_linear,
    dl_shift,
    fsr,
)

_PORTS = {
    "source": ((), ("out",)),
    "splitter": (("in",), ("out0", "out1")),
    "ring": (("in",), ("thru", "drop")),
    "absorber": (("in",), ()),
    "pd": (("in",), ()),
    "output": (("in",), ()),
}


@dataclass
class Device:
    name: str
    kind: str
    n_inputs: int = 1
    loss_db: float = 0.0
    ring: RingParams | None = None
    driver: str | None = None
    v_fixed: float = 0.0
    heat_mW: float = 0.0
    pd: PdParams | None = None

    @property
    def inputs(self) -> tuple[str, ...]:
        if self.kind in ("mmi", "pd") and self.n_inputs > 1:
            return tuple(f"in{i}" for i in range(self.n_inputs))
        return _PORTS[self.kind][0] if self.kind != "mmi" else ("in0",)

    @property
    def outputs(self) -> tuple[str, ...]:
        if self.kind == "mmi":
            return ("out",)
        return _PORTS[self.kind][1]


@dataclass
class Solution:
    """One optical evaluation: every device output plus derived quantities."""

    signals: dict[tuple[str, str], np.ndarray]
    pd_power: np.ndarray  # (n_pd, *batch), summed over channels
    drive: np.ndarray  # (n_drivers, *batch)


@dataclass
class Netlist:
    channels_nm: np.ndarray
    batch: tuple[int, ...] = ()
    vdd: float = 1.0
    devices: dict[str, Device] = field(default_factory=dict)
    wires: dict[tuple[str, str], tuple[str, str]] = field(default_factory=dict)  # dst -> src
    nodes: dict[str, float] = field(default_factory=dict)  # name -> capacitance fF
    pd_attach: dict[str, tuple[str, str]] = field(default_factory=dict)  # pd -> (node, "up"|"down")
    drivers: dict[str, tuple[str, DriverParams]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.channels_nm = np.atleast_1d(np.asarray(self.channels_nm, dtype=float))
        self._compiled = False
        self.state: np.ndarray | None = None
        self.driver_state: np.ndarray | None = None
        self.last: Solution | None = None

    # construction -----------------------------------------------------------------

    def add(self, device: Device) -> Device:
        if device.name in self.devices:
            raise ConfigurationError(f"duplicate device {device.name!r}")
        if device.kind not in _PORTS and device.kind != "mmi":
            raise ConfigurationError(f"unknown device kind {device.kind!r}")
        self.devices[device.name] = device
        self._compiled = False
        return device

    def connect(self, src: str, dst: str) -> None:
        """Wire ``"dev.port" -> "dev.port"``."""
        s, d = tuple(src.split(".", 1)), tuple(dst.split(".", 1))
        if d in self.wires:
            raise TopologyError(f"input {dst} wired twice")
        self.wires[d] = s
        self._compiled = False

    def add_node(self, name: str, c_fF: float) -> None:
        self.nodes[name] = c_fF

    def attach_pd(self, pd: str, node: str, side: str) -> None:
        if side not in ("up", "down"):
            raise ConfigurationError(f"photodiode side must be up/down, got {side!r}")
        self.pd_attach[pd] = (node, side)

    def add_driver(self, name: str, node: str, params: DriverParams) -> None:
        self.drivers[name] = (node, params)

    # compilation ------------------------------------------------------------------

    def check(self) -> list[str]:
        """Connectivity self-check; returns a list of problems (empty if sound)."""
        problems = []
        used_outputs: dict[tuple[str, str], tuple[str, str]] = {}
        for dst, src in self.wires.items():
            if src[0] not in self.devices or src[1] not in self.devices[src[0]].outputs:
                problems.append(f"wire source {'.'.join(src)} does not exist")
            if dst[0] not in self.devices or dst[1] not in self.devices[dst[0]].inputs:
                problems.append(f"wire target {'.'.join(dst)} does not exist")
            if src in used_outputs:
                problems.append(f"output {'.'.join(src)} drives both {'.'.join(used_outputs[src])} and {'.'.join(dst)}")
            used_outputs[src] = dst
        for dev in self.devices.values():
            for port in dev.inputs:
                if (dev.name, port) not in self.wires:
                    problems.append(f"input {dev.name}.{port} is unconnected")
            for port in dev.outputs:
                if (dev.name, port) not in used_outputs:
                    problems.append(f"output {dev.name}.{port} is unconnected")
            if dev.kind == "pd" and dev.name not in self.pd_attach:
                problems.append(f"photodiode {dev.name} not attached to a node")
            if dev.kind == "ring" and dev.driver is not None and dev.driver not in self.drivers:
                problems.append(f"ring {dev.name} uses unknown driver {dev.driver}")
        for pd, (node, _) in self.pd_attach.items():
            if node not in self.nodes:
                problems.append(f"photodiode {pd} attached to unknown node {node}")
        for drv, (node, _) in self.drivers.items():
            if node not in self.nodes:
                problems.append(f"driver {drv} reads unknown node {node}")
        return problems

    def compile(self) -> None:
        problems = self.check()
        if problems:
            raise TopologyError("netlist failed connectivity check", problems)
        graph = graphlib.TopologicalSorter({name: set() for name in self.devices})
        for (dst, _), (src, _) in self.wires.items():
            graph.add(dst, src)
        try:
            self._order = list(graph.static_order())
        except graphlib.CycleError as exc:
            raise TopologyError(f"zero-delay optical cycle through {exc.args[1]}") from None

        self._node_names = list(self.nodes)
        self._node_idx = {n: i for i, n in enumerate(self._node_names)}
        self._pd_names = [d for d in self.devices if self.devices[d].kind == "pd"]
        self._pd_idx = {n: i for i, n in enumerate(self._pd_names)}
        self._drv_names = list(self.drivers)
        self._drv_idx = {n: i for i, n in enumerate(self._drv_names)}
        n_nodes, n_pd = len(self._node_names), len(self._pd_names)
        self._up = np.zeros((n_nodes, n_pd))
        self._down = np.zeros((n_nodes, n_pd))
        for pd, (node, side) in self.pd_attach.items():
            (self._up if side == "up" else self._down)[self._node_idx[node], self._pd_idx[pd]] = 1.0
        pds = [self.devices[n].pd or PdParams() for n in self._pd_names]
        bshape = (n_pd,) + (1,) * len(self.batch)
        self._gamma = np.array([p.gamma_S_per_W for p in pds]).reshape(bshape)
        self._gdark = np.array([p.g_dark_S for p in pds]).reshape(bshape)
        self._cap = np.array([self.nodes[n] for n in self._node_names]).reshape((n_nodes,) + (1,) * len(self.batch))

        # flat evaluation program: (kind, name, input keys, extra)
        self._program = []
        for name in self._order:
            dev = self.devices[name]
            ins = tuple(self.wires[(name, p)] for p in dev.inputs)
            if dev.kind == "ring":
                p = dev.ring
                base = p.lambda_geo_nm + p.mismatch_nm + p.s_th_nm_per_mW * dev.heat_mW + dl_shift(p.dL_nm, p)
                drv = self._drv_idx[dev.driver] if dev.driver is not None else None
                extra = (base, p.s_eo_nm_per_V, dev.v_fixed, drv, fsr(p), 2.0 / p.fwhm_nm,
                         db_to_linear(p.il_thru_db), db_to_linear(p.il_drop_db))
            elif dev.kind in ("mmi", "splitter"):
                extra = db_to_linear(dev.loss_db) * (0.5 if dev.kind == "splitter" else 1.0)
            elif dev.kind == "pd":
                extra = self._pd_idx[name]
            else:
                extra = None
            self._program.append((dev.kind, name, ins, extra))
        drv_nodes = [self._node_idx[node] for node, _ in self.drivers.values()]
        drv_params = [params for _, params in self.drivers.values()]
        bcast = (len(drv_nodes),) + (1,) * len(self.batch)
        self._drv_node_idx = np.array(drv_nodes, dtype=int)
        self._drv_gain = np.array([d.gain for d in drv_params]).reshape(bcast)
        self._drv_lo = np.array([d.v_out_min for d in drv_params]).reshape(bcast)
        self._drv_hi = np.array([d.v_out_max for d in drv_params]).reshape(bcast)
        self._probe_set = set(self._probe_names())
        self._lagged = any(params.tau_ps > 0 for _, params in self.drivers.values())
        self._compiled = True
        if self.state is None:
            self.reset()

    def reset(self, voltages: dict[str, float | np.ndarray] | None = None) -> None:
        if not self._compiled:
            self.compile()
        self.state = np.zeros((len(self._node_names),) + self.batch)
        for name, v in (voltages or {}).items():
            self.state[self._node_idx[name]] = v
        self.driver_state = self._driver_targets(self.state) if self._lagged else None
        self.last = None

    # evaluation -------------------------------------------------------------------

    @property
    def node_names(self) -> list[str]:
        return list(self._node_names)

    @property
    def pd_names(self) -> list[str]:
        return list(self._pd_names)

    def node(self, name: str) -> np.ndarray:
        return self.state[self._node_idx[name]]

    def channel_index(self, wavelength_nm: float) -> int:
        hits = np.flatnonzero(np.abs(self.channels_nm - wavelength_nm) <= WAVELENGTH_TOL_NM)
        if hits.size == 0:
            raise ConfigurationError(f"wavelength {wavelength_nm} nm is not a channel of this netlist")
        return int(hits[0])

    def _driver_targets(self, state: np.ndarray) -> np.ndarray:
        return np.clip(self._drv_gain * state[self._drv_node_idx], self._drv_lo, self._drv_hi)

    def drive_voltages(self) -> np.ndarray:
        return self.driver_state if self._lagged else self._driver_targets(self.state)

    def propagate(self, sources: dict[str, np.ndarray]) -> Solution:
        """Evaluate all optics for the current electrical state.

        ``sources`` maps source device names to power arrays of shape
        ``(*batch, n_channels)``; missing sources are dark.
        """
        if not self._compiled:
            self.compile()
        shape = self.batch + (len(self.channels_nm),)
        zero = np.zeros(shape)
        drive = self.drive_voltages()
        sig: dict[tuple[str, str], np.ndarray] = {}
        pd_power = np.zeros((len(self._pd_names),) + self.batch)
        lam = self.channels_nm
        for kind, name, ins, extra in self._program:
            if kind == "ring":
                base, s_eo, v_fixed, drv, fsr_nm, inv_hw, t_thru, t_drop = extra
                p_in = sig[ins[0]]
                v = drive[drv] if drv is not None else v_fixed
                res = base + s_eo * v
                d = lam - np.asarray(res)[..., None]
                d -= fsr_nm * np.round(d / fsr_nm)
                d *= inv_hw
                drop = p_in / (1.0 + d * d)
                sig[(name, "thru")] = (p_in - drop) * t_thru
                sig[(name, "drop")] = drop * t_drop
            elif kind == "source":
                sig[(name, "out")] = sources.get(name, zero)
            elif kind == "splitter":
                half = sig[ins[0]] * extra
                sig[(name, "out0")] = half
                sig[(name, "out1")] = half
            elif kind == "pd":
                total = sig[ins[0]]
                for key in ins[1:]:
                    total = total + sig[key]
                pd_power[extra] = total.sum(axis=-1)
            elif kind == "mmi":
                total = sig[ins[0]]
                for key in ins[1:]:
                    total = total + sig[key]
                sig[(name, "out")] = total * extra
            elif kind == "output":
                sig[(name, "in")] = sig[ins[0]]
            # absorbers swallow their input
        self.last = Solution(signals=sig, pd_power=pd_power, drive=drive)
        return self.last

    def integrate(self, sol: Solution, dt_ps: float) -> None:
        g = (self._gdark + self._gamma * sol.pd_power).reshape(len(self._pd_names), -1)
        g_up = (self._up @ g).reshape(self.state.shape)
        g_dn = (self._down @ g).reshape(self.state.shape)
        self.state = node_step(self.state, g_up, g_dn, dt_ps, self.vdd, self._cap)
        if self._lagged:
            new = []
            for i, (node, params) in enumerate(self.drivers.values()):
                new.append(driver_output(self.state[self._node_idx[node]], params, self.driver_state[i], dt_ps))
            self.driver_state = np.stack(new).reshape(self.driver_state.shape)

    # probes -----------------------------------------------------------------------

    def probe_names(self) -> list[str]:
        if not self._compiled:
            self.compile()
        return sorted(self._probe_set)

    def _probe_names(self) -> list[str]:
        names = list(self._node_names)
        for name, dev in self.devices.items():
            if dev.kind in ("source", "output"):
                names += [name, f"{name}:spectrum"]
            elif dev.kind == "pd":
                names.append(name)
        return names

    def probe_unit(self, name: str) -> str:
        if name in self.nodes:
            return "V"
        if name not in self.probe_names():
            raise UnknownProbe(name, self.probe_names())
        return "W"

    def probe(self, name: str) -> np.ndarray:
        """Instantaneous probe value (volts for nodes, watts for optical ports)."""
        if not self._compiled:
            self.compile()
        if name in self._node_idx:
            return self.state[self._node_idx[name]].copy()
        if name not in self._probe_set:
            raise UnknownProbe(name, self.probe_names())
        if self.last is None:
            self.propagate({})
        if name in self._pd_idx:
            return self.last.pd_power[self._pd_idx[name]].copy()
        base, _, kind = name.partition(":")
        dev = self.devices[base]
        key = (base, "out") if dev.kind == "source" else (base, "in")
        spectrum = self.last.signals[key]
        return spectrum.copy() if kind == "spectrum" else spectrum.sum(axis=-1)

    def copy(self) -> Netlist:
        return copy.deepcopy(self)
