"""Fixed-step transient executor and waveform I/O."""

from __future__ import annotations

import csv
import logging
import warnings
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from xpsram.errors import InvalidParameter
from xpsram.netlist import Netlist

log = logging.getLogger(__name__)

# snap tolerance, as a fraction of dt
_GRID_TOL = 1e-6


@dataclass(frozen=True)
class PulseEvent:
    """Rectangular optical pulse on a source port, ``[t_start, t_start + width)``.

    ``lane`` selects one copy of a batched netlist; ``None`` drives all of them.
    """

    port: str
    t_start_ps: float
    width_ps: float
    power_W: float
    lambda_nm: float
    lane: int | None = None

    def __post_init__(self) -> None:
        if not self.width_ps > 0:
            raise InvalidParameter(f"pulse width must be > 0, got {self.width_ps}")
        if self.power_W < 0:
            raise InvalidParameter(f"pulse power must be >= 0, got {self.power_W}")

    @property
    def t_end_ps(self) -> float:
        return self.t_start_ps + self.width_ps

    def overlap_ps(self, t0: float, t1: float) -> float:
        return max(0.0, min(self.t_end_ps, t1) - max(self.t_start_ps, t0))


@dataclass(frozen=True)
class Schedule:
    events: tuple[PulseEvent, ...]
    t_end_ps: float
    dt_ps: float = 1.0

    def __post_init__(self) -> None:
        if not self.dt_ps > 0:
            raise InvalidParameter(f"dt must be > 0, got {self.dt_ps}")
        ordered = tuple(sorted(self.events, key=lambda e: e.t_start_ps))
        object.__setattr__(self, "events", ordered)
        last = max((e.t_end_ps for e in ordered), default=0.0)
        if self.t_end_ps < last - _GRID_TOL * self.dt_ps:
            raise InvalidParameter(f"t_end_ps={self.t_end_ps} ends before the last pulse ({last} ps)")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end_ps / self.dt_ps))

    def with_dt(self, dt_ps: float) -> Schedule:
        return Schedule(self.events, self.t_end_ps, dt_ps)

    def shifted(self, offset_ps: float, t_end_ps: float | None = None) -> Schedule:
        events = tuple(
            PulseEvent(e.port, e.t_start_ps + offset_ps, e.width_ps, e.power_W, e.lambda_nm, e.lane)
            for e in self.events
        )
        return Schedule(events, self.t_end_ps + offset_ps if t_end_ps is None else t_end_ps, self.dt_ps)


@dataclass
class Waveform:
    """Probe samples on the uniform grid ``t = k * dt``.

    ``values`` has the time axis first; batched runs keep the batch (and, for
    spectrum probes, channel) axes after it.
    """

    name: str
    unit: str
    t_ps: np.ndarray
    values: np.ndarray

    @property
    def dt_ps(self) -> float:
        return float(self.t_ps[1] - self.t_ps[0]) if len(self.t_ps) > 1 else 0.0

    def window(self, t0: float, t1: float) -> np.ndarray:
        """Boolean mask of samples with ``t0 <= t < t1``."""
        eps = _GRID_TOL * max(self.dt_ps, 1e-12)
        return (self.t_ps >= t0 - eps) & (self.t_ps < t1 - eps)

    def at(self, t: float) -> np.ndarray:
        k = int(np.clip(np.searchsorted(self.t_ps, t - _GRID_TOL), 0, len(self.t_ps) - 1))
        return self.values[k]

    def mean(self, t0: float, t1: float) -> np.ndarray:
        return self.values[self.window(t0, t1)].mean(axis=0)


@dataclass
class RunResult:
    waveforms: dict[str, Waveform]
    schedule: Schedule
    final_state: dict[str, np.ndarray] = field(default_factory=dict)

    def __getitem__(self, name: str) -> Waveform:
        return self.waveforms[name]


def _snap(t: float, dt: float, what: str) -> int:
    k = t / dt
    kr = round(k)
    if abs(k - kr) > _GRID_TOL:
        warnings.warn(f"{what} at {t} ps is off the {dt} ps grid; snapped to {kr * dt} ps", stacklevel=3)
    return int(kr)


class _SourceTable:
    """Piecewise-constant source powers, rebuilt only at pulse edges."""

    def __init__(self, netlist: Netlist, schedule: Schedule):
        dt = schedule.dt_ps
        self.shape = netlist.batch + (len(netlist.channels_nm),)
        per_port: dict[str, list] = {}
        for e in schedule.events:
            if e.port not in netlist.devices or netlist.devices[e.port].kind != "source":
                raise InvalidParameter(f"pulse on {e.port!r}, which is not a source port")
            k0 = _snap(e.t_start_ps, dt, f"{e.port} pulse start")
            k1 = _snap(e.t_end_ps, dt, f"{e.port} pulse end")
            per_port.setdefault(e.port, []).append((k0, k1, e.lane, netlist.channel_index(e.lambda_nm), e.power_W))
        self.ports = {}
        self.edges: set[int] = set()
        for port, rows in per_port.items():
            arr = np.array(rows, dtype=object)
            k0 = arr[:, 0].astype(int)
            k1 = arr[:, 1].astype(int)
            lanes = np.array([-1 if r[2] is None else r[2] for r in rows], dtype=int)
            self.ports[port] = (k0, k1, lanes, arr[:, 3].astype(int), arr[:, 4].astype(float))
            self.edges.update(k0.tolist())
            self.edges.update(k1.tolist())
        self.current: dict[str, np.ndarray] = {}

    def at(self, k: int) -> dict[str, np.ndarray]:
        if k == 0 or k in self.edges:
            self.current = {}
            for port, (k0, k1, lanes, ch, p) in self.ports.items():
                on = (k0 <= k) & (k < k1)
                if not on.any():
                    continue
                out = np.zeros(self.shape)
                everywhere = on & (lanes < 0)
                for c, pw in zip(ch[everywhere], p[everywhere]):
                    out[..., c] += pw
                sel = on & (lanes >= 0)
                if sel.any():
                    np.add.at(out, (lanes[sel], ch[sel]), p[sel])
                self.current[port] = out
        return self.current


def run(netlist: Netlist, schedule: Schedule, probes: Sequence[str]) -> RunResult:
    """Step the netlist through ``schedule`` and record ``probes``.

    Each step samples the sources at ``t_k``, propagates the optics for the
    current node voltages, records the probes, then advances the nodes to
    ``t_{k+1}``.
    """
    if not netlist._compiled:
        netlist.compile()
    units = {p: netlist.probe_unit(p) for p in probes}
    table = _SourceTable(netlist, schedule)
    n = schedule.n_steps
    dt = schedule.dt_ps
    buffers: dict[str, list[np.ndarray]] = {p: [] for p in probes}
    log.debug("transient: %d steps of %g ps, batch %s", n, dt, netlist.batch)
    for k in range(n):
        sol = netlist.propagate(table.at(k))
        for p in probes:
            buffers[p].append(netlist.probe(p))
        netlist.integrate(sol, dt)
    t = np.arange(n) * dt
    waves = {p: Waveform(p, units[p], t, np.asarray(buffers[p])) for p in probes}
    final = {name: netlist.node(name).copy() for name in netlist.node_names}
    return RunResult(waves, schedule, final)


def probe(netlist: Netlist, name: str) -> np.ndarray:
    return netlist.probe(name)


def write_csv(path: str | Path, waveforms: Iterable[Waveform]) -> Path:
    """CSV with header ``time_ps,<probe>...`` and a ``# units:`` comment line."""
    waves = list(waveforms)
    if not waves:
        raise InvalidParameter("no waveforms to write")
    t = waves[0].t_ps
    for w in waves:
        if w.values.ndim != 1:
            raise InvalidParameter(f"waveform {w.name} is not scalar per sample; select a lane first")
        if len(w.t_ps) != len(t):
            raise InvalidParameter("waveforms are on different grids")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        fh.write("# units: " + ",".join(["ps"] + [w.unit for w in waves]) + "\n")
        writer = csv.writer(fh)
        writer.writerow(["time_ps"] + [w.name for w in waves])
        for k in range(len(t)):
            writer.writerow([f"{t[k]:.6g}"] + [f"{w.values[k]:.9g}" for w in waves])
    return path


def read_csv(path: str | Path) -> list[Waveform]:
    lines = Path(path).read_text().splitlines()
    units = lines[0].removeprefix("# units:").strip().split(",")
    rows = list(csv.reader(lines[1:]))
    header, data = rows[0], np.array(rows[1:], dtype=float).reshape(-1, len(rows[0]))
    t = data[:, 0]
    return [Waveform(name, units[i + 1], t, data[:, i + 1]) for i, name in enumerate(header[1:])]
