import numpy as np
import pytest

from xpsram.array import build_array
from xpsram.bitcell import Bitcell, BitcellConfig
from xpsram.engine import PulseEvent, Schedule, read_csv, run, write_csv
from xpsram.errors import InvalidParameter, TopologyError, UnknownProbe
from xpsram.latch import DriverParams
from xpsram.netlist import Device, Netlist
from xpsram.optics import PdParams, RingParams

LAM = 1310.52


def tiny_netlist(batch=()):
    """Source -> driven ring -> two photodiodes on one node, ring driven by that node."""
    net = Netlist([LAM], batch=batch)
    net.add(Device("S", "source"))
    net.add(Device("R", "ring", ring=RingParams(), driver="D"))
    net.add(Device("PU", "pd", pd=PdParams(g_dark_S=0.0)))
    net.add(Device("PD", "pd", pd=PdParams(g_dark_S=0.0)))
    net.connect("S.out", "R.in")
    net.connect("R.thru", "PU.in")
    net.connect("R.drop", "PD.in")
    net.add_node("V", 1.0)
    net.attach_pd("PU", "V", "up")
    net.attach_pd("PD", "V", "down")
    net.add_driver("D", "V", DriverParams())
    net.compile()
    return net


class TestScheduleTypes:
    def test_pulse_invariants(self):
        with pytest.raises(InvalidParameter):
            PulseEvent("X", 0.0, 0.0, 1e-3, LAM)
        with pytest.raises(InvalidParameter):
            PulseEvent("X", 0.0, 10.0, -1e-3, LAM)

    def test_sorted_and_bounded(self):
        a = PulseEvent("X", 50.0, 10.0, 1e-4, LAM)
        b = PulseEvent("XB", 10.0, 10.0, 1e-4, LAM)
        sched = Schedule((a, b), 100.0)
        assert [e.port for e in sched.events] == ["XB", "X"]
        with pytest.raises(InvalidParameter):
            Schedule((a,), 55.0)
        with pytest.raises(InvalidParameter):
            Schedule((a,), 100.0, 0.0)

    def test_overlap(self):
        e = PulseEvent("X", 10.0, 100.0, 1e-4, LAM)
        assert e.overlap_ps(0.0, 50.0) == 40.0
        assert e.overlap_ps(200.0, 300.0) == 0.0


class TestRun:
    def test_empty_schedule_holds(self):
        net = tiny_netlist()
        net.reset({"V": 0.7})
        res = run(net, Schedule((), 1000.0), ["V", "S"])
        assert np.all(res["S"].values == 0.0)
        assert np.all(res["V"].values == 0.7)

    def test_empty_schedule_bitcell_drift_is_dark_leakage_only(self):
        cell = Bitcell(BitcellConfig())
        cell.reset(1)
        y0 = float(cell.y)
        res = run(cell.netlist, Schedule((), 1000.0), ["Y", "Z", "X"])
        assert np.all(res["Z"].values == 0.0) and np.all(res["X"].values == 0.0)
        # g_dark / C = 1e6 V/s, so at most 1 mV in 1 ns
        assert abs(float(res["Y"].values[-1]) - y0) < 1e-3

    def test_units_and_unknown_probe(self):
        cell = Bitcell(BitcellConfig())
        assert cell.netlist.probe_unit("Y") == "V"
        assert cell.netlist.probe_unit("Z") == "W"
        with pytest.raises(UnknownProbe) as info:
            cell.netlist.probe("Q7")
        assert "Y" in str(info.value) and "Z" in str(info.value)
        with pytest.raises(UnknownProbe):
            run(cell.netlist, Schedule((), 10.0), ["Q7"])

    def test_deterministic(self):
        def once():
            cell = Bitcell(BitcellConfig())
            sched = cell.schedule([], 300.0)
            sched = Schedule(sched.events + (PulseEvent("WBL", 20.0, 50.0, 1e-3, LAM),), 300.0)
            return run(cell.netlist, sched, ["Y", "YB", "Z"])

        a, b = once(), once()
        for p in ("Y", "YB", "Z"):
            assert np.array_equal(a[p].values, b[p].values)

    def test_causality(self):
        cell = Bitcell(BitcellConfig())
        sched = Schedule((PulseEvent("IN", 0.0, 400.0, 10e-6, LAM), PulseEvent("WBL", 200.0, 50.0, 1e-3, LAM)), 400.0)
        res = run(cell.netlist, sched, ["Y", "Z", "WBL"])
        before = res["Y"].window(0.0, 200.0)
        assert np.ptp(res["Y"].values[before]) < 1e-6
        assert np.all(res["WBL"].values[before] == 0.0)
        assert float(res["Y"].at(260.0)) > 0.95

    def test_snaps_off_grid_edges(self):
        net = tiny_netlist()
        with pytest.warns(UserWarning, match="grid"):
            res = run(net, Schedule((PulseEvent("S", 10.4, 5.0, 1e-5, LAM),), 30.0), ["S"])
        on = res["S"].values > 0
        assert res["S"].t_ps[on][0] == 10.0

    def test_pulse_on_unknown_port(self):
        with pytest.raises(InvalidParameter):
            run(tiny_netlist(), Schedule((PulseEvent("NOPE", 0.0, 5.0, 1e-5, LAM),), 10.0), [])

    def test_superposition_of_disjoint_channels(self):
        def z(word_bits):
            arr = build_array(2, 1)
            arr.reset(np.array([[0], [0]]))
            events = [PulseEvent(f"IN[{i}]", 0.0, 120.0, 10e-6, LAM) for i in range(2)]
            for ch, on in zip(arr.plan.channels, word_bits):
                if on:
                    events.append(PulseEvent("X", 20.0, 100.0, 1e-4, ch.lambda_nm))
            return run(arr.netlist, Schedule(tuple(events), 120.0), ["Z:spectrum"])["Z:spectrum"].values

        both, first, second = z((1, 1)), z((1, 0)), z((0, 1))
        assert np.allclose(both, first + second, rtol=1e-12, atol=1e-18)

    def test_batched_lanes(self):
        net = tiny_netlist(batch=(3,))
        events = (PulseEvent("S", 0.0, 10.0, 1e-4, LAM, lane=1),)
        res = run(net, Schedule(events, 10.0), ["S"])
        assert res["S"].values.shape == (10, 3)
        assert np.all(res["S"].values[:, [0, 2]] == 0) and np.all(res["S"].values[:, 1] == 1e-4)


class TestTopology:
    def test_optical_cycle(self):
        net = Netlist([LAM])
        net.add(Device("A", "splitter"))
        net.add(Device("B", "mmi", n_inputs=2))
        net.add(Device("S", "source"))
        net.add(Device("O", "output"))
        net.connect("S.out", "B.in0")
        net.connect("A.out0", "B.in1")
        net.connect("B.out", "A.in")
        net.connect("A.out1", "O.in")
        with pytest.raises(TopologyError, match="cycle"):
            net.compile()

    def test_dangling_port(self):
        net = Netlist([LAM])
        net.add(Device("S", "source"))
        net.add(Device("R", "ring", ring=RingParams()))
        net.connect("S.out", "R.in")
        with pytest.raises(TopologyError) as info:
            net.compile()
        assert any("R.thru" in p for p in info.value.failed_checks)

    def test_double_wired_input(self):
        net = Netlist([LAM])
        net.add(Device("S", "source"))
        net.add(Device("O", "output"))
        net.connect("S.out", "O.in")
        with pytest.raises(TopologyError):
            net.connect("S.out", "O.in")

    def test_bitcell_passes_self_check(self):
        assert Bitcell(BitcellConfig()).netlist.check() == []


class TestCsv:
    def test_round_trip(self, tmp_path):
        cell = Bitcell(BitcellConfig())
        res = cell.run_script([], t_end_ps=50.0)
        path = write_csv(tmp_path / "t.csv", [res.waveforms[p] for p in ("Y", "YB", "Z")])
        lines = path.read_text().splitlines()
        assert lines[0] == "# units: ps,V,V,W"
        assert lines[1] == "time_ps,Y,YB,Z"
        back = read_csv(path)
        assert [w.name for w in back] == ["Y", "YB", "Z"]
        assert np.allclose(back[0].values, res.waveforms["Y"].values, rtol=1e-8)
        assert back[2].unit == "W"

    def test_rejects_batched(self, tmp_path):
        res = run(tiny_netlist(batch=(2,)), Schedule((), 5.0), ["V"])
        with pytest.raises(InvalidParameter):
            write_csv(tmp_path / "x.csv", [res["V"]])
