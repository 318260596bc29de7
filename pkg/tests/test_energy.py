import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from xpsram.array import build_array
from xpsram.bitcell import Bitcell, BitcellConfig, Op
from xpsram.energy import TABLE1, EnergyReport, electrical_energy, optical_energy, report, thermal_tuning_power
from xpsram.engine import PulseEvent, Schedule, Waveform
from xpsram.errors import InvalidParameter, UnknownProbe
from xpsram.optics import RingParams, fsr

LAM = 1310.52


def single_op(op: Op, bit: int = 0):
    cell = Bitcell(BitcellConfig())
    cell.reset(bit)
    res = cell.run_script([op], t_end_ps=op.t_start_ps + op.span_ps(cell.cfg))
    pulse = op.pulse(cell.cfg)
    window = (op.t_start_ps, op.t_start_ps + (pulse[1] if pulse else op.duration_ps))
    return res, window


def synthetic(y, p=0.0):
    t = np.arange(len(y), dtype=float)
    return {
        "Y": Waveform("Y", "V", t, np.asarray(y, dtype=float)),
        "P1": Waveform("P1", "W", t, np.full(len(y), p)),
    }


class TestOptical:
    def test_xor(self):
        res, window = single_op(Op("xor", 20, bit=1))
        # 100 uW * 100 ps + 10 uW * 100 ps
        assert optical_energy(res.run.schedule, window) == pytest.approx(11.0, rel=1e-12)

    def test_write(self):
        res, window = single_op(Op("write", 20, bit=1))
        assert optical_energy(res.run.schedule, window) == pytest.approx(50.5, rel=1e-12)

    def test_hold(self):
        res, window = single_op(Op("hold", 20, duration_ps=1000))
        assert optical_energy(res.run.schedule, window) == pytest.approx(10.0, rel=1e-12)

    def test_dark(self):
        assert optical_energy(Schedule((), 100.0), (0.0, 100.0)) == 0.0

    @given(
        st.lists(st.tuples(st.floats(0, 900), st.floats(1, 100), st.floats(0, 1e-3)), max_size=6),
        st.floats(0, 1000),
    )
    def test_exact_and_additive(self, pulses, split):
        events = tuple(PulseEvent("X", t, w, p, LAM) for t, w, p in pulses)
        sched = Schedule(events, 1000.0)
        analytic = sum(p * max(0.0, min(t + w, 1000.0) - t) for t, w, p in pulses) * 1e3
        total = optical_energy(sched, (0.0, 1000.0))
        assert total == pytest.approx(analytic, rel=1e-12, abs=1e-12)
        parts = optical_energy(sched, (0.0, split)) + optical_energy(sched, (split, 1000.0))
        assert parts == pytest.approx(total, rel=1e-12, abs=1e-12)


class TestElectrical:
    def test_xor_calibration(self):
        res, window = single_op(Op("xor", 20, bit=1))
        # bias-lit photodiodes plus one sensed output bit; no latch node switches
        e = electrical_energy(res.waveforms, window, sense_events=1)
        assert e == pytest.approx(2.2, rel=0.3)

    def test_dark_idle(self):
        assert electrical_energy(synthetic(np.zeros(50)), (0, 50)) == 0.0

    def test_transitions_are_linear(self):
        one = electrical_energy(synthetic([0, 0, 1, 1, 1, 1]), (0, 6))
        two = electrical_energy(synthetic([0, 0, 1, 1, 0, 0]), (0, 6))
        assert one == pytest.approx(1.4) and two == pytest.approx(2 * one)

    def test_sense_events(self):
        assert electrical_energy(synthetic(np.zeros(5)), (0, 5), sense_events=3) == pytest.approx(4.2)

    @given(st.floats(0, 1e-3), st.floats(0, 1e-3))
    def test_monotone_in_illumination(self, a, b):
        lo, hi = sorted((a, b))
        e = lambda p: electrical_energy(synthetic(np.zeros(10), p), (0, 10))  # noqa: E731
        assert 0 <= e(lo) <= e(hi)

    def test_additive(self):
        res, _ = single_op(Op("write", 20, bit=1))
        whole = electrical_energy(res.waveforms, (0.0, 300.0))
        parts = electrical_energy(res.waveforms, (0.0, 45.0)) + electrical_energy(res.waveforms, (45.0, 300.0))
        assert parts == pytest.approx(whole, rel=1e-12)

    def test_missing_probes(self):
        t = np.arange(3.0)
        with pytest.raises(UnknownProbe):
            electrical_energy({"Y": Waveform("Y", "V", t, t)}, (0, 3))
        with pytest.raises(UnknownProbe):
            electrical_energy({"P1": Waveform("P1", "W", t, t)}, (0, 3))


class TestThermal:
    def test_half_fsr(self):
        assert thermal_tuning_power(fsr(RingParams()) / 2) == pytest.approx(7.2, rel=1e-12)

    def test_examples(self):
        half = fsr(RingParams()) / 2
        assert thermal_tuning_power(0.0) == 0.0
        assert thermal_tuning_power(half / 2) == pytest.approx(3.6, rel=1e-12)
        assert thermal_tuning_power(-half / 2) == pytest.approx(3.6, rel=1e-12)
        assert half == pytest.approx(4.556, abs=1e-3)

    def test_out_of_range(self):
        with pytest.raises(InvalidParameter):
            thermal_tuning_power(fsr(RingParams()) / 2 + 0.01)

    @given(st.floats(0, 1), st.floats(0, 1))
    def test_linear(self, a, b):
        half = fsr(RingParams()) / 2
        lhs = thermal_tuning_power(half * a * 0.5 + half * b * 0.5)
        assert lhs == pytest.approx(0.5 * thermal_tuning_power(half * a) + 0.5 * thermal_tuning_power(half * b), abs=1e-12)


class TestReport:
    def test_xor(self):
        res, window = single_op(Op("xor", 20, bit=1))
        rep = report("xor", res.run.schedule, res.waveforms, window)
        assert rep.optical_fJ == pytest.approx(11.0, rel=1e-12)
        assert rep.total_fJ == pytest.approx(13.2, rel=0.1)
        assert rep.total_fJ == rep.optical_fJ + rep.electrical_fJ
        assert set(rep.as_dict()) == {"op", "window_ps", "optical_fJ", "electrical_fJ", "total_fJ", "thermal_static_mW"}

    def test_read(self):
        res, window = single_op(Op("read", 20), bit=1)
        rep = report("read", res.run.schedule, res.waveforms, window)
        assert rep.optical_fJ == pytest.approx(11.0, rel=1e-12)
        assert rep.electrical_fJ == pytest.approx(2.0, rel=0.3)

    def test_wdm_op(self):
        arr = build_array(8, 1)
        res = arr.single_shot_xor("10010011", "11001010")
        rep = report("array-xor", res.run.schedule, res.run.waveforms, res.compute_window, sense_events=8)
        # 8 channels of 100 uW and 8 row bias lasers of 10 uW, all for 100 ps
        assert rep.optical_fJ == pytest.approx(8 * 10.0 + 8 * 1.0, rel=1e-12)
        single, window = single_op(Op("xor", 20, bit=1))
        one = report("xor", single.run.schedule, single.waveforms, window)
        assert rep.total_fJ / 8 <= one.total_fJ * (1 + 1e-6)

    def test_negative_rejected(self):
        with pytest.raises(InvalidParameter):
            EnergyReport("xor", (0, 1), -1.0, 0.0)


def test_reference_table():
    energies = [row["energy_fJ_per_bit"] for row in TABLE1]
    assert energies == [17.25, 3679.0, 7960.0, 13.15]
