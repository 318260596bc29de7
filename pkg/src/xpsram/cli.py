"""Command-line front end.

Exit codes: 0 success, 1 configuration error, 2 simulation diagnostic.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from xpsram.array import build_array, word_str
from xpsram.bitcell import Bitcell, Op
from xpsram.config import PRESETS, Scenario, dump_scenario, load_scenario, parse_scenario, preset
from xpsram.energy import TABLE1, report
from xpsram.engine import write_csv
from xpsram.errors import ConfigurationError, Diagnostic, InvalidParameter, UnknownProbe
from xpsram.optics import CHANNELS_PER_FSR, DL_STEP_NM, RingParams, RingState, fsr, resonance_wavelength

log = logging.getLogger("xpsram")


def _setup_logging() -> None:
    level = os.environ.get("XPSRAM_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def _scenario(args, command: str) -> Scenario:
    if args.config and args.preset:
        raise ConfigurationError("use either --config or --preset, not both")
    if args.config:
        sc = load_scenario(args.config)
    elif args.preset:
        sc = preset(args.preset)
    else:
        sc = parse_scenario({"command": command})
    if sc.command is not None and sc.command != command:
        raise ConfigurationError(f"scenario {sc.name!r} is for the {sc.command!r} command, not {command!r}")
    data = sc.dump()
    if args.dt_ps is not None:
        data["engine"]["dt_ps"] = args.dt_ps
    if args.seed is not None:
        data["seed"] = args.seed
    if getattr(args, "compare", False):
        data["compare"] = True
    # re-validated, so the effective config is exactly what a file would give
    return parse_scenario(data)


def _write_json(path: Path, data) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2) + "\n")


def _op_window(op: Op, cfg) -> tuple[float, float]:
    pulse = op.pulse(cfg)
    return (op.t_start_ps, op.t_start_ps + (pulse[1] if pulse else op.duration_ps))


# commands -------------------------------------------------------------------------------


def cmd_bitcell(sc: Scenario, out: Path) -> int:
    cfg = sc.bitcell_config()
    ops = [o.to_op() for o in sc.ops if o.op != "array-xor"]
    if len(ops) != len(sc.ops):
        raise ConfigurationError("array-xor operations need the array command")
    cell = Bitcell(cfg)
    cell.reset(sc.engine.initial_bit)
    res = cell.run_script(ops, sc.engine.t_end_ps, sc.engine.dt_ps, probes=sc.probes, strict=False)
    write_csv(out / sc.outputs.trace_csv, [res.waveforms[p] for p in sc.probes])
    rows = []
    for r in res.ops:
        d = r.as_dict()
        d["energy"] = report(
            r.op.kind, res.run.schedule, res.waveforms, _op_window(r.op, cfg),
            vdd=cfg.vdd, responsivity_A_per_W=cfg.pd_params[0].responsivity_A_per_W, c_drv_fF=cfg.c_drv_fF,
        ).as_dict()
        rows.append(d)
        arg = "" if r.op.bit is None else f"({r.op.bit})"
        outcome = r.diagnostic or (f"-> {r.bit}" if r.bit is not None else "ok")
        print(f"{r.op.t_start_ps:8.1f} ps  {r.op.kind}{arg:<4} {outcome}")
    table = _truth_table(res.ops)
    if table:
        print("XOR truth table (stored, input -> Z):")
        for s, x, z in table:
            print(f"  {s} {x} -> {z}")
    _write_json(out / sc.outputs.report_json, {"scenario": sc.name, "ops": rows, "truth_table": table,
                                               "calibration": _jsonable(getattr(cell, "calibration", None))})
    return 2 if res.diagnostics else 0


def _truth_table(results) -> list[tuple[int, int, int]]:
    stored, table = None, []
    for r in results:
        if r.op.kind == "write" and r.diagnostic is None:
            stored = r.op.bit
        elif r.op.kind in ("xor", "xnor") and stored is not None and r.bit is not None:
            table.append((stored, r.op.bit, r.bit))
    return table


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def cmd_array(sc: Scenario, out: Path) -> int:
    cfg = sc.bitcell_config()
    m = sc.array.rows
    jobs = []
    if sc.array.random_pairs:
        rng = np.random.default_rng(sc.seed)
        k = sc.array.random_pairs
        stored = rng.integers(0, 2, (k, m))
        inputs = rng.integers(0, 2, (k, m))
        jobs.append(([word_str(w) for w in stored], [word_str(w) for w in inputs], k))
    for o in sc.ops:
        if o.op != "array-xor":
            raise ConfigurationError(f"the array command only runs array-xor operations, got {o.op!r}")
        jobs.append((o.stored, o.input, len(o.input)))
    if not jobs:
        raise ConfigurationError("array scenario has no array-xor operations and no random_pairs")

    status = 0
    spectrum_rows, words, energies = [], [], []
    for stored, inputs, n in jobs:
        if stored is not None and len(stored) != n:
            raise ConfigurationError(f"{len(stored)} stored words for {n} input words")
        arr = build_array(m, n, cfg=cfg)
        res = arr.single_shot_xor(stored, inputs, xnor=sc.array.xnor, dt_ps=sc.engine.dt_ps)
        mismatches = 0
        for j, col in enumerate(res.spectra):
            expect = [a ^ b ^ int(sc.array.xnor) for a, b in zip(res.stored[j], res.inputs[j])]
            ok = col.bits == expect
            mismatches += not ok
            if n <= 16:
                print(f"column {j + 1}: Y={word_str(res.stored[j])} X={word_str(res.inputs[j])} "
                      f"Z={word_str(col.bits)}" + ("" if ok else f"  (oracle {word_str(expect)})"))
            words.append({"column": j + 1, "stored": word_str(res.stored[j]), "input": word_str(res.inputs[j]),
                          "output": word_str(col.bits), "oracle": word_str(expect)})
            for row in col.as_rows():
                spectrum_rows.append({"column": j + 1, **row})
        if n > 16:
            print(f"{n} random word pairs (seed {sc.seed}): {n - mismatches}/{n} match the XOR oracle")
        if mismatches:
            status = 2
        rep = report("array-xor", res.run.schedule, res.run.waveforms, res.compute_window,
                     vdd=cfg.vdd, responsivity_A_per_W=cfg.pd_params[0].responsivity_A_per_W,
                     c_drv_fF=cfg.c_drv_fF, n_lanes=n, sense_events=n * m)
        energies.append({**rep.as_dict(), "bits": n * m, "per_bit_fJ": rep.total_fJ / (n * m)})

    path = out / sc.outputs.spectrum_csv
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, ["column", "channel", "wavelength_nm", "power_uW", "decoded_bit"])
        writer.writeheader()
        writer.writerows(spectrum_rows)
    _write_json(out / sc.outputs.report_json, {"scenario": sc.name, "words": words, "energy": energies})
    return status


def sweep_dl(start_nm: float, stop_nm: float, step_nm: float, ring=None) -> tuple[np.ndarray, np.ndarray]:
    """Resonance under full drive for dL from ``start`` to ``stop`` inclusive."""
    if not step_nm > 0:
        raise InvalidParameter(f"dL step must be > 0, got {step_nm}")
    ring = ring or RingParams()
    if stop_nm < start_nm:
        dl = np.array([])
    else:
        dl = start_nm + step_nm * np.arange(int(np.floor((stop_nm - start_nm) / step_nm + 1e-9)) + 1)
    lam = np.array([resonance_wavelength(RingState(ring.with_(dL_nm=float(d)), 1.0)) for d in dl])
    return dl, lam


def cmd_sweep_dl(sc: Scenario, out: Path) -> int:
    ring = sc.bitcell_config().compute_rings[0]
    s = sc.sweep
    dl, lam = sweep_dl(s.dl_start_nm, s.dl_stop_nm, s.dl_step_nm, ring)
    path = out / sc.outputs.sweep_csv
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dL_nm", "lambda_nm"])
        writer.writerows([[f"{d:.6g}", f"{l:.6f}"] for d, l in zip(dl, lam)])
    expected = fsr(ring) / (CHANNELS_PER_FSR * DL_STEP_NM)
    summary = {"rows": len(dl), "fsr_nm": fsr(ring), "expected_slope_nm_per_nm": expected}
    if len(dl) >= 2:
        slope = float(np.polyfit(dl, lam, 1)[0])
        summary.update(slope_nm_per_nm=slope, span_nm=float(lam[-1] - lam[0]))
        print(f"{len(dl)} rows; fitted slope {slope:.6g} nm/nm (FSR/(8*34 nm) = {expected:.6g}); "
              f"span {lam[-1] - lam[0]:.4f} nm, FSR {fsr(ring):.4f} nm")
    else:
        print(f"{len(dl)} rows; not enough points for a slope")
    _write_json(out / sc.outputs.report_json, summary)
    return 0


def cmd_energy(sc: Scenario, out: Path) -> int:
    cfg = sc.bitcell_config()
    specs = sc.ops or parse_scenario({"ops": [{"op": "xor", "bit": 1, "t_start_ps": 20}]}).ops
    if any(o.op == "array-xor" for o in specs):
        raise ConfigurationError("energy reports cover single-cell operations; use the array command for array-xor")
    cell = Bitcell(cfg)
    cell.reset(sc.engine.initial_bit)
    ops = [o.to_op() for o in specs]
    res = cell.run_script(ops, sc.engine.t_end_ps, sc.engine.dt_ps, strict=False)
    heat = float(sum(cfg.latch_heat_mW))
    reports = []
    for op in ops:
        rep = report(op.kind, res.run.schedule, res.waveforms, _op_window(op, cfg), vdd=cfg.vdd,
                     responsivity_A_per_W=cfg.pd_params[0].responsivity_A_per_W, c_drv_fF=cfg.c_drv_fF,
                     heater_mW=heat)
        reports.append(rep.as_dict())
        print(f"{op.kind:6s} optical {rep.optical_fJ:8.3f} fJ  electrical {rep.electrical_fJ:7.3f} fJ  "
              f"total {rep.total_fJ:8.3f} fJ  thermal {rep.thermal_static_mW:.3g} mW")
    data = reports[0] if len(reports) == 1 else {"reports": reports}
    if sc.compare:
        data = {**data, "comparison": list(TABLE1)}
        for row in TABLE1:
            print(f"  {row['design']:<32s} {row['energy_fJ_per_bit']:10.2f} fJ/bit")
    _write_json(out / sc.outputs.report_json, data)
    return 2 if res.diagnostics else 0


COMMANDS = {"bitcell": cmd_bitcell, "array": cmd_array, "sweep-dl": cmd_sweep_dl, "energy": cmd_energy}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xpsram", description="Photonic SRAM bitcell and WDM array simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="scenario file (YAML or JSON)")
        p.add_argument("--preset", choices=sorted(PRESETS), help="built-in scenario")
        p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        p.add_argument("--dt-ps", type=float, default=None, help="time step override")
        p.add_argument("--seed", type=int, default=None, help="random seed override")
        p.add_argument("--compare", action="store_true", help="append reference energies")
    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        sc = _scenario(args, args.command)
        args.out.mkdir(parents=True, exist_ok=True)
        dump_scenario(sc, args.out / sc.outputs.effective_config)
        return COMMANDS[args.command](sc, args.out)
    except (ConfigurationError, InvalidParameter, UnknownProbe) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Diagnostic as exc:
        print(f"diagnostic: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
