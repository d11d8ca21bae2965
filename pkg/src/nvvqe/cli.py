"""``nvvqe run|oracle|sweep|calibrate``.

Output files
------------
trace.json     resolved config, every IterationRecord, converged energy/theta
trace.csv      one row per record: iteration, theta1..theta4, energy,
               energy_error, grad_norm, fidelity, then the nuclear and
               electron Bloch components
bloch.csv      iteration plus the six Bloch components
sweep.csv      epsilon, mean_energy, std_energy, then one column per seed
oracle.json    spectrum and ground-state amplitudes (real, imag)
calibration.json
               XX+-YY calibration factors and per-pulse phase offsets

Every CSV starts with ``# config: <compact JSON>`` so a file carries the
config (master seed included) that produced it. Floats use 17 significant
digits.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import spearmanr

from . import readout as ro
from .ansatz import layer_gates
from .config import ConfigError, ExperimentConfig, dumps, parse_config
from .dynamics import compile_gates, phase_correction
from .qcore import hermitian_eigensystem, pauli_sum_matrix
from .vqe import IterationTrace, readout_error_sweep, run_vqe

TRACE_COLUMNS = (
    "iteration", "theta1", "theta2", "theta3", "theta4", "energy", "energy_error",
    "grad_norm", "fidelity", "nuc_x", "nuc_y", "nuc_z", "ele_x", "ele_y", "ele_z",
)
BLOCH_COLUMNS = ("iteration", "nuc_x", "nuc_y", "nuc_z", "ele_x", "ele_y", "ele_z")


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _config_line(cfg: ExperimentConfig) -> str:
    return "# config: " + json.dumps(cfg.to_dict(), separators=(",", ":")) + "\n"


def _write_csv(path: Path, cfg: ExperimentConfig, header: Sequence[str], rows) -> None:
    lines = [_config_line(cfg), ",".join(header) + "\n"]
    lines += [",".join(_fmt(v) for v in row) + "\n" for row in rows]
    with open(path, "w", newline="\n") as fh:
        fh.writelines(lines)


def _write_json(path: Path, doc: dict) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(json.dumps(doc, indent=2) + "\n")


def write_trace(out: Path, cfg: ExperimentConfig, trace: IterationTrace) -> None:
    doc = trace.to_dict()
    doc["config"] = cfg.to_dict()
    _write_json(out / "trace.json", doc)
    rows, bloch = [], []
    for r in trace.records:
        b = (*r.bloch_nuclear, *r.bloch_electron)
        rows.append((r.index, *r.theta, r.energy, r.energy_error, r.gradient_norm, r.fidelity, *b))
        bloch.append((r.index, *b))
    _write_csv(out / "trace.csv", cfg, TRACE_COLUMNS, rows)
    _write_csv(out / "bloch.csv", cfg, BLOCH_COLUMNS, bloch)


def _out_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_run(cfg: ExperimentConfig, out: Path) -> int:
    trace = run_vqe(cfg.optimizer, cfg.backend())
    write_trace(out, cfg, trace)
    if trace.failure:
        print(f"run failed: {trace.failure}", file=sys.stderr)
        return 1
    last = trace.records[-1]
    print(f"converged energy {last.energy:.6f} +- {last.energy_error:.6f}")
    print(f"fidelity {last.fidelity:.6f}")
    return 0


def cmd_oracle(cfg: ExperimentConfig, out: Path) -> int:
    w, v = hermitian_eigensystem(pauli_sum_matrix(cfg.hamiltonian))
    g = v[:, 0]
    # fix the global phase: largest amplitude real and positive
    k = int(np.argmax(np.abs(g)))
    g = g * np.exp(-1j * np.angle(g[k]))
    print("spectrum " + " ".join(f"{x:.6f}" for x in w))
    print("ground " + " ".join(f"{a.real:+.6f}{a.imag:+.6f}j" for a in g))
    _write_json(
        out / "oracle.json",
        {"config": cfg.to_dict(), "spectrum": [float(x) for x in w],
         "ground_state": [[float(a.real), float(a.imag)] for a in g]},
    )
    return 0


def cmd_sweep(cfg: ExperimentConfig, out: Path, epsilons: Sequence[float], seeds: int) -> int:
    points = readout_error_sweep(cfg.optimizer, epsilons, cfg.backend(), seeds)
    header = ["epsilon", "mean_energy", "std_energy"] + [f"seed_{cfg.optimizer.seed + j}" for j in range(seeds)]
    rows = [(p.epsilon, p.mean, p.std, *p.energies) for p in points]
    _write_csv(out / "sweep.csv", cfg, header, rows)
    for p in points:
        print(f"epsilon {p.epsilon:.4f}  energy {p.mean:.6f} +- {p.std:.6f}")
    if len(points) > 1:
        rho = spearmanr([p.epsilon for p in points], [p.mean for p in points]).statistic
        print(f"rank correlation {rho:+.4f}")
    return 0


def calibration_report(cfg: ExperimentConfig) -> dict:
    hw = cfg.hardware
    b = cfg.backend()
    mode = "pulse" if cfg.optimizer.backend == "pulse" else "ideal"
    cal = ro.calibrate_xxyy(cfg.rates, mode, hw, b.noise)
    pulses = []
    named = [("ansatz", compile_gates(layer_gates(cfg.optimizer.theta0), hw).pulses)]
    named += [(k, compile_gates(g, hw).pulses) for k, g in ro.POST_ROTATIONS.items()]
    for name, seq in named:
        for i, p in enumerate(seq):
            row = {"sequence": name, "index": i, "transition": p.transition, "duration": p.duration}
            if p.is_electron:
                offset, scale = phase_correction(p, hw)
                row.update(phase_offset=offset, readout_scale=scale)
            pulses.append(row)
    return {"config": cfg.to_dict(), "xxyy_factor": {"plus": cal.plus, "minus": cal.minus}, "pulses": pulses}


def cmd_calibrate(cfg: ExperimentConfig, out: Path) -> int:
    doc = calibration_report(cfg)
    _write_json(out / "calibration.json", doc)
    f = doc["xxyy_factor"]
    print(f"xxyy factor plus {f['plus']:.6f} minus {f['minus']:.6f}")
    for row in doc["pulses"]:
        if "phase_offset" in row:
            print(f"{row['sequence']}[{row['index']}] {row['transition']}: "
                  f"offset {row['phase_offset']:+.6f} rad, scale {row['readout_scale']:.6f}")
    return 0


def _epsilons(text: str) -> list[float]:
    vals = [float(x) for x in text.split(",") if x.strip()]
    if not vals:
        raise argparse.ArgumentTypeError("need at least one epsilon")
    return vals


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nvvqe", description="VQE on an NV-centre two-qubit register.")
    ap.add_argument("command", choices=("run", "oracle", "sweep", "calibrate"))
    ap.add_argument("--config", required=True)
    ap.add_argument("--mode", choices=("ideal", "density", "pulse"))
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out", default=".")
    ap.add_argument("--epsilons", type=_epsilons, default=[0.0, 0.01, 0.02, 0.03, 0.04, 0.05])
    ap.add_argument("--seeds-per-point", type=int, default=5)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config)
        opt = cfg.optimizer
        if args.mode:
            opt = replace(opt, backend=args.mode)
        if args.seed is not None:
            opt = replace(opt, seed=args.seed)
        cfg = replace(cfg, optimizer=opt)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.seeds_per_point < 1:
        print("--seeds-per-point must be >= 1", file=sys.stderr)
        return 2
    try:
        out = _out_dir(args.out)
    except OSError as exc:
        print(f"cannot create output directory {args.out}: {exc}", file=sys.stderr)
        return 1
    try:
        if args.command == "run":
            return cmd_run(cfg, out)
        if args.command == "oracle":
            return cmd_oracle(cfg, out)
        if args.command == "sweep":
            return cmd_sweep(cfg, out, args.epsilons, args.seeds_per_point)
        return cmd_calibrate(cfg, out)
    except (ArithmeticError, RuntimeError, ValueError, OSError) as exc:
        print(f"{args.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


__all__ = ["main", "build_parser", "dumps"]
