"""Gradient-descent VQE loop over ideal, density-matrix and pulse backends.

Seed scheme
-----------
Every random draw comes from ``SeedSequence(master_seed, spawn_key=key)``:

* ``(k, s, q)``: shot noise of sequence ``q`` (index into
  ``readout.SEQUENCE_KINDS``) for parameter set ``s`` of iteration ``k``.
  ``s = 0`` is the current point; ``s = 1 + 2*(i-1) + {0: +, 1: -}`` is the
  shifted point for angle ``i``. Four-point rules use ``s = 9..16`` for the
  outer shifts.
* ``(k, s, q, 1)``: detuning jitter for that sequence's repetition block.
* ``(k, 0, 99)``: Monte Carlo error-bar resampling.

Sweeps over seeds use master seeds ``seed, seed + 1, ...``.
"""

from __future__ import annotations

import math
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import readout as ro
from .ansatz import N_PARAMS, SHIFT, AnsatzParams, layer_gates, neighbor_params, prepare_trial_state
from .dynamics import HardwareParams, NoiseModel, compile_gates, default_noise, initial_state, simulate_schedule
from .qcore import (
    PauliSum,
    bloch_vector,
    expectation,
    fidelity,
    ground_state,
    default_hamiltonian,
    partial_trace,
    projector,
)

BACKENDS = ("ideal", "density", "pulse")
GRADIENT_RULES = ("two-point", "four-point", "finite-difference")
DEFAULT_THETA0 = tuple(2 * math.pi * x for x in (0.1, 0.2, 0.1, 0.2))

# exact shift rule for generators with spectrum {0, +-1/2}
_D_PLUS = (math.sqrt(2) + 1) / (4 * math.sqrt(2))
_D_MINUS = (math.sqrt(2) - 1) / (4 * math.sqrt(2))
_MC_SPAWN = 99


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("NVVQE_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class OptimizerConfig:
    theta0: AnsatzParams = AnsatzParams(DEFAULT_THETA0)
    alpha: float = 0.3
    max_iters: int = 16
    grad_tol: Optional[float] = None
    backend: str = "ideal"
    trials: int = 1_000_000
    seed: int = 0
    n_samples: int = 200
    gradient_rule: str = "two-point"
    fd_step: float = 1e-5

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"optimizer.alpha must be > 0, got {self.alpha}")
        if self.max_iters < 0:
            raise ValueError("optimizer.max_iters must be >= 0")
        if self.backend not in BACKENDS:
            raise ValueError(f"optimizer.backend must be one of {BACKENDS}, got {self.backend!r}")
        if self.gradient_rule not in GRADIENT_RULES:
            raise ValueError(f"optimizer.gradient_rule must be one of {GRADIENT_RULES}")
        if self.trials < 1:
            raise ValueError("optimizer.trials must be >= 1")
        if self.n_samples < 2:
            raise ValueError("optimizer.n_samples must be >= 2")
        if self.grad_tol is not None and not self.grad_tol > 0:
            raise ValueError("optimizer.grad_tol must be > 0 when set")


class EvaluationCounter:
    def __init__(self):
        self._lock = threading.Lock()
        self.energy_evaluations = 0
        self.sequences = 0

    def add(self, evaluations: int, sequences: int) -> None:
        with self._lock:
            self.energy_evaluations += evaluations
            self.sequences += sequences

    def reset(self) -> None:
        with self._lock:
            self.energy_evaluations = 0
            self.sequences = 0


@dataclass
class Backend:
    """The physics a run is evaluated against."""

    hamiltonian: PauliSum = field(default_factory=default_hamiltonian)
    hw: HardwareParams = field(default_factory=HardwareParams)
    noise: Optional[NoiseModel] = None
    rates: ro.PLRates = field(default_factory=ro.PLRates)
    error: ro.ReadoutErrorModel = field(default_factory=ro.ReadoutErrorModel)
    shot_noise: str = "poisson"
    normalization: str = "fixed"
    counter: EvaluationCounter = field(default_factory=EvaluationCounter, repr=False)

    def __post_init__(self):
        if self.noise is None:
            self.noise = default_noise(self.hw)
        self._calibration: dict[str, ro.XXYYCalibration] = {}
        self._lock = threading.Lock()
        energy, vec = ground_state(self.hamiltonian)
        self.exact_energy = energy
        self.exact_state = vec

    def settings(self, kind: str, trials: int) -> ro.ReadoutSettings:
        return ro.ReadoutSettings(
            rates=self.rates,
            error=self.error,
            trials=trials,
            shot_noise=self.shot_noise,
            normalization=self.normalization,
            mode="pulse" if kind == "pulse" else "ideal",
            hw=self.hw,
            noise=self.noise,
        )

    def calibration(self, kind: str) -> ro.XXYYCalibration:
        mode = "pulse" if kind == "pulse" else "ideal"
        with self._lock:
            if mode not in self._calibration:
                self._calibration[mode] = ro.calibrate_xxyy(self.rates, mode, self.hw, self.noise)
            return self._calibration[mode]

    def with_error(self, epsilon: float) -> Backend:
        return replace(self, error=ro.ReadoutErrorModel(epsilon), counter=EvaluationCounter())


@dataclass(frozen=True)
class Evaluation:
    energy: float
    estimates: ro.PauliEstimates
    records: tuple[ro.MeasurementRecord, ...]
    rho: np.ndarray


def _stream(master_seed: int, key: Sequence[int]) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=tuple(key)))


def energy_of(
    theta: AnsatzParams,
    backend: Backend,
    cfg: OptimizerConfig,
    spawn_prefix: Sequence[int] = (0, 0),
) -> Evaluation:
    """Energy at ``theta``: exact for the ideal backend, measured otherwise."""
    if cfg.backend == "ideal":
        psi = prepare_trial_state(theta)
        rho = projector(psi)
        backend.counter.add(1, 0)
        return Evaluation(
            expectation(psi, backend.hamiltonian), ro.exact_estimates(rho), (), rho
        )

    schedule = compile_gates(layer_gates(theta), backend.hw)
    rho = simulate_schedule(
        initial_state(), schedule, backend.hw, backend.noise, _stream(cfg.seed, (*spawn_prefix, 0, 1))
    )
    rhos = None
    if backend.noise.detuning_std_khz > 0:
        # each sequence is its own repetition block with its own field offset
        rhos = {
            kind: simulate_schedule(
                initial_state(), schedule, backend.hw, backend.noise, _stream(cfg.seed, (*spawn_prefix, q, 1))
            )
            for q, kind in enumerate(ro.SEQUENCE_KINDS)
        }
    est, records = ro.measure_all(
        rho, backend.settings(cfg.backend, cfg.trials), backend.calibration(cfg.backend),
        cfg.seed, spawn_prefix, rhos,
    )
    backend.counter.add(1, len(ro.SEQUENCE_KINDS))
    return Evaluation(ro.estimate_energy(est, backend.hamiltonian), est, tuple(records), rho)


def _shift_points(theta: AnsatzParams, rule: str, fd_step: float) -> list[AnsatzParams]:
    pts = []
    shift = fd_step if rule == "finite-difference" else SHIFT
    for i in range(1, N_PARAMS + 1):
        pts += [neighbor_params(theta, i, +1, shift), neighbor_params(theta, i, -1, shift)]
    if rule == "four-point":
        for i in range(1, N_PARAMS + 1):
            pts += [neighbor_params(theta, i, +1, 3 * SHIFT), neighbor_params(theta, i, -1, 3 * SHIFT)]
    return pts


def _gradient_from(energies: Sequence[float], rule: str, fd_step: float) -> np.ndarray:
    e = np.asarray(energies)
    inner = e[0:8:2] - e[1:8:2]
    if rule == "two-point":
        return inner / 2
    if rule == "finite-difference":
        return inner / (2 * fd_step)
    outer = e[8:16:2] - e[9:16:2]
    return _D_PLUS * inner - _D_MINUS * outer


def _evaluate_many(
    points: Sequence[AnsatzParams], backend: Backend, cfg: OptimizerConfig, iteration: int, first_set: int
) -> list[Evaluation]:
    jobs = [(p, (iteration, first_set + j)) for j, p in enumerate(points)]
    threads = worker_count()
    if threads == 1 or len(jobs) == 1:
        return [energy_of(p, backend, cfg, key) for p, key in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda job: energy_of(job[0], backend, cfg, job[1]), jobs))


def parameter_shift_gradient(
    theta: AnsatzParams, backend: Backend, cfg: OptimizerConfig, iteration: int = 0
) -> np.ndarray:
    """Gradient from shifted-parameter energies (rule set by ``cfg``)."""
    evals = _evaluate_many(_shift_points(theta, cfg.gradient_rule, cfg.fd_step), backend, cfg, iteration, 1)
    return _gradient_from([ev.energy for ev in evals], cfg.gradient_rule, cfg.fd_step)


def gradient_descent_step(theta: np.ndarray, grad: np.ndarray, alpha: float) -> np.ndarray:
    return np.asarray(theta, dtype=float) - alpha * np.asarray(grad, dtype=float)


def monte_carlo_error_bar(
    records: Sequence[ro.MeasurementRecord],
    rates: ro.PLRates,
    calibration: ro.XXYYCalibration,
    hamiltonian: PauliSum,
    n_samples: int = 200,
    seed=None,
    shot_noise: str = "poisson",
) -> float:
    """Std of the energy when every raw signal is redrawn from its shot noise."""
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    if shot_noise == "none" or not records:
        return 0.0
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    kinds = [r.kind for r in records]
    signals = np.array([r.sampled_signal for r in records])
    trials = np.array([r.trials for r in records], dtype=float)
    if shot_noise == "poisson":
        draws = rng.poisson(signals * trials, size=(n_samples, len(records))) / trials
    else:
        draws = signals + rng.normal(size=(n_samples, len(records))) * np.sqrt(signals / trials)
    energies = [
        ro.estimate_energy(ro.estimates_from_signals(dict(zip(kinds, row)), rates, calibration), hamiltonian)
        for row in draws
    ]
    return float(np.std(energies, ddof=1))


@dataclass(frozen=True)
class IterationRecord:
    index: int
    theta: tuple[float, ...]
    estimates: dict
    energy: float
    gradient: tuple[float, ...]
    energy_error: float
    fidelity: float
    bloch_nuclear: tuple[float, float, float]
    bloch_electron: tuple[float, float, float]

    @property
    def gradient_norm(self) -> float:
        return float(np.linalg.norm(self.gradient))


@dataclass
class IterationTrace:
    config: dict
    records: list[IterationRecord] = field(default_factory=list)
    failure: Optional[str] = None

    @property
    def converged_energy(self) -> float:
        return self.records[-1].energy

    @property
    def converged_theta(self) -> tuple[float, ...]:
        return self.records[-1].theta

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "records": [dict(asdict(r), gradient_norm=r.gradient_norm) for r in self.records],
            "converged_energy": self.converged_energy if self.records else None,
            "converged_theta": list(self.converged_theta) if self.records else None,
            "failure": self.failure,
        }


def _config_echo(cfg: OptimizerConfig) -> dict:
    d = asdict(cfg)
    d["theta0"] = {"theta": list(cfg.theta0.theta), "layers": cfg.theta0.layers}
    return d


def run_vqe(cfg: OptimizerConfig, backend: Optional[Backend] = None) -> IterationTrace:
    """Energy, gradient, update; repeated ``max_iters`` times.

    Every record (the last one included) costs 1 + 8 energy evaluations
    with the two-point rule.
    """
    backend = backend or Backend()
    trace = IterationTrace(config=_config_echo(cfg))
    theta = cfg.theta0
    target = backend.exact_state
    for k in range(cfg.max_iters + 1):
        try:
            points = [theta] + _shift_points(theta, cfg.gradient_rule, cfg.fd_step)
            evals = _evaluate_many(points, backend, cfg, k, 0)
            center = evals[0]
            grad = _gradient_from([e.energy for e in evals[1:]], cfg.gradient_rule, cfg.fd_step)
            err = 0.0
            if center.records:
                err = monte_carlo_error_bar(
                    center.records, backend.rates, backend.calibration(cfg.backend),
                    backend.hamiltonian, cfg.n_samples, _stream(cfg.seed, (k, 0, _MC_SPAWN)),
                    backend.shot_noise,
                )
        except (ArithmeticError, RuntimeError, ValueError) as exc:
            trace.failure = f"iteration {k}: {type(exc).__name__}: {exc}"
            break
        trace.records.append(
            IterationRecord(
                index=k,
                theta=tuple(theta.theta),
                estimates=center.estimates.as_dict(),
                energy=center.energy,
                gradient=tuple(float(g) for g in grad),
                energy_error=err,
                fidelity=fidelity(center.rho, target),
                bloch_nuclear=bloch_vector(partial_trace(center.rho, 1)),
                bloch_electron=bloch_vector(partial_trace(center.rho, 2)),
            )
        )
        if cfg.grad_tol is not None and np.linalg.norm(grad) < cfg.grad_tol:
            break
        if k < cfg.max_iters:
            theta = theta.with_theta(gradient_descent_step(theta.array, grad, cfg.alpha))
    return trace


@dataclass(frozen=True)
class SweepPoint:
    epsilon: float
    energies: tuple[float, ...]

    @property
    def mean(self) -> float:
        return float(np.mean(self.energies))

    @property
    def std(self) -> float:
        return float(np.std(self.energies, ddof=1)) if len(self.energies) > 1 else 0.0


def readout_error_sweep(
    cfg: OptimizerConfig,
    epsilons: Sequence[float],
    backend: Optional[Backend] = None,
    seeds_per_point: int = 1,
) -> list[SweepPoint]:
    """Converged energy against readout error, same master seeds at every point."""
    if not epsilons:
        raise ValueError("need at least one epsilon")
    if seeds_per_point < 1:
        raise ValueError("seeds_per_point must be >= 1")
    backend = backend or Backend()
    out = []
    for eps in epsilons:
        b = backend.with_error(float(eps))
        energies = tuple(
            run_vqe(replace(cfg, seed=cfg.seed + j), b).converged_energy for j in range(seeds_per_point)
        )
        out.append(SweepPoint(float(eps), energies))
    return out
