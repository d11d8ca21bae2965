"""Photoluminescence readout emulation and Pauli-term reconstruction.

Populations and PL rates are indexed in physical order
(|0,+1>, |0,0>, |-1,+1>, |-1,0>). Diagonal Pauli terms come from four
population-permuting sequences; the two-qubit coherences come from pairs of
sequences that differ only in the sign of an rf pi/2 rotation.

Branch assignment under the qubit mapping in ``qcore``:

* ``minus`` (X1X2 - Y1Y2) reads the |0,+1>/|-1,0> coherence. The first
  pulse is pi13 (|0,+1> <-> |-1,+1>).
* ``plus`` (X1X2 + Y1Y2) reads the |-1,+1>/|0,0> coherence. The first
  pulse is pi24 (|0,0> <-> |-1,0>).

Both branches close with pi13, so either PL difference is proportional to
N1 - N4.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .ansatz import ELECTRON, NUCLEAR, GateSpec, circuit_unitary
from .dynamics import (
    NUCLEAR_E1,
    HardwareParams,
    NoiseModel,
    PulseSchedule,
    compile_gates,
    phase_correction,
    simulate_schedule,
)
from .qcore import PHYS_TO_COMP, PauliSum, expectation, pauli_matrix

DIAGONAL_KINDS = ("plain", "pi13", "pi34", "PI")
XXYY_KINDS = ("xxyy_plus_y+", "xxyy_plus_y-", "xxyy_minus_y+", "xxyy_minus_y-")
SEQUENCE_KINDS = DIAGONAL_KINDS + XXYY_KINDS
BRANCHES = ("plus", "minus")
SHOT_NOISE_MODES = ("poisson", "gaussian", "none")

DEFAULT_RATES = (1.00, 0.92, 0.78, 0.70)

_PI13 = GateSpec(ELECTRON, "y", math.pi, (NUCLEAR, 0))
_PI24 = GateSpec(ELECTRON, "y", math.pi, (NUCLEAR, 1))
_PI34 = GateSpec(NUCLEAR, "y", math.pi, (ELECTRON, 1))
_PI_HARD = GateSpec(ELECTRON, "y", math.pi)


def _rf_half(sign: int) -> GateSpec:
    return GateSpec(NUCLEAR, "y", sign * math.pi / 2, (ELECTRON, 1))


POST_ROTATIONS: dict[str, tuple[GateSpec, ...]] = {
    "plain": (),
    "pi13": (_PI13,),
    "pi34": (_PI34,),
    "PI": (_PI_HARD,),
    "xxyy_plus_y+": (_PI24, _rf_half(+1), _PI13),
    "xxyy_plus_y-": (_PI24, _rf_half(-1), _PI13),
    "xxyy_minus_y+": (_PI13, _rf_half(+1), _PI13),
    "xxyy_minus_y-": (_PI13, _rf_half(-1), _PI13),
}

# sign of Z on each qubit for physical states 1..4
_Q1_BIT = np.array([PHYS_TO_COMP[k] // 2 for k in range(4)])
_Q2_BIT = np.array([PHYS_TO_COMP[k] % 2 for k in range(4)])
SIGN_TABLE = np.array(
    [
        np.ones(4),
        (-1.0) ** _Q2_BIT,  # IZ
        (-1.0) ** _Q1_BIT,  # ZI
        (-1.0) ** (_Q1_BIT + _Q2_BIT),  # ZZ
    ]
)


class ReconstructionError(ValueError):
    pass


@dataclass(frozen=True)
class PLRates:
    """Mean PL counts per repetition for physical states 1..4."""

    n: tuple[float, float, float, float] = DEFAULT_RATES

    def __post_init__(self):
        n = tuple(float(x) for x in self.n)
        if len(n) != 4:
            raise ValueError("PL rates need exactly 4 values")
        if not all(x > 0 and math.isfinite(x) for x in n):
            raise ValueError(f"PL rates must be positive and finite, got {n}")
        object.__setattr__(self, "n", n)
        cond = np.linalg.cond(self.sequence_matrix())
        if not cond < 1e6:
            raise ValueError(f"PL sequence matrix is ill-conditioned (cond={cond:.3g})")

    @property
    def array(self) -> np.ndarray:
        return np.array(self.n)

    def sequence_matrix(self) -> np.ndarray:
        n1, n2, n3, n4 = self.n
        return np.array(
            [
                [n1, n2, n3, n4],
                [n3, n2, n1, n4],
                [n1, n2, n4, n3],
                [n3, n4, n1, n2],
            ]
        )

    def scaled(self, c: float) -> PLRates:
        return PLRates(tuple(c * x for x in self.n))


@dataclass(frozen=True)
class ReadoutErrorModel:
    epsilon: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.epsilon < 0.5:
            raise ValueError(f"readout epsilon must be in [0, 0.5), got {self.epsilon}")

    def confusion(self) -> np.ndarray:
        """Population map in computational order (per-qubit symmetric flips)."""
        e = self.epsilon
        c = np.array([[1 - e, e], [e, 1 - e]])
        return np.kron(c, c)


@dataclass(frozen=True)
class MeasurementRecord:
    kind: str
    expected_signal: float
    sampled_signal: float
    trials: int
    seed: str = ""


@dataclass(frozen=True)
class PauliEstimates:
    II: float
    IZ: float
    ZI: float
    ZZ: float
    XXplusYY: float = 0.0
    XXminusYY: float = 0.0

    @property
    def XX(self) -> float:
        return 0.5 * (self.XXplusYY + self.XXminusYY)

    @property
    def YY(self) -> float:
        return 0.5 * (self.XXplusYY - self.XXminusYY)

    def get(self, label: str) -> float:
        if label in ("II", "IZ", "ZI", "ZZ", "XX", "YY"):
            return float(getattr(self, label))
        raise KeyError(label)

    def as_dict(self) -> dict[str, float]:
        return {
            "II": self.II,
            "IZ": self.IZ,
            "ZI": self.ZI,
            "ZZ": self.ZZ,
            "XXplusYY": self.XXplusYY,
            "XXminusYY": self.XXminusYY,
            "XX": self.XX,
        }


@dataclass(frozen=True)
class XXYYCalibration:
    """Multipliers turning (PL(+y) - PL(-y)) / (N1 - N4) into XX +/- YY."""

    plus: float
    minus: float

    def factor(self, branch: str) -> float:
        return self.plus if branch == "plus" else self.minus


@dataclass(frozen=True)
class ReadoutSettings:
    """Everything besides the state that a measurement needs."""

    rates: PLRates = PLRates()
    error: ReadoutErrorModel = ReadoutErrorModel()
    trials: int = 1_000_000
    shot_noise: str = "poisson"
    normalization: str = "fixed"
    mode: str = "ideal"
    hw: Optional[HardwareParams] = None
    noise: Optional[NoiseModel] = None

    def __post_init__(self):
        if self.shot_noise not in SHOT_NOISE_MODES:
            raise ValueError(f"shot_noise must be one of {SHOT_NOISE_MODES}")
        if self.normalization not in ("fixed", "measured"):
            raise ValueError("normalization must be 'fixed' or 'measured'")
        if self.mode not in ("ideal", "pulse"):
            raise ValueError("post-rotation mode must be 'ideal' or 'pulse'")
        if self.mode == "pulse" and (self.hw is None or self.noise is None):
            raise ValueError("pulse-emulated post-rotations need hw and noise")
        if int(self.trials) < 1:
            raise ValueError("trials must be >= 1")


def _pulse_schedule(kind: str, hw: HardwareParams) -> PulseSchedule:
    sched = compile_gates(POST_ROTATIONS[kind], hw)
    if not kind.startswith("xxyy"):
        return sched
    # rf pi/2 axis follows the hyperfine phase picked up during the first pi pulse
    pulses = list(sched.pulses)
    offset, _ = phase_correction(pulses[0], hw)
    rf = pulses[1]
    assert rf.transition == NUCLEAR_E1
    pulses[1] = replace(rf, phase=rf.phase + offset)
    return PulseSchedule(tuple(pulses), sched.frame)


def sequence_populations(
    rho: np.ndarray,
    kind: str,
    mode: str = "ideal",
    hw: Optional[HardwareParams] = None,
    noise: Optional[NoiseModel] = None,
) -> np.ndarray:
    """Populations (physical order) after the post-rotation of ``kind``."""
    if kind not in POST_ROTATIONS:
        raise ValueError(f"unknown sequence kind {kind!r}")
    rho = np.asarray(rho, dtype=complex)
    if mode == "ideal":
        u = circuit_unitary(POST_ROTATIONS[kind])
        rho = u @ rho @ u.conj().T
    elif mode == "pulse":
        rho = simulate_schedule(rho, _pulse_schedule(kind, hw), hw, noise, mix_init=False)
    else:
        raise ValueError(f"unknown post-rotation mode {mode!r}")
    pops = np.clip(np.diag(rho).real, 0.0, None)
    return pops[PHYS_TO_COMP] / pops.sum()


def expected_pl(populations: Sequence[float], rates: PLRates, err: ReadoutErrorModel = ReadoutErrorModel()) -> float:
    p = np.asarray(populations, dtype=float)
    if abs(p.sum() - 1.0) > 1e-9:
        raise ValueError(f"populations sum to {p.sum()!r}, expected 1")
    if err.epsilon:
        p = (err.confusion() @ p[PHYS_TO_COMP])[PHYS_TO_COMP]
    return float(p @ rates.array)


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_signal(expected: float, trials: int, seed=None, mode: str = "poisson") -> float:
    """Mean PL per repetition over ``trials`` shot-noise-limited repetitions."""
    if expected < 0:
        raise ValueError("expected signal must be >= 0")
    if mode == "none" or expected == 0:
        return float(expected)
    rng = _as_rng(seed)
    if mode == "poisson":
        return float(rng.poisson(expected * trials)) / trials
    if mode == "gaussian":
        return max(0.0, expected + rng.normal(0.0, math.sqrt(expected / trials)))
    raise ValueError(f"unknown shot-noise mode {mode!r}")


def reconstruct_diagonal(signals: Sequence[float], rates: PLRates) -> tuple[float, float, float, float]:
    """(II, IZ, ZI, ZZ) from the plain/pi13/pi34/PI signals."""
    r = np.asarray(signals, dtype=float)
    try:
        pops = np.linalg.solve(rates.sequence_matrix(), r)
    except np.linalg.LinAlgError as exc:
        raise ReconstructionError("PL sequence matrix is singular") from exc
    return tuple(float(x) for x in SIGN_TABLE @ pops)


def _xxyy_raw(signal_plus_y: float, signal_minus_y: float, n1: float, n4: float) -> float:
    if n1 == n4:
        raise ReconstructionError("XX+-YY normalization needs N1 != N4")
    return (signal_plus_y - signal_minus_y) / (n1 - n4)


def calibrate_xxyy(
    rates: PLRates,
    mode: str = "ideal",
    hw: Optional[HardwareParams] = None,
    noise: Optional[NoiseModel] = None,
) -> XXYYCalibration:
    """Factors that make the noiseless branch estimators return exactly 2 on
    (|00> + |11>)/sqrt 2 (minus) and (|01> + |10>)/sqrt 2 (plus)."""
    n1, n4 = rates.n[0], rates.n[3]
    if n1 == n4:
        raise ReconstructionError("XX+-YY normalization needs N1 != N4")
    factors = {}
    for branch, (i, j) in (("minus", (0, 3)), ("plus", (1, 2))):
        psi = np.zeros(4, dtype=complex)
        psi[[i, j]] = 1 / math.sqrt(2)
        rho = np.outer(psi, psi.conj())
        pl = [
            expected_pl(sequence_populations(rho, f"xxyy_{branch}_y{s}", mode, hw, noise), rates)
            for s in "+-"
        ]
        raw = _xxyy_raw(pl[0], pl[1], n1, n4)
        if abs(raw) < 1e-12:
            raise ReconstructionError(f"{branch} branch has no sensitivity to its coherence")
        factors[branch] = 2.0 / raw
    return XXYYCalibration(plus=factors["plus"], minus=factors["minus"])


def seed_label(spawn_key: Sequence[int], master_seed: int) -> str:
    return ":".join(str(k) for k in (master_seed, *spawn_key))


def _stream(master_seed: int, spawn_key: Sequence[int]) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=tuple(spawn_key)))


def measure_sequence(
    rho: np.ndarray,
    kind: str,
    settings: ReadoutSettings,
    master_seed: int = 0,
    spawn_key: Sequence[int] = (),
) -> MeasurementRecord:
    pops = sequence_populations(rho, kind, settings.mode, settings.hw, settings.noise)
    expected = expected_pl(pops, settings.rates, settings.error)
    sampled = sample_signal(expected, settings.trials, _stream(master_seed, spawn_key), settings.shot_noise)
    return MeasurementRecord(kind, expected, sampled, int(settings.trials), seed_label(spawn_key, master_seed))


def normalization_records(
    settings: ReadoutSettings, master_seed: int = 0, spawn_prefix: Sequence[int] = ()
) -> list[MeasurementRecord]:
    """Shot-noise re-measurement of N1 and N4 (``normalization='measured'``)."""
    out = []
    for offset, (kind, value) in enumerate((("ref_n1", settings.rates.n[0]), ("ref_n4", settings.rates.n[3]))):
        key = (*spawn_prefix, len(SEQUENCE_KINDS) + offset)
        sampled = sample_signal(value, settings.trials, _stream(master_seed, key), settings.shot_noise)
        out.append(MeasurementRecord(kind, value, sampled, int(settings.trials), seed_label(key, master_seed)))
    return out


def estimates_from_signals(
    signals: Mapping[str, float],
    rates: PLRates,
    calibration: XXYYCalibration,
) -> PauliEstimates:
    diag = reconstruct_diagonal([signals[k] for k in DIAGONAL_KINDS], rates)
    n1 = signals.get("ref_n1", rates.n[0])
    n4 = signals.get("ref_n4", rates.n[3])
    xx = {
        b: calibration.factor(b) * _xxyy_raw(signals[f"xxyy_{b}_y+"], signals[f"xxyy_{b}_y-"], n1, n4)
        for b in BRANCHES
    }
    return PauliEstimates(*diag, XXplusYY=xx["plus"], XXminusYY=xx["minus"])


def measure_xxyy(
    rho: np.ndarray,
    branch: str,
    settings: ReadoutSettings,
    calibration: Optional[XXYYCalibration] = None,
    master_seed: int = 0,
    spawn_prefix: Sequence[int] = (),
) -> float:
    if branch not in BRANCHES:
        raise ValueError(f"branch must be 'plus' or 'minus', got {branch!r}")
    if calibration is None:
        calibration = calibrate_xxyy(settings.rates, settings.mode, settings.hw, settings.noise)
    signals = {}
    for s in "+-":
        kind = f"xxyy_{branch}_y{s}"
        rec = measure_sequence(rho, kind, settings, master_seed, (*spawn_prefix, SEQUENCE_KINDS.index(kind)))
        signals[kind] = rec.sampled_signal
    n1, n4 = settings.rates.n[0], settings.rates.n[3]
    if settings.normalization == "measured":
        ref = normalization_records(settings, master_seed, spawn_prefix)
        n1, n4 = ref[0].sampled_signal, ref[1].sampled_signal
    raw = _xxyy_raw(signals[f"xxyy_{branch}_y+"], signals[f"xxyy_{branch}_y-"], n1, n4)
    return calibration.factor(branch) * raw


def measure_all(
    rho: np.ndarray,
    settings: ReadoutSettings,
    calibration: XXYYCalibration,
    master_seed: int = 0,
    spawn_prefix: Sequence[int] = (),
    rhos: Optional[Mapping[str, np.ndarray]] = None,
) -> tuple[PauliEstimates, list[MeasurementRecord]]:
    """Run all eight sequences on ``rho``; each gets its own RNG stream.

    ``rhos`` optionally supplies a separately prepared state per sequence
    (used when detuning jitter makes every repetition block different).
    """
    records = []
    for idx, kind in enumerate(SEQUENCE_KINDS):
        state = rho if rhos is None else rhos[kind]
        records.append(measure_sequence(state, kind, settings, master_seed, (*spawn_prefix, idx)))
    if settings.normalization == "measured":
        records.extend(normalization_records(settings, master_seed, spawn_prefix))
    signals = {r.kind: r.sampled_signal for r in records}
    return estimates_from_signals(signals, settings.rates, calibration), records


def exact_estimates(rho: np.ndarray) -> PauliEstimates:
    """Oracle values straight from Tr(rho P)."""
    e = {lbl: expectation(rho, pauli_matrix(lbl)) for lbl in ("II", "IZ", "ZI", "ZZ", "XX", "YY")}
    return PauliEstimates(e["II"], e["IZ"], e["ZI"], e["ZZ"], e["XX"] + e["YY"], e["XX"] - e["YY"])


def estimate_energy(est: PauliEstimates, h: PauliSum) -> float:
    total = 0.0
    for t in h.terms:
        try:
            value = est.get(t.label)
        except KeyError:
            raise ValueError(f"Pauli term {t.label} is not covered by the measured set") from None
        total += t.coefficient * value
    return float(total)


def write_records_csv(path, records: Iterable[MeasurementRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind", "expected", "sampled", "trials", "seed"])
        for r in records:
            w.writerow([r.kind, format(r.expected_signal, ".17g"), format(r.sampled_signal, ".17g"), r.trials, r.seed])
