"""Pulse-level open-system dynamics of the electron/nitrogen register.

Units: time in microseconds, frequencies in MHz, angular rates in rad/us.

Rotating frame
--------------
The frame is resonant with the |-1,+1> <-> |-1,0> nuclear transition and
with the |0,+1> <-> |-1,+1> electron transition, so three of the four levels
sit at zero energy. The remaining level |0,0> (computational |10>) carries
the hyperfine offset ``2*pi*A``: while the electron is in m_s = 0 the
nuclear spin precesses at A in this frame.

Every drive is phase-locked to the transition it addresses. A drive on
|0,0> <-> |-1,0> is therefore modulated at the frame offset, with its time
origin at the start of the pulse. The hard electron drive is the sum of
both selective electron drives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .ansatz import ELECTRON, NUCLEAR, GateSpec, rotation
from .qcore import DIM, I2, ket, partial_trace, projector

ELECTRON_N0 = "electron-on-nuclear-0"
ELECTRON_N1 = "electron-on-nuclear-1"
ELECTRON_HARD = "electron-hard"
NUCLEAR_E1 = "nuclear-on-electron-1"
TRANSITIONS = (ELECTRON_N0, ELECTRON_N1, ELECTRON_HARD, NUCLEAR_E1)
ELECTRON_TRANSITIONS = (ELECTRON_N0, ELECTRON_N1, ELECTRON_HARD)

# (lower, upper) computational indices addressed by each selective drive
_PAIRS = {
    ELECTRON_N0: ((0, 1),),
    ELECTRON_N1: ((2, 3),),
    ELECTRON_HARD: ((0, 1), (2, 3)),
    NUCLEAR_E1: ((1, 3),),
}
_HF_LEVEL = 2  # |10> = |m_s=0, m_I=0>

DEFAULT_DT = 0.002
STEPS_PER_PULSE = 200

_P1 = np.diag([0.0, 1.0]).astype(complex)


class IntegrationError(RuntimeError):
    def __init__(self, message: str, step: int | None = None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step


@dataclass(frozen=True)
class HardwareParams:
    hyperfine_A: float = 2.16
    T2_star: float = 4.367
    rabi_mw: float = 5.0
    rabi_rf: float = 0.5
    nuclear_T2_star: float = math.inf

    def __post_init__(self):
        for name in ("hyperfine_A", "T2_star", "rabi_mw", "rabi_rf", "nuclear_T2_star"):
            v = getattr(self, name)
            if not (v > 0):
                raise ValueError(f"hardware.{name} must be > 0, got {v!r}")
        # infinite Rabi means instantaneous ideal pulses, selective by fiat
        if math.isfinite(self.rabi_rf) and not self.rabi_rf < self.hyperfine_A:
            raise ValueError(
                f"hardware.rabi_rf ({self.rabi_rf}) must be below hyperfine_A "
                f"({self.hyperfine_A}) for a selective rf drive"
            )


@dataclass(frozen=True)
class Pulse:
    """One drive segment. ``rabi = 0`` is free evolution for ``duration``;
    ``duration = 0`` with a nonzero angle is an instantaneous rotation."""

    transition: str
    phase: float
    duration: float
    rabi: float
    angle: float = 0.0

    def __post_init__(self):
        if self.transition not in TRANSITIONS:
            raise ValueError(f"unknown transition {self.transition!r}")
        if self.duration < 0:
            raise ValueError("pulse duration must be >= 0")
        if self.rabi < 0:
            raise ValueError("rabi frequency must be >= 0")
        if math.isfinite(self.rabi) and self.duration > 0:
            object.__setattr__(self, "angle", 2 * math.pi * self.rabi * self.duration)

    @property
    def is_electron(self) -> bool:
        return self.transition in ELECTRON_TRANSITIONS


@dataclass(frozen=True)
class PulseSchedule:
    pulses: tuple[Pulse, ...]
    frame: str = "resonant with |-1,+1> <-> |-1,0>"

    @property
    def duration(self) -> float:
        return float(sum(p.duration for p in self.pulses))


@dataclass(frozen=True)
class CollapseOperator:
    matrix: np.ndarray
    rate: float

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError("collapse rate must be >= 0")


@dataclass(frozen=True)
class NoiseModel:
    collapses: tuple[CollapseOperator, ...] = ()
    p_init: float = 0.0
    detuning_std_khz: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.p_init < 1.0:
            raise ValueError(f"noise.p_init must be in [0, 1), got {self.p_init}")
        if self.detuning_std_khz < 0:
            raise ValueError("noise.detuning_std_khz must be >= 0")


@dataclass(frozen=True)
class HarmonicHamiltonian:
    """H(t) = static + exp(-i w t) coupling + h.c."""

    static: np.ndarray
    coupling: np.ndarray = field(default_factory=lambda: np.zeros((DIM, DIM), complex))
    omega: float = 0.0

    def __call__(self, t: float) -> np.ndarray:
        b = np.exp(-1j * self.omega * t) * self.coupling
        return self.static + b + b.conj().T


def dephasing_rate(T2_star: float) -> float:
    """Rate of a sqrt(rate)*|1><1| collapse giving coherence decay exp(-t/T2*)."""
    if not T2_star > 0:
        raise ValueError(f"T2* must be > 0, got {T2_star!r}")
    return 2.0 / T2_star


def build_collapse_set(hw: HardwareParams) -> list[CollapseOperator]:
    out = []
    rate_e = dephasing_rate(hw.T2_star)
    if rate_e > 0:
        out.append(CollapseOperator(np.kron(I2, _P1), rate_e))
    rate_n = dephasing_rate(hw.nuclear_T2_star)
    if rate_n > 0:
        out.append(CollapseOperator(np.kron(_P1, I2), rate_n))
    return out


def default_noise(hw: HardwareParams, p_init: float = 0.0, detuning_std_khz: float = 0.0) -> NoiseModel:
    return NoiseModel(tuple(build_collapse_set(hw)), p_init, detuning_std_khz)


def _gate_transition(g: GateSpec) -> str:
    if g.target == ELECTRON:
        if g.condition is None:
            return ELECTRON_HARD
        return ELECTRON_N0 if g.condition[1] == 0 else ELECTRON_N1
    if g.condition == (ELECTRON, 1):
        return NUCLEAR_E1
    raise ValueError(f"gate {g} has no drive in the m_s = -1 rf frame")


def compile_gates(gates: Sequence[GateSpec], hw: HardwareParams) -> PulseSchedule:
    pulses = []
    for g in gates:
        if not math.isfinite(g.angle):
            raise ValueError("gate angle must be finite")
        transition = _gate_transition(g)
        rabi = hw.rabi_rf if transition == NUCLEAR_E1 else hw.rabi_mw
        phase = 0.0 if g.axis == "x" else math.pi / 2
        if g.angle < 0:
            phase += math.pi
        angle = abs(g.angle)
        duration = angle / (2 * math.pi * rabi) if math.isfinite(rabi) else 0.0
        pulses.append(Pulse(transition, phase, duration, rabi, angle))
    return PulseSchedule(tuple(pulses))


# ``compile`` shadows a builtin, so the module exposes both names
compile = compile_gates  # noqa: A001


def frame_hamiltonian(hyperfine_A: float) -> np.ndarray:
    h = np.zeros((DIM, DIM), dtype=complex)
    h[_HF_LEVEL, _HF_LEVEL] = 2 * math.pi * hyperfine_A
    return h


def pulse_hamiltonian(p: Pulse, hyperfine_A: float, detuning_mhz: float = 0.0) -> HarmonicHamiltonian:
    static = frame_hamiltonian(hyperfine_A)
    if detuning_mhz:
        static = static + 2 * math.pi * detuning_mhz * np.kron(I2, _P1)
    coupling = np.zeros((DIM, DIM), dtype=complex)
    omega = 0.0
    half = math.pi * p.rabi if math.isfinite(p.rabi) else 0.0
    for a, b in _PAIRS[p.transition]:
        elem = half * np.exp(-1j * p.phase)
        if a == _HF_LEVEL:
            coupling[a, b] = elem
            omega = 2 * math.pi * hyperfine_A
        else:
            static[a, b] += elem
            static[b, a] += np.conj(elem)
    return HarmonicHamiltonian(static, coupling, omega)


def pulse_unitary_ideal(p: Pulse) -> np.ndarray:
    """Rotation a pulse performs with the hyperfine offset switched off."""
    u = np.eye(DIM, dtype=complex)
    r = rotation("x", p.angle) if p.angle else I2
    # rotate the x rotation to the pulse axis: R_phi = Z(phi) R_x Z(-phi)
    z = np.diag([1.0, np.exp(1j * p.phase)])
    r = z @ r @ z.conj()
    for a, b in _PAIRS[p.transition]:
        idx = [a, b]
        u[np.ix_(idx, idx)] = r
    return u


def _superop_commutator(h: np.ndarray) -> np.ndarray:
    eye = np.eye(h.shape[0])
    return -1j * (np.kron(h, eye) - np.kron(eye, h.T))


def _superop_dissipator(collapses: Sequence[CollapseOperator]) -> np.ndarray:
    n = DIM
    eye = np.eye(n)
    d = np.zeros((n * n, n * n), dtype=complex)
    for c in collapses:
        if c.rate == 0:
            continue
        m = np.sqrt(c.rate) * np.asarray(c.matrix, dtype=complex)
        mdm = m.conj().T @ m
        d += np.kron(m, m.conj()) - 0.5 * np.kron(mdm, eye) - 0.5 * np.kron(eye, mdm.T)
    return d


def _check_and_fix(y: np.ndarray, step: int, tol: float = 1e-6) -> np.ndarray:
    rho = y.reshape(DIM, DIM)
    if not np.all(np.isfinite(rho)):
        raise IntegrationError("non-finite density matrix", step)
    tr = np.trace(rho).real
    herm = np.max(np.abs(rho - rho.conj().T))
    if abs(tr - 1.0) > tol or herm > tol:
        raise IntegrationError(f"invariant violation: trace={tr!r}, hermiticity={herm:.3g}", step)
    # an unstable step inflates the state long before it overflows
    pur = float(np.sum(np.abs(rho) ** 2))
    if pur > 1.0 + tol:
        raise IntegrationError(f"purity {pur:.6g} exceeds 1; step too large", step)
    rho = 0.5 * (rho + rho.conj().T)
    return (rho / tr).reshape(-1)


def lindblad_evolve(
    rho: np.ndarray,
    h_of_t: Union[np.ndarray, HarmonicHamiltonian, Callable[[float], np.ndarray]],
    collapses: Sequence[CollapseOperator],
    t_end: float,
    dt: float = DEFAULT_DT,
) -> np.ndarray:
    """Fixed-step RK4 integration of the Lindblad master equation.

    The state is re-Hermitized and trace-renormalized after every step;
    ``IntegrationError`` carries the step index of any invariant breach.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    if t_end < 0:
        raise ValueError("t_end must be >= 0")
    y = np.array(rho, dtype=complex).reshape(-1)
    if t_end == 0:
        return y.reshape(DIM, DIM)
    n_steps = max(1, math.ceil(t_end / dt - 1e-9))
    h = t_end / n_steps
    diss = _superop_dissipator(collapses)

    if isinstance(h_of_t, np.ndarray) or (
        isinstance(h_of_t, HarmonicHamiltonian) and not np.any(h_of_t.coupling)
    ):
        static = h_of_t if isinstance(h_of_t, np.ndarray) else h_of_t.static
        hl = h * (_superop_commutator(static) + diss)
        # RK4 on a constant linear generator is exactly this polynomial
        hl2 = hl @ hl
        prop = np.eye(DIM * DIM) + hl + hl2 / 2 + hl2 @ hl / 6 + hl2 @ hl2 / 24
        for k in range(n_steps):
            y = _check_and_fix(prop @ y, k)
        return y.reshape(DIM, DIM)

    if isinstance(h_of_t, HarmonicHamiltonian):
        l0 = _superop_commutator(h_of_t.static) + diss
        lb = _superop_commutator(h_of_t.coupling)
        lbd = _superop_commutator(h_of_t.coupling.conj().T)
        w = h_of_t.omega

        def deriv(t, v):
            ph = np.exp(-1j * w * t)
            return l0 @ v + ph * (lb @ v) + np.conj(ph) * (lbd @ v)
    else:
        def deriv(t, v):
            return (_superop_commutator(np.asarray(h_of_t(t))) + diss) @ v

    t = 0.0
    for k in range(n_steps):
        k1 = deriv(t, y)
        k2 = deriv(t + h / 2, y + (h / 2) * k1)
        k3 = deriv(t + h / 2, y + (h / 2) * k2)
        k4 = deriv(t + h, y + h * k3)
        y = _check_and_fix(y + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4), k)
        t = (k + 1) * h
    return y.reshape(DIM, DIM)


def initial_state(p_init: float = 0.0) -> np.ndarray:
    return mix_initialization(projector(ket(0)), p_init)


def mix_initialization(rho: np.ndarray, p_init: float) -> np.ndarray:
    """(1 - p) rho + p * (uniform mixture over the complement of rho)."""
    if not p_init:
        return np.array(rho, dtype=complex)
    return (1 - p_init) * rho + (p_init / (DIM - 1)) * (np.eye(DIM) - rho)


def pulse_dt(p: Pulse, dt: Optional[float] = None) -> float:
    if dt is not None:
        return dt
    return min(DEFAULT_DT, p.duration / STEPS_PER_PULSE)


def simulate_pulse(
    rho: np.ndarray,
    p: Pulse,
    hyperfine_A: float,
    collapses: Sequence[CollapseOperator] = (),
    detuning_mhz: float = 0.0,
    dt: Optional[float] = None,
) -> np.ndarray:
    if p.duration == 0:
        if p.angle == 0:
            return rho
        u = pulse_unitary_ideal(p)
        return u @ rho @ u.conj().T
    h = pulse_hamiltonian(p, hyperfine_A, detuning_mhz)
    return lindblad_evolve(rho, h, collapses, p.duration, pulse_dt(p, dt))


def simulate_schedule(
    rho0: np.ndarray,
    s: PulseSchedule,
    hw: HardwareParams,
    noise: NoiseModel,
    rng: Optional[np.random.Generator] = None,
    dt: Optional[float] = None,
    mix_init: bool = True,
) -> np.ndarray:
    """Evolve ``rho0`` through ``s`` pulse by pulse with ``noise`` active.

    One detuning offset is drawn from ``rng`` per call when jitter is on.
    """
    rho = mix_initialization(rho0, noise.p_init) if mix_init else np.array(rho0, dtype=complex)
    detuning = 0.0
    if noise.detuning_std_khz > 0:
        if rng is None:
            raise ValueError("detuning jitter needs an rng")
        detuning = rng.normal(0.0, noise.detuning_std_khz * 1e-3)
    for p in s.pulses:
        rho = simulate_pulse(rho, p, hw.hyperfine_A, noise.collapses, detuning, dt)
    return rho


def _nuclear_coherence(rho: np.ndarray) -> complex:
    return complex(partial_trace(rho, 1)[0, 1])


def phase_correction(
    pulses: Pulse | Sequence[Pulse],
    hw: HardwareParams,
    electron_state: int = 1,
    dt: Optional[float] = None,
) -> tuple[float, float]:
    """Hyperfine phase picked up by the nuclear coherence during electron pulses.

    The register starts with the electron in ``electron_state`` and the
    nucleus in (|0> + |1>)/sqrt 2. The closed-system evolution is run with
    and without the hyperfine offset; the ratio of the final nuclear
    coherences gives ``(phase_offset, readout_scale)``. When the pulse
    leaves no nuclear coherence in the reference run there is nothing to
    correct and ``(0.0, 1.0)`` is returned.
    """
    seq = [pulses] if isinstance(pulses, Pulse) else list(pulses)
    for p in seq:
        if not p.is_electron:
            raise ValueError(f"phase correction needs electron pulses, got {p.transition}")
    if electron_state not in (0, 1):
        raise ValueError("electron_state must be 0 or 1")
    electron = np.zeros(2)
    electron[electron_state] = 1.0
    rho0 = projector(np.kron(np.array([1.0, 1.0]) / np.sqrt(2), electron))
    rho_a, rho_ref = rho0, rho0
    for p in seq:
        rho_a = simulate_pulse(rho_a, p, hw.hyperfine_A, (), 0.0, dt)
        rho_ref = simulate_pulse(rho_ref, p, 0.0, (), 0.0, dt)
    ref = _nuclear_coherence(rho_ref)
    if abs(ref) < 1e-9:
        return 0.0, 1.0
    r = _nuclear_coherence(rho_a) / ref
    return float(np.angle(r)), float(min(1.0, abs(r)))
