"""Hardware-efficient trial-state preparation at the gate level."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .qcore import DIM, I2, SX, SY, ket

NUCLEAR = 1
ELECTRON = 2
N_PARAMS = 4
SHIFT = np.pi / 2


@dataclass(frozen=True)
class AnsatzParams:
    """Rotation angles (nuclear-y, nuclear-x, electron-y, electron-x).

    Angles are stored unwrapped; ``wrapped`` is for reports only.
    """

    theta: tuple[float, float, float, float]
    layers: int = 1

    def __post_init__(self):
        theta = tuple(float(t) for t in self.theta)
        if len(theta) != N_PARAMS:
            raise ValueError(f"expected {N_PARAMS} angles, got {len(theta)}")
        if not all(np.isfinite(theta)):
            raise ValueError("angles must be finite")
        if int(self.layers) < 1:
            raise ValueError(f"layers must be >= 1, got {self.layers}")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "layers", int(self.layers))

    @property
    def array(self) -> np.ndarray:
        return np.array(self.theta)

    def with_theta(self, theta: Sequence[float]) -> AnsatzParams:
        return replace(self, theta=tuple(float(t) for t in theta))

    def wrapped(self) -> tuple[float, ...]:
        return tuple(float(np.mod(t, 4 * np.pi)) for t in self.theta)


@dataclass(frozen=True)
class GateSpec:
    """A single-qubit x/y rotation, optionally conditioned on the other qubit.

    ``condition`` is ``(control_qubit, required_state)``.
    """

    target: int
    axis: str
    angle: float
    condition: Optional[tuple[int, int]] = None

    def __post_init__(self):
        if self.target not in (NUCLEAR, ELECTRON):
            raise ValueError(f"target must be 1 or 2, got {self.target}")
        if self.axis not in ("x", "y"):
            raise ValueError(f"axis must be 'x' or 'y', got {self.axis!r}")
        if self.condition is not None:
            ctrl, state = self.condition
            if ctrl == self.target or ctrl not in (NUCLEAR, ELECTRON):
                raise ValueError("condition must name the other qubit")
            if state not in (0, 1):
                raise ValueError("condition state must be 0 or 1")


def rotation(axis: str, angle: float) -> np.ndarray:
    """exp(-i angle sigma_axis / 2)."""
    sigma = SX if axis == "x" else SY
    return np.cos(angle / 2) * I2 - 1j * np.sin(angle / 2) * sigma


def _embed(op_target: np.ndarray, op_other: np.ndarray, target: int) -> np.ndarray:
    return np.kron(op_target, op_other) if target == NUCLEAR else np.kron(op_other, op_target)


def gate_unitary(g: GateSpec) -> np.ndarray:
    r = rotation(g.axis, g.angle)
    if g.condition is None:
        return _embed(r, I2, g.target)
    _, state = g.condition
    on = np.zeros((2, 2), dtype=complex)
    on[state, state] = 1.0
    off = I2 - on
    return _embed(r, on, g.target) + _embed(I2, off, g.target)


def layer_gates(params: AnsatzParams, conditional: bool = True) -> list[GateSpec]:
    """Gate list: electron Ry, Rx, then nuclear Ry, Rx gated on electron |1>.

    ``conditional=False`` strips the conditions (product-state variant).
    """
    t1, t2, t3, t4 = params.theta
    cond = (ELECTRON, 1) if conditional else None
    one_layer = [
        GateSpec(ELECTRON, "y", t3),
        GateSpec(ELECTRON, "x", t4),
        GateSpec(NUCLEAR, "y", t1, cond),
        GateSpec(NUCLEAR, "x", t2, cond),
    ]
    return one_layer * params.layers


def circuit_unitary(gates: Sequence[GateSpec]) -> np.ndarray:
    u = np.eye(DIM, dtype=complex)
    for g in gates:
        u = gate_unitary(g) @ u
    return u


def prepare_trial_state(params: AnsatzParams, conditional: bool = True) -> np.ndarray:
    psi = circuit_unitary(layer_gates(params, conditional)) @ ket(0)
    return psi / np.linalg.norm(psi)


def neighbor_params(params: AnsatzParams, i: int, sign: int, shift: float = SHIFT) -> AnsatzParams:
    """Copy of ``params`` with angle ``i`` (1-based) moved by ``sign * shift``."""
    if not 1 <= i <= N_PARAMS:
        raise IndexError(f"parameter index must be in 1..{N_PARAMS}, got {i}")
    if sign not in (+1, -1):
        raise ValueError("sign must be +1 or -1")
    theta = list(params.theta)
    theta[i - 1] += sign * shift
    return params.with_theta(theta)


def ground_state_angles() -> AnsatzParams:
    """Angles that reproduce the exact ground state of X1X2 + Z1 + Z2."""
    r5 = np.sqrt(5.0)
    c = -np.sqrt(50 - 20 * r5) / 10
    s = np.sqrt(50 + 20 * r5) / 10
    return AnsatzParams((np.pi, 0.0, 2 * np.arctan2(s, c), 0.0))
