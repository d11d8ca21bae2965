from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm
from scipy.optimize import minimize

from nvvqe.ansatz import (
    ELECTRON,
    NUCLEAR,
    SHIFT,
    AnsatzParams,
    GateSpec,
    circuit_unitary,
    gate_unitary,
    ground_state_angles,
    layer_gates,
    neighbor_params,
    prepare_trial_state,
    rotation,
)
from nvvqe.qcore import SX, SY, entanglement_entropy, expectation, ket, closed_form_ground_state, default_hamiltonian

R5 = math.sqrt(5)
angles = st.floats(-4 * math.pi, 4 * math.pi, allow_nan=False)
thetas = st.tuples(angles, angles, angles, angles).map(AnsatzParams)

# energy at the default starting angles, from an independent expm-based circuit build
THETA0_ENERGY = 0.6855769629258766


def _expm_state(theta):
    """Oracle: same circuit from generator exponentials, no shared helpers."""
    t1, t2, t3, t4 = theta
    p1 = np.diag([0.0, 1.0])
    e_y = np.kron(np.eye(2), SY)
    e_x = np.kron(np.eye(2), SX)
    n_y = np.kron(SY, p1)
    n_x = np.kron(SX, p1)
    u = expm(-0.5j * t2 * n_x) @ expm(-0.5j * t1 * n_y) @ expm(-0.5j * t4 * e_x) @ expm(-0.5j * t3 * e_y)
    return u @ ket(0)


def test_params_validation():
    with pytest.raises(ValueError):
        AnsatzParams((0, 0, 0))
    with pytest.raises(ValueError):
        AnsatzParams((0, 0, 0, math.nan))
    with pytest.raises(ValueError):
        AnsatzParams((0, 0, 0, 0), layers=0)
    p = AnsatzParams((5 * math.pi, 0, 0, -1))
    assert p.theta[0] == 5 * math.pi
    assert p.wrapped()[0] == pytest.approx(math.pi)


def test_layer_gates_examples():
    g = layer_gates(AnsatzParams((0, 0, 0, 0)))
    assert len(g) == 4 and all(x.angle == 0 for x in g)
    g = layer_gates(AnsatzParams((math.pi, 0, 0, 0)))
    assert g[2] == GateSpec(NUCLEAR, "y", math.pi, (ELECTRON, 1))
    g2 = layer_gates(AnsatzParams((1, 2, 3, 4), layers=2))
    assert len(g2) == 8 and g2[:4] == g2[4:]
    assert all(x.condition is None for x in layer_gates(AnsatzParams((1, 2, 3, 4)), conditional=False))


def test_gatespec_validation():
    with pytest.raises(ValueError):
        GateSpec(3, "x", 0)
    with pytest.raises(ValueError):
        GateSpec(NUCLEAR, "z", 0)
    with pytest.raises(ValueError):
        GateSpec(NUCLEAR, "x", 0, (NUCLEAR, 1))


def test_gate_unitary_examples():
    u = gate_unitary(GateSpec(ELECTRON, "y", math.pi))
    assert abs(abs((u @ ket(0))[1]) - 1) < 1e-12
    c = gate_unitary(GateSpec(NUCLEAR, "y", math.pi, (ELECTRON, 1)))
    assert abs(abs((c @ ket(1))[3]) - 1) < 1e-12
    assert np.allclose(c @ ket(0), ket(0))
    assert np.allclose(gate_unitary(GateSpec(NUCLEAR, "x", 0.0, (ELECTRON, 0))), np.eye(4))


def test_rotation_matches_expm():
    for axis, s in (("x", SX), ("y", SY)):
        assert np.allclose(rotation(axis, 0.731), expm(-0.5j * 0.731 * s))


def test_trial_state_examples():
    assert np.allclose(prepare_trial_state(AnsatzParams((0, 0, 0, 0))), ket(0))
    psi = prepare_trial_state(ground_state_angles())
    assert abs(np.vdot(psi, closed_form_ground_state())) ** 2 == pytest.approx(1.0, abs=1e-12)
    t3 = ground_state_angles().theta[2]
    assert math.cos(t3 / 2) == pytest.approx(-math.sqrt(50 - 20 * R5) / 10)
    theta0 = AnsatzParams(tuple(2 * math.pi * x for x in (0.1, 0.2, 0.1, 0.2)))
    e = expectation(prepare_trial_state(theta0), default_hamiltonian())
    assert e == pytest.approx(THETA0_ENERGY, abs=1e-12)
    assert expectation(_expm_state(theta0.theta), default_hamiltonian()) == pytest.approx(e, abs=1e-12)


def test_neighbor_params():
    z = AnsatzParams((0, 0, 0, 0))
    assert neighbor_params(z, 1, +1).theta == (SHIFT, 0, 0, 0)
    assert neighbor_params(z, 4, -1).theta == (0, 0, 0, -SHIFT)
    with pytest.raises(IndexError):
        neighbor_params(z, 5, +1)
    with pytest.raises(IndexError):
        neighbor_params(z, 0, +1)


@given(thetas)
def test_trial_state_matches_expm_oracle(p):
    psi = prepare_trial_state(p)
    assert abs(np.linalg.norm(psi) - 1) < 1e-12
    assert np.allclose(psi, _expm_state(p.theta), atol=1e-12)


@given(thetas, st.integers(1, 4), st.sampled_from([1, -1]))
def test_neighbor_involution(p, i, s):
    back = neighbor_params(neighbor_params(p, i, s), i, -s)
    assert np.allclose(back.theta, p.theta, atol=1e-12)


@given(st.sampled_from([NUCLEAR, ELECTRON]), st.sampled_from("xy"), angles,
       st.sampled_from([None, 0, 1]))
def test_gate_inverse(target, axis, angle, cstate):
    cond = None if cstate is None else (3 - target, cstate)
    g = GateSpec(target, axis, angle, cond)
    inv = GateSpec(target, axis, -angle, cond)
    assert np.allclose(gate_unitary(g) @ gate_unitary(inv), np.eye(4), atol=1e-12)


@given(thetas)
def test_unconditional_variant_is_product(p):
    psi = prepare_trial_state(p, conditional=False)
    assert entanglement_entropy(psi) < 1e-10


def test_normalized_1000_random():
    rng = np.random.default_rng(5)
    for th in rng.uniform(-4 * math.pi, 4 * math.pi, size=(1000, 4)):
        psi = prepare_trial_state(AnsatzParams(tuple(th)))
        assert abs(np.linalg.norm(psi) - 1) < 1e-12


def test_ansatz_reaches_ground_energy():
    h = default_hamiltonian()
    f = lambda th: expectation(prepare_trial_state(AnsatzParams(tuple(th))), h)
    grid = np.linspace(0, 2 * math.pi, 7, endpoint=False)
    starts = sorted(
        (f((a, b, c, d)), (a, b, c, d)) for a in grid for b in grid for c in grid for d in grid
    )[:5]
    best = min(minimize(f, x0, method="BFGS", options={"gtol": 1e-10}).fun for _, x0 in starts)
    assert best < -R5 + 1e-6


def test_circuit_unitary_is_unitary():
    u = circuit_unitary(layer_gates(AnsatzParams((0.3, 1.1, -2.0, 0.4), layers=2)))
    assert np.allclose(u @ u.conj().T, np.eye(4))
