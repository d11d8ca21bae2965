from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nvvqe import readout as ro
from nvvqe.dynamics import HardwareParams, default_noise
from nvvqe.qcore import (
    PauliSum,
    expectation,
    ket,
    closed_form_ground_state,
    default_hamiltonian,
    pauli_matrix,
    physical_to_computational,
    projector,
)

R5 = math.sqrt(5)
RATES = ro.PLRates((4.0, 3.0, 2.0, 1.0))
NOISELESS = ro.ReadoutSettings(rates=RATES, shot_noise="none")
PHYS = [physical_to_computational(ms, mi) for ms, mi in ((0, 1), (0, 0), (-1, 1), (-1, 0))]


def random_density(rng):
    g = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def phys_projector(k):
    """|k> for physical label k = 1..4."""
    return projector(ket(PHYS[k - 1]))


def diag_signals(pops_phys, rates=RATES):
    rho = np.diag(np.asarray(pops_phys, dtype=complex)[np.argsort(PHYS)])
    return [ro.expected_pl(ro.sequence_populations(rho, k), rates) for k in ro.DIAGONAL_KINDS]


def test_sequence_populations_examples():
    rho = phys_projector(1)
    assert np.allclose(ro.sequence_populations(rho, "plain"), [1, 0, 0, 0])
    assert np.allclose(ro.sequence_populations(rho, "pi13"), [0, 0, 1, 0])
    with pytest.raises(ValueError):
        ro.sequence_populations(rho, "nope")


def test_sequence_matrix_matches_post_rotations():
    # each row of the rate matrix is what the post-rotation does to the basis states
    m = np.array([[ro.expected_pl(ro.sequence_populations(phys_projector(j), k), RATES)
                   for j in range(1, 5)] for k in ro.DIAGONAL_KINDS])
    assert np.allclose(m, RATES.sequence_matrix())


def test_expected_pl_examples():
    assert ro.expected_pl([1, 0, 0, 0], RATES) == 4.0
    assert ro.expected_pl([0.25] * 4, RATES) == pytest.approx(2.5)
    half = ro.ReadoutErrorModel(0.4999999999)
    a = ro.expected_pl([1, 0, 0, 0], RATES, half)
    b = ro.expected_pl([0, 0, 0, 1], RATES, half)
    assert a == pytest.approx(b, abs=1e-8)
    with pytest.raises(ValueError):
        ro.expected_pl([0.5, 0.0, 0.0, 0.0], RATES)


def test_readout_error_bounds():
    with pytest.raises(ValueError, match=r"\[0, 0.5\)"):
        ro.ReadoutErrorModel(0.6)
    with pytest.raises(ValueError):
        ro.ReadoutErrorModel(-0.1)


def test_epsilon_zero_is_bitwise_identity():
    rng = np.random.default_rng(3)
    for _ in range(50):
        p = rng.dirichlet(np.ones(4))
        assert ro.expected_pl(p, RATES, ro.ReadoutErrorModel(0.0)) == float(p @ RATES.array)


def test_rates_validation():
    with pytest.raises(ValueError):
        ro.PLRates((1, 1, 1))
    with pytest.raises(ValueError):
        ro.PLRates((1, 0, 1, 1))
    with pytest.raises(ValueError, match="ill-conditioned"):
        ro.PLRates((1, 1, 1, 1))


def test_sample_signal():
    assert ro.sample_signal(0.0, 1000, 1) == 0.0
    assert ro.sample_signal(1.3, 1000, 1, "none") == 1.3
    draws = [ro.sample_signal(1.0, 1_000_000, s) for s in range(400)]
    assert np.std(draws, ddof=1) == pytest.approx(1e-3, rel=0.15)
    big = [ro.sample_signal(0.8, 10**8, s) for s in range(20)]
    assert abs(np.mean(big) - 0.8) < 3 * math.sqrt(0.8 / 1e8) / math.sqrt(20) * 2
    g = [ro.sample_signal(1.0, 1_000_000, s, "gaussian") for s in range(400)]
    assert np.std(g, ddof=1) == pytest.approx(1e-3, rel=0.15)
    with pytest.raises(ValueError):
        ro.sample_signal(1.0, 10, 0, "white")


def test_reconstruct_diagonal_examples():
    assert np.allclose(ro.reconstruct_diagonal(diag_signals([1, 0, 0, 0]), RATES), (1, 1, 1, 1))
    assert np.allclose(ro.reconstruct_diagonal(diag_signals([0, 0, 0, 1]), RATES), (1, -1, -1, 1))
    assert np.allclose(ro.reconstruct_diagonal(diag_signals([0.25] * 4), RATES), (1, 0, 0, 0), atol=1e-14)


def test_sign_table_follows_mapping():
    # |0,0> is nuclear |1>, electron |0>: ZI = -1, IZ = +1
    assert np.allclose(ro.reconstruct_diagonal(diag_signals([0, 1, 0, 0]), RATES), (1, 1, -1, -1))
    assert np.allclose(ro.reconstruct_diagonal(diag_signals([0, 0, 1, 0]), RATES), (1, -1, 1, -1))


@pytest.mark.parametrize(
    "psi, plus, minus",
    [
        ((ket(0) + ket(3)) / math.sqrt(2), 0.0, 2.0),
        ((ket(1) + ket(2)) / math.sqrt(2), 2.0, 0.0),
    ],
)
def test_measure_xxyy_bell_states(psi, plus, minus):
    rho = projector(psi)
    assert ro.measure_xxyy(rho, "plus", NOISELESS) == pytest.approx(plus, abs=1e-12)
    assert ro.measure_xxyy(rho, "minus", NOISELESS) == pytest.approx(minus, abs=1e-12)


def test_measure_xxyy_diagonal_is_zero():
    rho = np.diag([0.1, 0.2, 0.3, 0.4]).astype(complex)
    for b in ro.BRANCHES:
        assert ro.measure_xxyy(rho, b, NOISELESS) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        ro.measure_xxyy(rho, "both", NOISELESS)


def test_xxyy_minus_encodes_ground_coherence():
    g = closed_form_ground_state()
    a, b = g[0], g[3]
    got = ro.measure_xxyy(projector(g), "minus", NOISELESS)
    assert got == pytest.approx(4 * (np.conj(a) * b).real, abs=1e-12)
    pl = [ro.expected_pl(ro.sequence_populations(projector(g), f"xxyy_minus_y{s}"), RATES) for s in "+-"]
    assert pl[0] - pl[1] == pytest.approx(-0.5 * (RATES.n[0] - RATES.n[3]) * 4 * (np.conj(a) * b).real)


def test_calibration_contract():
    cal = ro.calibrate_xxyy(RATES)
    assert cal.plus == pytest.approx(-2.0) and cal.minus == pytest.approx(-2.0)
    scaled = ro.calibrate_xxyy(RATES.scaled(3.7))
    assert scaled.plus == pytest.approx(cal.plus) and scaled.minus == pytest.approx(cal.minus)
    with pytest.raises(ro.ReconstructionError):
        ro.calibrate_xxyy(ro.PLRates((1.0, 0.8, 0.5, 1.0)))


def test_calibrated_estimator_scale_invariant():
    rho = random_density(np.random.default_rng(8))
    a = ro.measure_xxyy(rho, "minus", NOISELESS)
    b = ro.measure_xxyy(rho, "minus", ro.ReadoutSettings(rates=RATES.scaled(2.5), shot_noise="none"))
    assert a == pytest.approx(b, abs=1e-12)


def test_pulse_mode_calibration_unbiased():
    hw = HardwareParams()
    noise = default_noise(hw)
    s = ro.ReadoutSettings(rates=ro.PLRates(), shot_noise="none", mode="pulse", hw=hw, noise=noise)
    for psi, branch in (((ket(0) + ket(3)) / math.sqrt(2), "minus"), ((ket(1) + ket(2)) / math.sqrt(2), "plus")):
        assert ro.measure_xxyy(projector(psi), branch, s) == pytest.approx(2.0, abs=1e-9)


def test_estimate_energy_examples():
    h = default_hamiltonian()
    assert ro.estimate_energy(ro.exact_estimates(projector(closed_form_ground_state())), h) == pytest.approx(-R5, abs=1e-12)
    assert ro.estimate_energy(ro.exact_estimates(projector(ket(0))), h) == pytest.approx(2.0)
    only_ii = ro.PauliEstimates(1.0, 0.0, 0.0, 0.0)
    assert ro.estimate_energy(only_ii, PauliSum.from_pairs([("II", 0.7), ("ZZ", 3)])) == pytest.approx(0.7)
    with pytest.raises(ValueError, match="XY"):
        ro.estimate_energy(only_ii, PauliSum.from_pairs([("XY", 1)]))


def test_round_trip_1000_random_states():
    rng = np.random.default_rng(21)
    cal = ro.calibrate_xxyy(RATES)
    worst = 0.0
    for _ in range(1000):
        rho = random_density(rng)
        est, _ = ro.measure_all(rho, NOISELESS, cal)
        ex = ro.exact_estimates(rho)
        for lbl in ("II", "IZ", "ZI", "ZZ", "XXplusYY", "XXminusYY"):
            worst = max(worst, abs(getattr(est, lbl) - getattr(ex, lbl)))
    assert worst < 1e-10


def test_measured_normalization_records():
    s = ro.ReadoutSettings(rates=RATES, trials=10_000, normalization="measured")
    rho = projector((ket(0) + ket(3)) / math.sqrt(2))
    est, recs = ro.measure_all(rho, s, ro.calibrate_xxyy(RATES), 7, (0, 0))
    kinds = [r.kind for r in recs]
    assert kinds[-2:] == ["ref_n1", "ref_n4"]
    assert recs[-1].seed == "7:0:0:9"
    assert est.XXminusYY == pytest.approx(2.0, abs=0.2)


def test_measurement_streams_are_keyed():
    s = ro.ReadoutSettings(rates=RATES, trials=1000)
    rho = projector(closed_form_ground_state())
    a = ro.measure_sequence(rho, "pi34", s, 5, (1, 2, 3))
    b = ro.measure_sequence(rho, "pi34", s, 5, (1, 2, 3))
    c = ro.measure_sequence(rho, "pi34", s, 5, (1, 2, 4))
    assert a == b
    assert a.sampled_signal != c.sampled_signal
    assert a.seed == "5:1:2:3"


def test_monotone_bias_in_epsilon():
    rho = projector(closed_form_ground_state())
    cal = ro.calibrate_xxyy(ro.PLRates())
    h = default_hamiltonian()
    energies = []
    for eps in np.arange(0, 0.0501, 0.005):
        s = ro.ReadoutSettings(error=ro.ReadoutErrorModel(float(eps)), shot_noise="none")
        energies.append(ro.estimate_energy(ro.measure_all(rho, s, cal)[0], h))
    assert np.all(np.diff(energies) >= -1e-12)
    assert energies[0] == pytest.approx(-R5, abs=1e-12)


def test_shot_noise_energy_scaling():
    rho = projector(closed_form_ground_state())
    cal = ro.calibrate_xxyy(ro.PLRates())
    h = default_hamiltonian()
    stds = []
    for trials in (10**4, 10**5, 10**6):
        s = ro.ReadoutSettings(trials=trials)
        e = [ro.estimate_energy(ro.measure_all(rho, s, cal, seed)[0], h) for seed in range(200)]
        stds.append(np.std(e, ddof=1))
    assert stds[0] / stds[1] == pytest.approx(math.sqrt(10), rel=0.2)
    assert stds[1] / stds[2] == pytest.approx(math.sqrt(10), rel=0.2)


def test_write_records_csv(tmp_path):
    recs = [ro.MeasurementRecord("plain", 0.1, 1 / 3, 100, "0:0")]
    path = tmp_path / "r.csv"
    ro.write_records_csv(path, recs)
    lines = path.read_bytes().split(b"\n")
    assert lines[0] == b"kind,expected,sampled,trials,seed"
    assert lines[1] == b"plain,0.10000000000000001,0.33333333333333331,100,0:0"


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31))
def test_xxyy_matches_oracle(seed):
    rho = random_density(np.random.default_rng(seed))
    for branch, sign in (("plus", 1), ("minus", -1)):
        want = expectation(rho, pauli_matrix("XX") + sign * pauli_matrix("YY"))
        assert ro.measure_xxyy(rho, branch, NOISELESS) == pytest.approx(want, abs=1e-9)
