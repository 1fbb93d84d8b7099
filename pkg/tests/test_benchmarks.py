import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ftfsim.benchmarks import (error_per_cycle, fit_rb, fit_xeb_decay, generate_rb,
                               generate_rcs, interleaved_fidelity, rb_survival,
                               simulate_rb_depolarized, xeb_fidelity)
from ftfsim.circuits import simulate_statevector, sample_record
from ftfsim.cliffords import clifford_group
from ftfsim.errors import FitError, ValidationError


def test_clifford_group_sizes():
    assert clifford_group(1).size == 24
    assert clifford_group(2).size == 11520


def test_clifford_inverse_words():
    g = clifford_group(2)
    rng = np.random.default_rng(0)
    for i in rng.integers(0, g.size, 10):
        u = g.unitaries[int(i)]
        j = g.inverse_index[int(i)]
        prod = g.unitaries[j] @ u
        assert abs(abs(np.trace(prod)) / 4.0 - 1.0) < 1e-9


def test_rb_length_one_is_clifford_plus_inverse():
    seqs = generate_rb(1, [1], seed=3)
    assert len(seqs[0].clifford_indices) == 1
    assert rb_survival(seqs[0]) == pytest.approx(1.0, abs=1e-12)


def test_rb_noiseless_identity_composition():
    for seq in generate_rb(1, [2, 16, 64], seed=5):
        assert rb_survival(seq) > 1.0 - 1e-9
    for seq in generate_rb(2, [2, 8], seed=6):
        assert rb_survival(seq) > 1.0 - 1e-9


def test_rb_interleaved_identity():
    for seq in generate_rb(2, [1, 4, 9], interleaved="cz", seed=7):
        assert rb_survival(seq) > 1.0 - 1e-9


def test_rb_depolarized_matches_analytic():
    """Per-Clifford uniform depolarizing with probability p decays survival
    as (d-1)/d * (1-p)^L + 1/d exactly."""
    for nq, p in ((1, 0.02), (2, 0.03)):
        lengths = [1, 4, 8, 16, 32]
        data = simulate_rb_depolarized(nq, lengths, p, n_sequences=4, seed=11)
        report = fit_rb(lengths, data, d=2 ** nq)
        assert report.params["p"] == pytest.approx(1.0 - p, abs=1e-9)
        d = 2 ** nq
        assert report.params["A"] == pytest.approx((d - 1) / d, abs=1e-6)
        assert report.params["B"] == pytest.approx(1 / d, abs=1e-6)


def test_fit_rb_exact_recovery():
    xs = np.array([1, 3, 10, 30, 100])
    ys = 0.5 * 0.99 ** xs + 0.5
    rep = fit_rb(xs, ys)
    assert rep.params["p"] == pytest.approx(0.99, abs=1e-9)
    assert rep.fidelity == pytest.approx(1.0 - 0.01 / 2.0, abs=1e-9)


def test_fit_rb_constant_survival():
    xs = np.array([1, 10, 100])
    rep = fit_rb(xs, np.ones(3))
    assert rep.params["p"] == pytest.approx(1.0)
    assert rep.fidelity == pytest.approx(1.0)


def test_fit_rb_noisy_three_sigma_coverage():
    rng = np.random.default_rng(2024)
    hits = 0
    trials = 50
    xs = np.array([1, 5, 10, 20, 40, 80, 160])
    for _ in range(trials):
        ys = 0.5 * 0.99 ** xs + 0.5 + rng.normal(0.0, 0.01, xs.size)
        rep = fit_rb(xs, ys)
        if abs(rep.params["p"] - 0.99) <= 3.0 * rep.stderr["p"]:
            hits += 1
    assert hits >= 45


def test_interleaved_fidelity_ratio():
    assert interleaved_fidelity(0.99, 0.99) == pytest.approx(1.0)
    val = interleaved_fidelity(0.995, 0.985, d=4)
    assert val == pytest.approx(1.0 - (1.0 - 0.985 / 0.995) * 0.75, rel=1e-12)


def test_xeb_spot_values():
    rng = np.random.default_rng(5)
    ideal = rng.dirichlet(np.ones(16))
    assert xeb_fidelity(ideal, ideal) == pytest.approx(1.0, abs=1e-12)
    uniform = np.full(16, 1.0 / 16.0)
    assert xeb_fidelity(uniform, ideal) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValidationError, match="uniform"):
        xeb_fidelity(ideal, uniform)
    assert error_per_cycle(2, 0.987) == pytest.approx(0.00975, abs=1e-12)


@given(st.permutations(list(range(8))))
@settings(max_examples=25, deadline=None)
def test_xeb_relabeling_invariance(perm):
    rng = np.random.default_rng(7)
    ideal = rng.dirichlet(np.ones(8))
    measured = rng.dirichlet(np.ones(8))
    base = xeb_fidelity(measured, ideal)
    perm = np.asarray(perm)
    assert xeb_fidelity(measured[perm], ideal[perm]) == pytest.approx(base, rel=1e-9)


def test_rcs_structure():
    circ = generate_rcs([(0, 1), (2, 3)], 5, seed=0)
    assert circ.cz_layer_count() == 5
    for layer in circ.layers:
        kinds = {g.kind for g in layer}
        if "cz" in kinds:
            assert kinds == {"cz"}
            assert len(layer) == 2
    zero = generate_rcs([(0, 1)], 0, seed=1)
    assert zero.cz_layer_count() == 0
    assert sum(1 for _ in zero.gates) > 0  # final rotation only
    with pytest.raises(ValidationError, match="disjoint"):
        generate_rcs([(0, 1), (1, 2)], 2)


def test_rcs_noiseless_xeb_self_consistency():
    circ = generate_rcs([(0, 1), (2, 3)], 5, seed=123)
    p_th = np.abs(simulate_statevector(circ)) ** 2
    rec = sample_record(p_th, 100_000, 42, 4)
    f = xeb_fidelity(rec.probabilities(), p_th)
    sigma = 1.0 / np.sqrt(100_000 * np.sum(p_th ** 2))
    assert abs(f - 1.0) < 5.0 * max(sigma, 0.01)


def test_fit_xeb_decay_alias():
    xs = [1, 2, 4, 8, 16]
    ys = 0.9 * 0.95 ** np.asarray(xs) + 0.0
    rep = fit_xeb_decay(xs, ys)
    assert rep.params["p"] == pytest.approx(0.95, abs=1e-6)


def test_rb_seed_reproducibility():
    a = generate_rb(2, [5], seed=99)[0]
    b = generate_rb(2, [5], seed=99)[0]
    assert a.clifford_indices == b.clifford_indices
