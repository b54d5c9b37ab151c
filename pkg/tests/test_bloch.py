import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import mathieu_a, mathieu_b

from adiax.bloch import (
    BlochTerm,
    PeriodicPotential,
    band_gap_check,
    bloch_band_table,
    bloch_bands_fourier,
    bloch_discriminant_oracle,
    chi0_bloch,
    discriminant_band_edges,
    effective_hamiltonian_bloch,
    quasimomentum,
)
from adiax.errors import StickingBands, TruncationError
from adiax.reduction import correction_L1


def _slowly_varying():
    # 2 a(x) cos y with a(x) = 0.5 (1 + 0.3 sin x) and U(x) = 1 + 0.2 x
    return PeriodicPotential(lambda x: 0.5 * (1 + 0.3 * np.sin(x)) * np.array([1, 0, 1], dtype=complex),
                             lambda x: 1 + 0.2 * x, 0.2)


@pytest.mark.parametrize("a", [0.1, 0.7, 2.0])
def test_fourier_edges_match_mathieu_characteristic_values(a):
    # -u'' + 2a cos(y) u = E u maps to Mathieu's equation with q = 4a, lambda = 4E
    pot = PeriodicPotential.mathieu(a)
    q = 4 * a
    e0 = bloch_bands_fourier(pot, 0.0, 0.0, 3)
    eh = bloch_bands_fourier(pot, 0.0, 0.5, 2)
    assert np.allclose(4 * e0, [mathieu_a(0, q), mathieu_b(2, q), mathieu_a(2, q)], atol=1e-7)
    assert np.allclose(4 * eh, [mathieu_b(1, q), mathieu_a(1, q)], atol=1e-7)


@pytest.mark.parametrize("E", [0.05, 0.7, 2.3])
def test_free_discriminant(E):
    assert np.isclose(bloch_discriminant_oracle(PeriodicPotential.free(), 0.0, E),
                      2 * np.cos(2 * np.pi * np.sqrt(E)), atol=1e-10)


def test_discriminant_edges_agree_with_fourier():
    pot = PeriodicPotential.mathieu(0.5)
    edges = discriminant_band_edges(pot, 0.0, 3)
    four = np.sort([[bloch_bands_fourier(pot, 0.0, P, 3)[k] for P in (0.0, 0.5)] for k in range(3)], axis=1)
    assert np.max(np.abs(edges - four)) < 1e-9
    assert np.all(edges[1:, 0] > edges[:-1, 1])


def test_first_gap_small_amplitude_expansion():
    for a in (0.02, 0.05):
        e = bloch_bands_fourier(PeriodicPotential.mathieu(a), 0.0, 0.5, 2)
        assert abs((e[1] - e[0]) - (2 * a - a**3 / 2)) < 1e-7


@settings(max_examples=30, deadline=None)
@given(st.floats(-0.5, 0.5))
def test_free_effective_hamiltonian_inside_first_zone(p):
    band = bloch_band_table(PeriodicPotential.free(), [0.0], 1)[0]
    assert abs(float(effective_hamiltonian_bloch(band, p, 0.0)) - p**2) < 1e-9


@settings(max_examples=30, deadline=None)
@given(st.floats(-3, 3), st.integers(-3, 3))
def test_dispersion_even_and_periodic(P, m):
    band = bloch_band_table(PeriodicPotential.mathieu(0.4), [0.0], 1)[0]
    e = band.energy(P, 0.0)
    assert np.isclose(band.energy(-P, 0.0), e, atol=1e-12)
    assert np.isclose(band.energy(P + m, 0.0), e, atol=1e-10)


def test_table_interpolation_accuracy():
    pot = PeriodicPotential.mathieu(0.3)
    band = bloch_band_table(pot, [0.0], 2)[1]
    for P in (0.013, 0.21, 0.377, 0.4991):
        assert abs(band.energy(P, 0.0) - bloch_bands_fourier(pot, 0.0, P, 2)[1]) < 1e-7


def test_sticking_bands_for_free_motion():
    bands = bloch_band_table(PeriodicPotential.free(), [0.0], 2)
    with pytest.raises(StickingBands):
        band_gap_check(bands, 1, 1e-6)
    gapped = bloch_band_table(PeriodicPotential.mathieu(0.3), [0.0], 2)
    assert band_gap_check(gapped, 1, 1e-3) > 0.5


def test_truncation_detected():
    with pytest.raises(TruncationError):
        bloch_bands_fourier(PeriodicPotential.mathieu(40.0), 0.0, 0.0, 3, n_pw=2)


def test_quasimomentum_rejects_vanishing_phase_derivative():
    assert quasimomentum(0.6, 0.0, 2.0) == pytest.approx(0.3)
    with pytest.raises(ValueError):
        quasimomentum(0.6, 0.0, 0.0)


def test_chi0_is_normalized_eigenfunction():
    pot = PeriodicPotential.mathieu(0.5)
    term = BlochTerm(pot, 2, 128)
    fam = term.family()
    for p in (0.0, 0.3, -0.45):
        c = term.chi0(p, 0.0)
        assert abs(fam.inner(c, c) - 1) < 1e-12
        assert np.max(np.abs(fam.apply_H0(p, 0.0, c) - term.value(p, 0.0) * c)) < 1e-10
    assert fam.symmetry_defect(0.3, 0.0) < 1e-12
    y, c = chi0_bloch(pot, 1, 0.2, 0.0)
    assert y.shape == c.shape == (128,)


def test_chi0_gauge_is_smooth_in_p():
    term = BlochTerm(PeriodicPotential.mathieu(0.5), 1, 128)
    fam = term.family()
    ov = fam.inner(term.chi0(0.3, 0.0), term.chi0(0.3 + 1e-3, 0.0))
    assert abs(ov - 1) < 1e-5


def test_bloch_l1_frozen_values():
    term = BlochTerm(_slowly_varying(), 1, 128)
    L1 = correction_L1(term, term.family(), term, [0.3, -0.2])
    assert np.allclose(L1.total[:, 0], [-0.0231712385j, 0.0128760677j], atol=1e-8)


def test_bloch_l1_is_half_mixed_derivative():
    # L1 = -(i/2) d_p d_x H_eff: the left-ordered symbol of a self-adjoint operator
    term = BlochTerm(_slowly_varying(), 1, 128)
    s = 1e-3
    for p in (0.1, 0.35):
        mix = (term.value(p + s, s) - term.value(p + s, -s) - term.value(p - s, s) + term.value(p - s, -s)) / (4 * s * s)
        L1 = correction_L1(term, term.family(), term, [p]).total[0, 0]
        assert abs(L1 - (-0.5j * mix)) < 1e-7


def test_bloch_l1_vanishes_without_slow_dependence():
    term = BlochTerm(PeriodicPotential.mathieu(0.5), 1, 64)
    L1 = correction_L1(term, term.family(), term, [0.2, 0.4])
    assert np.max(np.abs(L1.total)) < 1e-8


def test_bloch_l1_resolution_independent():
    vals = []
    for ny in (64, 128):
        term = BlochTerm(_slowly_varying(), 1, ny)
        vals.append(correction_L1(term, term.family(), term, [0.3]).total[0, 0])
    assert abs(vals[0] - vals[1]) < 1e-10
