import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import direct_grid, gaussian_function, random_function
from decoupling_lab.caps import Cap, Envelope, envelope_tiling
from decoupling_lab.errors import LabError
from decoupling_lab.fourier import analyze, analyze_naive, synth, synth_naive
from decoupling_lab.localfield import make_ring
from decoupling_lab.parabola import (
    evaluate_spatial,
    from_grid,
    lp_norm,
    lp_power,
    make_function,
    make_params,
    multiply_indicator,
    off_parabola_fraction,
    project,
    superlevel_measure,
)


@pytest.mark.parametrize("kind,p,n", [("padic", 3, 2), ("laurent", 3, 2), ("padic", 2, 3), ("laurent", 5, 2), ("padic", 2, 4)])
def test_fft_matches_naive(kind, p, n):
    ring = make_ring(kind, p, n)
    rng = np.random.default_rng(n * 10 + p)
    F = rng.normal(size=(ring.q, ring.q)) + 1j * rng.normal(size=(ring.q, ring.q))
    assert np.allclose(synth(F, ring), synth_naive(F, ring), atol=1e-9)
    g = rng.normal(size=(ring.q, ring.q))
    assert np.allclose(analyze(g, ring), analyze_naive(g, ring), atol=1e-12)
    assert np.allclose(synth(analyze(g, ring), ring), g, atol=1e-12)


def test_fft_stacks_match_single(p3n2, l3n2):
    for params in (p3n2, l3n2):
        rng = np.random.default_rng(0)
        F = rng.normal(size=(3, params.q, params.q))
        stacked = synth(F, params.ring)
        for i in range(3):
            assert np.allclose(stacked[i], synth(F[i], params.ring))


@pytest.mark.parametrize("kind,p,N", [("padic", 3, 1), ("laurent", 3, 1), ("padic", 2, 2)])
def test_grid_matches_direct_sum(kind, p, N):
    params = make_params(kind, p, N)
    f = gaussian_function(params, 3)
    assert np.allclose(f.grid, direct_grid(params, f.coeffs), atol=1e-9)


def test_pinned_functions():
    params = make_params("padic", 3, 1)
    assert np.allclose(make_function(params, {0: 1}).grid, 1)
    assert make_function(params, {}).is_zero()
    u = np.arange(9)
    expect = np.exp(2j * np.pi * (u[:, None] + u[None, :]) / 9)
    assert np.allclose(make_function(params, {1: 1}).grid, expect)
    with pytest.raises(LabError) as e:
        make_function(params, {9: 1})
    assert e.value.code == "INDEX_RANGE"


def test_norms_pinned():
    params = make_params("padic", 3, 1)
    q = params.q
    one = make_function(params, {0: 1})
    assert lp_norm(one, 4) == pytest.approx((q * q) ** 0.25)
    assert lp_norm(make_function(params, None), 3) == 0
    two = make_function(params, {0: 1, 3: 1})
    assert lp_norm(two, 2) == pytest.approx((2 * 81) ** 0.5)
    assert np.allclose(two.grid, direct_grid(params, two.coeffs))
    assert superlevel_measure(one, 0.5) == q * q
    assert superlevel_measure(one, 1.0) == 0
    oracle = int(np.count_nonzero(np.abs(direct_grid(params, two.coeffs)) > 1.9))
    assert superlevel_measure(two, 1.9) == oracle
    assert lp_norm(two, np.inf) == pytest.approx(2)
    with pytest.raises(ValueError):
        lp_norm(two, 0.5)


@given(st.integers(0, 10**6), st.sampled_from(["padic", "laurent"]))
def test_plancherel_and_linearity(seed, kind):
    params = make_params(kind, 3, 1)
    f = gaussian_function(params, seed)
    g = gaussian_function(params, seed + 1)
    q = params.q
    assert lp_power(f, 2) == pytest.approx(q * q * float(np.sum(np.abs(f.coeffs) ** 2)), rel=1e-9)
    assert np.allclose((f + g).grid, f.grid + g.grid)
    assert np.allclose((f - g.scaled(2j)).grid, f.grid - 2j * g.grid)


def test_random_phase_l2_identity(p3n2):
    f = random_function(p3n2, 11)
    assert lp_power(f, 2) == pytest.approx(p3n2.q**3, rel=1e-12)


def test_single_frequency_has_unit_modulus(p3n2):
    assert np.allclose(np.abs(make_function(p3n2, {17: 1}).grid), 1)
    f = make_function(p3n2, {0: 1, 40: 1})
    assert lp_power(f, 2) == pytest.approx(2 * p3n2.q**2)


def test_project(p3n2):
    params = make_params("padic", 3, 1)
    f = make_function(params, np.ones(9))
    assert np.array_equal(project(f, lambda a: a % 3 == 1).support(), [1, 4, 7])
    assert np.array_equal(project(f, np.ones(9, bool)).coeffs, f.coeffs)
    assert project(f, np.zeros(9, bool)).is_zero()
    g = gaussian_function(p3n2, 2)
    once = project(g, lambda a: a % 9 == 4)
    assert np.array_equal(project(once, lambda a: a % 9 == 4).coeffs, once.coeffs)


def test_quadruple_identity(p3n2):
    params = make_params("padic", 3, 1)
    ring = params.ring
    f = gaussian_function(params, 5)
    c = f.coeffs
    q = params.q
    total = 0
    sq = [int(ring.sqr(a)) for a in range(q)]
    for a1 in range(q):
        for a2 in range(q):
            for a3 in range(q):
                a4 = (a1 + a3 - a2) % q
                if (sq[a1] + sq[a3] - sq[a2] - sq[a4]) % q == 0:
                    total += c[a1] * np.conj(c[a2]) * c[a3] * np.conj(c[a4])
    assert lp_power(f, 4) == pytest.approx(q * q * total.real, rel=1e-10)


def test_from_grid_roundtrip_and_leak(p3n2):
    f = gaussian_function(p3n2, 1)
    assert np.allclose(from_grid(p3n2, f.grid).coeffs, f.coeffs)
    spatial = evaluate_spatial(f)
    assert off_parabola_fraction(p3n2, spatial.spectrum()) < 1e-20
    with pytest.raises(LabError) as e:
        from_grid(p3n2, np.abs(f.grid) ** 2)
    assert e.value.code == "SPECTRUM_LEAK"


def test_multiply_indicator_pinned():
    params = make_params("padic", 3, 1)
    f = make_function(params, {0: 1.0, 3: 2.0, 6: -1.0})
    cap = Cap(params, 1, 0)
    pieces = [multiply_indicator(f, U) for U in envelope_tiling(cap, 1)]
    assert np.allclose(sum(pc.coeffs for pc in pieces), f.coeffs)
    for U, pc in zip(envelope_tiling(cap, 1), pieces):
        assert np.allclose(pc.grid, np.where(U.mask(), f.grid, 0))
    whole = Envelope(Cap(params, 0, 0), 0, 0)
    assert np.allclose(multiply_indicator(f, whole).coeffs, f.coeffs)
    assert multiply_indicator(make_function(params, None), whole).is_zero()


@pytest.mark.parametrize("kind", ["padic", "laurent"])
def test_spectrum_closure_of_envelope_products(kind):
    params = make_params(kind, 3, 2)
    f = gaussian_function(params, 8)
    for k in range(params.N + 1):
        for c in range(params.p**k):
            cap = Cap(params, k, c)
            fc = project(f, cap.contains)
            for U in envelope_tiling(cap, k)[:3]:
                piece = multiply_indicator(fc, U)
                outside = ~cap.contains(np.arange(params.q))
                assert np.allclose(piece.coeffs[outside], 0, atol=1e-9)
