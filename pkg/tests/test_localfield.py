import cmath
import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from decoupling_lab.errors import LabError
from decoupling_lab.localfield import Kind, is_prime, make_ring, vp


def poly_mul_oracle(x, y, p, n):
    """Multiply two base-p digit encodings as truncated polynomials over F_p."""
    dx = [(x // p**i) % p for i in range(n)]
    dy = [(y // p**i) % p for i in range(n)]
    out = [0] * n
    for i in range(n):
        for j in range(n - i):
            out[i + j] = (out[i + j] + dx[i] * dy[j]) % p
    return sum(c * p**i for i, c in enumerate(out))


def test_ring_construction():
    r = make_ring("padic", 3, 2)
    assert (r.q, r.bold_p, r.kind) == (9, 3, Kind.INT_MOD)
    r2 = make_ring("padic", 2, 4)
    assert (r2.q, r2.bold_p, r2.abs2_inv) == (16, 2, 2)
    with pytest.raises(LabError) as e:
        make_ring("laurent", 2, 4)
    assert e.value.code == "CHAR_TWO_POLY"
    with pytest.raises(LabError) as e:
        make_ring("padic", 6, 2)
    assert e.value.code == "NON_PRIME"
    with pytest.raises(LabError) as e:
        make_ring("padic", 3, 0)
    assert e.value.code == "PRECISION_OVERFLOW"
    with pytest.raises(ValueError):
        make_ring("reals", 3, 2)


def test_pinned_arithmetic():
    r = make_ring("padic", 3, 2)
    assert int(r.sqr(4)) == 7
    assert int(r.add(5, 7)) == 3
    lp = make_ring("laurent", 3, 2)
    one_plus_t = lp([1, 1])
    assert (one_plus_t * one_plus_t).coefficients() == [1, 2]
    assert int(make_ring("padic", 3, 4).valuation(6)) == 1
    assert int(r.valuation(0)) == 2
    l4 = make_ring("laurent", 3, 4)
    assert l4([0, 0, 1, 2]).valuation() == 2


def test_pinned_characters():
    r = make_ring("padic", 3, 2)
    assert r.character(0) == pytest.approx(1)
    assert complex(r.character(3)) == pytest.approx(cmath.exp(2j * cmath.pi / 3))
    lp = make_ring("laurent", 3, 2)
    assert lp([0, 2]).character() == pytest.approx(cmath.exp(4j * cmath.pi / 3))


def test_is_prime_and_vp():
    assert [n for n in range(20) if is_prime(n)] == [2, 3, 5, 7, 11, 13, 17, 19]
    assert vp(54, 3) == 3
    with pytest.raises(ValueError):
        vp(0, 3)


@pytest.mark.parametrize("kind,p,n", [("padic", 3, 2), ("laurent", 3, 2), ("padic", 2, 4), ("laurent", 5, 2)])
def test_ring_axioms_exhaustive(kind, p, n):
    r = make_ring(kind, p, n)
    x = r.elements()[:, None]
    y = r.elements()[None, :]
    assert np.array_equal(r.add(x, y), r.add(y, x))
    assert np.array_equal(r.mul(x, y), r.mul(y, x))
    assert np.all(r.sub(r.add(x, y), y) == np.broadcast_to(x, (r.q, r.q)))
    if kind == "padic":
        assert np.array_equal(r.mul(x, y), (x * y) % r.q)
    else:
        oracle = np.array([[poly_mul_oracle(a, b, p, n) for b in range(r.q)] for a in range(r.q)])
        assert np.array_equal(r.mul(x, y), oracle)


@pytest.mark.parametrize("kind,p,n", [("padic", 3, 4), ("laurent", 3, 4), ("padic", 2, 4)])
def test_norm_properties_exhaustive(kind, p, n):
    r = make_ring(kind, p, n)
    x = r.elements()[:, None]
    y = r.elements()[None, :]
    nx, ny = r.norm(x), r.norm(y)
    assert np.all(r.norm(r.add(x, y)) <= np.maximum(nx, ny) + 1e-15)
    vx, vy = r.valuation(x), r.valuation(y)
    ok = (vx + vy) <= n
    prod = r.norm(r.mul(x, y))
    assert np.allclose(prod[ok], (nx * ny)[ok])


@pytest.mark.parametrize("kind,p,n", [("padic", 3, 2), ("laurent", 3, 3), ("padic", 2, 5), ("laurent", 7, 1)])
def test_character_is_nondegenerate_additive(kind, p, n):
    r = make_ring(kind, p, n)
    z = r.elements()
    assert abs(r.character(z).sum()) < 1e-9
    x = z[:, None]
    y = z[None, :]
    assert np.allclose(r.character(r.add(x, y)), r.character(x) * r.character(y))
    # nondegenerate: for every nonzero b, z -> character(b z) is nontrivial
    for b in range(1, r.q):
        assert abs(r.character(r.mul(b, z)).sum()) < 1e-9


def test_poly_ring_has_no_frobenius():
    r = make_ring("laurent", 3, 2)
    found = any(int(r.sqr(r.add(x, y))) != int(r.add(r.sqr(x), r.sqr(y))) for x, y in itertools.product(range(9), repeat=2))
    assert found


@given(st.integers(0, 3**6 - 1), st.integers(0, 3**6 - 1), st.integers(0, 3**6 - 1))
def test_distributive_poly(x, y, z):
    r = make_ring("laurent", 3, 6)
    assert int(r.mul(x, r.add(y, z))) == int(r.add(r.mul(x, y), r.mul(x, z)))
    assert int(r.mul(x, y)) == poly_mul_oracle(x, y, 3, 6)


@given(st.integers(-(10**9), 10**9), st.integers(-(10**9), 10**9))
def test_int_mod_matches_python(x, y):
    r = make_ring("padic", 5, 8)
    assert int(r.mul(r.reduce(x), r.reduce(y))) == (x * y) % r.q
    assert int(r.add(r.reduce(x), r.reduce(y))) == (x + y) % r.q


@given(st.integers(0, 2**12 - 1))
def test_digits_roundtrip(x):
    r = make_ring("padic", 2, 12)
    assert int(r.from_digits(r.digits(x))) == x


def test_ring_elem_mismatch():
    a = make_ring("padic", 3, 2)(1)
    b = make_ring("padic", 3, 4)(1)
    with pytest.raises(LabError) as e:
        a + b
    assert e.value.code == "RING_MISMATCH"
