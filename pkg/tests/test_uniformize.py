import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import gaussian_function, random_function
from decoupling_lab.caps import cap_grids, flat_cap_profiles
from decoupling_lab.ensembles import EnsembleKind, EnsembleSpec, generate
from decoupling_lab.errors import LabError
from decoupling_lab.parabola import make_function, make_params
from decoupling_lab.uniformize import theta_sup, uniformize


def normalized(f):
    return f.scaled(1.0 / theta_sup(f))


def test_theta_sup_matches_grids(p3n2):
    f = random_function(p3n2, 4)
    assert theta_sup(f) == pytest.approx(float(np.abs(cap_grids(f, 2)).max()))
    assert theta_sup(make_function(p3n2, None)) == 0.0


def test_not_normalized_rejected(p3n2):
    f = random_function(p3n2, 0)
    with pytest.raises(LabError) as e:
        uniformize(f, 1)
    assert e.value.code == "NOT_NORMALIZED"


def test_zero_function(p3n2):
    res = uniformize(make_function(p3n2, None), 1)
    assert res.classes == {}
    assert res.eta.is_zero()
    assert res.reconstruction_error == 0.0


def test_lambda_ladder(p3n2):
    res = uniformize(make_function(p3n2, {0: 1}), 1)
    assert res.cutoff == pytest.approx(1 / 36)
    assert res.lambdas == pytest.approx([1, math.exp(-1), math.exp(-2), math.exp(-3)])


@pytest.mark.parametrize("beta", ["1/2", "3/4", "1"])
def test_single_character_is_one_class(p3n2, beta):
    res = uniformize(make_function(p3n2, {5: 1}), beta)
    assert set(res.classes) == {(0, math.ceil(math.log(3 ** (4 - res.M))))}
    n_env = 3 ** (4 - res.M)
    assert res.envelope_counts[0] == {5 % 3**res.M: n_env}
    assert res.reconstruction_error < 1e-12
    assert res.eta_sup < 1e-12


def test_block_is_one_class(p3n2):
    f = normalized(generate(EnsembleSpec(EnsembleKind.BLOCK, beta=1), p3n2))
    res = uniformize(f, 1)
    # each small cap holds one frequency of size 1/9 on every envelope: class floor(ln 9) = 2
    assert {j for j, _ in res.classes} == {2}
    assert sum(res.envelope_counts[2].values()) == 9
    assert res.reconstruction_error < 1e-12


@given(st.integers(0, 10**6), st.sampled_from(["1/2", "3/4", "1"]), st.sampled_from(["padic", "laurent"]))
def test_reconstruction_and_class_values(seed, beta, kind):
    params = make_params(kind, 3, 2)
    f = normalized(gaussian_function(params, seed))
    res = uniformize(f, beta)
    assert res.reconstruction_error < 1e-9
    assert res.pruncomp_ratio <= 1 + 1e-9
    assert res.pruncomp2_ratio <= 1 + 1e-9
    for (j, _), c in res.classes.items():
        prof = np.abs(flat_cap_profiles(make_function(params, c), res.M))
        nz = prof[prof > 1e-9]
        assert nz.size
        assert nz.max() <= 1 + 1e-9
        assert nz.min() > math.exp(-1) - 1e-9
    # leftover pieces are below the cutoff on every small cap
    prof = np.abs(flat_cap_profiles(res.eta, res.M))
    assert prof.max() <= 1 + 1e-9


def test_eta_is_small_on_each_small_cap(p3n2):
    f = normalized(random_function(p3n2, 9))
    res = uniformize(f, "3/4")
    prof = np.abs(flat_cap_profiles(res.eta, res.M))
    assert prof.max() <= 1 + 1e-9


def test_class_counts_and_r_index(p3n2):
    f = normalized(random_function(p3n2, 2, sparse=True))
    res = uniformize(f, "3/4")
    seen = set()
    for j, per_gamma in res.envelope_counts.items():
        for g, n in per_gamma.items():
            seen.add((j, max(0, math.ceil(math.log(n) - 1e-12))))
    assert seen == set(res.classes)
