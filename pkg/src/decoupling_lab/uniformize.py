"""Amplitude uniformisation of the small-cap pieces of f.

Every pair (gamma, U), with U an envelope of the small cap gamma (dimensions
R^beta x R, i.e. envelope level 2N - M), is sorted by the value of |f_gamma|
on U, which is constant there.  Pairs with value in (lambda_j / e, lambda_j],
lambda_j = e^-j, form class j, for every lambda_j above the cutoff
N^-2 R^-1/2; what is left over, divided by the cutoff, is eta.

Everything is computed on one-dimensional profiles: on a flat cap,
f_gamma(u) = character(-a^2 u2) * f_gamma(u1 + 2a u2, 0), so multiplying by an
envelope indicator is multiplying the profile by the indicator of a residue
class of v = u1 + 2a u2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .caps import as_fraction, flat_cap_profiles, small_cap_level
from .errors import LabError
from .fourier import analyze
from .parabola import ModelParams, ParabolaFunction, make_function

NORMALIZATION_TOL = 1e-9


@dataclass
class UniformizationResult:
    params: ModelParams
    beta: object
    M: int
    p_exp: float
    cutoff: float
    lambdas: list
    # (j, i) -> coefficients of g^{(lambda_j, r_i)}, r_i = e^i
    classes: dict
    # j -> {gamma residue: number of envelopes in class j}
    envelope_counts: dict
    eta: ParabolaFunction
    eta_sup: float
    reconstruction_error: float
    # worst ratios of the two comparison chains, all should be <= 1
    pruncomp_ratio: float = 0.0
    pruncomp2_ratio: float = 0.0
    notes: dict = field(default_factory=dict)

    def class_function(self, j: int, i: int) -> ParabolaFunction:
        return make_function(self.params, self.classes[(j, i)])

    @property
    def envelope_measure(self) -> int:
        return self.params.q**2 // self.params.p ** (2 * self.params.N - self.M)


def theta_sup(f: ParabolaFunction) -> float:
    """max over theta of ||f_theta||_inf, from exact grids."""
    from .caps import cap_grids

    return float(np.abs(cap_grids(f, f.params.N)).max()) if not f.is_zero() else 0.0


def uniformize(f: ParabolaFunction, beta, p_exp: float | None = None) -> UniformizationResult:
    params = f.params
    N, p, q = params.N, params.p, params.q
    M = small_cap_level(params, beta)
    if p_exp is None:
        p_exp = 2.0 + 2.0 / float(as_fraction(beta))
    cutoff = 1.0 / (N**2 * math.sqrt(params.R))
    L = 2 * N - M
    n_env = p**L
    lambdas = []
    j = 0
    while math.exp(-j) > cutoff:
        lambdas.append(math.exp(-j))
        j += 1
    if f.is_zero():
        zero = make_function(params, None)
        return UniformizationResult(params, beta, M, p_exp, cutoff, lambdas, {}, {}, zero, 0.0, 0.0)
    sup = theta_sup(f)
    if abs(sup - 1.0) > NORMALIZATION_TOL:
        raise LabError("NOT_NORMALIZED", f"max_theta ||f_theta||_inf = {sup:.12g}, expected 1")

    profiles = flat_cap_profiles(f, M)  # (p^M, q): v -> f_gamma(v, 0)
    v = np.arange(q)
    env_of_v = v % n_env
    mags = np.abs(profiles)
    # |f_gamma| is constant on each envelope; take the max for robustness
    env_sup = np.zeros((profiles.shape[0], n_env))
    for e in range(n_env):
        env_sup[:, e] = mags[:, env_of_v == e].max(axis=1)

    # class j holds the pairs with value in (e^-j-1, e^-j], i.e. j = floor(-log value)
    jidx = np.full(env_sup.shape, -1, dtype=int)
    pos = env_sup > 0
    # values within round-off above 1 belong to class 0
    clipped = np.where(env_sup <= 1.0 + NORMALIZATION_TOL, np.minimum(env_sup, 1.0), env_sup)
    jidx[pos] = np.floor(-np.log(clipped[pos])).astype(int)
    above_one = int(np.count_nonzero(pos & (jidx < 0)))
    jidx[(jidx < 0) | (jidx >= len(lambdas))] = -1

    classes: dict = {}
    counts: dict = {}
    total = np.zeros(q, dtype=complex)
    worst1 = 0.0
    worst2 = 0.0
    mu_env = params.q**2 // n_env
    for jj, lam in enumerate(lambdas):
        counts[jj] = {}
        by_r: dict = {}
        for g in range(profiles.shape[0]):
            envs = np.flatnonzero(jidx[g] == jj)
            if envs.size == 0:
                continue
            counts[jj][g] = int(envs.size)
            keep = np.isin(env_of_v, envs)
            piece_profile = np.where(keep, profiles[g], 0) / lam
            coeffs = analyze(piece_profile, params.ring, ndim=1)
            # piece norms from the profile: each v has a fibre of q points
            l2 = q * float(np.sum(np.abs(piece_profile) ** 2))
            lp = q * float(np.sum(np.abs(piece_profile) ** p_exp))
            budget = envs.size * mu_env
            worst1 = max(worst1, l2 / budget, budget / (math.e**p_exp * lp))
            worst2 = max(worst2, lp / budget, budget / (math.e**2 * l2))
            r_i = max(0, int(math.ceil(math.log(envs.size) - 1e-12)))
            by_r.setdefault(r_i, np.zeros(q, dtype=complex))
            by_r[r_i] += coeffs
        for r_i, c in by_r.items():
            classes[(jj, r_i)] = c
            total += lam * c
    leftover = np.zeros(q, dtype=complex)
    for g in range(profiles.shape[0]):
        envs = np.flatnonzero(jidx[g] < 0)
        if envs.size:
            leftover += analyze(np.where(np.isin(env_of_v, envs), profiles[g], 0), params.ring, ndim=1)
    eta = make_function(params, leftover / cutoff)
    recon = total + cutoff * eta.coeffs
    err = float(np.abs(recon - f.coeffs).max() / max(np.abs(f.coeffs).max(), 1e-300))
    eta_sup = float(np.abs(eta.grid).max())
    res = UniformizationResult(params, beta, M, p_exp, cutoff, lambdas, classes, counts, eta, eta_sup, err, worst1, worst2)
    res.notes["leftover_pairs"] = int(np.count_nonzero((jidx < 0) & pos))
    res.notes["pairs_above_one"] = above_one
    return res
