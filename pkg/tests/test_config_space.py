"""Configurations, product measures, Dirichlet forms, restrictions."""

import itertools
import math

import numpy as np
import pytest

from towersep import bundles as bnd
from towersep import config_space as cs
from towersep.groups import TowerSpec
from towersep.towers import ball, build_tower

Z1 = TowerSpec("integer_lattice", d=1, k=2)
TOWER = build_tower(Z1, 3)
G2, G4, G8 = TOWER
CAT = bnd.builtin_bundles(Z1, c=1.0)
CONST = CAT["constant_rate"]
PROD = CAT["edge_product_rate"]


def cfg(bits, level=None):
    return cs.Configuration.from_bits(bits, level)


# -- configurations and swaps ----------------------------------------------


def test_swap_identities():
    eta = cfg([1, 0, 1, 0])
    assert cs.pair_swap(eta, 0, 0) == eta
    assert cs.pair_swap(eta, 0, 2) == eta  # equal occupancies
    assert cs.pair_swap(eta, 0, 1).bits == cfg([0, 1, 1, 0]).bits
    assert cs.pair_swap(eta, 0, 3).bits == cfg([0, 0, 1, 1]).bits


def test_swap_on_edge_equals_pair_swap():
    eta = cfg([1, 0, 1, 0])
    e = next(e for e in G4.edges if e[:2] == (0, 1))
    assert cs.swap(eta, e) == cs.pair_swap(eta, 0, 1)
    # double swap restores
    assert cs.swap(cs.swap(eta, e), e) == eta


def test_hex_round_trip():
    eta = cfg([1, 0, 1, 1, 0, 0, 1, 0])
    assert cs.Configuration.from_hex(eta.to_hex(), 8) == eta


def test_periodic_lift_cycle2():
    # window [-2..2] on Z, eta = 10 on the cycle of 2 -> pattern 01010
    eta = cfg([1, 0], level=1)
    window = [(-2,), (-1,), (0,), (1,), (2,)]
    assert cs.periodic_lift(eta, G2, window) == (1, 0, 1, 0, 1)


def test_periodic_lift_invariant_under_period_shift():
    eta = cfg([1, 0, 1, 1], level=2)
    window = [(j,) for j in range(-2, 3)]
    shifted = [(j + 4,) for j in range(-2, 3)]
    assert cs.periodic_lift(eta, G4, window) == cs.periodic_lift(eta, G4, shifted)


# -- product measures ---------------------------------------------------------


def test_bernoulli_entries():
    mu = cs.bernoulli(0.3, 4)
    assert isinstance(mu, cs.SmallMeasure)
    # eta = 1010 (sites 0 and 2 occupied): 0.3^2 * 0.7^2
    idx = cfg([1, 0, 1, 0]).bits
    assert abs(mu.vector[idx] - 0.3**2 * 0.7**2) < 1e-15
    assert abs(mu.vector.sum() - 1.0) < 1e-12


def test_bernoulli_half_uniform_and_degenerate():
    mu = cs.bernoulli(0.5, 5)
    assert np.allclose(mu.vector, 1 / 32)
    mu0 = cs.bernoulli(0.0, 5)
    assert mu0.vector[0] == 1.0 and mu0.vector[1:].sum() == 0.0


def test_bernoulli_large_n_returns_sampler():
    sampler = cs.bernoulli(0.4, 64)
    assert isinstance(sampler, cs.BernoulliSampler)
    rng = np.random.default_rng(0)
    eta = sampler.sample(rng)
    assert eta.n == 64


def test_measure_csv_round_trip(tmp_path):
    mu = cs.bernoulli(0.3, 4)
    path = tmp_path / "mu.csv"
    mu.to_csv(path)
    back = cs.SmallMeasure.from_csv(path, 4)
    assert np.array_equal(back.vector, mu.vector)


# -- invariance and group averaging ------------------------------------------


def test_group_average_is_invariant_and_idempotent():
    rng = np.random.default_rng(1)
    v = rng.random(16)
    mu = cs.SmallMeasure(4, v / v.sum(), level=2)
    bar = cs.group_average(mu, G4)
    assert cs.is_invariant(bar, G4)
    bar2 = cs.group_average(bar, G4)
    assert np.allclose(bar.vector, bar2.vector, atol=1e-15)


def test_pushforward_preserves_mass():
    rng = np.random.default_rng(2)
    v = rng.random(16)
    mu = cs.SmallMeasure(4, v / v.sum(), level=2)
    perm = cs.state_permutation(G4, (1,))
    nu = cs.pushforward(mu, perm)
    assert abs(nu.vector.sum() - 1.0) < 1e-12
    # pushing forward by the full orbit and averaging equals group_average
    acc = np.zeros(16)
    for sigma in G4.reps:
        acc += cs.pushforward(mu, cs.state_permutation(G4, sigma)).vector
    assert np.allclose(acc / 4, cs.group_average(mu, G4).vector)


# -- Dirichlet forms ------------------------------------------------------------


def direct_dirichlet_oracle(mu, rate, graph):
    """Independent oracle: -sum_eta sqrt(phi) (L sqrt(phi)) nu(eta) by direct
    summation over states and exchange edges."""
    n = graph.n
    nu = 1.0 / (1 << n)
    phi = mu.vector / nu
    sphi = np.sqrt(phi)
    acc = 0.0
    for state in range(1 << n):
        eta = cs.Configuration(state, n, graph.level)
        gen_row = 0.0
        for e in graph.exchange_edges():
            c = rate(graph, e, eta)
            swapped = cs.pair_swap(eta, e[0], e[1])
            gen_row += c * (sphi[swapped.bits] - sphi[state])
        acc -= sphi[state] * gen_row * nu
    return acc


def test_dirichlet_uniform_and_pointmass_zero():
    uni = cs.SmallMeasure(4, np.full(16, 1 / 16), level=2)
    assert cs.dirichlet_form(uni, CONST, G4).value == 0.0
    ones = np.zeros(16)
    ones[15] = 1.0
    # all-ones is fixed by every swap
    assert cs.dirichlet_form(cs.SmallMeasure(4, ones, level=2), CONST, G4).value == 0.0


def test_dirichlet_matches_direct_summation_oracle():
    # nu_rho is reversible for the exchange dynamics: phi depends only on the
    # particle count, so every swap fixes sqrt(phi) and the form is exactly 0
    mu = cs.bernoulli(0.3, 4, level=2)
    for rate in (CONST, PROD):
        res = cs.dirichlet_form(mu, rate, G4)
        assert abs(res.value) < 1e-15
        assert abs(res.value - direct_dirichlet_oracle(mu, rate, G4)) < 1e-12
    # a non-invariant mixture has strictly positive energy and still matches
    # the direct-summation oracle
    rng = np.random.default_rng(7)
    v = rng.random(16)
    mu = cs.SmallMeasure(4, v / v.sum(), level=2)
    for rate in (CONST, PROD):
        res = cs.dirichlet_form(mu, rate, G4)
        oracle = direct_dirichlet_oracle(mu, rate, G4)
        assert res.value > 0.0
        assert abs(res.value - oracle) < 1e-12


def test_dirichlet_identity_invariant_measures():
    rng = np.random.default_rng(3)
    for _ in range(10):
        v = rng.random(16)
        mu = cs.group_average(cs.SmallMeasure(4, v / v.sum(), level=2), G4)
        res = cs.dirichlet_form(mu, PROD, G4)
        assert res.identity_rhs is not None
        assert abs(res.value - res.identity_rhs) <= 1e-12 * max(1.0, abs(res.value))


def test_dirichlet_convexity_under_group_average():
    rng = np.random.default_rng(4)
    for _ in range(5):
        v = rng.random(16)
        mu = cs.SmallMeasure(4, v / v.sum(), level=2)
        bar = cs.group_average(mu, G4)
        avg = np.mean([
            cs.dirichlet_form(
                cs.pushforward(mu, cs.state_permutation(G4, sigma)), CONST, G4
            ).value
            for sigma in G4.reps
        ])
        assert cs.dirichlet_form(bar, CONST, G4).value <= avg + 1e-12


# -- marginals and restricted forms ---------------------------------------------


def test_marginal_of_product_measure():
    mu = cs.bernoulli(0.3, 8, level=3)
    sites = [0, 2, 5]
    marg = cs.marginal_on(mu, G8, sites)
    for pat in range(8):
        ones = bin(pat).count("1")
        assert abs(marg[pat] - 0.3**ones * 0.7 ** (3 - ones)) < 1e-12


def test_marginal_from_samples():
    etas = [cfg([1, 0, 1, 0]), cfg([0, 0, 1, 0])]
    marg = cs.marginal_on(etas, G4, [0, 2])
    assert marg[0b10] == 0.5 and marg[0b11] == 0.5


def test_restricted_dirichlet_product_is_zero():
    mu = cs.bernoulli(0.3, 8, level=3)
    sites = ball(G8, G8.origin, 2)
    assert abs(cs.restricted_dirichlet(mu, G8, sites)) < 1e-12


def test_restricted_dirichlet_two_point_hand_value():
    # measure (1/2)(delta_1000... + delta_0100...) on the cycle of 4,
    # restricted to the 2-site window {0, 1}
    v = np.zeros(16)
    v[cfg([1, 0, 0, 0]).bits] = 0.5
    v[cfg([0, 1, 0, 0]).bits] = 0.5
    mu = cs.SmallMeasure(4, v, level=2)
    sites = [0, 1]
    got = cs.restricted_dirichlet(mu, G4, sites)
    # hand computation: marginal is (0, 1/2, 1/2, 0); phi = (0,2,2,0);
    # sqrt(phi) swap-invariant under the (0,1) exchange -> form is 0
    assert abs(got) < 1e-12
    # concentrate on (10, 01) with unequal weights -> still 0 by symmetry of
    # sqrt; use (00, 10) mixture instead for a strictly positive value
    v2 = np.zeros(16)
    v2[cfg([0, 0, 0, 0]).bits] = 0.5
    v2[cfg([1, 0, 0, 0]).bits] = 0.5
    mu2 = cs.SmallMeasure(4, v2, level=2)
    got2 = cs.restricted_dirichlet(mu2, G4, sites)
    # marginal on {0,1}: (1/2, 1/2, 0, 0); phi = (2, 2, 0, 0);
    # both oriented (0,1) edges: 2 * (1/4) * mean over 4 patterns of
    # (sqrt(phi(swapped)) - sqrt(phi))^2 = 2*(1/4)*(2*(sqrt2)^2)/4 = 1/2
    assert abs(got2 - 0.5) < 1e-12


def test_two_block_forms_product_zero():
    # nu_rho x nu_rho on a 2-site window: both forms vanish
    rho = 0.3
    mu2 = np.ones(16)
    for state in range(16):
        for bit in range(4):
            mu2[state] *= rho if (state >> bit) & 1 else 1 - rho
    prod_form, exch_form = cs.two_block_forms(mu2, 2, [(0, 1)], origin_pos=0)
    assert abs(prod_form) < 1e-12 and abs(exch_form) < 1e-12
    # oracle: direct 2^(2|V|) summation of the product form
    sphi = np.sqrt(mu2 * 16)
    acc = 0.0
    for x, y in ((0, 1), (2, 3)):
        diff = sphi[cs.pair_swap_indices(4, x, y)] - sphi
        acc += 0.25 * float(diff @ diff) / 16
    assert abs(prod_form - acc) < 1e-15


def test_two_block_forms_mismatched_blocks_positive():
    # joint mass concentrated on (eta = all-ones, xi = all-zeros) over a
    # 1-site window: the origin exchange moves mass, the form is positive
    mu2 = np.zeros(4)
    mu2[0b01] = 1.0  # low bit: eta_o = 1; high bit: xi_o = 0
    prod_form, exch_form = cs.two_block_forms(mu2, 1, [], origin_pos=0)
    assert prod_form == 0.0
    # hand value: phi = (0,4,0,0); the swap sends state 1 to 2:
    # (1/2) * (2^2 + 2^2) / 4 = 1
    assert abs(exch_form - 1.0) < 1e-12


def test_sigma_pushforward_shapes():
    mu = cs.bernoulli(0.5, 4, level=2)
    joint = cs.sigma_pushforward(mu, G4, [0, 1], (2,))
    assert joint.shape == (1 << 4,)
    assert abs(joint.sum() - 1.0) < 1e-12


def test_state_permutation_conserves_particles():
    perm = cs.state_permutation(G8, (3,))
    pops = cs.popcounts(8)
    assert np.array_equal(pops[perm], pops)
