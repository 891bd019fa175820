import numpy as np
import pytest

from lyapcert.poly import Polynomial, parse_polynomial
from lyapcert.sos_cert import (DegreeScheduleError, SemialgebraicSystem,
                               SosSetupError, assemble_condition_i,
                               assemble_condition_ii, assemble_condition_iii,
                               gram_parameterize, gram_from_sos_terms,
                               solve_certificate)
from lyapcert.tangency import SemialgebraicSet


def cusp_system():
    S = SemialgebraicSet(
        [parse_polynomial("x1 - x2^2", 2), parse_polynomial("1 - x1", 2)],
        [(-0.5, 1.5), (-1.5, 1.5)])
    return SemialgebraicSystem(
        [parse_polynomial("-1*x1^2", 2), Polynomial.zero(2)], S)


def box_system(field):
    S = SemialgebraicSet(
        [parse_polynomial("1 - x1", 2), parse_polynomial("1 + x1", 2),
         parse_polynomial("1 - x2", 2), parse_polynomial("1 + x2", 2)],
        [(-1.05, 1.05), (-1.05, 1.05)])
    return SemialgebraicSystem(field, S)


V_UNIT = {(2, 0): 1.0, (0, 2): 1.0, (1, 0): 0.0, (0, 1): 0.0, (1, 1): 0.0}


# -- gram parameterization ----------------------------------------------------------

def test_gram_parameterize_homogeneous_square():
    basis, block = gram_parameterize(2, 2, homogeneous=True)
    assert basis == [(1, 0), (0, 1)]
    G = np.array([[1.0, -1.0], [-1.0, 1.0]])
    assert block.expand(G) == parse_polynomial("x1^2 - 2*x1*x2 + x2^2", 2)


def test_gram_identity_gives_sum_of_squared_monomials():
    basis, block = gram_parameterize(4, 2)
    G = np.eye(block.size)
    expected = Polynomial.zero(2)
    for mono in basis:
        expected = expected + Polynomial.monomial(mono) ** 2
    assert block.expand(G) == expected


def test_gram_expand_collect_roundtrip():
    rng = np.random.default_rng(61)
    basis, block = gram_parameterize(4, 2)
    for _ in range(50):
        Q = rng.uniform(-2, 2, size=(block.size, block.size))
        G = 0.5 * (Q + Q.T)
        p = block.expand(G)
        # re-collect: coefficient of each product monomial matches the pair sums
        for mono, pairs in block.pairs_by_monomial.items():
            acc = sum((1 if i == j else 2) * G[i, j] for i, j in pairs)
            assert abs(float(p.coefficient(mono)) - acc) <= 1e-12


def test_gram_odd_degree_rejected():
    with pytest.raises(SosSetupError):
        gram_parameterize(3, 2)


# -- condition (i) -------------------------------------------------------------------

def test_condition_i_halfspace_identity():
    S = SemialgebraicSet([parse_polynomial("1 - x1", 2)], [(-2, 2), (-2, 2)])
    system = SemialgebraicSystem([parse_polynomial("-1*x1", 2),
                                  parse_polynomial("-1*x2", 2)], S)
    eps = 1e-3
    eq = assemble_condition_i(system, 2, eps_pd=eps)
    sigma0 = eq.blocks["sigma_0"]
    grams = {
        "sigma_0": gram_from_sos_terms(sigma0, [(1 - eps, (1, 0)),
                                                (1 - eps, (0, 1))]),
        "sigma_1": np.zeros((eq.blocks["sigma_1"].size,) * 2),
    }
    assert eq.residual(grams, {"V": V_UNIT}) <= 1e-12


def test_condition_i_roundtrip_residual():
    eq = assemble_condition_i(cusp_system(), 2, eps_pd=1e-3)
    grams = {
        "sigma_0": gram_from_sos_terms(eq.blocks["sigma_0"],
                                       [(1 - 1e-3, (1, 0)), (1 - 1e-3, (0, 1))]),
        "sigma_1": np.zeros((eq.blocks["sigma_1"].size,) * 2),
        "sigma_2": np.zeros((eq.blocks["sigma_2"].size,) * 2),
    }
    assert eq.residual(grams, {"V": V_UNIT}) <= 1e-10


def test_condition_i_eps_two_infeasible_for_pinned_v():
    # with eps_pd = 2 and V fixed to x1^2 + x2^2 the left side is negative
    # definite, so no PSD multipliers can match it: at any feasible witness
    # the right side is a nonnegative combination while the left is < 0
    system = cusp_system()
    witness = (0.5, 0.0)
    lhs = 0.5 ** 2 - 2.0 * 0.5 ** 2
    assert lhs < 0
    assert all(g.evaluate_float(witness) >= 0 for g in system.S.generators)
    # and the eps = 1e-3 hand decomposition indeed fails the eps = 2 rows
    eq = assemble_condition_i(system, 2, eps_pd=2.0)
    grams = {
        "sigma_0": gram_from_sos_terms(eq.blocks["sigma_0"],
                                       [(1 - 1e-3, (1, 0)), (1 - 1e-3, (0, 1))]),
        "sigma_1": np.zeros((eq.blocks["sigma_1"].size,) * 2),
        "sigma_2": np.zeros((eq.blocks["sigma_2"].size,) * 2),
    }
    assert eq.residual(grams, {"V": V_UNIT}) > 0.5


def test_condition_i_degree_schedule_guard():
    S = SemialgebraicSet([parse_polynomial("1 - x1^4", 2)],
                         [(-1.1, 1.1), (-1.1, 1.1)])
    system = SemialgebraicSystem([parse_polynomial("-1*x1", 2),
                                  parse_polynomial("-1*x2", 2)], S)
    with pytest.raises(DegreeScheduleError):
        assemble_condition_i(system, 2)


# -- condition (ii) ------------------------------------------------------------------

def test_condition_ii_cusp_hand_decomposition():
    eq = assemble_condition_ii(cusp_system(), 2)
    grams = {
        "chi_0": gram_from_sos_terms(eq.blocks["chi_0"], [(2.0, (1, 1))]),
        "chi_1": gram_from_sos_terms(eq.blocks["chi_1"], [(2.0, (1, 0))]),
        "chi_2": np.zeros((eq.blocks["chi_2"].size,) * 2),
    }
    assert eq.residual(grams, {"V": V_UNIT}) <= 1e-10


def test_condition_ii_box_linear_field():
    system = box_system([parse_polynomial("-1*x1", 2),
                         parse_polynomial("-1*x2", 2)])
    eq = assemble_condition_ii(system, 2)
    grams = {"chi_0": gram_from_sos_terms(eq.blocks["chi_0"],
                                          [(2.0, (1, 0)), (2.0, (0, 1))])}
    for i in range(1, 5):
        grams[f"chi_{i}"] = np.zeros((eq.blocks[f"chi_{i}"].size,) * 2)
    assert eq.residual(grams, {"V": V_UNIT}) <= 1e-12


def test_condition_ii_with_power_margin():
    from lyapcert.poly import norm_squared
    eps = 1e-3
    system = box_system([parse_polynomial("-1*x1", 2),
                         parse_polynomial("-1*x2", 2)])
    eq = assemble_condition_ii(system, 2,
                               decrease_margin=norm_squared(2).scale(eps))
    grams = {"chi_0": gram_from_sos_terms(eq.blocks["chi_0"],
                                          [(2.0 - eps, (1, 0)),
                                           (2.0 - eps, (0, 1))])}
    for i in range(1, 5):
        grams[f"chi_{i}"] = np.zeros((eq.blocks[f"chi_{i}"].size,) * 2)
    assert eq.residual(grams, {"V": V_UNIT}) <= 1e-12


# -- condition (iii) -----------------------------------------------------------------

def test_condition_iii_parabola_face():
    eq = assemble_condition_iii(cusp_system(), 2, 1)
    grams = {
        "chi_1_0": gram_from_sos_terms(eq.blocks["chi_1_0"], [(2.0, (0, 1))]),
        "chi_1_2": np.zeros((eq.blocks["chi_1_2"].size,) * 2),
    }
    frees = {"V": V_UNIT, "phi_1": {(0, 0): -2.0}}
    assert eq.residual(grams, frees) <= 1e-10


def test_condition_iii_line_face():
    eq = assemble_condition_iii(cusp_system(), 2, 2)
    grams = {
        "chi_2_0": gram_from_sos_terms(eq.blocks["chi_2_0"], [(2.0, (0, 1))]),
        "chi_2_1": gram_from_sos_terms(eq.blocks["chi_2_1"], [(2.0, (0, 0))]),
    }
    frees = {"V": V_UNIT, "phi_2": {(0, 0): 0.0}}
    assert eq.residual(grams, frees) <= 1e-10


def test_condition_iii_unit_ball():
    S = SemialgebraicSet([parse_polynomial("1 - x1^2 - x2^2", 2)],
                         [(-1.1, 1.1), (-1.1, 1.1)])
    system = SemialgebraicSystem([parse_polynomial("-1*x1^3", 2),
                                  parse_polynomial("-1*x2^3", 2)], S)
    eq = assemble_condition_iii(system, 2, 1)
    grams = {"chi_1_0": gram_from_sos_terms(eq.blocks["chi_1_0"],
                                            [(4.0, (1, 0)), (4.0, (0, 1))])}
    frees = {"V": V_UNIT,
             "phi_1": {m: 0.0 for m in eq.free_groups["phi_1"]}}
    assert eq.residual(grams, frees) <= 1e-12


# -- full solves ---------------------------------------------------------------------

def test_sdp_tier_finds_certificate():
    outcome = solve_certificate(cusp_system(), 2, tier="sdp")
    assert outcome.status == "certificate"
    cert = outcome.certificate
    assert cert.margin >= -1e-8
    assert cert.worst_residual() <= 1e-6
    assert cert.worst_gram_eigenvalue() >= -1e-7
    assert float(cert.V.evaluate((0, 0))) == 0.0
    assert any("weak decrease" in f for f in cert.flags)


def test_dsos_tier_also_feasible():
    outcome = solve_certificate(cusp_system(), 2, tier="dsos")
    assert outcome.status == "certificate"
    cert = outcome.certificate
    assert cert.tier == "dsos"
    # every dsos gram also passes the sdp-tier eigenvalue test
    assert cert.worst_gram_eigenvalue() >= -1e-7


def test_unstable_field_infeasible_on_box():
    system = box_system([parse_polynomial("x1", 2), parse_polynomial("x2", 2)])
    for deg in (2, 4):
        outcome = solve_certificate(system, deg, tier="sdp")
        assert outcome.status == "infeasible"
        assert outcome.margin is not None and outcome.margin < -1e-8


def test_scale_covariance_of_generators():
    base = cusp_system()
    scaled_S = SemialgebraicSet([g.scale(2) for g in base.S.generators],
                                base.S.box)
    scaled = SemialgebraicSystem(base.f, scaled_S)
    a = solve_certificate(base, 2, tier="sdp")
    b = solve_certificate(scaled, 2, tier="sdp")
    assert a.status == b.status == "certificate"


def test_putinar_monotonicity_in_degree():
    a = solve_certificate(cusp_system(), 2, tier="sdp")
    b = solve_certificate(cusp_system(), 4, tier="sdp")
    assert a.status == "certificate"
    assert b.status == "certificate"


def test_certificate_multipliers_reproduce_identities():
    outcome = solve_certificate(cusp_system(), 2, tier="sdp")
    cert = outcome.certificate
    system = cusp_system()
    # condition (ii) re-derived from the expanded multiplier polynomials
    lhs = Polynomial.zero(2)
    for grad_i, f_i in zip(cert.V.gradient(), system.f):
        lhs = lhs + grad_i * f_i
    lhs = -lhs
    rhs = cert.multipliers["chi_0"].polynomial
    for i, g in enumerate(system.S.generators, start=1):
        rhs = rhs + cert.multipliers[f"chi_{i}"].polynomial * g
    diff = lhs - rhs
    worst = max((abs(float(c)) for c in diff.terms.values()), default=0.0)
    assert worst <= 1e-6
