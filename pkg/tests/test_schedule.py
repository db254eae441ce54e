import math

import pytest

from ceiw.errors import DomainError
from ceiw.schedule import (Constants, build_schedule, check_parameter_relations,
                           trace_shift)

# High-precision oracles (mpmath, 40 digits):
#   16**(-1/7)  = 0.6729500963161780659714163018754709521831
#   256**(-1/7) = 0.4528618321319533357970864366075515938502
#   1/(4*sqrt(4**(-1/7))) = 0.2760223784184530844123763469058361803313
DELTA1_ORACLE = 0.6729500963161780659714163018754709521831
DELTA2_ORACLE = 0.4528618321319533357970864366075515938502
TAU_M1_ORACLE = 0.2760223784184530844123763469058361803313


def test_frequency_ladder_direct_evaluation():
    s = build_schedule(4, 2, 1 / 14, 1)
    assert s.lambda_q == 16
    assert s.lambda_qp1 == 256
    assert s.delta_q == pytest.approx(DELTA1_ORACLE, rel=1e-15)
    assert s.delta_qp1 == pytest.approx(DELTA2_ORACLE, rel=1e-15)


def test_tau_minus_one_closed_form():
    s = build_schedule(4, 2, 1 / 14, 0)
    assert s.tau_qm1 == pytest.approx(TAU_M1_ORACLE, rel=1e-15)


def test_amplitude_frequency_identity():
    # delta_q * lambda_q^(2 alpha) = 1 by construction
    for q in range(4):
        s = build_schedule(3.0, 1.5, 0.1, q)
        assert abs(s.delta_q * s.lambda_q ** (2 * 0.1) - 1) < 1e-14
        assert abs(s.delta_qp1 * s.lambda_qp1 ** (2 * 0.1) - 1) < 1e-14


def test_rebuild_bit_identical():
    s = build_schedule(4, 1.5, 1 / 14, 2, constants=Constants(eta=0.7), T=2.5)
    t = build_schedule(s.lambda0, s.b, s.alpha, s.q, constants=s.constants,
                       T=s.T)
    assert s == t


def test_tau_strictly_decreasing():
    prev = None
    for q in range(6):
        s = build_schedule(4, 1.5, 1 / 14, q)
        if prev is not None:
            assert s.tau_q < prev
        prev = s.tau_q


def test_mu_inverse_structure():
    for (l0, b) in [(2, 1.5), (4, 1.5), (4, 2)]:
        s = build_schedule(l0, b, 1 / 14, 0)
        assert s.mu_inv % 3 == 0 and s.mu_inv > 0
        assert s.mu_inv <= s.lambda_qp1
        assert s.mu_q == 1.0 / s.mu_inv


def test_trace_shift_tail():
    # brute-force partial sum with generous depth as oracle
    l0, b, a = 4.0, 2.0, 1 / 14
    brute = sum(math.ceil(l0 ** (b ** j)) ** (-2 * a) for j in range(1, 40)
                if (b ** j) * math.log(l0) < 700)
    s = build_schedule(l0, b, a, 0)
    assert s.c_q == pytest.approx(brute, rel=1e-13)
    assert s.c_qp1 == pytest.approx(s.c_q - s.delta_qp1, rel=1e-13)
    assert trace_shift(l0, b, a, 1) == pytest.approx(s.c_q - s.delta_qp1,
                                                     rel=1e-12)


def test_domain_errors():
    with pytest.raises(DomainError):
        build_schedule(4, 2, 0.2, 0)          # alpha outside (0, 1/7)
    with pytest.raises(DomainError):
        build_schedule(4, 0.9, 1 / 14, 0)     # b <= 1
    with pytest.raises(OverflowError):
        build_schedule(4, 2, 1 / 14, 12)      # 4**(2**12) overflows


def test_relations_zero_drift_passes_2_and_3():
    s = build_schedule(4, 2, 1 / 14, 0)
    rep = check_parameter_relations(s, 0.0)
    assert rep.relations[1].passed and rep.relations[2].passed
    # relation values are data either way
    assert rep.relations[0].value == float(s.mu_inv)


def test_relation_two_fails_on_large_drift():
    s = build_schedule(4, 2, 1 / 14, 0)
    gb = 0.2 / s.tau_q
    rep = check_parameter_relations(s, gb)
    assert rep.relations[1].value == pytest.approx(0.2)
    assert not rep.relations[1].passed


def test_relation_report_desk_values():
    s = build_schedule(4, 2, 1 / 14, 0)
    gb = 3.7
    rep = check_parameter_relations(s, gb)
    assert rep.relations[1].value == pytest.approx(s.tau_q * gb, rel=1e-14)
    assert rep.relations[2].value == pytest.approx(s.mu_q * s.tau_q * gb,
                                                   rel=1e-14)
    assert rep.relations[2].bound == pytest.approx(
        s.constants.eta / (10 * math.pi * s.lambda_qp1), rel=1e-14)
    d = rep.as_dict()
    assert {r["name"] for r in d["relations"]} == {
        "mu_inv_much_less_than_lambda_next", "tau_times_grad_bound",
        "mu_tau_grad_vs_tube_margin"}


def test_closed_forms_match_definitions():
    s = build_schedule(4, 1.5, 1 / 14, 1)
    lam, lamp = s.lambda_q, s.lambda_qp1
    dq, dqp = s.delta_q, s.delta_qp1
    c = s.constants
    tau = 1 / (40 * math.pi * c.C_rho_dot * c.M_big / c.eta
               * math.sqrt(lam * lamp) * (dq * dqp) ** 0.25)
    ell = lam ** -0.75 * lamp ** -0.25 * (dqp / dq) ** 0.375
    ell_t = 1 / (lam ** (0.5 - 3 * s.gamma) * math.sqrt(lamp)
                 * (dq * dqp) ** 0.25)
    assert s.tau_q == pytest.approx(tau, rel=1e-14)
    assert s.ell == pytest.approx(ell, rel=1e-14)
    assert s.ell_t == pytest.approx(ell_t, rel=1e-14)
    assert s.gamma == (1.5 - 1) ** 2
