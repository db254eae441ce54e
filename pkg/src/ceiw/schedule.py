"""Scalar parameters of the iteration and the relations between them.

All derived quantities are pure functions of (lambda0, b, alpha, q, T,
constants), so rebuilding a schedule from its own stored inputs reproduces
every field bit-identically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .errors import DomainError

# Truncation threshold for the trace-shift tail sum.
_TAIL_REL = 1e-15

# Largest exponent for which lambda0**(b**q) is representable in a float.
_LOG_MAX = math.log(1.7976931348623157e308)


@dataclass(frozen=True)
class Constants:
    """User-declared constants of the construction.

    None of these is derivable from first principles at finite scale; the
    verify module measures whether the declared values suffice and reports
    violations instead of asserting them.
    """

    M_big: float = 2.0       # correction-size constant, > 1
    M_under: float = 4.0     # momentum sup-norm ceiling, >= 2
    C_rho_dot: float = 1.0   # drift-gradient constant
    eta: float = 0.5         # tube-radius / separation constant

    def __post_init__(self):
        if not (self.M_big > 1 and self.M_under >= 2 and self.C_rho_dot > 0
                and self.eta > 0):
            raise DomainError(
                "constants must satisfy M_big>1, M_under>=2, C_rho_dot>0, eta>0")


def _lambda_at(lambda0: float, b: float, j: int) -> int:
    """ceil(lambda0**(b**j)) as an exact integer."""
    ex = (b ** j) * math.log(lambda0)
    if ex > _LOG_MAX:
        raise OverflowError(
            f"lambda0**(b**{j}) exceeds representable floating-point range")
    return math.ceil(lambda0 ** (b ** j))


def _delta_at(lambda0: float, b: float, alpha: float, j: int) -> float:
    """lambda_j**(-2*alpha); falls back to log-space once lambda_j overflows.

    Beyond the float range the ceiling correction is below 1e-300 relative,
    far inside the tail-truncation threshold.
    """
    ex = (b ** j) * math.log(lambda0)
    if ex > _LOG_MAX:
        return math.exp(-2.0 * alpha * ex)
    return float(_lambda_at(lambda0, b, j)) ** (-2.0 * alpha)


def trace_shift(lambda0: float, b: float, alpha: float, q: int) -> float:
    """Tail sum of the amplitude ladder from q+1 on, truncated at 1e-15 relative."""
    total = 0.0
    j = q + 1
    while True:
        d = _delta_at(lambda0, b, alpha, j)
        total += d
        # The ladder decays super-geometrically; once a term is below the
        # relative threshold the remaining tail is dominated by it.
        if d < _TAIL_REL * total or d == 0.0:
            return total
        j += 1
        if j > q + 10_000:  # unreachable for admissible (lambda0, b, alpha)
            raise DomainError("trace-shift tail sum failed to converge")


@dataclass(frozen=True)
class ParameterSchedule:
    lambda0: float
    b: float
    alpha: float
    T: float
    q: int
    constants: Constants
    # Derived fields.
    lambda_q: int
    lambda_qp1: int
    delta_q: float
    delta_qp1: float
    delta_qp2: float
    c_q: float
    tau_q: float
    tau_qm1: float
    mu_q: float
    ell: float
    ell_t: float
    gamma: float
    n0: int

    @property
    def mu_inv(self) -> int:
        """1/mu_q as the exact integer multiple of 3 it is built from."""
        return int(round(1.0 / self.mu_q))

    @property
    def c_qp1(self) -> float:
        return self.c_q - self.delta_qp1

    def next_step(self) -> "ParameterSchedule":
        """Schedule for step q+1 with the same base parameters."""
        return build_schedule(self.lambda0, self.b, self.alpha, self.q + 1,
                              constants=self.constants, T=self.T)


def build_schedule(lambda0: float, b: float, alpha: float, q: int,
                   constants: Constants | None = None,
                   T: float = 1.0) -> ParameterSchedule:
    """Build the full scalar-parameter set for inductive step q.

    Raises DomainError for parameters outside the admissible ranges and
    OverflowError when the frequency ladder exceeds float range at step q.
    """
    if not (0.0 < alpha < 1.0 / 7.0):
        raise DomainError(f"alpha={alpha} outside (0, 1/7)")
    if not (1.0 < b < 3.0):
        raise DomainError(f"b={b} outside (1, 3)")
    if not lambda0 > 1.0:
        raise DomainError(f"lambda0={lambda0} must exceed 1")
    if q < 0 or int(q) != q:
        raise DomainError(f"q={q} must be a nonnegative integer")
    if not T > 0:
        raise DomainError(f"T={T} must be positive")
    cst = constants if constants is not None else Constants()

    q = int(q)
    lam_q = _lambda_at(lambda0, b, q)
    lam_qp1 = _lambda_at(lambda0, b, q + 1)
    d_q = _delta_at(lambda0, b, alpha, q)
    d_qp1 = _delta_at(lambda0, b, alpha, q + 1)
    d_qp2 = _delta_at(lambda0, b, alpha, q + 2)
    gamma = (b - 1.0) ** 2

    lam_half = math.sqrt(lam_q) * math.sqrt(lam_qp1)
    dd_quarter = (d_q * d_qp1) ** 0.25

    tau_q = 1.0 / (40.0 * math.pi * cst.C_rho_dot * cst.M_big / cst.eta
                   * lam_half * dd_quarter)
    if q == 0:
        tau_qm1 = 1.0 / (lambda0 * math.sqrt(_delta_at(lambda0, b, alpha, 0)))
    else:
        lam_qm1 = _lambda_at(lambda0, b, q - 1)
        d_qm1 = _delta_at(lambda0, b, alpha, q - 1)
        tau_qm1 = 1.0 / (40.0 * math.pi * cst.C_rho_dot * cst.M_big / cst.eta
                         * math.sqrt(lam_qm1) * math.sqrt(lam_q)
                         * (d_qm1 * d_q) ** 0.25)

    mu_inv = 3 * math.ceil(lam_half * (d_q / d_qp1) ** 0.25 / 3.0)
    if mu_inv > lam_qp1:
        raise DomainError(
            f"mu_q^-1={mu_inv} exceeds lambda_(q+1)={lam_qp1}; "
            "schedule invariant violated")

    ell = lam_q ** (-0.75) * lam_qp1 ** (-0.25) * (d_qp1 / d_q) ** 0.375
    ell_t = 1.0 / (lam_q ** (0.5 - 3.0 * gamma) * math.sqrt(lam_qp1)
                   * dd_quarter)

    n0 = math.ceil(2.0 * b * (2.0 + alpha) / ((b - 1.0) * (1.0 - alpha)))

    return ParameterSchedule(
        lambda0=float(lambda0), b=float(b), alpha=float(alpha), T=float(T),
        q=q, constants=cst,
        lambda_q=lam_q, lambda_qp1=lam_qp1,
        delta_q=d_q, delta_qp1=d_qp1, delta_qp2=d_qp2,
        c_q=trace_shift(lambda0, b, alpha, q),
        tau_q=tau_q, tau_qm1=tau_qm1, mu_q=1.0 / mu_inv,
        ell=ell, ell_t=ell_t, gamma=gamma, n0=n0,
    )


@dataclass(frozen=True)
class Relation:
    name: str
    value: float
    bound: float

    @property
    def passed(self) -> bool:
        return self.value <= self.bound


@dataclass(frozen=True)
class RelationReport:
    """Outcome of the three scale-separation relations.

    Failures are data, not errors: desk-scale runs routinely violate the
    first relation and may proceed in demonstration mode.
    """

    relations: tuple[Relation, Relation, Relation]
    grad_bound: float

    @property
    def all_pass(self) -> bool:
        return all(r.passed for r in self.relations)

    def as_dict(self) -> dict:
        return {
            "grad_bound": self.grad_bound,
            "relations": [
                {"name": r.name, "value": r.value, "bound": r.bound,
                 "passed": r.passed}
                for r in self.relations
            ],
            "all_pass": self.all_pass,
        }


def check_parameter_relations(s: ParameterSchedule,
                              grad_bound: float) -> RelationReport:
    """Evaluate the separation relations against a measured drift-gradient bound.

    grad_bound is the measured sup norm of grad(m_q/rho). Never raises;
    each relation reports (value, bound, passed).
    """
    r1 = Relation("mu_inv_much_less_than_lambda_next",
                  float(s.mu_inv), s.lambda_qp1 / 10.0)
    r2 = Relation("tau_times_grad_bound",
                  s.tau_q * grad_bound, 0.1)
    r3 = Relation("mu_tau_grad_vs_tube_margin",
                  s.mu_q * s.tau_q * grad_bound,
                  s.constants.eta / (10.0 * math.pi * s.lambda_qp1))
    return RelationReport(relations=(r1, r2, r3), grad_bound=float(grad_bound))


def with_constants(s: ParameterSchedule, **kw) -> ParameterSchedule:
    """Rebuild the schedule with some constants replaced."""
    return build_schedule(s.lambda0, s.b, s.alpha, s.q,
                          constants=replace(s.constants, **kw), T=s.T)
