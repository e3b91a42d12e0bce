"""Mass, centre density and blowup-rate diagnostics for the solution families."""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .errors import ConfigError, DomainError, QuadratureError
from .families import SolutionFamily, Variant, fields
from .scaling_ode import BlowupStatus, detect_blowup

COEFFICIENT_MODES = ("standard", "ball_volume")


def unit_ball_volume(N):
    return math.pi ** (N / 2) / math.gamma(N / 2 + 1)


def surface_coefficient(N: int, mode: str = "standard") -> float:
    """Constant turning the integral of a radial function over R^N into a radial one.

    ``"standard"`` is the surface area 2 pi^(N/2) / Gamma(N/2) of the unit
    sphere for N >= 2 and 1 for N = 1, where the radial variable only covers
    the half-line.  ``"ball_volume"`` uses N (N-2) V(N) for N >= 3, with V the unit
    ball volume; the two agree for N <= 3 and differ from N = 4 on.
    """
    if int(N) != N or N < 1:
        raise ConfigError(f"N must be a positive integer, got {N}")
    if mode not in COEFFICIENT_MODES:
        raise ConfigError(f"mode must be one of {COEFFICIENT_MODES}")
    N = int(N)
    if N == 1:
        return 1.0
    if N == 2:
        return 2 * math.pi
    if mode == "standard":
        return 2 * math.pi ** (N / 2) / math.gamma(N / 2)
    return N * (N - 2) * unit_ball_volume(N)


def compare_surface_coefficients(N: int) -> dict:
    std = surface_coefficient(N, "standard")
    ball = surface_coefficient(N, "ball_volume")
    return {
        "N": int(N),
        "standard": std,
        "ball_volume": ball,
        "agree": math.isclose(std, ball, rel_tol=1e-14),
    }


class MassKind(str, enum.Enum):
    FINITE = "finite"
    DIVERGENT = "divergent"
    TRUNCATED = "truncated"


@dataclass(frozen=True)
class MassResult:
    kind: MassKind
    value: float | None = None
    quad_error: float | None = None
    r_max: float | None = None
    message: str = ""

    def __post_init__(self):
        for name in ("value", "quad_error", "r_max"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, float(v))

    def to_dict(self):
        return {
            "kind": self.kind.value,
            "value": self.value,
            "quad_error": self.quad_error,
            "r_max": self.r_max,
            "message": self.message,
        }


def gaussian_stiffness(family: SolutionFamily) -> float:
    """Denominator D in y = lam x^2 / (2 D) + ... for exponential profiles."""
    if family.variant is Variant.PRESSURELESS_THETA1:
        return family.N * family.kappa
    if family.variant is Variant.PRESSURELESS_THETA_NE1:
        raise ValueError("theta != 1 profiles are not Gaussian")
    return family.K


def gaussian_moment_mass(family: SolutionFamily, mode: str = "standard") -> float:
    """Closed-form mass of an exponential-profile family with lam < 0.

    alpha(N) e^alpha * Gamma(N/2) / 2 * (2 D / |lam|)^(N/2); the scale factor
    cancels, so the value holds at every time.
    """
    if family.variant is Variant.SOLID_CORE_2D:
        raise ValueError("solid-core mass has no Gaussian-moment closed form")
    if family.lam >= 0:
        raise ValueError("Gaussian moment requires lam < 0")
    N = family.N
    g = -family.lam / (2 * gaussian_stiffness(family))
    return (
        surface_coefficient(N, mode)
        * math.exp(family.alpha)
        * 0.5
        * math.gamma(N / 2)
        * g ** (-N / 2)
    )


def _tail_model(family):
    """Return (divergent_reason, x_support_end, tail(X)) in similarity units.

    ``tail(X)`` bounds the integral of F(x) x^(N-1) over x > X.
    """
    N = family.N
    v = family.variant
    if family.exponential_profile:
        if family.lam >= 0:
            return "lam >= 0: the density does not decay and the mass is infinite", None, None
        g = -family.lam / (2 * gaussian_stiffness(family))
        power = N + (family.M0 if v is Variant.SOLID_CORE_2D else 0.0)
        s = power / 2
        pref = math.exp(family.alpha) * 0.5 * math.gamma(s) * g ** (-s)
        return None, None, lambda X: pref * special.gammaincc(s, g * X * X)

    th = family.theta
    c2 = 0.5 * (th - 1) * (-family.lam / (N * family.kappa * th))
    p = 1.0 / (th - 1)
    if c2 < 0:
        if p < 0:
            return "density is not integrable at the edge of its support", None, None
        return None, math.sqrt(family.alpha ** (th - 1) / -c2), None
    if c2 == 0:
        return "constant profile: the mass is infinite", None, None
    if p > 0:
        return "profile grows without bound: the mass is infinite", None, None
    q = 2 * p + N
    if q >= 0:
        return f"profile decays like x^{2 * p:.6g}, too slowly in {N} dimensions", None, None
    return None, None, lambda X: c2**p * X**q / -q


def _quad(func, lo, hi, quad_tol):
    value, err = integrate.quad(func, lo, hi, epsabs=0.0, epsrel=0.1 * quad_tol, limit=400)
    return value, err


def total_mass(
    family: SolutionFamily,
    t: float,
    quad_tol: float = 1e-10,
    r_max: float | None = None,
    mode: str = "standard",
    max_doublings: int = 200,
) -> MassResult:
    """Mass of ``family`` at time ``t``, or a divergence verdict.

    The radial integral is accumulated on [0, R] with R doubled until the
    analytic tail bound falls below quad_tol times the accumulated value.
    With ``r_max`` the partial mass on [0, r_max] is returned instead.
    """
    if quad_tol <= 0:
        raise ConfigError("quad_tol must be positive")
    a, _ = family.trajectory.evaluate(float(t))
    N = family.N
    coeff = surface_coefficient(N, mode)
    r_lo = family.r0 if family.variant is Variant.SOLID_CORE_2D else 0.0

    def integrand(s):
        return float(fields(family, t, s)[0]) * s ** (N - 1)

    def integrand_safe(s):
        return integrand(s) if s > r_lo else 0.0

    reason, x_end, tail = _tail_model(family)

    if r_max is not None:
        if r_max <= r_lo:
            raise DomainError(f"r_max must exceed {r_lo!r}")
        hi = r_max if x_end is None else min(r_max, x_end * a)
        value, err = _quad(integrand_safe, r_lo, hi, quad_tol)
        return MassResult(MassKind.TRUNCATED, coeff * value, coeff * err, float(r_max),
                          "partial mass on [0, r_max]")

    if reason is not None:
        return MassResult(MassKind.DIVERGENT, message=reason)

    if x_end is not None:
        value, err = _quad(integrand_safe, r_lo, x_end * a, quad_tol)
        if err > quad_tol * abs(value):
            raise QuadratureError("quadrature did not converge", coeff * value, coeff * err)
        return MassResult(MassKind.FINITE, coeff * value, coeff * err,
                          message="compact support")

    R = max(r_lo, 0.0) + a
    value, err = _quad(integrand_safe, r_lo, R, quad_tol)
    for _ in range(max_doublings):
        bound = tail(R / a)
        if bound < quad_tol * abs(value) and err <= quad_tol * abs(value):
            return MassResult(MassKind.FINITE, coeff * value, coeff * (err + bound),
                              message=f"integrated to r={R!r}, tail bound {float(coeff * bound)!r}")
        piece, piece_err = _quad(integrand_safe, R, 2 * R, quad_tol)
        value += piece
        err += piece_err
        R *= 2
    raise QuadratureError(
        f"tail bound still above tolerance at r={R!r}", coeff * value, coeff * (err + tail(R / a))
    )


def center_density(family: SolutionFamily, t):
    """rho(t, 0): e^alpha / a^N for exponential profiles, alpha / a^N for theta != 1."""
    if family.variant is Variant.SOLID_CORE_2D:
        raise DomainError("the centre lies inside the solid core")
    a, _ = family.trajectory.evaluate(t)
    F0 = math.exp(family.alpha) if family.exponential_profile else family.alpha
    return F0 / np.asarray(a) ** family.N if np.ndim(a) else F0 / a**family.N


class RateVerdict(str, enum.Enum):
    BOUNDED_BELOW = "bounded_below"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class BlowupRateEstimate:
    """Products rho(t, 0) (T* - t)^exponent at times approaching T*."""

    t_star: float | None
    blowup_exponent: float
    products: list = field(default_factory=list)
    verdict: RateVerdict = RateVerdict.INCONCLUSIVE
    sensitivity: dict = field(default_factory=dict)
    message: str = ""

    def to_dict(self):
        return {
            "t_star": self.t_star,
            "blowup_exponent": self.blowup_exponent,
            "verdict": self.verdict.value,
            "sensitivity": self.sensitivity,
            "message": self.message,
            "products": [[t, p] for t, p in self.products],
        }

    def products_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(("t", "product"))
        for t, p in self.products:
            writer.writerow((repr(t), repr(p)))
        return buf.getvalue()


def _verdict(products):
    p = np.asarray(products)
    if len(p) < 3 or not np.all(np.isfinite(p)):
        return RateVerdict.INCONCLUSIVE
    i_min = int(np.argmin(p))
    tail = p[i_min:]
    nondecreasing = np.all(np.diff(tail) >= -1e-12 * np.abs(tail[:-1]))
    if i_min < len(p) - 1 and nondecreasing and p[-1] > p[0]:
        return RateVerdict.BOUNDED_BELOW
    return RateVerdict.INCONCLUSIVE


def _resolved_until(family, level):
    """Latest time at which a(t) is still at least ``level`` (bisection on dense output)."""
    traj = family.trajectory
    lo, hi = 0.0, traj.t_reach
    if traj.evaluate(lo)[0] < level:
        return lo
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if traj.evaluate(mid)[0] >= level:
            lo = mid
        else:
            hi = mid
    return lo


def blowup_rate_estimate(
    family: SolutionFamily, exponent: float, n_samples: int = 40, tol: float = 1e-10
) -> BlowupRateEstimate:
    """Sample rho(t, 0) (T* - t)^exponent at times geometrically approaching T*.

    T* is the midpoint of the vanish bracket from :func:`detect_blowup`.  The
    verdict is ``BOUNDED_BELOW`` when the sequence is nondecreasing from its
    minimum on and ends above its first value.  The verdict obtained with T*
    replaced by either end of the bracket is reported as ``sensitivity``.
    """
    if exponent > family.N:
        raise ConfigError(f"exponent must not exceed N={family.N}")
    if n_samples < 3:
        raise ConfigError("need at least 3 samples")
    if family.variant is Variant.SOLID_CORE_2D:
        raise DomainError("the centre lies inside the solid core")
    rep = detect_blowup(family.ode, family.t_end, tol, family.rel_tol, family.abs_tol)
    if rep.status is not BlowupStatus.FINITE_TIME_VANISH:
        return BlowupRateEstimate(None, exponent, message=f"no finite-time vanish: {rep.message}")
    t_star = rep.t_star
    width = rep.width
    threshold = family.trajectory.vanish_threshold
    t_res = _resolved_until(family, 10 * threshold)
    gap_min = max(t_star - t_res, 100 * width)
    if gap_min >= t_star:
        return BlowupRateEstimate(t_star, exponent, message="blowup too close to t=0 to resolve")
    gaps = t_star * (gap_min / t_star) ** (np.arange(n_samples) / (n_samples - 1))
    times = t_star - gaps
    times[0] = 0.0
    rho0 = center_density(family, times)

    def products_for(t_ref):
        return rho0 * (t_ref - times) ** exponent

    prods = products_for(t_star)
    sensitivity = {
        "t_lower": _verdict(products_for(rep.t_lower)).value,
        "t_star": _verdict(prods).value,
        "t_upper": _verdict(products_for(rep.t_upper)).value,
    }
    return BlowupRateEstimate(
        t_star=t_star,
        blowup_exponent=float(exponent),
        products=[(float(t), float(p)) for t, p in zip(times, prods)],
        verdict=_verdict(prods),
        sensitivity=sensitivity,
        message=f"T* bracket [{rep.t_lower!r}, {rep.t_upper!r}]",
    )
