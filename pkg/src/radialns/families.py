"""Closed-form self-similar solution families.

Every family has the form

    rho(t, r) = F(r / a(t)) / a(t)**N,    u(t, r) = a'(t) / a(t) * r

where F is ``exp(y)`` for the isothermal and theta = 1 pressureless families
and ``y`` itself (cut off to zero outside its support) for theta != 1.  The
scale factor a(t) comes from the family's :class:`ScalingODE`, integrated once
at construction; fields are read from its dense output.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError, IntegrationError
from .scaling_ode import Kind, ScalingODE, Status, Trajectory, integrate

#: Value returned by :func:`profile_y` where a theta != 1 profile has no real value.
OUTSIDE_SUPPORT = math.nan


class Variant(str, enum.Enum):
    ISOTHERMAL_NS = "isothermal_ns"
    ISOTHERMAL_DAMPED = "isothermal_damped"
    SOLID_CORE_2D = "solid_core_2d"
    PRESSURELESS_THETA1 = "pressureless_theta1"
    PRESSURELESS_THETA_NE1 = "pressureless_theta_ne1"


ISOTHERMAL_VARIANTS = (Variant.ISOTHERMAL_NS, Variant.ISOTHERMAL_DAMPED, Variant.SOLID_CORE_2D)


def separable_profile(x, n, xi, alpha):
    """Solution of y' y**n = xi x with y(0) = alpha > 0 and n != -1.

    Returns ``(0.5 (n+1) xi x**2 + alpha**(n+1)) ** (1/(n+1))`` on the real
    branch and NaN where the radicand leaves the domain of that branch.
    """
    if n == -1:
        raise ValueError("n = -1 is excluded")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    x = np.asarray(x, dtype=float)
    m = n + 1.0
    radicand = 0.5 * m * xi * x * x + alpha**m
    p = 1.0 / m
    if p > 0:
        inside = radicand >= 0
    else:
        inside = radicand > 0
    with np.errstate(invalid="ignore", divide="ignore"):
        y = np.where(inside, np.abs(radicand) ** p, np.nan)
    # An odd integer root extends to negative radicands; keep that branch
    # so the theta = 2 profile can go negative and be cut off by the caller.
    if float(p).is_integer() and int(p) % 2 == 1:
        y = radicand**p
    return y if y.ndim else float(y)


@dataclass(frozen=True)
class FieldSample:
    t: float
    r: float
    rho: float
    u: float


@dataclass(frozen=True)
class SolutionFamily:
    """One member of a closed-form family together with its integrated scale factor.

    ``lam`` and ``alpha`` are the profile constants; ``beta`` is the damping
    coefficient.  ``nu`` never enters the formulas: the viscous operator
    vanishes on u proportional to r, and the residual module checks that.
    """

    variant: Variant
    N: int
    lam: float
    alpha: float
    a0: float
    a1: float
    K: float = 1.0
    kappa: float = 1.0
    theta: float = 1.0
    beta: float = 0.0
    nu: float = 0.0
    M0: float = 0.0
    r0: float = 0.0
    t_end: float = 10.0
    rel_tol: float = 1e-12
    abs_tol: float = 1e-20
    ode: ScalingODE = field(init=False, repr=False)
    trajectory: Trajectory = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        try:
            object.__setattr__(self, "variant", Variant(self.variant))
        except ValueError as exc:
            raise ConfigError(f"unknown family variant {self.variant!r}") from exc
        if int(self.N) != self.N or self.N < 1:
            raise ConfigError(f"N must be a positive integer, got {self.N}")
        object.__setattr__(self, "N", int(self.N))
        for name in ("lam", "alpha", "a0", "a1", "K", "kappa", "theta", "beta",
                     "nu", "M0", "r0", "t_end"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ConfigError(f"{name} must be finite")
            object.__setattr__(self, name, value)
        self._validate()
        object.__setattr__(self, "ode", self._make_ode())
        traj = integrate(self.ode, self.t_end, self.rel_tol, self.abs_tol)
        if traj.status is Status.STEP_FAILURE:
            raise IntegrationError(traj.message)
        object.__setattr__(self, "trajectory", traj)

    def _validate(self):
        v = self.variant
        if self.nu < 0 or self.beta < 0:
            raise ConfigError("nu and beta must be non-negative")
        if v in ISOTHERMAL_VARIANTS and self.K <= 0:
            raise ConfigError("K must be positive")
        if v is Variant.ISOTHERMAL_NS and self.beta != 0:
            raise ConfigError("isothermal_ns is undamped; use isothermal_damped for beta > 0")
        if v is Variant.SOLID_CORE_2D:
            if self.N != 2:
                raise ConfigError("solid_core_2d requires N = 2")
            if self.M0 <= 0 or self.r0 <= 0:
                raise ConfigError("solid_core_2d requires M0 > 0 and r0 > 0")
            if not self.alpha > -self.lam / (2 * self.K):
                raise ConfigError("solid_core_2d requires alpha > -lam / (2K)")
        if v in (Variant.PRESSURELESS_THETA1, Variant.PRESSURELESS_THETA_NE1) and self.kappa <= 0:
            raise ConfigError("kappa must be positive")
        if v is Variant.PRESSURELESS_THETA1:
            if self.theta != 1:
                raise ConfigError("pressureless_theta1 requires theta = 1")
            if self.beta != 0:
                raise ConfigError("pressureless_theta1 is undamped")
        if v is Variant.PRESSURELESS_THETA_NE1:
            if self.theta <= 0 or self.theta == 1:
                raise ConfigError("pressureless_theta_ne1 requires theta > 0, theta != 1")
            if self.alpha <= 0:
                raise ConfigError("pressureless_theta_ne1 requires alpha > 0")

    def _make_ode(self):
        v = self.variant
        if v is Variant.ISOTHERMAL_NS:
            return ScalingODE(Kind.CLASSIC, self.lam, self.a0, self.a1)
        if v in (Variant.ISOTHERMAL_DAMPED, Variant.SOLID_CORE_2D):
            return ScalingODE(Kind.DAMPED, self.lam, self.a0, self.a1, beta=self.beta)
        if v is Variant.PRESSURELESS_THETA1:
            return ScalingODE(Kind.PRESSURELESS_THETA1, self.lam, self.a0, self.a1)
        return ScalingODE(
            Kind.GENERAL_DAMPED, self.lam, self.a0, self.a1,
            beta=self.beta, s_exponent=self.s_exponent,
        )

    @property
    def s_exponent(self):
        """N theta - N + 2, the power of a in the theta != 1 scale-factor ODE."""
        return self.N * self.theta - self.N + 2

    @property
    def exponential_profile(self):
        return self.variant is not Variant.PRESSURELESS_THETA_NE1

    @property
    def t_reach(self):
        return self.trajectory.t_reach

    def sampler(self, corruption=None):
        """Return ``f(t, r) -> (rho, u)`` for the residual module.

        ``corruption`` builds deliberately wrong fields for negative controls:
        ``"exponent"`` divides the density by a**(N+1) instead of a**N and
        ``"exp_profile"`` uses exp(y) in place of y for theta != 1.
        """
        if corruption not in (None, "exponent", "exp_profile"):
            raise ValueError(f"unknown corruption {corruption!r}")
        if corruption == "exp_profile" and self.exponential_profile:
            raise ValueError("exp_profile corruption applies to theta != 1 only")

        def sample(t, r):
            rho, u, _ = fields(self, t, r, corruption=corruption)
            return rho, u

        return sample


def isothermal_ns(N, K, lam, alpha, a0, a1, nu=0.0, **kw):
    return SolutionFamily(Variant.ISOTHERMAL_NS, N, lam, alpha, a0, a1, K=K, nu=nu, **kw)


def isothermal_damped(N, K, lam, alpha, a0, a1, beta, nu=0.0, **kw):
    return SolutionFamily(
        Variant.ISOTHERMAL_DAMPED, N, lam, alpha, a0, a1, K=K, beta=beta, nu=nu, **kw
    )


def solid_core_2d(K, lam, alpha, a0, a1, M0, r0, beta=0.0, nu=0.0, **kw):
    return SolutionFamily(
        Variant.SOLID_CORE_2D, 2, lam, alpha, a0, a1, K=K, beta=beta, nu=nu, M0=M0, r0=r0, **kw
    )


def pressureless_theta1(N, kappa, lam, alpha, a0, a1, **kw):
    return SolutionFamily(Variant.PRESSURELESS_THETA1, N, lam, alpha, a0, a1, kappa=kappa, **kw)


def pressureless_theta(N, kappa, theta, lam, alpha, a0, a1, beta=0.0, **kw):
    return SolutionFamily(
        Variant.PRESSURELESS_THETA_NE1, N, lam, alpha, a0, a1,
        kappa=kappa, theta=theta, beta=beta, **kw,
    )


def profile_radicand(family: SolutionFamily, x):
    """theta != 1 only: 0.5 (theta-1) (-lam/(N kappa theta)) x**2 + alpha**(theta-1)."""
    th = family.theta
    x = np.asarray(x, dtype=float)
    return 0.5 * (th - 1) * (-family.lam / (family.N * family.kappa * th)) * x * x + family.alpha ** (th - 1)


def profile_y(family: SolutionFamily, x):
    """Profile y(x) of the family; NaN marks points outside a theta != 1 support."""
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0):
        raise DomainError("profile argument must be non-negative")
    v = family.variant
    if v in (Variant.ISOTHERMAL_NS, Variant.ISOTHERMAL_DAMPED):
        y = family.lam / (2 * family.K) * xa * xa + family.alpha
    elif v is Variant.SOLID_CORE_2D:
        if np.any(xa <= 0):
            raise DomainError("solid-core profile requires x > 0")
        y = family.lam / (2 * family.K) * xa * xa + family.M0 * np.log(xa) + family.alpha
    elif v is Variant.PRESSURELESS_THETA1:
        y = family.lam / (2 * family.N * family.kappa) * xa * xa + family.alpha
    else:
        xi = -family.lam / (family.N * family.kappa * family.theta)
        y = separable_profile(xa, family.theta - 2, xi, family.alpha)
    return float(y) if np.ndim(y) == 0 else y


def support_mask(family: SolutionFamily, x):
    """True where the density is positive (always True for exponential profiles)."""
    if family.exponential_profile:
        return np.ones(np.shape(x), dtype=bool)
    y = profile_y(family, x)
    return np.asarray(np.isfinite(y) & (np.asarray(y) >= 0))


def fields(family: SolutionFamily, t, r, corruption=None):
    """Vectorised (rho, u, support) at broadcastable arrays ``t`` and ``r``."""
    t, r = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(r, dtype=float))
    if np.any(r < 0):
        raise DomainError("r must be non-negative")
    if family.variant is Variant.SOLID_CORE_2D and np.any(r <= family.r0):
        bad = float(np.min(r))
        raise DomainError(f"solid-core fields are defined for r > r0={family.r0!r}, got r={bad!r}")
    a, adot = family.trajectory.evaluate(t)
    x = r / a
    N = family.N
    power = N + 1 if corruption == "exponent" else N
    y = np.asarray(profile_y(family, x))
    if family.exponential_profile:
        support = np.ones(y.shape, dtype=bool)
        F = np.exp(y)
    else:
        support = np.isfinite(y) & (np.nan_to_num(y, nan=-1.0) >= 0)
        inner = np.where(support, y, 0.0)
        F = np.where(support, np.exp(inner) if corruption == "exp_profile" else inner, 0.0)
    rho = F / a**power
    u = adot / a * r
    if rho.ndim == 0:
        return float(rho), float(u), bool(support)
    return rho, u, support


def eval_fields(family: SolutionFamily, t: float, r: float) -> FieldSample:
    rho, u, _ = fields(family, float(t), float(r))
    return FieldSample(float(t), float(r), rho, u)


def velocity_is_linear_check(family: SolutionFamily, t: float, r: float, c: float) -> bool:
    if c <= 0:
        raise ValueError("c must be positive")
    _, u = fields(family, t, r)[:2]
    _, uc = fields(family, t, c * r)[:2]
    return abs(uc - c * u) <= 1e-12 * (1 + abs(u))


PARAMETER_NAMES = ("N", "lam", "alpha", "a0", "a1", "K", "kappa", "theta", "beta",
                   "nu", "M0", "r0", "t_end", "rel_tol", "abs_tol")


def family_to_dict(family: SolutionFamily) -> dict:
    out = {"variant": family.variant.value}
    for name in PARAMETER_NAMES:
        out[name] = getattr(family, name)
    return out


def family_from_dict(params: dict) -> SolutionFamily:
    unknown = set(params) - set(PARAMETER_NAMES) - {"variant"}
    if unknown:
        raise ConfigError(f"unknown family parameters: {sorted(unknown)}")
    if "variant" not in params:
        raise ConfigError("family parameters need a 'variant'")
    kw = {k: v for k, v in params.items() if k != "variant"}
    return SolutionFamily(params["variant"], **kw)
