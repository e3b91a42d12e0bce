"""Emden-type ODEs for the scale factor a(t) of the self-similar ansatz.

Four right-hand sides are supported::

    classic          a'' = -lam / a
    damped           a'' + beta a' = -lam / a
    pressureless_theta1   a'' = lam a' / a**2
    general_damped   a'' + beta a' = -lam a' / a**S

They are integrated as first-order systems in (a, a') by an embedded
Dormand-Prince 5(4) pair.  Steps are additionally clamped to a fraction of the
time scale on which ``a`` would reach zero, which keeps the integrator on the
rails as ``a -> 0`` where the right-hand sides are singular.  Accepted steps
store (t, a, a', a'') so that a quintic Hermite interpolant gives a C2 dense
output with a' exactly equal to the derivative of the interpolated a.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AfterBlowupError, ConfigError, DomainError

#: Vanish threshold relative to a0 used when none is given.
DEFAULT_VANISH_FACTOR = 1e-8
#: Fraction of a/|a'| (and of sqrt(a/|a''|)) allowed per step while approaching zero.
DEFAULT_CLAMP = 0.1


class Kind(str, enum.Enum):
    CLASSIC = "classic"
    DAMPED = "damped"
    PRESSURELESS_THETA1 = "pressureless_theta1"
    GENERAL_DAMPED = "general_damped"


@dataclass(frozen=True)
class ScalingODE:
    """One scale-factor ODE together with its initial data a(0)=a0, a'(0)=a1."""

    kind: Kind
    lam: float
    a0: float
    a1: float
    beta: float = 0.0
    s_exponent: float = 0.0

    def __post_init__(self):
        try:
            object.__setattr__(self, "kind", Kind(self.kind))
        except ValueError as exc:
            raise ConfigError(f"unknown ODE kind {self.kind!r}") from exc
        for name in ("lam", "a0", "a1", "beta", "s_exponent"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ConfigError(f"{name} must be finite, got {value}")
            object.__setattr__(self, name, value)
        if self.a0 <= 0:
            raise ConfigError(f"a0 must be positive, got {self.a0}")
        if self.beta < 0:
            raise ConfigError(f"beta must be non-negative, got {self.beta}")
        if self.kind in (Kind.CLASSIC, Kind.PRESSURELESS_THETA1) and self.beta != 0:
            raise ConfigError(f"beta must be 0 for kind {self.kind.value}")

    def acceleration(self, a, adot):
        """a'' as a function of the state; ``a`` must be positive."""
        kind = self.kind
        if kind is Kind.CLASSIC:
            return -self.lam / a
        if kind is Kind.DAMPED:
            return -self.beta * adot - self.lam / a
        if kind is Kind.PRESSURELESS_THETA1:
            return self.lam * adot / (a * a)
        return -self.beta * adot - self.lam * adot / a**self.s_exponent

    @property
    def energy_level(self):
        """theta = lam ln a0 + a1^2 / 2, the conserved value of the classic energy."""
        return self.lam * math.log(self.a0) + 0.5 * self.a1**2

    def default_vanish_threshold(self):
        return DEFAULT_VANISH_FACTOR * self.a0


def energy_integral(ode: ScalingODE, a, adot):
    """Return adot^2/2 + lam ln(a), constant along exact classic trajectories."""
    if ode.kind is not Kind.CLASSIC:
        raise ValueError("energy integral is defined for the classic kind only")
    return 0.5 * np.square(adot) + ode.lam * np.log(a)


def pressureless_first_integral(ode: ScalingODE, a, adot):
    """Return adot + lam/a, constant along exact trajectories of a'' = lam a'/a^2.

    Differentiating gives a'' - lam a'/a^2 = 0, so the value stays at
    a1 + lam/a0 and the velocity obeys a' = a1 + lam/a0 - lam/a.
    """
    if ode.kind is not Kind.PRESSURELESS_THETA1:
        raise ValueError("first integral is defined for the pressureless_theta1 kind only")
    return adot + ode.lam / a


class Status(str, enum.Enum):
    REACHED_T_END = "reached_t_end"
    VANISH_DETECTED = "vanish_detected"
    STEP_FAILURE = "step_failure"


def _hermite(tk, ak, vk, fk, tq):
    tq = np.asarray(tq, dtype=float)
    i = np.clip(np.searchsorted(tk, tq, side="right") - 1, 0, len(tk) - 2)
    h = tk[i + 1] - tk[i]
    s = (tq - tk[i]) / h
    s2 = s * s
    s3 = s2 * s
    s4 = s3 * s
    s5 = s4 * s
    a_i, a_j = ak[i], ak[i + 1]
    hv_i, hv_j = h * vk[i], h * vk[i + 1]
    hf_i, hf_j = h * h * fk[i], h * h * fk[i + 1]
    # increment form: constant data reproduce exactly
    a = a_i + (
        (10 * s3 - 15 * s4 + 6 * s5) * (a_j - a_i)
        + (s - 6 * s3 + 8 * s4 - 3 * s5) * hv_i
        + (0.5 * s2 - 1.5 * s3 + 1.5 * s4 - 0.5 * s5) * hf_i
        + (0.5 * s3 - s4 + 0.5 * s5) * hf_j
        + (-4 * s3 + 7 * s4 - 3 * s5) * hv_j
    )
    da = (
        (-30 * s2 + 60 * s3 - 30 * s4) * (a_i - a_j)
        + (1 - 18 * s2 + 32 * s3 - 15 * s4) * hv_i
        + (s - 4.5 * s2 + 6 * s3 - 2.5 * s4) * hf_i
        + (1.5 * s2 - 4 * s3 + 2.5 * s4) * hf_j
        + (-12 * s2 + 28 * s3 - 15 * s4) * hv_j
    )
    return a, da / h


@dataclass(frozen=True)
class Trajectory:
    """Accepted integrator steps plus how the integration ended.

    For ``VANISH_DETECTED`` the pair (t_lower, t_upper) brackets the first time
    the dense output falls to ``vanish_threshold``; a(t_lower) is still above it.
    """

    ode: ScalingODE
    t: np.ndarray
    a: np.ndarray
    adot: np.ndarray
    addot: np.ndarray
    status: Status
    vanish_threshold: float
    t_lower: float | None = None
    t_upper: float | None = None
    message: str = ""
    n_rejected: int = field(default=0, compare=False)

    @property
    def samples(self):
        return list(zip(self.t.tolist(), self.a.tolist(), self.adot.tolist()))

    @property
    def t_reach(self):
        """Supremum of times at which the trajectory may be queried."""
        if self.status is Status.VANISH_DETECTED:
            return self.t_lower
        return float(self.t[-1])

    def interpolate(self, t):
        """Dense output without domain checks (used for bracketing)."""
        if len(self.t) < 2:
            shape = np.shape(t)
            return np.full(shape, self.a[0]), np.full(shape, self.adot[0])
        return _hermite(self.t, self.a, self.adot, self.addot, t)

    def evaluate(self, t):
        """Return (a, adot) at time(s) ``t`` from the dense output."""
        tt = np.asarray(t, dtype=float)
        if np.any(tt < 0) or not np.all(np.isfinite(tt)):
            raise DomainError(f"time must be finite and non-negative, got {t}")
        if self.status is Status.VANISH_DETECTED and np.any(tt >= self.t_lower):
            raise AfterBlowupError(
                f"t={float(np.max(tt))!r} is at or after blowup: a(t) vanishes in "
                f"[{self.t_lower!r}, {self.t_upper!r}]"
            )
        if np.any(tt > self.t[-1]):
            raise DomainError(
                f"t={float(np.max(tt))!r} beyond integrated horizon {float(self.t[-1])!r}"
            )
        a, adot = self.interpolate(tt)
        if np.ndim(t) == 0:
            return float(a), float(adot)
        return a, adot


# Dormand-Prince 5(4) tableau.
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)


def _dopri_step(acc, a, v, f, h):
    """One DP5 step from (a, v) with a'' = f at the start.

    Returns (a_new, v_new, f_new, err_a, err_v) or None if a stage leaves a > 0.
    """
    ka = [v]
    kv = [f]
    for stage in range(1, 7):
        row = _A[stage]
        sa = a + h * sum(c * k for c, k in zip(row, ka))
        sv = v + h * sum(c * k for c, k in zip(row, kv))
        if not (sa > 0 and math.isfinite(sa) and math.isfinite(sv)):
            return None
        fs = acc(sa, sv)
        if not math.isfinite(fs):
            return None
        ka.append(sv)
        kv.append(fs)
    # Stage 7 is evaluated at the 5th-order solution (FSAL).
    a_new, v_new, f_new = sa, sv, fs
    err_a = h * sum(e * k for e, k in zip(_E, ka))
    err_v = h * sum(e * k for e, k in zip(_E, kv))
    return a_new, v_new, f_new, err_a, err_v


def _initial_step(acc, a, v, f, rel_tol, abs_tol, span):
    sc_a = abs_tol + rel_tol * abs(a)
    sc_v = abs_tol + rel_tol * abs(v)
    d0 = math.hypot(a / sc_a, v / sc_v) / math.sqrt(2)
    d1 = math.hypot(v / sc_a, f / sc_v) / math.sqrt(2)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, span)
    a1 = a + h0 * v
    if a1 <= 0:
        return h0 * 0.01
    v1 = v + h0 * f
    f1 = acc(a1, v1)
    d2 = math.hypot((v1 - v) / sc_a, (f1 - f) / sc_v) / math.sqrt(2) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, span)


def _bisect_crossing(tk, ak, vk, fk, level, lo, hi):
    """Shrink [lo, hi] with a(lo) > level >= a(hi) down to floating-point resolution."""
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        a_mid, _ = _hermite(tk, ak, vk, fk, mid)
        if a_mid > level:
            lo = mid
        else:
            hi = mid
    return lo, hi


def integrate(
    ode: ScalingODE,
    t_end: float,
    rel_tol: float = 1e-10,
    abs_tol: float = 1e-12,
    *,
    vanish_threshold: float | None = None,
    clamp: float = DEFAULT_CLAMP,
    max_steps: int = 1_000_000,
) -> Trajectory:
    """Integrate ``ode`` on [0, t_end], stopping early once a(t) falls to the threshold.

    The returned trajectory always holds at least the initial sample.  A step
    size underflow is reported through ``Status.STEP_FAILURE`` rather than
    raised, so callers can decide how to treat it.
    """
    if not (0 < rel_tol < 1 and 0 < abs_tol < 1):
        raise ConfigError("tolerances must lie in (0, 1)")
    if not (math.isfinite(t_end) and t_end > 0):
        raise ConfigError(f"t_end must be finite and positive, got {t_end}")
    eps = ode.default_vanish_threshold() if vanish_threshold is None else float(vanish_threshold)
    if not 0 < eps < ode.a0:
        raise ConfigError(f"vanish threshold must lie in (0, a0), got {eps}")

    acc = ode.acceleration
    t, a, v = 0.0, ode.a0, ode.a1
    f = acc(a, v)
    ts, as_, vs, fs = [t], [a], [v], [f]
    h = _initial_step(acc, a, v, f, rel_tol, abs_tol, t_end)
    status, message = Status.REACHED_T_END, ""
    t_lower = t_upper = None
    rejected = 0
    just_rejected = False

    for _ in range(max_steps):
        if t >= t_end:
            break
        h = min(h, t_end - t)
        if v < 0:
            h = min(h, clamp * a / -v)
        if f < 0:
            h = min(h, clamp * math.sqrt(a / -f))
        h_min = 16 * np.spacing(max(1.0, abs(t)))
        if h < h_min:
            if v < 0 and a / -v < 1e4 * h_min and len(ts) > 1:
                # Time left to reach zero is below the resolution of t: the
                # current value becomes the effective threshold.
                eps = a
                t_lower, t_upper = ts[-2], ts[-1]
                status = Status.VANISH_DETECTED
                message = (
                    f"time resolution exhausted at t={t!r}; effective vanish "
                    f"threshold raised to a={a!r}"
                )
            else:
                status = Status.STEP_FAILURE
                message = f"step size underflow at t={t!r}, a={a!r}, adot={v!r}"
            break
        step = _dopri_step(acc, a, v, f, h)
        if step is None:
            h *= 0.25
            rejected += 1
            just_rejected = True
            continue
        a_new, v_new, f_new, err_a, err_v = step
        sc_a = abs_tol + rel_tol * max(abs(a), abs(a_new))
        sc_v = abs_tol + rel_tol * max(abs(v), abs(v_new))
        err = math.sqrt(0.5 * ((err_a / sc_a) ** 2 + (err_v / sc_v) ** 2))
        if err > 1.0:
            h *= max(0.2, 0.9 * err**-0.2)
            rejected += 1
            just_rejected = True
            continue
        t_new = t_end if t_end - (t + h) <= 4 * np.spacing(t_end) else t + h
        ts.append(t_new)
        as_.append(a_new)
        vs.append(v_new)
        fs.append(f_new)
        t, a, v, f = t_new, a_new, v_new, f_new
        if a <= eps:
            tk, ak, vk, fk = (np.array(x) for x in (ts, as_, vs, fs))
            t_lower, t_upper = _bisect_crossing(tk, ak, vk, fk, eps, ts[-2], ts[-1])
            t_lower, t_upper = float(t_lower), float(t_upper)
            status = Status.VANISH_DETECTED
            message = (
                f"a(t) fell to {eps!r}; the true zero of a lies after t_lower "
                "(crossing time is biased low by the threshold)"
            )
            break
        factor = 5.0 if err == 0 else min(5.0, max(0.2, 0.9 * err**-0.2))
        if just_rejected:
            factor = min(1.0, factor)
        just_rejected = False
        h *= factor
    else:
        status = Status.STEP_FAILURE
        message = f"exceeded {max_steps} steps at t={t!r}"

    return Trajectory(
        ode=ode,
        t=np.array(ts),
        a=np.array(as_),
        adot=np.array(vs),
        addot=np.array(fs),
        status=status,
        vanish_threshold=eps,
        t_lower=t_lower,
        t_upper=t_upper,
        message=message,
        n_rejected=rejected,
    )


class BlowupStatus(str, enum.Enum):
    FINITE_TIME_VANISH = "finite_time_vanish"
    GLOBAL_EXISTENCE_WITNESSED = "global_existence_witnessed"
    UNDETERMINED = "undetermined"


@dataclass(frozen=True)
class BlowupReport:
    """Outcome of searching for a finite time at which a(t) reaches zero.

    For ``FINITE_TIME_VANISH`` the interval [t_lower, t_upper] brackets the zero
    of a itself, not the threshold crossing: t_lower is a time at which a is
    still above the threshold and t_upper adds the largest remaining time
    a/|a'| the motion can take once it is accelerating towards zero.
    """

    status: BlowupStatus
    t_lower: float | None
    t_upper: float | None
    bound_e_theta_lambda: float | None = None
    vanish_threshold: float | None = None
    message: str = ""
    trajectory: Trajectory | None = field(default=None, repr=False, compare=False)

    @property
    def width(self):
        if self.t_lower is None or self.t_upper is None:
            return None
        return self.t_upper - self.t_lower

    @property
    def t_star(self):
        """Bracket midpoint, the point estimate of the vanishing time."""
        if self.status is not BlowupStatus.FINITE_TIME_VANISH:
            return None
        return 0.5 * (self.t_lower + self.t_upper)

    def to_dict(self):
        return {
            "status": self.status.value,
            "t_lower": self.t_lower,
            "t_upper": self.t_upper,
            "width": self.width,
            "bound_e_theta_lambda": self.bound_e_theta_lambda,
            "vanish_threshold": self.vanish_threshold,
            "message": self.message,
        }


def detect_blowup(
    ode: ScalingODE,
    time_cap: float,
    tol: float,
    rel_tol: float = 1e-12,
    abs_tol: float = 1e-20,
    max_refinements: int = 8,
) -> BlowupReport:
    """Bracket the first zero of a(t) on [0, time_cap] to width ``tol``.

    The threshold starts at 1e-8 a0 and is lowered until the time still needed
    to reach zero from the threshold, bounded by a/|a'|, fits in the budget.
    """
    if not (tol > 0 and time_cap > 0):
        raise ConfigError("tol and time_cap must be positive")
    bound = None
    if ode.kind is Kind.CLASSIC and ode.lam > 0:
        bound = math.exp(ode.energy_level / ode.lam)

    eps = ode.default_vanish_threshold()
    traj = None
    for _ in range(max_refinements + 1):
        traj = integrate(ode, time_cap, rel_tol, abs_tol, vanish_threshold=eps)
        if traj.status is Status.STEP_FAILURE:
            return BlowupReport(
                BlowupStatus.UNDETERMINED, None, None, bound, eps,
                f"integration failed: {traj.message}", traj,
            )
        if traj.status is Status.REACHED_T_END:
            a_end, v_end = float(traj.a[-1]), float(traj.adot[-1])
            if a_end > 100 * eps and v_end >= 0:
                return BlowupReport(
                    BlowupStatus.GLOBAL_EXISTENCE_WITNESSED, float(traj.t[-1]), None,
                    bound, eps,
                    f"a stays positive up to t={time_cap!r} with a={a_end!r}, adot={v_end!r} >= 0",
                    traj,
                )
            return BlowupReport(
                BlowupStatus.UNDETERMINED, float(traj.t[-1]), None, bound, eps,
                f"no vanish before t={time_cap!r} but a={a_end!r}, adot={v_end!r} still decreasing",
                traj,
            )

        a_u, v_u = (float(x) for x in traj.interpolate(traj.t_upper))
        if v_u >= 0:
            return BlowupReport(
                BlowupStatus.UNDETERMINED, traj.t_lower, None, bound, eps,
                "threshold crossed while a is not decreasing", traj,
            )
        remaining = max(a_u, 0.0) / -v_u
        heuristic = ode.acceleration(max(a_u, traj.vanish_threshold), v_u) > 0
        # Pad both ends for the global integration error, estimated as rel_tol * t.
        pad = rel_tol * max(1.0, traj.t_upper) + 4 * float(np.spacing(traj.t_upper))
        t_lower = float(traj.t_lower - pad)
        t_upper = float(traj.t_upper + remaining + pad)
        width = t_upper - t_lower
        if width <= tol:
            note = (
                "remaining time a/|adot| is an estimate: motion decelerates near zero"
                if heuristic
                else "bracket encloses the zero of a"
            )
            return BlowupReport(
                BlowupStatus.FINITE_TIME_VANISH, t_lower, t_upper, bound,
                traj.vanish_threshold, note, traj,
            )
        eps = min(eps * 1e-2, 0.25 * tol * -v_u)
        if eps <= 1e-300:
            break
    return BlowupReport(
        BlowupStatus.UNDETERMINED, traj.t_lower, traj.t_upper, bound, eps,
        f"could not bracket the zero of a to width {tol!r}", traj,
    )
