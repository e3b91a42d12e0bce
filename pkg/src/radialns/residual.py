"""Finite-difference residuals of the radially symmetric flow equations.

The operators here see a candidate solution only through a sampler
``f(t, r) -> (rho, u)`` accepting broadcastable numpy arrays.  Radial
derivatives use 5-point central stencils, time derivatives the 2-point
central difference, so residuals of an exact solution are O(h_t**2) and
second-order convergence can be observed by halving the steps.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DomainError, SupportBoundaryError
from .families import SolutionFamily, Variant

DEFAULT_FD_STEP = 1e-4

SOLID_CORE_SOURCES = ("printed", "density", "pressure")


class _Stencil:
    """Sampler values at (t, r), (t +- h_t, r) and (t, r +- h_r, r +- 2 h_r)."""

    def __init__(self, sampler, t, r, h_t, h_r, r_floor=0.0):
        t = np.asarray(t, dtype=float)
        r = np.asarray(r, dtype=float)
        if np.any(np.asarray(h_t) <= 0) or h_r <= 0:
            raise ValueError("finite-difference steps must be positive")
        if np.any(r - 2 * h_r <= r_floor):
            bad = float(np.min(r))
            raise DomainError(
                f"radial stencil at r={bad!r} with h_r={h_r!r} reaches r <= {r_floor!r}"
            )
        self.r = r
        self.h_t = h_t
        self.h_r = h_r
        self.rho, self.u = (np.asarray(v, dtype=float) for v in sampler(t, r))
        rho_tp, u_tp = sampler(t + h_t, r)
        rho_tm, u_tm = sampler(t - h_t, r)
        self.rho_t = (np.asarray(rho_tp) - rho_tm) / (2 * h_t)
        self.u_t = (np.asarray(u_tp) - u_tm) / (2 * h_t)
        self.rho_r_pts = {}
        self.u_r_pts = {}
        for k in (-2, -1, 1, 2):
            rho_k, u_k = sampler(t, r + k * h_r)
            self.rho_r_pts[k] = np.asarray(rho_k, dtype=float)
            self.u_r_pts[k] = np.asarray(u_k, dtype=float)
        self.rho_r_pts[0] = self.rho
        self.u_r_pts[0] = self.u

    def d1(self, pts):
        return (pts[-2] - 8 * pts[-1] + 8 * pts[1] - pts[2]) / (12 * self.h_r)

    def d2(self, pts):
        return (-pts[-2] + 16 * pts[-1] - 30 * pts[0] + 16 * pts[1] - pts[2]) / (
            12 * self.h_r**2
        )

    @property
    def rho_r(self):
        return self.d1(self.rho_r_pts)

    @property
    def u_r(self):
        return self.d1(self.u_r_pts)

    @property
    def u_rr(self):
        return self.d2(self.u_r_pts)

    def viscous(self, N):
        """u_rr + (N-1)/r u_r - (N-1)/r**2 u."""
        r = self.r
        return self.u_rr + (N - 1) / r * self.u_r - (N - 1) / r**2 * self.u


def _out(value):
    return float(value) if np.ndim(value) == 0 else value


def _mass(s, N):
    terms = (s.rho_t, s.u * s.rho_r, s.rho * s.u_r, (N - 1) / s.r * s.rho * s.u)
    return sum(terms), _scale(terms)


def _viscous_terms(s, N):
    r = s.r
    return (s.u_rr, (N - 1) / r * s.u_r, -(N - 1) / r**2 * s.u)


def _momentum_isothermal(s, N, K, nu, beta):
    terms = (
        s.rho * s.u_t,
        s.rho * s.u * s.u_r,
        K * s.rho_r,
        beta * s.rho * s.u,
        *(-nu * v for v in _viscous_terms(s, N)),
    )
    return sum(terms), _scale(terms)


def _momentum_pressureless(s, N, kappa, theta, beta):
    pts = np.stack(np.broadcast_arrays(*(s.rho_r_pts[k] for k in (-2, -1, 0, 1, 2))))
    empty = pts <= 0
    mixed = np.any(empty, axis=0) & ~np.all(empty, axis=0)
    if np.any(mixed):
        rr = np.broadcast_to(s.r, mixed.shape)[mixed]
        raise SupportBoundaryError(
            f"stencil at r={float(rr.flat[0])!r} straddles the edge of the support"
        )
    mu_pts = {k: kappa * s.rho_r_pts[k] ** theta for k in (-2, -1, 0, 1, 2)}
    mu = mu_pts[0]
    mu_r = s.d1(mu_pts)
    terms = (
        s.rho * s.u_t,
        s.rho * s.u * s.u_r,
        beta * s.rho * s.u,
        -mu_r * (N - 1) / s.r * s.u,
        -mu_r * s.u_r,
        *(-mu * v for v in _viscous_terms(s, N)),
    )
    return sum(terms), _scale(terms)


def _momentum_solid_core(s, K, nu, beta, M0, source):
    if source not in SOLID_CORE_SOURCES:
        raise ValueError(f"source must be one of {SOLID_CORE_SOURCES}")
    src = M0 / s.r
    if source == "density":
        src = s.rho * src
    elif source == "pressure":
        src = K * s.rho * src
    terms = (
        s.rho * s.u_t,
        s.rho * s.u * s.u_r,
        K * s.rho_r,
        beta * s.rho * s.u,
        -src,
        *(-nu * v for v in _viscous_terms(s, 2)),
    )
    return sum(terms), _scale(terms)


def _scale(terms):
    """Largest term magnitude, floored at 1 so small-valued fields are judged absolutely."""
    return np.maximum(1.0, np.max(np.abs(np.stack(np.broadcast_arrays(*terms))), axis=0))


def mass_residual(sampler, N, t, r, h_t=DEFAULT_FD_STEP, h_r=DEFAULT_FD_STEP):
    """rho_t + u rho_r + rho u_r + (N-1)/r rho u."""
    return _out(_mass(_Stencil(sampler, t, r, h_t, h_r), N)[0])


def scaled_mass_residual(sampler, N, t, r, h_t=DEFAULT_FD_STEP, h_r=DEFAULT_FD_STEP):
    """Mass residual divided by max(1, largest of its terms), as used by the sweep gate."""
    res, scale = _mass(_Stencil(sampler, t, r, h_t, h_r), N)
    return _out(np.abs(res) / scale)


def viscous_operator(sampler, N, t, r, h_r=DEFAULT_FD_STEP):
    """Finite-difference value of u_rr + (N-1)/r u_r - (N-1)/r**2 u at fixed t."""
    s = _Stencil(sampler, t, r, h_r, h_r)
    return _out(sum(_viscous_terms(s, N)))


def momentum_residual_isothermal(
    sampler, N, K, nu, beta, t, r, h_t=DEFAULT_FD_STEP, h_r=DEFAULT_FD_STEP
):
    """rho (u_t + u u_r) + K rho_r + beta rho u - nu (u_rr + (N-1)/r u_r - (N-1)/r**2 u)."""
    s = _Stencil(sampler, t, r, h_t, h_r)
    return _out(_momentum_isothermal(s, N, K, nu, beta)[0])


def momentum_residual_pressureless(
    sampler, N, kappa, theta, t, r, h_t=DEFAULT_FD_STEP, h_r=DEFAULT_FD_STEP, beta=0.0
):
    """Pressureless momentum balance with viscosity mu = kappa rho**theta.

    rho (u_t + u u_r) + beta rho u
        - (mu)_r ((N-1)/r u + u_r) - mu (u_rr + (N-1)/r u_r - (N-1)/r**2 u)

    (mu)_r is differenced on the composite kappa rho**theta.  Stencils with
    some but not all points at zero density raise :class:`SupportBoundaryError`.
    """
    s = _Stencil(sampler, t, r, h_t, h_r)
    return _out(_momentum_pressureless(s, N, kappa, theta, beta)[0])


def momentum_residual_solid_core(
    sampler, K, nu, beta, M0, t, r, h_t=DEFAULT_FD_STEP, h_r=DEFAULT_FD_STEP,
    *, r0=0.0, source="printed",
):
    """Two-dimensional momentum balance around a solid core of radius r0.

    rho (u_t + u u_r) + K rho_r + beta rho u - S - nu (u_rr + u_r/r - u/r**2)

    with the source ``S`` chosen by ``source``: ``"printed"`` is M0/r,
    ``"density"`` is rho M0/r and ``"pressure"`` is K rho M0/r.
    """
    s = _Stencil(sampler, t, r, h_t, h_r, r_floor=r0)
    return _out(_momentum_solid_core(s, K, nu, beta, M0, source)[0])


@dataclass(frozen=True)
class Grid:
    t_min: float
    t_max: float
    r_min: float
    r_max: float
    n_t: int = 16
    n_r: int = 16
    fd_step_t: float = DEFAULT_FD_STEP
    fd_step_r: float = DEFAULT_FD_STEP

    def __post_init__(self):
        if self.n_t < 2 or self.n_r < 2:
            raise DomainError("grid needs at least 2 nodes per axis")
        if self.fd_step_t <= 0 or self.fd_step_r <= 0:
            raise DomainError("finite-difference steps must be positive")
        if not (0 <= self.t_min <= self.t_max):
            raise DomainError(f"invalid time range [{self.t_min}, {self.t_max}]")
        if not (0 <= self.r_min < self.r_max):
            raise DomainError(f"invalid radial range [{self.r_min}, {self.r_max}]")

    def nodes(self):
        t = np.linspace(self.t_min, self.t_max, self.n_t)
        r = np.linspace(self.r_min, self.r_max, self.n_r)
        return np.meshgrid(t, r, indexing="ij")

    def to_dict(self):
        return asdict(self)


def _profile_x_max(family):
    """Largest similarity variable r/a on default grids, keeping profiles O(1)."""
    lam = family.lam
    v = family.variant
    if v is Variant.PRESSURELESS_THETA_NE1:
        th = family.theta
        c2 = 0.5 * (th - 1) * (-lam / (family.N * family.kappa * th))
        # Keep the radicand within a factor 2 of its central value; near the
        # edge of a compact support the profile has a power singularity.
        if c2 < 0:
            return math.sqrt(0.5 * family.alpha ** (th - 1) / -c2)
        if c2 > 0:
            return min(1.0, math.sqrt(family.alpha ** (th - 1) / c2))
        return 1.0
    stiffness = family.K if v is not Variant.PRESSURELESS_THETA1 else family.N * family.kappa
    if lam == 0:
        return 1.0
    return min(1.0, math.sqrt(2 * stiffness / abs(lam)))


def default_grid(family: SolutionFamily, n_t=16, n_r=16, fd_step=DEFAULT_FD_STEP,
                 horizon=1.0):
    """Grid on [10 h, min(horizon, 0.9 T)] x [r_min, a_min x_max] for ``family``.

    T is the lower end of the vanish bracket (or the integration horizon).
    """
    traj = family.trajectory
    reach = traj.t_reach
    t_min = 10 * fd_step
    if traj.status.value == "vanish_detected":
        t_max = min(horizon, 0.9 * reach)
    else:
        t_max = min(horizon, reach - 2 * fd_step)
    if t_max <= t_min:
        raise DomainError(
            f"no room for a grid before the vanish time {reach!r} with step {fd_step!r}"
        )
    ts = np.linspace(t_min, t_max, 257)
    a_min = float(np.min(family.trajectory.evaluate(ts)[0]))
    x_max = _profile_x_max(family)
    if family.variant is Variant.SOLID_CORE_2D:
        r_min = family.r0 + max(0.05 * family.r0, 10 * fd_step)
        r_max = r_min + a_min * x_max
    else:
        r_min = max(1e-3, 10 * fd_step)
        r_max = max(a_min * x_max, 2 * r_min)
    return Grid(t_min, t_max, r_min, r_max, n_t, n_r, fd_step, fd_step)


@dataclass(frozen=True)
class ResidualReport:
    """Aggregated residuals over a grid.

    ``*_abs`` figures are raw residuals.  ``*_scaled`` figures divide each
    residual by max(1, largest term of its equation at that node); they equal
    the raw values wherever the fields are O(1) and stay meaningful when the
    terms grow like a**-(N+2) approaching blowup.
    """

    grid: Grid
    max_abs_mass: float
    mean_abs_mass: float
    max_abs_momentum: float
    mean_abs_momentum: float
    max_scaled_mass: float
    max_scaled_momentum: float
    worst_point: tuple
    equation: str = ""
    nodes: dict | None = field(default=None, repr=False, compare=False)

    def passes(self, threshold):
        return self.max_scaled_mass < threshold and self.max_scaled_momentum < threshold

    def to_dict(self):
        return {
            "equation": self.equation,
            "grid": self.grid.to_dict(),
            "max_abs_mass": self.max_abs_mass,
            "mean_abs_mass": self.mean_abs_mass,
            "max_abs_momentum": self.max_abs_momentum,
            "mean_abs_momentum": self.mean_abs_momentum,
            "max_scaled_mass": self.max_scaled_mass,
            "max_scaled_momentum": self.max_scaled_momentum,
            "worst_point": list(self.worst_point),
        }

    def nodes_csv(self):
        """Per-node residual table, or an empty string when nodes were not kept."""
        if not self.nodes:
            return ""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        cols = ("t", "r", "mass", "momentum", "scaled_mass", "scaled_momentum")
        writer.writerow(cols)
        flat = [np.ravel(self.nodes[c]) for c in cols]
        for row in zip(*flat):
            writer.writerow([repr(float(v)) for v in row])
        return buf.getvalue()


def _local_time_steps(family, t, h):
    """Shrink the time step where a(t) changes on scales shorter than 1."""
    a, adot = family.trajectory.evaluate(t)
    addot = family.ode.acceleration(a, adot)
    rate = np.maximum(np.abs(adot) / a, np.sqrt(np.abs(addot) / a))
    return h * np.minimum(1.0, 1.0 / np.maximum(rate, 1e-300))


def _equation_for(family, source):
    v = family.variant
    if v in (Variant.ISOTHERMAL_NS, Variant.ISOTHERMAL_DAMPED):
        return "isothermal", lambda s: _momentum_isothermal(
            s, family.N, family.K, family.nu, family.beta
        )
    if v is Variant.SOLID_CORE_2D:
        return f"solid_core[{source}]", lambda s: _momentum_solid_core(
            s, family.K, family.nu, family.beta, family.M0, source
        )
    return "pressureless", lambda s: _momentum_pressureless(
        s, family.N, family.kappa, family.theta, family.beta
    )


def residual_sweep(
    family: SolutionFamily,
    grid: Grid,
    *,
    sampler=None,
    corruption=None,
    source="pressure",
    scale_steps=True,
    keep_nodes=False,
) -> ResidualReport:
    """Mass and momentum residuals of ``family`` at every node of ``grid``.

    ``sampler`` overrides the family's own fields (for example fields read
    back from a file); the family then only supplies the equation constants.
    ``scale_steps`` shrinks the time step at nodes where a(t) varies quickly.
    """
    reach = family.t_reach
    traj = family.trajectory
    if grid.t_max + grid.fd_step_t >= reach:
        if traj.status.value == "vanish_detected":
            raise DomainError(
                f"grid t_max={grid.t_max!r} reaches the vanish time: a(t) drops below its vanish threshold in "
                f"[{traj.t_lower!r}, {traj.t_upper!r}]"
            )
        raise DomainError(f"grid t_max={grid.t_max!r} beyond integrated horizon {reach!r}")
    if grid.t_min - grid.fd_step_t < 0:
        raise DomainError("grid t_min must be at least fd_step_t")
    if sampler is None:
        sampler = family.sampler(corruption)
    T, R = grid.nodes()
    h_t = _local_time_steps(family, T, grid.fd_step_t) if scale_steps else grid.fd_step_t
    r_floor = family.r0 if family.variant is Variant.SOLID_CORE_2D else 0.0
    try:
        s = _Stencil(sampler, T, R, h_t, grid.fd_step_r, r_floor=r_floor)
    except DomainError as exc:
        raise DomainError(f"{exc} (grid t in [{grid.t_min!r}, {grid.t_max!r}], "
                          f"r in [{grid.r_min!r}, {grid.r_max!r}])") from exc
    mass, mass_scale = _mass(s, family.N)
    name, momentum_fn = _equation_for(family, source)
    mom, mom_scale = momentum_fn(s)
    mass, mom = np.abs(mass), np.abs(mom)
    scaled_mass, scaled_mom = mass / mass_scale, mom / mom_scale
    worst = np.unravel_index(np.argmax(np.maximum(scaled_mass, scaled_mom)), T.shape)
    nodes = None
    if keep_nodes:
        nodes = {"t": T, "r": R, "mass": mass, "momentum": mom,
                 "scaled_mass": scaled_mass, "scaled_momentum": scaled_mom}
    return ResidualReport(
        grid=grid,
        max_abs_mass=float(mass.max()),
        mean_abs_mass=float(mass.mean()),
        max_abs_momentum=float(mom.max()),
        mean_abs_momentum=float(mom.mean()),
        max_scaled_mass=float(scaled_mass.max()),
        max_scaled_momentum=float(scaled_mom.max()),
        worst_point=(float(T[worst]), float(R[worst])),
        equation=name,
        nodes=nodes,
    )


def discriminate_solid_core_source(family: SolutionFamily, grid: Grid, threshold=1e-6):
    """Sweep each candidate solid-core source term; report which ones the family satisfies."""
    if family.variant is not Variant.SOLID_CORE_2D:
        raise ValueError("source discrimination applies to solid_core_2d families")
    out = {}
    for source in SOLID_CORE_SOURCES:
        rep = residual_sweep(family, grid, source=source)
        out[source] = {
            "max_scaled_momentum": rep.max_scaled_momentum,
            "max_abs_momentum": rep.max_abs_momentum,
            "satisfied": rep.max_scaled_momentum < threshold,
        }
    return out


def ansatz_sampler(profile, a, adot, N):
    """Sampler for rho = profile(r / a(t)) / a(t)**N, u = adot(t) / a(t) r.

    ``profile``, ``a`` and ``adot`` are arbitrary vectorised callables; the
    mass equation holds for every such pair, whatever ODE a(t) satisfies.
    """

    def sample(t, r):
        at = a(t)
        return profile(r / at) / at**N, adot(t) / at * r

    return sample


def convergence_ratios(family: SolutionFamily, t, r, h, source="pressure"):
    """Ratios residual(h) / residual(h / 2) for mass and momentum at one point.

    Both time and radial steps are halved together; for an exact family the
    time stencil dominates and the ratios approach 4.
    """
    sampler = family.sampler()
    _, momentum_fn = _equation_for(family, source)
    r_floor = family.r0 if family.variant is Variant.SOLID_CORE_2D else 0.0
    out = []
    for step in (h, h / 2):
        s = _Stencil(sampler, t, r, step, step, r_floor=r_floor)
        out.append((abs(float(_mass(s, family.N)[0])), abs(float(momentum_fn(s)[0]))))
    (m1, p1), (m2, p2) = out
    return m1 / m2 if m2 else math.inf, p1 / p2 if p2 else math.inf
