"""Semiclassical dynamics: vector field, fixed points, stability, cycles.

State ordering throughout is the real 4-vector (beta_r, beta_i, alpha_r,
alpha_i).  The vector field assumes the time-rescaled model with chi = 1;
general chi is handled by ``model.rescale_to_unit_chi``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .errors import DomainError, NumericalError
from .model import SemiclassicalState, SystemParams

#: |Re(lambda)| below which an eigenvalue pair counts as marginal.
MARGINAL_TOL = 1e-8


def vector_field(y, params: SystemParams) -> np.ndarray:
    """Right-hand side of the scaled equations of motion.

    Parameters
    ----------
    y : array_like, shape (4,)
        State (beta_r, beta_i, alpha_r, alpha_i).
    params : SystemParams
        Must have chi == 1.

    Returns
    -------
    ndarray, shape (4,)
        (dbeta_r, dbeta_i, dalpha_r, dalpha_i)/dt.
    """
    if params.chi != 1.0:
        raise DomainError("vector_field requires chi == 1; rescale_to_unit_chi first")
    br, bi, ar, ai = y
    g2 = params.gamma / 2.0
    k2 = params.kappa / 2.0
    return np.array([
        2.0 * (bi * ar - br * ai) - g2 * br,
        2.0 * (br * ar + bi * ai) - g2 * bi - params.epsilon,
        -2.0 * br * bi - k2 * ar,
        br * br - bi * bi - k2 * ai,
    ])


@dataclass(frozen=True)
class Trajectory:
    """Sampled solution of the semiclassical equations.

    ``y`` has shape (n, 4) in the canonical ordering; ``dense`` is a
    callable t -> state usable for event refinement between samples.
    """

    times: np.ndarray
    y: np.ndarray
    params: SystemParams
    dense: object = None

    def __post_init__(self):
        if len(self.times) != len(self.y):
            raise DomainError("times and states must have equal length")
        if np.any(np.diff(self.times) <= 0):
            raise DomainError("times must be strictly increasing")

    @property
    def beta(self) -> np.ndarray:
        return self.y[:, 0] + 1j * self.y[:, 1]

    @property
    def alpha(self) -> np.ndarray:
        return self.y[:, 2] + 1j * self.y[:, 3]

    def state(self, i: int) -> SemiclassicalState:
        return SemiclassicalState.from_vector(self.y[i])

    def to_csv(self, path) -> None:
        """Write `t,beta_r,beta_i,alpha_r,alpha_i` at full double precision."""
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("t,beta_r,beta_i,alpha_r,alpha_i\n")
            for t, row in zip(self.times, self.y):
                fh.write(",".join(format(v, ".17g") for v in (t, *row)) + "\n")


def integrate(
    state0,
    params: SystemParams,
    t_span,
    rel_tol: float = 1e-9,
    abs_tol: float = 1e-12,
    n_samples: int = 2000,
    t_eval=None,
) -> Trajectory:
    """Integrate the semiclassical equations with an adaptive RK 5(4) pair.

    Parameters
    ----------
    state0 : SemiclassicalState or array_like shape (4,)
        Initial condition.
    t_span : (float, float)
        Integration interval; must be finite.
    rel_tol, abs_tol : float
        Tolerances, each in (0, 1e-2].
    n_samples : int
        Number of uniformly spaced output samples when ``t_eval`` is None.

    Raises
    ------
    NumericalError
        On integrator failure (carries the time reached).
    """
    if isinstance(state0, SemiclassicalState):
        y0 = state0.to_vector()
    else:
        y0 = np.asarray(state0, dtype=float)
        if y0.shape != (4,):
            raise DomainError(f"state0 must have 4 components, got shape {y0.shape}")
    t0, t1 = float(t_span[0]), float(t_span[1])
    if not (math.isfinite(t0) and math.isfinite(t1)) or t1 <= t0:
        raise DomainError(f"t_span must be finite with t1 > t0, got {t_span}")
    for name, tol in (("rel_tol", rel_tol), ("abs_tol", abs_tol)):
        if not (0.0 < tol <= 1e-2):
            raise DomainError(f"{name} must lie in (0, 1e-2], got {tol}")
    if t_eval is None:
        t_eval = np.linspace(t0, t1, int(n_samples))

    sol = solve_ivp(
        lambda t, y: vector_field(y, params),
        (t0, t1),
        y0,
        method="RK45",
        rtol=rel_tol,
        atol=abs_tol,
        t_eval=np.asarray(t_eval, dtype=float),
        dense_output=True,
    )
    if not sol.success:
        reached = sol.t[-1] if sol.t.size else t0
        raise NumericalError(f"integration failed: {sol.message}", time_reached=reached)
    return Trajectory(times=sol.t, y=sol.y.T.copy(), params=params, dense=sol.sol)


@dataclass(frozen=True)
class FixedPoint:
    """Imaginary-axis critical point (0, beta_i0, 0, alpha_i0)."""

    beta_i0: float
    alpha_i0: float
    residual: float

    def to_vector(self) -> np.ndarray:
        return np.array([0.0, self.beta_i0, 0.0, self.alpha_i0])


def cubic_residual(x: float, params: SystemParams) -> float:
    """Value of (4/kappa) x^3 + (gamma/2) x + epsilon."""
    return (4.0 / params.kappa) * x**3 + 0.5 * params.gamma * x + params.epsilon


def fixed_point(params: SystemParams) -> FixedPoint:
    """Unique critical point of the scaled flow.

    The real parts vanish; beta_i0 is the single real root of the cubic
    (4/kappa) x^3 + (gamma/2) x + epsilon = 0 (strictly monotone for
    kappa > 0, gamma >= 0), found by safeguarded Newton with bisection
    fallback on a bracketing interval.  alpha_i0 = -2 beta_i0^2 / kappa.
    """
    k, g, eps = params.kappa, params.gamma, params.epsilon
    if not (k > 0):
        raise DomainError(f"fixed_point requires kappa > 0, got {k}")
    if eps == 0.0:
        return FixedPoint(beta_i0=0.0, alpha_i0=0.0, residual=0.0)

    f = lambda x: (4.0 / k) * x**3 + 0.5 * g * x + eps
    df = lambda x: (12.0 / k) * x**2 + 0.5 * g

    # Root has the opposite sign to eps; bracket [-max(1,(k|eps|)^(1/3)), 0]
    # (mirrored for eps < 0).  The cubic is increasing, so f(lo) < 0 < f(hi).
    bound = max(1.0, (k * abs(eps)) ** (1.0 / 3.0))
    lo, hi = (-bound, 0.0) if eps > 0 else (0.0, bound)
    assert f(lo) < 0.0 < f(hi), "cubic must be monotone increasing on the bracket"

    x = 0.5 * (lo + hi)
    for _ in range(200):
        fx = f(x)
        if fx == 0.0:
            break
        if fx > 0.0:
            hi = x
        else:
            lo = x
        dfx = df(x)
        step = fx / dfx if dfx > 0.0 else math.inf
        x_new = x - step
        if not (lo < x_new < hi):
            x_new = 0.5 * (lo + hi)
        if x_new == x:
            break
        x = x_new

    return FixedPoint(beta_i0=x, alpha_i0=-2.0 * x**2 / k, residual=f(x))


def jacobian(fp: FixedPoint, params: SystemParams) -> np.ndarray:
    """Linearization of the flow at a critical point, ordering (br, bi, ar, ai)."""
    k2 = params.kappa / 2.0
    g2 = params.gamma / 2.0
    b, a = fp.beta_i0, fp.alpha_i0
    return np.array([
        [-2.0 * a - g2, 0.0, 2.0 * b, 0.0],
        [0.0, 2.0 * a - g2, 0.0, 2.0 * b],
        [-2.0 * b, 0.0, -k2, 0.0],
        [0.0, -2.0 * b, 0.0, -k2],
    ])


@dataclass(frozen=True)
class StabilityReport:
    eigenvalues: np.ndarray
    classification: str
    max_real_part: float


def classify_fixed_point(params: SystemParams, fp: FixedPoint = None) -> StabilityReport:
    """Eigenvalues and stability class of the critical point."""
    if fp is None:
        fp = fixed_point(params)
    ev = np.linalg.eigvals(jacobian(fp, params))
    ev = np.sort_complex(ev)
    mx = float(np.max(ev.real))
    if mx < -MARGINAL_TOL:
        label = "stable-focus/node"
    elif mx <= MARGINAL_TOL:
        label = "hopf-marginal"
    else:
        label = "unstable (limit-cycle regime)"
    return StabilityReport(eigenvalues=ev, classification=label, max_real_part=mx)


@dataclass(frozen=True)
class HopfPoint:
    epsilon_h: float
    beta_i0h: float
    alpha_i0h: float


def hopf_threshold(kappa: float, gamma: float) -> HopfPoint:
    """Drive strength at which the critical point loses stability.

    epsilon_h = sqrt(kappa (kappa+gamma)) (kappa + 2 gamma) / (4 sqrt(2)),
    with the critical-point coordinates beta_i0h = -sqrt(kappa(kappa+gamma)/8)
    and alpha_i0h = -(kappa+gamma)/4.
    """
    if not (kappa > 0):
        raise DomainError(f"kappa must be > 0, got {kappa}")
    if gamma < 0:
        raise DomainError(f"gamma must be >= 0, got {gamma}")
    eps_h = math.sqrt(kappa * (kappa + gamma)) * (kappa + 2.0 * gamma) / (4.0 * math.sqrt(2.0))
    return HopfPoint(
        epsilon_h=eps_h,
        beta_i0h=-math.sqrt(kappa * (kappa + gamma) / 8.0),
        alpha_i0h=-(kappa + gamma) / 4.0,
    )


def hopf_frequency(kappa: float, gamma: float) -> float:
    """Frequency sqrt(kappa (kappa + 2 gamma))/2 of the marginal pair."""
    if not (kappa > 0):
        raise DomainError(f"kappa must be > 0, got {kappa}")
    return math.sqrt(kappa * (kappa + 2.0 * gamma)) / 2.0


def hopf_eigenvalues(kappa: float, gamma: float) -> np.ndarray:
    """Closed-form spectrum at the bifurcation, from the two 2x2 blocks.

    The marginal pair is +/- i sqrt(kappa(kappa+2 gamma))/2; the stable
    pair is -(kappa+gamma)/2 +/- i sqrt(2 kappa(kappa+gamma) - gamma^2)/2.
    """
    om = hopf_frequency(kappa, gamma)
    re2 = -(kappa + gamma) / 2.0
    im2 = math.sqrt(2.0 * kappa * (kappa + gamma) - gamma**2) / 2.0
    return np.array([1j * om, -1j * om, re2 + 1j * im2, re2 - 1j * im2])


@dataclass(frozen=True)
class LimitCycleMeasurement:
    period: float
    amplitude_beta_r: float
    amplitude_alpha_r: float
    mean_beta_i: float
    mean_alpha_i: float
    converged: bool
    n_crossings: int = 0
    crossing_times: np.ndarray = None


def detect_limit_cycle(traj: Trajectory, transient_fraction: float = 0.5) -> LimitCycleMeasurement:
    """Measure a limit cycle from a post-transient trajectory segment.

    The Poincare section is beta_r = 0 crossed with alpha_r increasing
    (the critical point has beta_r0 = 0, so the section passes through
    the cycle's interior).  Crossing times are refined by bisection on
    the dense output.  The measurement counts as converged when
    successive crossing states agree to 1e-4 relative.

    Returns ``converged=False`` with nan period when no crossings are
    found (fixed-point regime).
    """
    if not (0.0 <= transient_fraction < 1.0):
        raise DomainError(f"transient_fraction must lie in [0, 1), got {transient_fraction}")
    t0, t1 = traj.times[0], traj.times[-1]
    t_start = t0 + transient_fraction * (t1 - t0)
    candidate = 2.0 * math.pi / hopf_frequency(traj.params.kappa, traj.params.gamma)
    if (t1 - t_start) < 10.0 * candidate:
        raise DomainError(
            f"post-transient span {t1 - t_start:.3g} covers fewer than 10 candidate "
            f"periods ({candidate:.3g} each); integrate longer"
        )

    sel = traj.times >= t_start
    ts = traj.times[sel]
    ys = traj.y[sel]
    br = ys[:, 0]
    ar = ys[:, 2]

    # At beta_r = 0 the flow gives dalpha_r/dt = -(kappa/2) alpha_r, so
    # "alpha_r increasing" is exactly alpha_r < 0 on the section.
    crossings = []
    for i in range(len(ts) - 1):
        if br[i] == 0.0 and ar[i] < 0.0:
            crossings.append(ts[i])
        elif br[i] * br[i + 1] < 0.0 and 0.5 * (ar[i] + ar[i + 1]) < 0.0:
            crossings.append(_refine_crossing(traj, ts[i], ts[i + 1]))

    if len(crossings) < 2:
        return LimitCycleMeasurement(
            period=math.nan,
            amplitude_beta_r=0.0,
            amplitude_alpha_r=0.0,
            mean_beta_i=float(np.mean(ys[:, 1])),
            mean_alpha_i=float(np.mean(ys[:, 3])),
            converged=False,
            n_crossings=len(crossings),
            crossing_times=np.asarray(crossings),
        )

    tc = np.asarray(crossings)
    period = float(np.mean(np.diff(tc)))
    states = np.array([traj.dense(t) if traj.dense is not None else _nearest(traj, t) for t in tc])
    # Component scales from the whole segment: the section coordinate is
    # ~0 at every crossing and must not wreck the relative comparison.
    scale = np.max(np.abs(ys), axis=0)
    scale[scale == 0.0] = 1.0
    rel_jump = np.max(np.abs(np.diff(states, axis=0)) / scale, axis=1)
    converged = bool(np.all(rel_jump[-min(5, len(rel_jump)):] <= 1e-4))

    return LimitCycleMeasurement(
        period=period,
        amplitude_beta_r=0.5 * float(br.max() - br.min()),
        amplitude_alpha_r=0.5 * float(ar.max() - ar.min()),
        mean_beta_i=float(np.mean(ys[:, 1])),
        mean_alpha_i=float(np.mean(ys[:, 3])),
        converged=converged,
        n_crossings=len(tc),
        crossing_times=tc,
    )


def _refine_crossing(traj: Trajectory, ta: float, tb: float) -> float:
    """Bisection for beta_r(t) = 0 on the dense output."""
    if traj.dense is None:
        return 0.5 * (ta + tb)
    f = lambda t: traj.dense(t)[0]
    fa = f(ta)
    for _ in range(80):
        tm = 0.5 * (ta + tb)
        fm = f(tm)
        if fm == 0.0 or (tb - ta) < 1e-13 * max(1.0, abs(tm)):
            return tm
        if (fa < 0.0) == (fm < 0.0):
            ta, fa = tm, fm
        else:
            tb = tm
    return 0.5 * (ta + tb)


def _nearest(traj: Trajectory, t: float) -> np.ndarray:
    return traj.y[np.argmin(np.abs(traj.times - t))]
