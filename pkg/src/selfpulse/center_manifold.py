"""Quadratic center manifold, normal form and limit-cycle prediction.

At the bifurcation the linearization splits into a marginal (center)
block acting on (beta_r, alpha_r) and a stable block acting on
(beta_i, alpha_i) deviations.  The manifold beta_i = h1(c), alpha_i =
h2(c) is computed to quadratic order by solving the 6x6 linear system
expressing invariance (tangency) at that order; the printed closed
forms for the coefficients exist only as an independent cross-check.

Homogeneous polynomials in two variables are handled as coefficient
vectors: a quadratic (q20, q11, q02) stands for q20 x^2 + q11 x y +
q02 y^2, a cubic (p30, p21, p12, p03) likewise, so substitution of
linear forms reduces to convolution.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NumericalError
from .semiclassics import SystemParams, fixed_point, hopf_frequency, hopf_threshold

#: Absolute residual allowed for the quadratic tangency equations.
TANGENCY_TOL = 1e-10


# ---------------------------------------------------------------------------
# quadratic manifold coefficients
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CMCoefficients:
    """Quadratic coefficients of the manifold (h1 for beta_i, h2 for alpha_i)."""

    A1: float
    B1: float
    C1: float
    A2: float
    B2: float
    C2: float
    denominator_D: float
    source: str  # "tangency-solve" or "printed-formula"
    residual: float = 0.0

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("A1", "B1", "C1", "A2", "B2", "C2")}


def center_block(kappa: float, gamma: float) -> np.ndarray:
    """Marginal 2x2 block acting on (beta_r, alpha_r) deviations."""
    b = hopf_threshold(kappa, gamma).beta_i0h
    return np.array([[kappa / 2.0, 2.0 * b], [-2.0 * b, -kappa / 2.0]])


def stable_block(kappa: float, gamma: float) -> np.ndarray:
    """Stable 2x2 block acting on (beta_i, alpha_i) deviations."""
    b = hopf_threshold(kappa, gamma).beta_i0h
    return np.array([[-gamma - kappa / 2.0, 2.0 * b], [-2.0 * b, -kappa / 2.0]])


def _directional_matrix(M: np.ndarray) -> np.ndarray:
    """Map quadratic coefficients q to those of grad(q) . (M c)."""
    m00, m01, m10, m11 = M[0, 0], M[0, 1], M[1, 0], M[1, 1]
    return np.array([
        [2.0 * m00, m10, 0.0],
        [2.0 * m01, m00 + m11, 2.0 * m10],
        [0.0, m01, 2.0 * m11],
    ])


def cm_denominator(kappa: float, gamma: float) -> float:
    """Common denominator of the closed-form manifold coefficients."""
    return kappa**2 * (4.0 * gamma + 3.0 * kappa) * (
        32.0 * gamma**3 + 96.0 * kappa * gamma**2 + 72.0 * kappa**2 * gamma + 17.0 * kappa**3
    )


def cm_coefficients(kappa: float, gamma: float) -> CMCoefficients:
    """Solve the quadratic-order tangency equations for the manifold.

    Requiring that s = h(c) be invariant under the flow at quadratic
    order gives, with L_c and L_s the center/stable blocks and f the
    pure-center quadratic source of the stable equations,

        grad(h_i)(c) . (L_c c) - [L_s h(c)]_i = f_i(c),

    a 6x6 linear system for (A1, B1, C1, A2, B2, C2).  The source is
    f = (2 x y, x^2) in the center coordinates c = (x, y).

    Raises
    ------
    NumericalError
        If the system is singular or the residual exceeds TANGENCY_TOL
        (cannot occur for kappa > 0: the stable block has no eigenvalue
        equal to a sum of center eigenvalues).
    """
    Lc = center_block(kappa, gamma)
    Ls = stable_block(kappa, gamma)
    Dop = _directional_matrix(Lc)

    M = np.zeros((6, 6))
    M[0:3, 0:3] = Dop - Ls[0, 0] * np.eye(3)
    M[0:3, 3:6] = -Ls[0, 1] * np.eye(3)
    M[3:6, 0:3] = -Ls[1, 0] * np.eye(3)
    M[3:6, 3:6] = Dop - Ls[1, 1] * np.eye(3)
    rhs = np.array([0.0, 2.0, 0.0, 1.0, 0.0, 0.0])

    try:
        w = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"tangency system singular at kappa={kappa}, gamma={gamma}") from exc
    residual = float(np.max(np.abs(M @ w - rhs)))
    if residual > TANGENCY_TOL:
        raise NumericalError(
            f"tangency residual {residual:.3e} exceeds {TANGENCY_TOL:.0e} "
            f"at kappa={kappa}, gamma={gamma}"
        )
    A1, B1, C1, A2, B2, C2 = w
    return CMCoefficients(
        A1=A1, B1=B1, C1=C1, A2=A2, B2=B2, C2=C2,
        denominator_D=cm_denominator(kappa, gamma),
        source="tangency-solve",
        residual=residual,
    )


def closed_form_cm_coefficients(kappa: float, gamma: float) -> CMCoefficients:
    """Closed-form manifold coefficients, for cross-checking the solve.

    The A1 numerator is typeset ambiguously in its published form; the
    reading used here (an overall minus sign, no additive 2) is the one
    that matches the tangency solve to machine precision.
    """
    k, g = kappa, gamma
    D = cm_denominator(k, g)
    root = math.sqrt(2.0) * math.sqrt(k * (k + g))
    A1 = -2.0 * root * k * (27.0 * k**3 + 92.0 * g * k**2 + 96.0 * k * g**2 + 16.0 * g**3) / D
    B1 = 4.0 * k**2 * (11.0 * k**2 + 34.0 * k * g + 32.0 * g**2) * (2.0 * g + 3.0 * k) / D
    C1 = -4.0 * (2.0 * g + 3.0 * k) * root * k * (k**2 + 2.0 * k * g + 4.0 * g**2) / D
    A2 = 2.0 * k * (5.0 * k**3 + 24.0 * g * k**2 + 32.0 * k * g**2 + 16.0 * g**3) * (2.0 * g + 3.0 * k) / D
    B2 = -8.0 * (2.0 * g + 3.0 * k) * root * k**2 * (2.0 * k + 5.0 * g) / D
    C2 = 8.0 * (k + 2.0 * g) * (5.0 * k + 2.0 * g) * k * (k + g) * (2.0 * g + 3.0 * k) / D
    return CMCoefficients(
        A1=A1, B1=B1, C1=C1, A2=A2, B2=B2, C2=C2,
        denominator_D=D, source="printed-formula",
    )


def evaluate_manifold(cm: CMCoefficients, beta_r, alpha_r):
    """Quadratic manifold offsets (h1, h2) relative to (beta_i0h, alpha_i0h)."""
    x = np.asarray(beta_r, dtype=float)
    y = np.asarray(alpha_r, dtype=float)
    h1 = cm.A1 * x**2 + cm.B1 * x * y + cm.C1 * y**2
    h2 = cm.A2 * x**2 + cm.B2 * x * y + cm.C2 * y**2
    return h1, h2


# ---------------------------------------------------------------------------
# normal form
# ---------------------------------------------------------------------------

def normal_form_transform(kappa: float, gamma: float):
    """Linear change of variables (beta_r, alpha_r) = T (u, v) and its inverse.

    T = [[0, 2 beta_i0h], [omega_h, -kappa/2]]; the inverse is evaluated
    from its printed component form rather than by matrix inversion, so
    T @ Tinv == I is a genuine consistency check.
    """
    b = hopf_threshold(kappa, gamma).beta_i0h
    om = hopf_frequency(kappa, gamma)
    T = np.array([[0.0, 2.0 * b], [om, -kappa / 2.0]])
    s = math.sqrt(kappa * (kappa + 2.0 * gamma))
    Tinv = np.array([
        [kappa / (2.0 * s * b), 2.0 / s],
        [1.0 / (2.0 * b), 0.0],
    ])
    return T, Tinv


def to_normal_form(kappa: float, gamma: float, beta_r, alpha_r):
    """Map center-plane coordinates to normal-form coordinates (u, v)."""
    _, Tinv = normal_form_transform(kappa, gamma)
    x = np.asarray(beta_r, dtype=float)
    y = np.asarray(alpha_r, dtype=float)
    u = Tinv[0, 0] * x + Tinv[0, 1] * y
    v = Tinv[1, 0] * x + Tinv[1, 1] * y
    return u, v


def reduced_cubics(kappa: float, gamma: float, cm: CMCoefficients = None):
    """Cubic terms of the flow reduced to the manifold, in (beta_r, alpha_r).

    Returns (N1, N3): coefficient vectors over (x^3, x^2 y, x y^2, y^3)
    for the beta_r and alpha_r equations respectively.
    """
    if cm is None:
        cm = cm_coefficients(kappa, gamma)
    N1 = 2.0 * np.array([-cm.A2, cm.A1 - cm.B2, cm.B1 - cm.C2, cm.C1])
    N3 = -2.0 * np.array([cm.A1, cm.B1, cm.C1, 0.0])
    return N1, N3


def _compose_cubic(p: np.ndarray, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Substitute linear forms x = X.(u,v), y = Y.(u,v) into a cubic."""
    out = np.zeros(4)
    for c, i, j in zip(p, (3, 2, 1, 0), (0, 1, 2, 3)):
        poly = np.array([1.0])
        for _ in range(i):
            poly = np.convolve(poly, X)
        for _ in range(j):
            poly = np.convolve(poly, Y)
        out += c * poly
    return out


def normal_form_cubics(kappa: float, gamma: float, cm: CMCoefficients = None):
    """Cubic coefficients (Nu, Nv) of the reduced flow in (u, v).

    Obtained by explicit polynomial composition of the reduced planar
    cubics with the linear transform; no hand-derived formulas enter.
    The linear part in (u, v) is the rotation [[0, -omega_h], [omega_h, 0]].
    """
    N1, N3 = reduced_cubics(kappa, gamma, cm)
    b = hopf_threshold(kappa, gamma).beta_i0h
    om = hopf_frequency(kappa, gamma)
    X = np.array([0.0, 2.0 * b])           # beta_r = 2 b v
    Y = np.array([om, -kappa / 2.0])        # alpha_r = om u - (kappa/2) v
    N1uv = _compose_cubic(N1, X, Y)
    N3uv = _compose_cubic(N3, X, Y)
    Nu = kappa / (4.0 * b * om) * N1uv + N3uv / om
    Nv = N1uv / (2.0 * b)
    return Nu, Nv


def radial_growth_rate(kappa: float, gamma: float) -> float:
    """Linear growth coefficient d of the radial normal form dr/dt = d*deps*r.

    d = sqrt(8 kappa (kappa+gamma)) / (kappa (3 kappa + 4 gamma)).
    """
    if not (kappa > 0):
        raise DomainError(f"kappa must be > 0, got {kappa}")
    return math.sqrt(8.0 * kappa * (kappa + gamma)) / (kappa * (3.0 * kappa + 4.0 * gamma))


def trace_of_epsilon(kappa: float, gamma: float, epsilon: float) -> float:
    """Drive-dependent trace expression -2 beta_i0(eps)^2/kappa - (kappa+gamma)/2.

    Its central finite difference through the threshold equals
    -trace_derivative/kappa = -d; exposed for that cross-check.
    """
    fp = fixed_point(SystemParams(kappa=kappa, gamma=gamma, epsilon=epsilon))
    return -2.0 * fp.beta_i0**2 / kappa - (kappa + gamma) / 2.0


def trace_derivative(kappa: float, gamma: float) -> float:
    """Closed form sqrt(8 kappa (kappa+gamma)) / (3 kappa + 4 gamma) = d * kappa."""
    return math.sqrt(8.0 * kappa * (kappa + gamma)) / (3.0 * kappa + 4.0 * gamma)


def lyapunov_coefficient_numeric(kappa: float, gamma: float, cm: CMCoefficients = None) -> float:
    """First Lyapunov coefficient from the composed planar cubic system.

    For du/dt = -om v + f(u,v), dv/dt = om u + g(u,v) with purely cubic
    f, g, the standard planar Hopf formula reduces to
    (f_uuu + f_uvv + g_uuv + g_vvv) / 16.
    """
    Nu, Nv = normal_form_cubics(kappa, gamma, cm)
    return (3.0 * Nu[0] + Nu[2] + Nv[1] + 3.0 * Nv[3]) / 8.0


def lyapunov_coefficient(kappa: float, gamma: float, cross_check: bool = True) -> float:
    """Cubic radial coefficient a (negative: the bifurcation is supercritical).

    Evaluates the closed form and, unless ``cross_check`` is disabled,
    compares it against the numeric route through the tangency solve;
    disagreement beyond 1e-6 relative emits a warning but the closed
    form is still returned.
    """
    if not (kappa > 0):
        raise DomainError(f"kappa must be > 0, got {kappa}")
    k, g = kappa, gamma
    num = k**2 * (k + g) * (
        99.0 * k**4 + 490.0 * g * k**3 + 808.0 * k**2 * g**2 + 512.0 * k * g**3 + 128.0 * g**4
    )
    den = 4.0 * (
        128.0 * k**2 * g**4 + 480.0 * k**3 * g**3 + 51.0 * k**6 + 284.0 * k**5 * g + 576.0 * k**4 * g**2
    )
    a = -num / den
    if cross_check:
        a_num = lyapunov_coefficient_numeric(kappa, gamma)
        if abs(a_num - a) > 1e-6 * abs(a):
            warnings.warn(
                f"closed-form a={a!r} and numeric a={a_num!r} disagree beyond 1e-6 relative "
                f"at kappa={kappa}, gamma={gamma}; returning the closed form",
                stacklevel=2,
            )
    return a


@dataclass(frozen=True)
class NormalFormData:
    transform: np.ndarray
    inverse: np.ndarray
    d: float
    a: float
    omega_h: float
    beta_i0h: float


def normal_form(kappa: float, gamma: float) -> NormalFormData:
    T, Tinv = normal_form_transform(kappa, gamma)
    return NormalFormData(
        transform=T,
        inverse=Tinv,
        d=radial_growth_rate(kappa, gamma),
        a=lyapunov_coefficient(kappa, gamma, cross_check=False),
        omega_h=hopf_frequency(kappa, gamma),
        beta_i0h=hopf_threshold(kappa, gamma).beta_i0h,
    )


# ---------------------------------------------------------------------------
# limit-cycle prediction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LimitCyclePrediction:
    """Leading-order periodic orbit for drive epsilon_h + delta_epsilon.

    ``amplitude_A`` is the radius in normal-form units; the beta_r
    amplitude in the original variables is 2 |beta_i0h| A.  The
    imaginary components are the constant O(delta_epsilon)-corrected
    values consistent with the sqrt(delta_epsilon) truncation.
    """

    kappa: float
    gamma: float
    delta_epsilon: float
    amplitude_A: float
    omega_h: float
    beta_i0h: float
    beta_i_const: float
    alpha_i_const: float

    def orbit(self, t, phase: float = 0.0) -> np.ndarray:
        """States (n, 4) sampled along the predicted cycle at times ``t``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        th = self.omega_h * t + phase
        A = self.amplitude_A
        br = 2.0 * self.beta_i0h * A * np.cos(th)
        ar = self.omega_h * A * np.sin(th) - self.kappa * A / 2.0 * np.cos(th)
        bi = np.full_like(t, self.beta_i_const)
        ai = np.full_like(t, self.alpha_i_const)
        return np.column_stack([br, bi, ar, ai])

    @property
    def amplitude_beta_r(self) -> float:
        return 2.0 * abs(self.beta_i0h) * self.amplitude_A


def predict_limit_cycle(kappa: float, gamma: float, delta_epsilon: float) -> LimitCyclePrediction:
    """Normal-form amplitude A = sqrt(d*deps/|a|) and the predicted orbit.

    Warns when delta_epsilon exceeds 20% of the threshold drive, where
    the leading-order truncation degrades.
    """
    if not (delta_epsilon > 0):
        raise DomainError(f"delta_epsilon must be > 0, got {delta_epsilon}")
    hp = hopf_threshold(kappa, gamma)
    if delta_epsilon > 0.2 * hp.epsilon_h:
        warnings.warn(
            f"delta_epsilon={delta_epsilon:.4g} exceeds 0.2*epsilon_h={0.2 * hp.epsilon_h:.4g}; "
            "the leading-order prediction degrades this far from threshold",
            stacklevel=2,
        )
    d = radial_growth_rate(kappa, gamma)
    a = lyapunov_coefficient(kappa, gamma, cross_check=False)
    A = math.sqrt(d * delta_epsilon / abs(a))
    return LimitCyclePrediction(
        kappa=kappa,
        gamma=gamma,
        delta_epsilon=delta_epsilon,
        amplitude_A=A,
        omega_h=hopf_frequency(kappa, gamma),
        beta_i0h=hp.beta_i0h,
        beta_i_const=hp.beta_i0h - 2.0 * delta_epsilon / (3.0 * kappa + 4.0 * gamma),
        alpha_i_const=hp.alpha_i0h
        - 2.0 * math.sqrt(2.0 * kappa * (kappa + gamma)) * delta_epsilon
        / (kappa * (3.0 * kappa + 4.0 * gamma)),
    )


def manifold_point(kappa: float, gamma: float, beta_r: float, alpha_r: float,
                   cm: CMCoefficients = None) -> np.ndarray:
    """Full state on the quadratic manifold above center coordinates (beta_r, alpha_r)."""
    if cm is None:
        cm = cm_coefficients(kappa, gamma)
    hp = hopf_threshold(kappa, gamma)
    h1, h2 = evaluate_manifold(cm, beta_r, alpha_r)
    return np.array([beta_r, hp.beta_i0h + float(h1), alpha_r, hp.alpha_i0h + float(h2)])


def cm_report(kappa: float, gamma: float) -> dict:
    """JSON-ready summary of the reduction at (kappa, gamma)."""
    hp = hopf_threshold(kappa, gamma)
    cm = cm_coefficients(kappa, gamma)
    return {
        "kappa": kappa,
        "gamma": gamma,
        "beta_i0h": hp.beta_i0h,
        "alpha_i0h": hp.alpha_i0h,
        "coefficients": cm.as_dict(),
        "d": radial_growth_rate(kappa, gamma),
        "a": lyapunov_coefficient(kappa, gamma, cross_check=False),
        "a_numeric": lyapunov_coefficient_numeric(kappa, gamma, cm),
        "omega_h": hopf_frequency(kappa, gamma),
        "epsilon_h": hp.epsilon_h,
    }
