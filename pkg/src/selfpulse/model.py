"""Model parameters, physical-realization maps and the canonical state.

The dynamical core works in scaled units where the parametric coupling
chi = 1 (time is measured in units of 1/chi).  The two physical
realizations (trapped atom in a standing wave, membrane in the middle)
only enter through the map onto the four scaled rates (kappa, gamma,
chi, epsilon); everything downstream is unit-free.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

# Reduced Planck constant, J*s.  Kept as a named constant so scaled-unit
# examples can pass hbar=1 explicitly; only the realization maps need it.
HBAR = 1.0546e-34


@dataclass(frozen=True)
class SystemParams:
    """The four dynamical rates of the scaled model.

    Parameters
    ----------
    kappa : float
        Optical amplitude decay rate (1/time).
    gamma : float
        Mechanical amplitude decay rate (1/time).
    epsilon : float
        Mechanical drive strength (1/time).
    chi : float
        Effective parametric coupling (1/time); 1 after time rescaling.
    nbar : float
        Mechanical bath occupation.  Only 0 is supported; nonzero values
        are rejected rather than silently accepted.
    """

    kappa: float
    gamma: float
    epsilon: float
    chi: float = 1.0
    nbar: float = 0.0

    def __post_init__(self):
        # kappa = 0 is admitted so the undamped conservation oracle can run;
        # operations that divide by kappa enforce positivity themselves.
        if self.kappa < 0:
            raise DomainError(f"kappa must be >= 0, got {self.kappa}")
        if self.gamma < 0:
            raise DomainError(f"gamma must be >= 0, got {self.gamma}")
        if not (self.chi > 0):
            raise DomainError(f"chi must be > 0, got {self.chi}")
        if self.nbar != 0:
            raise DomainError(f"only a zero-temperature bath is supported, got nbar={self.nbar}")


@dataclass(frozen=True)
class AtomRealization:
    """Harmonically trapped atom coupled to a cavity standing wave.

    Fields are in SI-compatible units: ``g`` the single-photon Rabi
    frequency, ``Delta`` the atom-cavity detuning, ``nu`` the trap
    frequency, ``mass`` the atomic mass, ``k_wave`` the cavity wavenumber,
    ``epsilon_c`` the complex cavity drive amplitude and ``delta`` the
    cavity drive detuning.
    """

    g: float
    Delta: float
    nu: float
    mass: float
    k_wave: float
    epsilon_c: complex
    delta: float

    def __post_init__(self):
        if self.Delta == 0:
            raise DomainError("atom-cavity detuning Delta must be nonzero")
        if not (self.nu > 0):
            raise DomainError(f"trap frequency nu must be > 0, got {self.nu}")
        if not (self.mass > 0):
            raise DomainError(f"mass must be > 0, got {self.mass}")


@dataclass(frozen=True)
class MembraneRealization:
    """Dielectric membrane at an extremum of the cavity frequency.

    ``curvature`` is the second derivative of the cavity frequency with
    respect to membrane displacement at the extremum (1/(time*length^2)).
    """

    mass: float
    nu: float
    curvature: float
    epsilon_c: complex
    delta: float

    def __post_init__(self):
        if not (self.nu > 0):
            raise DomainError(f"mechanical frequency nu must be > 0, got {self.nu}")
        if not (self.mass > 0):
            raise DomainError(f"mass must be > 0, got {self.mass}")


@dataclass(frozen=True)
class SemiclassicalState:
    """Complex cavity amplitude alpha and mechanical amplitude beta.

    Bijective with the real 4-vector (beta_r, beta_i, alpha_r, alpha_i),
    the canonical ordering used by the dynamics and linear algebra.
    """

    alpha: complex
    beta: complex

    def to_vector(self) -> np.ndarray:
        b, a = complex(self.beta), complex(self.alpha)
        return np.array([b.real, b.imag, a.real, a.imag])

    @classmethod
    def from_vector(cls, y) -> "SemiclassicalState":
        br, bi, ar, ai = np.asarray(y, dtype=float)
        return cls(alpha=complex(ar, ai), beta=complex(br, bi))


@dataclass(frozen=True)
class SidebandCheck:
    resolved: bool
    margin: float


def lamb_dicke(k_wave: float, mass: float, nu: float, hbar: float = HBAR) -> float:
    """Lamb-Dicke parameter k*sqrt(hbar/(2*m*nu)).

    Raises
    ------
    DomainError
        If ``mass`` or ``nu`` is not positive.
    """
    if not (mass > 0):
        raise DomainError(f"mass must be > 0, got {mass}")
    if not (nu > 0):
        raise DomainError(f"nu must be > 0, got {nu}")
    return k_wave * math.sqrt(hbar / (2.0 * mass * nu))


def coupling_strength(realization, hbar: float = HBAR) -> float:
    """Quadratic optomechanical coupling G for either realization.

    Atom: G = eta^2 g^2 / Delta with eta the Lamb-Dicke parameter.
    Membrane: G = hbar/(4 nu m) times the cavity-frequency curvature.
    """
    if isinstance(realization, AtomRealization):
        r = realization
        eta = lamb_dicke(r.k_wave, r.mass, r.nu, hbar=hbar)
        return eta**2 * r.g**2 / r.Delta
    if isinstance(realization, MembraneRealization):
        r = realization
        return hbar / (4.0 * r.nu * r.mass) * r.curvature
    raise DomainError(f"unsupported realization type: {type(realization).__name__}")


def steady_cavity_amplitude(epsilon_c: complex, kappa: float, delta: float) -> complex:
    """Steady coherent amplitude -i*eps_c / (kappa/2 - i*delta) of the driven cavity."""
    if not (kappa > 0):
        raise DomainError(f"kappa must be > 0, got {kappa}")
    return -1j * epsilon_c / (kappa / 2.0 - 1j * delta)


def effective_coupling(G: float, alpha_bar: complex) -> float:
    """Effective parametric coupling chi = G*|alpha_bar|.

    The drive phase is chosen to make the steady cavity amplitude real,
    so only the magnitude of ``alpha_bar`` enters.
    """
    return G * abs(alpha_bar)


def rescale_to_unit_chi(params: SystemParams) -> SystemParams:
    """Rescale time so the parametric coupling is 1.

    Solutions of the scaled system at time t correspond to the original
    system at time t/chi.
    """
    if not (params.chi > 0):
        raise DomainError(f"chi must be > 0, got {params.chi}")
    c = params.chi
    return SystemParams(
        kappa=params.kappa / c,
        gamma=params.gamma / c,
        epsilon=params.epsilon / c,
        chi=1.0,
        nbar=params.nbar,
    )


def resolved_sideband_check(nu: float, kappa: float) -> SidebandCheck:
    """Check the resolved-sideband condition 2*nu > kappa; margin = 2*nu/kappa."""
    if not (nu > 0):
        raise DomainError(f"nu must be > 0, got {nu}")
    if not (kappa > 0):
        raise DomainError(f"kappa must be > 0, got {kappa}")
    margin = 2.0 * nu / kappa
    return SidebandCheck(resolved=margin > 1.0, margin=margin)


_PARAM_KEYS = {"kappa", "gamma", "chi", "epsilon", "nbar", "realization"}
_ATOM_KEYS = {"type", "g", "Delta", "nu", "mass", "k_wave", "epsilon_c", "delta"}
_MEMBRANE_KEYS = {"type", "mass", "nu", "curvature", "epsilon_c", "delta"}


def _as_complex(value):
    if isinstance(value, str):
        return complex(value.replace(" ", ""))
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return complex(value[0], value[1])
    return complex(value)


def _realization_from_dict(block: dict):
    kind = block.get("type")
    if kind == "atom":
        unknown = set(block) - _ATOM_KEYS
        if unknown:
            raise DomainError(f"unknown realization keys: {sorted(unknown)}")
        return AtomRealization(
            g=float(block["g"]),
            Delta=float(block["Delta"]),
            nu=float(block["nu"]),
            mass=float(block["mass"]),
            k_wave=float(block["k_wave"]),
            epsilon_c=_as_complex(block["epsilon_c"]),
            delta=float(block["delta"]),
        )
    if kind == "membrane":
        unknown = set(block) - _MEMBRANE_KEYS
        if unknown:
            raise DomainError(f"unknown realization keys: {sorted(unknown)}")
        return MembraneRealization(
            mass=float(block["mass"]),
            nu=float(block["nu"]),
            curvature=float(block["curvature"]),
            epsilon_c=_as_complex(block["epsilon_c"]),
            delta=float(block["delta"]),
        )
    raise DomainError(f"realization type must be 'atom' or 'membrane', got {kind!r}")


def params_from_dict(doc: dict) -> SystemParams:
    """Build SystemParams from a flat key-value document.

    Recognized keys: kappa, gamma, chi, epsilon, nbar, realization.
    Unknown keys are an error.  When a realization block is present the
    effective coupling it implies must agree with an explicit ``chi``
    key, if one is given.
    """
    unknown = set(doc) - _PARAM_KEYS
    if unknown:
        raise DomainError(f"unknown parameter keys: {sorted(unknown)}")
    missing = {"kappa", "gamma", "epsilon"} - set(doc)
    if missing:
        raise DomainError(f"missing parameter keys: {sorted(missing)}")

    chi = doc.get("chi")
    if "realization" in doc:
        r = _realization_from_dict(doc["realization"])
        G = coupling_strength(r)
        alpha_bar = steady_cavity_amplitude(r.epsilon_c, float(doc["kappa"]), r.delta)
        chi_derived = effective_coupling(G, alpha_bar)
        if chi is not None and not math.isclose(float(chi), chi_derived, rel_tol=1e-9, abs_tol=0.0):
            raise DomainError(
                f"explicit chi={chi} conflicts with realization-derived chi={chi_derived!r}"
            )
        chi = chi_derived
    if chi is None:
        chi = 1.0

    return SystemParams(
        kappa=float(doc["kappa"]),
        gamma=float(doc["gamma"]),
        epsilon=float(doc["epsilon"]),
        chi=float(chi),
        nbar=float(doc.get("nbar", 0.0)),
    )


def load_params(path) -> SystemParams:
    """Load SystemParams from a JSON file (see ``params_from_dict``)."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise DomainError("parameter file must contain a JSON object")
    return params_from_dict(doc)
