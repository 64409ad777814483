"""Material, damping, circuit and parameter data types, plus closed-form
beam oracles (wave speeds, first bending eigenfrequency, tip deflection)
used to validate the finite element solvers.

All quantities are SI base units; unit conversion happens only at I/O
boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

VACUUM_PERMITTIVITY = 8.8541878128e-12  # F/m
STANDARD_GRAVITY = 9.81  # m/s^2

#: First root of the clamped-free frequency equation cos(x)cosh(x) = -1.
CANTILEVER_BETA1_L = 1.8751


def _readonly(a):
    a = np.asarray(a, dtype=float).copy()
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ElasticMaterial:
    """Isotropic linear-elastic material."""

    young_modulus: float  # Pa
    poisson_ratio: float
    density: float  # kg/m^3

    def __post_init__(self):
        if not self.young_modulus > 0:
            raise ValueError(f"young_modulus must be > 0, got {self.young_modulus}")
        if not -1.0 < self.poisson_ratio < 0.5:
            raise ValueError(
                "poisson_ratio must lie in (-1, 0.5); "
                f"got {self.poisson_ratio} (0.5 is the singular incompressible limit)"
            )
        if not self.density > 0:
            raise ValueError(f"density must be > 0, got {self.density}")

    @property
    def shear_modulus(self) -> float:
        """G = E / (2(1+nu))."""
        return self.young_modulus / (2.0 * (1.0 + self.poisson_ratio))

    @property
    def lame_lambda(self) -> float:
        """lambda = nu E / ((1+nu)(1-2nu))."""
        e, nu = self.young_modulus, self.poisson_ratio
        return nu * e / ((1.0 + nu) * (1.0 - 2.0 * nu))


@dataclass(frozen=True)
class PiezoMaterial:
    """Piezoelectric solid in stress-charge (e-form) Voigt notation.

    Voigt component order is (11, 22, 33, 23, 13, 12) with engineering
    shear strains.

    stiffness_voigt : (6, 6) elastic stiffness at constant electric field, Pa
    coupling_voigt : (3, 6) piezoelectric coupling, C/m^2
    permittivity : (3, 3) absolute permittivity at constant strain, F/m
    density : kg/m^3
    """

    stiffness_voigt: np.ndarray
    coupling_voigt: np.ndarray
    permittivity: np.ndarray
    density: float

    def __post_init__(self):
        object.__setattr__(self, "stiffness_voigt", _readonly(self.stiffness_voigt))
        object.__setattr__(self, "coupling_voigt", _readonly(self.coupling_voigt))
        object.__setattr__(self, "permittivity", _readonly(self.permittivity))
        c, e, eps = self.stiffness_voigt, self.coupling_voigt, self.permittivity
        if c.shape != (6, 6) or e.shape != (3, 6) or eps.shape != (3, 3):
            raise ValueError("expected shapes (6,6), (3,6), (3,3)")
        for name, m in (("stiffness_voigt", c), ("permittivity", eps)):
            if not np.allclose(m, m.T, rtol=1e-12, atol=0.0):
                raise ValueError(f"{name} must be symmetric")
            if np.linalg.eigvalsh(m).min() <= 0:
                raise ValueError(f"{name} must be positive definite")
        if not self.density > 0:
            raise ValueError(f"density must be > 0, got {self.density}")


@dataclass(frozen=True)
class RayleighDamping:
    """Proportional damping C = alpha M + beta K."""

    alpha: float = 0.0  # 1/s
    beta: float = 0.0  # s

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("Rayleigh coefficients must be non-negative")


@dataclass(frozen=True)
class CircuitParams:
    """Parallel RC load connected to the floating electrode."""

    resistance: float  # Ohm
    capacitance: float  # F

    def __post_init__(self):
        if not self.resistance > 0:
            raise ValueError("resistance must be > 0")
        if self.capacitance < 0:
            raise ValueError("capacitance must be >= 0")


@dataclass(frozen=True)
class BeamGeometry:
    """Rectangular cantilever cross-section and active (free) length."""

    active_length: float  # m
    width: float  # m
    thickness: float  # m

    def __post_init__(self):
        for name in ("active_length", "width", "thickness"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")

    @property
    def area(self) -> float:
        return self.width * self.thickness

    @property
    def second_moment(self) -> float:
        """I = b h^3 / 12 about the bending axis."""
        return self.width * self.thickness**3 / 12.0


@dataclass
class ParameterVector:
    """Identification parameters theta = [alpha, beta, E, R, C] with box bounds."""

    alpha: float
    beta: float
    young_modulus: float
    resistance: float
    capacitance: float
    lower: np.ndarray = field(default_factory=lambda: DEFAULT_IDENT_LOWER.copy())
    upper: np.ndarray = field(default_factory=lambda: DEFAULT_IDENT_UPPER.copy())

    NAMES = ("alpha", "beta", "young_modulus", "resistance", "capacitance")

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if self.lower.shape != (5,) or self.upper.shape != (5,):
            raise ValueError("bounds must have shape (5,)")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bounds exceed upper bounds")
        v = self.as_array()
        if np.any(v < self.lower) or np.any(v > self.upper):
            bad = [self.NAMES[i] for i in range(5)
                   if not self.lower[i] <= v[i] <= self.upper[i]]
            raise ValueError(f"parameters outside bounds: {', '.join(bad)}")

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha, self.beta, self.young_modulus,
                         self.resistance, self.capacitance])

    def replace_values(self, values) -> "ParameterVector":
        a, b, e, r, c = np.asarray(values, dtype=float)
        return ParameterVector(a, b, e, r, c, self.lower.copy(), self.upper.copy())

    @property
    def damping(self) -> RayleighDamping:
        return RayleighDamping(self.alpha, self.beta)

    @property
    def circuit(self) -> CircuitParams:
        return CircuitParams(self.resistance, self.capacitance)


# Default identification box: alpha [1/s], beta [s], E [Pa], R [Ohm], C [F].
DEFAULT_IDENT_LOWER = np.array([0.01, 0.1e-6, 140e9, 1e6, 0.01e-9])
DEFAULT_IDENT_UPPER = np.array([10.0, 100e-6, 200e9, 50e6, 2e-9])

#: Initial guess used by both identification strategies.
DEFAULT_IDENT_INITIAL = np.array([0.1, 1e-6, 189e9, 10e6, 1e-9])

#: Mild-steel strip of the reference experiment (density from the weighed
#: full strip; modulus from the through-thickness pulse-echo wave speed).
STEEL_BEAM = ElasticMaterial(young_modulus=189e9, poisson_ratio=0.3, density=8014.5)

#: Reference beam: 102 mm active length, 20 x 1.905 mm cross-section.
REFERENCE_BEAM_GEOMETRY = BeamGeometry(active_length=0.102, width=0.020,
                                       thickness=0.001905)

#: Static preload applied at the free end (0.282 kg weight), N.
REFERENCE_TIP_FORCE = 2.766

# Manufacturer data for the PIC 181 sensor disc (relative permittivities
# 717, 717, 665 are converted to absolute values at construction).
_PIC181_STIFFNESS_GPA = [
    [144.1, 79.65, 81.45, 0.0, 0.0, 0.0],
    [79.65, 144.1, 81.45, 0.0, 0.0, 0.0],
    [81.45, 81.45, 134.4, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 27.29, 0.0, 0.0],
    [0.0, 0.0, 0.0, 0.0, 27.29, 0.0],
    [0.0, 0.0, 0.0, 0.0, 0.0, 32.22],
]
_PIC181_COUPLING = [
    [0.0, 0.0, 0.0, 0.0, 10.7, 0.0],
    [0.0, 0.0, 0.0, 10.7, 0.0, 0.0],
    [-5.256, -5.256, 14.53, 0.0, 0.0, 0.0],
]
_PIC181_RELATIVE_PERMITTIVITY = [717.0, 717.0, 665.0]

PIC181 = PiezoMaterial(
    stiffness_voigt=1e9 * np.array(_PIC181_STIFFNESS_GPA),
    coupling_voigt=np.array(_PIC181_COUPLING),
    permittivity=VACUUM_PERMITTIVITY * np.diag(_PIC181_RELATIVE_PERMITTIVITY),
    density=7890.0,
)


def isotropic_stiffness_voigt(mat: ElasticMaterial) -> np.ndarray:
    """6x6 isotropic stiffness in Voigt order (11, 22, 33, 23, 13, 12).

    Built from lambda and G; pairs with engineering shear strains, so the
    shear diagonal carries G (not 2G).
    """
    lam = mat.lame_lambda
    g = mat.shear_modulus
    c = np.zeros((6, 6))
    c[:3, :3] = lam
    c[np.arange(3), np.arange(3)] += 2.0 * g
    c[np.arange(3, 6), np.arange(3, 6)] = g
    return c


def longitudinal_wave_speed(mat: ElasticMaterial) -> float:
    """Bulk longitudinal wave speed c1 = sqrt((lambda + 2G) / rho)."""
    return math.sqrt((mat.lame_lambda + 2.0 * mat.shear_modulus) / mat.density)


def modulus_from_wave_speed(c1: float, poisson_ratio: float, density: float) -> float:
    """Young's modulus consistent with a measured longitudinal wave speed.

    Inverts c1 = sqrt((lambda + 2G)/rho):
    E = rho c1^2 (1+nu)(1-2nu) / (1-nu).
    """
    if not c1 > 0 or not density > 0:
        raise ValueError("wave speed and density must be > 0")
    if not -1.0 < poisson_ratio < 0.5:
        raise ValueError("poisson_ratio must lie in (-1, 0.5)")
    nu = poisson_ratio
    return density * c1**2 * (1.0 + nu) * (1.0 - 2.0 * nu) / (1.0 - nu)


def bernoulli_first_frequency(geom: BeamGeometry, mat: ElasticMaterial) -> float:
    """First bending eigenfrequency of a clamped-free Bernoulli beam, Hz.

    f1 = (beta1 l)^2 / (2 pi) * sqrt(E I / (rho A L^4)).
    """
    ei = mat.young_modulus * geom.second_moment
    mu = mat.density * geom.area
    return (CANTILEVER_BETA1_L**2 / (2.0 * math.pi)
            * math.sqrt(ei / (mu * geom.active_length**4)))


def cantilever_tip_deflection(geom: BeamGeometry, mat: ElasticMaterial,
                              tip_force: float) -> float:
    """Static end deflection delta = F L^3 / (3 E I) under a tip point load."""
    if not math.isfinite(tip_force):
        raise ValueError("tip_force must be finite")
    return (tip_force * geom.active_length**3
            / (3.0 * mat.young_modulus * geom.second_moment))
