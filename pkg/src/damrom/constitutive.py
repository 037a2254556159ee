"""Pointwise material laws for unsaturated soil.

Van Genuchten retention and Mualem conductivity in the pressure form used by
the coupled model, mixture density and plane-strain elastic moduli. All laws
accept scalars or numpy arrays of pore pressure (Pa, positive = compression)
and are pure functions.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

#: conductivity floor as a fraction of the saturated value
K_MIN_RATIO = 1e-6


@dataclass(frozen=True)
class VanGenuchtenParams:
    alpha: float  # 1/m, roughly the inverse air-entry suction head
    m: float
    theta_s: float
    theta_r: float
    k_s: float  # m/s
    gamma_w: float = 1e4  # N/m^3, converts pressure to head

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not 0 < self.m < 1:
            raise ValueError(f"m must lie in (0, 1), got {self.m}")
        if not 0 <= self.theta_r < self.theta_s <= 1:
            raise ValueError(
                f"need 0 <= theta_r < theta_s <= 1, got {self.theta_r}, {self.theta_s}")
        if not self.k_s > 0:
            raise ValueError(f"k_s must be positive, got {self.k_s}")
        if not self.gamma_w > 0:
            raise ValueError(f"gamma_w must be positive, got {self.gamma_w}")

    @property
    def k_min(self) -> float:
        return K_MIN_RATIO * self.k_s

    def with_ks(self, k_s: float) -> "VanGenuchtenParams":
        return VanGenuchtenParams(self.alpha, self.m, self.theta_s, self.theta_r, k_s, self.gamma_w)


@dataclass(frozen=True)
class ElasticParams:
    E: float  # Pa
    nu: float
    lam: float = field(init=False)
    mu: float = field(init=False)

    def __post_init__(self):
        lam, mu = lame_from_engineering(self.E, self.nu)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "mu", mu)

    @property
    def p_wave_modulus(self) -> float:
        """Constrained (oedometric) modulus lambda + 2 mu."""
        return self.lam + 2.0 * self.mu


@dataclass(frozen=True)
class FluidSolidParams:
    rho_w: float = 1000.0  # kg/m^3
    rho_s: float = 2700.0  # kg/m^3
    eta: float = 0.38  # porosity
    K_w: float = 2.2e9  # Pa
    g: float = 10.0  # m/s^2

    def __post_init__(self):
        for name in ("rho_w", "rho_s", "K_w", "g"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0 < self.eta < 1:
            raise ValueError(f"porosity must lie in (0, 1), got {self.eta}")

    @property
    def gamma_w(self) -> float:
        return self.rho_w * self.g


@dataclass(frozen=True)
class MaterialParams:
    """Everything the pointwise laws and the assembly need about the soil."""

    vg: VanGenuchtenParams
    elastic: ElasticParams
    fluid: FluidSolidParams

    def __post_init__(self):
        gw = self.fluid.gamma_w
        if abs(self.vg.gamma_w - gw) > 1e-12 * gw:
            raise ValueError(
                f"gamma_w mismatch: retention uses {self.vg.gamma_w}, rho_w*g = {gw}")

    @property
    def gamma_w(self) -> float:
        return self.fluid.gamma_w

    @property
    def k_s(self) -> float:
        return self.vg.k_s

    def with_ks(self, k_s: float) -> "MaterialParams":
        return MaterialParams(self.vg.with_ks(k_s), self.elastic, self.fluid)


def default_material(k_s: float = 1e-8) -> MaterialParams:
    """Soil, water and van Genuchten values of the reference dam problem (SI)."""
    fluid = FluidSolidParams(rho_w=1000.0, rho_s=2700.0, eta=0.38, K_w=2.2e9, g=10.0)
    vg = VanGenuchtenParams(alpha=0.1, m=0.184, theta_s=0.38, theta_r=0.038,
                            k_s=k_s, gamma_w=fluid.gamma_w)
    return MaterialParams(vg, ElasticParams(E=40e6, nu=0.3), fluid)


def lame_from_engineering(E: float, nu: float) -> tuple[float, float]:
    """Return ``(lambda, mu)`` for Young's modulus ``E`` and Poisson ratio ``nu``."""
    if not E > 0:
        raise ValueError(f"Young's modulus must be positive, got {E}")
    if not -1.0 < nu < 0.5:
        raise ValueError(f"Poisson ratio must lie in (-1, 0.5), got {nu}")
    mu = E / (2.0 * (1.0 + nu))
    lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    return lam, mu


def engineering_from_lame(lam: float, mu: float) -> tuple[float, float]:
    E = mu * (3.0 * lam + 2.0 * mu) / (lam + mu)
    nu = lam / (2.0 * (lam + mu))
    return E, nu


def _suction_power(p, vg: VanGenuchtenParams) -> np.ndarray:
    """x = (alpha |p| / gamma_w)^(1/(1-m)) for p < 0, zero otherwise.

    Written in terms of x the laws avoid cancellation near saturation:
    Se^(1/m) = 1/(1+x) and 1 - Se^(1/m) = x/(1+x).
    """
    p = np.asarray(p, dtype=float)
    head = vg.alpha * np.abs(np.minimum(p, 0.0)) / vg.gamma_w
    return head ** (1.0 / (1.0 - vg.m))


def _mualem_factor(x: np.ndarray, m: float) -> np.ndarray:
    """1 - (1 - Se^(1/m))^m = 1 - (x/(1+x))^m, accurate for small and large x."""
    with np.errstate(divide="ignore"):
        return -np.expm1(-m * np.log1p(1.0 / x))


def _scalar(a):
    return a[()] if a.ndim == 0 else a


def effective_saturation(p, vg: VanGenuchtenParams):
    return _scalar((1.0 + _suction_power(p, vg)) ** (-vg.m))


def volumetric_water_content(p, vg: VanGenuchtenParams):
    return effective_saturation(p, vg) * (vg.theta_s - vg.theta_r) + vg.theta_r


def moisture_capacity(p, vg: VanGenuchtenParams, gamma_w: float | None = None):
    """Specific moisture capacity dTheta/dp in 1/Pa (zero for p >= 0).

    Analytic derivative of the composed retention law; positive in the
    unsaturated range.
    """
    gw = vg.gamma_w if gamma_w is None else gamma_w
    x = _suction_power(p, vg)
    c = (vg.alpha * vg.m * (vg.theta_s - vg.theta_r) / ((1.0 - vg.m) * gw)
         / (1.0 + x) * (x / (1.0 + x)) ** vg.m)
    return _scalar(np.where(np.asarray(p) < 0.0, c, 0.0))


def hydraulic_conductivity(p, vg: VanGenuchtenParams):
    x = _suction_power(p, vg)
    kr = (1.0 + x) ** (-0.5 * vg.m) * _mualem_factor(x, vg.m) ** 2
    return _scalar(np.maximum(vg.k_s * kr, vg.k_min))


def bulk_density(p, params: MaterialParams):
    """Mixture density (1 - eta) rho_s + Theta(p) rho_w in kg/m^3."""
    f = params.fluid
    return (1.0 - f.eta) * f.rho_s + volumetric_water_content(p, params.vg) * f.rho_w


def storage_coefficient(p, params: MaterialParams):
    """Coefficient weighting dp/dt in the discrete flow equation.

    Returns ``-(C(p) + Theta(p)/K_w)``, which is non-positive: the
    coupled system subtracts this storage operator, so the realised storage
    (retention slope plus water compressibility) is positive.
    """
    vg = params.vg
    return -(moisture_capacity(p, vg, params.gamma_w)
             + volumetric_water_content(p, vg) / params.fluid.K_w)


def pointwise_laws(p, params: MaterialParams) -> dict[str, np.ndarray]:
    """Evaluate every law at once, sharing the saturation computation."""
    vg = params.vg
    p = np.asarray(p, dtype=float)
    x = _suction_power(p, vg)
    se = (1.0 + x) ** (-vg.m)
    theta = se * (vg.theta_s - vg.theta_r) + vg.theta_r
    cap = np.where(p < 0.0, vg.alpha * vg.m * (vg.theta_s - vg.theta_r)
                   / ((1.0 - vg.m) * params.gamma_w) / (1.0 + x) * (x / (1.0 + x)) ** vg.m, 0.0)
    k = np.maximum(vg.k_s * np.sqrt(se) * _mualem_factor(x, vg.m) ** 2, vg.k_min)
    f = params.fluid
    return {
        "se": se,
        "theta": theta,
        "capacity": cap,
        "k": k,
        "rho": (1.0 - f.eta) * f.rho_s + theta * f.rho_w,
        "storage": -(cap + theta / f.K_w),
    }
