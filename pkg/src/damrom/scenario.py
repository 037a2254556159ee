"""Tailings-dam level raise: loads, load schedule and boundary conditions.

The impoundment is not meshed. Reservoir water and deposited tailings act as
tractions on the upstream face, the added 1 m fill layer as a surcharge that
ramps up over ``ramp_duration`` and then stays constant.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .assembly import Assembler, BoundaryConditions, DofMap, constrain_dofmap
from .constitutive import MaterialParams, default_material
from .mesh import DamGeometry, Mesh, MeshError, generate_dam_mesh
from .solver import DAY

#: tolerance used for the y <= WL branch test, relative to the dam height
Y_TOL = 1e-9


@dataclass(frozen=True)
class TailingsLoadParams:
    gamma_t: float = 21e3  # N/m^3
    gamma_f: float = 21e3  # N/m^3
    phi: float = np.deg2rad(35.0)

    def __post_init__(self):
        if not 0 < self.phi < np.pi / 2:
            raise ValueError(f"friction angle must lie in (0, pi/2), got {self.phi}")
        if self.gamma_t <= 0 or self.gamma_f <= 0:
            raise ValueError("specific weights must be positive")

    @property
    def K_a(self) -> float:
        s = np.sin(self.phi)
        return (1 - s) / (1 + s)


@dataclass(frozen=True)
class LoadSchedule:
    ramp_duration: float = 10 * DAY
    raise_height: float = 1.0
    hold_until_steady: bool = True
    t_max: float = 365 * DAY

    def __post_init__(self):
        if not self.ramp_duration > 0:
            raise ValueError("ramp duration must be positive")
        if not self.raise_height > 0:
            raise ValueError("raise height must be positive")

    def factor(self, t):
        return np.clip(np.asarray(t, dtype=float) / self.ramp_duration, 0.0, 1.0)


def hydrostatic_load(y, WL: float, gamma_w: float):
    """Reservoir water pressure gamma_w (WL - y), zero above the water level."""
    return gamma_w * np.maximum(WL - np.asarray(y, dtype=float), 0.0)


def tailings_load(y, params: TailingsLoadParams, H: float, WL: float, gamma_w: float = 1e4):
    """Horizontal, vertical and resultant tailings pressure at height ``y``."""
    y = np.asarray(y, dtype=float)
    if np.any(y < -Y_TOL * H) or np.any(y > H * (1 + Y_TOL)):
        raise ValueError(f"height outside [0, {H}]")
    gt = params.gamma_t
    below = gt * (H - WL) + (gt - gamma_w) * (WL - y)
    above = gt * (H - y)
    p_ey = np.where(y <= WL, below, above)
    p_ex = params.K_a * p_ey
    return p_ex, p_ey, np.hypot(p_ex, p_ey)


def crest_load(t, schedule: LoadSchedule, params: TailingsLoadParams):
    """Surcharge of the added fill layer, ``(q_x, q_y)`` in Pa."""
    q_y = params.gamma_f * schedule.raise_height * schedule.factor(t)
    return params.K_a * q_y, q_y


@dataclass
class DamScenario:
    """Complete definition of one dam problem (one hydraulic conductivity)."""

    geometry: DamGeometry = field(default_factory=DamGeometry)
    n_levels: int = 19
    material: MaterialParams = field(default_factory=default_material)
    loads: TailingsLoadParams = field(default_factory=TailingsLoadParams)
    schedule: LoadSchedule = field(default_factory=LoadSchedule)
    beta_multiplier: float = 1.0
    mesh: Mesh | None = None

    def __post_init__(self):
        if self.mesh is None:
            self.mesh = generate_dam_mesh(self.geometry, self.n_levels)

    def with_ks(self, k_s: float) -> "DamScenario":
        return DamScenario(self.geometry, self.n_levels, self.material.with_ks(k_s),
                           self.loads, self.schedule, self.beta_multiplier, self.mesh)

    def boundary_conditions(self) -> BoundaryConditions:
        return build_boundary_conditions(self.mesh, self.geometry, self.material,
                                         self.loads, self.schedule, self.beta_multiplier)

    def build(self) -> Assembler:
        """Dof map with constraints plus an assembler for this scenario."""
        bcs = self.boundary_conditions()
        dm = constrain_dofmap(DofMap(self.mesh), bcs)
        return Assembler(self.mesh, dm, self.material, bcs)

    def fingerprint(self) -> str:
        import hashlib
        g, s, ld = self.geometry, self.schedule, self.loads
        text = repr((g, self.n_levels, s, ld, self.beta_multiplier, self.mesh.fingerprint(),
                     self.material.vg, self.material.elastic.E, self.material.elastic.nu,
                     self.material.fluid))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def _upstream_normal(geom: DamGeometry) -> np.ndarray:
    """Unit normal of the upstream face pointing into the embankment."""
    s = geom.upstream_slope
    return np.array([1.0, -s]) / np.hypot(1.0, s)


def build_boundary_conditions(mesh: Mesh, geom: DamGeometry, material: MaterialParams,
                              loads: TailingsLoadParams, schedule: LoadSchedule,
                              beta_multiplier: float = 1.0) -> BoundaryConditions:
    """Mechanical and hydraulic conditions for every dam boundary part.

    Foundation fixed; upstream faces loaded by tailings (horizontal thrust
    toward the dam, vertical weight downward) plus the fill surcharge and, on
    the wet part, reservoir water pressure along the inward normal; crest
    loaded by the surcharge weight. Pore pressure is hydrostatic on the wet
    upstream face, the downstream face is a seepage face and the rest is
    impervious.
    """
    present = set(mesh.edge_tags.tolist())
    untagged = present - {"UD", "UW", "B", "D", "T"}
    if untagged:
        raise MeshError(f"edges with unknown tags {sorted(untagged)}")
    gw = material.gamma_w
    H, WL = geom.H, geom.WL
    n_in = _upstream_normal(geom)

    def upstream_dry(x, y, t):
        qx, qy = crest_load(t, schedule, loads)
        p_ex, p_ey, _ = tailings_load(np.clip(y, 0, H), loads, H, WL, gw)
        return qx + p_ex, -(qy + p_ey)

    def upstream_wet(x, y, t):
        tx, ty = upstream_dry(x, y, t)
        pw = hydrostatic_load(y, WL, gw)
        return tx + pw * n_in[0], ty + pw * n_in[1]

    def top(x, y, t):
        _, qy = crest_load(t, schedule, loads)
        return 0.0 * x, -qy + 0.0 * x

    return BoundaryConditions(
        displacement={"B": (0.0, 0.0)},
        traction={"UD": upstream_dry, "UW": upstream_wet, "T": top},
        pressure={"UW": lambda x, y: gw * (WL - y)},
        seepage=("D",),
        beta_multiplier=beta_multiplier,
    )
