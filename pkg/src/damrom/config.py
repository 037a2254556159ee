"""Run configuration in engineering units (TOML).

Values are stored as written (MPa, kN/m^3, degrees, days, kPa) so that
parse -> serialize -> parse is the identity; the builder methods convert to
SI. Unknown tables or keys are rejected, and every block is validated by
constructing the corresponding SI objects at load time.
"""
from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import tomli
import tomli_w

from .constitutive import ElasticParams, FluidSolidParams, MaterialParams, VanGenuchtenParams
from .mesh import DamGeometry, read_msh
from .rom import PAPER_SWEEP
from .scenario import DamScenario, LoadSchedule, TailingsLoadParams
from .solver import DAY, PicardControl, StopRule, ThetaScheme


class ConfigError(ValueError):
    """Invalid or unknown configuration entry."""


@dataclass
class GeometryConfig:
    H: float = 10.0  # m
    WL: float = 7.0  # m
    crest_width: float = 4.0  # m
    upstream_slope: float = 2.0  # horizontal per vertical
    downstream_slope: float = 2.0
    n_levels: int = 19
    mesh_file: str = ""  # optional Gmsh file replacing the generated mesh


@dataclass
class MaterialConfig:
    g: float = 10.0  # m/s^2
    K_w: float = 2.2e3  # MPa
    gamma_w: float = 10.0  # kN/m^3
    rho_s: float = 2.7e3  # kg/m^3
    E: float = 40.0  # MPa
    nu: float = 0.3
    eta: float = 0.38
    gamma_f: float = 21.0  # kN/m^3
    gamma_t: float = 21.0  # kN/m^3
    phi: float = 35.0  # degrees
    theta_s: float = 0.38
    theta_r: float = 0.038
    alpha: float = 0.1  # 1/m
    m: float = 0.184
    k_s: float = 1e-8  # m/s


@dataclass
class LoadingConfig:
    ramp_duration: float = 10.0  # days
    raise_height: float = 1.0  # m
    t_max: float = 365.0  # days


@dataclass
class NumericsConfig:
    theta: float = 0.75
    dt: float = 0.1  # days
    picard_tol: float = 1e-6
    picard_max_iters: int = 50
    relaxation: float = 1.0
    stop_tol: float = 1e-2
    stop_scale: float = 1.0  # kPa; pressures are divided by this before the stop norm
    beta_multiplier: float = 1.0


@dataclass
class RomConfig:
    threshold_ratio: float = 1e-4
    sweep: list[float] = field(default_factory=lambda: list(PAPER_SWEEP))  # m/s
    basis_dir: str = "basis"
    snapshot_dir: str = "snapshots"


@dataclass
class OutputConfig:
    directory: str = "out"
    formats: list[str] = field(default_factory=lambda: ["vtk", "json", "csv"])
    field_cadence: int = 10  # steps between field files


_BLOCKS = {
    "geometry": GeometryConfig,
    "material": MaterialConfig,
    "loading": LoadingConfig,
    "numerics": NumericsConfig,
    "rom": RomConfig,
    "output": OutputConfig,
}

_FORMATS = {"vtk", "json", "csv"}


@dataclass
class RunConfig:
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    material: MaterialConfig = field(default_factory=MaterialConfig)
    loading: LoadingConfig = field(default_factory=LoadingConfig)
    numerics: NumericsConfig = field(default_factory=NumericsConfig)
    rom: RomConfig = field(default_factory=RomConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    base_dir: Path = field(default=Path("."), compare=False, repr=False)

    def __post_init__(self):
        self.validate()

    # --- SI builders ------------------------------------------------------------
    def geometry_si(self) -> DamGeometry:
        g = self.geometry
        return DamGeometry(g.H, g.WL, g.crest_width, g.upstream_slope, g.downstream_slope)

    def material_si(self, k_s: float | None = None) -> MaterialParams:
        c = self.material
        fluid = FluidSolidParams(rho_w=c.gamma_w * 1e3 / c.g, rho_s=c.rho_s, eta=c.eta,
                                 K_w=c.K_w * 1e6, g=c.g)
        vg = VanGenuchtenParams(c.alpha, c.m, c.theta_s, c.theta_r,
                                c.k_s if k_s is None else k_s, gamma_w=fluid.gamma_w)
        return MaterialParams(vg, ElasticParams(c.E * 1e6, c.nu), fluid)

    def loads_si(self) -> TailingsLoadParams:
        c = self.material
        return TailingsLoadParams(c.gamma_t * 1e3, c.gamma_f * 1e3, np.deg2rad(c.phi))

    def schedule_si(self) -> LoadSchedule:
        ld = self.loading
        return LoadSchedule(ld.ramp_duration * DAY, ld.raise_height, True, ld.t_max * DAY)

    def scheme(self) -> ThetaScheme:
        return ThetaScheme(self.numerics.theta, self.numerics.dt * DAY)

    def picard(self) -> PicardControl:
        n = self.numerics
        return PicardControl(n.picard_tol, n.picard_max_iters, n.relaxation)

    def stop_rule(self) -> StopRule:
        n = self.numerics
        return StopRule(n.stop_tol, n.stop_scale * 1e3, self.loading.ramp_duration * DAY,
                        self.loading.t_max * DAY)

    def scenario(self, k_s: float | None = None, with_mesh: bool = True) -> DamScenario:
        mesh = None
        if with_mesh and self.geometry.mesh_file:
            mesh = read_msh(self.resolve(self.geometry.mesh_file))
        return DamScenario(self.geometry_si(), self.geometry.n_levels, self.material_si(k_s),
                           self.loads_si(), self.schedule_si(), self.numerics.beta_multiplier,
                           mesh)

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p

    # --- validation and serialisation ---------------------------------------------
    def validate(self) -> None:
        try:
            self.geometry_si()
            self.material_si()
            self.loads_si()
            self.schedule_si()
            self.scheme()
            self.picard()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        g, n, r, o = self.geometry, self.numerics, self.rom, self.output
        if g.n_levels < 2:
            raise ConfigError("geometry.n_levels must be >= 2")
        if not n.stop_tol > 0 or not n.stop_scale > 0 or not n.beta_multiplier > 0:
            raise ConfigError("stop_tol, stop_scale and beta_multiplier must be positive")
        if not 0 < r.threshold_ratio < 1:
            raise ConfigError("rom.threshold_ratio must lie in (0, 1)")
        if not r.sweep or min(r.sweep) <= 0:
            raise ConfigError("rom.sweep must be a non-empty list of positive conductivities")
        if o.field_cadence < 1:
            raise ConfigError("output.field_cadence must be >= 1")
        bad = set(o.formats) - _FORMATS
        if bad:
            raise ConfigError(f"unknown output formats {sorted(bad)}")

    def to_dict(self) -> dict:
        return {name: dataclasses.asdict(getattr(self, name)) for name in _BLOCKS}

    def dumps(self) -> str:
        return tomli_w.dumps(self.to_dict())

    def fingerprint(self) -> str:
        return hashlib.sha256(self.dumps().encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, data: dict, base_dir=".") -> "RunConfig":
        unknown = set(data) - set(_BLOCKS)
        if unknown:
            raise ConfigError(f"unknown configuration tables {sorted(unknown)}")
        blocks = {}
        for name, block_cls in _BLOCKS.items():
            raw = data.get(name, {})
            if not isinstance(raw, dict):
                raise ConfigError(f"[{name}] must be a table")
            blocks[name] = _build_block(name, block_cls, raw)
        return cls(**blocks, base_dir=Path(base_dir))


def _build_block(name: str, block_cls, raw: dict):
    fields = {f.name: f for f in dataclasses.fields(block_cls)}
    unknown = set(raw) - set(fields)
    if unknown:
        raise ConfigError(f"unknown keys in [{name}]: {sorted(unknown)}")
    defaults = block_cls()
    values = {}
    for key, value in raw.items():
        ref = getattr(defaults, key)
        values[key] = _coerce(f"{name}.{key}", value, ref)
    return block_cls(**values)


def _coerce(where: str, value, ref):
    if isinstance(ref, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be true or false")
        return value
    if isinstance(ref, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer")
        return value
    if isinstance(ref, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number")
        return float(value)
    if isinstance(ref, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string")
        return value
    if isinstance(ref, list):
        if not isinstance(value, list):
            raise ConfigError(f"{where} must be a list")
        if ref and isinstance(ref[0], float):
            return [_coerce(where, v, 0.0) for v in value]
        return [_coerce(where, v, "") for v in value]
    raise ConfigError(f"{where}: unsupported value type")


def loads(text: str, base_dir=".") -> RunConfig:
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"malformed TOML: {exc}") from exc
    return RunConfig.from_dict(data, base_dir)


def load_config(path) -> RunConfig:
    path = Path(path)
    return loads(path.read_text(), base_dir=path.parent)


def default_config_text() -> str:
    """The shipped ``dam.toml`` (reference parameter tables)."""
    return resources.files("damrom").joinpath("dam.toml").read_text()


def default_config() -> RunConfig:
    return loads(default_config_text())
