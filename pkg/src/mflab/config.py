"""Experiment configuration: a TOML file with four tables, validated up front.

    [experiment]  name, dim, n | n_values, seeds, t_end, sample_stride, out_dir,
                  method ("direct" | "barnes_hut"), theta
    [rotation]    upper = strict upper triangle of J, row-major (default: e1/e2 block)
    [density]     type = "uniform_ball" | "bump", radius, exponent (bump only)
    [integrator]  rtol, atol, energy_tol, collision_floor, dt_min, dt_max, cfl, max_steps
    [diagnostics] counting, eps3, counting_seeds, sobolev, sobolev_s, sobolev_cutoff,
                  sobolev_radial_nodes, sobolev_sphere_degree, eps1

Every key is optional except that a run needs either ``n`` or ``n_values``.
Unknown keys are rejected so typos cannot silently fall back to defaults.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import tomli

from .errors import ConfigError, ParameterError
from .integrator import StepControls
from .nbody import RotationMatrix
from .profiles import profile_from_spec

_TABLES = {
    "experiment": {"name", "dim", "n", "n_values", "seeds", "t_end", "sample_stride",
                   "out_dir", "method", "theta"},
    "rotation": {"upper"},
    "density": {"type", "radius", "exponent"},
    "integrator": {"rtol", "atol", "energy_tol", "collision_floor", "dt_min", "dt_max", "cfl",
                   "max_steps"},
    "diagnostics": {"counting", "eps3", "counting_seeds", "sobolev", "sobolev_s",
                    "sobolev_cutoff", "sobolev_radial_nodes", "sobolev_sphere_degree", "eps1"},
}


@dataclass
class Diagnostics:
    counting: bool = True
    eps3: float | None = None
    counting_seeds: int = 10
    sobolev: bool = True
    sobolev_s: float = -2.0
    sobolev_cutoff: float = 200.0
    sobolev_radial_nodes: int = 256
    sobolev_sphere_degree: int = 17
    eps1: float | None = None


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    dim: int = 3
    n: int | None = None
    n_values: list | None = None
    seeds: list = field(default_factory=lambda: [0])
    t_end: float = 0.5
    sample_stride: float | None = None
    out_dir: str = "out"
    method: str = "direct"
    theta: float = 0.5
    rotation_upper: list | None = None
    density: dict = field(default_factory=lambda: {"type": "uniform_ball", "radius": 1.0})
    integrator: dict = field(default_factory=dict)
    diagnostics: Diagnostics = field(default_factory=Diagnostics)

    # derived objects, built by ``validate``
    def rotation(self) -> RotationMatrix:
        if self.rotation_upper is None:
            return RotationMatrix.default(self.dim)
        return RotationMatrix(self.dim, tuple(self.rotation_upper))

    def profile(self):
        return profile_from_spec(self.density, self.dim)

    def controls(self) -> StepControls:
        return StepControls(**self.integrator)

    def sample_times(self):
        from .nbody import sample_times
        stride = self.sample_stride if self.sample_stride is not None else self.t_end / 10
        return sample_times(self.t_end, dt=stride)

    def resolved(self) -> dict:
        """Plain dict with every default filled in, for the manifest and the config hash."""
        out = asdict(self)
        out["rotation_upper"] = list(self.rotation().upper)
        out["integrator"] = {k: v for k, v in asdict(self.controls()).items()}
        out["density"] = self.profile().to_spec()
        if out["sample_stride"] is None:
            out["sample_stride"] = self.t_end / 10
        return out

    def digest(self) -> str:
        text = json.dumps(self.resolved(), sort_keys=True, default=_json_default)
        return hashlib.sha256(text.encode()).hexdigest()


def _json_default(v):
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    raise TypeError(type(v))


def _expect(cond, fld, msg):
    if not cond:
        raise ConfigError(msg, field=fld)


def _int(v, fld):
    _expect(isinstance(v, int) and not isinstance(v, bool), fld, "must be an integer")
    return v


def _num(v, fld):
    _expect(isinstance(v, (int, float)) and not isinstance(v, bool), fld, "must be a number")
    return float(v)


def from_dict(raw: dict) -> ExperimentConfig:
    for table, body in raw.items():
        _expect(table in _TABLES, table, "unknown table")
        _expect(isinstance(body, dict), table, "must be a table")
        for key in body:
            _expect(key in _TABLES[table], f"{table}.{key}", "unknown key")
    exp = raw.get("experiment", {})
    cfg = ExperimentConfig()
    if "name" in exp:
        _expect(isinstance(exp["name"], str) and exp["name"], "experiment.name",
                "must be a nonempty string")
        cfg.name = exp["name"]
    if "dim" in exp:
        cfg.dim = _int(exp["dim"], "experiment.dim")
    _expect(cfg.dim >= 3, "experiment.dim", "must be >= 3")
    if "n" in exp:
        cfg.n = _int(exp["n"], "experiment.n")
        _expect(cfg.n >= 2, "experiment.n", "must be >= 2")
    if "n_values" in exp:
        vals = exp["n_values"]
        _expect(isinstance(vals, list) and vals, "experiment.n_values", "must be a nonempty list")
        cfg.n_values = [_int(v, "experiment.n_values") for v in vals]
        _expect(all(v >= 2 for v in cfg.n_values), "experiment.n_values", "entries must be >= 2")
        _expect(all(b > a for a, b in zip(cfg.n_values, cfg.n_values[1:])),
                "experiment.n_values", "must be strictly increasing")
    _expect(cfg.n is not None or cfg.n_values is not None, "experiment.n",
            "set n or n_values")
    if "seeds" in exp:
        seeds = exp["seeds"]
        _expect(isinstance(seeds, list) and seeds, "experiment.seeds", "must be a nonempty list")
        cfg.seeds = [_int(s, "experiment.seeds") for s in seeds]
        _expect(all(0 <= s < 2**64 for s in cfg.seeds), "experiment.seeds",
                "seeds must be 64-bit unsigned integers")
    if "t_end" in exp:
        cfg.t_end = _num(exp["t_end"], "experiment.t_end")
    _expect(cfg.t_end > 0 and math.isfinite(cfg.t_end), "experiment.t_end",
            "must be positive and finite")
    if "sample_stride" in exp:
        cfg.sample_stride = _num(exp["sample_stride"], "experiment.sample_stride")
        _expect(0 < cfg.sample_stride <= cfg.t_end, "experiment.sample_stride",
                "must lie in (0, t_end]")
    if "out_dir" in exp:
        _expect(isinstance(exp["out_dir"], str), "experiment.out_dir", "must be a string")
        cfg.out_dir = exp["out_dir"]
    if "method" in exp:
        _expect(exp["method"] in ("direct", "barnes_hut"), "experiment.method",
                "must be 'direct' or 'barnes_hut'")
        cfg.method = exp["method"]
    _expect(cfg.method == "direct" or cfg.dim == 3, "experiment.method",
            "barnes_hut is only available for dim = 3")
    if "theta" in exp:
        cfg.theta = _num(exp["theta"], "experiment.theta")
        _expect(cfg.theta > 0, "experiment.theta", "must be positive")

    rot = raw.get("rotation", {})
    if "upper" in rot:
        _expect(isinstance(rot["upper"], list), "rotation.upper", "must be a list")
        cfg.rotation_upper = [_num(v, "rotation.upper") for v in rot["upper"]]
        need = cfg.dim * (cfg.dim - 1) // 2
        _expect(len(cfg.rotation_upper) == need, "rotation.upper",
                f"needs {need} entries for dim = {cfg.dim}")

    dens = raw.get("density", {})
    spec = {"type": dens.get("type", "uniform_ball"), "radius": dens.get("radius", 1.0)}
    _expect(spec["type"] in ("uniform_ball", "bump"), "density.type",
            "must be 'uniform_ball' or 'bump'")
    spec["radius"] = _num(spec["radius"], "density.radius")
    _expect(spec["radius"] > 0, "density.radius", "must be positive")
    if "exponent" in dens:
        _expect(spec["type"] == "bump", "density.exponent", "only valid for type = 'bump'")
        spec["exponent"] = _num(dens["exponent"], "density.exponent")
        _expect(spec["exponent"] >= 0, "density.exponent", "must be >= 0")
    cfg.density = spec

    integ = raw.get("integrator", {})
    for key, val in integ.items():
        fld = f"integrator.{key}"
        cfg.integrator[key] = _int(val, fld) if key == "max_steps" else _num(val, fld)
        if key != "dt_max":
            _expect(cfg.integrator[key] > 0, fld, "must be positive")
    try:
        cfg.controls()
    except ParameterError as exc:
        raise ConfigError(str(exc), field="integrator") from None

    diag = raw.get("diagnostics", {})
    dg = cfg.diagnostics
    for key in ("counting", "sobolev"):
        if key in diag:
            _expect(isinstance(diag[key], bool), f"diagnostics.{key}", "must be true or false")
            setattr(dg, key, diag[key])
    if "eps3" in diag:
        dg.eps3 = _num(diag["eps3"], "diagnostics.eps3")
        _expect(0 < dg.eps3 < 1, "diagnostics.eps3", "must lie in (0, 1)")
    if "eps1" in diag:
        dg.eps1 = _num(diag["eps1"], "diagnostics.eps1")
        _expect(dg.eps1 > 0, "diagnostics.eps1", "must be positive")
    if "counting_seeds" in diag:
        dg.counting_seeds = _int(diag["counting_seeds"], "diagnostics.counting_seeds")
        _expect(dg.counting_seeds >= 1, "diagnostics.counting_seeds", "must be >= 1")
    if "sobolev_s" in diag:
        dg.sobolev_s = _num(diag["sobolev_s"], "diagnostics.sobolev_s")
    _expect(dg.sobolev_s < -cfg.dim / 2, "diagnostics.sobolev_s",
            f"must be < -dim/2 = {-cfg.dim / 2}")
    if "sobolev_cutoff" in diag:
        dg.sobolev_cutoff = _num(diag["sobolev_cutoff"], "diagnostics.sobolev_cutoff")
        _expect(dg.sobolev_cutoff > 0, "diagnostics.sobolev_cutoff", "must be positive")
    for key in ("sobolev_radial_nodes", "sobolev_sphere_degree"):
        if key in diag:
            setattr(dg, key, _int(diag[key], f"diagnostics.{key}"))
            _expect(getattr(dg, key) >= 1, f"diagnostics.{key}", "must be >= 1")
    if cfg.dim == 3:
        from scipy.integrate import lebedev_rule
        try:
            lebedev_rule(dg.sobolev_sphere_degree)
        except (ValueError, NotImplementedError):
            raise ConfigError("no Lebedev rule of this degree",
                              field="diagnostics.sobolev_sphere_degree") from None
    return cfg


def load(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = tomli.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"no such file: {path}", field="config") from None
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"TOML syntax: {exc}", field="config") from None
    return from_dict(raw)
