"""Run configuration: a single versioned JSON document with every default
embedded, strict validation (unknown keys rejected), and builders for the
geometry/material/solver objects."""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .materials import (BeamGeometry, CircuitParams, ElasticMaterial,
                        ParameterVector, PiezoMaterial, PIC181,
                        RayleighDamping)
from .mesh import AssemblyGeometry, MeshResolution
from .solvers import TimeGrid

CONFIG_VERSION = 1

DEFAULT_CONFIG = {
    "version": CONFIG_VERSION,
    "geometry": {
        "active_length": 0.102,
        "width": 0.020,
        "thickness": 0.001905,
        "clamped_overhang": 0.0,
        "disc_radius": 0.005,
        "disc_thickness": 0.002,
        "disc_center_x": 0.028,
        "laser_point_x": 0.051,
        "weight_point_x": 0.102,
        "disc_polygon_sides": 16,
    },
    "materials": {
        "beam": {"young_modulus": 189e9, "poisson_ratio": 0.3,
                 "density": 8014.5},
        "piezo": "pic181",
    },
    "damping": {"alpha": 0.0, "beta": 0.0},
    "circuit": {"resistance": 10e6, "capacitance": 1e-9},
    "mesh": {"nx": 34, "ny": 8, "nz": 2, "disc_layers": 2, "order": 2},
    "time": {"dt": 2e-5, "t_end": 0.05, "newmark_beta": 0.25,
             "newmark_gamma": 0.5},
    "nitsche_gamma_factor": 2.0e4,
    "load": {"tip_force": 2.766, "gravity": True},
    "identification": {
        "strategy": "sequential",
        "jacobian": "fd",
        "passes": 1,
        "population": 16,
        "generations": 400,
        "seed": 0,
        "measurement_stride": 10,
        "initial": {"alpha": 0.1, "beta": 1e-6, "young_modulus": 189e9,
                    "resistance": 10e6, "capacitance": 1e-9},
        "bounds": {
            "alpha": [0.01, 10.0],
            "beta": [0.1e-6, 100e-6],
            "young_modulus": [140e9, 200e9],
            "resistance": [1e6, 50e6],
            "capacitance": [0.01e-9, 2e-9],
        },
    },
    "synth": {"noise_level": 0.0, "seed": 0},
    "modal": {"n_modes": 5, "include_piezo": True},
    "output": {"directory": "out"},
}


def _merge(base, override, path=""):
    if not isinstance(override, dict):
        raise ConfigError(f"expected object at {path or 'top level'}")
    out = dict(base)
    for key, value in override.items():
        here = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown configuration key: {here}")
        if isinstance(base[key], dict) and not isinstance(base[key], type(None)):
            out[key] = _merge(base[key], value, here)
        else:
            out[key] = value
    return out


def _require_positive(doc, keys, path):
    for key in keys:
        if not (isinstance(doc[key], (int, float)) and doc[key] > 0):
            raise ConfigError(f"{path}.{key} must be a positive number")


@dataclass
class RunConfig:
    """Validated configuration; `doc` is the fully merged document."""

    doc: dict = field(default_factory=lambda: json.loads(json.dumps(DEFAULT_CONFIG)))

    @classmethod
    def from_overrides(cls, overrides: dict | None = None) -> "RunConfig":
        doc = _merge(DEFAULT_CONFIG, overrides or {})
        cfg = cls(doc)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path) as fh:
                overrides = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
        if overrides.get("version", CONFIG_VERSION) != CONFIG_VERSION:
            raise ConfigError(
                f"unsupported config version {overrides.get('version')}")
        return cls.from_overrides(overrides)

    def validate(self) -> None:
        d = self.doc
        if d["version"] != CONFIG_VERSION:
            raise ConfigError(f"unsupported config version {d['version']}")
        g = d["geometry"]
        _require_positive(g, ("active_length", "width", "thickness"),
                          "geometry")
        if g["disc_radius"] < 0:
            raise ConfigError("geometry.disc_radius must be >= 0")
        b = d["materials"]["beam"]
        _require_positive(b, ("young_modulus", "density"), "materials.beam")
        if not -1.0 < b["poisson_ratio"] < 0.5:
            raise ConfigError("materials.beam.poisson_ratio out of range")
        if d["damping"]["alpha"] < 0 or d["damping"]["beta"] < 0:
            raise ConfigError("damping coefficients must be >= 0")
        _require_positive(d["circuit"], ("resistance",), "circuit")
        if d["circuit"]["capacitance"] < 0:
            raise ConfigError("circuit.capacitance must be >= 0")
        m = d["mesh"]
        for key in ("nx", "ny", "nz", "disc_layers"):
            if not (isinstance(m[key], int) and m[key] >= 1):
                raise ConfigError(f"mesh.{key} must be an integer >= 1")
        if m["order"] not in (1, 2):
            raise ConfigError("mesh.order must be 1 or 2")
        t = d["time"]
        _require_positive(t, ("dt", "t_end"), "time")
        if not (2 * t["newmark_beta"] >= t["newmark_gamma"] >= 0.5):
            raise ConfigError("time: need 2*newmark_beta >= newmark_gamma >= 0.5")
        if d["nitsche_gamma_factor"] < 0:
            raise ConfigError("nitsche_gamma_factor must be >= 0")
        ident = d["identification"]
        if ident["strategy"] not in ("sequential", "cmaes"):
            raise ConfigError("identification.strategy must be "
                              "'sequential' or 'cmaes'")
        if ident["jacobian"] not in ("fd", "sensitivity"):
            raise ConfigError("identification.jacobian must be 'fd' or "
                              "'sensitivity'")
        if ident["population"] < 4:
            raise ConfigError("identification.population must be >= 4")
        for key in ("generations", "passes", "measurement_stride"):
            if not (isinstance(ident[key], int) and ident[key] >= 1):
                raise ConfigError(f"identification.{key} must be >= 1")
        theta0 = self.initial_parameters()  # raises if outside bounds
        del theta0
        if d["synth"]["noise_level"] < 0:
            raise ConfigError("synth.noise_level must be >= 0")

    # ------------------------------------------------------------------
    # builders
    # ------------------------------------------------------------------

    def beam_geometry(self) -> BeamGeometry:
        g = self.doc["geometry"]
        return BeamGeometry(g["active_length"], g["width"], g["thickness"])

    def assembly_geometry(self) -> AssemblyGeometry:
        g = self.doc["geometry"]
        return AssemblyGeometry(
            beam=self.beam_geometry(),
            clamped_overhang=g["clamped_overhang"],
            disc_radius=g["disc_radius"],
            disc_thickness=g["disc_thickness"],
            disc_center_x=g["disc_center_x"],
            laser_point_x=g["laser_point_x"],
            weight_point_x=g["weight_point_x"],
            disc_polygon_sides=g["disc_polygon_sides"])

    def beam_material(self) -> ElasticMaterial:
        b = self.doc["materials"]["beam"]
        return ElasticMaterial(b["young_modulus"], b["poisson_ratio"],
                               b["density"])

    def piezo_material(self) -> PiezoMaterial:
        p = self.doc["materials"]["piezo"]
        if p == "pic181":
            return PIC181
        if isinstance(p, dict):
            return PiezoMaterial(
                stiffness_voigt=np.array(p["stiffness_voigt"]),
                coupling_voigt=np.array(p["coupling_voigt"]),
                permittivity=np.array(p["permittivity"]),
                density=p["density"])
        raise ConfigError("materials.piezo must be 'pic181' or a full "
                          "tensor specification")

    def damping(self) -> RayleighDamping:
        d = self.doc["damping"]
        return RayleighDamping(d["alpha"], d["beta"])

    def circuit(self) -> CircuitParams:
        c = self.doc["circuit"]
        return CircuitParams(c["resistance"], c["capacitance"])

    def mesh_resolution(self) -> MeshResolution:
        m = self.doc["mesh"]
        return MeshResolution(m["nx"], m["ny"], m["nz"], m["disc_layers"])

    def mesh_order(self) -> int:
        return self.doc["mesh"]["order"]

    def time_grid(self) -> TimeGrid:
        t = self.doc["time"]
        n_steps = int(round(t["t_end"] / t["dt"]))
        return TimeGrid(t["dt"], max(n_steps, 1), t["newmark_beta"],
                        t["newmark_gamma"])

    def bounds_arrays(self):
        b = self.doc["identification"]["bounds"]
        lower = np.array([b[name][0] for name in ParameterVector.NAMES])
        upper = np.array([b[name][1] for name in ParameterVector.NAMES])
        return lower, upper

    def initial_parameters(self) -> ParameterVector:
        init = self.doc["identification"]["initial"]
        lower, upper = self.bounds_arrays()
        try:
            return ParameterVector(
                *(init[name] for name in ParameterVector.NAMES),
                lower, upper)
        except ValueError as exc:
            raise ConfigError(f"identification.initial: {exc}") from exc

    def scenario_parameters(self) -> ParameterVector:
        """Theta assembled from the damping/materials/circuit sections
        (used by the forward commands)."""
        lower, upper = self.bounds_arrays()
        d, c = self.doc["damping"], self.doc["circuit"]
        vals = [d["alpha"], d["beta"],
                self.doc["materials"]["beam"]["young_modulus"],
                c["resistance"], c["capacitance"]]
        lo = np.minimum(lower, vals)
        hi = np.maximum(upper, vals)
        return ParameterVector(*vals, lo, hi)

    # ------------------------------------------------------------------

    def canonical_json(self) -> str:
        return json.dumps(self.doc, indent=2, sort_keys=True)

    def config_hash(self) -> str:
        payload = json.dumps(self.doc, sort_keys=True,
                             separators=(",", ":")).encode()
        return hashlib.sha256(payload).hexdigest()

    def save(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write(self.canonical_json() + "\n")


def atomic_write_text(path, text: str) -> None:
    """Write-temp-then-rename so partial files never appear."""
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)
