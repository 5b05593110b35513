"""Experiment configuration: JSON schema, defaults and geometric checks."""

from __future__ import annotations

import copy
import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import jsonschema

from .lattice import (DualLattice, GammaDelta, LatticeBasis, LatticeError, SelectionParams,
                      dual_lattice, gamma_delta, is_maximal, parse_lattice)
from .pipeline import DESK_SELECTION, PipelineSettings
from .potential import FourierPotential

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "config_from_dict", "SCHEMA",
           "DEFAULTS", "deviations"]

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Invalid experiment configuration."""


_int_vec = {"type": "array", "items": {"type": "integer"}, "minItems": 1}
_num = {"type": "number"}

SCHEMA = {
    "type": "object",
    "required": ["lattice", "potential", "delta", "b"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "lattice": {
            "oneOf": [
                {"type": "string", "pattern": r"^cubic:[^:]+:[1-3]$"},
                {"type": "array", "items": {"type": "array", "items": _num}, "minItems": 1},
            ]
        },
        "potential": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["gamma"],
                "additionalProperties": False,
                "properties": {"gamma": _int_vec, "re": _num, "im": _num},
            },
        },
        "delta": _int_vec,
        "b": _int_vec,
        "v": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "j": {"type": "array", "items": {"type": "integer"}, "minItems": 1},
        "rho0": {"type": "number", "exclusiveMinimum": 0},
        "levels": {"type": "integer", "minimum": 1},
        "factor": {"type": "number", "exclusiveMinimum": 1},
        "slack": {"type": "number", "exclusiveMinimum": 0},
        "window": {"type": "number", "exclusiveMinimum": 0},
        "resolve": {"enum": ["rank", "drop"]},
        "mu_source": {"enum": ["oracle", "pipeline"]},
        "n_tau": {"type": "integer", "minimum": 1},
        "normalize": {"enum": ["accepted", "domain"]},
        "selection": {"type": "object", "additionalProperties": _num},
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "max_dim": {"type": "integer", "minimum": 1},
                "basis_radius": {"type": ["number", "null"]},
                "basis_window": {"type": ["number", "null"]},
                "trust_tol": _num,
                "energy_pad": _num,
            },
        },
        "jk": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "j_min": {"type": "integer", "minimum": 1},
                "j_max": {"type": "integer", "minimum": 2},
                "order": {"type": "integer", "minimum": 2},
                "extra_terms": {"type": "integer", "minimum": 0},
                "source": {"enum": ["oracle", "pipeline"]},
            },
        },
        "i17": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"m_min": {"type": "integer", "minimum": 1},
                           "m_max": {"type": "integer", "minimum": 2}},
        },
        "identities": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "samples": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer"},
                "c1_rho": {"type": "array", "items": _num},
                "c1_j": {"type": "integer"},
            },
        },
        "tolerances": {"type": "object", "additionalProperties": _num},
        "output": {"type": "string"},
    },
}

DEFAULTS = {
    "name": "experiment",
    "v": 0.3,
    "j": [0, 1],
    "rho0": 8.0,
    "levels": 2,
    "factor": 2.0,
    "slack": 4.0,
    "window": 1.0,
    "resolve": "rank",
    "mu_source": "oracle",
    "n_tau": 64,
    "normalize": "accepted",
    "selection": dict(DESK_SELECTION),
    "solver": {"max_dim": 6000, "basis_radius": None, "basis_window": None,
               "trust_tol": 1e-8, "energy_pad": 4.0},
    "jk": {"j_min": 10, "j_max": 60, "order": 4, "extra_terms": 3, "source": "oracle"},
    "i17": {"m_min": 10, "m_max": 40},
    "identities": {"samples": 50, "seed": 0, "c1_rho": [8.0, 16.0], "c1_j": 0},
    "tolerances": {"mu": 0.05, "J": 0.10, "I16": 0.05, "I20": 0.10, "I17": 0.02,
                   "C1": 0.10, "identity": 1e-12, "Jk": 0.01},
    "output": "results",
}


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    raw: dict
    omega: LatticeBasis
    dual: DualLattice
    potential: FourierPotential
    gd: GammaDelta

    def __getitem__(self, key):
        return self.raw[key]

    @property
    def delta(self) -> tuple[int, ...]:
        return tuple(self.raw["delta"])

    @property
    def b(self) -> tuple[int, ...]:
        return tuple(self.raw["b"])

    @property
    def hash(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def settings(self, **overrides) -> PipelineSettings:
        r, s = self.raw, self.raw["solver"]
        kw = dict(slack=r["slack"], window=r["window"], resolve=r["resolve"], n_tau=r["n_tau"],
                  factor=r["factor"], levels=r["levels"], normalize=r["normalize"],
                  basis_radius=s["basis_radius"], basis_window=s["basis_window"],
                  energy_pad=s["energy_pad"], trust_tol=s["trust_tol"], max_dim=s["max_dim"],
                  selection=dict(r["selection"]))
        kw.update({k: v for k, v in overrides.items() if v is not None})
        return PipelineSettings(**kw)


def _fill(raw: dict) -> dict:
    out = copy.deepcopy(raw)
    if "v" not in out:
        log.warning("no Floquet parameter v given; using v=%s", DEFAULTS["v"])
    for key, val in DEFAULTS.items():
        if isinstance(val, dict):
            merged = copy.deepcopy(val)
            merged.update(out.get(key, {}))
            out[key] = merged
        else:
            out.setdefault(key, copy.deepcopy(val))
    return out


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Validate, fill defaults and build the lattice objects."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {e.message}")
    cfg = _fill(raw)
    if cfg["v"] == 0.5:
        raise ConfigError("config error at v: v = 1/2 gives degenerate directional labels")
    try:
        omega = parse_lattice(cfg["lattice"])
        dual = dual_lattice(omega)
        if len(cfg["delta"]) != dual.dim:
            raise ConfigError(f"config error at delta: expected {dual.dim} coordinates")
        if not is_maximal(cfg["delta"]):
            raise ConfigError(f"config error at delta: {cfg['delta']} is not a maximal element")
        gd = gamma_delta(dual, omega, cfg["delta"])
        if len(cfg["b"]) != gd.rank:
            raise ConfigError(f"config error at b: expected {gd.rank} coordinates in the "
                              "hyperplane lattice")
        if not is_maximal(cfg["b"]):
            raise ConfigError(f"config error at b: {cfg['b']} is not a maximal element")
        modes = []
        for i, rec in enumerate(cfg["potential"]):
            if len(rec["gamma"]) != dual.dim:
                raise ConfigError(f"config error at potential/{i}/gamma: expected {dual.dim} "
                                  "coordinates")
            modes.append((tuple(rec["gamma"]), complex(rec.get("re", 0.0), rec.get("im", 0.0))))
        q = FourierPotential.from_modes(dual, modes)
    except LatticeError as exc:
        raise ConfigError(f"config error: {exc}") from exc
    return ExperimentConfig(raw=cfg, omega=omega, dual=dual, potential=q, gd=gd)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file {path} not found") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    return config_from_dict(raw)


def deviations(settings: PipelineSettings, mu_source: str = "pipeline") -> list[dict]:
    """Constants of this run that differ from the asymptotic construction."""
    sel = dict(settings.selection)
    out = [
        {"quantity": "rho schedule factor", "reference": 3, "used": settings.factor,
         "reason": "rho_k = 3^k rho_0 leaves the desk-scale basis budget after one level"},
        {"quantity": "threshold slack", "reference": 1, "used": settings.slack,
         "reason": "one global multiplier absorbs the unknown finite-rho constants"},
        {"quantity": "ambiguous nodes", "reference": "drop", "used": settings.resolve,
         "reason": "for j=0 the label j=-1 shares the unit window; ties are broken by rank "
                   "when the passing count equals the label count"},
        {"quantity": "basis", "reference": "all plane waves",
         "used": "energy shell within a local ball, trusted by doubling",
         "reason": "keeps the matrix size independent of rho"},
        {"quantity": "derivative test", "reference": "|beta+tau| dLambda/dh",
         "used": "(1/2)|beta+tau| dLambda/dh",
         "reason": "the unnormalized form equals 2|beta+tau|^2 for the matched state"},
        {"quantity": "J prefactor", "reference": "outside the tau integral",
         "used": "4 (beta+tau, b)^2 / |b|^4 per node",
         "reason": "depends on tau; the 4 restores the 1/4 of the second-order term"},
        {"quantity": "mean square of Q from eigenvalues", "reference": "16 pi C",
         "used": "8 C", "reason": "integrals are normalized over one period"},
    ]
    if settings.window != 1:
        out.append({"quantity": "free-value window", "reference": 1, "used": settings.window,
                    "reason": "widened free-value window"})
    if mu_source == "oracle":
        out.append({"quantity": "mu subtracted in J", "reference": "extracted mu",
                    "used": "Hill eigenvalue",
                    "reason": "J amplifies the error of mu by about 4|beta|^2; injection "
                              "separates the two error sources"})
    base = SelectionParams(rho=1.0)
    for name, val in sorted(sel.items()):
        ref = getattr(base, name, None)
        if ref != val:
            out.append({"quantity": f"selection constant {name}", "reference": ref,
                        "used": val, "reason": "asymptotic constant admits no anchor at desk rho"})
    return out
