"""Declarative run configuration: INI-style files plus key=value overrides.

A model file holds the coefficient block and the perturbation monomials;
a run file holds precision, inner/stokes/splitting/asymptotics blocks and
the output directory.  Every report embeds the fully resolved configuration
(all defaults materialized) so runs are reproducible byte for byte.
"""
from __future__ import annotations

import configparser
import hashlib
import json
import os
from dataclasses import dataclass, field

from .model import UnfoldingSpec
from .poly import Poly


class ConfigError(ValueError):
    pass


MODEL_COEFFS = ("alpha0", "alpha1", "alpha2", "alpha3", "beta1", "gamma2",
                "gamma3", "gamma4", "gamma5", "h3")


def parse_model_file(path: str) -> UnfoldingSpec:
    """Model format:

    [coefficients]
    alpha0 = 1.0
    ...
    conservative = true

    [perturbation]
    terms =
        f 1 0 2 0 0  0.75
        h 0 0 3 0 0  -0.5

    Each term row: target in {f, g, h}, five exponents (xb yb zb mu nu),
    then the coefficient.
    """
    if not os.path.exists(path):
        raise ConfigError(f"model file not found: {path}")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.read(path)
    if "coefficients" not in cp:
        raise ConfigError(f"model file {path} lacks a [coefficients] section")
    co = cp["coefficients"]
    kwargs = {k: co.get(k, "0") for k in MODEL_COEFFS}
    conservative = co.getboolean("conservative", fallback=False)
    polys = {"f": {}, "g": {}, "h": {}}
    if "perturbation" in cp and cp["perturbation"].get("terms"):
        for line in cp["perturbation"]["terms"].strip().splitlines():
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 7 or parts[0] not in polys:
                raise ConfigError(f"bad perturbation term in {path!r}: {line!r}")
            expo = tuple(int(x) for x in parts[1:6])
            polys[parts[0]][expo] = parts[6]
    try:
        return UnfoldingSpec(fbar=Poly(5, polys["f"]), gbar=Poly(5, polys["g"]),
                             hbar=Poly(5, polys["h"]), conservative=conservative,
                             **kwargs)
    except Exception as e:
        raise ConfigError(f"invalid model {path}: {e}") from e


DEFAULTS = {
    "precision": {
        "mantissa_bits": "192",
        "abs_tol": "1e-40",
        "rel_tol": "1e-40",
    },
    "inner": {
        "beta0": "0.6",
        "rho_in": "4.0",
        "n_theta": "16",
        "r_max_factor": "400",
        "y_deep_factor": "10",
        "panel_order": "16",
        "tol": "1e-24",
        "strip": "0.4",
        "max_iter": "80",
    },
    "stokes": {
        "extraction_depths": "2.0 4.0",
        "ray_angles_deg": "0 15",
        "n_depths": "5",
        "l_plus": "",                 # empty: phase-fit mode
        "l_list": "-1 -2 -3",
    },
    "splitting": {
        "mu_list": "0.04 0.0196 0.0121 0.0081",
        "nu_mode": "conservative",    # conservative | nu0-search | fixed
        "nu_fixed": "0",
        "v_list": "0",
        "n_sec": "32",
        "seed_radius": "1e-3",
        "base_bits": "192",
    },
    "asymptotics": {
        "weighted": "false",
        "gamma": "0.5",
        "matching_deltas": "0.12 0.09 0.07",
    },
    "output": {
        "directory": "out",
    },
}


@dataclass
class RunConfig:
    model_path: str
    raw: dict
    spec: UnfoldingSpec = None

    @classmethod
    def load(cls, path: str, overrides: list[str] = (), precision_bits: int | None = None,
             out_dir: str | None = None) -> "RunConfig":
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        cp.read(path)
        raw = {sec: dict(vals) for sec, vals in DEFAULTS.items()}
        for sec in cp.sections():
            if sec == "model":
                continue
            raw.setdefault(sec, {})
            raw[sec].update(dict(cp[sec]))
        if "model" not in cp or "path" not in cp["model"]:
            raise ConfigError(f"config {path} lacks [model] path = ...")
        model_path = cp["model"]["path"]
        if not os.path.isabs(model_path):
            model_path = os.path.join(os.path.dirname(os.path.abspath(path)), model_path)
        for ov in overrides:
            if "=" not in ov:
                raise ConfigError(f"override must be section.key=value: {ov!r}")
            key, val = ov.split("=", 1)
            if "." not in key:
                raise ConfigError(f"override key needs a section prefix: {ov!r}")
            sec, k = key.split(".", 1)
            raw.setdefault(sec, {})[k.strip()] = val.strip()
        if precision_bits is not None:
            raw["precision"]["mantissa_bits"] = str(int(precision_bits))
        if out_dir is not None:
            raw["output"]["directory"] = out_dir
        cfg = cls(model_path, raw)
        cfg.spec = parse_model_file(model_path)
        cfg.validate()
        return cfg

    def validate(self):
        mus = self.floats("splitting", "mu_list")
        if any(m <= 0 for m in mus):
            raise ConfigError("mu values must be positive")
        if sorted(mus, reverse=True) != mus:
            raise ConfigError("mu_list must be sorted descending")
        for sec in ("precision", "inner"):
            for k, v in self.raw[sec].items():
                if k.endswith("tol") and float(v) <= 0:
                    raise ConfigError(f"{sec}.{k} must be positive")
        if self.raw["splitting"]["nu_mode"] not in ("conservative", "nu0-search", "fixed"):
            raise ConfigError("nu_mode must be conservative | nu0-search | fixed")

    def get(self, sec: str, key: str) -> str:
        return self.raw[sec][key]

    def floats(self, sec: str, key: str) -> list[float]:
        return [float(x) for x in self.raw[sec][key].split()]

    def resolved(self) -> dict:
        out = {sec: dict(sorted(vals.items())) for sec, vals in sorted(self.raw.items())}
        out["model"] = {"path": self.model_path,
                        "canonical": self.spec.canonical_dict()}
        return out

    def content_hash(self, blocks: tuple[str, ...]) -> str:
        payload = {b: self.raw.get(b, {}) for b in blocks}
        payload["model"] = self.spec.canonical_dict()
        s = json.dumps(payload, sort_keys=True, default=str)
        return hashlib.sha256(s.encode()).hexdigest()[:16]
