"""TOML configuration loading and resolved-config snapshots.

See ``docs/config.md`` for the schema.
"""

from __future__ import annotations

import math
import sys
from pathlib import Path
from typing import Any, Mapping

from .channel import PathSpec, SystemConfig, db_to_linear
from .errors import ConfigError, InvalidArgument
from .experiments import ExperimentConfig, Scenario

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

_SYSTEM_KEYS = ("f_c", "T_e", "rho", "G_a", "G_a_dbi", "N_T", "N_R", "d_a", "eta",
                "V_s", "nu_en", "T_c")
SCHEMA: dict[str, tuple[str, ...]] = {
    "system": _SYSTEM_KEYS,
    "eve": ("V_e",),
    "ris": ("K", "phi", "spacing"),
    "geometry": ("distance", "ris_x", "ris_y"),
    "pilot": ("L_p", "V_p_db"),
    "experiment": ("trials", "seed", "detector", "raw_sum", "bob_variance", "noiseless",
                   "crn", "grid_step"),
    "paths": ("link", "path_length", "aod", "aoa", "ris_azimuth", "ris_elevation_angle",
              "fresnel_xi", "rough_sigma", "is_los"),
}


def _check_keys(section: str, table: Mapping[str, Any]) -> None:
    if not isinstance(table, Mapping):
        raise ConfigError(f"[{section}] must be a table")
    valid = SCHEMA[section]
    unknown = sorted(set(table) - set(valid))
    if unknown:
        raise ConfigError(f"unknown key(s) {', '.join(unknown)} in [{section}]; "
                          f"valid keys: {', '.join(valid)}")


def _num(section: str, key: str, value, integer: bool = False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"[{section}] {key} must be a number, got {value!r}")
    if integer:
        if float(value) != int(value):
            raise ConfigError(f"[{section}] {key} must be an integer, got {value!r}")
        return int(value)
    if not math.isfinite(value):
        raise ConfigError(f"[{section}] {key} must be finite")
    return float(value)


def _bool(section: str, key: str, value) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(f"[{section}] {key} must be true or false, got {value!r}")
    return value


def load_config_dict(doc: Mapping[str, Any]) -> tuple[Scenario, ExperimentConfig]:
    """Resolve a parsed document into a scenario and experiment options.

    ``None`` values (as written by JSON snapshots) mean "use the default".
    """
    unknown = sorted(set(doc) - set(SCHEMA))
    if unknown:
        raise ConfigError(f"unknown section(s) {', '.join(unknown)}; "
                          f"valid sections: {', '.join(SCHEMA)}")
    sections = {}
    for name in SCHEMA:
        if name == "paths":
            continue
        table = doc.get(name, {})
        _check_keys(name, table)
        sections[name] = {k: v for k, v in table.items() if v is not None}
    try:
        return _resolve(sections, doc.get("paths", []))
    except ConfigError:
        raise
    except InvalidArgument as exc:
        raise ConfigError(str(exc)) from exc


def _resolve(s: dict, paths) -> tuple[Scenario, ExperimentConfig]:
    sysd = s["system"]
    if "G_a" in sysd and "G_a_dbi" in sysd:
        raise ConfigError("[system] give either G_a or G_a_dbi, not both")
    kw: dict[str, Any] = {}
    for key in ("f_c", "T_e", "rho", "d_a", "eta", "V_s", "nu_en", "T_c"):
        if key in sysd:
            kw[key] = _num("system", key, sysd[key])
    for key in ("N_T", "N_R"):
        if key in sysd:
            kw[key] = _num("system", key, sysd[key], integer=True)
    if "G_a_dbi" in sysd:
        kw["G_a"] = db_to_linear(_num("system", "G_a_dbi", sysd["G_a_dbi"]))
    elif "G_a" in sysd:
        kw["G_a"] = _num("system", "G_a", sysd["G_a"])
    if "V_e" in s["eve"]:
        kw["V_e"] = _num("eve", "V_e", s["eve"]["V_e"])
    system = SystemConfig(**kw)

    sc: dict[str, Any] = {"system": system}
    ris, geo, pil = s["ris"], s["geometry"], s["pilot"]
    if "K" in ris:
        sc["K"] = _num("ris", "K", ris["K"], integer=True)
    if "phi" in ris:
        sc["phi"] = _num("ris", "phi", ris["phi"])
    if "spacing" in ris:
        sc["ris_spacing"] = _num("ris", "spacing", ris["spacing"])
    for key in ("distance", "ris_x", "ris_y"):
        if key in geo:
            sc[key] = _num("geometry", key, geo[key])
    if "L_p" in pil:
        sc["L_p"] = _num("pilot", "L_p", pil["L_p"], integer=True)
    if "V_p_db" in pil:
        sc["V_p_db"] = _num("pilot", "V_p_db", pil["V_p_db"])
    if not isinstance(paths, list):
        raise ConfigError("[[paths]] must be an array of tables")
    extra = []
    for i, p in enumerate(paths):
        _check_keys("paths", p)
        p = {k: v for k, v in p.items() if v is not None}
        link = p.pop("link", None)
        if link not in ("d", "g", "f"):
            raise ConfigError(f"paths[{i}].link must be one of d, g, f, got {link!r}")
        if "path_length" not in p:
            raise ConfigError(f"paths[{i}] needs path_length")
        is_los = _bool("paths", "is_los", p.pop("is_los", False))
        spec = {k: _num("paths", k, v) for k, v in p.items()}
        extra.append((link, PathSpec(is_los=is_los, **spec)))
    sc["extra_paths"] = tuple(extra)
    scenario = Scenario(**sc)

    ex, ekw = s["experiment"], {}
    for key in ("trials", "seed"):
        if key in ex:
            ekw[key] = _num("experiment", key, ex[key], integer=True)
    for key in ("raw_sum", "noiseless", "crn"):
        if key in ex:
            ekw[key] = _bool("experiment", key, ex[key])
    for key in ("detector", "bob_variance"):
        if key in ex:
            if not isinstance(ex[key], str):
                raise ConfigError(f"[experiment] {key} must be a string")
            ekw[key] = ex[key]
    if "grid_step" in ex:
        ekw["grid_step"] = _num("experiment", "grid_step", ex["grid_step"])
    return scenario, ExperimentConfig(**ekw)


def load_config(path: str | Path | None) -> tuple[Scenario, ExperimentConfig]:
    """Read a TOML file; ``None`` gives the full default configuration."""
    if path is None:
        return load_config_dict({})
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    return load_config_dict(doc)


def snapshot(sc: Scenario, exp: ExperimentConfig) -> dict[str, Any]:
    """Fully resolved document that :func:`load_config_dict` maps back to
    identical objects (linear ``G_a`` avoids a lossy dB round trip)."""
    cfg = sc.system
    paths = []
    for link, p in sc.extra_paths:
        paths.append({"link": link, "path_length": p.path_length, "aod": p.aod,
                      "aoa": p.aoa, "ris_azimuth": p.ris_azimuth,
                      "ris_elevation_angle": p.ris_elevation_angle,
                      "fresnel_xi": p.fresnel_xi, "rough_sigma": p.rough_sigma,
                      "is_los": p.is_los})
    return {
        "system": {"f_c": cfg.f_c, "T_e": cfg.T_e, "rho": cfg.rho, "G_a": cfg.G_a,
                   "N_T": cfg.N_T, "N_R": cfg.N_R, "d_a": cfg.d_a, "eta": cfg.eta,
                   "V_s": cfg.V_s, "nu_en": cfg.nu_en, "T_c": cfg.T_c},
        "eve": {"V_e": cfg.V_e},
        "ris": {"K": sc.K, "phi": sc.phi, "spacing": sc.ris_spacing},
        "geometry": {"distance": sc.distance, "ris_x": sc.ris_x, "ris_y": sc.ris_y},
        "pilot": {"L_p": sc.L_p, "V_p_db": sc.V_p_db},
        "experiment": {"trials": exp.trials, "seed": exp.seed, "detector": exp.detector,
                       "raw_sum": exp.raw_sum, "bob_variance": exp.bob_variance,
                       "noiseless": exp.noiseless, "crn": exp.crn,
                       "grid_step": exp.grid_step},
        "paths": paths,
    }
