"""Experiment configuration: YAML in, fully resolved and validated dict out."""

from __future__ import annotations

import copy
import math
from pathlib import Path

import yaml

from .errors import ConfigError
from .model import CATALOG

DEFAULTS = {
    "problem": {
        "dim": 1,
        "axial": [0.0, 1.0],
        "cross_section": [],
        "nx_cross": [],
        "nz": 201,
        "nt": 100,
        "horizon": 0.1,
        "f": {"name": "square", "p": None},
        "u0": {"preset": "sines", "amplitude": 0.5},
        "g": {"preset": "zero"},
    },
    "decomposition": {"count": 2, "overlap_fraction": 0.2, "bands": None},
    "algorithm": {
        "scheme": "bdf2",
        "stop_tol": 1e-10,
        "max_sweeps": 100,
        "certified": False,
        "newton_tol": 1e-12,
        "newton_max_iter": 25,
        "divergence_threshold": 1e6,
    },
    "theory": {
        "M": 1.0,
        "margin": 0.0,
        "window": "shifted",
        "m_star_variant": "standard",
        "t0": None,
        "error_bound": None,
        "control_power": 2.0,
        "fit_burn_in": 2,
        "fit_stop": None,
    },
    "study": {"overlap_fractions": [0.05, 0.1, 0.2, 0.4]},
    "output": {"slice_times": [], "probe_points": [], "write_fields": True},
}

_SCHEMES = ("bdf2", "euler", "imex")
_U0_PRESETS = ("constant", "gaussian", "sines")
_G_PRESETS = ("zero", "constant", "u0")


def _merge(base: dict, override: dict, path: str, problems: list) -> dict:
    out = copy.deepcopy(base)
    for key, val in (override or {}).items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            # free-form preset blocks accept extra parameters
            if path in ("problem.u0", "problem.g", "problem.f"):
                out[key] = val
            else:
                problems.append(f"{where}: unknown key")
            continue
        if isinstance(base[key], dict) and isinstance(val, dict):
            out[key] = _merge(base[key], val, where, problems)
        else:
            out[key] = val
    return out


def _num(cfg, path, problems, *, positive=False, nonneg=False, integer=False, minimum=None,
         allow_none=False):
    node = cfg
    for part in path.split("."):
        node = node[part]
    if node is None and allow_none:
        return
    ok_type = isinstance(node, int) if integer else isinstance(node, (int, float))
    if isinstance(node, bool) or not ok_type:
        problems.append(f"{path}: expected {'an integer' if integer else 'a number'}, got {node!r}")
        return
    if not integer and not math.isfinite(node):
        problems.append(f"{path}: must be finite, got {node}")
    elif positive and not node > 0:
        problems.append(f"{path}: must be > 0, got {node}")
    elif nonneg and node < 0:
        problems.append(f"{path}: must be >= 0, got {node}")
    elif minimum is not None and node < minimum:
        problems.append(f"{path}: must be >= {minimum}, got {node}")


def validate(cfg: dict) -> list[str]:
    """Every violated constraint of a merged configuration."""
    problems: list[str] = []
    pr = cfg["problem"]
    _num(cfg, "problem.dim", problems, integer=True, minimum=1)
    _num(cfg, "problem.nz", problems, integer=True, minimum=2)
    _num(cfg, "problem.nt", problems, integer=True, minimum=1)
    _num(cfg, "problem.horizon", problems, positive=True)
    ax = pr["axial"]
    if not (isinstance(ax, list) and len(ax) == 2 and all(isinstance(v, (int, float)) for v in ax)):
        problems.append(f"problem.axial: expected [a, b], got {ax!r}")
    elif not ax[0] < ax[1]:
        problems.append(f"problem.axial: needs a < b, got {ax}")
    dim = pr["dim"] if isinstance(pr["dim"], int) else 1
    cs, nxc = pr["cross_section"], pr["nx_cross"]
    if not isinstance(cs, list) or len(cs) != dim - 1:
        problems.append(f"problem.cross_section: expected {dim - 1} [lo, hi] pairs")
    else:
        for i, side in enumerate(cs):
            if not (isinstance(side, list) and len(side) == 2 and side[0] < side[1]):
                problems.append(f"problem.cross_section[{i}]: expected [lo, hi] with lo < hi")
    if not isinstance(nxc, list) or len(nxc) != dim - 1:
        problems.append(f"problem.nx_cross: expected {dim - 1} grid counts")
    elif any(not isinstance(n, int) or n < 2 for n in nxc):
        problems.append("problem.nx_cross: every count must be an integer >= 2")

    f = pr["f"]
    if f.get("name") not in CATALOG:
        problems.append(f"problem.f.name: unknown nonlinearity {f.get('name')!r}")
    p = f.get("p")
    if p is not None:
        if isinstance(p, bool) or not isinstance(p, (int, float)) or not p > 1:
            problems.append(f"problem.f.p: growth exponent must be > 1, got {p!r}")
        elif f.get("name") == "square" and p != 2:
            problems.append(f"problem.f.p: square has p = 2, got {p}")
    elif f.get("name") in ("odd_power", "abs_power"):
        problems.append(f"problem.f.p: required for {f.get('name')}")
    if pr["u0"].get("preset") not in _U0_PRESETS:
        problems.append(f"problem.u0.preset: choose from {_U0_PRESETS}")
    if pr["g"].get("preset") not in _G_PRESETS:
        problems.append(f"problem.g.preset: choose from {_G_PRESETS}")

    dc = cfg["decomposition"]
    if dc["bands"] is None:
        _num(cfg, "decomposition.count", problems, integer=True, minimum=1)
        fr = dc["overlap_fraction"]
        if isinstance(dc["count"], int) and dc["count"] > 1 and not (
            isinstance(fr, (int, float)) and 0 < fr < 1
        ):
            problems.append(f"decomposition.overlap_fraction: must lie in (0, 1), got {fr!r}")
    elif not (isinstance(dc["bands"], list) and dc["bands"]
              and all(isinstance(b, list) and len(b) == 2 for b in dc["bands"])):
        problems.append("decomposition.bands: expected a list of [a_j, b_j] pairs")

    al = cfg["algorithm"]
    if al["scheme"] not in _SCHEMES:
        problems.append(f"algorithm.scheme: choose from {_SCHEMES}, got {al['scheme']!r}")
    _num(cfg, "algorithm.stop_tol", problems, positive=True)
    _num(cfg, "algorithm.max_sweeps", problems, integer=True, minimum=1)
    _num(cfg, "algorithm.newton_tol", problems, positive=True)
    _num(cfg, "algorithm.newton_max_iter", problems, integer=True, minimum=1)
    _num(cfg, "algorithm.divergence_threshold", problems, positive=True)
    if not isinstance(al["certified"], bool):
        problems.append("algorithm.certified: expected true or false")

    _num(cfg, "theory.M", problems, positive=True)
    _num(cfg, "theory.margin", problems, nonneg=True)
    _num(cfg, "theory.t0", problems, positive=True, allow_none=True)
    _num(cfg, "theory.error_bound", problems, positive=True, allow_none=True)
    _num(cfg, "theory.control_power", problems, minimum=2)
    _num(cfg, "theory.fit_burn_in", problems, integer=True, minimum=0)
    _num(cfg, "theory.fit_stop", problems, integer=True, minimum=0, allow_none=True)
    if cfg["theory"]["window"] not in ("shifted", "literal"):
        problems.append("theory.window: choose shifted or literal")
    if cfg["theory"]["m_star_variant"] not in ("standard", "restated"):
        problems.append("theory.m_star_variant: choose standard or restated")

    fr = cfg["study"]["overlap_fractions"]
    if not isinstance(fr, list) or not fr:
        problems.append("study.overlap_fractions: needs at least one fraction")
    elif any(isinstance(v, bool) or not isinstance(v, (int, float)) or not 0 < v < 1 for v in fr):
        problems.append("study.overlap_fractions: every fraction must lie in (0, 1)")

    out = cfg["output"]
    for key in ("slice_times", "probe_points"):
        if not isinstance(out[key], list):
            problems.append(f"output.{key}: expected a list")
    return problems


def resolve(user: dict | None) -> dict:
    """Merge ``user`` over the defaults and validate; raises ConfigError listing all problems."""
    problems: list[str] = []
    if user is not None and not isinstance(user, dict):
        raise ConfigError("configuration root must be a mapping")
    cfg = _merge(DEFAULTS, user or {}, "", problems)
    problems += validate(cfg)
    if problems:
        raise ConfigError(problems)
    return cfg


def load(path: str | Path | None) -> dict:
    if path is None:
        return resolve(None)
    with open(path) as fh:
        try:
            user = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: not valid YAML ({exc})")
    return resolve(user)


def dump(cfg: dict) -> str:
    return yaml.safe_dump(cfg, sort_keys=False)
