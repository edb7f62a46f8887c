"""Run configuration: defaults, loading, overrides and validation.

A configuration is a JSON (or YAML) document with three blocks::

    {
      "problem": {"dim": 1, "profile": "two_harmonic", "alpha1": 0.6, "alpha2": 0.3,
                  "a": 1.0, "n_layers": 100, "solver": "tmm", "n_elements": 100},
      "domain":  {"type": "interval", "M": 200},
      "task":    {"J": 6, "n_max": null, "tol": null, "mode": "oracle"},
      "seed": 0
    }

For ``"dim": 2`` the problem block holds ``material`` (``E_matrix``,
``rho_matrix``, ``E_inclusion``, ``rho_inclusion``, ``r``, ``a``) and either
``n_per_side`` or ``msh`` (a path).  Domain types are ``interval``,
``path`` (Gamma-X-M-Gamma, ``n_samples``) and ``ibz`` (interior points at
subdivision ``depth``).
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

PROBLEM_1D = {
    "dim": 1,
    "profile": "two_harmonic",
    "alpha1": 0.6,
    "alpha2": 0.3,
    "alpha": 0.8,
    "E": 1.0,
    "rho": 1.0,
    "a": 1.0,
    "n_layers": 100,
    "solver": "tmm",
    "n_elements": 100,
}

PROBLEM_2D = {
    "dim": 2,
    "material": {"E_matrix": 1.0, "rho_matrix": 1.0, "E_inclusion": 12.0, "rho_inclusion": 1.0, "r": 0.35, "a": 1.0},
    "n_per_side": 24,
    "msh": None,
}

TASK_DEFAULTS = {
    "band1d": {"J": 6, "n_samples": 101},
    "band2d": {"J": 10, "n_samples": 61},
    "svd": {"J": 6, "realified": False},
    "greedy": {"J": 10, "mode": "oracle", "n_max": 35, "tol": None, "norm": "euclidean"},
    "gap": {"J": 6, "n_samples": 401},
    "probe": {"band": 1, "k_real": None, "t_max": None, "threshold": 1e-6},
}

DOMAIN_DEFAULTS = {
    "interval": {"type": "interval", "M": 200},
    "path": {"type": "path", "n_samples": 300},
    "ibz": {"type": "ibz", "depth": 30},
}


@dataclass(frozen=True)
class Diagnostic:
    field: str
    constraint: str
    observed: object

    def __str__(self):
        return f"{self.field}: {self.constraint} (got {self.observed!r})"


def load(path) -> dict:
    """Read a JSON or YAML configuration file."""
    p = Path(path)
    text = p.read_text(encoding="utf-8")
    if p.suffix.lower() in (".yaml", ".yml"):
        import yaml

        return yaml.safe_load(text) or {}
    return json.loads(text)


def _merge(base, over):
    out = copy.deepcopy(base)
    for key, val in (over or {}).items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def resolve(command: str, user: dict | None = None, overrides: dict | None = None) -> dict:
    """Fill defaults for ``command`` and apply flag overrides.

    ``overrides`` keys are ``J``, ``M``, ``tol``, ``mode``, ``domain``,
    ``seed`` and ``n_max``; ``None`` values are ignored.
    """
    user = copy.deepcopy(user or {})
    ov = {k: v for k, v in (overrides or {}).items() if v is not None}
    problem_in = user.get("problem", {})
    domain_type = ov.get("domain") or user.get("domain", {}).get("type")
    dim = problem_in.get("dim")
    if dim is None:
        dim = 2 if (command == "band2d" or domain_type in ("path", "ibz")) else 1
    if command == "greedy" and "profile" not in problem_in and dim == 1:
        problem_in = {"profile": "single_harmonic", **problem_in}
    problem = _merge(PROBLEM_1D if dim == 1 else PROBLEM_2D, problem_in)
    problem["dim"] = dim
    if domain_type is None:
        domain_type = "interval" if dim == 1 else "path"
    domain = _merge(DOMAIN_DEFAULTS.get(domain_type, {"type": domain_type}), user.get("domain", {}))
    domain["type"] = domain_type
    task_defaults = dict(TASK_DEFAULTS.get(command, {}))
    if command == "svd" and dim == 2:
        task_defaults["J"] = 3
    task = _merge(task_defaults, user.get("task", {}))
    for key in ("J", "tol", "mode", "n_max"):
        if key in ov:
            task[key] = ov[key]
    if "M" in ov:
        domain["M"] = ov["M"]
    cfg = {"command": command, "problem": problem, "domain": domain, "task": task, "seed": int(ov.get("seed", user.get("seed", 0)))}
    return cfg


def _positive(diags, field, val, strict=True):
    try:
        ok = val > 0 if strict else val >= 0
    except TypeError:
        ok = False
    if not ok:
        diags.append(Diagnostic(field, "must be positive" if strict else "must be non-negative", val))
    return ok


def _int_at_least(diags, field, val, lo):
    if not isinstance(val, (int, np.integer)) or isinstance(val, bool) or val < lo:
        diags.append(Diagnostic(field, f"must be an integer >= {lo}", val))
        return False
    return True


def reduced_dimension(problem: dict):
    """Size of the reduced pencil, or ``None`` for the transfer-matrix solver."""
    if problem["dim"] == 1:
        return problem["n_elements"] if problem.get("solver") == "fem" else None
    if problem.get("msh"):
        return None
    n = problem.get("n_per_side")
    return n * n if isinstance(n, int) else None


def validate(cfg: dict) -> list:
    """Diagnostics for a resolved configuration; empty iff it is runnable."""
    d = []
    problem, domain, task = cfg.get("problem", {}), cfg.get("domain", {}), cfg.get("task", {})
    if problem.get("dim") == 1:
        prof = problem.get("profile")
        if prof not in ("two_harmonic", "single_harmonic", "homogeneous"):
            d.append(Diagnostic("problem.profile", "must be two_harmonic, single_harmonic or homogeneous", prof))
        else:
            _positive(d, "problem.a", problem.get("a"))
            _int_at_least(d, "problem.n_layers", problem.get("n_layers"), 1)
            if problem.get("solver") not in ("tmm", "fem"):
                d.append(Diagnostic("problem.solver", "must be tmm or fem", problem.get("solver")))
            _int_at_least(d, "problem.n_elements", problem.get("n_elements"), 2)
            t = np.linspace(0, 2 * np.pi, 4001)
            try:
                if prof == "two_harmonic":
                    a1, a2 = float(problem["alpha1"]), float(problem["alpha2"])
                    E = 1 + a1 * np.cos(t) + a2 * np.cos(2 * t)
                    rho = 1 + a1 * np.cos(t) - a2 * np.cos(2 * t)
                    if E.min() <= 0:
                        d.append(Diagnostic("problem.alpha1", "modulus 1 + a1 cos + a2 cos2 must stay positive", [a1, a2]))
                    if rho.min() <= 0:
                        d.append(Diagnostic("problem.alpha2", "density 1 + a1 cos - a2 cos2 must stay positive", [a1, a2]))
                elif prof == "single_harmonic":
                    al = float(problem["alpha"])
                    if abs(al) >= 1:
                        d.append(Diagnostic("problem.alpha", "|alpha| < 1 keeps the profile positive", al))
                else:
                    _positive(d, "problem.E", problem.get("E"))
                    _positive(d, "problem.rho", problem.get("rho"))
            except (KeyError, TypeError, ValueError) as exc:
                d.append(Diagnostic("problem", "profile parameters must be numbers", str(exc)))
    elif problem.get("dim") == 2:
        mat = problem.get("material", {})
        for key in ("E_matrix", "rho_matrix", "E_inclusion", "rho_inclusion", "a"):
            _positive(d, f"problem.material.{key}", mat.get(key))
        r, a = mat.get("r"), mat.get("a")
        if not isinstance(r, (int, float)) or not isinstance(a, (int, float)) or not 0 <= r < a / 2:
            d.append(Diagnostic("problem.material.r", "must satisfy 0 <= r < a/2", r))
        if problem.get("msh"):
            if not Path(problem["msh"]).is_file():
                d.append(Diagnostic("problem.msh", "file must exist", problem["msh"]))
        else:
            _int_at_least(d, "problem.n_per_side", problem.get("n_per_side"), 4)
    else:
        d.append(Diagnostic("problem.dim", "must be 1 or 2", problem.get("dim")))

    dt = domain.get("type")
    if dt == "interval":
        if problem.get("dim") == 2:
            d.append(Diagnostic("domain.type", "interval sampling needs a 1-D problem", dt))
        _int_at_least(d, "domain.M", domain.get("M"), 1)
    elif dt == "path":
        _int_at_least(d, "domain.n_samples", domain.get("n_samples"), 2)
    elif dt == "ibz":
        if problem.get("dim") != 2:
            d.append(Diagnostic("domain.type", "ibz sampling needs a 2-D problem", dt))
        _int_at_least(d, "domain.depth", domain.get("depth"), 3)
    else:
        d.append(Diagnostic("domain.type", "must be interval, path or ibz", dt))

    J = task.get("J")
    if J is not None and _int_at_least(d, "task.J", J, 1):
        nred = reduced_dimension(problem)
        if nred is not None and J > nred:
            d.append(Diagnostic("task.J", f"must not exceed the reduced dimension {nred}", J))
    if "mode" in task and task["mode"] not in ("oracle", "residual"):
        d.append(Diagnostic("task.mode", "must be oracle or residual", task["mode"]))
    if task.get("tol") is not None:
        _positive(d, "task.tol", task["tol"])
    if task.get("n_max") is not None:
        _int_at_least(d, "task.n_max", task["n_max"], 1)
    if "n_samples" in task:
        _int_at_least(d, "task.n_samples", task["n_samples"], 3 if cfg.get("command") == "gap" else 2)
    if cfg.get("command") == "probe":
        _int_at_least(d, "task.band", task.get("band"), 1)
    seed = cfg.get("seed", 0)
    if not isinstance(seed, int) or seed < 0 or seed >= 2**64:
        d.append(Diagnostic("seed", "must be an unsigned 64-bit integer", seed))
    return d
