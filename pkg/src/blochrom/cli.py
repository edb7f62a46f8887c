"""Command-line driver: ``blochrom <command> [options]``.

Every run writes its data files plus ``manifest.json`` into ``--out``.
Exit status is 0 on success, 1 for invalid configuration and 2 when a
solver fails.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from . import config as cfgmod
from .exceptions import BlochROMError, NoClosureFound
from .parallel import set_threads

MANIFEST_SCHEMA = "manifest.schema.json"


def manifest_schema() -> dict:
    return json.loads(resources.files("blochrom").joinpath("schemas", MANIFEST_SCHEMA).read_text(encoding="utf-8"))


# -- building blocks ------------------------------------------------------------


def _profile(problem):
    from .solver1d import MaterialProfile1D

    kind = problem["profile"]
    keys = {"two_harmonic": ("alpha1", "alpha2"), "single_harmonic": ("alpha",), "homogeneous": ("E", "rho")}[kind]
    return MaterialProfile1D(kind, {k: float(problem[k]) for k in keys}, float(problem["a"]), int(problem["n_layers"]))


def _material(problem):
    from .solver2d import Material2D

    return Material2D(**{k: float(v) for k, v in problem["material"].items()})


def _family(problem, extra_inputs):
    """Affine family for the problem (1-D FEM or 2-D FEM)."""
    if problem["dim"] == 1:
        from .solver1d import fem_family

        return fem_family(_profile(problem), int(problem["n_elements"]))
    from .solver2d import assemble_global, bloch_reduce, generate_structured

    mat = _material(problem)
    if problem.get("msh"):
        from .msh import parse_msh

        data = Path(problem["msh"]).read_bytes()
        extra_inputs.append(data)
        mesh = parse_msh(data)
    else:
        mesh = generate_structured(int(problem["n_per_side"]), mat)
    return bloch_reduce(*assemble_global(mesh, mat), mesh)


def _domain_points(cfg):
    from .nwidth import interval_grid
    from .solver2d import ibz_interior, ibz_path

    dom, prob = cfg["domain"], cfg["problem"]
    a = float(prob["a"] if prob["dim"] == 1 else prob["material"]["a"])
    if dom["type"] == "interval":
        return interval_grid(int(dom["M"]), a)[:, None]
    if dom["type"] == "path":
        if prob["dim"] == 1:
            return np.linspace(0, np.pi / a, int(dom["n_samples"]))[:, None]
        return ibz_path(int(dom["n_samples"]), a)[0]
    return ibz_interior(int(dom["depth"]), a)


def _fmt(x) -> str:
    return repr(float(x))


def _write_csv(path: Path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    path.write_text(buf.getvalue(), encoding="utf-8", newline="")


def _write_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8", newline="")


def _bands_rows(s, k, omega):
    rows = []
    for i in range(k.shape[0]):
        ky = k[i, 1] if k.shape[1] > 1 else 0.0
        for j in range(omega.shape[1]):
            rows.append([_fmt(s[i]), _fmt(k[i, 0]), _fmt(ky), j + 1, _fmt(omega[i, j])])
    return rows


# -- tasks ----------------------------------------------------------------------


def task_band1d(cfg, out, ctx):
    from .solver1d import TMMSolver

    prob, task = cfg["problem"], cfg["task"]
    J, a = int(task["J"]), float(prob["a"])
    k = np.linspace(0.0, np.pi / a, int(task["n_samples"]))
    if prob["solver"] == "tmm":
        w2 = TMMSolver(_profile(prob)).eigenvalues(k, J)
    else:
        fam = _family(prob, ctx["inputs"])
        w2 = np.array([fam.eigenvalues(kk, J) for kk in k])
        ctx["full_solves"] += k.size
    omega = np.sqrt(np.clip(w2, 0.0, None))
    _write_csv(out / "bands.csv", ["path_coord", "kx", "ky", "band", "omega"], _bands_rows(k, k[:, None], omega))
    return ["bands.csv"]


def task_band2d(cfg, out, ctx):
    from .solver2d import band_structure, ibz_vertices

    prob, task = cfg["problem"], cfg["task"]
    fam = _family(prob, ctx["inputs"])
    s, k, omega = band_structure(fam, ibz_vertices(float(prob["material"]["a"])), int(task["J"]), int(task["n_samples"]))
    ctx["full_solves"] += k.shape[0]
    _write_csv(out / "bands.csv", ["path_coord", "kx", "ky", "band", "omega"], _bands_rows(s, k, omega))
    return ["bands.csv"]


def _snapshots(cfg, ctx, J, k):
    from .nwidth import collect_snapshots
    from .solver1d import TMMSolver

    prob = cfg["problem"]
    if prob["dim"] == 1 and prob["solver"] == "tmm":
        profile = _profile(prob)
        return collect_snapshots(TMMSolver(profile), k[:, 0], range(1, J + 1), np.sqrt(profile.h), "sqrt(dx)", cfg["domain"]["type"])
    fam = _family(prob, ctx["inputs"])
    ctx["full_solves"] += k.shape[0]
    return collect_snapshots(fam, k, range(1, J + 1), 1.0, "mass-normalized", cfg["domain"]["type"])


def task_svd(cfg, out, ctx):
    from .exceptions import FitRangeEmpty
    from .nwidth import fit_decay, svd_decay

    J = int(cfg["task"]["J"])
    snap = _snapshots(cfg, ctx, J, _domain_points(cfg))
    files, fits = [], {}
    for j in range(1, J + 1):
        res = svd_decay(snap.select_bands(j), realified=bool(cfg["task"].get("realified", False)))
        name = f"decay_band{j}.csv"
        (out / name).write_text(res.to_csv(), encoding="utf-8", newline="")
        files.append(name)
        entry = {"n_at_1e-10": res.n_for(1e-10), "n_at_1e-12": res.n_for(1e-12)}
        for model in ("exp", "stretched"):
            try:
                entry[model] = fit_decay(res.sigma, model).to_dict()
            except FitRangeEmpty as exc:
                entry[model] = {"error": str(exc)}
        fits[str(j)] = entry
    _write_json(out / "fits.json", fits)
    return files + ["fits.json"]


def task_greedy(cfg, out, ctx):
    from .exceptions import Stagnation
    from .greedy import oracle_greedy, residual_greedy, selection_pattern_report
    from .nwidth import SnapshotSet, collect_snapshots
    from .solver1d import TMMSolver

    prob, task = cfg["problem"], cfg["task"]
    J = int(task["J"])
    k = _domain_points(cfg)
    d = prob["dim"]
    a = float(prob["a"] if d == 1 else prob["material"]["a"])
    init_k = np.array([np.pi / (2 * a)]) if d == 1 else np.array([2 * np.pi / (3 * a), np.pi / (3 * a)])
    mode = task["mode"]
    if mode == "oracle":
        tol = 1e-11 if task.get("tol") is None else float(task["tol"])
        if d == 1 and prob["solver"] == "tmm":
            solver = TMMSolver(_profile(prob))
            snap = collect_snapshots(solver, k[:, 0], range(1, J + 1), np.sqrt(solver.dx), "sqrt(dx)")
            init = solver(init_k, J)[1][0] * np.sqrt(solver.dx)
            lookup_vals = lambda kk, b: np.sqrt(solver.eigenvalues([kk], b)[0, b - 1])  # noqa: E731
        else:
            fam = _family(prob, ctx["inputs"])
            snap = collect_snapshots(fam, k, range(1, J + 1))
            init = fam.solve(init_k, J).vectors
            ctx["full_solves"] += k.shape[0] + 1
            lookup_vals = lambda kk, b: np.sqrt(max(fam.eigenvalues(kk, b)[b - 1], 0.0))  # noqa: E731
        run = lambda: oracle_greedy(snap, J, init=init, init_k=init_k, n_max=task.get("n_max"), tol=tol)  # noqa: E731
    else:
        tol = 1e-10 if task.get("tol") is None else float(task["tol"])
        fam = _family(prob, ctx["inputs"])
        audit = None
        if task.get("audit", d == 1):
            raw = collect_snapshots(fam, k, range(1, J + 1))
            audit = SnapshotSet(raw.S / np.linalg.norm(raw.S, axis=0), raw.k, raw.band, "unit", cfg["domain"]["type"])
            ctx["full_solves"] += k.shape[0]
        run = lambda: residual_greedy(fam, k, J, init_k=init_k, n_max=task.get("n_max"), tol=tol, norm=task.get("norm", "euclidean"), audit=audit)  # noqa: E731
        lookup_vals = lambda kk, b: np.sqrt(max(fam.eigenvalues(kk, b)[b - 1], 0.0))  # noqa: E731
    termination = "converged"
    try:
        basis, hist = run()
    except Stagnation as exc:
        # the basis already resolves the selected vector to round-off: keep what was built
        print(f"warning: {exc}", file=sys.stderr)
        basis, hist, termination = exc.basis, exc.history, "stagnation"
    if termination == "converged" and basis.n >= (task.get("n_max") or np.inf):
        termination = "n_max"
    if mode == "residual":
        ctx["full_solves"] += hist.rows[-1]["full_solves"]
    (out / "history.csv").write_text(hist.to_csv(), encoding="utf-8", newline="")
    sel = selection_pattern_report(hist, lookup_vals)
    rows = []
    for r in sel:
        kk = np.atleast_1d(r["k"])
        rows.append([r["step"], _fmt(kk[0]), _fmt(kk[1] if kk.size > 1 else 0.0), r["band"], _fmt(r["omega"])])
    _write_csv(out / "selections.csv", ["step", "kx", "ky", "band", "omega"], rows)
    last = hist.rows[-1]
    _write_json(
        out / "greedy_summary.json",
        {
            "mode": mode,
            "termination": termination,
            "n": basis.n,
            "tol": tol,
            "sigma1": hist.sigma1,
            "final_indicator": last["indicator"],
            "final_true_error": last["true_error"],
            "full_solves": last["full_solves"],
        },
    )
    return ["history.csv", "selections.csv", "greedy_summary.json"]


def task_gap(cfg, out, ctx):
    from .solver1d import TMMSolver
    from .solver2d import ibz_path
    from .spectral import eigenvalue_sweep, gap_profile, lipschitz_estimate

    prob, task = cfg["problem"], cfg["task"]
    J, n = int(task["J"]), int(task["n_samples"])
    if prob["dim"] == 1:
        k = np.linspace(0.0, np.pi / float(prob["a"]), n)[:, None]
        solver = TMMSolver(_profile(prob)) if prob["solver"] == "tmm" else _family(prob, ctx["inputs"])
    else:
        k = ibz_path(n, float(prob["material"]["a"]))[0] if cfg["domain"]["type"] != "ibz" else _domain_points(cfg)
        solver = _family(prob, ctx["inputs"])
    vals = eigenvalue_sweep(solver, k, J + 1)
    summaries, files = [], []
    for j in range(1, J + 1):
        gp = gap_profile(solver, k, j=j, values=vals)
        gp.L = lipschitz_estimate(solver, k, J + 1, bands=[b for b in (j - 1, j, j + 1) if b >= 1], values=vals).L
        name = f"gap_band{j}.csv"
        (out / name).write_text(gp.to_csv(), encoding="utf-8", newline="")
        files.append(name)
        summaries.append(gp.summary())
    _write_json(out / "gap_summary.json", summaries)
    return files + ["gap_summary.json"]


def task_probe(cfg, out, ctx):
    from .spectral import gap_closure_probe

    prob, task = cfg["problem"], cfg["task"]
    fam = _family(prob, ctx["inputs"])
    a = fam.lattice.a
    k_real = task.get("k_real")
    if k_real is None:
        k_real = [np.pi / (2 * a)] if fam.lattice.dim == 1 else [2 * np.pi / (3 * a), np.pi / (3 * a)]
    try:
        r = gap_closure_probe(fam, k_real, j=int(task["band"]), t_max=task.get("t_max"), threshold=float(task["threshold"]))
        res = {"found": True, "distance": r.distance, "k": [[float(z.real), float(z.imag)] for z in r.k], "relative_gap": r.relative_gap}
    except NoClosureFound as exc:
        res = {"found": False, "message": str(exc)}
    res.update({"band": int(task["band"]), "k_real": [float(x) for x in np.atleast_1d(k_real)]})
    _write_json(out / "probe.json", res)
    return ["probe.json"]


TASKS = {
    "band1d": task_band1d,
    "band2d": task_band2d,
    "svd": task_svd,
    "greedy": task_greedy,
    "gap": task_gap,
    "probe": task_probe,
}


# -- manifest ---------------------------------------------------------------------


def git_blob_hash(data: bytes) -> str:
    """Content hash in the git object format (``sha1("blob <len>\\0" + data)``)."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def input_hash(cfg: dict, extra: list) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    for e in extra:
        blob += b"\0" + e
    return git_blob_hash(blob)


def write_manifest(out: Path, command, cfg, files, ctx, wall, threads):
    entries = [{"path": f, "sha256": hashlib.sha256((out / f).read_bytes()).hexdigest()} for f in sorted(files)]
    man = {
        "schema_version": 1,
        "tool": "blochrom",
        "version": __version__,
        "command": command,
        "config": cfg,
        "input_hash": input_hash(cfg, ctx["inputs"]),
        "seed": cfg["seed"],
        "threads": threads,
        "wall_time_s": wall,
        "full_solves": ctx["full_solves"],
        "outputs": entries,
    }
    _write_json(out / "manifest.json", man)
    return man


# -- argument parsing ---------------------------------------------------------------


def _common(p):
    p.add_argument("--config", help="JSON or YAML configuration file")
    p.add_argument("--out", default="out", help="output directory (default: out)")
    p.add_argument("--threads", type=int, default=1, help="worker threads for wave-vector sweeps")
    p.add_argument("--seed", type=int, default=None, help="seed recorded for randomized paths")
    p.add_argument("--J", type=int, default=None, help="number of bands")
    p.add_argument("--M", type=int, default=None, help="number of interval samples")
    p.add_argument("--tol", type=float, default=None, help="greedy stopping tolerance")
    p.add_argument("--n-max", dest="n_max", type=int, default=None, help="maximum basis size")
    p.add_argument("--mode", choices=("oracle", "residual"), default=None, help="greedy variant")
    p.add_argument("--domain", choices=("path", "ibz"), default=None, help="2-D sampling domain")


def build_parser():
    ap = argparse.ArgumentParser(prog="blochrom", description="Bloch band solvers, n-width diagnostics and reduced bases.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, text in (
        ("band1d", "1-D dispersion table"),
        ("band2d", "2-D dispersion along Gamma-X-M-Gamma"),
        ("svd", "snapshot singular values and decay fits"),
        ("greedy", "oracle or residual greedy basis"),
        ("gap", "spectral gap profiles and radius bounds"),
        ("probe", "complex wave-vector gap-closure probe"),
        ("validate", "check a configuration and list problems"),
    ):
        p = sub.add_parser(name, help=text)
        _common(p)
        if name == "validate":
            p.add_argument("--command-for", dest="command_for", default="band1d", choices=sorted(TASKS), help="task the config is meant for")
    mesh = sub.add_parser("mesh", help="generate or parse MSH 2.2 meshes")
    msub = mesh.add_subparsers(dest="mesh_command", required=True)
    g = msub.add_parser("gen", help="write a structured unit-cell mesh")
    _common(g)
    g.add_argument("--n-per-side", dest="n_per_side", type=int, default=None)
    pp = msub.add_parser("parse", help="read a mesh and export its affine family")
    _common(pp)
    pp.add_argument("path", help="MSH 2.2 ASCII file")
    return ap


def _fail(code, msg):
    print(f"error: {msg}", file=sys.stderr)
    return code


def _mesh_summary(mesh, fam):
    return {
        "nodes": int(mesh.n_nodes),
        "triangles": int(mesh.triangles.shape[0]),
        "inclusion_triangles": int(np.count_nonzero(mesh.region)),
        "left_right_pairs": int(mesh.pairs_lr.shape[0]),
        "bottom_top_pairs": int(mesh.pairs_bt.shape[0]),
        "reduced_dimension": int(fam.dim),
        "terms": int(len(fam.terms)),
    }


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        user = cfgmod.load(args.config) if args.config else {}
    except (OSError, ValueError) as exc:
        return _fail(1, f"config: cannot read {args.config}: {exc}")
    if not isinstance(user, dict):
        return _fail(1, "config: top level must be a mapping")
    overrides = {"J": args.J, "M": args.M, "tol": args.tol, "mode": args.mode, "domain": args.domain, "seed": args.seed, "n_max": args.n_max}

    if args.command == "validate":
        cfg = cfgmod.resolve(args.command_for, user, overrides)
        diags = cfgmod.validate(cfg)
        for dg in diags:
            print(str(dg))
        if not diags:
            print("ok")
        return 1 if diags else 0

    command = args.command if args.command != "mesh" else f"mesh-{args.mesh_command}"
    task_key = args.command if args.command in TASKS else "band2d"
    if args.command == "mesh":
        user = {**user, "problem": {**user.get("problem", {}), "dim": 2}}
    cfg = cfgmod.resolve(task_key, user, overrides)
    cfg["command"] = command
    if args.command == "mesh" and args.mesh_command == "gen" and args.n_per_side is not None:
        cfg["problem"]["n_per_side"] = args.n_per_side
    if args.command == "mesh" and args.mesh_command == "parse":
        cfg["problem"]["msh"] = args.path
    diags = cfgmod.validate(cfg)
    if diags:
        for dg in diags:
            print(f"error: {dg}", file=sys.stderr)
        return 1
    try:
        threads = set_threads(args.threads)
    except ValueError as exc:
        return _fail(1, f"--threads: {exc}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ctx = {"inputs": [], "full_solves": 0}
    t0 = time.perf_counter()
    try:
        if args.command == "mesh":
            files = _run_mesh(args, cfg, out, ctx)
        else:
            files = TASKS[args.command](cfg, out, ctx)
    except BlochROMError as exc:
        return _fail(2, f"{type(exc).__name__}: {exc}")
    except np.linalg.LinAlgError as exc:
        return _fail(2, f"linear algebra failure: {exc}")
    wall = time.perf_counter() - t0
    write_manifest(out, command, cfg, files, ctx, wall, threads)
    return 0


def _run_mesh(args, cfg, out, ctx):
    from .msh import parse_msh, write_msh
    from .solver2d import assemble_global, bloch_reduce, generate_structured

    mat = _material(cfg["problem"])
    if args.mesh_command == "gen":
        mesh = generate_structured(int(cfg["problem"]["n_per_side"]), mat)
        (out / "mesh.msh").write_text(write_msh(mesh), encoding="utf-8", newline="")
        files = ["mesh.msh"]
    else:
        data = Path(args.path).read_bytes()
        ctx["inputs"].append(data)
        mesh = parse_msh(data)
        files = []
    fam = bloch_reduce(*assemble_global(mesh, mat), mesh)
    (out / "family.json").write_text(fam.to_json() + "\n", encoding="utf-8", newline="")
    _write_json(out / "mesh_summary.json", _mesh_summary(mesh, fam))
    return files + ["family.json", "mesh_summary.json"]


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
