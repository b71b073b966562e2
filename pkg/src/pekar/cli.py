"""Command-line front end.

    pekar --config run.yaml [--seed S] [--out DIR] [--threads T]

The YAML file names a ``command`` and the sections it needs; see README for
the full schema. Exit status: 0 ok, 1 configuration error, 2 numerical
failure or failed verification.
"""

from __future__ import annotations

import argparse
import copy
import logging
import math
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .certificates import (cutoff_certificates, f1_check, f2_check, hardy_lower_bound,
                           scaling_identity_check, theorem1_budget)
from .fields import FieldSpec, scale_fields
from .functional import HartreeState, PolaronParams
from .geometry import random_layout, regroup_balls
from .grid import Grid3D, mc_integrate, set_fft_workers
from .solver import NumericalError, SolveConfig, binding_analysis, minimize
from .storage import config_hash, read_field, write_csv, write_json, write_state

log = logging.getLogger("pekar")

COMMANDS = ("solve", "scan-alpha", "binding", "verify-scaling", "bounds-table",
            "geometry-check", "mc-check")

DEFAULTS = {
    "seed": 0,
    "output": "out",
    "threads": 1,
    "params": {"N": 1, "alpha": 1.0, "nu": 0.0},
    "grid": {"n": 32, "box": 16.0},
    "fields": {"kind": "zero"},
    "solver": {k: v for k, v in SolveConfig().to_dict().items() if k != "seed"},
    "scan": {"alphas": [0.5, 1.0, 2.0, 4.0, 8.0], "rescale_grid": True, "field_scaling": "none"},
    "binding": {"nus": [0.0, 1.0, 2.0, 2.2, 3.0, 10.0], "inits": ["gaussian_cloud", "separated_copies"],
                "tol": 1e-6},
    "scaling": {"alphas": [2.0, 3.0, 10.0], "B": [0.0, 0.0, 1.0], "n_random": 3, "solve": True},
    "bounds": {"alphas": [1e3, 1e4, 1e5], "Ns": [1, 3, 10], "c_AV": 1.0, "C_interball": 1.0,
               "include_block_intermediate": False, "eps1": 1.0},
    "geometry": {"n_layouts": 1000, "N_max": 12, "R": 1.0, "box": 20.0},
    "mc": {"n_samples": 1_000_000, "instances": 50, "N_max": 6, "alpha": 1.0,
           "distances": [0.5, 1.0, 2.0, 5.0], "R": 1.0, "box": 12.0},
}


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads ``1e3`` and ``1.0e-6`` as floats."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
                   |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
                   |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
                   |[-+]?\.(?:inf|Inf|INF)
                   |\.(?:nan|NaN|NAN))$""", re.X),
    list("-+0123456789."))


class ConfigError(Exception):
    def __init__(self, message: str, path: tuple = ()):
        super().__init__(message)
        self.path = tuple(path)


# ---------------------------------------------------------------------------
# config loading and validation


def _locate(node, path):
    """YAML node at ``path`` (or the deepest existing ancestor)."""
    for key in path:
        if isinstance(node, yaml.MappingNode):
            nxt = next((v for k, v in node.value if k.value == key), None)
            if nxt is None:
                nxt = next((k for k, _ in node.value if k.value == key), None)
                return nxt or node
            node = nxt
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
        else:
            break
    return node


def load_config(path) -> tuple[dict, yaml.Node | None]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    try:
        root = yaml.compose(text, Loader=_Loader)
        data = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{path}:{mark.line + 1}:{mark.column + 1}: " if mark else f"{path}: "
        raise ConfigError(where + str(getattr(exc, "problem", exc))) from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}:1:1: top level must be a mapping")
    return data, root


def format_error(exc: ConfigError, path, root) -> str:
    if root is None:
        return f"{path}: {exc}"
    node = _locate(root, exc.path)
    m = node.start_mark
    key = ".".join(str(p) for p in exc.path)
    return f"{path}:{m.line + 1}:{m.column + 1}: {key + ': ' if key else ''}{exc}"


def _num(v, path, lo=None, integer=False, strict=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"expected a number, got {v!r}", path)
    if integer and int(v) != v:
        raise ConfigError(f"expected an integer, got {v!r}", path)
    if not math.isfinite(v):
        raise ConfigError("value must be finite", path)
    if lo is not None and (v <= lo if strict else v < lo):
        raise ConfigError(f"must be {'>' if strict else '>='} {lo}", path)
    return int(v) if integer else float(v)


def _vec(v, path, positive=False):
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        v = [v] * 3
    if not isinstance(v, list) or len(v) != 3:
        raise ConfigError("expected a number or a list of 3 numbers", path)
    return [_num(x, path + (i,), 0 if positive else None, strict=positive) for i, x in enumerate(v)]


def _num_list(v, path, lo=None, integer=False, strict=False):
    if not isinstance(v, list) or not v:
        raise ConfigError("expected a non-empty list", path)
    return [_num(x, path + (i,), lo, integer, strict) for i, x in enumerate(v)]


def _merge(defaults: dict, user, path) -> dict:
    if user is None:
        return copy.deepcopy(defaults)
    if not isinstance(user, dict):
        raise ConfigError("expected a mapping", path)
    out = copy.deepcopy(defaults)
    for k, v in user.items():
        if k not in defaults:
            raise ConfigError(f"unknown key {k!r}", path + (k,))
        out[k] = v
    return out


def resolve_config(raw: dict, base_dir: Path = Path(".")) -> dict:
    """Defaults filled in and every value checked; raises :class:`ConfigError`."""
    allowed = set(DEFAULTS) | {"command"}
    for k in raw:
        if k not in allowed:
            raise ConfigError(f"unknown key {k!r}", (k,))
    cmd = raw.get("command")
    if cmd not in COMMANDS:
        raise ConfigError(f"command must be one of {', '.join(COMMANDS)}", ("command",))
    cfg = {"command": cmd}
    cfg["seed"] = _num(raw.get("seed", 0), ("seed",), 0, integer=True)
    cfg["output"] = str(raw.get("output", DEFAULTS["output"]))
    cfg["threads"] = _num(raw.get("threads", 1), ("threads",), 1, integer=True)

    p = _merge(DEFAULTS["params"], raw.get("params"), ("params",))
    cfg["params"] = {"N": _num(p["N"], ("params", "N"), 1, integer=True),
                     "alpha": _num(p["alpha"], ("params", "alpha"), 0),
                     "nu": _num(p["nu"], ("params", "nu"), 0)}

    g = _merge(DEFAULTS["grid"], raw.get("grid"), ("grid",))
    n = g["n"] if isinstance(g["n"], list) else [g["n"]] * 3
    if len(n) != 3:
        raise ConfigError("expected a number or a list of 3 integers", ("grid", "n"))
    n = [_num(v, ("grid", "n", i), 8, integer=True) for i, v in enumerate(n)]
    if any(v % 2 for v in n):
        raise ConfigError("grid points per axis must be even", ("grid", "n"))
    cfg["grid"] = {"n": n, "box": _vec(g["box"], ("grid", "box"), positive=True)}

    cfg["fields"] = _resolve_fields(raw.get("fields"), base_dir)

    s = _merge(DEFAULTS["solver"], raw.get("solver"), ("solver",))
    for key in ("max_iters", "patience"):
        s[key] = _num(s[key], ("solver", key), 1, integer=True)
    for key in ("step", "tol_residual", "tol_energy", "max_step"):
        s[key] = _num(s[key], ("solver", key), 0, strict=True)
    if s["separation"] is not None:
        s["separation"] = _num(s["separation"], ("solver", "separation"), 0, strict=True)
    if s["init"] not in ("gaussian_cloud", "from_file", "separated_copies"):
        raise ConfigError("unknown init", ("solver", "init"))
    if s["kernel"] not in ("truncated", "periodic"):
        raise ConfigError("kernel must be 'truncated' or 'periodic'", ("solver", "kernel"))
    if s["init"] == "from_file":
        if not s["init_path"]:
            raise ConfigError("init 'from_file' needs init_path", ("solver", "init"))
        ip = base_dir / s["init_path"]
        if not ip.exists():
            raise ConfigError(f"file not found: {ip}", ("solver", "init_path"))
        s["init_path"] = str(ip)
    cfg["solver"] = s

    sc = _merge(DEFAULTS["scan"], raw.get("scan"), ("scan",))
    sc["alphas"] = _num_list(sc["alphas"], ("scan", "alphas"), 0, strict=True)
    if sc["field_scaling"] not in ("none", "inverse"):
        raise ConfigError("field_scaling must be 'none' or 'inverse'", ("scan", "field_scaling"))
    sc["rescale_grid"] = bool(sc["rescale_grid"])
    cfg["scan"] = sc

    b = _merge(DEFAULTS["binding"], raw.get("binding"), ("binding",))
    b["nus"] = _num_list(b["nus"], ("binding", "nus"), 0)
    if not isinstance(b["inits"], list) or any(i not in ("gaussian_cloud", "separated_copies") for i in b["inits"]):
        raise ConfigError("inits must list gaussian_cloud / separated_copies", ("binding", "inits"))
    b["tol"] = _num(b["tol"], ("binding", "tol"), 0)
    cfg["binding"] = b

    v = _merge(DEFAULTS["scaling"], raw.get("scaling"), ("scaling",))
    v["alphas"] = _num_list(v["alphas"], ("scaling", "alphas"), 0, strict=True)
    v["B"] = _vec(v["B"], ("scaling", "B"))
    v["n_random"] = _num(v["n_random"], ("scaling", "n_random"), 0, integer=True)
    v["solve"] = bool(v["solve"])
    cfg["scaling"] = v

    bt = _merge(DEFAULTS["bounds"], raw.get("bounds"), ("bounds",))
    bt["alphas"] = _num_list(bt["alphas"], ("bounds", "alphas"), 1)
    bt["Ns"] = _num_list(bt["Ns"], ("bounds", "Ns"), 1, integer=True)
    for key in ("c_AV", "C_interball"):
        bt[key] = _num(bt[key], ("bounds", key), 0)
    bt["eps1"] = _num(bt["eps1"], ("bounds", "eps1"), 0, strict=True)
    bt["include_block_intermediate"] = bool(bt["include_block_intermediate"])
    cfg["bounds"] = bt

    ge = _merge(DEFAULTS["geometry"], raw.get("geometry"), ("geometry",))
    ge["n_layouts"] = _num(ge["n_layouts"], ("geometry", "n_layouts"), 1, integer=True)
    ge["N_max"] = _num(ge["N_max"], ("geometry", "N_max"), 1, integer=True)
    ge["R"] = _num(ge["R"], ("geometry", "R"), 0, strict=True)
    ge["box"] = _num(ge["box"], ("geometry", "box"), 0, strict=True)
    cfg["geometry"] = ge

    mc = _merge(DEFAULTS["mc"], raw.get("mc"), ("mc",))
    mc["n_samples"] = _num(mc["n_samples"], ("mc", "n_samples"), 1000, integer=True)
    mc["instances"] = _num(mc["instances"], ("mc", "instances"), 0, integer=True)
    mc["N_max"] = _num(mc["N_max"], ("mc", "N_max"), 2, integer=True)
    mc["alpha"] = _num(mc["alpha"], ("mc", "alpha"), 0, strict=True)
    mc["distances"] = _num_list(mc["distances"], ("mc", "distances"), 0, strict=True)
    mc["R"] = _num(mc["R"], ("mc", "R"), 0, strict=True)
    mc["box"] = _num(mc["box"], ("mc", "box"), 0, strict=True)
    cfg["mc"] = mc
    return cfg


def _resolve_fields(f, base_dir: Path) -> dict:
    path = ("fields",)
    if f is None:
        return {"kind": "zero"}
    if not isinstance(f, dict):
        raise ConfigError("expected a mapping", path)
    kind = f.get("kind", "zero")
    keys = {"zero": {"kind"}, "linear_a": {"kind", "B"},
            "periodic_v": {"kind", "period", "amplitude", "profile"},
            "sampled": {"kind", "path", "gauge_note"}}
    if kind not in keys:
        raise ConfigError(f"unknown field kind {kind!r}", path + ("kind",))
    for k in f:
        if k not in keys[kind]:
            raise ConfigError(f"key {k!r} not valid for kind {kind!r}", path + (k,))
    out = {"kind": kind}
    if kind == "linear_a":
        out["B"] = _vec(f.get("B", [0, 0, 0]), path + ("B",))
    elif kind == "periodic_v":
        out["period"] = _vec(f.get("period", [1, 1, 1]), path + ("period",), positive=True)
        out["amplitude"] = _num(f.get("amplitude", 0.0), path + ("amplitude",))
        out["profile"] = f.get("profile", "cos_sum")
        if out["profile"] not in ("cos_sum", "cos_product"):
            raise ConfigError("profile must be cos_sum or cos_product", path + ("profile",))
    elif kind == "sampled":
        if "path" not in f:
            raise ConfigError("sampled fields need a path", path)
        fp = base_dir / str(f["path"])
        if not fp.exists():
            raise ConfigError(f"file not found: {fp}", path + ("path",))
        out["path"] = str(fp)
        out["gauge_note"] = str(f.get("gauge_note", ""))
    return out


def build_fields(fc: dict) -> FieldSpec:
    kind = fc["kind"]
    if kind == "linear_a":
        return FieldSpec.linear_a(fc["B"])
    if kind == "periodic_v":
        return FieldSpec.periodic_v(fc["period"], fc["amplitude"], fc["profile"])
    if kind == "sampled":
        return read_field(fc["path"], fc.get("gauge_note", ""))
    return FieldSpec.zero()


def build_grid(gc: dict) -> Grid3D:
    return Grid3D(tuple(gc["n"]), tuple(gc["box"]))


def build_solver(cfg: dict) -> SolveConfig:
    return SolveConfig(seed=cfg["seed"], **cfg["solver"])


# ---------------------------------------------------------------------------
# commands


def _envelope(cfg: dict, payload: dict) -> dict:
    return {"version": __version__, "config": cfg, "config_hash": config_hash(cfg), "result": payload}


def _trace_rows(res) -> list[list]:
    rows = []
    for i, e in enumerate(res.energy_trace):
        r = res.residual_trace[i] if i < len(res.residual_trace) else res.residual
        rows.append([i, e, r])
    return rows


def _label(N: int) -> str:
    return "exact functional" if N == 1 else "Hartree upper bound"


def outside_mass(state: HartreeState) -> float:
    """Fraction of the density farther than ``min(L)/4`` (torus distance) from
    its peak. The truncated Coulomb kernel is exact when this is zero."""
    g = state.grid
    rho = np.sum(np.abs(state.orbitals) ** 2, axis=0)
    peak = np.unravel_index(np.argmax(rho), rho.shape)
    r2 = np.zeros(rho.shape)
    for ax in range(3):
        L = g.box_length[ax]
        d = (np.arange(g.n[ax]) - peak[ax]) * g.spacing[ax]
        d -= L * np.round(d / L)
        r2 += np.expand_dims(d**2, [a for a in range(3) if a != ax])
    far = r2 > (min(g.box_length) / 4) ** 2
    return float(rho[far].sum() / rho.sum())


def cmd_solve(cfg, out: Path, pool) -> int:
    params = PolaronParams(**cfg["params"])
    grid = build_grid(cfg["grid"])
    res = minimize(params, build_fields(cfg["fields"]), build_solver(cfg), grid)
    payload = res.to_dict()
    payload["label"] = _label(params.N)
    payload["outside_mass"] = outside_mass(res.state)
    write_json(out / "result.json", _envelope(cfg, payload))
    write_csv(out / "trace.csv", ["iteration", "energy", "residual"], _trace_rows(res))
    write_state(out / "state.bin", res.state)
    print(f"E = {res.energy.total:.10g} ({_label(params.N)}), converged={res.converged}, "
          f"iterations={res.iterations}")
    return 0


def cmd_scan_alpha(cfg, out: Path, pool) -> int:
    base = build_fields(cfg["fields"])
    grid0 = build_grid(cfg["grid"])
    scfg = build_solver(cfg)
    sc = cfg["scan"]

    def job(alpha):
        grid = grid0.scaled(alpha) if sc["rescale_grid"] else grid0
        fields = base
        if sc["field_scaling"] == "inverse" and base.kind != "zero":
            fields = scale_fields(base, 1.0 / alpha)
        params = PolaronParams(cfg["params"]["N"], alpha, cfg["params"]["nu"])
        return minimize(params, fields, scfg, grid)

    results = list(pool.map(job, sc["alphas"]))
    rows = []
    for a, r in zip(sc["alphas"], results):
        rows.append([a, r.energy.total, r.energy.total / a**2, int(r.converged), r.iterations, r.residual])
    E = [r.energy.total for r in results]
    order = np.argsort(sc["alphas"])
    es = [E[i] for i in order]
    report = {
        "alphas": sc["alphas"], "energies": E,
        "nonincreasing": bool(all(b <= a for a, b in zip(es, es[1:]))),
        "label": _label(cfg["params"]["N"]),
        "rows": rows,
    }
    write_csv(out / "scan.csv", ["alpha", "energy", "energy_over_alpha2", "converged", "iterations", "residual"], rows)
    write_json(out / "scan.json", _envelope(cfg, report))
    for r in rows:
        print(f"alpha={r[0]:g}  E={r[1]:.10g}  E/alpha^2={r[2]:.10g}")
    return 0


def cmd_binding(cfg, out: Path, pool) -> int:
    grid = build_grid(cfg["grid"])
    fields = build_fields(cfg["fields"])
    scfg = build_solver(cfg)
    b = cfg["binding"]
    N = max(cfg["params"]["N"], 2)
    alpha = cfg["params"]["alpha"]
    results = list(pool.map(lambda nu: binding_analysis(N, alpha, nu, fields, scfg, grid, tuple(b["inits"])),
                            b["nus"]))
    rows = []
    for nu, r in zip(b["nus"], results):
        rows.append([nu, *r.energies, r.margin, int(r.margin > b["tol"]), int(r.reliable)])
    binds = [r.margin > b["tol"] for r in results]
    changes = [{"between": [b["nus"][i], b["nus"][i + 1]], "from_binding": binds[i]}
               for i in range(len(binds) - 1) if binds[i] != binds[i + 1]]
    report = {"N": N, "alpha": alpha, "nus": b["nus"], "tol": b["tol"],
              "analyses": [r.to_dict() for r in results], "sign_changes": changes,
              "label": "Hartree upper bounds"}
    write_csv(out / "binding.csv",
              ["nu", *[f"C{k}" for k in range(1, N + 1)], "margin", "binds", "reliable"], rows)
    write_json(out / "binding.json", _envelope(cfg, report))
    for r in rows:
        print(f"nu={r[0]:g}  margin={r[-3]:.6g}  binds={bool(r[-2])}")
    for c in changes:
        print(f"sign change between nu={c['between'][0]:g} and nu={c['between'][1]:g}")
    return 0


def cmd_verify_scaling(cfg, out: Path, pool) -> int:
    grid = build_grid(cfg["grid"])
    v = cfg["scaling"]
    params = PolaronParams(**cfg["params"])
    presets = {"zero": FieldSpec.zero(), "linear_a": FieldSpec.linear_a(v["B"])}
    states = {f"random{i}": HartreeState.random(grid, params.N, cfg["seed"] + i) for i in range(v["n_random"])}
    records = []
    for pname, spec in presets.items():
        sts = dict(states)
        if v["solve"]:
            sts["minimizer"] = minimize(PolaronParams(params.N, 1.0, params.nu), spec,
                                        build_solver(cfg), grid).state
        for sname, st in sts.items():
            for a in v["alphas"]:
                dev = scaling_identity_check(spec, params, st, a, cfg["solver"]["kernel"])
                records.append({"preset": pname, "state": sname, "alpha": a, "deviation": dev,
                                "passed": dev < 1e-12})
    ok = all(r["passed"] for r in records)
    write_json(out / "scaling.json", _envelope(cfg, {"records": records, "passed": ok}))
    worst = max(r["deviation"] for r in records)
    print(f"max deviation {worst:.3e} over {len(records)} checks: {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 2


def cmd_bounds_table(cfg, out: Path, pool) -> int:
    bt = cfg["bounds"]
    header = ["alpha", "N", "R", "Lambda", "P", "beta", "localization", "interball", "cutoff_half",
              "blockmode_count_term", "corollary_R_term", "corollary_c_term", "block_intermediate",
              "total", "shape_ratio", "af_term", "ag_number_coeff", "hardy_bound", "note"]
    rows, records = [], []
    for N in bt["Ns"]:
        for a in bt["alphas"]:
            try:
                b = theorem1_budget(a, N, bt["c_AV"], bt["C_interball"], bt["include_block_intermediate"])
            except ValueError as exc:
                rows.append([a, N] + [""] * (len(header) - 3) + [str(exc)])
                records.append({"alpha": a, "N": N, "error": str(exc)})
                continue
            c = cutoff_certificates(a, N, b.Lambda, bt["eps1"], 1 - b.beta)
            hardy = hardy_lower_bound(N, 0.5, bt["c_AV"])
            rows.append([a, N, b.R, b.Lambda, b.P, b.beta, b.localization, b.interball, b.cutoff_half,
                         b.blockmode_count_term, b.corollary_R_term, b.corollary_c_term,
                         b.block_intermediate, b.total, b.shape_ratio, c.af_term, c.ag_number_coeff,
                         hardy, ""])
            records.append({"budget": b.to_dict(), "cutoff": c.to_dict(), "hardy_bound": hardy})
    shape = {}
    for N in bt["Ns"]:
        r = [rec["budget"]["shape_ratio"] for rec in records if "budget" in rec and rec["budget"]["N"] == N]
        if r:
            shape[str(N)] = {"ratios": r, "relative_variation": max(r) / min(r) - 1}
    write_csv(out / "bounds.csv", header, rows)
    write_json(out / "bounds.json", _envelope(cfg, {"rows": records, "shape": shape}))
    for N, s in shape.items():
        print(f"N={N}: total/(alpha^(42/23) N^3) varies by {100 * s['relative_variation']:.1f}%")
    return 0


def cmd_geometry_check(cfg, out: Path, pool) -> int:
    ge = cfg["geometry"]
    rng = np.random.default_rng(cfg["seed"])
    fails = []
    sizes = []
    for t in range(ge["n_layouts"]):
        N = int(rng.integers(1, ge["N_max"] + 1))
        bl = random_layout(rng, N, ge["R"], ge["box"])
        cl = regroup_balls(bl)
        bad = cl.check(bl)
        sizes.append(cl.m)
        if bad:
            fails.append({"trial": t, "violations": bad})
    ok = not fails
    write_json(out / "geometry.json", _envelope(cfg, {"layouts": ge["n_layouts"], "failures": fails,
                                                      "mean_groups": float(np.mean(sizes)), "passed": ok}))
    print(f"{ge['n_layouts']} layouts, {len(fails)} with violations: {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 2


def random_instance(rng, N_max: int, R: float, box: float):
    """Random regrouped layout with one particle inside each small ball."""
    N = int(rng.integers(2, N_max + 1))
    bl = random_layout(rng, N, R, box / R)
    u = rng.normal(size=(N, 3))
    u /= np.linalg.norm(u, axis=1)[:, None]
    pos = bl.centers + R * rng.random((N, 1)) ** (1 / 3) * u
    return regroup_balls(bl), pos


def cmd_mc_check(cfg, out: Path, pool) -> int:
    mc = cfg["mc"]
    n = mc["n_samples"]
    seed = cfg["seed"]
    ident = []
    for i, d in enumerate(mc["distances"]):
        est = mc_integrate(lambda y: np.sum(y * y, axis=1) ** -2.0,
                           lambda y, d=d: np.sum(y * y, axis=1) > (d / 2) ** 2, n, seed + i, scale=d / 2)
        ident.append({"identity": "8pi/d", "d": d, "exact": 8 * math.pi / d, "estimate": est.to_dict(),
                      "passed": est.within(8 * math.pi / d)})
    for i, d in enumerate(mc["distances"]):
        a, b = np.zeros(3), np.array([d, 0.0, 0.0])
        est = mc_integrate(lambda y, b=b: 1 / np.sum(y * y, axis=1) / np.sum((y - b) ** 2, axis=1),
                           None, n, seed + 100 + i, centers=[a, b], scale=d)
        ident.append({"identity": "pi^3/|a-b|", "d": d, "exact": math.pi**3 / d, "estimate": est.to_dict(),
                      "passed": est.within(math.pi**3 / d)})
    rng = np.random.default_rng(seed)
    insts = [random_instance(rng, mc["N_max"], mc["R"], mc["box"]) for _ in range(mc["instances"])]

    def job(k):
        cl, pos = insts[k]
        r1 = f1_check(mc["alpha"], cl, pos, n, seed + 1000 + k)
        r2 = f2_check(mc["alpha"], cl, pos, n, seed + 2000 + k)
        return {"groups": cl.m, "N": cl.N, "f1": r1.to_dict(), "f2": r2.to_dict()}

    checks = list(pool.map(job, range(len(insts))))
    ok = all(r["passed"] for r in ident) and all(c["f1"]["passed"] and c["f2"]["passed"] for c in checks)
    write_json(out / "mc.json", _envelope(cfg, {"identities": ident, "bound_checks": checks, "passed": ok}))
    print(f"identities {sum(r['passed'] for r in ident)}/{len(ident)}, "
          f"F1 {sum(c['f1']['passed'] for c in checks)}/{len(checks)}, "
          f"F2 {sum(c['f2']['passed'] for c in checks)}/{len(checks)}: {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 2


HANDLERS = {"solve": cmd_solve, "scan-alpha": cmd_scan_alpha, "binding": cmd_binding,
            "verify-scaling": cmd_verify_scaling, "bounds-table": cmd_bounds_table,
            "geometry-check": cmd_geometry_check, "mc-check": cmd_mc_check}


def run(cfg: dict) -> int:
    out = Path(cfg["output"])
    out.mkdir(parents=True, exist_ok=True)
    set_fft_workers(cfg["threads"])
    with ThreadPoolExecutor(max_workers=cfg["threads"]) as pool:
        try:
            return HANDLERS[cfg["command"]](cfg, out, pool)
        except (NumericalError, FloatingPointError) as exc:
            write_json(out / "error.json", _envelope(cfg, {"error": type(exc).__name__, "message": str(exc)}))
            print(f"numerical failure: {exc}", file=sys.stderr)
            return 2


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="pekar", description=__doc__.splitlines()[0])
    ap.add_argument("--config", required=True, help="YAML run configuration")
    ap.add_argument("--seed", type=int, help="override the config seed")
    ap.add_argument("--out", help="override the output directory")
    ap.add_argument("--threads", type=int, help="worker threads for FFTs and independent solves")
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    root = None
    try:
        raw, root = load_config(args.config)
        if args.seed is not None:
            raw["seed"] = args.seed
        if args.out is not None:
            raw["output"] = args.out
        if args.threads is not None:
            raw["threads"] = args.threads
        cfg = resolve_config(raw, Path(args.config).resolve().parent)
    except ConfigError as exc:
        msg = str(exc) if root is None and not exc.path else format_error(exc, args.config, root)
        print(f"config error: {msg}", file=sys.stderr)
        return 1
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
