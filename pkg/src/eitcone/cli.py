"""Batch front-end: identity suite, Loewner certificates, cone scans and Landweber runs.

Configuration is a YAML file; every key is optional and falls back to
:data:`DEFAULT_CONFIG`.  Results go to ``--out`` (or ``$EITCONE_OUT``) as CSV
tables plus JSON summaries, each row stamped with the config hash and seed.
Exit status: 0 when every assertion passed, 1 on an assertion failure, 2 on a
configuration error.
"""
from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .exceptions import (
    BasisRankError,
    ConfigError,
    DegeneratePairError,
    EITError,
    EllipticityError,
    PreconditionError,
)
from .fem import check_conductivity
from .landweber import landweber_run
from .loewner import (
    certify_babel0,
    certify_conmo,
    certify_main1,
    certify_norm_bound,
    certify_util,
    certify_util_sharpness,
)
from .mesh import build_structured_mesh
from .operator import (
    FAMILIES,
    build_boundary_basis,
    contraction,
    dtn_form,
    forward_difference_cross,
    hs_norm,
    projector_residuals,
    resolvent_identity_check,
)
from .scenarios import checkerboard, inclusion, random_pair
from .tcc import check_mjmi, check_unbalanced, monotone_radius, tcc_measure, theta_eta

__all__ = ["main", "build_parser", "load_config", "DEFAULT_CONFIG", "config_hash"]

log = logging.getLogger("eitcone")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
# "theorem3" selects the norm-bound check and the x1/x2 ratio report
CERT_SETS = ("main1", "util", "conmo", "babel0", "theorem3", "all")

DEFAULT_CONFIG: dict = {
    "mesh_n": 8,
    "basis_K": 8,
    "basis_family": "trigonometric",
    "seed": 0,
    "jobs": 1,
    "tolerance": 1e-8,
    "out": "eitcone-out",
    "thresholds": {"defff": 1e-11, "resolvent": 1e-9, "projector": 1e-10},
    "scenarios": {
        "random": {"count": 50, "xi_max": 0.9, "saturated": 0, "saturated_xi": 0.99},
        "inclusions": [
            {"name": "center-inclusion", "center": [0.5, 0.5], "radius": 0.25,
             "contrast": 0.05, "background": 1.0},
        ],
        "explicit": [],
    },
    "eta_targets": [0.25, 0.5, 1.0],
    "tcc_scan": {"alpha_lower": 0.5, "amplitude_steps": 4, "checkerboard_blocks": [1, 2],
                 "checkerboard_eta": 0.5},
    "landweber": {
        "basis_K": 4, "max_iter": 2000, "rtol": 1e-8, "tau": 1.5, "noise": 0.0,
        "step_margin": 0.9, "bounds": [0.5, 2.0],
        "oscillatory": {"block_size": 2, "amplitude": 0.05},
    },
}

# keys that change where or how fast results are produced, not what they are
_NON_SEMANTIC = ("out", "jobs")


# --------------------------------------------------------------------------- config

class _Section(dict):
    """Mapping that remembers the source line of each key."""

    line: int = 0
    key_lines: dict


class _LineLoader(yaml.SafeLoader):
    pass


def _construct_mapping(loader, node):
    loader.flatten_mapping(node)
    out = _Section()
    out.line = node.start_mark.line + 1
    out.key_lines = {}
    for key_node, value_node in node.value:
        key = loader.construct_object(key_node, deep=True)
        out[key] = loader.construct_object(value_node, deep=True)
        out.key_lines[key] = key_node.start_mark.line + 1
    return out


_LineLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)


def _where(section, key=None) -> str:
    if isinstance(section, _Section):
        line = section.key_lines.get(key, section.line) if key is not None else section.line
        return f"line {line}: "
    return ""


def _merge(defaults: dict, given, path: str) -> dict:
    if not isinstance(given, dict):
        raise ConfigError(f"{_where(given)}'{path or 'config'}' must be a mapping")
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        if key not in defaults:
            raise ConfigError(f"{_where(given, key)}unknown key '{path}{key}'")
        if isinstance(defaults[key], dict) and defaults[key]:
            out[key] = _merge(defaults[key], value, f"{path}{key}.")
        else:
            out[key] = value
    return out


def _require(cond: bool, section, key, message: str):
    if not cond:
        raise ConfigError(f"{_where(section, key)}{message}")


def _validate(cfg: dict, raw) -> dict:
    raw = raw if isinstance(raw, dict) else {}
    n, K = cfg["mesh_n"], cfg["basis_K"]
    _require(isinstance(n, int) and n >= 1, raw, "mesh_n", f"mesh_n must be a positive integer, got {n!r}")
    _require(isinstance(K, int) and K >= 1, raw, "basis_K", f"basis_K must be a positive integer, got {K!r}")
    _require(K <= 4 * n - 1, raw, "basis_K", f"basis_K={K} exceeds 4*mesh_n-1={4 * n - 1}")
    _require(cfg["basis_family"] in FAMILIES, raw, "basis_family",
             f"basis_family must be one of {FAMILIES}")
    _require(isinstance(cfg["seed"], int) and cfg["seed"] >= 0, raw, "seed", "seed must be a nonnegative integer")
    _require(isinstance(cfg["jobs"], int) and cfg["jobs"] >= 1, raw, "jobs", "jobs must be a positive integer")
    tol = cfg["tolerance"]
    _require(isinstance(tol, (int, float)) and tol >= 0, raw, "tolerance", "tolerance must be >= 0")
    rnd = cfg["scenarios"]["random"]
    raw_rnd = raw.get("scenarios", {}).get("random", {}) if isinstance(raw.get("scenarios"), dict) else {}
    _require(isinstance(rnd["count"], int) and rnd["count"] >= 0, raw_rnd, "count", "random.count must be >= 0")
    _require(0 <= rnd["xi_max"] < 1, raw_rnd, "xi_max", "random.xi_max must lie in [0, 1)")
    _require(0 <= rnd["saturated_xi"] < 1, raw_rnd, "saturated_xi", "random.saturated_xi must lie in [0, 1)")
    for entry in cfg["scenarios"]["explicit"]:
        _require(isinstance(entry, dict) and {"name", "gamma", "gamma_dagger"} <= set(entry), entry, None,
                 "explicit scenarios need name, gamma and gamma_dagger")
    for entry in cfg["scenarios"]["inclusions"]:
        _require(isinstance(entry, dict) and {"name", "center", "radius", "contrast"} <= set(entry), entry, None,
                 "inclusions need name, center, radius and contrast")
    for eta in cfg["eta_targets"]:
        _require(isinstance(eta, (int, float)) and 0 < eta <= 1, raw, "eta_targets", "eta targets must lie in (0, 1]")
    lw = cfg["landweber"]
    _require(isinstance(lw["basis_K"], int) and 1 <= lw["basis_K"] <= 4 * n - 1, raw.get("landweber", raw),
             "basis_K", "landweber.basis_K must lie in [1, 4*mesh_n-1]")
    return cfg


def load_config(path=None) -> dict:
    """Read, merge with defaults and validate a YAML config.

    Raises
    ------
    ConfigError
        With the offending line number whenever the source can be located.
    """
    raw = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            raw = yaml.load(text, Loader=_LineLoader) or {}
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            where = f"line {mark.line + 1}, column {mark.column + 1}: " if mark else ""
            raise ConfigError(f"{path}: {where}{getattr(exc, 'problem', exc)}") from exc
    try:
        cfg = _merge(DEFAULT_CONFIG, raw, "")
        return _validate(cfg, raw)
    except ConfigError as exc:
        prefix = f"{path}: " if path is not None else ""
        raise ConfigError(f"{prefix}{exc}") from None


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def config_hash(cfg: dict) -> str:
    """Short SHA-256 of the result-determining part of a resolved config."""
    payload = {k: v for k, v in _plain(cfg).items() if k not in _NON_SEMANTIC}
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


# --------------------------------------------------------------------------- scenarios

@dataclass(frozen=True)
class _Case:
    name: str
    kind: str
    seed: int | None
    gamma_dagger: np.ndarray
    gamma: np.ndarray


def _field(value, n_elements: int, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.full(n_elements, float(arr))
    if arr.size != n_elements:
        raise ConfigError(f"scenario '{name}': {arr.size} values given, mesh has {n_elements} elements")
    return arr.ravel()


def _cases(cfg: dict, mesh) -> list[_Case]:
    sc = cfg["scenarios"]
    rnd = sc["random"]
    seed0 = cfg["seed"]
    cases = []
    for i in range(rnd["count"]):
        s = random_pair(mesh, seed0 + i, rnd["xi_max"])
        cases.append(_Case(s.name, "random", s.seed, s.gamma_dagger.values, s.gamma.values))
    for i in range(rnd["saturated"]):
        seed = seed0 + rnd["count"] + i
        s = random_pair(mesh, seed, rnd["saturated_xi"], saturate=True)
        cases.append(_Case(f"saturated-{seed}", "random", seed, s.gamma_dagger.values, s.gamma.values))
    for inc in sc["inclusions"]:
        bg = float(inc.get("background", 1.0))
        gd = np.full(mesh.n_triangles, bg)
        cases.append(_Case(inc["name"], "inclusion", None, gd,
                           gd + inclusion(mesh, inc["center"], inc["radius"], inc["contrast"])))
    for ex in sc["explicit"]:
        cases.append(_Case(str(ex["name"]), "explicit", ex.get("seed"),
                           _field(ex["gamma_dagger"], mesh.n_triangles, ex["name"]),
                           _field(ex["gamma"], mesh.n_triangles, ex["name"])))
    return cases


def _run_parallel(fn, items, jobs: int) -> list:
    """Map ``fn`` over ``items`` with ``jobs`` threads, preserving order."""
    if jobs <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _error_row(case: _Case, exc: Exception) -> dict:
    kind = {
        EllipticityError: "ellipticity-violation",
        PreconditionError: "precondition-violation",
        BasisRankError: "basis-rank",
    }.get(type(exc), type(exc).__name__)
    return {"scenario": case.name, "check": kind, "value": "", "threshold": "", "pass": False,
            "detail": str(exc)}


# --------------------------------------------------------------------------- commands

class _Context:
    def __init__(self, cfg: dict, out: Path, jobs: int):
        self.cfg = cfg
        self.out = out
        self.jobs = jobs
        self.hash = config_hash(cfg)
        self.mesh = build_structured_mesh(cfg["mesh_n"])
        self.basis = build_boundary_basis(self.mesh, cfg["basis_K"], cfg["basis_family"])
        self.tol = float(cfg["tolerance"])

    def stamp(self, rows: list[dict], seed) -> list[dict]:
        for row in rows:
            row["config_hash"] = self.hash
            row["seed"] = seed if seed is not None else self.cfg["seed"]
        return rows

    def write_csv(self, name: str, rows: list[dict]) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        fields: list[str] = []
        for row in rows:
            fields.extend(k for k in row if k not in fields)
        path = self.out / name
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=fields, restval="", lineterminator="\n")
            writer.writeheader()
            writer.writerows(rows)
        return path

    def write_json(self, name: str, payload: dict) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        path = self.out / name
        path.write_text(json.dumps({**payload, "config_hash": self.hash, "seed": self.cfg["seed"]},
                                   indent=2, sort_keys=True) + "\n")
        return path


def _identity_rows(ctx: _Context, case: _Case) -> list[dict]:
    th = ctx.cfg["thresholds"]
    mesh, basis = ctx.mesh, ctx.basis
    try:
        g = check_conductivity(case.gamma, mesh.n_triangles)
        gd = check_conductivity(case.gamma_dagger, mesh.n_triangles)
    except EITError as exc:
        return [_error_row(case, exc)]
    rows = []

    def add(check, value, threshold, detail=""):
        rows.append({"scenario": case.name, "check": check, "value": value, "threshold": threshold,
                     "pass": bool(value <= threshold), "detail": detail})

    lam_g, lam_d = dtn_form(mesh, g, basis).entries, dtn_form(mesh, gd, basis).entries
    cross = forward_difference_cross(mesh, g, gd, basis)
    scale = max(hs_norm(lam_g - lam_d), 1e-3 * max(hs_norm(lam_g), hs_norm(lam_d)))
    add("defff-cross-formula", float(np.linalg.norm(lam_g - lam_d - cross)) / scale, th["defff"])
    rng = np.random.default_rng(case.seed if case.seed is not None else ctx.cfg["seed"])
    f = rng.standard_normal(mesh.boundary_nodes.size)
    try:
        add("resolvent-identity", resolvent_identity_check(mesh, g, gd, f), th["resolvent"])
    except PreconditionError as exc:
        log.info("%s: resolvent identity skipped: %s", case.name, exc)
        rows.append({"scenario": case.name, "check": "resolvent-identity", "value": "",
                     "threshold": th["resolvent"], "pass": True, "detail": f"skipped: {exc}"})
    res = projector_residuals(mesh, g, seed=case.seed or 0)
    add("projector-idempotence", res["idempotence"], th["projector"])
    add("projector-self-adjointness", res["self_adjointness"], th["projector"])
    add("projector-kernel", res["kernel"], th["projector"], f"kernel dimension {res['kernel_dimension']}")
    return rows


def cmd_verify_identities(ctx: _Context, args) -> int:
    cases = _cases(ctx.cfg, ctx.mesh)
    results = _run_parallel(lambda c: ctx.stamp(_identity_rows(ctx, c), c.seed), cases, ctx.jobs)
    rows = [r for block in results for r in block]
    ctx.write_csv("identities.csv", rows)
    failed = [r for r in rows if not r["pass"]]
    for r in failed:
        log.error("%s %s failed: %s %s", r["scenario"], r["check"], r["value"], r["detail"])
    print(f"verify-identities: {len(rows) - len(failed)}/{len(rows)} checks passed")
    return EXIT_FAIL if failed else EXIT_OK


def _certificate_rows(ctx: _Context, case: _Case, which: str) -> list[dict]:
    mesh, basis, tol = ctx.mesh, ctx.basis, ctx.tol
    try:
        g = check_conductivity(case.gamma, mesh.n_triangles)
        gd = check_conductivity(case.gamma_dagger, mesh.n_triangles)
        xi_d = contraction(g, gd)
        certs = []
        if which in ("main1", "all"):
            certs += [("main1", c) for c in certify_main1(mesh, g, gd, basis, tol, case.seed)]
        if which in ("util", "all"):
            certs += [("util", c) for c in certify_util(mesh, g, gd, basis, tol, case.seed)]
            certs += [("util-sharpness", c) for c in certify_util_sharpness(mesh, g, gd, basis, tol, case.seed)]
        if which in ("conmo", "all"):
            certs += [("conmo", c) for c in certify_conmo(mesh, g, gd, basis, tol, case.seed)]
        if which in ("babel0", "all"):
            lo, hi, _ = certify_babel0(mesh, g, gd, basis, tol, case.seed)
            certs += [("babel0", lo), ("babel0", hi)]
        rows = [{"scenario": case.name, "set": name, "xi_dagger": xi_d, **c.to_row()} for name, c in certs]
        if which in ("theorem3", "all"):
            rep = certify_norm_bound(mesh, g, gd, basis, tol)
            for norm, lhs, rhs, ok in (("HS", rep.remainder_norm, rep.bound_norm, rep.mainest1_pass),
                                       ("spectral", rep.remainder_spectral, rep.bound_spectral,
                                        rep.mainest1_spectral_pass)):
                rows.append({"scenario": case.name, "set": "theorem3", "xi_dagger": xi_d,
                             "inequality": f"||B||_{norm} <= ||D(dg^2/gd)||_{norm}",
                             "lambda_min_gap": rhs - lhs, "scale": rhs, "tol": tol, "pass": ok,
                             "mesh_n": mesh.n, "K": basis.K,
                             "ratio_x1": rep.ratio_x1, "ratio_x2": rep.ratio_x2})
        return rows
    except EITError as exc:
        return [{"scenario": case.name, "set": which, "inequality": _error_row(case, exc)["check"],
                 "pass": False, "detail": str(exc)}]


def cmd_certify(ctx: _Context, args) -> int:
    cases = _cases(ctx.cfg, ctx.mesh)
    results = _run_parallel(lambda c: ctx.stamp(_certificate_rows(ctx, c, args.which), c.seed),
                            cases, ctx.jobs)
    rows = [r for block in results for r in block]
    ctx.write_csv("certificates.csv", rows)
    failed = [r for r in rows if not r["pass"]]
    summary = {"which": args.which, "n_certificates": len(rows), "n_failed": len(failed),
               "tolerance": ctx.tol, "mesh_n": ctx.mesh.n, "K": ctx.basis.K}
    ratios = [r for r in rows if "ratio_x1" in r]
    if ratios:
        summary["max_ratio_x1"] = max(r["ratio_x1"] for r in ratios)
        summary["max_ratio_x2"] = max(r["ratio_x2"] for r in ratios)
    ctx.write_json("certify_summary.json", summary)
    if failed and ctx.tol == 0:
        log.warning("tolerance 0: failures at round-off scale are expected")
    print(f"certify --which {args.which}: {len(rows) - len(failed)}/{len(rows)} certificates passed")
    return EXIT_FAIL if failed else EXIT_OK


def _gate_row(case_name, kind, eta, amplitude, g, gd, ctx, alpha) -> dict:
    mesh, basis = ctx.mesh, ctx.basis
    row = {"scenario": case_name, "family": kind, "eta_target": eta, "amplitude": amplitude}
    try:
        mj = check_mjmi(mesh, g, gd, eta, basis, alpha_lower=alpha)
        ub = check_unbalanced(mesh, g, gd, eta, basis, alpha_lower=alpha)
    except DegeneratePairError as exc:
        log.info("%s amplitude %g skipped: %s", case_name, amplitude, exc)
        return {**row, "status": "skipped", "detail": str(exc), "pass": True}
    verdicts = [v for v in (mj.guarantee_valid, ub.guarantee_valid) if v is not None]
    row.update({
        "status": "ok", "theta": mj.theta, "linf": mj.linf, "measured_eta": mj.measured_eta,
        "measured_eta_at_gamma_dagger": mj.measured_eta_at_gamma_dagger,
        "mjmi_holds": mj.mjmi_holds, "mjmi1_gate": mj.mjmi1_gate, "fir_gate": ub.fir_gate,
        "fir1_gate": ub.fir1_gate, "nu": ub.nu, "fired": bool(verdicts),
        "pass": all(verdicts),
    })
    return row


def _tcc_rows(ctx: _Context, case: _Case) -> list[dict]:
    cfg = ctx.cfg["tcc_scan"]
    alpha = float(cfg["alpha_lower"])
    mesh, basis = ctx.mesh, ctx.basis
    try:
        gd = check_conductivity(case.gamma_dagger, mesh.n_triangles)
        g = check_conductivity(case.gamma, mesh.n_triangles)
    except EITError as exc:
        return [_error_row(case, exc)]
    rows = []
    if case.kind == "inclusion":
        direction = g - gd
        steps = cfg["amplitude_steps"]
        for eta in ctx.cfg["eta_targets"]:
            radius = monotone_radius(direction, eta, alpha)
            for k in range(1, steps + 1):
                a = radius * k / steps
                rows.append(_gate_row(case.name, "monotone", eta, a, gd + a * direction, gd, ctx, alpha))
        eta = float(cfg["checkerboard_eta"])
        theta = theta_eta(eta, alpha)
        for block in cfg["checkerboard_blocks"]:
            if block > mesh.n:
                continue
            pattern = checkerboard(mesh, block, 1.0)
            for k in range(1, steps + 1):
                a = theta * k / steps
                rows.append(_gate_row(case.name, f"checkerboard-{block}", eta, a, gd + a * pattern, gd,
                                      ctx, alpha))
        return rows
    try:
        rep = tcc_measure(mesh, g, gd, basis)
    except DegeneratePairError as exc:
        log.info("%s skipped: %s", case.name, exc)
        return [{"scenario": case.name, "family": case.kind, "status": "skipped", "detail": str(exc),
                 "pass": True}]
    return [{"scenario": case.name, "family": case.kind, "status": "measured",
             "measured_eta": rep.eta_stc_at_gamma, "measured_eta_at_gamma_dagger": rep.eta_stc_at_gamma_dagger,
             "eta_wtc": rep.eta_wtc, "xi_dagger": rep.xi_dagger, "zeta": rep.zeta, "pass": True}]


def cmd_tcc_scan(ctx: _Context, args) -> int:
    cases = _cases(ctx.cfg, ctx.mesh)
    results = _run_parallel(lambda c: ctx.stamp(_tcc_rows(ctx, c), c.seed), cases, ctx.jobs)
    rows = [r for block in results for r in block]
    ctx.write_csv("tcc_scan.csv", rows)
    failed = [r for r in rows if not r["pass"]]
    fired = sum(1 for r in rows if r.get("fired"))
    print(f"tcc-scan: {len(rows)} rows, {fired} with a fired gate, {len(failed)} violations")
    return EXIT_FAIL if failed else EXIT_OK


def cmd_landweber(ctx: _Context, args) -> int:
    lw = ctx.cfg["landweber"]
    mesh = ctx.mesh
    try:
        basis = build_boundary_basis(mesh, lw["basis_K"], ctx.cfg["basis_family"])
    except BasisRankError as exc:
        raise ConfigError(f"landweber basis: {exc}") from exc
    incs = ctx.cfg["scenarios"]["inclusions"]
    if not incs:
        raise ConfigError("landweber needs at least one entry in scenarios.inclusions")
    inc = incs[0]
    bg = float(inc.get("background", 1.0))
    g0 = np.full(mesh.n_triangles, bg)
    gd = g0 + inclusion(mesh, inc["center"], inc["radius"], inc["contrast"])
    osc = lw["oscillatory"]
    g_osc = g0 + checkerboard(mesh, min(int(osc["block_size"]), mesh.n), float(osc["amplitude"]))
    common = dict(noise=float(lw["noise"]), tau=float(lw["tau"]), max_iter=int(lw["max_iter"]),
                  step_margin=float(lw["step_margin"]), rtol=float(lw["rtol"]), bounds=tuple(lw["bounds"]),
                  seed=ctx.cfg["seed"])
    runs = {
        "monotone": lambda: landweber_run(mesh, g0, gd, basis, **common),
        "oscillatory": lambda: landweber_run(mesh, g_osc, gd, basis, track_eta=True, **common),
    }
    traces = dict(zip(runs, _run_parallel(lambda k: runs[k](), list(runs), ctx.jobs)))
    summary = {"scenario": inc["name"], "K": basis.K, "mesh_n": mesh.n}
    for name, trace in traces.items():
        ctx.write_csv(f"landweber_{name}.csv", ctx.stamp(trace.rows(), ctx.cfg["seed"]))
        summary[name] = trace.summary()
    mono = traces["monotone"]
    r = np.asarray(mono.residual_norms)
    decreasing = bool(np.all(np.diff(r) < 0))
    reached = mono.stop_reason == "discrepancy"
    summary["monotone_strictly_decreasing"] = decreasing
    summary["monotone_reached_target"] = reached
    ctx.write_json("landweber_summary.json", summary)
    print(f"landweber: monotone stop {mono.stop_index} ({mono.stop_reason}), "
          f"oscillatory stop {traces['oscillatory'].stop_index} ({traces['oscillatory'].stop_reason})")
    if not (decreasing and reached):
        log.error("monotone run: strictly decreasing=%s, reached target=%s", decreasing, reached)
        return EXIT_FAIL
    return EXIT_OK


# --------------------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML configuration file")
    common.add_argument("--out", type=Path, help="output directory (env EITCONE_OUT)")
    common.add_argument("--seed", type=int, help="base seed, overrides the config")
    common.add_argument("--jobs", type=int, help="worker threads (env EITCONE_JOBS)")
    common.add_argument("--tol", type=float, help="relative certificate tolerance")
    common.add_argument("-v", "--verbose", action="count", default=0)
    parser = argparse.ArgumentParser(prog="eitcone", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("verify-identities", parents=[common], help="Galerkin, resolvent and projector identities")
    cert = sub.add_parser("certify", parents=[common], help="Loewner-order certificates")
    cert.add_argument("--which", choices=CERT_SETS, default="all")
    sub.add_parser("tcc-scan", parents=[common], help="tangential cone gates and measured ratios")
    sub.add_parser("landweber", parents=[common], help="monotone and oscillatory Landweber runs")
    return parser


def _resolve(args) -> tuple[dict, Path, int]:
    cfg = load_config(args.config)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be nonnegative")
        cfg["seed"] = args.seed
    if args.tol is not None:
        if not args.tol >= 0 or not math.isfinite(args.tol):
            raise ConfigError("--tol must be a finite nonnegative number")
        cfg["tolerance"] = args.tol
    out = args.out or os.environ.get("EITCONE_OUT") or cfg["out"]
    jobs = args.jobs if args.jobs is not None else os.environ.get("EITCONE_JOBS", cfg["jobs"])
    try:
        jobs = int(jobs)
    except ValueError:
        raise ConfigError(f"jobs must be an integer, got {jobs!r}") from None
    if jobs < 1:
        raise ConfigError("jobs must be >= 1")
    return cfg, Path(out), jobs


COMMANDS = {
    "verify-identities": cmd_verify_identities,
    "certify": cmd_certify,
    "tcc-scan": cmd_tcc_scan,
    "landweber": cmd_landweber,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg, out, jobs = _resolve(args)
        try:
            ctx = _Context(cfg, out, jobs)
        except BasisRankError as exc:
            raise ConfigError(f"basis: {exc}") from exc
        return COMMANDS[args.command](ctx, args)
    except ConfigError as exc:
        print(f"eitcone: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
