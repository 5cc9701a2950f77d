"""Batch front-end: ingest fields, run the pipeline, emit JSON reports.

Subcommands
-----------
decompose   full pipeline, report JSON
dual        involution solve only
primal      kernel minimization only
verify      checks only, against a supplied involution and/or kernel
transport   atom export and the cost identity
gallery     every builtin at sizes 16 / 32 / 64, one summary row each

Exit codes: 0 success, 1 solver non-convergence, 2 bad configuration,
3 unreadable input file. Runs are deterministic for a fixed config and
seed; reports embed every tolerance used.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dual_solver, factorize, fields, primal_solver, transport
from .conjugacy import regularize
from .domain import (
    AntiSymmetricKernel,
    Involution,
    SampledField,
    ball_radius,
    build_dual_points,
    build_grid,
    make_kernel,
    read_field_csv,
    sample_field,
)

__all__ = ["RunConfig", "parse_config", "run", "main"]

_CONFIG_KEYS = {
    "builtin",
    "params",
    "field_csv",
    "domain",
    "n",
    "radius_margin",
    "sphere_points",
    "fd_step_rel",
    "solver",
    "primal_method",
    "eps_primal",
    "tol_reg",
    "seed",
    "out",
    "dump",
}


@dataclass
class RunConfig:
    builtin: str | None = None
    params: dict = dataclasses.field(default_factory=dict)
    field_csv: str | None = None
    domain: dict | None = None
    n: int = 64
    radius_margin: float = 0.05
    sphere_points: int | None = None
    fd_step_rel: float = 1e-4
    solver: str = "auto"
    primal_method: str = "cutting-plane"
    eps_primal: float = 1e-6
    tol_reg: float | None = None
    seed: int = 0
    out: str | None = None
    dump: str | None = None

    def validate(self) -> "RunConfig":
        if self.n < 1:
            raise ValueError("n must be at least 1")
        if self.sphere_points is not None and self.sphere_points < 1:
            raise ValueError("sphere_points must be at least 1")
        if self.fd_step_rel <= 0 or self.eps_primal <= 0:
            raise ValueError("steps and tolerances must be positive")
        if self.tol_reg is not None and self.tol_reg <= 0:
            raise ValueError("tol_reg override must be positive")
        if bool(self.builtin) == bool(self.field_csv):
            raise ValueError("give exactly one of --builtin or --field")
        if self.field_csv and not self.domain:
            raise ValueError("file-backed runs need a --domain spec")
        return self

    def pipeline(self) -> factorize.PipelineConfig:
        return factorize.PipelineConfig(
            dual_method=self.solver,
            primal_method=self.primal_method,
            radius_margin=self.radius_margin,
            sphere_points=self.sphere_points,
            fd_step_rel=self.fd_step_rel,
            eps_primal=self.eps_primal,
            seed=self.seed,
        )


def parse_config(args: argparse.Namespace) -> RunConfig:
    """Merge a JSON config file (if given) with command-line flags.

    Flags win over file values; unknown file keys are rejected.
    """
    payload: dict = {}
    cfg_path = getattr(args, "config", None)
    if cfg_path:
        try:
            with open(cfg_path, "r", encoding="utf-8") as fh:
                payload = json.load(fh)
        except OSError as exc:
            raise FileNotFoundError(f"cannot read config file: {exc}") from exc
        if not isinstance(payload, dict):
            raise ValueError("config file must hold a JSON object")
        unknown = set(payload) - _CONFIG_KEYS
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
    merged = dict(payload)
    for key in _CONFIG_KEYS:
        flag = key if key != "field_csv" else "field"
        val = getattr(args, flag, None)
        if val is not None:
            merged[key] = val
    if isinstance(merged.get("params"), str):
        merged["params"] = json.loads(merged["params"])
    if isinstance(merged.get("domain"), str):
        dom_src = merged["domain"]
        if Path(dom_src).exists():
            with open(dom_src, "r", encoding="utf-8") as fh:
                merged["domain"] = json.load(fh)
        else:
            merged["domain"] = json.loads(dom_src)
    return RunConfig(**merged).validate()


def _load_problem(cfg: RunConfig):
    """Resolve the configured field into (domain, samples, extras)."""
    if cfg.builtin:
        bf = fields.builtin_field(cfg.builtin, cfg.n, cfg.params)
        dom = build_grid(bf.domain_spec)
        fld = sample_field(dom, bf.rule)
        return dom, fld, bf
    dom = build_grid(cfg.domain)
    try:
        pts, vals = read_field_csv(cfg.field_csv)
    except OSError as exc:
        raise FileNotFoundError(f"cannot read field file: {exc}") from exc
    if pts.shape != dom.points.shape:
        raise ValueError("field file does not match the domain grid size")
    scale = max(1.0, dom.radius)
    if np.abs(pts - dom.points).max() > 1e-9 * scale:
        raise ValueError("field file points do not match the domain grid")
    return dom, SampledField(vals), None


def _emit(payload: dict, out: str | None) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def _dump_cells(path: str, dom, fld, report) -> None:
    """Plot-ready dump: one row per cell with x, u, sigma(x), residual1."""
    import csv as _csv

    d = dom.dim
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = _csv.writer(fh)
        w.writerow(
            [f"x{k}" for k in range(d)]
            + [f"u{k}" for k in range(d)]
            + [f"sx{k}" for k in range(d)]
            + ["residual1"]
        )
        sx = dom.points[report.sigma.sigma]
        for i in range(dom.n):
            w.writerow(
                [repr(float(c)) for c in dom.points[i]]
                + [repr(float(c)) for c in fld.values[i]]
                + [repr(float(c)) for c in sx[i]]
                + [repr(float(report.residual1.values[i]))]
            )


def _cmd_decompose(cfg: RunConfig) -> int:
    dom, fld, bf = _load_problem(cfg)
    report = factorize.decompose(
        dom,
        fld,
        cfg.pipeline(),
        rule=bf.rule if bf else None,
        jacobian=bf.jacobian if bf else None,
    )
    _emit(report.to_dict(), cfg.out)
    if cfg.dump:
        _dump_cells(cfg.dump, dom, fld, report)
    return 0 if report.tolerances["primal_converged"] else 1


def _cmd_dual(cfg: RunConfig) -> int:
    dom, fld, _ = _load_problem(cfg)
    sol = dual_solver.solve(dom, fld, method=cfg.solver, seed=cfg.seed)
    _emit(
        {
            "D": sol.value,
            "sigma": [int(k) for k in sol.sigma.sigma],
            "method": sol.method,
            "optimality": sol.optimality,
            "bound": sol.bound,
        },
        cfg.out,
    )
    return 0


def _cmd_primal(cfg: RunConfig) -> int:
    dom, fld, _ = _load_problem(cfg)
    pcfg = primal_solver.PrimalConfig(
        method=cfg.primal_method, eps_rel=cfg.eps_primal, seed=cfg.seed
    )
    sol = primal_solver.minimize_primal(dom, fld, pcfg)
    _emit(
        {
            "P": sol.value,
            "iterations": sol.iterations,
            "lower_bound": sol.lower_bound,
            "gap_vs_bound": sol.gap_vs_dual,
            "converged": sol.converged,
            "argmax": [int(k) for k in sol.argmax_map],
        },
        cfg.out,
    )
    return 0 if sol.converged else 1


def _cmd_verify(cfg: RunConfig, sigma_path: str | None, kernel_path: str | None) -> int:
    """Check identities for supplied artifacts without solving."""
    dom, fld, bf = _load_problem(cfg)
    payload: dict = {}
    sigma = None
    if sigma_path:
        try:
            with open(sigma_path, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise FileNotFoundError(f"cannot read sigma file: {exc}") from exc
        sigma = Involution(raw["sigma"] if isinstance(raw, dict) else raw)
        payload["D"] = dual_solver.dual_objective(dom, fld, sigma)
        payload["distance"] = dual_solver.distance_objective(dom, fld, sigma)
        payload["transport_cost"] = transport.transport_cost(dom, fld, sigma)
    kernel = None
    if kernel_path:
        try:
            mat = np.loadtxt(kernel_path, delimiter=",")
        except OSError as exc:
            raise FileNotFoundError(f"cannot read kernel file: {exc}") from exc
        kernel = AntiSymmetricKernel.from_matrix(np.atleast_2d(mat))
        payload["kernel_source"] = "file"
    elif bf is not None and bf.hamiltonian is not None:
        # builtins with a closed-form Hamiltonian verify against its table
        kernel = make_kernel(dom, bf.hamiltonian)
        payload["kernel_source"] = "builtin-analytic"
    if kernel is not None:
        payload["P"] = primal_solver.primal_objective(dom, fld, kernel)
    if kernel is not None and sigma is not None:
        cert = primal_solver.weak_duality(dom, fld, kernel, sigma)
        value, verdict = factorize.selfdual_test(kernel, sigma, dom.cell_measure)
        payload["weak_duality_gap"] = cert.gap
        payload["complementarity"] = {
            "min": float(cert.slack.min()),
            "max": float(cert.slack.max()),
            "sum": float(cert.slack.sum()),
        }
        payload["selfdual_sum"] = value
        payload["selfdual_verdict"] = verdict
    if kernel is not None and sigma is not None:
        ball = ball_radius(dom, fld, cfg.radius_margin)
        pset = build_dual_points(dom, fld, ball, cfg.sphere_points, cfg.seed)
        hreg = regularize(kernel, dom, pset)
        res2 = factorize.second_identity_check(dom, fld, hreg, sigma)
        payload["residual2"] = {"median": res2.median, "max": res2.max}
    payload["monotone"] = factorize.check_monotone(dom, fld).verdict
    _emit(payload, cfg.out)
    return 0


def _cmd_transport(cfg: RunConfig) -> int:
    dom, fld, _ = _load_problem(cfg)
    mu_hat, nu_hat = transport.build_pair_measures(dom, fld)
    if cfg.dump:
        transport.export_atoms_csv(cfg.dump, mu_hat)
    sol = dual_solver.solve(dom, fld, method=cfg.solver, seed=cfg.seed)
    plan = transport.parametrize_map(dom, fld, sol.sigma)
    _emit(
        {
            "total_mass": mu_hat.total_mass,
            "D": sol.value,
            "distance": dual_solver.distance_objective(dom, fld, sol.sigma),
            "transport_cost": transport.transport_cost(dom, fld, sol.sigma),
            "pushes_onto_transpose": plan.pushes_onto_transpose,
        },
        cfg.out,
    )
    return 0


GALLERY_SIZES = (16, 32, 64)


def _cmd_gallery(cfg: RunConfig) -> int:
    rows = []
    for name in fields.builtin_names():
        for n in GALLERY_SIZES:
            bf = fields.builtin_field(name, n)
            dom = build_grid(bf.domain_spec)
            fld = sample_field(dom, bf.rule)
            run_cfg = dataclasses.replace(cfg, builtin=name, n=n)
            report = factorize.decompose(
                dom, fld, run_cfg.pipeline(), rule=bf.rule, jacobian=bf.jacobian
            )
            row = {
                "builtin": name,
                "cells": dom.n,
                "P": report.p_value,
                "D": report.d_value,
                "gap": report.gap,
                "residual1_median": report.residual1.median,
                "residual2_median": report.residual2.median,
                "monotone": report.monotone.verdict,
                "uniqueness": report.uniqueness.verdict,
            }
            if bf.involutions is not None:
                row["known_involutions"] = {
                    label: dual_solver.dual_objective(dom, fld, s)
                    for label, s in bf.involutions(dom)
                }
            rows.append(row)
    _print_gallery(rows)
    if cfg.out:
        _emit({"gallery": rows}, cfg.out)
    return 0


def _print_gallery(rows) -> None:
    head = f"{'builtin':<11}{'cells':>6}{'P':>12}{'D':>12}{'gap':>11}{'res1med':>9}{'mono':>18}"
    print(head)
    print("-" * len(head))
    for r in rows:
        print(
            f"{r['builtin']:<11}{r['cells']:>6}{r['P']:>12.6f}{r['D']:>12.6f}"
            f"{r['gap']:>11.2e}{r['residual1_median']:>9.4f}{r['monotone']:>18}"
        )
        for label, val in r.get("known_involutions", {}).items():
            print(f"{'':<11}{'':>6}  {label}: D = {val:.6f}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="selfdual",
        description="Factor a sampled vector field through a measure "
        "preserving involution and an anti-symmetric Hamiltonian.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON config file; flags override it")
        p.add_argument("--builtin", choices=fields.builtin_names())
        p.add_argument("--params", help="JSON parameters for the builtin")
        p.add_argument("--field", help="field CSV (x0..x{d-1}, u0..u{d-1})")
        p.add_argument("--domain", help="domain spec JSON (file or inline)")
        p.add_argument("--n", type=int, help="cell budget (default 64)")
        p.add_argument("--radius-margin", dest="radius_margin", type=float)
        p.add_argument("--pset-m", dest="sphere_points", type=int)
        p.add_argument("--fd-step-rel", dest="fd_step_rel", type=float)
        p.add_argument(
            "--solver", choices=["auto", "matching", "brute", "local"], default=None
        )
        p.add_argument(
            "--primal-method",
            dest="primal_method",
            choices=["cutting-plane", "subgradient"],
            default=None,
        )
        p.add_argument("--eps-primal", dest="eps_primal", type=float)
        p.add_argument("--tol-reg", dest="tol_reg", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="write the JSON payload here")
        p.add_argument("--dump", help="write the plot-ready CSV here")

    for name in ("decompose", "dual", "primal", "transport"):
        common(sub.add_parser(name))
    verify = sub.add_parser("verify")
    common(verify)
    verify.add_argument("--sigma", dest="sigma_path", help="involution JSON file")
    verify.add_argument("--kernel", dest="kernel_path", help="kernel CSV file")
    gallery = sub.add_parser("gallery")
    common(gallery)
    return ap


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "gallery" and args.builtin is None:
            args.builtin = "sincos"  # placeholder; gallery iterates all builtins
        cfg = parse_config(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        if args.command == "decompose":
            return _cmd_decompose(cfg)
        if args.command == "dual":
            return _cmd_dual(cfg)
        if args.command == "primal":
            return _cmd_primal(cfg)
        if args.command == "verify":
            return _cmd_verify(cfg, args.sigma_path, args.kernel_path)
        if args.command == "transport":
            return _cmd_transport(cfg)
        if args.command == "gallery":
            return _cmd_gallery(cfg)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    raise AssertionError("unreachable")


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
