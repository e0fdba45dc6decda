"""Batch command-line front end.

    gfbm-lab <command> --config run.json [--out dir] [--workers n] [--overwrite]

Commands: simulate, cov, smallball, exponent, integral-test, chung, probe,
audit, report.  Each run consumes a JSON config, validates it strictly
(unknown keys are rejected), and writes CSV/JSON artifacts named by a
content hash of the config, plus optional SVG plots.  Identical configs
produce byte-identical outputs; existing files are never overwritten unless
--overwrite is passed.

Exit codes: 0 ok, 1 config error, 2 numerical failure, 3 I/O error.  Errors
are also emitted as a JSON object on stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

__all__ = ["main"]

_COMMANDS = ("simulate", "cov", "smallball", "exponent", "integral-test",
             "chung", "probe", "audit", "report")

_COMMON_KEYS = {"params", "seed", "output_dir", "plots"}
_KEYS_BY_COMMAND = {
    "simulate": {"grid", "grid_n", "t_max", "n_paths", "route", "process",
                 "noise_mesh", "domain_cut", "binary", "tolerance"},
    "cov": {"grid", "grid_n", "t_max", "which", "tolerance"},
    "smallball": {"eps_list", "n_paths", "grid_n", "process", "noise_mesh",
                  "domain_cut"},
    "exponent": {"smallball_csv", "tolerance", "process"},
    "audit": {"smallball_csv", "process"},
    "integral-test": {"endpoint", "phi", "xi", "n_doublings"},
    "chung": {"k_max", "n_paths", "endpoint", "exponent_override",
              "points_per_smallest", "noise_mesh"},
    "probe": {"t", "u", "nu", "eta", "n_paths", "grid_n", "noise_mesh"},
    "report": set(),
}


class ConfigError(ValueError):
    """Configuration file is malformed or inconsistent."""


def _cap_workers(argv: list[str]) -> None:
    workers = None
    for i, arg in enumerate(argv):
        if arg == "--workers" and i + 1 < len(argv):
            workers = argv[i + 1]
        elif arg.startswith("--workers="):
            workers = arg.split("=", 1)[1]
    if workers is None:
        workers = os.environ.get("GFBM_LAB_WORKERS")
    if workers is None:
        return
    try:
        n = max(1, int(workers))
    except ValueError:
        return  # argparse will reject it with a proper message
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS"):
        os.environ[var] = str(n)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gfbm-lab", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd in _COMMANDS:
        p = sub.add_parser(cmd)
        if cmd != "report":
            p.add_argument("--config", required=True, help="path to the JSON run config")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--workers", type=int, default=None,
                       help="cap on BLAS/OpenMP threads")
        p.add_argument("--overwrite", action="store_true",
                       help="allow replacing existing artifacts")
    return parser


def _load_config(path: str, command: str) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    allowed = _COMMON_KEYS | _KEYS_BY_COMMAND[command]
    unknown = set(cfg) - allowed
    if unknown:
        raise ConfigError(f"unknown config keys for {command}: {sorted(unknown)}")
    return cfg


def _need(cfg: dict, key: str):
    if key not in cfg:
        raise ConfigError(f"missing required config key {key!r}")
    return cfg[key]


def _params_from(cfg: dict):
    from .params import OutOfRangeError, validate

    raw = _need(cfg, "params")
    if not isinstance(raw, dict) or set(raw) != {"gamma", "alpha", "theta"}:
        raise ConfigError("params must be an object with exactly gamma, alpha, theta")
    try:
        return validate(raw["gamma"], raw["alpha"], raw["theta"])
    except OutOfRangeError as exc:
        raise ConfigError(f"invalid params: {exc}") from exc


def _grid_from(cfg: dict):
    import numpy as np

    if "grid" in cfg:
        return np.asarray(cfg["grid"], dtype=float)
    grid_n = int(_need(cfg, "grid_n"))
    t_max = float(cfg.get("t_max", 1.0))
    return np.arange(1, grid_n + 1) * (t_max / grid_n)


def _out_paths(cfg: dict, out_arg, command: str, overwrite: bool):
    from .artifacts import content_hash, prepare_path

    out_dir = Path(out_arg or cfg.get("output_dir") or ".")
    digest = content_hash({"command": command, "config": cfg})
    stem = f"{command.replace('-', '_')}_{digest[:12]}"
    return out_dir, stem, digest


def _finish(out_dir: Path, stem: str, digest: str, cfg: dict, command: str,
            summary: dict, overwrite: bool, tables: dict | None = None,
            plots: list | None = None) -> int:
    from .artifacts import prepare_path, write_csv, write_json

    out_dir.mkdir(parents=True, exist_ok=True)
    summary = {
        "command": command,
        "provenance": {
            "config": cfg,
            "content_hash": digest,
            "seed": cfg.get("seed"),
        },
        "results": summary,
    }
    for suffix, (header, rows) in (tables or {}).items():
        write_csv(prepare_path(out_dir / f"{stem}{suffix}.csv", overwrite), header, rows)
    write_json(prepare_path(out_dir / f"{stem}.json", overwrite), summary)
    for fn in plots or []:
        fn(out_dir, stem)
    print(out_dir / f"{stem}.json")
    return 0


def _cmd_simulate(cfg, out_dir, stem, digest, overwrite) -> int:
    import numpy as np

    from . import sampler
    from .covariance import cov_matrix

    params = _params_from(cfg)
    grid = _grid_from(cfg)
    n_paths = int(_need(cfg, "n_paths"))
    seed = int(cfg.get("seed", 0))
    route = cfg.get("route", "discretized")
    process = cfg.get("process", "Y").upper()
    if route == "cholesky":
        cov = cov_matrix(params, grid, which=process,
                         tol=float(cfg.get("tolerance", 1e-9)))
        batch = sampler.sample_gaussian(sampler.factorize(cov), n_paths, seed)
    elif route == "discretized":
        batch = sampler.sample_x_discretized(
            params, grid, noise_mesh=int(cfg.get("noise_mesh", 4096)),
            domain_cut=cfg.get("domain_cut"), n_paths=n_paths, seed=seed)
        if process == "Y":
            batch = sampler.frac_integral(batch, params.theta)
    else:
        raise ConfigError(f"route must be 'cholesky' or 'discretized', got {route!r}")
    tables = {"_paths": ([f"{t!r}" for t in batch.grid], batch.values)}
    summary = {
        "process": process, "route": route, "n_paths": n_paths,
        "grid_n": int(grid.size), "generator_tag": batch.generator_tag,
        "marginal_variance_last": float(np.var(batch.values[:, -1])),
    }
    rc = _finish(out_dir, stem, digest, cfg, "simulate", summary, overwrite,
                 tables=tables)
    if cfg.get("binary"):
        from .artifacts import prepare_path

        batch.to_binary(prepare_path(out_dir / f"{stem}_paths.bin", overwrite))
    return rc


def _cmd_cov(cfg, out_dir, stem, digest, overwrite) -> int:
    import numpy as np

    from .covariance import cov_matrix

    params = _params_from(cfg)
    grid = _grid_from(cfg)
    which = cfg.get("which", "X").upper()
    cov = cov_matrix(params, grid, which=which, tol=float(cfg.get("tolerance", 1e-9)))
    eigmin = float(np.linalg.eigvalsh(cov.entries).min())
    tables = {"_matrix": ([f"{t!r}" for t in cov.grid], cov.entries)}
    summary = {
        "which": which, "grid_n": int(grid.size),
        "max_quad_error": cov.max_quad_error, "eig_min": eigmin,
        "trace": float(np.trace(cov.entries)),
    }
    return _finish(out_dir, stem, digest, cfg, "cov", summary, overwrite, tables=tables)


def _smallball_rows(estimates):
    for e in estimates:
        yield [e.epsilon, e.n, e.hits, e.phat, e.ci[0], e.ci[1],
               e.psi if math.isfinite(e.psi) else "nan"]


def _cmd_smallball(cfg, out_dir, stem, digest, overwrite) -> int:
    from .smallball import estimate_phi

    params = _params_from(cfg)
    estimates = estimate_phi(
        params,
        [float(v) for v in _need(cfg, "eps_list")],
        int(_need(cfg, "n_paths")),
        int(_need(cfg, "grid_n")),
        int(cfg.get("seed", 0)),
        process=cfg.get("process", "Y").upper(),
        noise_mesh=cfg.get("noise_mesh"),
        domain_cut=cfg.get("domain_cut"),
    )
    header = ["epsilon", "n", "hits", "phat", "ci_low", "ci_high", "psi"]
    tables = {"": (header, list(_smallball_rows(estimates)))}
    summary = {
        "eps": [e.epsilon for e in estimates],
        "phat": [e.phat for e in estimates],
        "psi": [e.psi if math.isfinite(e.psi) else None for e in estimates],
        "psi_ci": [[e.psi_ci[0], None if math.isinf(e.psi_ci[1]) else e.psi_ci[1]]
                   for e in estimates],
        "zero_hit_eps": [e.epsilon for e in estimates if e.zero_hits],
    }
    plots = []
    if cfg.get("plots"):
        def _plot(out, st, estimates=estimates):
            from .artifacts import line_plot_svg

            pts = [(e.epsilon, e.psi) for e in estimates if math.isfinite(e.psi)]
            if len(pts) >= 2:
                xs = [1.0 / p[0] for p in pts]
                ys = [p[1] for p in pts]
                line_plot_svg(out / f"{st}.svg", [(xs, ys, "psi")],
                              "1/epsilon", "psi", logx=True, logy=True)
        plots.append(_plot)
    return _finish(out_dir, stem, digest, cfg, "smallball", summary, overwrite,
                   tables=tables, plots=plots)


def _read_smallball_csv(path):
    import csv as _csv

    from .smallball import SmallBallEstimate, wilson_interval

    estimates = []
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise ConfigError(f"cannot read smallball csv {path}: {exc}") from exc
    with fh:
        for row in _csv.DictReader(fh):
            n = int(row["n"])
            hits = int(row["hits"])
            ci = wilson_interval(hits, n)
            psi = float(row["psi"]) if row["psi"] not in ("nan", "") else math.nan
            psi_ci = (
                -math.log(ci[1]) if ci[1] > 0 else math.inf,
                -math.log(ci[0]) if ci[0] > 0 else math.inf,
            )
            estimates.append(SmallBallEstimate(
                epsilon=float(row["epsilon"]), n=n, hits=hits,
                phat=float(row["phat"]), ci=ci, psi=psi, psi_ci=psi_ci))
    if not estimates:
        raise ConfigError(f"no rows in smallball csv {path}")
    return estimates


def _target_beta(cfg, params) -> float:
    """Scaling exponent whose reciprocal the log-log slope should match.

    For the integrated process this is alpha + theta + 1/2; for the raw
    process the fractional integration drops out (theta contributes 0).
    """
    from .params import derive

    process = cfg.get("process", "Y").upper()
    if process == "X":
        return params.alpha + 0.5
    return derive(params).beta


def _cmd_exponent(cfg, out_dir, stem, digest, overwrite) -> int:
    from .smallball import fit_exponent

    params = _params_from(cfg)
    estimates = _read_smallball_csv(_need(cfg, "smallball_csv"))
    fit = fit_exponent(estimates)
    beta = _target_beta(cfg, params)
    tolerance = float(cfg.get("tolerance", 0.25))
    expected = 1.0 / beta
    summary = {
        "slope": fit.slope, "intercept": fit.intercept, "stderr": fit.stderr,
        "r2": fit.r2, "n_points": fit.n_points,
        "beta_expected": beta, "slope_expected": expected,
        "within_tolerance": abs(fit.slope - expected) <= tolerance * expected,
        "tolerance": tolerance,
    }
    return _finish(out_dir, stem, digest, cfg, "exponent", summary, overwrite)


def _cmd_audit(cfg, out_dir, stem, digest, overwrite) -> int:
    from .smallball import audit_psi_properties

    params = _params_from(cfg)
    estimates = _read_smallball_csv(_need(cfg, "smallball_csv"))
    audit = audit_psi_properties(estimates, _target_beta(cfg, params))
    summary = {
        "monotone_ok": audit.monotone_ok,
        "monotone_violations": audit.monotone_violations,
        "growth_ok": audit.growth_ok,
        "growth_violations": audit.growth_violations,
        "k1_min": audit.k1_min,
        "k1_finite": audit.k1_finite,
        "convex_ok": audit.convex_ok,
        "convex_violations": audit.convex_violations,
        "passed": audit.passed,
    }
    return _finish(out_dir, stem, digest, cfg, "audit", summary, overwrite)


def _cmd_integral_test(cfg, out_dir, stem, digest, overwrite) -> int:
    from .lil import (
        IntegralTestSpec,
        chung_boundary,
        eval_integral_test,
        phi_model_exponential,
        phi_model_from_estimates,
    )
    from .params import derive

    params = _params_from(cfg)
    d = derive(params)
    ht = d.hurst + params.theta
    phi_cfg = _need(cfg, "phi")
    if phi_cfg.get("kind") == "exponential":
        phi = phi_model_exponential(float(phi_cfg["kappa"]), d.beta)
    elif phi_cfg.get("kind") == "table":
        phi = phi_model_from_estimates(_read_smallball_csv(phi_cfg["smallball_csv"]))
    else:
        raise ConfigError("phi.kind must be 'exponential' or 'table'")
    xi_cfg = _need(cfg, "xi")
    if xi_cfg.get("kind") == "chung":
        xi = chung_boundary(float(xi_cfg["lam"]), ht, d.beta)
    elif xi_cfg.get("kind") == "power":
        offset = float(xi_cfg["offset"])

        def xi(t, _o=offset, _ht=ht):
            return t ** (_ht + _o)
    else:
        raise ConfigError("xi.kind must be 'chung' or 'power'")
    spec = IntegralTestSpec(xi=xi, endpoint=_need(cfg, "endpoint"),
                            phi_model=phi, similarity_index=ht)
    res = eval_integral_test(spec, d, n_doublings=int(cfg.get("n_doublings", 8)))
    summary = {
        "verdict": res.verdict,
        "partial_values": res.partial_values,
        "increments": res.increments,
        "decay_exponents": [None if math.isinf(c) else c for c in res.decay_exponents],
    }
    return _finish(out_dir, stem, digest, cfg, "integral-test", summary, overwrite)


def _cmd_chung(cfg, out_dir, stem, digest, overwrite) -> int:
    import numpy as np

    from .lil import chung_statistic

    params = _params_from(cfg)
    series = chung_statistic(
        params, int(_need(cfg, "k_max")), int(_need(cfg, "n_paths")),
        int(cfg.get("seed", 0)), endpoint=cfg.get("endpoint", "zero"),
        exponent_override=cfg.get("exponent_override"),
        points_per_smallest=int(cfg.get("points_per_smallest", 64)),
        noise_mesh=cfg.get("noise_mesh"),
    )
    header = ["k", "t_k", "statistic_median", "running_min_median",
              "running_min_q05", "running_min_q95"]
    rows = []
    for j in range(series.times.size):
        rows.append([
            j + 1, series.times[j],
            float(np.median(series.statistic[:, j])),
            float(series.medians[j]),
            float(np.percentile(series.running_min[:, j], 5)),
            float(np.percentile(series.running_min[:, j], 95)),
        ])
    tables = {"": (header, rows)}
    summary = {
        "endpoint": series.endpoint,
        "exponent_used": series.exponent_used,
        "running_min_medians": [float(v) for v in series.medians],
        "final_percentiles": series.final_percentiles(),
    }
    plots = []
    if cfg.get("plots"):
        def _plot(out, st, series=series):
            from .artifacts import line_plot_svg

            ks = list(range(1, series.times.size + 1))
            line_plot_svg(out / f"{st}.svg",
                          [(ks, list(series.medians), "running-min median")],
                          "k", "running min")
        plots.append(_plot)
    return _finish(out_dir, stem, digest, cfg, "chung", summary, overwrite,
                   tables=tables, plots=plots)


def _cmd_probe(cfg, out_dir, stem, digest, overwrite) -> int:
    from .lil import maximal_inequality_probe

    params = _params_from(cfg)
    report = maximal_inequality_probe(
        params, float(_need(cfg, "t")), float(_need(cfg, "u")),
        float(_need(cfg, "nu")), float(_need(cfg, "eta")),
        int(_need(cfg, "n_paths")), int(cfg.get("seed", 0)),
        grid_n=int(cfg.get("grid_n", 2048)), noise_mesh=cfg.get("noise_mesh"),
    )
    summary = {
        "p_joint": report.p_joint, "joint_ci": list(report.joint_ci),
        "phi_nu": report.phi_nu, "phi_eta_unit": report.phi_eta_unit,
        "p_eta_abs": report.p_eta_abs,
        "ratio_exponential": None if math.isnan(report.ratio_exponential)
        else report.ratio_exponential,
        "ratio_independence": report.ratio_independence,
        "degenerate": report.degenerate,
    }
    return _finish(out_dir, stem, digest, cfg, "probe", summary, overwrite)


def _cmd_report(out_arg, overwrite) -> int:
    from .artifacts import prepare_path, scan_artifacts, write_json

    out_dir = Path(out_arg or ".")
    runs = {}
    for path in scan_artifacts(out_dir):
        if path.name.startswith("report"):
            continue
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise OSError(f"unreadable artifact {path}: {exc}") from exc
        prov = doc.get("provenance")
        if not isinstance(prov, dict) or "content_hash" not in prov:
            continue
        runs[prov["content_hash"]] = doc
    if not runs:
        raise OSError(f"no run artifacts found in {out_dir}")
    lines = [f"{len(runs)} run(s) in {out_dir}"]
    verdicts = {}
    for digest, doc in sorted(runs.items()):
        cmd = doc.get("command", "?")
        res = doc.get("results", {})
        lines.append(f"- {cmd} [{digest[:12]}]")
        if cmd == "exponent":
            ok = res.get("within_tolerance")
            verdicts[digest] = bool(ok)
            lines.append(
                f"    slope={res.get('slope'):.6g} vs 1/beta="
                f"{res.get('slope_expected'):.6g} -> "
                f"{'PASS' if ok else 'FAIL'}")
        elif cmd == "audit":
            verdicts[digest] = bool(res.get("passed"))
            lines.append(f"    audit {'PASS' if res.get('passed') else 'FAIL'}")
        elif cmd == "integral-test":
            lines.append(f"    verdict: {res.get('verdict')}")
        elif cmd == "smallball":
            lines.append(f"    eps grid: {res.get('eps')}")
    consolidated = {"runs": runs, "verdicts": verdicts}
    write_json(prepare_path(out_dir / "report.json", overwrite), consolidated)
    text = "\n".join(lines) + "\n"
    with open(prepare_path(out_dir / "report.txt", overwrite), "w") as fh:
        fh.write(text)
    print(text, end="")
    return 0


_RUNNERS = {
    "simulate": _cmd_simulate,
    "cov": _cmd_cov,
    "smallball": _cmd_smallball,
    "exponent": _cmd_exponent,
    "audit": _cmd_audit,
    "integral-test": _cmd_integral_test,
    "chung": _cmd_chung,
    "probe": _cmd_probe,
}


def _emit_error(exc: Exception, code: int) -> int:
    doc = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    json.dump(doc, sys.stderr)
    sys.stderr.write("\n")
    return code


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    _cap_workers(argv)
    ns = _build_parser().parse_args(argv)
    try:
        if ns.command == "report":
            return _cmd_report(ns.out, ns.overwrite)
        cfg = _load_config(ns.config, ns.command)
        out_dir, stem, digest = _out_paths(cfg, ns.out, ns.command, ns.overwrite)
        return _RUNNERS[ns.command](cfg, out_dir, stem, digest, ns.overwrite)
    except ConfigError as exc:
        return _emit_error(exc, 1)
    except Exception as exc:  # sort by contract: numerical vs I/O vs config
        from .params import OutOfRangeError
        from .sampler import NotFactorizableError
        from .specquad import DivergentTailError, DomainError, NoConvergenceError

        if isinstance(exc, (NoConvergenceError, NotFactorizableError,
                            DivergentTailError, DomainError)):
            return _emit_error(exc, 2)
        if isinstance(exc, OutOfRangeError):
            return _emit_error(exc, 1)
        if isinstance(exc, OSError):
            return _emit_error(exc, 3)
        raise


if __name__ == "__main__":
    sys.exit(main())
