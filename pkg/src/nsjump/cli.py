"""Command line entry points: simulate, verify, report.

One JSON config document drives everything. The schema is versioned and
strict: unknown keys anywhere are an error, so typos fail loudly instead of
silently running defaults. The CLI never modifies its inputs; outputs are a
function of (config bytes, seed), and every artifact directory carries a
manifest with the config hash so a run can be reproduced bit for bit.
"""

from __future__ import annotations

import argparse
import hashlib
import inspect
import json
import os
import sys
from dataclasses import replace

import numpy as np

from . import __version__, spectral, suites
from .ensemble import resolve_workers
from .jumps import LevyMeasureSpec, derive_rng, sample_train
from .noise import KINDS, NoiseCoefficient
from .reporting import EnsembleReport, report_from_json_dict
from .sde import BlowUpError, GalerkinConfig, integrate, observables_csv, path_to_json_dict

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


def _require_keys(d: dict, allowed: set[str], where: str):
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)} in {where}")


def _build_field(spec: dict, n: int, where: str) -> spectral.SpectralField:
    _require_keys(spec, {"kind", "k", "amp", "seed", "norm_h", "decay", "modes"}, where)
    kind = spec.get("kind")
    if kind == "zero":
        return spectral.zero_field(n)
    if kind == "single_mode":
        k = tuple(spec["k"])
        re1, im1, re2, im2 = spec["amp"]
        u = spectral.from_modes({k: (complex(re1, im1), complex(re2, im2))}, n)
        return spectral.leray_project(u)
    if kind == "modes":
        modes = {}
        for k1, k2, re1, im1, re2, im2 in spec["modes"]:
            modes[(int(k1), int(k2))] = (complex(re1, im1), complex(re2, im2))
        return spectral.leray_project(spectral.from_modes(modes, n))
    if kind == "random":
        rng = derive_rng(int(spec.get("seed", 11)))
        return spectral.random_solenoidal_field(
            n, rng, decay=float(spec.get("decay", 2.0)),
            norm_h=spec.get("norm_h"))
    raise ConfigError(f"unknown field kind {kind!r} in {where}")


def load_config(path: str) -> dict:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as err:
            raise ConfigError(f"config is not valid JSON: {err}") from err
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    _require_keys(doc, {"schema_version", "galerkin", "levy", "noise",
                        "simulate", "verify"}, "config root")
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}")
    return doc


def build_galerkin(doc: dict, seed_override: int | None = None) -> GalerkinConfig:
    gal = dict(doc.get("galerkin", {}))
    _require_keys(gal, {"n", "s", "horizon", "dt_max", "seed", "enable_stokes",
                        "enable_nonlinearity", "u0"}, "galerkin")
    levy_doc = dict(doc.get("levy", {}))
    _require_keys(levy_doc, {"rate", "mark_law", "gap", "lo", "hi"}, "levy")
    noise_doc = dict(doc.get("noise", {}))
    _require_keys(noise_doc, {"kind", "gamma", "g"}, "noise")

    n = int(gal.get("n", 4))
    try:
        levy = LevyMeasureSpec(
            rate=float(levy_doc.get("rate", 2.0)),
            mark_law=levy_doc.get("mark_law", "uniform_annulus"),
            gap=float(levy_doc.get("gap", 0.1)),
            lo=float(levy_doc.get("lo", 0.1)),
            hi=float(levy_doc.get("hi", 0.5)))
        kind = noise_doc.get("kind", "linear_multiplicative")
        if kind not in KINDS:
            raise ConfigError(f"noise kind must be one of {KINDS}")
        g = None
        if "g" in noise_doc:
            g = _build_field(noise_doc["g"], n, "noise.g")
        coef = NoiseCoefficient(kind=kind, g=g,
                                gamma=float(noise_doc.get("gamma", 1.0)))
        u0 = _build_field(gal.get("u0", {"kind": "zero"}), n, "galerkin.u0")
        config = GalerkinConfig(
            n=n, u0=u0, levy=levy, coef=coef,
            s=float(gal.get("s", 2.5)),
            horizon=float(gal.get("horizon", 0.5)),
            dt_max=float(gal.get("dt_max", 1e-2)),
            seed=int(gal.get("seed", 0)),
            enable_stokes=bool(gal.get("enable_stokes", True)),
            enable_nonlinearity=bool(gal.get("enable_nonlinearity", True)))
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as err:
        raise ConfigError(f"invalid config value: {err}") from err
    if seed_override is not None:
        config = replace(config, seed=int(seed_override))
    return config


def _config_hash(path: str) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _write_json(path: str, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def _manifest(out_dir: str, command: str, config_path: str, seed: int,
              files: list[str], extra: dict | None = None) -> None:
    payload = {"command": command, "config_sha256": _config_hash(config_path),
               "seed": seed, "version": __version__, "files": sorted(files)}
    payload.update(extra or {})
    _write_json(os.path.join(out_dir, "manifest.json"), payload)


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(config_path: str, seed: int | None, out_dir: str) -> int:
    try:
        doc = load_config(config_path)
        sim = dict(doc.get("simulate", {}))
        _require_keys(sim, {"ensemble"}, "simulate")
        config = build_galerkin(doc, seed)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    ensemble = int(sim.get("ensemble", 1))
    os.makedirs(out_dir, exist_ok=True)
    files = []
    probes = suites.standard_probes(config.n, config.seed)[:2]
    for i in range(ensemble):
        train = sample_train(config.levy, config.horizon,
                             rng=derive_rng(config.seed, i))
        try:
            path = integrate(config, train=train)
        except BlowUpError as err:
            print(f"path {i} blew up at t={err.time:.6g}", file=sys.stderr)
            return 3
        pj = f"path_{i:04d}.json"
        oc = f"observables_{i:04d}.csv"
        _write_json(os.path.join(out_dir, pj), path_to_json_dict(path))
        with open(os.path.join(out_dir, oc), "w", encoding="utf-8") as fh:
            fh.write(observables_csv(path, probes))
        files += [pj, oc]
    _manifest(out_dir, "simulate", config_path, config.seed, files,
              {"ensemble": ensemble})
    print(f"wrote {len(files)} files to {out_dir}")
    return 0


def _print_table(reports: list[EnsembleReport]) -> None:
    wname = max(len(r.name) for r in reports) + 2
    wanchor = max(len(r.anchor) for r in reports) + 2
    print(f"{'check':<{wname}}{'anchor':<{wanchor}}{'estimate':>14}"
          f"{'half_width':>14}{'paths':>8}  verdict")
    for r in reports:
        print(f"{r.name:<{wname}}{r.anchor:<{wanchor}}{r.estimate:>14.6g}"
              f"{r.half_width_99:>14.6g}{r.n_paths:>8}  {r.verdict}")


def cmd_verify(config_path: str, suite: str, out_dir: str,
               workers: int | None) -> int:
    try:
        doc = load_config(config_path)
        ver = dict(doc.get("verify", {}))
        _require_keys(ver, {"workers"} | set(suites.SUITE_NAMES), "verify")
        if suite != "all" and suite not in suites.SUITE_NAMES:
            raise ConfigError(
                f"suite must be one of {suites.SUITE_NAMES + ('all',)}")
        params = {}
        for name in suites.SUITE_NAMES:
            sub = dict(ver.get(name, {}))
            allowed = set(inspect.signature(
                getattr(suites, f"suite_{name}")).parameters) - {"_ignored"}
            _require_keys(sub, allowed, f"verify.{name}")
            params[name] = sub
        wk = resolve_workers(workers if workers is not None
                             else ver.get("workers"))
        for name in ("martingale", "qv", "estimates"):
            params[name].setdefault("workers", wk)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    if suite == "all":
        reports = suites.run_suite("all", params)
    else:
        reports = suites.run_suite(suite, params[suite])
    os.makedirs(out_dir, exist_ok=True)
    files = []
    for r in reports:
        fname = f"{suite}_{r.name}.json"
        with open(os.path.join(out_dir, fname), "w", encoding="utf-8") as fh:
            fh.write(r.to_json())
            fh.write("\n")
        files.append(fname)
    _manifest(out_dir, "verify", config_path,
              int(doc.get("galerkin", {}).get("seed", 0)), files,
              {"suite": suite})
    _print_table(reports)
    failed = [r.name for r in reports if r.verdict == "FAIL"]
    if failed:
        print(f"FAILED: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


def _pool_reports(groups: dict[str, list[EnsembleReport]]) -> list[dict]:
    rows = []
    for name in sorted(groups):
        batch = groups[name]
        weights = np.asarray([max(r.n_paths, 1) for r in batch], dtype=float)
        ests = np.asarray([r.estimate for r in batch])
        ses = np.asarray([r.half_width_99 for r in batch]) / 2.576
        wsum = float(np.sum(weights))
        est = float(np.dot(weights, ests) / wsum)
        se = float(np.sqrt(np.sum((weights * ses) ** 2)) / wsum)
        verdicts = {r.verdict for r in batch}
        verdict = ("FAIL" if "FAIL" in verdicts
                   else "PASS" if "PASS" in verdicts else "INFO")
        rows.append({"name": name, "anchor": batch[0].anchor, "estimate": est,
                     "half_width_99": 2.576 * se,
                     "n_paths_total": int(sum(r.n_paths for r in batch)),
                     "n_reports": len(batch), "verdict": verdict})
    return rows


def cmd_report(results_dir: str) -> int:
    if not os.path.isdir(results_dir):
        print(f"not a directory: {results_dir}", file=sys.stderr)
        return 2
    groups: dict[str, list[EnsembleReport]] = {}
    for fname in sorted(os.listdir(results_dir)):
        if not fname.endswith(".json") or fname == "manifest.json":
            continue
        try:
            with open(os.path.join(results_dir, fname), encoding="utf-8") as fh:
                rep = report_from_json_dict(json.load(fh))
        except (ValueError, KeyError, TypeError):
            continue
        groups.setdefault(rep.name, []).append(rep)
    if not groups:
        print(f"no reports found in {results_dir}", file=sys.stderr)
        return 2
    rows = _pool_reports(groups)
    header = ["name", "anchor", "estimate", "half_width_99", "n_paths_total",
              "n_reports", "verdict"]
    csv_lines = [",".join(header)]
    for row in rows:
        csv_lines.append(",".join(
            repr(row[c]) if isinstance(row[c], float) else str(row[c])
            for c in header))
    csv_text = "\n".join(csv_lines) + "\n"
    with open(os.path.join(results_dir, "summary.csv"), "w", encoding="utf-8") as fh:
        fh.write(csv_text)
    wname = max(len(r["name"]) for r in rows) + 2
    wanchor = max(len(r["anchor"]) for r in rows) + 2
    txt = [f"{'check':<{wname}}{'anchor':<{wanchor}}{'estimate':>14}"
           f"{'half_width':>14}{'paths':>8}{'runs':>6}  verdict"]
    for row in rows:
        txt.append(f"{row['name']:<{wname}}{row['anchor']:<{wanchor}}"
                   f"{row['estimate']:>14.6g}{row['half_width_99']:>14.6g}"
                   f"{row['n_paths_total']:>8}{row['n_reports']:>6}  {row['verdict']}")
    txt_text = "\n".join(txt) + "\n"
    with open(os.path.join(results_dir, "summary.txt"), "w", encoding="utf-8") as fh:
        fh.write(txt_text)
    print(txt_text, end="")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="nsjump",
        description="Spectral Galerkin simulation of 2d incompressible flow "
                    "driven by compensated jump noise, with Monte Carlo "
                    "verification suites.")
    sub = ap.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="integrate paths and write them out")
    sim.add_argument("--config", required=True)
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--out", default="runs/simulate")

    ver = sub.add_parser("verify", help="run a named verification suite")
    ver.add_argument("--config", required=True)
    ver.add_argument("--suite", required=True,
                     choices=suites.SUITE_NAMES + ("all",))
    ver.add_argument("--out", default="runs/verify")
    ver.add_argument("--workers", type=int, default=None,
                     help="worker processes (default: NSJUMP_WORKERS or 1)")

    rep = sub.add_parser("report", help="merge report JSON into a summary")
    rep.add_argument("--dir", required=True)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "simulate":
        return cmd_simulate(args.config, args.seed, args.out)
    if args.command == "verify":
        return cmd_verify(args.config, args.suite, args.out, args.workers)
    return cmd_report(args.dir)


if __name__ == "__main__":
    sys.exit(main())
