"""Command-line front end.

Every command reads a sectioned config file, runs one experiment and writes
CSV and/or JSON files into the output directory.  Primary outputs carry the
tool version, config hash and seed; the wall-clock time goes to a separate
``<command>.meta.json`` so that reruns produce byte-identical primary files.

Exit codes: 0 success, 1 computation failure, 2 configuration error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from . import anderson, jumpscan, lyapunov, regularity, rotation
from .config import RunConfig, build_distribution, build_family
from .errors import CocycleLabError, ConfigError, IneligibleFamily, MonotonicityViolation
from .families import make_schrodinger_family, sample_word, validate_assumptions

log = logging.getLogger("cocycle_lab")

JUMP_STREAM = 0x5C


# ------------------------------------------------------------------ output


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


class Output:
    """Writes primary files with embedded provenance and a timing sidecar."""

    def __init__(self, outdir: Path, command: str, cfg: RunConfig):
        self.dir = Path(outdir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.command = command
        self.cfg = cfg
        self.files: list[str] = []
        self.started = time.perf_counter()

    @property
    def provenance(self) -> dict:
        return {"tool": "cocycle-lab", "version": __version__, "command": self.command,
                "config_sha256": self.cfg.digest, "seed": self.cfg.seed}

    def csv(self, name: str, header, rows):
        path = self.dir / name
        with open(path, "w", newline="", encoding="utf-8") as fh:
            for key, value in self.provenance.items():
                fh.write(f"# {key}: {value}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([_fmt(v) for v in row])
        self.files.append(name)

    def json(self, name: str, payload: dict):
        body = {"meta": self.provenance, "config": self.cfg.as_dict()}
        body.update(payload)
        path = self.dir / name
        path.write_text(json.dumps(_clean(body), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        self.files.append(name)

    def close(self):
        meta = dict(self.provenance, files=self.files,
                    wall_clock_seconds=round(time.perf_counter() - self.started, 3),
                    finished_at=time.strftime("%Y-%m-%dT%H:%M:%S%z"))
        (self.dir / f"{self.command}.meta.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")


def _grid(cfg, section, default_nodes):
    lo, hi = cfg.interval("family", "J")
    nodes = cfg.getint(section, "nodes", default_nodes)
    if nodes < 2:
        raise ConfigError(f"[{section}] nodes must be at least 2")
    return np.linspace(lo, hi, nodes)


def _pool_map(fn, items, threads):
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


# ---------------------------------------------------------------- commands


def run_le_scan(cfg: RunConfig, out: Output, threads: int = 1):
    family = build_family(cfg)
    grid = _grid(cfg, "le-scan", 101)
    n, reps = cfg.getint("run", "n"), cfg.getint("run", "reps", 1)
    curve = lyapunov.le_curve(family, grid, n, reps, cfg.seed, threads=threads)
    block = family.block_size
    out.csv("le_curve.csv", ["a", "lambda_hat", "stderr", "lambda_per_site"],
            [(e.a, e.lambda_hat, e.stderr, e.lambda_hat / block) for e in curve])
    _, lam, err = lyapunov.curve_arrays(curve)
    pooled = np.sqrt(err[1:] ** 2 + err[:-1] ** 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.abs(np.diff(lam)) / pooled
        # against the neighbour midpoint, which cancels a genuine slope
        mid = np.abs(lam[1:-1] - 0.5 * (lam[:-2] + lam[2:])) / np.sqrt(
            err[1:-1] ** 2 + 0.25 * (err[:-2] ** 2 + err[2:] ** 2))
    ratio = ratio[np.isfinite(ratio)]
    mid = mid[np.isfinite(mid)]
    out.json("le_summary.json", {
        "nodes": len(curve), "n": n, "reps": reps, "block_size": block,
        "lambda_min": float(lam.min()), "lambda_max": float(lam.max()),
        "max_adjacent_jump_over_pooled_stderr": float(ratio.max()) if ratio.size else 0.0,
        "max_midpoint_residual_over_stderr": float(mid.max()) if mid.size else 0.0})


def run_rotation_scan(cfg: RunConfig, out: Output, threads: int = 1):
    family = build_family(cfg)
    grid = _grid(cfg, "rotation-scan", 101)
    n, reps = cfg.getint("run", "n"), cfg.getint("run", "reps", 1)
    dos = rotation.dos_measure(family, grid, n, cfg.seed, reps)
    out.csv("rotation_curve.csv", ["a", "rho_hat", "stderr"],
            zip(grid, dos.rho.rho_hat, dos.rho.stderr))
    out.csv("dos_cells.csv", ["lo", "hi", "increment", "stderr"],
            zip(grid[:-1], grid[1:], dos.increments, dos.stderr))
    out.json("rotation_summary.json", {"nodes": grid.size, "n": n, "reps": reps,
                                       "dos_total": dos.total, "rho_min": float(dos.rho.rho_hat.min()),
                                       "rho_max": float(dos.rho.rho_hat.max())})


def jump_scan_words(cfg: RunConfig, threads: int = 1, keep_tables: bool = False) -> dict:
    """The jump-scan pipeline without file output; returns a JSON-ready report."""
    family = build_family(cfg)
    try:
        validation = validate_assumptions(family, samples=cfg.getint("jump-scan", "validate_samples", 2000),
                                          grid=cfg.getint("jump-scan", "validate_grid", 51), seed=cfg.seed)
    except MonotonicityViolation as exc:
        raise IneligibleFamily(f"family is not eligible for the jump scan: {exc}") from exc
    lo, hi = family.J
    n = cfg.getint("run", "n")
    N = cfg.getint("run", "N", int(math.ceil(8 * math.sqrt(n))))
    eps = cfg.getfloat("run", "epsilon_prime", 0.05)
    words = cfg.getint("jump-scan", "words", 1)
    seed = cfg.seed
    grid = np.linspace(lo, hi, N + 1)

    le_nodes = np.linspace(lo, hi, cfg.getint("jump-scan", "le_nodes", 7))
    curve = lyapunov.le_curve(family, le_nodes, cfg.getint("jump-scan", "le_n", 2 * n),
                              cfg.getint("jump-scan", "le_reps", 40), lyapunov.derive_seed(seed, 1), threads)
    rho = rotation.rotation_curve(family, grid, cfg.getint("jump-scan", "rho_n", n),
                                  lyapunov.derive_seed(seed, 2), cfg.getint("jump-scan", "rho_reps", 8))
    consts = regularity.distortion_constants(family, 100, seed)
    M_star = math.ceil(consts.L_p * regularity.SAFETY * family.width) + 1

    def one(k):
        word = sample_word(family, seed, n, stream=(JUMP_STREAM, k))
        report = jumpscan.scan_word(family, word, grid, eps, lambda a: lyapunov.interpolate_curve(curve, a),
                                    rho, keep_table=keep_tables)
        report.suspicious = jumpscan.suspicious_counts(report.classes, n, eps, M_star)
        return report

    reports = _pool_map(one, range(words), threads)
    per_word, records = [], []
    for k, rep in enumerate(reports):
        per_word.append({"word": k, "counts": rep.counts, "stats": asdict(rep.stats), "turns": rep.turns,
                         "suspicious": rep.suspicious, "no_crossing": rep.failures})
        records += [dict(asdict(r), word=k) for r in rep.records]
    cells = N * words
    bad = sum(r.counts[jumpscan.BAD] for r in reports)
    resid_ok = [r["angle_residual"] < jumpscan.ANGLE_TOL for r in records]
    psi_ok = [r["psi_dev"] <= 0.1 * r["lambda_hat"] for r in records]
    both = [a and b for a, b in zip(resid_ok, psi_ok)]
    summary = {
        "words": words, "n": n, "N": N, "epsilon_prime": eps,
        "counts": {k: sum(r.counts[k] for r in reports) for k in jumpscan.KINDS},
        "bad_fraction": bad / cells,
        "median_relative_gap": float(np.median([r.stats.relative_gap for r in reports])),
        "median_discrepancy": float(np.median([r.stats.discrepancy for r in reports])),
        "expected_jumps_per_word": reports[0].stats.expected if reports else 0.0,
        "records": len(records),
        "residual_ok_fraction": float(np.mean(resid_ok)) if records else None,
        "psi_ok_fraction": float(np.mean(psi_ok)) if records else None,
        "record_ok_fraction": float(np.mean(both)) if records else None,
        "M_star": M_star,
    }
    result = {"summary": summary, "per_word": per_word, "records": records,
              "validation": asdict(validation), "lambda_curve": [asdict(e) for e in curve],
              "distortion_constants": asdict(consts)}
    if cfg.has("jump-scan", "cover_ns"):
        result["cover"] = _cover(cfg, family, seed, eps)
    if keep_tables:
        result["_tables"] = [r.table for r in reports]
    return result


def _cover(cfg, family, seed, eps):
    ns = [int(v) for v in cfg.getfloats("jump-scan", "cover_ns")]
    factor = cfg.getfloat("jump-scan", "cover_grid_factor", 8.0)
    d_grid = cfg.getfloats("jump-scan", "cover_d", [0.0, 0.25, 0.5, 0.75, 1.0])
    lo, hi = family.J
    counts, sizes = {}, {}
    for n in ns:
        N = int(round(factor * n))
        word = sample_word(family, seed, n, stream=(JUMP_STREAM, 0))
        classes, _ = jumpscan.classify_streaming(family, word, np.linspace(lo, hi, N + 1), eps)
        counts[n] = sum(c.kind == jumpscan.JUMP for c in classes)
        sizes[n] = N
    return {"M_n": counts, "N_n": sizes, "table": jumpscan.cover_statistic(counts, sizes, d_grid, family.J)}


def run_jump_scan(cfg: RunConfig, out: Output, threads: int = 1, dump_table: bool = False):
    result = jump_scan_words(cfg, threads, keep_tables=dump_table)
    tables = result.pop("_tables", None)
    out.json("jump_scan.json", result)
    if tables:
        for k, table in enumerate(tables):
            out.csv(f"trajectory_table_w{k}.csv", ["m", "i", "x_tilde"], table.rows())


def run_localize(cfg: RunConfig, out: Output, threads: int = 1):
    mu = build_distribution(cfg)
    L = cfg.getint("localize", "L")
    lo, hi = cfg.getfloats("localize", "window")
    seed = cfg.seed
    span = (lo, hi) if hi > lo else (lo, lo + 1e-6)
    family = make_schrodinger_family(mu, span, allow_degenerate=True)
    curve = lyapunov.le_curve(family, np.linspace(span[0], span[1], cfg.getint("localize", "le_nodes", 9)),
                              cfg.getint("localize", "le_n", 10_000), cfg.getint("localize", "le_reps", 20),
                              lyapunov.derive_seed(seed, 3), threads)
    report = anderson.localization_report(mu, L, (lo, hi), seed, curve)
    out.csv("eigenpairs.csv", ["E", "center", "rate", "r_squared", "expected", "pass"],
            [(e["E"], e["center"], e["rate"], e["r_squared"], e["expected"], e["pass"]) for e in report.entries])
    out.json("localize_summary.json", {"L": L, "window": [lo, hi], "eigenpairs": len(report.entries),
                                       "pass_fraction": report.pass_fraction, "median_rate": report.median_rate,
                                       "localized": report.localized})


def run_uh_scan(cfg: RunConfig, out: Output, threads: int = 1):
    family = build_family(cfg)
    grid = _grid(cfg, "uh-scan", 51)
    n = cfg.getint("run", "n")
    words = cfg.getint("uh-scan", "words", 32)
    eta = cfg.getfloat("uh-scan", "eta_floor", 1.0001)
    seed = cfg.seed
    rows = _pool_map(lambda a: rotation.uh_test(family, a, n, words, eta, seed), list(grid), threads)
    out.csv("uh_scan.csv", ["a", "is_uh", "min_rate", "max_image_diameter", "separated"],
            [(a, r.is_uh, r.min_rate, r.max_image_diameter, r.separated) for a, r in zip(grid, rows)])
    payload = {"nodes": grid.size, "n": n, "words": words, "uh_nodes": int(sum(r.is_uh for r in rows))}
    if cfg.getbool("uh-scan", "johnson", False):
        exclude = cfg.getfloats("uh-scan", "exclude", [])
        rep = rotation.johnson_scan(family, grid, n, seed, cfg.getint("run", "reps", 4), words, eta, exclude)
        payload["johnson"] = asdict(rep)
    out.json("uh_summary.json", payload)


def run_contraction(cfg: RunConfig, out: Output, threads: int = 1):
    family = build_family(cfg)
    a = cfg.getfloat("contraction", "a")
    s_grid = cfg.getfloats("contraction", "s_grid", [1.0, 0.75, 0.5, 0.25, 0.1])
    K_grid = [int(k) for k in cfg.getfloats("contraction", "K_grid", [1, 2, 4, 8, 16, 32, 64])]
    pairs = cfg.getint("contraction", "pairs", 1000)
    params = regularity.estimate_contraction(family, a, s_grid, K_grid, pairs, cfg.seed)
    consts = regularity.distortion_constants(family, cfg.getint("contraction", "grid_density", 100), cfg.seed)
    payload = {"contraction": asdict(params), "distortion_constants": asdict(consts),
               "M_star": math.ceil(consts.L_p * regularity.SAFETY * family.width) + 1}
    if cfg.has("contraction", "sync_a_prime"):
        table = regularity.sync_distance(family, a, cfg.getfloat("contraction", "sync_a_prime"),
                                         cfg.getint("run", "n"), cfg.getint("contraction", "sync_pairs", 100),
                                         cfg.seed)
        payload["sync_quantiles"] = {str(m): q for m, q in table.items()}
    out.json("contraction.json", payload)


def run_validate(cfg: RunConfig, out: Output, threads: int = 1):
    family = build_family(cfg)
    try:
        report = validate_assumptions(family, cfg.getint("validate", "samples", 10_000),
                                      cfg.getint("validate", "grid", 101), cfg.seed)
    except MonotonicityViolation as exc:
        report = exc.report
    out.json("validation.json", {"report": asdict(report)})


COMMANDS = {
    "le-scan": run_le_scan,
    "rotation-scan": run_rotation_scan,
    "jump-scan": run_jump_scan,
    "localize": run_localize,
    "uh-scan": run_uh_scan,
    "contraction": run_contraction,
    "validate": run_validate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cocycle-lab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to the run config")
        p.add_argument("--out", help="output directory (default: [run] out, else ./results)")
        p.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "jump-scan":
            p.add_argument("--dump-table", action="store_true", help="write the trajectory table of each word")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.load(args.config)
        cfg.seed  # fail early when the seed is missing
        if args.threads < 1:
            raise ConfigError("--threads must be positive")
        outdir = Path(args.out or cfg.raw("run", "out", "results"))
        out = Output(outdir, args.command, cfg)
        kwargs = {"dump_table": args.dump_table} if args.command == "jump-scan" else {}
        COMMANDS[args.command](cfg, out, threads=args.threads, **kwargs)
        out.close()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except CocycleLabError as exc:
        print(f"computation failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # infrastructure failure
        print(f"computation failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    log.info("wrote %s", ", ".join(out.files))
    return 0


if __name__ == "__main__":
    sys.exit(main())
