"""Command line entry point ``hastings-lab``.

Subcommands: ``geometry``, ``lr``, ``factorize``, ``entropy``, ``arealaw`` and
``sweep``. Every run is configured by flags, by a JSON file passed with
``--config`` (keys are the flag names with dashes turned into underscores), or
both; explicit flags win. Exit status is 0 when every asserted inequality
holds, 1 on a usage or configuration error, 2 when an inequality fails.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .errors import AssertionFailed, ConfigInvalid, HastingsLabError
from .geometry import (FFunction, Lattice, Region, growth_constants, interior,
                       phi_boundary, r_boundary, thicken)
from .model import constants, local_hamiltonian, preset

EXIT_OK, EXIT_CONFIG, EXIT_ASSERT = 0, 1, 2
TOP_LAMBDAS = 8

# flags that describe the experiment; None means "not given"
_CONFIG_KEYS = ("model", "g", "J", "delta", "L", "X", "ell", "mu", "chain", "r", "t",
                "a_site", "b_site", "nodes", "phat_method", "order", "c1", "c2", "cuts",
                "seed", "threads", "out", "cells")
_DEFAULTS = {"mu": 1.0, "seed": 0, "threads": 1, "nodes": 64, "phat_method": "spectral",
             "order": "definition"}


# ---------------------------------------------------------------------------
# argument parsing


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with default values for the flags")
    p.add_argument("--out", help="output directory (created if missing)")
    p.add_argument("--seed", type=int, help="seed for randomized diagnostics (default 0)")
    p.add_argument("--threads", type=int, help="worker threads for sweeps (default 1)")


def _model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", help="tfim | onsite | xxz | cluster")
    p.add_argument("--g", type=float)
    p.add_argument("--J", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--L", type=int, help="chain length")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hastings-lab",
        description="Finite-volume checks of ground-state factorization and area-law bounds.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("geometry", help="boundary, interior and thickening of a chain interval")
    _common(p)
    p.add_argument("--chain", type=int, help="number of chain sites")
    p.add_argument("--X", help="half-open interval a:b")
    p.add_argument("--r", type=float, help="width")

    p = sub.add_parser("lr", help="commutator growth against both light-cone bounds")
    _common(p)
    _model_flags(p)
    p.add_argument("--a-site", dest="a_site", type=int, help="site of A = Z (default 1)")
    p.add_argument("--b-site", dest="b_site", type=int, help="site of B = Z (default L-2)")
    p.add_argument("--t", help="comma-separated times (default 0.25..2)")
    p.add_argument("--mu", type=float)

    p = sub.add_parser("factorize", help="ground-projector factorization with diagnostics")
    _common(p)
    _model_flags(p)
    p.add_argument("--X", help="half-open interval a:b")
    p.add_argument("--ell", help="comma-separated list of widths")
    p.add_argument("--mu", type=float)
    p.add_argument("--nodes", type=int, help="Gauss-Hermite nodes")
    p.add_argument("--phat-method", dest="phat_method", choices=("spectral", "gh"))
    p.add_argument("--order", choices=("definition", "lemma"))

    p = sub.add_parser("entropy", help="entanglement report for one cut")
    _common(p)
    _model_flags(p)
    p.add_argument("--X", help="half-open interval a:b")
    p.add_argument("--ell", help="width used with --c1/--c2 for the entropy bound")
    p.add_argument("--c1", type=float, help="defect prefactor (> 1)")
    p.add_argument("--c2", type=float, help="defect decay rate (> 0)")

    p = sub.add_parser("arealaw", help="entropy of the slabs [0, m] for every cut m")
    _common(p)
    _model_flags(p)
    p.add_argument("--cuts", help="comma-separated cut positions (default 0..L-2)")

    p = sub.add_parser("sweep", help="run the cells listed under 'cells' in the config")
    _common(p)
    return parser


def _floats(text, flag) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    if isinstance(text, (int, float)):
        return [float(text)]
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise ConfigInvalid(f"{flag} must be a comma-separated list of numbers") from None


def _interval(text, flag="--X") -> tuple[int, int]:
    if isinstance(text, (list, tuple)) and len(text) == 2:
        a, b = text
    else:
        try:
            a, b = str(text).split(":")
        except ValueError:
            raise ConfigInvalid(f"{flag} must look like a:b") from None
    try:
        a, b = int(a), int(b)
    except ValueError:
        raise ConfigInvalid(f"{flag} endpoints must be integers") from None
    if a >= b:
        raise ConfigInvalid(f"{flag} must be a nonempty half-open interval a:b with a < b")
    return a, b


def resolve(args: argparse.Namespace) -> dict:
    """Merge the JSON config, defaults and explicit flags into one dict."""
    cfg = dict(_DEFAULTS)
    if getattr(args, "config", None):
        try:
            doc = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigInvalid(f"--config cannot be read: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigInvalid("--config must hold a JSON object")
        unknown = sorted(set(doc) - set(_CONFIG_KEYS) - {"command"})
        if unknown:
            raise ConfigInvalid(f"unknown config keys: {', '.join(unknown)}")
        cfg.update(doc)
    for key, val in vars(args).items():
        if key in ("config", "command", "func"):
            continue
        if val is not None:
            cfg[key] = val
    return cfg


def _require(cfg: dict, *keys) -> None:
    for k in keys:
        if cfg.get(k) is None:
            raise ConfigInvalid(f"missing required flag --{k.replace('_', '-')}")


def _model(cfg: dict):
    _require(cfg, "model", "L")
    if cfg["L"] < 2:
        raise ConfigInvalid("--L must be at least 2")
    lat = Lattice.chain(int(cfg["L"]))
    params = {k: float(cfg[k]) for k in ("g", "J", "delta") if cfg.get(k) is not None}
    phi = preset(cfg["model"], params, lat.full())
    return lat, phi


# ---------------------------------------------------------------------------
# output


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, Region):
        return list(obj.labels)
    return obj


def _outdir(cfg: dict) -> Path | None:
    if not cfg.get("out"):
        return None
    path = Path(cfg["out"])
    path.mkdir(parents=True, exist_ok=True)
    return path


def write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(_clean(doc), sort_keys=True, indent=2) + "\n")


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(header)
        for row in rows:
            out.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                          for v in row])


def _emit(cfg, name, doc):
    out = _outdir(cfg)
    if out is None:
        print(json.dumps(_clean(doc), sort_keys=True, indent=2))
    else:
        write_json(out / name, doc)


# ---------------------------------------------------------------------------
# subcommands; each returns (report, failures)


def run_geometry(cfg: dict):
    _require(cfg, "chain", "X", "r")
    if int(cfg["chain"]) < 1:
        raise ConfigInvalid("--chain must be positive")
    lat = Lattice.chain(int(cfg["chain"]))
    a, b = _interval(cfg["X"])
    if a < 0 or b > len(lat):
        raise ConfigInvalid(f"--X {a}:{b} leaves the chain 0:{len(lat)}")
    x = lat.interval(a, b - 1)
    r = float(cfg["r"])
    bd, inner, thick = r_boundary(x, r), interior(x, r), thicken(x, r)
    report = {
        "lattice_size": len(lat), "X": x, "r": r,
        "boundary": bd, "interior": inner, "thickened": thick,
        "sizes": {"X": len(x), "boundary": len(bd), "interior": len(inner),
                  "thickened": len(thick)},
    }
    print(f"X = {list(x.labels)}")
    print(f"boundary({r:g}) [{len(bd)}] = {list(bd.labels)}")
    print(f"interior({r:g}) [{len(inner)}] = {list(inner.labels)}")
    print(f"thickened({r:g}) [{len(thick)}] = {list(thick.labels)}")
    out = _outdir(cfg)
    if out is not None:
        write_json(out / "geometry.json", report)
    return report, []


def run_lr(cfg: dict):
    from .lrbound import lr_constants, lr_empirical
    from .opspace import Observable
    from .spectral import diagonalize

    lat, phi = _model(cfg)
    n = len(lat)
    sa = int(cfg.get("a_site", 1) if cfg.get("a_site") is not None else 1)
    sb = int(cfg["b_site"]) if cfg.get("b_site") is not None else n - 2
    if not (0 <= sa < n and 0 <= sb < n) or sa == sb:
        raise ConfigInvalid("--a-site and --b-site must be distinct chain sites")
    ts = _floats(cfg.get("t", [0.25 * k for k in range(1, 9)]), "--t")
    mu = float(cfg["mu"])
    if mu <= 0:
        raise ConfigInvalid("--mu must be positive")
    f = FFunction()
    consts = lr_constants(phi, f, mu)
    spec = diagonalize(local_hamiltonian(phi, lat.full()), gap_tol=-1.0)
    z = np.diag([1.0, -1.0])
    a = Observable(lat.region([sa]), z, True)
    b = Observable(lat.region([sb]), z, True)
    y = lat.full() - b.support
    rows, failures = [], []
    for t in ts:
        s = lr_empirical(a, b, t, spec, y, phi, f, consts)
        rows.append((s.t, s.distance, s.measured, s.thm_bound, s.cor_bound))
        for label, bound in (("thm", s.thm_bound), ("cor", s.cor_bound)):
            if s.measured > bound + 1e-9:
                failures.append(f"lr_{label} at t={t}: {s.measured} > {bound}")
    header = ["t", "distance", "measured", "thm_bound", "cor_bound"]
    out = _outdir(cfg)
    if out is None:
        write = csv.writer(sys.stdout, lineterminator="\n")
        write.writerow(header)
        write.writerows([[repr(float(v)) for v in r] for r in rows])
    else:
        write_csv(out / "lr.csv", header, rows)
    report = {"constants": {k: getattr(consts, k) for k in consts.__dataclass_fields__},
              "rows": [dict(zip(header, r)) for r in rows], "failures": failures}
    if out is not None:
        write_json(out / "lr.json", report)
    return report, failures


def run_factorize(cfg: dict, sink: list | None = None):
    """``sink``, when given, receives ``(lattice, interaction, spectrum, results)``."""
    from .hastings import FactorizationConfig, factorize
    from .lrbound import lr_constants
    from .spectral import diagonalize

    _require(cfg, "model", "L", "X", "ell")
    lat, phi = _model(cfg)
    a, b = _interval(cfg["X"])
    if a < 0 or b > len(lat):
        raise ConfigInvalid(f"--X {a}:{b} leaves the chain 0:{len(lat)}")
    if b - a >= len(lat):
        raise ConfigInvalid("--X must be a proper subregion")
    ells = _floats(cfg["ell"], "--ell")
    if not ells or any(e <= 0 for e in ells):
        raise ConfigInvalid("--ell values must be positive")
    mu = float(cfg["mu"])
    if mu <= 0:
        raise ConfigInvalid("--mu must be positive")
    f = FFunction()
    x = lat.interval(a, b - 1)
    spec = diagonalize(local_hamiltonian(phi, lat.full()))
    cs = constants(phi, f)
    lr = lr_constants(phi, f, mu)
    runs, failures, rows, results = [], [], [], []
    for ell in ells:
        fc = FactorizationConfig(x, ell, mu=mu, quad_nodes=int(cfg["nodes"]),
                                 phat_method=cfg["phat_method"], order=cfg["order"],
                                 seed=int(cfg["seed"]))
        res = factorize(fc, phi, spec, cs, lr)
        results.append(res)
        diags = [c.as_dict() for c in res.diagnostics.values()]
        runs.append({"ell": ell, "alpha": fc.filter_alpha, "xi": res.xi, "eta": res.eta,
                     "defect": res.defect, "defect_pos": res.defect_pos,
                     "ok": res.ok, "diagnostics": diags})
        for c in res.diagnostics.values():
            rows.append((ell, c.name, c.lhs, c.rhs, c.margin, int(c.asserted), int(c.passed)))
        failures += [f"ell={ell:g} {c.name}: {c.lhs:.6e} > {c.rhs:.6e}" for c in res.failures()]
    report = {"model": phi.name, "params": phi.params, "L": len(lat), "X": x, "mu": mu,
              "gap": spec.gap, "seed": int(cfg["seed"]), "runs": runs}
    if sink is not None:
        sink.append((lat, phi, spec, results))
    out = _outdir(cfg)
    if out is None:
        print(json.dumps(_clean(report), sort_keys=True, indent=2))
    else:
        write_json(out / "report.json", report)
        write_csv(out / "diagnostics.csv",
                  ["ell", "name", "lhs", "rhs", "margin", "asserted", "passed"], rows)
        write_csv(out / "defect.csv", ["ell", "defect", "defect_pos"],
                  [(r["ell"], r["defect"], r["defect_pos"]) for r in runs])
    for r in runs:
        print(f"ell={r['ell']:g} defect={r['defect']:.6e} defect_pos={r['defect_pos']:.6e}",
              file=sys.stderr)
    return report, failures


def run_entropy(cfg: dict):
    from .entropy import entropy, entropy_bound, fidelity, schmidt
    from .spectral import diagonalize

    _require(cfg, "model", "L", "X")
    lat, phi = _model(cfg)
    a, b = _interval(cfg["X"])
    if a < 0 or b > len(lat) or b - a >= len(lat):
        raise ConfigInvalid(f"--X {a}:{b} must be a proper subregion of 0:{len(lat)}")
    x = lat.interval(a, b - 1)
    spec = diagonalize(local_hamiltonian(phi, lat.full()))
    sp = schmidt(spec.ground, x)
    s = entropy(sp)
    p_sum, p_op = fidelity(spec.ground, x)
    report = {"model": phi.name, "params": phi.params, "L": len(lat), "X": x,
              "s": s, "p_x": p_sum, "p_x_operator": p_op, "rank": sp.rank,
              "lambdas": sp.lambdas[:TOP_LAMBDAS].tolist()}
    failures = []
    if abs(p_sum - p_op) > 1e-10:
        failures.append(f"fidelity routes disagree: {p_sum} vs {p_op}")
    if cfg.get("c1") is not None or cfg.get("c2") is not None:
        _require(cfg, "c1", "c2")
        bd = len(r_boundary(x, phi.range))
        gc = growth_constants(lat, phi.range, 1.0)
        eb = entropy_bound(bd, p_sum, float(cfg["c2"]),
                           (gc.kappa, 1.0, float(lat.d_inf), float(cfg["c1"])))
        report["bound"] = {k: getattr(eb, k) for k in eb.__dataclass_fields__}
        report["boundary_size"] = bd
        if s > eb.bound + 1e-9:
            failures.append(f"entropy {s} exceeds the bound {eb.bound}")
        if cfg.get("ell") is not None:
            ell = _floats(cfg["ell"], "--ell")[0]
            report["epsilon_profile"] = float(cfg["c1"]) * bd * math.exp(-float(cfg["c2"]) * ell)
    report["failures"] = failures
    _emit(cfg, "entropy.json", report)
    return report, failures


def run_arealaw(cfg: dict):
    from .entropy import area_sweep
    from .spectral import diagonalize

    lat, phi = _model(cfg)
    n = len(lat)
    cuts = ([int(c) for c in _floats(cfg["cuts"], "--cuts")]
            if cfg.get("cuts") is not None else list(range(n - 1)))
    if any(c < 0 or c >= n - 1 for c in cuts):
        raise ConfigInvalid(f"--cuts must lie in 0..{n - 2}")
    spec = diagonalize(local_hamiltonian(phi, lat.full()))
    sweep = area_sweep(phi, lat.full(), cuts, spec, top=TOP_LAMBDAS)
    header = ["m", "s", "p_x"] + [f"lambda_{k}" for k in range(1, TOP_LAMBDAS + 1)]
    rows = []
    for m, rep in zip(cuts, sweep.reports):
        lam = list(rep.schmidt.lambdas[:TOP_LAMBDAS]) + [0.0] * TOP_LAMBDAS
        rows.append([m, float(rep.s), float(rep.p_x)] + [float(v) for v in lam[:TOP_LAMBDAS]])
    out = _outdir(cfg)
    if out is None:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(header)
        w.writerows([[r[0]] + [repr(v) for v in r[1:]] for r in rows])
    else:
        write_csv(out / "arealaw.csv", header, rows)
        write_json(out / "arealaw.json", {"model": phi.name, "params": phi.params, "L": n,
                                          "saturation": sweep.saturation,
                                          "rows": [dict(zip(header, r)) for r in rows]})
    return {"saturation": sweep.saturation, "rows": rows}, []


def run_sweep(cfg: dict):
    _require(cfg, "cells")
    cells = cfg["cells"]
    if not isinstance(cells, list) or not cells:
        raise ConfigInvalid("'cells' must be a nonempty list of configs")
    base = _outdir(cfg) or Path("sweep_out")
    base.mkdir(parents=True, exist_ok=True)
    jobs = []
    for k, cell in enumerate(cells):
        if not isinstance(cell, dict) or cell.get("command") not in RUNNERS or \
                cell.get("command") == "sweep":
            raise ConfigInvalid(f"cell {k} needs a 'command' among {sorted(set(RUNNERS) - {'sweep'})}")
        sub = dict(_DEFAULTS)
        sub["seed"] = cfg["seed"]
        sub.update({k2: v for k2, v in cell.items() if k2 != "command"})
        sub["out"] = str(base / f"cell_{k:03d}")
        jobs.append((k, cell["command"], sub))

    def one(job):
        k, command, sub = job
        try:
            _, fails = RUNNERS[command](sub)
            return k, command, "failed" if fails else "ok", fails
        except HastingsLabError as exc:
            return k, command, "error", [f"{type(exc).__name__}: {exc}"]

    with ThreadPoolExecutor(max_workers=max(1, int(cfg["threads"]))) as pool:
        results = sorted(pool.map(one, jobs))
    summary = [{"cell": k, "command": c, "status": st, "failures": f} for k, c, st, f in results]
    write_json(base / "sweep.json", {"cells": summary})
    failures = [f"cell {s['cell']}: {m}" for s in summary for m in s["failures"]]
    if any(s["status"] == "error" for s in summary):
        raise ConfigInvalid("; ".join(failures))
    return {"cells": summary}, failures


RUNNERS = {"geometry": run_geometry, "lr": run_lr, "factorize": run_factorize,
           "entropy": run_entropy, "arealaw": run_arealaw, "sweep": run_sweep}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_help(sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = resolve(args)
        if int(cfg["threads"]) < 1:
            raise ConfigInvalid("--threads must be positive")
        if int(cfg["threads"]) > 1:
            os.environ.setdefault("OMP_NUM_THREADS", str(cfg["threads"]))
        _, failures = RUNNERS[args.command](cfg)
        if failures:
            raise AssertionFailed("; ".join(failures))
    except ConfigInvalid as exc:
        print(f"hastings-lab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AssertionFailed as exc:
        print(f"hastings-lab: inequality violated: {exc}", file=sys.stderr)
        return EXIT_ASSERT
    except HastingsLabError as exc:
        print(f"hastings-lab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
