"""Command-line front end: ``fsebound {bound,simulate,verify,speed}``.

Exit codes: 0 success, 2 configuration error, 3 resource error,
4 verification failure.
"""
from __future__ import annotations

import argparse
import copy
import hashlib
import json
import logging
import os
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .analytic import AnalyticError, analytic_constants, analytic_pbc_bound
from .ed import EDError, ResourceError, measured_fse, simulate
from .model import ConfigError, ModelError, parse_model
from .ode import ode_fse_bound
from .series import BoundCurve, UnsupportedModel, improved_pbc_bound, simple_fse_bound

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_RESOURCE, EXIT_FAIL = 0, 2, 3, 4
METHODS = ("series", "ode", "analytic")
log = logging.getLogger("fsebound")


def _threads():
    try:
        return max(1, int(os.environ.get("FSE_THREADS", "1")))
    except ValueError:
        return 1


def load_document(path):
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {path}", "$")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON: {e}", "$") from None


def load_model(doc, L=None):
    """Parse a config document, optionally overriding the system size."""
    doc = copy.deepcopy(doc)
    if L is not None:
        doc["L"] = [int(L)] * len(doc.get("L", [L]))
    return parse_model(doc)


def time_grid(model):
    t_max = float(model.time["t_max"])
    if t_max == 0:
        return np.zeros(1)
    return np.linspace(0.0, t_max, int(model.time["n_points"]))


def compute_bound(model, method, L=None, t=None) -> BoundCurve:
    """Dispatch to the bound engine appropriate for the boundary condition."""
    t = time_grid(model) if t is None else t
    L = L if L is not None else model.L[0]
    pbc = model.boundary == "pbc"
    if method == "series":
        return improved_pbc_bound(model, L, t) if pbc else simple_fse_bound(model, L, t)
    if method == "ode":
        return ode_fse_bound(model, L, t, "improved-pbc" if pbc else "simple")
    if method == "analytic":
        if not pbc:
            raise UnsupportedModel("analytic bound requires periodic boundaries")
        return analytic_pbc_bound(model, L, t)
    raise ValueError(f"unknown method {method!r}")


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out, config, command, params, files):
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "config": str(config),
        "command": command,
        "parameters": params,
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "outputs": [{"file": Path(f).name, "sha256": _sha256(f)} for f in files],
    }
    path = Path(out) / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")
    return path


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    return str(x)


def _gnuplot(path, csvs, ylabel):
    lines = ["set datafile separator ','", "set logscale y", "set key left top",
             "set xlabel 't'", f"set ylabel '{ylabel}'"]
    plots = [f"'{Path(c).name}' using 1:2 with lines title '{Path(c).stem}'" for c in csvs]
    if plots:
        lines.append("plot " + ", \\\n     ".join(plots))
    Path(path).write_text("\n".join(lines) + "\n")
    return path


def cmd_bound(args):
    doc = load_document(args.config)
    model = load_model(doc, args.L)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    methods = METHODS if args.method == "all" else (args.method,)
    t = time_grid(model)

    def run(m):
        try:
            return m, compute_bound(model, m, t=t), None
        except (UnsupportedModel, AnalyticError, ModelError) as e:
            return m, None, str(e)

    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        results = list(pool.map(run, methods))
    summary = {"schema_version": SCHEMA_VERSION, "version": __version__,
               "model": model.name, "L": list(model.L), "boundary": model.boundary,
               "methods": {}}
    files = []
    for m, curve, err in results:
        if curve is None:
            summary["methods"][m] = {"error": err}
            log.warning("method %s not applicable: %s", m, err)
            continue
        path = out / f"bound_{m}.csv"
        curve.to_csv(path)
        files.append(path)
        summary["methods"][m] = {"csv": path.name, "t_1e-2": curve.crossing_time(1e-2),
                                 "method": curve.method, "n_max": int(curve.n_max)}
    files.append(_gnuplot(out / "bound.plt", [f for f in files if f.suffix == ".csv"],
                          "FSE bound"))
    files.append(_write_json(out / "summary.json", summary))
    write_manifest(out, args.config, "bound", {"method": args.method, "L": args.L}, files)
    print(json.dumps(summary, default=_jsonable))
    if all(v.get("error") for v in summary["methods"].values()):
        return EXIT_CONFIG
    return EXIT_OK


def cmd_simulate(args):
    if not args.sizes:
        raise ConfigError("at least one size is required", "--sizes")
    doc = load_document(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def run(L):
        try:
            model = load_model(doc, L)
            series = simulate(model, L, time_grid(model))
            path = out / f"simulate_L{L}.csv"
            series.to_csv(path)
            return L, path, None
        except (ResourceError, EDError, ModelError) as e:
            return L, None, e

    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        results = list(pool.map(run, args.sizes))
    files = [p for _, p, _ in results if p is not None]
    errors = {L: str(e) for L, _, e in results if e is not None}
    files.append(_gnuplot(out / "simulate.plt", files, "observable"))
    write_manifest(out, args.config, "simulate", {"sizes": args.sizes, "errors": errors}, files)
    for L, msg in errors.items():
        log.error("size %s failed: %s", L, msg)
    print(json.dumps({"schema_version": SCHEMA_VERSION,
                      "files": [Path(f).name for f in files], "errors": errors}))
    if any(isinstance(e, ResourceError) for _, _, e in results):
        return EXIT_RESOURCE
    if errors:
        return EXIT_CONFIG
    return EXIT_OK


def cmd_verify(args):
    if args.Lref <= args.L:
        raise ConfigError("Lref must exceed L", "--Lref")
    doc = load_document(args.config)
    model = load_model(doc, args.L)
    t = time_grid(model)
    scale = 1e-6 if args.inject_fault else 1.0
    bL = compute_bound(model, args.method, args.L, t).values * scale
    bR = compute_bound(model, args.method, args.Lref, t).values * scale
    fse = measured_fse(model, None, args.L, args.Lref, t)
    # a violation must exceed the numerical certificate of the measurement
    excess = fse.diff - fse.error - (bL + bR)
    ok = excess <= 0
    verdict = "PASS" if bool(np.all(ok)) else "FAIL"
    rows = [{"t": float(t[i]), "measured": float(fse.diff[i]),
             "numerical_error": float(fse.error[i]), "bound_L": float(bL[i]),
             "bound_Lref": float(bR[i]), "ok": bool(ok[i])} for i in range(len(t))]
    result = {"schema_version": SCHEMA_VERSION, "version": __version__, "verdict": verdict,
              "L": args.L, "Lref": args.Lref, "method": args.method,
              "fault_injection": bool(args.inject_fault),
              "violations": int(np.sum(~ok)), "rows": rows}
    files = []
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        files.append(_write_json(out / "verdict.json", result))
        write_manifest(out, args.config, "verify", {"L": args.L, "Lref": args.Lref,
                                                     "method": args.method}, files)
    print(json.dumps({k: v for k, v in result.items() if k != "rows"}))
    return EXIT_OK if verdict == "PASS" else EXIT_FAIL


def cmd_speed(args):
    doc = load_document(args.config)
    model = load_model(doc)
    if model.boundary != "pbc":
        warnings.warn("speed extraction requires translation-invariant spec; "
                      "boundary condition ignored", stacklevel=1)
        log.warning("speed extraction requires translation-invariant spec; "
                    "boundary condition ignored")
    out = {"schema_version": SCHEMA_VERSION, "version": __version__, "directions": []}
    for p in range(model.dimension):
        c = analytic_constants(model, model.observable.parts[0][1], p)
        d = {"direction": p, "v": c.v, "kappa0": c.kappa0, "omega0": c.omega0,
             "C_p": c.C_p}
        if c.eta is not None:
            d.update(eta=str(c.eta), mu=c.mu, ell=c.ell(model.L[p]))
        out["directions"].append(d)
    print(json.dumps(out, default=_jsonable))
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="fsebound",
                                 description="Rigorous finite-size error bounds for "
                                             "quantum lattice dynamics.")
    ap.add_argument("--version", action="version", version=f"fsebound {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bound", help="compute FSE bound curves")
    b.add_argument("config")
    b.add_argument("--method", choices=(*METHODS, "all"), default="all")
    b.add_argument("--L", type=int, default=None, help="override the system size")
    b.add_argument("--out", default=".")
    b.set_defaults(func=cmd_bound)

    s = sub.add_parser("simulate", help="exact-diagonalization time series")
    s.add_argument("config")
    s.add_argument("--sizes", type=int, nargs="*", default=None)
    s.add_argument("--out", default=".")
    s.set_defaults(func=cmd_simulate)

    v = sub.add_parser("verify", help="check measured FSE against bounds")
    v.add_argument("config")
    v.add_argument("--L", type=int, required=True)
    v.add_argument("--Lref", type=int, required=True)
    v.add_argument("--method", choices=METHODS, default="series")
    v.add_argument("--out", default=None)
    v.add_argument("--inject-fault", action="store_true",
                   help="scale bounds by 1e-6 to exercise the FAIL path")
    v.set_defaults(func=cmd_verify)

    p = sub.add_parser("speed", help="Lieb-Robinson speed and analytic constants")
    p.add_argument("config")
    p.set_defaults(func=cmd_speed)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (ResourceError, MemoryError) as e:
        print(f"resource error: {e}", file=sys.stderr)
        return EXIT_RESOURCE
    except (ModelError, UnsupportedModel, AnalyticError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
