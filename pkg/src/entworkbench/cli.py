"""``entworkbench`` command line: analyze, bsa, witness, map, schmidt, werner, sweep.

Exit codes: 0 success, 1 malformed input file, 2 validation failure or shape
mismatch, 3 numerical-tolerance failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import io as wio
from .linalg import (PSD_TOL, RANK_TOL, DimensionError, NotHermitianError, ToleranceError, check_dims, is_hermitian,
                     partial_transpose, psd_check)
from .maps import adjoint_detect, classify_operator_map, map_from_operator
from .nppt import beta_threshold_scan, werner_witness
from .productopt import EDGE_TOL, OptConfig
from .schmidt import k_schmidt_witness_opt, schmidt_number_bounds
from .separability import WEIGHT_TOL, best_separable_approximation, decide_separable_low_dim, rank_condition
from .states import WernerFamily, werner_state
from .tripartite import DIMS as TRI_DIMS
from .tripartite import classify, fidelity_witnesses, w_family_state
from .witnesses import (DETECT_TOL, VALIDITY_TOL, WitnessOperator, canonical_form_extract, construct_edge_witness,
                        construct_nd_edge_witness, detects, optimize_witness, swap_witness, validate_witness)

EXIT_OK, EXIT_FORMAT, EXIT_VALIDATION, EXIT_TOLERANCE = 0, 1, 2, 3


class ValidationFailure(Exception):
    """A check ran and returned a negative verdict."""


@dataclass(frozen=True)
class Tolerances:
    psd: float = PSD_TOL
    rank: float = RANK_TOL
    edge: float = EDGE_TOL
    weight: float = WEIGHT_TOL
    validity: float = VALIDITY_TOL
    detect: float = DETECT_TOL


@dataclass
class Context:
    argv: list[str]
    cfg: OptConfig
    tol: Tolerances
    large: bool

    def record(self, payload=None) -> wio.RunRecord:
        return wio.RunRecord(self.argv, {"opt": asdict(self.cfg), "large": self.large}, [self.cfg.seed],
                             asdict(self.tol), payload)

    def emit_json(self, payload: dict, path) -> None:
        rec = self.record().as_dict()
        rec.pop("payload")
        wio.write_text(path, wio.dumps({**payload, "run": rec}))

    def emit_csv(self, header, rows, path) -> None:
        rows = list(rows)
        wio.write_text(path, wio.csv_text(header, rows))
        if path is not None and str(path) != "-":
            side = Path(str(path) + ".run.json")
            side.write_text(wio.dumps(self.record({"csv": Path(path).name, "rows": len(rows)}).as_dict()))


def threads() -> int:
    try:
        return max(1, int(os.environ.get("WORKBENCH_THREADS", "1")))
    except ValueError:
        return 1


def parallel_map(fn, items):
    """Row order follows ``items`` regardless of completion order."""
    items = list(items)
    n = threads()
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


# --- config ------------------------------------------------------------------


def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise wio.FormatError(f"{path}: {exc}") from None


def build_context(args, argv) -> Context:
    conf = load_config(args.config)
    opt = conf.get("opt", {})
    cfg = OptConfig(int(opt.get("starts", 32)), int(opt.get("sweeps", 200)), float(opt.get("tol", 1e-10)),
                    int(opt.get("seed", 0)))
    if args.opt_starts is not None:
        cfg = replace(cfg, n_starts=args.opt_starts)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    tconf = conf.get("tolerances", {})
    tol = Tolerances(**{k: float(v) for k, v in tconf.items() if k in Tolerances.__dataclass_fields__})
    if args.psd_tol is not None:
        tol = replace(tol, psd=args.psd_tol)
    if args.rank_tol is not None:
        tol = replace(tol, rank=args.rank_tol)
    return Context(list(argv), cfg, tol, bool(args.large))


def parse_grid(spec) -> list[float]:
    """``start:stop:step`` (inclusive), a list, or a TOML table with start/stop/step or values."""
    if spec is None:
        return []
    if isinstance(spec, list):
        return [float(x) for x in spec]
    if isinstance(spec, dict):
        if "values" in spec:
            return [float(x) for x in spec["values"]]
        try:
            start, stop, step = float(spec["start"]), float(spec["stop"]), float(spec["step"])
        except KeyError as exc:
            raise ValueError(f"grid table missing {exc}") from None
    else:
        parts = str(spec).split(":")
        if len(parts) != 3:
            raise ValueError(f"grid must be start:stop:step, got {spec!r}")
        start, stop, step = (float(p) for p in parts)
    if step <= 0:
        raise ValueError("grid step must be positive")
    if stop < start:
        return []
    count = int(np.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + i * step, 12) for i in range(count)]


# --- helpers -----------------------------------------------------------------


def _load_state(path, tol: Tolerances):
    op, dims, tags = wio.load_operator(path)
    if not is_hermitian(op):
        raise NotHermitianError(f"{path}: operator is not Hermitian")
    return op, dims, tags


def _witness_doc(w: WitnessOperator) -> dict:
    return wio.encode_operator(w.matrix, w.dims, role="witness", kind=w.kind, epsilon=w.epsilon, norm=w.norm,
                               provenance=wio.jsonable(w.provenance))


def _load_witness(path) -> WitnessOperator:
    obj = wio.load_json(path)
    op, dims = wio.decode_operator(obj, str(path))
    norm = obj.get("norm", 1.0)
    eps = obj.get("epsilon")
    return WitnessOperator(op, tuple(dims), obj.get("kind", "unverified"), float("nan") if eps is None else eps,
                           float(norm), obj.get("provenance", {}))


def _bipartite(dims):
    if len(dims) != 2:
        raise DimensionError(f"bipartite shape required, got {dims}")
    return dims


def _decomposition_doc(dec, cfg) -> dict:
    terms = []
    for t in dec.terms:
        entry = {"weight": t.weight}
        if hasattr(t, "factors"):
            entry["factors"] = [wio.jsonable(np.asarray(f, dtype=complex)) for f in t.factors]
        else:
            entry["vector"] = wio.jsonable(np.asarray(t.vector, dtype=complex))
        terms.append(entry)
    return {"lambda": dec.lam, "mode": dec.mode, "iterations": dec.iterations,
            "hit_max_iterations": dec.hit_max_iterations, "edge_residual": dec.edge_residual, "terms": terms,
            "edge_part": wio.encode_operator(dec.edge_part, dec.dims), "config": asdict(cfg), "seed": cfg.seed}


# --- subcommands -------------------------------------------------------------


def analyze_state(op, dims, ctx: Context) -> dict:
    tol = ctx.tol
    check_dims(op, dims)
    ok, lo = psd_check(op, tol.psd)
    res = {"dims": dims, "trace": float(np.trace(op).real), "psd": ok, "min_eig": lo, "cuts": []}
    if len(dims) >= 2:
        for cut in range(len(dims)):
            is_ppt, m = psd_check(partial_transpose(op, dims, cut), tol.psd)
            res["cuts"].append({"cut": cut, "is_ppt": is_ppt, "min_eig": m})
    res["nppt"] = any(not c["is_ppt"] for c in res["cuts"])
    res["witness_panel"] = []
    if len(dims) == 2:
        if sorted(dims) in ([2, 2], [2, 3]):
            res["separable"] = decide_separable_low_dim(op, dims, tol.psd)
        res["rank_condition"] = asdict(rank_condition(op, dims, tol.rank))
        if dims[0] == dims[1]:
            d = dims[0]
            det = detects(swap_witness(d), op, tol.detect)
            res["witness_panel"].append({"witness": "swap", "value": det.value, "detected": det.detected})
            for k in range(2, d + 1):
                v = k_schmidt_witness_opt(k, d).expectation(op, raw=True)
                res["witness_panel"].append({"witness": f"schmidt-opt-{k}", "value": v, "detected": v < -tol.detect})
    if list(dims) == list(TRI_DIMS):
        res["tripartite"] = classify(op, dims, tol.detect, tol.psd, tol.rank).as_dict()
    return res


def cmd_analyze(args, ctx):
    op, dims, tags = _load_state(args.state, ctx.tol)
    res = analyze_state(op, dims, ctx)
    if "family" in tags:
        res["family"] = tags["family"]
    ctx.emit_json(res, args.output)


def cmd_bsa(args, ctx):
    op, dims, _ = _load_state(args.state, ctx.tol)
    _bipartite(dims)
    dec = best_separable_approximation(op, dims, args.mode, ctx.cfg, ctx.tol.weight, ctx.tol.rank, ctx.tol.psd,
                                       ctx.tol.edge)
    ctx.emit_json(_decomposition_doc(dec, ctx.cfg), args.output)


def cmd_witness(args, ctx):
    if args.action == "construct":
        op, dims, _ = _load_state(args.input, ctx.tol)
        _bipartite(dims)
        build = construct_nd_edge_witness if args.nd else construct_edge_witness
        w = build(op, dims, ctx.cfg, ctx.tol.edge, ctx.tol.rank)
        ctx.emit_json(_witness_doc(w), args.output)
        return
    w = _load_witness(args.input)
    if args.action == "validate":
        v = validate_witness(w, w.dims, ctx.cfg, ctx.tol.validity)
        ctx.emit_json(asdict(v), args.output)
        if not v.is_witness:
            raise ValidationFailure(f"not a witness: product minimum {v.product_min:.3e}, min eig {v.min_eig:.3e}")
    elif args.action == "optimize":
        tr = optimize_witness(w, args.mode, ctx.cfg, ctx.tol.weight, validity_tol=ctx.tol.validity)
        doc = _witness_doc(tr.final)
        doc.update({"lambda": tr.lam, "optimal_within_search": tr.optimal_within_search,
                    "subtracted_weights": [float(x) for _, x in tr.subtracted]})
        ctx.emit_json(doc, args.output)
    elif args.action == "canonical":
        c = canonical_form_extract(w)
        ctx.emit_json({"epsilon": c.epsilon, "contact": c.contact, "z2": wio.encode_operator(c.z2, w.dims),
                       "touching_state": wio.encode_operator(c.touching_state, w.dims)}, args.output)


def cmd_map(args, ctx):
    if args.action == "from-map":
        obj = wio.load_json(args.input)
        if obj.get("role") != "map-images":
            raise wio.FormatError(f"{args.input}: expected role 'map-images'")
        ds, dt = int(obj["source_dim"]), int(obj["target_dim"])
        images = obj["images"]
        if len(images) != ds or any(len(r) != ds for r in images):
            raise DimensionError(f"images table must be {ds}x{ds}")
        o = np.zeros((ds, dt, ds, dt), dtype=complex)
        for i in range(ds):
            for j in range(ds):
                img, idims = wio.decode_operator(images[i][j], f"$.images[{i}][{j}]")
                if img.shape != (dt, dt):
                    raise DimensionError(f"image ({i},{j}) has shape {img.shape}, expected {(dt, dt)}")
                o[i, :, j, :] = img
        ctx.emit_json(wio.encode_operator(o.reshape(ds * dt, ds * dt), [ds, dt], role="jamiolkowski"), args.output)
        return
    op, dims, _ = wio.load_operator(args.input)
    _bipartite(dims)
    if args.action == "to-map":
        rep = map_from_operator(op, dims)
        ds, dt = rep.source_dim, rep.target_dim
        images = [[wio.encode_operator(rep(np.outer(np.eye(ds)[i], np.eye(ds)[j])), [dt]) for j in range(ds)]
                  for i in range(ds)]
        ctx.emit_json({"role": "map-images", "source_dim": ds, "target_dim": dt, "images": images}, args.output)
    elif args.action == "detect":
        if args.state is None:
            raise ValueError("map detect needs --state")
        rho, rdims, _ = _load_state(args.state, ctx.tol)
        det = adjoint_detect(op, dims, rho, rdims, ctx.tol.psd)
        ctx.emit_json({"detected": det.detected, "psi_value": det.psi_value, "min_eig": det.min_eig,
                       "output": wio.encode_operator(det.output, [rdims[0], dims[0]])}, args.output)
    elif args.action == "classify":
        c = classify_operator_map(op, dims, ctx.cfg, ctx.tol.psd, ctx.tol.validity)
        ctx.emit_json({"label": c.label, "heuristic": c.heuristic, "details": c.details}, args.output)


def cmd_schmidt(args, ctx):
    if args.action == "bounds":
        if args.input is None:
            raise ValueError("schmidt bounds needs a state file")
        op, dims, _ = _load_state(args.input, ctx.tol)
        _bipartite(dims)
        b = schmidt_number_bounds(op, dims, ctx.cfg, detect_tol=ctx.tol.detect)
        ctx.emit_json(b.as_dict(), args.output)
    else:
        if args.k is None or args.m is None:
            raise ValueError("schmidt witness needs --k and --m")
        w = k_schmidt_witness_opt(args.k, args.m)
        ctx.emit_json(_witness_doc(w), args.output)


def cmd_werner(args, ctx):
    if args.scan:
        if args.n > 1 and not ctx.large:
            raise DimensionError(f"n = {args.n} scans need --large")
        if args.n > 1:
            print(f"warning: n = {args.n} scan on {args.d ** (2 * args.n)}-dim operators is slow", file=sys.stderr)
        grid = parse_grid(args.grid or "1.0:1.6:0.1")
        scan = beta_threshold_scan(args.d, args.n, grid, ctx.cfg, allow_large=ctx.large)
        rows = [{**r, "seed": ctx.cfg.seed} for r in scan.rows]
        ctx.emit_csv(["beta", "value", "converged", "starts", "seed"], rows, args.output)
        print(f"beta_star={scan.beta_star}", file=sys.stderr)
        return
    if args.beta is None:
        raise ValueError("werner needs --beta (or --scan)")
    if args.witness:
        w = werner_witness(args.d, args.beta, args.n, ctx.large)
        ctx.emit_json(_witness_doc(w), args.emit or args.output)
        return
    fam = WernerFamily(args.d, args.beta)
    doc = wio.encode_operator(werner_state(args.d, args.beta), [args.d, args.d], kind="density",
                              family={"werner": {"d": args.d, "beta": args.beta, "alpha": fam.alpha}})
    ctx.emit_json(doc, args.emit or args.output)


# sweep kinds ---------------------------------------------------------------

SWEEP_HEADERS = {
    "werner-beta": ["beta", "value", "converged", "starts", "seed"],
    "werner-ppt": ["beta", "pt_min", "is_ppt", "seed"],
    "w-family": ["p", "W_W", "GHZ_W", "W_proj", "pt_min_0", "pt_min_1", "pt_min_2", "class_lower", "seed"],
    "w-kappa": ["kappa", "W_W", "GHZ_W", "W_proj", "pt_min_0", "pt_min_1", "pt_min_2", "class_lower", "seed"],
}


def _tri_row(rho, ctx):
    ev = classify(rho, TRI_DIMS, ctx.tol.detect, ctx.tol.psd, ctx.tol.rank)
    row = dict(ev.values)
    row.update({f"pt_min_{i}": m for i, m in enumerate(ev.pt_min)})
    row["class_lower"] = ev.class_lower
    return row


def run_sweep(conf: dict, ctx: Context) -> tuple[list[str], list[dict]]:
    sw = conf.get("sweep")
    if not isinstance(sw, dict) or "kind" not in sw:
        raise ValueError("config needs a [sweep] table with a 'kind' key")
    kind = sw["kind"]
    if kind not in SWEEP_HEADERS:
        raise ValueError(f"unknown sweep kind {kind!r}; choose from {sorted(SWEEP_HEADERS)}")
    grid = parse_grid(sw.get("grid"))
    seed = ctx.cfg.seed
    d = int(sw.get("d", 3))
    if kind == "werner-beta":
        n = int(sw.get("n", 1))
        if n > 1 and not ctx.large:
            raise DimensionError(f"n = {n} sweeps need --large")
        rows = beta_threshold_scan(d, n, grid, ctx.cfg, allow_large=ctx.large).rows if grid else []
        rows = [{**r, "seed": seed} for r in rows]
    elif kind == "werner-ppt":
        def one(beta):
            ok, m = psd_check(WernerFamily(d, beta).state_pt(), ctx.tol.psd)
            return {"beta": beta, "pt_min": m, "is_ppt": ok, "seed": seed}
        rows = parallel_map(one, grid)
    elif kind == "w-family":
        rows = parallel_map(lambda p: {"p": p, **_tri_row(w_family_state(p), ctx), "seed": seed}, grid)
    else:
        from .states import random_density
        rho = w_family_state(float(sw.get("p", 0.9)))
        sseed = int(sw.get("sigma_seed", seed))
        sigma = random_density([2, 2, 2], seed=sseed)
        rows = parallel_map(lambda k: {"kappa": k, **_tri_row((1 - k) * rho + k * sigma, ctx), "seed": sseed}, grid)
    return SWEEP_HEADERS[kind], rows


def cmd_sweep(args, ctx):
    conf = load_config(args.sweep_config)
    header, rows = run_sweep(conf, ctx)
    out = args.output or conf.get("sweep", {}).get("output")
    ctx.emit_csv(header, rows, out)


# --- entry point ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="entworkbench", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="TOML config with [opt] (starts, sweeps, tol, seed) and [tolerances]")
    p.add_argument("--psd-tol", type=float)
    p.add_argument("--rank-tol", type=float)
    p.add_argument("--opt-starts", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--large", action="store_true", help="lift the dense dimension cap")
    sub = p.add_subparsers(dest="command", required=True)

    def out(sp):
        sp.add_argument("-o", "--output", help="output path (default stdout)")

    sp = sub.add_parser("analyze", help="PPT per cut, witness panel, three-qubit classes")
    sp.add_argument("state")
    out(sp)
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("bsa", help="best separable approximation")
    sp.add_argument("state")
    sp.add_argument("--mode", choices=["ALL", "PPT"], default="ALL")
    out(sp)
    sp.set_defaults(func=cmd_bsa)

    sp = sub.add_parser("witness", help="construct / validate / optimize / canonical")
    sp.add_argument("action", choices=["construct", "validate", "optimize", "canonical"])
    sp.add_argument("input")
    sp.add_argument("--nd", action="store_true", help="construct the non-decomposable (PPT edge) witness")
    sp.add_argument("--mode", choices=["ALL", "PPT"], default="ALL")
    out(sp)
    sp.set_defaults(func=cmd_witness)

    sp = sub.add_parser("map", help="operator <-> map conversions, detection, classification")
    sp.add_argument("action", choices=["to-map", "from-map", "detect", "classify"])
    sp.add_argument("input")
    sp.add_argument("--state")
    out(sp)
    sp.set_defaults(func=cmd_map)

    sp = sub.add_parser("schmidt", help="Schmidt-number bounds or k-witness emission")
    sp.add_argument("action", choices=["bounds", "witness"])
    sp.add_argument("input", nargs="?")
    sp.add_argument("--k", type=int)
    sp.add_argument("--m", type=int)
    out(sp)
    sp.set_defaults(func=cmd_schmidt)

    sp = sub.add_parser("werner", help="Werner state / witness emission and beta scans")
    sp.add_argument("--d", type=int, default=3)
    sp.add_argument("--beta", type=float)
    sp.add_argument("--n", type=int, default=1)
    sp.add_argument("--emit")
    sp.add_argument("--witness", action="store_true")
    sp.add_argument("--scan", action="store_true")
    sp.add_argument("--grid", help="start:stop:step (inclusive)")
    out(sp)
    sp.set_defaults(func=cmd_werner)

    sp = sub.add_parser("sweep", help="parameter grid from a TOML config to CSV")
    sp.add_argument("sweep_config")
    out(sp)
    sp.set_defaults(func=cmd_sweep)
    return p


def run(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code else EXIT_OK
    try:
        ctx = build_context(args, argv)
        args.func(args, ctx)
    except (wio.FormatError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (ToleranceError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"tolerance failure: {exc}", file=sys.stderr)
        return EXIT_TOLERANCE
    except (ValidationFailure, DimensionError, NotHermitianError, ValueError, KeyError, TypeError) as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
