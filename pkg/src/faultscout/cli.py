"""Command line: ``run <config>``, ``query <dir> <x> <y>``, ``plot <dir> [out.svg]``."""
from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .classify import OUTSIDE, ClassifierHandle, TEST_PROBLEMS, testproblem_handle
from .core import (
    BoxDomain,
    DomainError,
    FaultScoutError,
    FaultSet,
    Params,
    build_reconstruction,
    read_triplet_csv,
    reconstruct_polyline,
    region_query,
    write_ply,
    write_triplet_csv,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PIPELINE = 3

PROBLEMS = tuple(sorted(TEST_PROBLEMS)) + ("sphere", "mcda", "scattering")
PARAM_KEYS = tuple(f.name for f in dataclasses.fields(Params))
INT_PARAMS = {f.name for f in dataclasses.fields(Params) if f.type in ("int", int)}
RUN_KEYS = (
    "problem",
    "output",
    "n_init",
    "domain_lower",
    "domain_upper",
    "sphere_radius",
    "mcda_matrix",
    "mcda_weights",
    "mcda_variable",
    "scatter_file",
    "scatter_threshold",
    "scatter_terms",
)
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf")


class ConfigError(FaultScoutError):
    """Invalid configuration or command arguments."""


# --------------------------------------------------------------------- config

def parse_config(text: str) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {n}: empty key")
        if key in out:
            raise ConfigError(f"line {n}: duplicate key {key!r}")
        out[key] = value
    return out


def _floats(value: str, key: str) -> list[float]:
    try:
        return [float(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"{key}: expected comma-separated numbers") from None


@dataclass
class RunConfig:
    problem: str
    output: Path
    params: Params
    n_init: int | None = None
    domain: BoxDomain | None = None
    extra: dict[str, str] = field(default_factory=dict)
    base: Path = Path(".")

    def path(self, key: str) -> Path:
        p = Path(self.extra[key])
        return p if p.is_absolute() else self.base / p


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        raw = parse_config(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    unknown = sorted(set(raw) - set(RUN_KEYS) - set(PARAM_KEYS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    problem = raw.get("problem")
    if problem not in PROBLEMS:
        raise ConfigError(f"problem must be one of {', '.join(PROBLEMS)}")
    kw = {}
    for key in PARAM_KEYS:
        if key in raw:
            try:
                kw[key] = int(raw[key]) if key in INT_PARAMS else float(raw[key])
            except ValueError:
                raise ConfigError(f"{key}: invalid number {raw[key]!r}") from None
    if problem == "mcda" and "eps_gap" not in kw:
        kw["eps_gap"] = None  # scaled by c_f once the simplex is known
    try:
        params = Params(**{k: v for k, v in kw.items() if v is not None})
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    base = path.parent
    output = Path(raw.get("output", "out"))
    cfg = RunConfig(problem, output if output.is_absolute() else base / output, params, base=base)
    if "eps_gap" in kw and kw["eps_gap"] is None:
        cfg.extra["_scale_gap"] = "1"
    if "n_init" in raw:
        try:
            cfg.n_init = int(raw["n_init"])
        except ValueError:
            raise ConfigError("n_init must be an integer") from None
        if cfg.n_init < 1:
            raise ConfigError("n_init must be positive")
    if ("domain_lower" in raw) != ("domain_upper" in raw):
        raise ConfigError("domain_lower and domain_upper go together")
    if "domain_lower" in raw:
        try:
            cfg.domain = BoxDomain(_floats(raw["domain_lower"], "domain_lower"), _floats(raw["domain_upper"], "domain_upper"))
        except ValueError as exc:
            raise ConfigError(f"domain: {exc}") from None
    for key in RUN_KEYS[5:]:
        if key in raw:
            cfg.extra[key] = raw[key]
    for key in ("mcda_matrix", "scatter_file"):
        if key in cfg.extra and not cfg.path(key).is_file():
            raise ConfigError(f"{key}: file {cfg.path(key)} not found")
    if problem == "scattering" and ("scatter_file" not in cfg.extra or "scatter_threshold" not in cfg.extra):
        raise ConfigError("scattering needs scatter_file and scatter_threshold")
    return cfg


def thread_count() -> int:
    """Worker threads from ``FAULTSCOUT_THREADS``: unset means 1, 0 means one per CPU."""
    raw = os.environ.get("FAULTSCOUT_THREADS", "").strip()
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError("FAULTSCOUT_THREADS must be an integer") from None
    if n < 0:
        raise ConfigError("FAULTSCOUT_THREADS must be nonnegative")
    return n if n > 0 else (os.cpu_count() or 1)


# ------------------------------------------------------------------- problems

@dataclass
class Problem:
    domain: BoxDomain
    handle: ClassifierHandle
    params: Params
    n_init: int
    points: list | None = None
    boundary: np.ndarray | None = None
    names: dict[int, str] = field(default_factory=dict)
    info: dict = field(default_factory=dict)


def _mcda_problem(cfg: RunConfig) -> Problem:
    from .mcda import PerformanceMatrix, embed_simplex, load_performance_matrix, mcda_classifier
    from .sampling import filtered_initialset

    if "mcda_matrix" in cfg.extra:
        P = load_performance_matrix(cfg.path("mcda_matrix"))
    else:
        P = PerformanceMatrix.cars()
    if "mcda_weights" in cfg.extra:
        w = np.array(_floats(cfg.extra["mcda_weights"], "mcda_weights"))
    else:
        from .mcda import CAR_WEIGHTS

        w = np.array(CAR_WEIGHTS)
    if w.shape != (P.n_criteria,) or np.any(w < 0) or w.sum() <= 0:
        raise ConfigError("mcda_weights must hold one nonnegative weight per criterion")
    w = w / w.sum()
    if "mcda_variable" in cfg.extra:
        variable = []
        for tok in (t.strip() for t in cfg.extra["mcda_variable"].split(",")):
            if tok in P.criteria:
                variable.append(P.criteria.index(tok))
            elif tok.isdigit() and int(tok) < P.n_criteria:
                variable.append(int(tok))
            else:
                raise ConfigError(f"mcda_variable: unknown criterion {tok!r}")
    else:
        from .mcda import CAR_VARIABLE

        variable = list(CAR_VARIABLE)
    if len(variable) not in (3, 4):
        raise ConfigError("mcda_variable must name three or four criteria")
    try:
        emb = embed_simplex(len(variable), w, variable)
    except FaultScoutError as exc:
        raise ConfigError(str(exc)) from None
    v = emb.vertices()
    lo, hi = v.min(axis=0), v.max(axis=0)
    domain = cfg.domain or BoxDomain(lo - 0.1 * (hi - lo), hi + 0.1 * (hi - lo))
    params = cfg.params
    if "_scale_gap" in cfg.extra:
        params = dataclasses.replace(params, eps_gap=emb.c_f * params.eps_gap)
    f = mcda_classifier(P, emb)
    h = ClassifierHandle(
        f, domain, labels=range(1, len(P.alternatives) + 1), outside_label=OUTSIDE, admissible=emb.contains
    )
    n = cfg.n_init or (100 if emb.m == 3 else 500)
    margin = 0.1 * emb.c_f
    points = filtered_initialset(domain, n, h, lambda p: emb.contains(p, margin))
    names = {k + 1: a for k, a in enumerate(P.alternatives)}
    info = {
        "criteria": list(P.criteria),
        "variable": [P.criteria[k] for k in variable],
        "weights": [float(x) for x in w],
        "c_f": emb.c_f,
        "user_point": [float(x) for x in emb.embed(w[variable])],
    }
    return Problem(domain, h, params, n, points, v if emb.m == 3 else None, names, info)


def _scattering_problem(cfg: RunConfig) -> Problem:
    from .scattering import FarFieldError, inside_classifier, load_farfield

    try:
        data = load_farfield(cfg.path("scatter_file"))
    except FarFieldError as exc:
        raise ConfigError(str(exc)) from None
    (w0,) = _floats(cfg.extra["scatter_threshold"], "scatter_threshold")
    terms = int(cfg.extra["scatter_terms"]) if "scatter_terms" in cfg.extra else None
    try:
        f = inside_classifier(data, w0, terms)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    domain = cfg.domain or BoxDomain(np.full(3, -1.5), np.full(3, 1.5))
    if domain.dim != 3:
        raise ConfigError("scattering runs in three dimensions")
    h = ClassifierHandle(f, domain, labels=(1, 2))
    return Problem(domain, h, cfg.params, cfg.n_init or 200, names={1: "outside", 2: "inside"})


def build_problem(cfg: RunConfig) -> Problem:
    if cfg.problem in TEST_PROBLEMS:
        dim = TEST_PROBLEMS[cfg.problem][1]
        domain = cfg.domain or BoxDomain.unit(dim)
        if domain.dim != dim:
            raise ConfigError(f"{cfg.problem} needs a {dim}-dimensional domain")
        h = testproblem_handle(cfg.problem, domain)
        names = {v: str(k) for k, v in h.label_map.items()}
        return Problem(domain, h, cfg.params, cfg.n_init or (50 if dim == 2 else 200), names=names)
    if cfg.problem == "sphere":
        from .scattering import sphere_classifier

        r = float(cfg.extra.get("sphere_radius", 1.0))
        domain = cfg.domain or BoxDomain(np.full(3, -1.5), np.full(3, 1.5))
        h = ClassifierHandle(sphere_classifier(r), domain, labels=(1, 2))
        return Problem(domain, h, cfg.params, cfg.n_init or 200, names={1: "outside", 2: "inside"})
    if cfg.problem == "mcda":
        return _mcda_problem(cfg)
    return _scattering_problem(cfg)


# ---------------------------------------------------------------------- run

def _fault_name(pair) -> str:
    return f"fault_{pair[0]}_{pair[1]}"


def _write_manifest(out: Path, manifest: dict) -> None:
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def cmd_run(config: str | Path) -> int:
    from .fault2d import run2d
    from .fault3d import run3d

    cfg = load_config(config)
    workers = thread_count()
    prob = build_problem(cfg)
    out = cfg.output
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "problem": cfg.problem,
        "dim": prob.domain.dim,
        "domain": {"lower": prob.domain.lower.tolist(), "upper": prob.domain.upper.tolist()},
        "n_init": prob.n_init,
        "params": prob.params.to_dict(),
        "labels": {str(k): v for k, v in sorted(prob.names.items())},
        "boundary": None if prob.boundary is None else prob.boundary.tolist(),
        "faults": {},
        "files": [],
        "status": "running",
    }
    manifest.update({f"mcda_{k}": v for k, v in prob.info.items()})
    run = run2d if prob.domain.dim == 2 else run3d
    try:
        res = run(prob.domain, prob.handle, prob.params, prob.n_init, points=prob.points, workers=workers)
    except Exception as exc:  # noqa: BLE001 - reported in the manifest and via the exit code
        manifest["status"] = "error"
        manifest["error"] = f"{type(exc).__name__}: {exc}"
        manifest["ledger"] = prob.handle.ledger.as_dict()
        (out / "ledger.txt").write_text(prob.handle.ledger.table())
        _write_manifest(out, manifest)
        print(f"faultscout: pipeline failed: {exc}", file=sys.stderr)
        return EXIT_PIPELINE
    files = []
    for pair in sorted(res.faults):
        fs = res.faults[pair]
        name = _fault_name(pair)
        write_triplet_csv(out / f"{name}.csv", fs)
        files.append(f"{name}.csv")
        if prob.domain.dim == 3:
            write_ply(out / f"{name}.ply", fs)
            files.append(f"{name}.ply")
        manifest["faults"][name] = {
            "pair": list(pair),
            "triplets": len(fs),
            "closed": [bool(c) for c in fs.closed],
            "stages": res.stages.get(pair, {}),
        }
    (out / "ledger.txt").write_text(prob.handle.ledger.table())
    files.append("ledger.txt")
    if prob.domain.dim == 2:
        (out / "reconstruction.svg").write_text(render_svg(res.faults, prob.domain))
        files.append("reconstruction.svg")
    manifest["files"] = files
    manifest["ledger"] = prob.handle.ledger.as_dict()
    manifest["status"] = "ok"
    _write_manifest(out, manifest)
    print(prob.handle.ledger.table(), end="")
    return EXIT_OK


# -------------------------------------------------------------- load results

def load_results(directory: str | Path) -> tuple[dict, BoxDomain | None, dict[tuple[int, int], FaultSet]]:
    d = Path(directory)
    if not d.is_dir():
        raise ConfigError(f"{d} is not a directory")
    manifest = {}
    if (d / "manifest.json").is_file():
        manifest = json.loads((d / "manifest.json").read_text())
    domain = None
    if "domain" in manifest:
        domain = BoxDomain(manifest["domain"]["lower"], manifest["domain"]["upper"])
    faults = {}
    for path in sorted(d.glob("fault_*.csv")):
        meta = manifest.get("faults", {}).get(path.stem, {})
        fs = read_triplet_csv(path, closed=meta.get("closed"))
        faults[fs.pair] = fs
    return manifest, domain, faults


def cmd_query(directory: str | Path, x: float, y: float) -> int:
    manifest, domain, faults = load_results(directory)
    if domain is None:
        raise ConfigError("no manifest with domain information")
    if domain.dim != 2:
        raise ConfigError("region queries are only supported for 2D reconstructions")
    boundary = np.array(manifest["boundary"]) if manifest.get("boundary") else None
    rec = build_reconstruction(domain, faults, boundary=boundary)
    try:
        label = region_query((x, y), rec)
    except DomainError as exc:
        raise ConfigError(str(exc)) from None
    print(label)
    return EXIT_OK


# ---------------------------------------------------------------------- plot

def _num(v: float) -> str:
    s = f"{v:.3f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def render_svg(faults: dict[tuple[int, int], FaultSet], domain: BoxDomain | None = None, size: int = 600) -> str:
    """Deterministic SVG of the fault polylines and midpoints; 3D data is projected onto the first two axes."""
    pts = [t.mid[:2] for fs in faults.values() for t in fs.triplets]
    head = f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">'
    if not pts:
        return "\n".join(
            ['<?xml version="1.0" encoding="UTF-8"?>', head, "<!-- warning: empty reconstruction -->",
             f'<rect x="0" y="0" width="{size}" height="{size}" fill="white"/>', "</svg>", ""]
        )
    if domain is not None:
        lo, hi = domain.lower[:2], domain.upper[:2]
    else:
        arr = np.array(pts)
        lo, hi = arr.min(axis=0), arr.max(axis=0)
    span = float(max(hi - lo)) or 1.0
    pad = 10.0
    scale = (size - 2 * pad) / span

    def xy(p) -> str:
        return f"{_num(pad + (p[0] - lo[0]) * scale)},{_num(size - pad - (p[1] - lo[1]) * scale)}"

    body = ['<?xml version="1.0" encoding="UTF-8"?>', head,
            f'<rect x="0" y="0" width="{size}" height="{size}" fill="white"/>']
    if domain is not None:
        corners = [lo, (hi[0], lo[1]), hi, (lo[0], hi[1])]
        body.append(f'<polygon points="{" ".join(xy(c) for c in corners)}" fill="none" stroke="#999999"/>')
    for k, pair in enumerate(sorted(faults)):
        fs = faults[pair]
        color = PALETTE[k % len(PALETTE)]
        body.append(f'<g id="{_fault_name(pair)}" stroke="{color}" fill="{color}">')
        comps = reconstruct_polyline(fs) if fs.sorted else []
        for verts, closed in comps:
            tag = "polygon" if closed and len(verts) > 2 else "polyline"
            body.append(f'<{tag} points="{" ".join(xy(v) for v in verts)}" fill="none" stroke-width="1.5"/>')
        for t in fs.triplets:
            c = xy(t.mid).split(",")
            body.append(f'<circle cx="{c[0]}" cy="{c[1]}" r="1.5" stroke="none"/>')
        body.append("</g>")
    body += ["</svg>", ""]
    return "\n".join(body)


def cmd_plot(directory: str | Path, out: str | Path | None = None) -> int:
    _, domain, faults = load_results(directory)
    target = Path(out) if out is not None else Path(directory) / "plot.svg"
    if not faults:
        print("faultscout: warning: empty reconstruction", file=sys.stderr)
    target.write_text(render_svg(faults, domain))
    print(target)
    return EXIT_OK


# ---------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="faultscout", description="Detect fault lines and surfaces of a classifier.")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run the pipeline described by a config file")
    p.add_argument("config")
    p = sub.add_parser("query", help="class of a point from a 2D reconstruction")
    p.add_argument("dir")
    p.add_argument("x", type=float)
    p.add_argument("y", type=float)
    p = sub.add_parser("plot", help="render a reconstruction as SVG")
    p.add_argument("dir")
    p.add_argument("out", nargs="?")
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        if args.command == "run":
            return cmd_run(args.config)
        if args.command == "query":
            return cmd_query(args.dir, args.x, args.y)
        return cmd_plot(args.dir, args.out)
    except ConfigError as exc:
        print(f"faultscout: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FaultScoutError, OSError, ValueError) as exc:
        print(f"faultscout: {exc}", file=sys.stderr)
        return EXIT_PIPELINE


if __name__ == "__main__":
    sys.exit(main())
