"""Experiment harness: config ingestion, pipeline stages, CSV and plot output.

Configs are flat key = value text with [section] headers and JSON-compatible
values.  Reruns of an identical config produce byte-identical CSVs: outputs
carry no timestamps, floats are printed with 17 significant digits, and rows
are emitted in a fixed order.  Wall-clock and versions live only in the run
manifest.  RENORM_THREADS caps the worker pool used for independent scans.

Exit codes: 0 success, 2 configuration error, 3 stage failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__, classn
from . import families as fam
from . import funcspace as fs
from . import geometry as geo
from . import henon as hn
from . import scope as sc
from . import unimodal as um
from .exceptions import ConfigError, IoError, PdRenormError, StageFailed

FMT = "%.17g"


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return FMT % value
    return str(value)


def _quote(text: str) -> str:
    if any(ch in text for ch in ',"\n'):
        return '"' + text.replace('"', '""') + '"'
    return text


def emit_csv(path, header, rows) -> str:
    """RFC-4180-style CSV with LF endings, written atomically."""
    lines = [",".join(_quote(h) for h in header)]
    for row in rows:
        lines.append(",".join(_quote(_fmt(v)) for v in row))
    text = "\n".join(lines) + "\n"
    tmp = f"{path}.tmp"
    try:
        with open(tmp, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    return path


def emit_plot_script(path, tables) -> str:
    """gnuplot script referencing the CSVs by relative path."""
    lines = [
        "# gnuplot script generated by pdrenorm; run from this directory",
        "set datafile separator ','",
        "set key autotitle columnhead",
        "set logscale y",
    ]
    for name, csv_file, using, title in tables:
        lines.append(f"set title '{title}'")
        lines.append(f"plot '{csv_file}' using {using} with linespoints")
        lines.append(f"pause -1 '{name}: press enter'")
    text = "\n".join(lines) + "\n"
    tmp = f"{path}.tmp"
    try:
        with open(tmp, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    return path


def worker_count() -> int:
    raw = os.environ.get("RENORM_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def parallel_map(fn, items):
    """Deterministic map: results in input order regardless of pool size."""
    n = worker_count()
    items = list(items)
    if n <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


# -- configuration ------------------------------------------------------------

_DEFAULTS = {
    "seed": {
        "family": "dissipative",
        "m": 1,
        "b": 0.05,
        "c": 0.3,
        "a": 0.05,
        "e": 0.04,
        "eta_slopes": [0.05],
        "eta_quad": 0.0,
        "C": [[0.05, 0.05]],
        "t": None,
        "tune": True,
    },
    "solver": {"degree": 16, "tol": 1e-10},
    "tower": {"depth": 3, "degrees": None},
    "scope": {"kmax": 2},
    "geometry": {"orbit_depth": 10, "kmax": 2},
    "sweep": {"enabled": False, "grid": "0.004:0.07:8", "c": 0.3, "depth": 6,
              "degrees": 10, "kmax": 1},
    "run": {"out": "runs/out", "stages": ["fixed-point", "tower", "classn",
                                          "scope", "geometry"]},
}


@dataclass
class ExperimentConfig:
    sections: dict

    @classmethod
    def parse(cls, text: str) -> "ExperimentConfig":
        sections = {k: dict(v) for k, v in _DEFAULTS.items()}
        current = None
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("[") and line.endswith("]"):
                current = line[1:-1].strip()
                sections.setdefault(current, {})
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected key = value")
            if current is None:
                raise ConfigError(f"line {lineno}: key outside any [section]")
            key, value = (part.strip() for part in line.split("=", 1))
            try:
                sections[current][key] = json.loads(value)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"line {lineno}: bad JSON value: {exc}") from exc
        cfg = cls(sections)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                return cls.parse(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc

    def validate(self):
        if self["tower"]["depth"] < 1:
            raise ConfigError("tower.depth must be >= 1")
        if self["solver"]["tol"] <= 0:
            raise ConfigError("solver.tol must be positive")
        if self["solver"]["degree"] < 4:
            raise ConfigError("solver.degree must be at least 4")

    def __getitem__(self, section):
        return self.sections[section]

    def digest(self) -> str:
        canon = json.dumps(self.sections, sort_keys=True)
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


@dataclass
class RunManifest:
    config_hash: str
    version: str
    wall_clock: float
    stages: list = field(default_factory=list)
    outputs: list = field(default_factory=list)

    def write(self, path):
        payload = {
            "config_hash": self.config_hash,
            "version": self.version,
            "wall_clock_s": self.wall_clock,
            "stages": self.stages,
            "outputs": sorted(self.outputs),
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=1, sort_keys=True)
            fh.write("\n")


# -- seed construction --------------------------------------------------------


def build_seed(seed_cfg, f_star, t: float):
    family = seed_cfg["family"]
    m = int(seed_cfg["m"])
    degrees = seed_cfg.get("degrees")
    if family == "dissipative":
        return fam.dissipative_seed(f_star, t, seed_cfg["b"], seed_cfg["c"],
                                    m=m, degrees=degrees)
    if family == "shear":
        return fam.shear_seed(f_star, t, seed_cfg["b"], seed_cfg["c"],
                              a=seed_cfg["a"], m=m, degrees=degrees)
    if family == "rich":
        return fam.rich_seed(f_star, t, b=seed_cfg["b"], c=seed_cfg["c"],
                             a=seed_cfg["a"], e=seed_cfg["e"], degrees=degrees)
    if family == "example":
        quad = float(seed_cfg.get("eta_quad") or 0.0)
        slopes = seed_cfg["eta_slopes"]
        etas = [
            (lambda s: (lambda u: s * u + quad * u * u))(s) for s in slopes
        ]
        return classn.make_example_n(
            fam.perturbed_quadratic(f_star, t), m,
            eta_fns=etas, C=seed_cfg["C"], eps_b=seed_cfg["b"],
            degrees=degrees,
        )
    if family == "degenerate":
        return hn.HenonLikeMap.degenerate(fam.perturbed_quadratic(f_star, t), m)
    raise ConfigError(f"unknown seed family {family!r}")


def build_tower(cfg, f_star):
    seed_cfg = dict(cfg["seed"])
    depth = cfg["tower"]["depth"]
    degrees = cfg["tower"]["degrees"]
    seed_cfg.setdefault("degrees", degrees)
    if seed_cfg.get("t") is not None and not seed_cfg.get("tune", True):
        seq = hn.renormalize_tower(build_seed(seed_cfg, f_star, seed_cfg["t"]),
                                   depth, degrees=degrees)
        return seed_cfg["t"], seq
    hint = seed_cfg.get("t")
    make = lambda t: build_seed(seed_cfg, f_star, t)
    if hint is not None:
        return fam.tune_tower(make, depth, hint - 5e-3, hint + 5e-3,
                              degrees=degrees)
    return fam.tune_tower(make, depth, degrees=degrees)


# -- pipeline stages ----------------------------------------------------------


def stage_fixed_point(cfg, out):
    solver = cfg["solver"]
    fp = um.fixed_point_1d(um.UnimodalMap.quadratic(1.4, degree=solver["degree"]),
                           tol=solver["tol"])
    files = []
    path = os.path.join(out, "fstar.func")
    with open(path, "w") as fh:
        fh.write(fp.f_star.func.to_text())
    files.append("fstar.func")
    files.append(os.path.basename(emit_csv(
        os.path.join(out, "fixedpoint.csv"),
        ["degree", "sigma", "inv_sigma", "residual"],
        [[solver["degree"], fp.sigma, 1.0 / fp.sigma, fp.residual]],
    )))
    return fp, files


def stage_tower(cfg, out, fp):
    t, seq = build_tower(cfg, fp.f_star)
    files = []
    rows = []
    for k, Fk in enumerate(seq.maps):
        en, dn = Fk.perturbation_norms()
        sigma0 = seq.steps[k].sigma0 if k < seq.depth else float("nan")
        beta = seq.steps[k].beta if k < seq.depth else float("nan")
        rows.append([k, en, dn, sigma0, beta])
        files.extend(
            os.path.join(f"map{k}", name)
            for name in hn.save_map(Fk, os.path.join(out, f"map{k}"),
                                    provenance=f"level {k}")
        )
    files.append(os.path.basename(emit_csv(
        os.path.join(out, "tower.csv"),
        ["level", "eps_norm", "delta_norm", "sigma0", "beta"],
        rows,
    )))
    seed_record = dict(cfg["seed"])
    seed_record["t"] = t
    seed_record["depth"] = cfg["tower"]["depth"]
    seed_record["degrees"] = cfg["tower"]["degrees"]
    with open(os.path.join(out, "seed.json"), "w") as fh:
        json.dump(seed_record, fh, indent=1, sort_keys=True)
        fh.write("\n")
    files.append("seed.json")
    return (t, seq), files


def stage_classn(cfg, out, seq):
    rows = []
    for k in range(seq.depth):
        rep = classn.n_defect(seq.maps[k], classn.PIECES, step=seq.steps[k])
        en, dn = seq.maps[k].perturbation_norms()
        rows.append([k, rep.sup_defect, en, dn])
    return [os.path.basename(emit_csv(
        os.path.join(out, "invariance.csv"),
        ["level", "defect", "eps_norm", "delta_norm"],
        rows,
    ))]


def stage_scope(cfg, out, seq):
    kmax = min(cfg["scope"]["kmax"], seq.depth - 1)
    rows = []
    for k in range(kmax + 1):
        for n in range(k + 1, seq.depth + 1):
            dec = sc.decompose_at_tip(seq, k, n)
            rb = geo_norm = 0.0
            if seq.m:
                ys = np.linspace(dec.R.box.lower[0], dec.R.box.upper[0], 33)
                rb = float(np.abs(dec.R(ys[:, None])).max())
                geo_norm = float(np.abs(dec.R.partial(0)(ys[:, None])).max())
            rows.append([
                k, n, dec.alpha, dec.sigma, dec.t,
                float(np.abs(dec.u).max()) if seq.m else 0.0,
                float(np.abs(dec.d).max()) if seq.m else 0.0,
                rb, geo_norm,
            ])
    return [os.path.basename(emit_csv(
        os.path.join(out, "scope.csv"),
        ["k", "n", "alpha", "sigma", "t", "u_max", "d_max", "R_norm",
         "R_prime_norm"],
        rows,
    ))]


def stage_geometry(cfg, out, seq, fp):
    gcfg = cfg["geometry"]
    sigma = fp.sigma
    files = []
    rows = []
    try:
        b1_rep = geo.b1(seq, depth=gcfg["orbit_depth"])
        bz = geo.b_z(seq, depth=gcfg["orbit_depth"])
        bf = geo.average_jacobian(seq, depth=gcfg["orbit_depth"])
        uni_rows = [[gcfg["orbit_depth"], bf.value, bz.orbit, bz.renormalized,
                     b1_rep.b1, bz.gap]]
        b1_value = b1_rep.b1
    except PdRenormError:
        uni_rows = [[gcfg["orbit_depth"], 0.0, 0.0, 0.0, 0.0, 0.0]]
        b1_value = 0.5
    files.append(os.path.basename(emit_csv(
        os.path.join(out, "universal.csv"),
        ["orbit_depth", "b_F", "b_z_orbit", "b_z_renorm", "b1", "gap"],
        uni_rows,
    )))
    kmax = min(gcfg["kmax"], seq.depth - 2)

    def piece_row(word):
        # sibling records: the piece against its last-letter sibling
        n = len(word)
        sibling = sc.Word(word.letters[:-1]
                          + (("c",) if word.letters[-1] == "v" else ("v",)))
        p = geo.piece(seq, word)
        q = geo.piece(seq, sibling)
        d = geo.diam(p)
        gap = geo.dist_min(p, q)
        overlap = min(p.bbox_hi[0], q.bbox_hi[0]) > max(p.bbox_lo[0],
                                                        q.bbox_lo[0])
        return [n - 1, n, str(word), d, gap, gap / d if d else 0.0,
                bool(overlap), 0.0]

    words = [sc.Word.from_int(v, n)
             for n in (2, 3) if n <= seq.depth for v in range(2**n)]
    rows = parallel_map(piece_row, words)

    def scan(pair):
        k, n = pair
        rep = geo.overlap_scan(seq, k, n, sigma, b1_value)
        ratio = geo.geometry_ratio_scan(seq, k, n, sigma)
        return [k, n, ratio.word, ratio.diameter, ratio.dist, ratio.ratio,
                rep.overlaps, rep.resonance_ratio]

    pairs = [(k, n) for k in range(kmax + 1) for n in range(k + 1, seq.depth)]
    rows += parallel_map(scan, pairs)
    files.append(os.path.basename(emit_csv(
        os.path.join(out, "geometry.csv"),
        ["k", "n", "word", "diam", "dist_min", "ratio", "overlap_flag",
         "resonance_ratio"],
        rows,
    )))
    return files


def stage_sweep(cfg, out, fp):
    scfg = cfg["sweep"]
    lo, hi, count = (float(x) for x in scfg["grid"].split(":"))
    bs = np.geomspace(lo, hi, int(count))
    recs = geo.sweep_b1(fp.f_star, bs, c=scfg["c"], depth=scfg["depth"],
                        k_max=scfg["kmax"], degrees=scfg["degrees"],
                        sigma=fp.sigma)
    rows = [[r.b1, r.tuned_t, r.k, r.n, r.overlaps, r.overlap_length,
             r.resonance_ratio, r.dist_ratio, r.sigma_k_bound] for r in recs]
    files = [os.path.basename(emit_csv(
        os.path.join(out, "sweep.csv"),
        ["b1", "tuned_t", "k", "n", "overlap_flag", "overlap_length",
         "resonance_ratio", "dist_ratio", "sigma_k_bound"],
        rows,
    ))]
    files.append(os.path.basename(emit_plot_script(
        os.path.join(out, "plots.gp"),
        [("resonance", "sweep.csv", "1:8", "resonance ratio vs b1")],
    )))
    return files


def run(cfg: ExperimentConfig) -> RunManifest:
    out = cfg["run"]["out"]
    os.makedirs(out, exist_ok=True)
    manifest = RunManifest(cfg.digest(), __version__, 0.0)
    started = time.time()
    state = {}
    stage_order = list(cfg["run"]["stages"])

    def record(name, files):
        manifest.stages.append({"stage": name, "status": "ok"})
        manifest.outputs.extend(files)

    for name in stage_order:
        try:
            if name == "fixed-point":
                state["fp"], files = stage_fixed_point(cfg, out)
            elif name == "tower":
                state.setdefault("fp", _default_fp(cfg))
                (state["t"], state["seq"]), files = stage_tower(
                    cfg, out, state["fp"])
            elif name == "classn":
                files = stage_classn(cfg, out, _need(state, "seq", name))
            elif name == "scope":
                files = stage_scope(cfg, out, _need(state, "seq", name))
            elif name == "geometry":
                files = stage_geometry(cfg, out, _need(state, "seq", name),
                                       state["fp"])
            elif name == "sweep-b1":
                state.setdefault("fp", _default_fp(cfg))
                files = stage_sweep(cfg, out, state["fp"])
            else:
                raise ConfigError(f"unknown stage {name!r}")
        except ConfigError:
            raise
        except PdRenormError as exc:
            manifest.stages.append(
                {"stage": name, "status": "failed", "error": str(exc)}
            )
            manifest.wall_clock = time.time() - started
            manifest.write(os.path.join(out, "manifest.json"))
            raise StageFailed(name, exc) from exc
        record(name, files)
    manifest.wall_clock = time.time() - started
    manifest.write(os.path.join(out, "manifest.json"))
    return manifest


def _need(state, key, stage):
    if key not in state:
        raise ConfigError(f"stage {stage!r} needs the tower stage first")
    return state[key]


def _default_fp(cfg):
    solver = cfg["solver"]
    return um.fixed_point_1d(
        um.UnimodalMap.quadratic(1.4, degree=solver["degree"]),
        tol=solver["tol"],
    )


# -- subcommands --------------------------------------------------------------


def _cmd_run(args):
    cfg = ExperimentConfig.load(args.config)
    run(cfg)
    return 0


def _cmd_fixed_point(args):
    os.makedirs(args.out, exist_ok=True)
    cfg = ExperimentConfig.parse(
        f"[solver]\ndegree = {args.degree}\ntol = {args.tol}\n"
    )
    stage_fixed_point(cfg, args.out)
    return 0


def _cmd_renormalize(args):
    cfg = _config_with_seed(args.input)
    cfg.sections["tower"]["depth"] = args.depth
    cfg.sections["run"]["out"] = args.out
    cfg.sections["run"]["stages"] = ["fixed-point", "tower"]
    run(cfg)
    return 0


def _cmd_n_defect(args):
    cfg = _config_with_seed(args.map)
    fp = _default_fp(cfg)
    t, seq = build_tower(cfg, fp.f_star)
    rep = classn.n_defect(seq.maps[0], args.region, step=seq.steps[0])
    sys.stdout.write(f"defect {rep.sup_defect:.17g} ({rep.region}; {rep.grid})\n")
    return 0


def _cmd_invariance(args):
    cfg = _config_with_seed(args.map)
    cfg.sections["tower"]["depth"] = args.depth
    cfg.sections["run"]["out"] = args.out
    cfg.sections["run"]["stages"] = ["fixed-point", "tower", "classn"]
    run(cfg)
    return 0


def _cmd_scope_table(args):
    cfg, fp, seq = _reload_tower(args.tower)
    cfg.sections["scope"]["kmax"] = args.kmax
    stage_scope(cfg, args.tower, seq)
    return 0


def _cmd_geometry(args):
    cfg, fp, seq = _reload_tower(args.tower)
    cfg.sections["geometry"]["kmax"] = args.kmax
    stage_geometry(cfg, args.tower, seq, fp)
    return 0


def _cmd_sweep(args):
    cfg = ExperimentConfig.parse("")
    if args.family:
        with open(args.family) as fh:
            spec = json.load(fh)
        cfg.sections["sweep"].update(spec)
    cfg.sections["sweep"]["grid"] = args.grid
    cfg.sections["run"]["out"] = args.out
    cfg.sections["run"]["stages"] = ["sweep-b1"]
    run(cfg)
    return 0


def _cmd_holder(args):
    value = geo.holder_bound(args.b1, args.b1t)
    sys.stdout.write(f"{value:.17g}\n")
    return 0


def _config_with_seed(path) -> ExperimentConfig:
    cfg = ExperimentConfig.parse("")
    try:
        with open(path) as fh:
            cfg.sections["seed"].update(json.load(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read seed spec {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"bad seed spec {path}: {exc}") from exc
    return cfg


def _reload_tower(tower_dir):
    """Rebuild a tower deterministically from its recorded seed."""
    try:
        with open(os.path.join(tower_dir, "seed.json")) as fh:
            seed = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"no tower at {tower_dir}: {exc}") from exc
    cfg = ExperimentConfig.parse("")
    depth = seed.pop("depth", 3)
    degrees = seed.pop("degrees", None)
    cfg.sections["seed"].update(seed)
    cfg.sections["seed"]["tune"] = False
    cfg.sections["tower"]["depth"] = depth
    cfg.sections["tower"]["degrees"] = degrees
    fp = _default_fp(cfg)
    t, seq = build_tower(cfg, fp.f_star)
    return cfg, fp, seq


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pdrenorm",
        description="Doubling renormalization experiments for Henon-like maps",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a pipeline from a config file")
    p.add_argument("--config", required=True)
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("fixed-point", help="solve the 1-D fixed point")
    p.add_argument("--degree", type=int, default=16)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--out", default="runs/fixed-point")
    p.set_defaults(fn=_cmd_fixed_point)

    p = sub.add_parser("renormalize", help="build a tower from a seed spec")
    p.add_argument("--input", required=True, help="seed spec JSON")
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--out", default="runs/tower")
    p.set_defaults(fn=_cmd_renormalize)

    p = sub.add_parser("n-defect", help="invariant-class defect of a seed")
    p.add_argument("--map", required=True)
    p.add_argument("--region", choices=["pieces", "full"], default="pieces")
    p.set_defaults(fn=_cmd_n_defect)

    p = sub.add_parser("invariance", help="defect along a tower")
    p.add_argument("--map", required=True)
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--out", default="runs/invariance")
    p.set_defaults(fn=_cmd_invariance)

    p = sub.add_parser("scope-table", help="scope decomposition table")
    p.add_argument("--tower", required=True)
    p.add_argument("--kmax", type=int, default=2)
    p.set_defaults(fn=_cmd_scope_table)

    p = sub.add_parser("geometry", help="piece geometry and universal numbers")
    p.add_argument("--tower", required=True)
    p.add_argument("--kmax", type=int, default=2)
    p.set_defaults(fn=_cmd_geometry)

    p = sub.add_parser("sweep-b1", help="overlap scan over a b1 grid")
    p.add_argument("--family", default=None, help="family spec JSON")
    p.add_argument("--grid", default="0.004:0.07:8", help="lo:hi:count")
    p.add_argument("--out", default="runs/sweep")
    p.set_defaults(fn=_cmd_sweep)

    p = sub.add_parser("holder", help="conjugacy exponent upper bound")
    p.add_argument("--b1", type=float, required=True)
    p.add_argument("--b1t", type=float, required=True)
    p.set_defaults(fn=_cmd_holder)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.fn(args)
    except ConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return 2
    except (StageFailed, PdRenormError) as exc:
        sys.stderr.write(f"stage failure: {exc}\n")
        return 3


if __name__ == "__main__":
    sys.exit(main())
