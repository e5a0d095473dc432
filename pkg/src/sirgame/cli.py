"""Command-line front end: ``sirgame {simulate,nash,gne,sweep}``.

Every output file carries the configuration hash (first line of CSV files,
``meta`` of JSON files) and nothing run-dependent, so identical inputs give
byte-identical outputs.  Exit codes: 0 success, 2 configuration error,
3 numerical failure, 4 empty result.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .config import ConfigError, RunConfig, load_config, load_config_file
from .costs import cost_report
from .dynamics import NonFiniteError, integrate
from .gne import find_gne, gne_sweep, summarize, sweep_csv, variance_grid
from .model import DiscreteProfile, TwoPointProfile, ValidationError, profile_from_two_point, validate
from .nash import enumerate_all

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_EMPTY = 0, 2, 3, 4


class EmptyResult(RuntimeError):
    pass


@dataclass
class TaskResult:
    task: str
    config_hash: str
    wall_time: float = 0.0
    paths: list[str] = field(default_factory=list)
    summary: str = ""
    exit_code: int = EXIT_OK


def _clean(obj):
    """Replace non-finite floats by ``None`` so JSON stays standard."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class _Writer:
    def __init__(self, cfg: RunConfig, out_dir: Path, result: TaskResult):
        self.cfg = cfg
        self.dir = out_dir
        self.result = result

    def _path(self, name: str) -> Path:
        return self.dir / f"{self.cfg.output.prefix}{name}"

    def csv(self, name: str, body: str) -> None:
        p = self._path(name)
        write_atomic(p, f"# config_hash={self.result.config_hash}\n{body}")
        self.result.paths.append(str(p))

    def json(self, name: str, results) -> None:
        meta = {"task": self.result.task, "config_hash": self.result.config_hash,
                "version": __version__, "config": self.cfg.to_dict()}
        text = json.dumps(_clean({"meta": meta, "results": results}), indent=2, sort_keys=True) + "\n"
        p = self._path(name)
        write_atomic(p, text)
        self.result.paths.append(str(p))


def _rows_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(["" if v is None else repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def _simulate(cfg: RunConfig, out: _Writer) -> str:
    p, t = cfg.model, cfg.task
    if t.u1 is not None or t.u2 is not None:
        if t.u1 is None or t.u2 is None:
            raise ConfigError("both u1 and u2 are needed for a Dirac pair", "task.u1")
        try:
            prof = DiscreteProfile.dirac(p, t.u1, t.u2)
        except ValueError as e:
            raise ConfigError(str(e), "task.u1") from None
    else:
        prof = profile_from_two_point(p, TwoPointProfile(t.tilde_u1, t.tilde_u2))
    traj = integrate(p, prof, cfg.solver.steps)
    rep = cost_report(p, prof, F=traj.F)
    out.csv("trajectory.csv", traj.to_csv())
    out.json("costs.json", rep.to_dict())
    return f"F={traj.F:.6g} prevalence={rep.prevalence:.6g} V={rep.variance:.6g}"


EQ_HEADER = ["kind", "tilde_u1", "tilde_u2", "J1", "J2", "prevalence", "residual", "pareto_dominated"]


def _eq_row(rec):
    return [rec.kind, rec.profile.tilde_u1, rec.profile.tilde_u2, rec.costs[0], rec.costs[1],
            rec.prevalence, rec.residual, str(rec.pareto_dominated).lower()]


def _nash(cfg: RunConfig, out: _Writer) -> str:
    s = cfg.solver
    recs = enumerate_all(cfg.model, s.resolution, s.eq_tol, s.steps)
    out.json("equilibria.json", [r.to_dict() for r in recs])
    out.csv("equilibria.csv", _rows_csv(EQ_HEADER, [_eq_row(r) for r in recs]))
    if not recs:
        raise EmptyResult("no equilibria found")
    return f"{len(recs)} equilibria: " + ", ".join(f"({a:.4g}, {b:.4g})" for a, b in (r.point for r in recs))


def _gne_kwargs(cfg: RunConfig) -> dict:
    s = cfg.solver
    return dict(grid=s.gne_grid, probes=s.probes, rho_grid=s.rho_grid, tol=(s.tol_K, s.tol_V),
                threads=s.threads, steps=s.steps)


def _gne(cfg: RunConfig, out: _Writer) -> str:
    p, t, s = cfg.model, cfg.task, cfg.solver
    out.csv("contour.csv", variance_grid(p, s.gne_grid, s.steps).to_csv())
    if t.C_values:
        results, rows = gne_sweep(p, t.C_values, **_gne_kwargs(cfg))
        out.json("gne.json", [{"C": c, "records": [r.to_dict() for r in recs]} for c, recs in results.items()])
        out.csv("gne_sweep.csv", sweep_csv(rows))
        total = sum(len(v) for v in results.values())
        summary = f"{total} GNE records over {len(results)} values of C"
    else:
        recs = find_gne(p, t.C, **_gne_kwargs(cfg))
        out.json("gne.json", [r.to_dict() for r in recs])
        out.csv("gne_sweep.csv", sweep_csv([summarize(t.C, recs)]))
        total = len(recs)
        kinds = {}
        for r in recs:
            kinds[r.kind] = kinds.get(r.kind, 0) + 1
        summary = f"C={t.C:g}: " + (", ".join(f"{n} {k}" for k, n in sorted(kinds.items())) or "none")
    if total == 0:
        raise EmptyResult("no GNE found")
    return summary


SWEEP_G_HEADER = ["G1", "G2"] + EQ_HEADER + ["error"]


def _sweep_G1(cfg: RunConfig, out: _Writer) -> tuple[str, int]:
    p, s = cfg.model, cfg.solver
    ratio = cfg.task.G_ratio if cfg.task.G_ratio is not None else p.G2 / p.G1

    def one(g):
        try:
            params = validate(p.with_(G1=g, G2=g * ratio))
            return g, params.G2, enumerate_all(params, s.resolution, s.eq_tol, s.steps), None
        except (NonFiniteError, ValidationError) as e:
            return g, g * ratio, [], str(e)

    values = cfg.task.sweep_values
    if s.threads > 1:
        with ThreadPoolExecutor(s.threads) as pool:
            done = list(pool.map(one, values))
    else:
        done = [one(g) for g in values]
    rows, ok = [], 0
    for g, g2, recs, err in done:
        if err is not None:
            rows.append([g, g2] + [None] * len(EQ_HEADER) + [err])
            continue
        ok += 1
        rows.extend([g, g2] + _eq_row(r) + [None] for r in recs)
    out.csv("sweep.csv", _rows_csv(SWEEP_G_HEADER, rows))
    return f"G1 sweep: {ok}/{len(values)} values solved, {sum(len(d[2]) for d in done)} equilibria", ok


def _sweep_C(cfg: RunConfig, out: _Writer) -> tuple[str, int]:
    results, rows = gne_sweep(cfg.model, cfg.task.sweep_values, **_gne_kwargs(cfg))
    out.csv("sweep.csv", sweep_csv(rows))
    out.json("gne.json", [{"C": c, "records": [r.to_dict() for r in recs]} for c, recs in results.items()])
    return f"C sweep: {len(rows)} values, {sum(r.count for r in rows)} boundary GNE", len(rows)


def _sweep(cfg: RunConfig, out: _Writer) -> str:
    vals = cfg.task.sweep_values
    if len(vals) < 2:
        raise ConfigError("needs at least 2 values", "task.sweep_values")
    if cfg.task.sweep_parameter == "G1":
        summary, ok = _sweep_G1(cfg, out)
    else:
        summary, ok = _sweep_C(cfg, out)
    if ok == 0:
        raise NonFiniteError("sweep", float("nan"))
    return summary


TASK_FUNCS = {"simulate": _simulate, "nash": _nash, "gne": _gne, "sweep": _sweep}


def run(cfg: RunConfig, out_dir: str | Path | None = None) -> TaskResult:
    """Execute the configured task and write its outputs.

    Raises ``ConfigError``, ``NonFiniteError`` or ``EmptyResult``; the latter
    is raised after the (empty) outputs have been written.
    """
    res = TaskResult(cfg.task.name, cfg.hash())
    writer = _Writer(cfg, Path(out_dir if out_dir is not None else cfg.output.dir), res)
    t0 = time.perf_counter()
    try:
        res.summary = TASK_FUNCS[cfg.task.name](cfg, writer)
    finally:
        res.wall_time = time.perf_counter() - t0
    return res


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sirgame", description="Two-type SIR distancing game solver.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="task", required=True)
    for name in TASK_FUNCS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", metavar="PATH")
        sp.add_argument("--set", dest="overrides", action="append", default=[], metavar="K=V")
        sp.add_argument("--out", metavar="DIR")
        sp.add_argument("--threads", type=int, metavar="N")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = list(args.overrides)
    if args.threads is not None:
        overrides.append(f"solver.threads={args.threads}")
    try:
        if args.config:
            cfg = load_config_file(args.config, overrides, args.task)
        else:
            cfg = load_config("", overrides, args.task)
        res = run(cfg, args.out)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NonFiniteError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except EmptyResult as e:
        print(f"empty result: {e}", file=sys.stderr)
        return EXIT_EMPTY
    print(f"{res.task} [{res.config_hash}] {res.summary} ({res.wall_time:.1f}s)")
    for p in res.paths:
        print(f"  wrote {p}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
