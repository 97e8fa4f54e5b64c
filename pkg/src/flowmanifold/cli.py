"""``flowmanifold`` command line: generate | train | sample | eval | oracle | svg | sweep.

Exit codes: 0 ok, 2 configuration or input error, 3 training failure, 4 sampling failure.
Relative output paths are resolved against ``$FLOWMANIFOLD_OUTPUT_ROOT`` when set.
"""

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, data
from .artifacts import RunRecord, dump_toml, load_checkpoint, load_toml, output_path, save_checkpoint
from .errors import ContractError, IntegrationError, TrainingDivergedError
from .experiments import SamplerConfig, generate, recipe, run_cell
from .flow import TrainConfig, train
from .metrics import TABLE_HEADER, MetricReport, dist_manifold, distance_quantiles, sliced_w1_std, table_row
from .ode import quadratic_grid
from .oracle import PROBE_HEADER, AtomicTarget, velocity_mse, zero_field
from .svg import scatter_svg
from .utils import (
    atomic_write_text,
    config_hash,
    read_json,
    read_matrix_csv,
    rows_to_csv,
    sha256_file,
    write_csv,
    write_json,
    write_matrix_csv,
)

log = logging.getLogger("flowmanifold")

EXIT_OK, EXIT_CONFIG, EXIT_TRAIN, EXIT_SAMPLE = 0, 2, 3, 4


class CliError(Exception):
    def __init__(self, msg, code=EXIT_CONFIG):
        super().__init__(msg)
        self.code = code


def _sidecar(path):
    return Path(path).with_suffix(".json")


def _read_points(path):
    try:
        return read_matrix_csv(path)
    except (OSError, ValueError) as exc:
        raise CliError(f"cannot read {path}: {exc}") from exc


def _read_spec(path):
    try:
        d = read_json(path)
    except (OSError, ValueError) as exc:
        raise CliError(f"cannot read spec {path}: {exc}") from exc
    return data.spec_from_dict(d.get("spec", d))


# ---------------------------------------------------------------- generate


def cmd_generate(args):
    params = load_toml(args.spec) if args.spec else {}
    params = dict(params.get("manifold", params))
    if args.kind:
        params["kind"] = args.kind
    for key in ("d", "D"):
        if getattr(args, key) is not None:
            params[key] = getattr(args, key)
    spec = data.spec_from_dict(params)
    X = data.sample(spec, args.n, np.random.default_rng(args.seed))
    out = output_path(args.out)
    write_matrix_csv(out, X)
    write_json(_sidecar(out), {"spec": spec.to_dict(), "seed": args.seed, "n": args.n, "tool_version": __version__})
    print(out)


# ---------------------------------------------------------------- train


def _train_config(doc):
    return TrainConfig.from_dict(dict(doc.get("train", doc)))


def cmd_train(args):
    doc = load_toml(args.config)
    cfg = _train_config(doc)
    if args.seed is not None:
        cfg = TrainConfig.from_dict({**cfg.to_dict(), "seed": args.seed})
    target = _read_points(args.data)
    out_dir = output_path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    try:
        model, rec = train(cfg, target)
    except TrainingDivergedError as exc:
        raise CliError(f"training diverged at step {exc.where}: {exc}", EXIT_TRAIN) from exc
    elapsed = time.perf_counter() - t0
    digest = save_checkpoint(out_dir / "checkpoint.json", model)
    write_csv(out_dir / "loss.csv", ["step", "loss", "lr"], zip(range(len(rec.losses)), rec.losses, rec.lrs))
    echo = dump_toml({"train": cfg.to_dict()})
    atomic_write_text(out_dir / "config.toml", echo)
    record = RunRecord(
        command="train",
        config_toml=echo,
        config_hash=rec.config_hash,
        seeds={"master": cfg.seed},
        checkpoint="checkpoint.json",
        checkpoint_sha256=digest,
        loss_csv="loss.csv",
        artifacts={"config": "config.toml"},
        metrics=[{"final_loss": rec.final_loss}],
        timings={"train": elapsed},
    )
    record.write(out_dir / "run.json")
    print(out_dir / "run.json")


# ---------------------------------------------------------------- sample


def cmd_sample(args):
    try:
        model = load_checkpoint(args.checkpoint)
    except (OSError, ValueError, KeyError) as exc:
        raise CliError(f"cannot load checkpoint {args.checkpoint}: {exc}") from exc
    sampler = SamplerConfig(args.scheme, args.steps, args.t_min)
    t_min = args.t_min if args.t_min is not None else (1.0 / args.steps) ** 2
    t0 = time.perf_counter()
    try:
        X, _ = generate(model, args.n, sampler, t_min, args.seed)
    except IntegrationError as exc:
        raise CliError(f"sampling failed: {exc}", EXIT_SAMPLE) from exc
    out = output_path(args.out)
    write_matrix_csv(out, X)
    grid = quadratic_grid(args.steps, t_min, args.scheme)
    write_json(_sidecar(out), {
        "checkpoint": str(args.checkpoint),
        "checkpoint_sha256": sha256_file(args.checkpoint),
        "seed": args.seed,
        "n": args.n,
        "scheme": args.scheme,
        "steps": args.steps,
        "t_min": t_min,
        "grid": grid.nodes.tolist(),
        "wall_time": time.perf_counter() - t0,
        "tool_version": __version__,
    })
    print(out)


# ---------------------------------------------------------------- eval


def cmd_eval(args):
    spec = _read_spec(args.spec)
    ref = _read_points(args.reference)
    if ref.shape[1] != spec.D:
        raise CliError(f"reference has D={ref.shape[1]}, spec has D={spec.D}")
    w1s, dists, quantiles = [], [], []
    for k, path in enumerate(args.samples):
        X = _read_points(path)
        if X.shape[1] != ref.shape[1]:
            raise CliError(f"{path} has D={X.shape[1]}, reference has D={ref.shape[1]}")
        w1s.append(sliced_w1_std(X, ref, args.n_proj, seed=args.seed + k))
        dist = dist_manifold(X, spec)
        dists.append(float(dist.mean()))
        quantiles.append(distance_quantiles(dist))
    report = MetricReport(w1s, dists, args.n_proj, [args.seed + k for k in range(len(w1s))], quantiles)
    write_json(output_path(args.out), {"spec": spec.to_dict(), "samples": list(args.samples), **report.to_dict()})
    if args.table:
        _append_row(output_path(args.table), table_row(spec.d, spec.D, report))
    print(f"w1 {report.w1_mean:.5f} dist {report.dist_mean:.5f}")


def _append_row(path, row):
    path = Path(path)
    existing = path.read_text() if path.exists() else rows_to_csv(TABLE_HEADER, [])
    atomic_write_text(path, existing + rows_to_csv(TABLE_HEADER, [row]).split("\n", 1)[1])


# ---------------------------------------------------------------- oracle


def parse_slabs(text):
    """``"0:0.5,0.5:0.9"`` -> ``[(0.0, 0.5), (0.5, 0.9)]``."""
    slabs = []
    try:
        for part in text.split(","):
            lo, hi = part.split(":")
            slabs.append((float(lo), float(hi)))
    except ValueError as exc:
        raise CliError(f"malformed slab list {text!r}; expected lo:hi,lo:hi,...") from exc
    for lo, hi in slabs:
        if not 0.0 <= lo < hi < 1.0:
            raise CliError(f"slab ({lo}, {hi}) must satisfy 0 <= lo < hi < 1")
    return slabs


def cmd_oracle(args):
    target = AtomicTarget(_read_points(args.target))
    slabs = parse_slabs(args.slabs)
    if args.checkpoint:
        model = load_checkpoint(args.checkpoint)
    else:
        model = zero_field
    rows = [velocity_mse(model, target, slab, args.n_mc, args.seed).row() for slab in slabs]
    write_csv(output_path(args.out), PROBE_HEADER, rows)
    print(output_path(args.out))


# ---------------------------------------------------------------- svg


def cmd_svg(args):
    labels = args.labels or [Path(p).stem for p in args.points]
    if len(labels) != len(args.points):
        raise CliError("need one label per points file")
    layers = []
    for label, path in zip(labels, args.points):
        X = _read_points(path)
        if X.shape[1] != 2:
            raise CliError(f"{path}: svg needs D = 2, got D = {X.shape[1]}")
        layers.append((label, X))
    atomic_write_text(output_path(args.out), scatter_svg(layers, title=args.title))
    print(output_path(args.out))


# ---------------------------------------------------------------- sweep


def sweep_cells(doc):
    """``(d, D)`` pairs from either an explicit ``[[cells]]`` list or ``d`` x ``D_factors``."""
    if "cells" in doc:
        return [(int(c["d"]), int(c["D"])) for c in doc["cells"]]
    ds = doc.get("d", [2])
    factors = doc.get("D_factors", [2])
    return [(d, f * d) for d in ds for f in factors]


def run_sweep(doc, out_dir):
    """Run every (cell, seed); returns ``(table rows, failures)``."""
    name = doc.get("recipe", "sphere")
    seeds = [int(s) for s in doc.get("seeds", [0, 1, 2, 3, 4])]
    base = {k: doc[k] for k in ("n_train", "n_generate", "n_eval", "n_proj") if k in doc}
    rows, failures = [], []
    for d, D in sweep_cells(doc):
        exp = recipe(name, manifold={**doc.get("manifold", {}), "d": d, "D": D},
                     train=doc.get("train"), sampler=doc.get("sampler"), **base)
        cell_dir = out_dir / f"d{d}_D{D}"
        w1s, dists, quantiles, ok_seeds = [], [], [], []
        for seed in seeds:
            try:
                res = run_cell(exp, seed)
            except TrainingDivergedError as exc:
                failures.append({"d": d, "D": D, "seed": seed, "stage": "train", "error": str(exc)})
                continue
            except IntegrationError as exc:
                failures.append({"d": d, "D": D, "seed": seed, "stage": "sample", "error": str(exc)})
                continue
            _write_cell(cell_dir / f"seed{seed}", exp, res)
            w1s.append(res.w1)
            dists.append(res.dist_mean)
            quantiles.append(distance_quantiles(res.dists))
            ok_seeds.append(seed)
        if w1s:
            report = MetricReport(w1s, dists, exp.n_proj, ok_seeds, quantiles)
            write_json(cell_dir / "report.json", report.to_dict())
            rows.append(table_row(d, D, report))
    return rows, failures


def _write_cell(run_dir, exp, res):
    run_dir.mkdir(parents=True, exist_ok=True)
    digest = save_checkpoint(run_dir / "checkpoint.json", res.model)
    write_csv(run_dir / "loss.csv", ["step", "loss", "lr"],
              zip(range(len(res.record.losses)), res.record.losses, res.record.lrs))
    write_matrix_csv(run_dir / "samples.csv", res.generated)
    echo = dump_toml(exp.to_dict())
    atomic_write_text(run_dir / "config.toml", echo)
    RunRecord(
        command="sweep",
        config_toml=echo,
        config_hash=config_hash(exp.to_dict()),
        seeds={"master": res.seed, **res.seeds},
        checkpoint="checkpoint.json",
        checkpoint_sha256=digest,
        loss_csv="loss.csv",
        artifacts={"samples": "samples.csv", "config": "config.toml"},
        metrics=[{"w1_slice_std": res.w1, "dist_mean": res.dist_mean}],
        timings=res.timings,
    ).write(run_dir / "run.json")


def cmd_sweep(args):
    doc = load_toml(args.sweep)
    out_dir = output_path(args.out_dir or doc.get("output_dir", "sweep"))
    out_dir.mkdir(parents=True, exist_ok=True)
    rows, failures = run_sweep(doc, out_dir)
    write_csv(out_dir / "table.csv", TABLE_HEADER, rows)
    write_json(out_dir / "failures.json", failures)
    print(rows_to_csv(TABLE_HEADER, rows), end="")
    if failures:
        stages = {f["stage"] for f in failures}
        raise CliError(f"{len(failures)} run(s) failed; see failures.json", EXIT_TRAIN if "train" in stages else EXIT_SAMPLE)


# ---------------------------------------------------------------- entry point


def build_parser():
    p = argparse.ArgumentParser(prog="flowmanifold", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="draw a synthetic target sample")
    g.add_argument("--spec", help="TOML file with manifold parameters")
    g.add_argument("--kind", choices=["sphere", "torus", "floral"])
    g.add_argument("--d", type=int)
    g.add_argument("--D", type=int)
    g.add_argument("--n", type=int, default=2048)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="fit a velocity model")
    t.add_argument("--config", required=True)
    t.add_argument("--data", required=True)
    t.add_argument("--out-dir", required=True)
    t.add_argument("--seed", type=int)
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sample", help="integrate a checkpoint from Gaussian draws")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--n", type=int, default=2048)
    s.add_argument("--scheme", choices=["euler", "rk4"], default="euler")
    s.add_argument("--steps", type=int, default=250)
    s.add_argument("--t-min", type=float, help="early-stopping level (default (1/steps)^2)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sample)

    e = sub.add_parser("eval", help="sliced W1 and distance to the manifold")
    e.add_argument("--samples", nargs="+", required=True, help="one CSV per run")
    e.add_argument("--reference", required=True)
    e.add_argument("--spec", required=True, help="JSON sidecar written by generate")
    e.add_argument("--n-proj", type=int, default=128)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", required=True)
    e.add_argument("--table", help="CSV to append a table row to")
    e.set_defaults(func=cmd_eval)

    o = sub.add_parser("oracle", help="per-slab velocity error against the exact atomic field")
    o.add_argument("--target", required=True, help="CSV of atoms (equal weights)")
    o.add_argument("--checkpoint", help="model to probe; omit for the zero field")
    o.add_argument("--slabs", required=True, help="lo:hi,lo:hi,...")
    o.add_argument("--n-mc", type=int, default=4096)
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--out", required=True)
    o.set_defaults(func=cmd_oracle)

    v = sub.add_parser("svg", help="scatter one or more 2-D point clouds")
    v.add_argument("points", nargs="+")
    v.add_argument("--labels", nargs="+")
    v.add_argument("--title")
    v.add_argument("--out", required=True)
    v.set_defaults(func=cmd_svg)

    w = sub.add_parser("sweep", help="train/sample/evaluate a grid of (d, D) cells over seeds")
    w.add_argument("sweep")
    w.add_argument("--out-dir")
    w.set_defaults(func=cmd_sweep)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except TrainingDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TRAIN
    except IntegrationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SAMPLE
    except (ContractError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
