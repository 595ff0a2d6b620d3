"""Command-line entry point: generate / sample / label / train / predict /
solve / bench / report.

All randomness flows from --seed through per-stage derived streams; budgets
run on the deterministic work clock, so identical flags reproduce identical
output files byte for byte. Exit codes: 0 success, 1 usage error, 2
data/integrity error, 3 infeasible or failed result.
"""

from __future__ import annotations

import argparse
import glob
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import generator, io, ml, pipeline
from .bnb import MipLimits, MipProblem, solve_mip
from .heuristics import LsConfig, lbh, lsfs_sample, lsr, ls_star, lswsh, rss_sample
from .model import DataFormatError, SpecError, StructuralError, new_solution
from .pipeline import make_scenario, noisy_labels, sls
from .relaxation import solve_flow_lp
from .rng import derive_seed


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _range_pair(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(t) for t in text.split(","))
    except ValueError:
        raise UsageError(f"expected LO,HI range, got {text!r}") from None
    return lo, hi


def _build_parser() -> _Parser:
    parser = _Parser(prog="mcfnd", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write seeded instances")
    g.add_argument("--topology", choices=["grid", "circular"], default="grid")
    g.add_argument("--rows", type=int, default=6)
    g.add_argument("--cols", type=int, default=6)
    g.add_argument("--ring-size", type=int, default=12)
    g.add_argument("--chords", type=int, default=4)
    g.add_argument("--commodities", type=int, default=20)
    g.add_argument("--cost-range", type=_range_pair, default=(1.0, 10.0))
    g.add_argument("--fixed-range", type=_range_pair, default=(20.0, 120.0))
    g.add_argument("--capacity-ratio", type=_range_pair, default=generator.LOOSE_RATIO)
    g.add_argument("--scale", type=float, default=None, help="scale node/commodity counts")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--count", type=int, default=1)
    g.add_argument("--out", default=None, help="output file (count=1)")
    g.add_argument("--out-dir", default=None, help="output directory (count>1)")

    s = sub.add_parser("sample", help="run a sampling routine")
    s.add_argument("--instance", required=True)
    s.add_argument("--routine", choices=["rss", "lsfs"], required=True)
    s.add_argument("--budget", type=float, default=300.0)
    s.add_argument("--per-iter", type=float, default=20.0)
    s.add_argument("--columns", type=int, default=3)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--samples-out", required=True)
    s.add_argument("--archive", default=None, help="append feasible solutions here")

    l = sub.add_parser("label", help="build labels from a solution archive")
    l.add_argument("--archive", required=True)
    l.add_argument("--instance", required=True)
    l.add_argument("--out", required=True)

    t = sub.add_parser("train", help="train a classifier from samples and labels")
    t.add_argument("--manifest", default=None,
                   help="file with lines: instance_path samples_path labels_path")
    t.add_argument("--instance", default=None)
    t.add_argument("--samples", default=None)
    t.add_argument("--labels", default=None)
    t.add_argument("--family", choices=["linear", "boosted"], default="boosted")
    t.add_argument("--w1", type=float, default=0.5)
    t.add_argument("--w0", type=float, default=0.5)
    t.add_argument("--max-depth", type=int, default=7)
    t.add_argument("--out", required=True)
    t.add_argument("--features-out", default=None)

    p = sub.add_parser("predict", help="score arcs with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--instance", required=True)
    p.add_argument("--samples", required=True)
    p.add_argument("--out", required=True)

    v = sub.add_parser("solve", help="solve one instance with a strategy")
    v.add_argument("--instance", required=True)
    v.add_argument("--strategy", required=True,
                   choices=["ls", "lsr", "lbh", "lswsh", "sls", "bnb", "rss", "lsfs"])
    v.add_argument("--budget", type=float, default=120.0)
    v.add_argument("--per-mip", type=float, default=20.0)
    v.add_argument("--per-iter", type=float, default=20.0)
    v.add_argument("--lambda", dest="lam", type=float, default=0.05)
    v.add_argument("--m0", type=int, default=20)
    v.add_argument("--prune-eps", type=float, default=0.01)
    v.add_argument("--columns", type=int, default=50)
    v.add_argument("--respect", type=float, default=0.8)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--model", default=None)
    v.add_argument("--prediction", default=None)
    v.add_argument("--labels", default=None)
    v.add_argument("--noise", type=float, default=None)
    v.add_argument("--archive", default=None, help="best entry warm-starts lsr/lbh/lswsh")
    v.add_argument("--sampling-budget", type=float, default=None)
    v.add_argument("--out", required=True)
    v.add_argument("--trace", action="store_true")

    b = sub.add_parser("bench", help="run a scenario grid with resume")
    b.add_argument("--instances", required=True, help="glob of instance files")
    b.add_argument("--scenarios", required=True, help="JSON scenario list")
    b.add_argument("--budget", type=float, default=120.0)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out-dir", required=True)
    b.add_argument("--jobs", type=int, default=1)
    b.add_argument("--labels-dir", default=None)

    r = sub.add_parser("report", help="render benchmark tables")
    r.add_argument("--records", required=True, help="directory of record files")
    r.add_argument("--format", choices=["txt", "csv"], default="txt")
    r.add_argument("--out", default=None)
    r.add_argument("--archives-dir", default=None)
    return parser


# ---------------------------------------------------------------------------


def _cmd_generate(args) -> int:
    spec = generator.GenSpec(
        topology=args.topology, rows=args.rows, cols=args.cols,
        ring_size=args.ring_size, chords=args.chords,
        commodity_count=args.commodities, cost_range=args.cost_range,
        fixed_range=args.fixed_range, capacity_ratio_range=args.capacity_ratio,
        seed=args.seed,
    )
    if args.scale is not None:
        spec = generator.scale_spec(spec, args.scale)
    if args.count == 1 and args.out:
        io.write_instance(generator.generate(spec), args.out)
        return 0
    if not args.out_dir:
        raise UsageError("--out (count=1) or --out-dir is required")
    os.makedirs(args.out_dir, exist_ok=True)
    from dataclasses import replace

    for i in range(args.count):
        inst = generator.generate(replace(spec, seed=derive_seed(spec.seed, f"i{i}")))
        io.write_instance(inst, os.path.join(args.out_dir, f"{inst.name}.inst"))
    return 0


def _cmd_sample(args) -> int:
    instance = io.read_instance(args.instance)
    if args.routine == "rss":
        run = rss_sample(instance, args.budget, args.per_iter, args.seed)
    else:
        run = lsfs_sample(instance, args.budget, args.per_iter, args.columns, args.seed)
    io.write_samples(run.samples, args.samples_out)
    if args.archive:
        for sol in run.samples.feasible:
            io.append_archive(args.archive, sol, instance.name)
    print(f"{args.routine}: {len(run.samples.feasible)} feasible, "
          f"{len(run.samples.fractional)} fractional samples")
    return 0


def _cmd_label(args) -> int:
    instance = io.read_instance(args.instance)
    archive = io.read_archive(args.archive, instance)
    labels = ml.build_labels(archive, instance)
    io.write_labels(labels, instance.name, args.out)
    return 0


def _cmd_train(args) -> int:
    triples: list[tuple[str, str, str]] = []
    if args.manifest:
        with open(args.manifest) as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                parts = line.split()
                if len(parts) != 3:
                    raise DataFormatError(f"line {lineno}: manifest needs 3 paths per line")
                triples.append((parts[0], parts[1], parts[2]))
    elif args.instance and args.samples and args.labels:
        triples.append((args.instance, args.samples, args.labels))
    else:
        raise UsageError("train needs --manifest or --instance/--samples/--labels")

    all_rows, all_labels = [], []
    for inst_path, samples_path, labels_path in triples:
        instance = io.read_instance(inst_path)
        samples = io.read_samples(samples_path, instance)
        labels = io.read_labels(labels_path)
        if labels.shape[0] != instance.n_arcs:
            raise DataFormatError(f"label length mismatch for {inst_path}")
        all_rows.append(ml.featurize(instance, samples))
        all_labels.append(labels)
    rows = np.vstack(all_rows)
    labels = np.concatenate(all_labels)
    if args.features_out:
        io.write_feature_table(rows, labels, args.features_out)
    family = "boosted_stumps" if args.family == "boosted" else "linear"
    model = ml.train(family, rows, labels, args.w1, args.w0,
                     ml.TrainParams(max_depth=args.max_depth))
    ml.save_model(model, args.out)
    return 0


def _cmd_predict(args) -> int:
    instance = io.read_instance(args.instance)
    samples = io.read_samples(args.samples, instance)
    model = ml.load_model(args.model)
    probs, decisions = ml.predict(model, ml.featurize(instance, samples))
    io.write_prediction(probs, decisions, args.out)
    return 0


def _write_solution(path, instance, strategy, best, trajectory) -> None:
    lines = [f"# mcfnd solution {instance.name} {strategy}"]
    lines.append(f"objective {best.objective!r}")
    lines.append("design " + "".join(str(int(b)) for b in best.design))
    for t, obj in trajectory:
        lines.append(f"traj {t!r} {obj!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _load_prediction(args, instance) -> np.ndarray:
    if args.prediction:
        decisions, _ = io.read_prediction(args.prediction)
        return decisions
    if args.labels is not None:
        labels = io.read_labels(args.labels)
        if args.noise:
            return noisy_labels(labels, args.noise, args.seed)
        return labels
    raise UsageError(f"strategy {args.strategy} needs --prediction or --labels")


def _cmd_solve(args) -> int:
    instance = io.read_instance(args.instance)
    trace = (lambda line: print(line, file=sys.stderr)) if args.trace else None
    cfg = LsConfig(
        lam=args.lam, m0=args.m0, per_mip_s=args.per_mip, budget_s=args.budget,
        columns_per_round=args.columns, prune_eps=args.prune_eps, seed=args.seed,
    )

    best, trajectory = None, []
    if args.strategy == "ls":
        out = ls_star(instance, cfg, trace=trace)
        best, trajectory = out.best, out.trajectory
    elif args.strategy == "bnb":
        res = solve_mip(MipProblem(instance, limits=MipLimits(time=args.budget),
                                   seed=args.seed))
        best, trajectory = res.best, res.trajectory
    elif args.strategy in ("rss", "lsfs"):
        if args.strategy == "rss":
            run = rss_sample(instance, args.budget, args.per_iter, args.seed)
        else:
            run = lsfs_sample(instance, args.budget, args.per_iter, args.columns, args.seed)
        best, trajectory = run.samples.best(), run.trajectory
        io.write_samples(run.samples, args.out + ".samples")
    elif args.strategy == "sls":
        if args.model is None and args.labels is None:
            raise UsageError("sls needs --model (or --labels for the noise study)")
        model = ml.load_model(args.model) if args.model else None
        override = None if model is not None else _load_prediction(args, instance)
        sampling = args.sampling_budget if args.sampling_budget else min(args.budget * 0.25, 300.0)
        res = sls(instance, model, ("rss", "lsfs"), cfg, args.budget, sampling,
                  per_iter_s=args.per_iter, strategy="lsr",
                  respect_fraction=args.respect, prediction_override=override)
        best, trajectory = res.best, list(res.trajectory)
    else:  # lsr / lbh / lswsh need a prediction and a warm sample
        prediction = _load_prediction(args, instance)
        if not args.archive:
            raise UsageError(f"strategy {args.strategy} needs --archive for the warm sample")
        archive = io.read_archive(args.archive)
        entry = archive.best()
        if entry is None:
            raise DataFormatError("archive is empty")
        flows = solve_flow_lp(instance, entry.design)
        if flows is None:
            raise DataFormatError("archive best entry infeasible for instance")
        warm = new_solution(instance, entry.design, flows, 0.0, "archive")
        # Predictions mark removals; the branching strategies take the design.
        if args.strategy == "lsr":
            out = lsr(instance, prediction, warm, cfg)
        elif args.strategy == "lbh":
            out = lbh(instance, 1 - prediction, warm, args.respect, cfg)
        else:
            out = lswsh(instance, 1 - prediction, warm, args.respect, cfg)
        best, trajectory = out.best, out.trajectory

    if best is None:
        print("no feasible solution found", file=sys.stderr)
        return 3
    _write_solution(args.out, instance, args.strategy, best, trajectory)
    print(f"{args.strategy}: objective {best.objective:.6f}")
    return 0


def _parse_scenarios(path: str) -> list:
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, list):
        raise DataFormatError("scenario file must hold a JSON list")
    specs = []
    for entry in data:
        entry = dict(entry)
        name = entry.pop("name")
        strategy = entry.pop("strategy")
        for key, value in list(entry.items()):
            if isinstance(value, list):
                entry[key] = tuple(value)
        specs.append(make_scenario(name, strategy, **entry))
    return specs


def _bench_cell(payload) -> str:
    instance_path, spec, seed, budget, labels_path, out_path = payload
    instance = io.read_instance(instance_path)
    labels = io.read_labels(labels_path) if labels_path else None
    draft = pipeline.run_scenario(instance, spec, seed, budget, labels=labels)
    with open(out_path, "w") as fh:
        fh.write(pipeline.draft_to_json(draft) + "\n")
    return out_path


def _cmd_bench(args) -> int:
    paths = sorted(glob.glob(args.instances))
    if not paths:
        raise DataFormatError(f"no instances match {args.instances!r}")
    scenarios = _parse_scenarios(args.scenarios)
    os.makedirs(args.out_dir, exist_ok=True)

    work = []
    for path in paths:
        name = os.path.splitext(os.path.basename(path))[0]
        labels_path = None
        if args.labels_dir:
            cand = os.path.join(args.labels_dir, f"{name}.labels")
            labels_path = cand if os.path.exists(cand) else None
        for spec in scenarios:
            out_path = os.path.join(args.out_dir, f"{name}__{spec.name}.json")
            if os.path.exists(out_path):
                continue  # resume: keep completed records
            work.append((path, spec, args.seed, args.budget, labels_path, out_path))

    if args.jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            for done in pool.map(_bench_cell, work):
                print(f"wrote {done}")
    else:
        for payload in work:
            print(f"wrote {_bench_cell(payload)}")
    print(f"bench: {len(work)} new records, "
          f"{len(paths) * len(scenarios) - len(work)} already present")
    return 0


def _cmd_report(args) -> int:
    record_paths = sorted(glob.glob(os.path.join(args.records, "*.json")))
    if not record_paths:
        raise DataFormatError(f"no record files in {args.records!r}")
    drafts = []
    for path in record_paths:
        with open(path) as fh:
            drafts.append(pipeline.draft_from_json(fh.read()))
    archive_best = {}
    if args.archives_dir:
        for path in sorted(glob.glob(os.path.join(args.archives_dir, "*.archive"))):
            archive = io.read_archive(path)
            if archive.entries:
                archive_best[archive.instance_name] = archive.best_objective()
    records = pipeline.finalize_records(drafts, archive_best)
    text = pipeline.render_report(records, args.format)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        print(text, end="")
    return 0


_COMMANDS = {
    "generate": _cmd_generate,
    "sample": _cmd_sample,
    "label": _cmd_label,
    "train": _cmd_train,
    "predict": _cmd_predict,
    "solve": _cmd_solve,
    "bench": _cmd_bench,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except (DataFormatError, StructuralError, SpecError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
