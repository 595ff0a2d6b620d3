"""End-to-end orchestration and benchmarking.

`sls` is the sample -> incumbent -> predict -> search pipeline: sampling
routines run on independent virtual clocks (parallel semantics with
deterministic merging), the classifier scores each arc, and the configured
integration strategy consumes the prediction. The rest of the module is the
measurement harness: primal gap / primal integral / shifted geometric mean,
a label-noise simulator, scenario execution and paper-style report tables.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .clock import WorkClock
from .heuristics import (
    LsConfig,
    LsResult,
    lbh,
    lsfs_sample,
    lsr,
    ls_star,
    lswsh,
    rss_sample,
)
from .bnb import MipLimits, MipProblem, solve_mip
from .ml import ClassifierModel, featurize, predict
from .model import Instance, SampleSet, Solution, StructuralError
from .rng import Rng, derive_seed

GAP_CAP = 100.0


# ---------------------------------------------------------------------------
# Metrics


@dataclass(frozen=True)
class Trajectory:
    """Strictly improving incumbents over a fixed horizon."""

    points: tuple[tuple[float, float], ...]
    horizon: float

    def __post_init__(self):
        if self.horizon <= 0:
            raise StructuralError("horizon must be positive")
        times = [t for t, _ in self.points]
        objs = [o for _, o in self.points]
        if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
            raise StructuralError("trajectory times must strictly increase")
        if any(o2 >= o1 for o1, o2 in zip(objs, objs[1:])):
            raise StructuralError("trajectory objectives must strictly decrease")


def monotone_points(events: list[tuple[float, float]]) -> tuple[tuple[float, float], ...]:
    """Filter raw (time, objective) events into a strictly improving sequence."""
    out: list[tuple[float, float]] = []
    for t, obj in sorted(events, key=lambda e: (e[0], e[1])):
        if out and obj >= out[-1][1] - 1e-9:
            continue
        if out and t <= out[-1][0]:
            t = np.nextafter(out[-1][0], np.inf)
        out.append((float(t), float(obj)))
    return tuple(out)


def primal_gap(objective: float, best_known: float) -> float:
    """Percent excess over the best known objective."""
    if best_known <= 0:
        raise StructuralError("best_known must be positive")
    value = 100.0 * (objective - best_known) / best_known
    return 0.0 if value <= 1e-9 else float(value)


def primal_integral(traj: Trajectory, best_known: float) -> float:
    """Time-average of the (capped) piecewise-constant primal gap.

    Before the first incumbent the gap counts as 100; gaps above 100 are
    capped at 100 so the integral stays comparable across instances.
    """
    horizon = traj.horizon
    level = GAP_CAP
    prev_t = 0.0
    area = 0.0
    for t, obj in traj.points:
        if t >= horizon:
            break
        area += level * (t - prev_t)
        prev_t = t
        level = min(primal_gap(obj, best_known), GAP_CAP)
    area += level * (horizon - prev_t)
    return float(area / horizon)


def shifted_geomean(values, shift: float = 1.0) -> float:
    vals = np.asarray(list(values), dtype=float)
    if vals.size == 0:
        raise StructuralError("shifted_geomean of empty input")
    if np.any(vals + shift <= 0):
        raise StructuralError("values must exceed -shift")
    return float(np.exp(np.mean(np.log(vals + shift))) - shift)


def noisy_labels(true_labels, noise: float, seed: int) -> np.ndarray:
    """Flip each bit independently with the given probability."""
    if not (0.0 <= noise <= 1.0):
        raise StructuralError("noise probability must lie in [0, 1]")
    labels = np.asarray(true_labels, dtype=np.int8)
    rng = Rng(derive_seed(seed, "noise"))
    flips = np.array([rng.uniform() < noise for _ in range(labels.shape[0])], dtype=np.int8)
    return labels ^ flips


# ---------------------------------------------------------------------------
# Supervised local search


@dataclass
class SlsResult:
    best: Optional[Solution]
    trajectory: tuple[tuple[float, float], ...]
    samples: SampleSet
    prediction: Optional[np.ndarray]
    best_sample_objective: Optional[float]
    fallback: bool = False


def sls(
    instance: Instance,
    model: Optional[ClassifierModel],
    samplers: tuple[str, ...],
    ls_config: LsConfig,
    total_budget_s: float,
    sampling_budget_s: float,
    per_iter_s: float = 20.0,
    sampling_columns: int = 3,
    strategy: str = "lsr",
    respect_fraction: float = 0.8,
    prediction_override: Optional[np.ndarray] = None,
) -> SlsResult:
    """Algorithm: parallel sampling, best incumbent, arc prediction, search.

    `prediction_override` replaces the model's forward pass (used by the
    label-noise study); exactly one of model / override must be supplied.
    """
    if not samplers:
        raise StructuralError("at least one sampling routine is required")
    if (model is None) == (prediction_override is None):
        raise StructuralError("supply exactly one of model or prediction_override")
    search_budget = total_budget_s - sampling_budget_s
    if search_budget <= 0:
        raise StructuralError("total budget must exceed the sampling budget")

    merged = SampleSet()
    events: list[tuple[float, float]] = []
    for tag in samplers:
        if tag == "rss":
            run = rss_sample(
                instance, sampling_budget_s, per_iter_s,
                seed=derive_seed(ls_config.seed, "sls-rss"),
            )
        elif tag == "lsfs":
            run = lsfs_sample(
                instance, sampling_budget_s, per_iter_s, sampling_columns,
                seed=derive_seed(ls_config.seed, "sls-lsfs"),
            )
        else:
            raise StructuralError(f"unknown sampling routine {tag!r}")
        merged = merged.merge(run.samples)
        events.extend(run.trajectory)

    best_sample = merged.best()
    cfg = replace(ls_config, budget_s=search_budget)

    if best_sample is None:
        # No feasible sample: fall back to the plain local search from scratch.
        out = ls_star(instance, cfg)
        events.extend((sampling_budget_s + t, o) for t, o in out.trajectory)
        return SlsResult(
            best=out.best,
            trajectory=monotone_points(events),
            samples=merged,
            prediction=None,
            best_sample_objective=None,
            fallback=True,
        )

    if prediction_override is not None:
        prediction = np.asarray(prediction_override, dtype=np.int8)
    else:
        rows = featurize(instance, merged)
        _, prediction = predict(model, rows)

    # The classifier scores removals (1 = remove); the local-branching
    # strategies want the implied design, its complement.
    if strategy == "lsr":
        out = lsr(instance, prediction, best_sample, cfg)
    elif strategy == "lbh":
        out = lbh(instance, 1 - prediction, best_sample, respect_fraction, cfg)
    elif strategy == "lswsh":
        out = lswsh(instance, 1 - prediction, best_sample, respect_fraction, cfg)
    elif strategy == "ls":
        out = ls_star(instance, cfg, initial=best_sample)
    else:
        raise StructuralError(f"unknown integration strategy {strategy!r}")

    events.extend((sampling_budget_s + t, o) for t, o in out.trajectory)
    best = out.best
    if best is None or best.objective > best_sample.objective:
        best = best_sample
    return SlsResult(
        best=best,
        trajectory=monotone_points(events),
        samples=merged,
        prediction=prediction,
        best_sample_objective=best_sample.objective,
    )


# ---------------------------------------------------------------------------
# Scenarios and records


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    strategy: str  # ls | bnb | rss | lsfs | lsr | lbh | lswsh | sls
    params: tuple = ()  # sorted (key, value) pairs; see make_scenario

    def get(self, key, default=None):
        for k, v in self.params:
            if k == key:
                return v
        return default


def make_scenario(name: str, strategy: str, **params) -> ScenarioSpec:
    return ScenarioSpec(name, strategy, tuple(sorted(params.items())))


@dataclass
class RecordDraft:
    instance_name: str
    scenario: str
    seed: int
    horizon: float
    best_objective: Optional[float]
    trajectory: tuple[tuple[float, float], ...]


@dataclass
class ExperimentRecord:
    instance_name: str
    scenario: str
    seed: int
    horizon: float
    best_objective: Optional[float]
    trajectory: tuple[tuple[float, float], ...]
    best_known: float
    gap: float
    integral: float


def run_scenario(
    instance: Instance,
    spec: ScenarioSpec,
    seed: int,
    budget_s: float,
    labels: Optional[np.ndarray] = None,
    model: Optional[ClassifierModel] = None,
) -> RecordDraft:
    """Execute one (instance, scenario) cell on a fresh virtual clock."""
    run_seed = derive_seed(seed, f"{instance.name}|{spec.name}")
    cfg = LsConfig(
        lam=spec.get("lam", 0.05),
        m0=spec.get("m0", 20),
        per_mip_s=spec.get("per_mip", 20.0),
        budget_s=budget_s,
        columns_per_round=spec.get("columns", 50),
        prune_eps=spec.get("prune_eps", 0.01),
        seed=run_seed,
    )
    strategy = spec.strategy
    if strategy == "ls":
        out = ls_star(instance, cfg)
        events, best = list(out.trajectory), out.best
    elif strategy == "bnb":
        res = solve_mip(
            MipProblem(instance, limits=MipLimits(time=budget_s), seed=run_seed)
        )
        events, best = list(res.trajectory), res.best
    elif strategy == "rss":
        run = rss_sample(instance, budget_s, spec.get("per_iter", 20.0), run_seed)
        events, best = list(run.trajectory), run.samples.best()
    elif strategy == "lsfs":
        run = lsfs_sample(
            instance, budget_s, spec.get("per_iter", 20.0), spec.get("columns", 3), run_seed
        )
        events, best = list(run.trajectory), run.samples.best()
    elif strategy in ("lsr", "lbh", "lswsh", "sls"):
        prediction_override = None
        use_model = model if model is not None else spec.get("model")
        noise = spec.get("noise")
        if noise is not None:
            if labels is None:
                raise StructuralError(f"scenario {spec.name} needs true labels")
            prediction_override = noisy_labels(labels, noise, run_seed)
            use_model = None
        search = "lsr" if strategy == "sls" else strategy
        res = sls(
            instance,
            use_model,
            samplers=spec.get("samplers", ("rss", "lsfs")),
            ls_config=cfg,
            total_budget_s=budget_s,
            sampling_budget_s=spec.get("sampling_budget", min(budget_s * 0.25, 300.0)),
            per_iter_s=spec.get("per_iter", 20.0),
            sampling_columns=spec.get("sampling_columns", 3),
            strategy=search,
            respect_fraction=spec.get("respect", 0.8),
            prediction_override=prediction_override,
        )
        events, best = list(res.trajectory), res.best
    else:
        raise StructuralError(f"unknown scenario strategy {strategy!r}")

    return RecordDraft(
        instance_name=instance.name,
        scenario=spec.name,
        seed=run_seed,
        horizon=budget_s,
        best_objective=None if best is None else float(best.objective),
        trajectory=monotone_points(events),
    )


def finalize_records(
    drafts: list[RecordDraft],
    archive_best: Optional[dict[str, float]] = None,
) -> list[ExperimentRecord]:
    """Compute best-known per instance, then gaps and integrals."""
    best_known: dict[str, float] = dict(archive_best or {})
    for d in drafts:
        if d.best_objective is None:
            continue
        cur = best_known.get(d.instance_name)
        if cur is None or d.best_objective < cur:
            best_known[d.instance_name] = d.best_objective
    records = []
    for d in drafts:
        bk = best_known.get(d.instance_name)
        if bk is None:
            raise StructuralError(f"no feasible solution known for {d.instance_name}")
        gap = GAP_CAP if d.best_objective is None else min(
            primal_gap(d.best_objective, bk), GAP_CAP
        )
        integral = primal_integral(Trajectory(d.trajectory, d.horizon), bk)
        records.append(
            ExperimentRecord(
                d.instance_name, d.scenario, d.seed, d.horizon,
                d.best_objective, d.trajectory, bk, gap, integral,
            )
        )
    return records


def run_benchmark(
    instances: list[Instance],
    scenarios: list[ScenarioSpec],
    budget_s: float,
    seed: int,
    labels_by_instance: Optional[dict[str, np.ndarray]] = None,
    archive_best: Optional[dict[str, float]] = None,
) -> list[ExperimentRecord]:
    drafts = []
    for instance in instances:
        labels = (labels_by_instance or {}).get(instance.name)
        for spec in scenarios:
            drafts.append(run_scenario(instance, spec, seed, budget_s, labels=labels))
    return finalize_records(drafts, archive_best)


# ---------------------------------------------------------------------------
# Tables


@dataclass
class TableRow:
    scenario: str
    q10: float
    q50: float
    q90: float
    mean: float
    geomean_shifted: float
    wins: int


def _wins(records: list[ExperimentRecord], metric: str) -> dict[str, int]:
    by_instance: dict[str, list[ExperimentRecord]] = {}
    for r in records:
        by_instance.setdefault(r.instance_name, []).append(r)
    wins = {r.scenario: 0 for r in records}
    for group in by_instance.values():
        values = [(getattr(r, metric), r.scenario) for r in group]
        best = min(v for v, _ in values)
        holders = [s for v, s in values if v <= best + 1e-12]
        if len(holders) == 1:
            wins[holders[0]] += 1
    return wins


def aggregate(records: list[ExperimentRecord], metric: str) -> list[TableRow]:
    """Quantiles by linear interpolation, mean, shifted geomean, win counts.

    Ties award a win to nobody. The geomean column reports value + shift,
    matching the usual presentation of shifted geometric means.
    """
    if metric not in ("gap", "integral"):
        raise StructuralError("metric must be 'gap' or 'integral'")
    wins = _wins(records, metric)
    by_scenario: dict[str, list[float]] = {}
    for r in records:
        by_scenario.setdefault(r.scenario, []).append(getattr(r, metric))
    rows = []
    for scenario in sorted(by_scenario):
        vals = np.asarray(by_scenario[scenario])
        rows.append(
            TableRow(
                scenario=scenario,
                q10=float(np.quantile(vals, 0.1)),
                q50=float(np.quantile(vals, 0.5)),
                q90=float(np.quantile(vals, 0.9)),
                mean=float(vals.mean()),
                geomean_shifted=shifted_geomean(vals) + 1.0,
                wins=wins.get(scenario, 0),
            )
        )
    return rows


def render_report(records: list[ExperimentRecord], fmt: str = "txt") -> str:
    if fmt not in ("txt", "csv"):
        raise StructuralError("format must be txt or csv")
    sections = []
    for metric, title in (("gap", "Primal gap (%)"), ("integral", "Primal integral (%)")):
        rows = aggregate(records, metric)
        if fmt == "csv":
            lines = [f"# {title}", "scenario,q10,q50,q90,mean,geomean,wins"]
            for r in rows:
                lines.append(
                    f"{r.scenario},{r.q10:.6g},{r.q50:.6g},{r.q90:.6g},"
                    f"{r.mean:.6g},{r.geomean_shifted:.6g},{r.wins}"
                )
        else:
            width = max(12, max((len(r.scenario) for r in rows), default=12) + 2)
            lines = [title, f"{'Scenario':<{width}}{'0.1':>8}{'0.5':>8}{'0.9':>8}{'Mean':>8}{'Geomean':>9}{'Wins':>6}"]
            for r in rows:
                lines.append(
                    f"{r.scenario:<{width}}{r.q10:>8.2f}{r.q50:>8.2f}{r.q90:>8.2f}"
                    f"{r.mean:>8.2f}{r.geomean_shifted:>9.2f}{r.wins:>6d}"
                )
        sections.append("\n".join(lines))
    return "\n\n".join(sections) + "\n"


# ---------------------------------------------------------------------------
# Record files (JSON lines, used by the CLI for resumable grids)


def draft_to_json(d: RecordDraft) -> str:
    return json.dumps(
        {
            "instance": d.instance_name,
            "scenario": d.scenario,
            "seed": d.seed,
            "horizon": d.horizon,
            "best_objective": d.best_objective,
            "trajectory": [[t, o] for t, o in d.trajectory],
        },
        sort_keys=True,
    )


def draft_from_json(text: str) -> RecordDraft:
    data = json.loads(text)
    return RecordDraft(
        instance_name=data["instance"],
        scenario=data["scenario"],
        seed=int(data["seed"]),
        horizon=float(data["horizon"]),
        best_objective=None if data["best_objective"] is None else float(data["best_objective"]),
        trajectory=tuple((float(t), float(o)) for t, o in data["trajectory"]),
    )
