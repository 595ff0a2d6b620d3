#!/usr/bin/env python3
"""End-to-end workflow demo driven through the CLI.

Generates a small instance set, samples it, builds labels from the archive,
trains a classifier, predicts, and compares the reduction-guided search
against the plain local search. Everything lands in --workdir and reruns
reproduce the same files.
"""

import argparse
import os
import sys

from mcfnd.cli import main as mcfnd


def sh(*argv) -> None:
    code = mcfnd(list(argv))
    if code != 0:
        sys.exit(f"command failed ({code}): {' '.join(argv)}")


def run(workdir: str, seed: int) -> None:
    os.makedirs(workdir, exist_ok=True)
    inst = os.path.join(workdir, "demo.inst")
    samples = os.path.join(workdir, "demo.samples")
    archive = os.path.join(workdir, "demo.archive")
    labels = os.path.join(workdir, "demo.labels")
    model = os.path.join(workdir, "demo.model")
    preds = os.path.join(workdir, "demo.preds")

    sh("generate", "--rows", "4", "--cols", "4", "--commodities", "12",
       "--capacity-ratio", "1.1,1.5", "--seed", str(seed), "--out", inst)

    sh("sample", "--instance", inst, "--routine", "rss", "--budget", "30",
       "--per-iter", "5", "--seed", str(seed), "--samples-out", samples,
       "--archive", archive)

    # Extended run to enrich the archive with near-optimal solutions.
    ls_sol = os.path.join(workdir, "demo.ls.sol")
    sh("solve", "--instance", inst, "--strategy", "ls", "--budget", "60",
       "--per-mip", "10", "--m0", "10", "--seed", str(seed), "--out", ls_sol)
    with open(ls_sol) as fh:
        design = fh.read().splitlines()[2].split()[1]
    print(f"local search design: {design}")

    sh("label", "--archive", archive, "--instance", inst, "--out", labels)
    sh("train", "--instance", inst, "--samples", samples, "--labels", labels,
       "--family", "boosted", "--w1", "0.25", "--w0", "0.75", "--out", model)
    sh("predict", "--model", model, "--instance", inst, "--samples", samples,
       "--out", preds)

    lsr_sol = os.path.join(workdir, "demo.lsr.sol")
    sh("solve", "--instance", inst, "--strategy", "lsr", "--prediction", preds,
       "--archive", archive, "--budget", "60", "--per-mip", "10", "--m0", "10",
       "--seed", str(seed), "--out", lsr_sol)

    for name, path in (("ls", ls_sol), ("lsr", lsr_sol)):
        with open(path) as fh:
            objective = fh.read().splitlines()[1].split()[1]
        print(f"{name}: objective {objective}")


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--workdir", default="workflow_demo")
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()
    run(args.workdir, args.seed)
