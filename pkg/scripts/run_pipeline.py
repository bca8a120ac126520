"""Run the full command-line pipeline on a synthetic corpus.

simulate -> ingest -> fit -> rank -> validate -> report, all in one output
directory, then compare the classification with the planted ground truth.

    python scripts/run_pipeline.py --out-dir runs/demo --seed 3
"""

import argparse
import json
import sys
from pathlib import Path

from underproduction.cli import main as cli
from underproduction.manifest import read_csv


def run(*argv):
    code = cli([str(a) for a in argv])
    if code == 2:
        sys.exit(f"step failed: {' '.join(map(str, argv))}")
    return code


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out-dir", default="runs/demo")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--packages", type=int, default=40)
    p.add_argument("--draws", type=int, default=4000)
    p.add_argument("--svg", action="store_true")
    args = p.parse_args()

    out = Path(args.out_dir)
    inputs = out / "inputs"
    run("simulate", "--out-dir", inputs, "--packages", args.packages, "--plant-under", 5, "--plant-over", 5,
        "--nmu-link", -3.0, 0.5, 1.0, "--seed", args.seed)
    truth = json.loads((inputs / "truth.json").read_text())
    run("ingest", "--events", inputs / "events.jsonl", "--installs", inputs / "installs.csv",
        "--nmu", inputs / "nmu.csv", "--snapshot", truth["snapshot_time"], "--out", out / "corpus.json")
    run("fit", out / "corpus.json", "--out", out / "posterior.csv", "--draws", args.draws, "--seed", args.seed)
    run("rank", out / "corpus.json", out / "posterior.csv", "--out", out / "underproduction.csv")
    run("validate", out / "underproduction.csv", out / "corpus.json", "--out", out / "validation.json")
    report = ["report", out / "corpus.json", out / "posterior.csv", out / "underproduction.csv",
              "--out-dir", out / "report"]
    run(*report, *(["--svg"] if args.svg else []))

    classes = {r["package"]: r["class"] for r in read_csv(out / "underproduction.csv")}
    for group in ("under", "over"):
        names = sorted(k for k in classes if k.startswith(f"planted-{group}"))
        print(f"planted-{group}: " + ", ".join(f"{n}={classes[n]}" for n in names))


if __name__ == "__main__":
    main()
