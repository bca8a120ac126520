"""Command-line pipeline: ingest -> fit -> rank -> validate -> report.

Exit codes: 0 success, 1 analysis warning (e.g. R-hat over 1.1), 2 input error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .corpus import Corpus, InputError, ingest, parse_timestamp, write_corpus_inputs
from .manifest import RunManifest, read_csv, write_csv
from .ranking import misalignment_summary, underproduction
from .reports import UNDERPRODUCTION_COLUMNS, underproduction_rows, write_report
from .survival import PosteriorDraws, SamplerConfig, SurvivalDataset, fit_posterior, kaplan_meier
from .synthgen import PlantedPackage, SynthConfig, generate
from .validation import ConvergenceError, DegenerateFit, fit_negbin

log = logging.getLogger("underproduction")

EXIT_OK, EXIT_WARN, EXIT_INPUT = 0, 1, 2


def _snapshot(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        return parse_timestamp(text)


def _load_corpus(path) -> Corpus:
    return Corpus.from_json(Path(path).read_text(encoding="utf-8"))


def _out_dir(path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    return path.parent


def cmd_ingest(args) -> int:
    m = RunManifest("ingest", settings={"snapshot_time": _snapshot(args.snapshot)})
    m.add_input("events", args.events)
    m.add_input("installs", args.installs)
    if args.nmu:
        m.add_input("nmu", args.nmu)
    with m.stage("ingest"):
        corpus, seq = ingest(args.events, args.installs, args.nmu, m.settings["snapshot_time"])
    out = Path(args.out)
    payload = json.loads(corpus.to_json())
    payload["manifest"] = m.hash
    out_dir = _out_dir(out)
    out.write_text(json.dumps(payload, indent=1), encoding="utf-8")
    m.write(out_dir)
    print(f"parsed {seq.n_parsed} events, rejected {len(seq.rejects)} lines; "
          f"{len(corpus.bugs)} bugs in {len(corpus.packages)} packages")
    for line_no, reason in seq.rejects[:20]:
        print(f"  line {line_no}: {reason}", file=sys.stderr)
    return EXIT_OK


def cmd_fit(args) -> int:
    config = SamplerConfig(draws=args.draws, chains=args.chains, warmup=args.warmup, seed=args.seed,
                           ties=args.ties, n_jobs=args.jobs)
    m = RunManifest("fit", settings={**asdict(config), "coding": args.coding})
    m.add_input("corpus", args.corpus)
    corpus = _load_corpus(args.corpus)
    dataset = SurvivalDataset.from_corpus(corpus, coding=args.coding)
    if dataset.n_events == 0:
        print("error: corpus has no resolved bugs; nothing to fit", file=sys.stderr)
        return EXIT_INPUT
    with m.stage("fit"):
        post = fit_posterior(dataset, config)
    out = Path(args.out)
    out_dir = _out_dir(out)
    post.save(out, manifest_hash=m.hash)
    m.write(out_dir)
    d = post.diagnostics
    print(f"{post.D} draws; max R-hat {d['rhat_max']:.4f}; min ESS {d['ess_min']:.0f}")
    if not post.converged:
        print(f"warning: max R-hat {d['rhat_max']:.3f} >= 1.1; chains have not converged", file=sys.stderr)
        return EXIT_WARN
    if not d["rhat_target_met"]:
        print(f"note: max R-hat {d['rhat_max']:.3f} is above the 1.05 target", file=sys.stderr)
    return EXIT_OK


def cmd_rank(args) -> int:
    m = RunManifest("rank")
    m.add_input("corpus", args.corpus)
    m.add_input("posterior", args.posterior)
    corpus = _load_corpus(args.corpus)
    post = PosteriorDraws.load(args.posterior)
    with m.stage("rank"):
        result = underproduction(corpus, post)
    out = Path(args.out)
    out_dir = _out_dir(out)
    installs = [p.installs for p in corpus.packages]
    write_csv(out, UNDERPRODUCTION_COLUMNS, underproduction_rows(result, installs), m.hash)
    m.write(out_dir)
    counts = misalignment_summary(result)
    print(", ".join(f"{k}: {v}" for k, v in counts.items()))
    return EXIT_OK


def cmd_validate(args) -> int:
    m = RunManifest("validate", settings={"theta": args.theta})
    m.add_input("underproduction", args.underproduction)
    m.add_input("corpus", args.corpus)
    corpus = _load_corpus(args.corpus)
    rows = read_csv(args.underproduction)
    missing = [r["package"] for r in rows if r["package"] not in corpus.package_ids]
    if missing:
        raise InputError(f"{len(missing)} packages in {args.underproduction} are not in the corpus")
    u = np.array([float(r["U_mean"]) for r in rows])
    y = np.array([corpus.package(r["package"]).nmu_count for r in rows])
    with m.stage("validate"):
        try:
            model = fit_negbin(u, y, theta=args.theta)
        except (DegenerateFit, ConvergenceError) as exc:
            print(f"warning: {exc}", file=sys.stderr)
            return EXIT_WARN
    out = Path(args.out)
    out_dir = _out_dir(out)
    payload = {k: model.to_dict()[k] for k in ("b0", "b1", "theta", "ci_b0", "ci_b1", "n_obs", "log_likelihood")}
    payload["manifest"] = m.hash
    out.write_text(json.dumps(payload, indent=1), encoding="utf-8")
    m.write(out_dir)
    print(f"b0={model.b0:.3f} [{model.ci_b0[0]:.3f}, {model.ci_b0[1]:.3f}]  "
          f"b1={model.b1:.3f} [{model.ci_b1[0]:.3f}, {model.ci_b1[1]:.3f}]  theta={model.theta:.3g}")
    return EXIT_OK


def cmd_report(args) -> int:
    m = RunManifest("report", settings={"top": args.top, "grid": args.grid, "svg": args.svg})
    m.add_input("corpus", args.corpus)
    m.add_input("posterior", args.posterior)
    m.add_input("underproduction", args.underproduction)
    corpus = _load_corpus(args.corpus)
    post = PosteriorDraws.load(args.posterior)
    recorded = {r["package"] for r in read_csv(args.underproduction)}
    if recorded != set(corpus.package_ids):
        raise InputError("underproduction table does not cover the corpus packages")
    with m.stage("report"):
        curves = kaplan_meier(SurvivalDataset.from_corpus(corpus), stratify_by_severity=True)
        curves.append(kaplan_meier(SurvivalDataset.from_corpus(corpus))[0])
        result = underproduction(corpus, post)
        paths = write_report(args.out_dir, curves, result, post.q, top=args.top, grid=args.grid,
                             svg=args.svg, manifest_hash=m.hash)
    m.write(args.out_dir)
    print("wrote " + ", ".join(str(p) for p in paths.values()))
    return EXIT_OK


def cmd_simulate(args) -> int:
    planted = []
    for k in range(args.plant_under):
        planted.append(PlantedPackage(f"planted-under-{k + 1}", q=-args.plant_effect, installs=args.plant_installs))
    for k in range(args.plant_over):
        planted.append(PlantedPackage(f"planted-over-{k + 1}", q=args.plant_effect, installs=1))
    config = SynthConfig(
        J=args.packages, bugs_per_package=args.bugs, true_sigma=args.sigma, baseline_rate=args.rate,
        censor_horizon_days=args.horizon, open_spread_days=args.spread,
        nmu_link=tuple(args.nmu_link) if args.nmu_link else None, planted=tuple(planted), seed=args.seed,
    )
    corpus, truth = generate(config)
    out = Path(args.out_dir)
    write_corpus_inputs(corpus, out)
    (out / "truth.json").write_text(json.dumps({
        "snapshot_time": corpus.snapshot_time,
        "config": asdict(config),
        "q_true": dict(zip(truth.package_ids, truth.q_true.tolist())),
        "u_true": dict(zip(truth.package_ids, truth.u_true.tolist())),
    }, indent=1, default=str))
    print(f"snapshot {corpus.snapshot_time:.0f}; {len(corpus.bugs)} bugs in {len(corpus.packages)} packages -> {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="underproduction", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", help="build a corpus from events.jsonl, installs.csv and nmu.csv")
    s.add_argument("--events", required=True)
    s.add_argument("--installs", required=True)
    s.add_argument("--nmu")
    s.add_argument("--snapshot", required=True, help="ISO-8601 UTC time or epoch seconds")
    s.add_argument("--out", required=True, help="corpus JSON path")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("fit", help="sample the hierarchical survival posterior")
    s.add_argument("corpus")
    s.add_argument("--out", default="posterior.csv")
    s.add_argument("--draws", type=int, default=4000)
    s.add_argument("--chains", type=int, default=4)
    s.add_argument("--warmup", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--ties", choices=("efron", "breslow"), default="efron")
    s.add_argument("--coding", choices=("dummy", "ordinal"), default="dummy")
    s.add_argument("--jobs", type=int, default=1, help="chains to run concurrently")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("rank", help="compute underproduction factors")
    s.add_argument("corpus")
    s.add_argument("posterior")
    s.add_argument("--out", default="underproduction.csv")
    s.set_defaults(func=cmd_rank)

    s = sub.add_parser("validate", help="negative-binomial regression of NMU counts on mean U")
    s.add_argument("underproduction")
    s.add_argument("corpus")
    s.add_argument("--out", default="validation.json")
    s.add_argument("--theta", type=float, default=None, help="pin the NB dispersion")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("report", help="emit figure data (km, caterpillar, heatmap, worst)")
    s.add_argument("corpus")
    s.add_argument("posterior")
    s.add_argument("underproduction")
    s.add_argument("--top", type=int, default=20)
    s.add_argument("--grid", type=int, default=50)
    s.add_argument("--out-dir", default="report")
    s.add_argument("--svg", action="store_true")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("simulate", help="write a synthetic corpus in the ingest formats")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--packages", type=int, default=40)
    s.add_argument("--bugs", type=int, default=25)
    s.add_argument("--sigma", type=float, default=0.5)
    s.add_argument("--rate", type=float, default=0.1)
    s.add_argument("--horizon", type=float, default=365.0)
    s.add_argument("--spread", type=float, default=0.0)
    s.add_argument("--plant-under", type=int, default=0)
    s.add_argument("--plant-over", type=int, default=0)
    s.add_argument("--plant-effect", type=float, default=1.5)
    s.add_argument("--plant-installs", type=int, default=10_000_000)
    s.add_argument("--nmu-link", type=float, nargs=3, metavar=("B0", "B1", "THETA"))
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, InputError, json.JSONDecodeError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
