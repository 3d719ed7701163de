"""Command-line entry point: ``qpo {run,ablate-prefilter,toycheck,synth}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure (also
used when ``toycheck`` claims do not hold).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

from . import plotting, report
from .acquisition import POLICIES
from .config import RunManifest, build_manifest
from .errors import DataError, NumericError, QpoError, UsageError
from .fingerprints import load_pool, write_pool
from .loop import GENERATORS, run_campaign, synthetic_pool
from .metrics import diversity_stats
from .toy import toy_check

logger = logging.getLogger("qpo")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _csv(conv):
    def parse(text):
        try:
            return tuple(conv(x) for x in text.replace(",", " ").split())
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad list {text!r}") from None

    return parse


def _add_run_args(p):
    p.add_argument("--config", help="INI config file")
    p.add_argument(
        "--dataset",
        help="pool file, or synth:GENERATOR:N:DIM[:SEED] for a generated pool",
    )
    p.add_argument("--dimension", type=int, help="fingerprint dimension of the pool file")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seeds", type=_csv(int), help="comma-separated campaign seeds")
    p.add_argument("--threads", type=int, help="campaigns run concurrently")
    p.add_argument("--init-batch", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--direction", choices=("max", "min"))
    p.add_argument("--samples", "-M", type=int, dest="M", help="Monte Carlo samples per iteration")
    p.add_argument("--prefilter-size", type=int)
    p.add_argument("--similarity", choices=("minmax", "dot"))
    p.add_argument("--no-figures", action="store_true", help="skip PNG figures")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qpo", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="sweep policies x seeds and summarize")
    _add_run_args(run)
    run.add_argument("--policies", type=_csv(str), help=f"comma-separated, from: {', '.join(POLICIES)}")

    abl = sub.add_parser("ablate-prefilter", help="qPO with greedy vs UCB prefiltering")
    _add_run_args(abl)

    toy = sub.add_parser("toycheck", help="three-candidate toy posterior diagnostics")
    toy.add_argument("-M", type=int, default=1_000_000)
    toy.add_argument("--trials", type=int, default=100_000)
    toy.add_argument("--seed", type=int, default=0)
    toy.add_argument("--out", help="optional directory for a table and figure")

    syn = sub.add_parser("synth", help="write a synthetic pool file")
    syn.add_argument("--generator", choices=GENERATORS, default="multimodal")
    syn.add_argument("--N", type=int, required=True)
    syn.add_argument("--dim", type=int, required=True)
    syn.add_argument("--seed", type=int, default=0)
    syn.add_argument("--weight-scale", type=float, default=1.0)
    syn.add_argument("--out", required=True, help="destination file")
    return parser


def _manifest(args, policies=None) -> RunManifest:
    overrides = {
        "run.out": args.out,
        "run.seeds": args.seeds,
        "run.threads": args.threads,
        "run.policies": policies,
        "campaign.init_batch": args.init_batch,
        "campaign.batch_size": args.batch_size,
        "campaign.iterations": args.iterations,
        "campaign.objective_direction": args.direction,
        "policy.m": args.M,
        "policy.prefilter_size": args.prefilter_size,
        "surrogate.similarity": args.similarity,
        "dataset.dimension": args.dimension,
    }
    if args.dataset:
        if args.dataset.startswith("synth:"):
            parts = args.dataset.split(":")[1:]
            if len(parts) not in (3, 4):
                raise UsageError("--dataset synth spec must be synth:GENERATOR:N:DIM[:SEED]")
            try:
                overrides.update(
                    {
                        "dataset.generator": parts[0],
                        "dataset.n": int(parts[1]),
                        "dataset.dimension": int(parts[2]),
                        "dataset.seed": int(parts[3]) if len(parts) == 4 else 0,
                    }
                )
            except ValueError:
                raise UsageError(f"bad synthetic dataset spec {args.dataset!r}") from None
        else:
            overrides["dataset.path"] = args.dataset
    return build_manifest(args.config, overrides)


def _load_dataset(man: RunManifest):
    ds = man.dataset
    if ds.path:
        pool = load_pool(ds.path, ds.dimension)
    else:
        pool = synthetic_pool(ds.generator, ds.N, ds.dimension, ds.seed)
    if not pool.has_oracle:
        raise DataError("dataset has no objective column; lookup oracle unavailable")
    return pool


def sweep(man: RunManifest, variants: list, pool, out: str) -> tuple[dict, list]:
    """Run every (variant, seed) campaign and write per-campaign logs.

    ``variants`` is a list of ``(label, PolicyConfig)``. Returns the states
    grouped by label and a list of failure records.
    """
    log_dir = os.path.join(out, "logs")
    os.makedirs(log_dir, exist_ok=True)
    jobs = [(label, pcfg, seed) for label, pcfg in variants for seed in man.seeds]

    def run_one(job):
        label, pcfg, seed = job
        cfg = replace(man.campaign, seed=seed, policy=pcfg)
        try:
            return job, run_campaign(pool, cfg), None
        except QpoError as exc:
            partial = getattr(exc, "partial", None)
            return job, partial if hasattr(partial, "log_lines") else None, exc

    threads = max(1, man.campaign.threads)
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            results = list(ex.map(run_one, jobs))
    else:
        results = [run_one(j) for j in jobs]

    states: dict = {label: [] for label, _ in variants}
    failures = []
    timing = []
    for (label, _, seed), state, exc in results:
        name = f"{label}_seed{seed}"
        if state is not None:
            report.write_campaign(state, log_dir, name)
            timing.extend(json.dumps(dict(json.loads(l), campaign=name), sort_keys=True) for l in state.timing_lines())
        if exc is not None:
            failures.append(
                {"label": label, "seed": seed, "error": type(exc).__name__, "message": str(exc), "exit_code": exc.exit_code}
            )
            logger.error("%s failed: %s", name, exc)
        else:
            states[label].append(state)
    with open(os.path.join(out, "timing.jsonl"), "w") as fh:
        fh.writelines(t + "\n" for t in timing)
    if failures:
        report.write_table(failures, os.path.join(out, "failures.tsv"))
    return states, failures


def _write_reports(states: dict, pool, out: str, figures: bool) -> list[dict]:
    summary = report.summarize({k: v for k, v in states.items() if v})
    report.write_table(summary, os.path.join(out, "summary.tsv"))
    report.write_jsonl(summary, os.path.join(out, "summary.jsonl"))

    div = {}
    div_rows = []
    for label, group in states.items():
        if not group or not group[0].records:
            continue
        batch = group[0].records[0].selected
        if len(batch) < 2:
            continue
        st = diversity_stats(pool, batch)
        div[label] = st
        row = {"label": label, "seed": group[0].config.seed, "pairs": int(st.counts.sum()), "edges": len(st.edges)}
        for lo, c in zip(st.bin_edges[:-1], st.counts):
            row[f"bin_{lo:.2f}"] = int(c)
        div_rows.append(row)
    if div_rows:
        report.write_table(div_rows, os.path.join(out, "diversity.tsv"))

    if figures and summary:
        fig_dir = os.path.join(out, "figures")
        os.makedirs(fig_dir, exist_ok=True)
        metrics = sorted({k[: -len("_mean")] for r in summary for k in r if k.endswith("_mean")})
        for m in metrics:
            plotting.metric_curves(summary, m, os.path.join(fig_dir, f"{m}.png"))
        if div:
            plotting.diversity_histograms(div, os.path.join(fig_dir, "diversity.png"))
    return summary


def cmd_run(args) -> int:
    man = _manifest(args, policies=args.policies)
    pool = _load_dataset(man)
    man.campaign.validate(len(pool))
    os.makedirs(man.out, exist_ok=True)
    variants = [(p, replace(man.campaign.policy, policy=p)) for p in man.policies]
    states, failures = sweep(man, variants, pool, man.out)
    summary = _write_reports(states, pool, man.out, not args.no_figures)
    _print_final(summary)
    return max((f["exit_code"] for f in failures), default=EXIT_OK)


def cmd_ablate_prefilter(args) -> int:
    man = _manifest(args, policies=("qpo",))
    pool = _load_dataset(man)
    man.campaign.validate(len(pool))
    os.makedirs(man.out, exist_ok=True)
    base = replace(man.campaign.policy, policy="qpo")
    variants = [(f"qpo-{m}", replace(base, prefilter_metric=m)) for m in ("greedy", "ucb")]
    states, failures = sweep(man, variants, pool, man.out)
    summary = _write_reports(states, pool, man.out, not args.no_figures)
    metrics = sorted({k[: -len("_mean")] for r in summary for k in r if k.endswith("_mean")})
    report.write_table(report.comparison_rows(summary, metrics), os.path.join(man.out, "ablation.tsv"))
    _print_final(summary)
    return max((f["exit_code"] for f in failures), default=EXIT_OK)


def _print_final(summary):
    last = {}
    for r in summary:
        last[r["label"]] = r
    for label, r in last.items():
        cells = [f"{k[:-5]}={r[k]:.4g}+/-{r[k[:-5] + '_sem']:.2g}" for k in r if k.startswith("frac_top") and k.endswith("_mean")]
        print(f"{label}\titer {r['iteration']}\t" + "\t".join(cells))


def cmd_toycheck(args) -> int:
    rep = toy_check(args.M, args.trials, args.seed)
    for line in rep.lines():
        print(line)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        rows = [{"candidate": f"x{i + 1}", "score": float(s)} for i, s in enumerate(rep.scores)]
        report.write_table(rows, os.path.join(args.out, "toy_scores.tsv"))
        plotting.toy_scores(rep.scores, os.path.join(args.out, "toy_scores.png"))
    print("toycheck:", "PASS" if rep.ok else "FAIL")
    return EXIT_OK if rep.ok else EXIT_NUMERIC


def cmd_synth(args) -> int:
    pool = synthetic_pool(args.generator, args.N, args.dim, args.seed, weight_scale=args.weight_scale)
    write_pool(pool, args.out)
    print(f"wrote {len(pool)} candidates (dim {args.dim}) to {args.out}")
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "ablate-prefilter": cmd_ablate_prefilter,
    "toycheck": cmd_toycheck,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
        return COMMANDS[args.command](args)
    except QpoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
