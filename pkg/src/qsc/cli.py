"""``qsc`` command line: run one experiment, run a suite, inspect automata, plot results."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import harness
from .automata import BUNDLED, AutomatonError, bundled, read_pair
from .harness import ConfigError, ExperimentConfig, SuiteConfig
from .plotting import PlotError, failure_svg, queries_svg

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
SEED_ENV = "QSC_SEED"

# config field -> command-line flag, for error messages
FLAG_FOR_FIELD = {
    "domain": "--domain", "case": "--case", "oracle": "--oracle", "policy": "--policy",
    "seed": "--seed", "epochs": "--epochs", "test_episodes": "--test-episodes",
    "beta_ent": "--beta-ent", "tau": "--tau", "beta_util": "--beta-util",
    "alpha": "--alpha", "gamma": "--gamma", "epsilon": "--epsilon",
}


def _usage_error(msg: str) -> int:
    print(f"qsc: error: {msg}", file=sys.stderr)
    return EXIT_USAGE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qsc", description="Query-augmented shared control experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="train and evaluate one configuration")
    run.add_argument("--domain", required=True, help="automata | lander")
    run.add_argument("--case", help="cases | strategy | combination-lock (automata only)")
    run.add_argument("--oracle", required=True, help="teacher | expert | none")
    run.add_argument("--policy", required=True,
                     help="no-oracle | random | always-train | always-train-test | entropy | "
                          "utility | rl-train | rl-train-test")
    run.add_argument("--seed", type=int, default=None,
                     help=f"random seed (default: ${SEED_ENV}, else 0)")
    run.add_argument("--out", required=True, help="results CSV path; sibling files get the same stem")
    run.add_argument("--epochs", type=int, default=40, help="training epochs (default: 40)")
    run.add_argument("--test-episodes", type=int, default=5, help="test episodes (default: 5)")
    run.add_argument("--beta-ent", type=float, default=0.25, help="information-gain threshold in bits (default: 0.25)")
    run.add_argument("--beta-util", type=float, default=0.95, help="confidence threshold (default: 0.95)")
    run.add_argument("--tau", type=float, default=0.9, help="oracle trust in the IG posterior (default: 0.9)")
    run.add_argument("--alpha", type=float, default=0.5, help="Q-learning rate (default: 0.5)")
    run.add_argument("--gamma", type=float, default=0.9, help="Q-learning discount (default: 0.9)")
    run.add_argument("--epsilon", type=float, default=0.05, help="Q-learning exploration (default: 0.05)")

    suite = sub.add_parser("suite", help="run an experiment grid from a JSON config")
    suite.add_argument("--config", required=True, help="suite config JSON")
    suite.add_argument("--out", help="output directory (overrides the config's 'out')")
    suite.add_argument("--workers", type=int, help="parallel worker processes")

    inspect = sub.add_parser("inspect", help="validate and summarize an automaton pair")
    inspect.add_argument("--automata", required=True,
                         help=f"pair JSON file, or a bundled case ({', '.join(sorted(BUNDLED))})")

    plot = sub.add_parser("plot", help="write an SVG chart from a CSV produced by this tool")
    plot.add_argument("--in", dest="inp", required=True, help="queries CSV (kind=queries) or results CSV")
    plot.add_argument("--kind", required=True, choices=["queries", "failure"])
    plot.add_argument("--out", required=True, help="SVG output path")
    return parser


def resolve_seed(flag: Optional[int]) -> int:
    if flag is not None:
        return flag
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise ConfigError("seed", f"${SEED_ENV} is not an integer: {env!r}") from None
    return 0


def _stem(out: Path) -> Path:
    return out.with_suffix("") if out.suffix else out


def cmd_run(args: argparse.Namespace) -> int:
    try:
        cfg = ExperimentConfig(
            domain=args.domain, case=args.case, oracle=args.oracle, policy=args.policy,
            seed=resolve_seed(args.seed), epochs=args.epochs, test_episodes=args.test_episodes,
            beta_ent=args.beta_ent, tau=args.tau, beta_util=args.beta_util,
            alpha=args.alpha, gamma=args.gamma, epsilon=args.epsilon,
        )
    except ConfigError as exc:
        flag = FLAG_FOR_FIELD.get(exc.field, exc.field)
        return _usage_error(f"{flag}: {exc.message}")
    out = Path(args.out)
    if not out.parent.exists():
        return _usage_error(f"--out: directory {out.parent} does not exist")

    try:
        result = harness.run(cfg)
        stem = _stem(out)
        harness.write_rows(out, harness.RESULT_FIELDS, [result.result_row()])
        harness.write_records(f"{stem}.records.csv", result.records)
        harness.write_rows(f"{stem}.queries.csv", harness.QUERY_FIELDS, harness.query_rows(result))
        if result.net is not None:
            result.net.save(f"{stem}.net.json")
        if result.qtable is not None:
            result.qtable.dump_csv(f"{stem}.qtable.csv")
        if cfg.domain == "lander":
            harness.write_trajectory(f"{stem}.trajectory.csv", result.trajectory)
    except OSError as exc:
        print(f"qsc: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    m = result.metrics
    print(f"{cfg.case_label} oracle={cfg.oracle} policy={cfg.policy} seed={cfg.seed} "
          f"failure_pct={m.failure_pct:.2f} queries_per_episode={m.queries_per_episode:.2f} "
          f"total_reward={m.total_reward:.2f}")
    return EXIT_OK


def format_table(aggregate: list[dict]) -> str:
    """Failure % as mean ± stdev, one row per (case, oracle), one column per policy."""
    policies = [p for p in harness.POLICIES if any(a["policy"] == p for a in aggregate)]
    by_key = {(a["case"], a["oracle"], a["policy"]): a for a in aggregate}
    cases = list(dict.fromkeys(a["case"] for a in aggregate))
    oracles = [o for o in ("teacher", "expert") if any(a["oracle"] == o for a in aggregate)] or ["none"]
    header = ["case", "O"] + policies
    lines = []
    for case in cases:
        for oracle in oracles:
            row = [case, oracle[0].upper()]
            for p in policies:
                a = by_key.get((case, oracle, p)) or by_key.get((case, "none", p))
                row.append("-" if a is None else f"{a['failure_pct_mean']:.2f} ± {a['failure_pct_std']:.2f}")
            lines.append(row)
    widths = [max(len(str(r[i])) for r in [header] + lines) for i in range(len(header))]
    fmt = lambda r: "  ".join(str(c).ljust(w) for c, w in zip(r, widths)).rstrip()
    return "\n".join([fmt(header), fmt(["-" * w for w in widths])] + [fmt(r) for r in lines])


def cmd_suite(args: argparse.Namespace) -> int:
    path = Path(args.config)
    if not path.is_file():
        return _usage_error(f"--config: no such file {path}")
    try:
        suite = SuiteConfig.from_json(json.loads(path.read_text(encoding="utf-8")))
        if args.out:
            suite.out = args.out
        if args.workers:
            suite.workers = args.workers
        if suite.domain not in harness.DOMAINS:
            raise ConfigError("domain", f"unknown domain {suite.domain!r}")
        harness.suite_cells(suite)
    except (json.JSONDecodeError, TypeError) as exc:
        return _usage_error(f"--config: {exc}")
    except ConfigError as exc:
        return _usage_error(f"--config: {exc}")
    res = harness.run_suite(suite)
    print(format_table(res.aggregate))
    for err in res.errors:
        print(f"cell failed: {err}", file=sys.stderr)
    return EXIT_RUNTIME if res.errors else EXIT_OK


def cmd_inspect(args: argparse.Namespace) -> int:
    try:
        if args.automata.replace("-", "_") in BUNDLED and not Path(args.automata).exists():
            control, env = bundled(args.automata)
        else:
            control, env = read_pair(args.automata)
    except (OSError, AutomatonError) as exc:
        return _usage_error(f"--automata: {exc}")
    for role, auto in (("control", control), ("env", env)):
        print(f"{role}: {auto.name}")
        print(f"  states: {', '.join(auto.states)} (initial {auto.initial})")
        print(f"  alphabet: {{{', '.join(auto.actions)}}}")
        for s in auto.states:
            print(f"  en({s}) = {{{','.join(auto.enabled(s))}}}")
    print("valid: yes")
    return EXIT_OK


def cmd_plot(args: argparse.Namespace) -> int:
    try:
        rows = harness.read_rows(args.inp)
        svg = queries_svg(rows) if args.kind == "queries" else failure_svg(rows)
    except (OSError, PlotError) as exc:
        return _usage_error(f"--in: {exc}")
    Path(args.out).write_text(svg, encoding="utf-8")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "suite": cmd_suite, "inspect": cmd_inspect, "plot": cmd_plot}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
