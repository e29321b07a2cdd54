"""Training and evaluation loops, baselines, metrics and the experiment grid."""

from __future__ import annotations

import csv
import io
import json
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Iterable, Optional

import numpy as np

from . import lander
from .automata import bundled
from .heuristics import (
    Decision,
    EntropyConfig,
    QTable,
    UtilityConfig,
    decide_entropy,
    decide_rl,
    decide_utility,
    q_update,
    shaped_reward,
)
from .oracles import JointValueTable, expert, solve_joint_values, teacher, teacher_lander
from .policy import PolicyNetwork, Transition, encode_automaton_obs, select_action
from .shared_system import JointState, step_agreement, step_restriction

DOMAINS = ("automata", "lander")
CASES = ("cases", "strategy", "combination_lock")
ORACLES = ("teacher", "expert", "none")
POLICIES = (
    "no_oracle",
    "random",
    "always_train",
    "always_train_test",
    "entropy",
    "utility",
    "rl_train",
    "rl_train_test",
)
ORACLE_FREE = ("no_oracle", "random")
AUTOMATA_EPISODE_LENGTHS = tuple(range(1, 20))
AUTOMATA_TEST_LENGTH = 19

RECORD_FIELDS = ("phase", "epoch", "episode", "step", "control_state", "env_state",
                 "queried", "action", "success", "reward")
RESULT_FIELDS = ("case", "oracle", "policy", "seed", "failure_pct", "queries_per_episode", "total_reward")


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name
        self.message = message


def _norm(name: Optional[str]) -> Optional[str]:
    return None if name is None else name.replace("-", "_")


@dataclass(frozen=True)
class ExperimentConfig:
    domain: str
    oracle: str
    policy: str
    case: Optional[str] = None
    seed: int = 0
    epochs: int = 40
    test_episodes: int = 5
    beta_ent: float = 0.25
    tau: float = 0.9
    beta_util: float = 0.95
    alpha: float = 0.5
    gamma: float = 0.9
    epsilon: float = 0.05
    hidden: int = 32
    lr: float = 0.05
    truncation: int = 8

    def __post_init__(self):
        object.__setattr__(self, "case", _norm(self.case))
        object.__setattr__(self, "policy", _norm(self.policy))
        self.validate()

    def validate(self) -> None:
        if self.domain not in DOMAINS:
            raise ConfigError("domain", f"unknown domain {self.domain!r}")
        if self.domain == "automata":
            if self.case is None:
                raise ConfigError("case", "automata domain needs a case")
            if self.case not in CASES:
                raise ConfigError("case", f"unknown case {self.case!r}")
        elif self.case not in (None, "lander"):
            raise ConfigError("case", "lander domain takes no case")
        if self.oracle not in ORACLES:
            raise ConfigError("oracle", f"unknown oracle {self.oracle!r}")
        if self.domain == "lander" and self.oracle == "expert":
            raise ConfigError("oracle", "expert unavailable for lander (teacher and expert coincide)")
        if self.policy not in POLICIES:
            raise ConfigError("policy", f"unknown policy {self.policy!r}")
        if self.policy not in ORACLE_FREE and self.oracle == "none":
            raise ConfigError("oracle", f"policy {self.policy!r} needs an oracle")
        if self.epochs < 1:
            raise ConfigError("epochs", "must be >= 1")
        if self.test_episodes < 1:
            raise ConfigError("test_episodes", "must be >= 1")
        for name, lo, hi in (("tau", 0, 1), ("beta_util", 0, 1), ("alpha", 0, 1),
                             ("gamma", 0, 1), ("epsilon", 0, 1)):
            if not lo <= getattr(self, name) <= hi:
                raise ConfigError(name, f"must be in [{lo}, {hi}]")
        if self.beta_ent < 0:
            raise ConfigError("beta_ent", "must be >= 0")

    @property
    def case_label(self) -> str:
        return self.case if self.domain == "automata" else "lander"

    @property
    def uses_rl(self) -> bool:
        return self.policy in ("rl_train", "rl_train_test")


@dataclass(frozen=True)
class StepRecord:
    phase: str
    epoch: int
    episode: int
    step: int
    control_state: str
    env_state: str
    queried: bool
    action: str
    success: bool
    reward: float

    def row(self) -> list[Any]:
        return [self.phase, self.epoch, self.episode, self.step, self.control_state, self.env_state,
                int(self.queried), self.action, int(self.success), repr(self.reward)]


@dataclass(frozen=True)
class Metrics:
    failure_pct: float
    queries_per_episode: float
    total_reward: float


@dataclass
class RunResult:
    config: ExperimentConfig
    net: Optional[PolicyNetwork]
    qtable: Optional[QTable]
    records: list[StepRecord]
    train_queries: list[int]
    metrics: Optional[Metrics] = None
    trajectory: list[tuple] = field(default_factory=list)

    def result_row(self) -> dict[str, Any]:
        m = self.metrics
        return {
            "case": self.config.case_label,
            "oracle": self.config.oracle,
            "policy": self.config.policy,
            "seed": self.config.seed,
            "failure_pct": m.failure_pct,
            "queries_per_episode": m.queries_per_episode,
            "total_reward": m.total_reward,
        }


class _Streams:
    """Independent random streams per concern, all derived from one seed."""

    def __init__(self, seed: int):
        ss = np.random.SeedSequence(seed)
        net, learner, env, rl, init = ss.spawn(5)
        self.net_seed = int(net.generate_state(1)[0])
        self.learner = np.random.default_rng(learner)
        self.env = np.random.default_rng(env)
        self.rl = np.random.default_rng(rl)
        self.init = np.random.default_rng(init)


def _wants_query(cfg: ExperimentConfig, phase: str, dist: np.ndarray, qt: Optional[QTable],
                 rl_state: Any, streams: _Streams) -> bool:
    p = cfg.policy
    if p in ORACLE_FREE:
        return False
    if p == "always_train":
        return phase == "train"
    if p == "always_train_test":
        return True
    if p == "entropy":
        return decide_entropy(dist, EntropyConfig(cfg.beta_ent, cfg.tau)) is Decision.QUERY
    if p == "utility":
        return decide_utility(dist, UtilityConfig(cfg.beta_util)) is Decision.QUERY
    mode = "train_only" if p == "rl_train" else "train_and_test"
    return decide_rl(qt, rl_state, phase, mode, streams.rl) is Decision.QUERY


class _AutomataRunner:
    def __init__(self, cfg: ExperimentConfig, streams: _Streams):
        self.cfg = cfg
        self.streams = streams
        self.ctrl, self.env = bundled(cfg.case)
        self.values: Optional[JointValueTable] = (
            solve_joint_values(self.ctrl, self.env) if cfg.oracle == "teacher" else None
        )
        n_s, n_a = len(self.ctrl.states), len(self.ctrl.actions)
        self.net = PolicyNetwork(n_s * n_a, n_a, hidden=cfg.hidden, lr=cfg.lr,
                                 truncation=cfg.truncation, seed=streams.net_seed)
        self.qt = QTable(cfg.alpha, cfg.gamma, cfg.epsilon) if cfg.uses_rl else None

    def ask(self, s: JointState):
        if self.cfg.oracle == "teacher":
            return teacher(self.values, s)
        return expert(self.env, s)

    def episode(self, phase: str, epoch: int, episode: int, length: int,
                records: list[StepRecord]) -> int:
        cfg, ctrl, env, rng = self.cfg, self.ctrl, self.env, self.streams.learner
        train = phase == "train"
        self.net.reset_hidden()
        streak = 0
        s = JointState(ctrl.initial, env.initial)
        prev = 0
        queries = 0
        for t in range(length):
            en = ctrl.enabled(s.control_state)
            mask = [ctrl.action_index(a) for a in en]
            oracle_action = None
            queried = False
            if cfg.policy == "random":
                action = en[int(rng.integers(len(en)))]
            else:
                obs = encode_automaton_obs(len(ctrl.states), len(ctrl.actions),
                                           ctrl.state_index(s.control_state), prev)
                dist = self.net.forward(obs, mask)
                queried = _wants_query(cfg, phase, dist, self.qt, s.control_state, self.streams)
                action = None
                if queried:
                    queries += 1
                    candidates = sorted(a for a in self.ask(s) if a in en)
                    if candidates:
                        action = candidates[int(rng.integers(len(candidates)))]
                        oracle_action = ctrl.action_index(action)
                if action is None:
                    idx = select_action(dist, "sample" if train else "greedy", rng)
                    action = ctrl.actions[idx]
            env_en = env.enabled(s.env_state)
            a_e = env_en[int(self.streams.env.integers(len(env_en)))]
            out = step_agreement(ctrl, env, s, action, a_e)
            streak = streak + 1 if out.success else 0
            r = shaped_reward(out.success, streak)
            a_idx = ctrl.action_index(action)
            if train and cfg.policy != "random":
                self.net.update(Transition(obs, mask, a_idx, out.success, oracle_action))
            if train and self.qt is not None:
                decision = Decision.QUERY if queried else Decision.LEARNED
                q_update(self.qt, s.control_state, decision, r, out.next.control_state)
            records.append(StepRecord(phase, epoch, episode, t, s.control_state, s.env_state,
                                      queried, action, out.success, r))
            prev = a_idx
            s = out.next
        return queries

    def train(self, records: list[StepRecord]) -> list[int]:
        per_epoch = []
        for epoch in range(self.cfg.epochs):
            n = 0
            for ep, length in enumerate(AUTOMATA_EPISODE_LENGTHS):
                n += self.episode("train", epoch, ep, length, records)
            per_epoch.append(n)
        return per_epoch

    def test(self, records: list[StepRecord]) -> None:
        for ep in range(self.cfg.test_episodes):
            self.episode("test", self.cfg.epochs, ep, AUTOMATA_TEST_LENGTH, records)


def lander_obs(s: lander.LanderState, prev_inject: int) -> np.ndarray:
    x = np.zeros(len(lander.FEATURES) * lander.N_BINS + 2)
    for i, b in enumerate(lander.feature_bins(s)):
        x[i * lander.N_BINS + b] = 1.0
    x[-2 + prev_inject] = 1.0
    return x


class _LanderRunner:
    def __init__(self, cfg: ExperimentConfig, streams: _Streams):
        self.cfg = cfg
        self.streams = streams
        self.net = PolicyNetwork(len(lander.FEATURES) * lander.N_BINS + 2, 2, hidden=cfg.hidden,
                                 lr=cfg.lr, truncation=cfg.truncation, seed=streams.net_seed)
        self.qt = QTable(cfg.alpha, cfg.gamma, cfg.epsilon) if cfg.uses_rl else None

    def episode(self, phase: str, epoch: int, episode: int, records: list[StepRecord],
                trajectory: Optional[list] = None) -> int:
        cfg, rng = self.cfg, self.streams.learner
        train = phase == "train"
        self.net.reset_hidden()
        s = lander.initial_state(self.streams.init)
        prev = 0
        streak = 0
        queries = 0
        for t in range(lander.EPISODE_STEPS):
            cell = lander.discretize(s)
            engine = lander.operator_policy(s, self.streams.env)
            wanted = int(teacher_lander(s, engine))
            obs = lander_obs(s, prev)
            oracle_action = None
            queried = False
            if cfg.policy == "random":
                inject = int(rng.integers(2))
            else:
                dist = self.net.forward(obs, [0, 1])
                queried = _wants_query(cfg, phase, dist, self.qt, cell, self.streams)
                if queried:
                    queries += 1
                    inject = oracle_action = wanted
                else:
                    inject = select_action(dist, "sample" if train else "greedy", rng)
            success = inject == wanted
            out = step_restriction(s, engine, bool(inject))
            r = lander.reward(s, out.next, out.fired, engine)
            nxt = out.next
            if lander.detect_terminal(nxt) is not lander.Status.FLYING:
                nxt = lander.initial_state(self.streams.init)
            streak = streak + 1 if success else 0
            if train and cfg.policy != "random":
                self.net.update(Transition(obs, [0, 1], inject, success, oracle_action))
            if train and self.qt is not None:
                decision = Decision.QUERY if queried else Decision.LEARNED
                q_update(self.qt, cell, decision, shaped_reward(success, streak), lander.discretize(nxt))
            records.append(StepRecord(phase, epoch, episode, t, str(cell), engine.name.lower(),
                                      queried, "inject" if inject else "hold", success, r))
            if trajectory is not None:
                trajectory.append((t, *s.as_tuple(), engine.name.lower(), inject, int(success), r))
            prev = inject
            s = nxt
        return queries

    def train(self, records: list[StepRecord]) -> list[int]:
        return [self.episode("train", epoch, 0, records) for epoch in range(self.cfg.epochs)]

    def test(self, records: list[StepRecord]) -> None:
        self.trajectory = []
        for ep in range(self.cfg.test_episodes):
            self.episode("test", self.cfg.epochs, ep, records, self.trajectory)


def _runner(cfg: ExperimentConfig):
    streams = _Streams(cfg.seed)
    if cfg.domain == "automata":
        return _AutomataRunner(cfg, streams)
    return _LanderRunner(cfg, streams)


def train(cfg: ExperimentConfig) -> tuple[RunResult, Any]:
    """Train per ``cfg``; returns the partial result and the live runner for evaluation."""
    runner = _runner(cfg)
    records: list[StepRecord] = []
    per_epoch = runner.train(records)
    net = None if cfg.policy == "random" else runner.net
    return RunResult(cfg, net, runner.qt, records, per_epoch), runner


def compute_metrics(records: Iterable[StepRecord], test_episodes: int) -> Metrics:
    steps = fails = queries = 0
    total = 0.0
    for rec in records:
        if rec.phase != "test":
            continue
        steps += 1
        fails += not rec.success
        queries += rec.queried
        total += rec.reward
    if steps == 0:
        raise ValueError("no test records")
    return Metrics(100.0 * fails / steps, queries / test_episodes, total / test_episodes)


def evaluate(result: RunResult, runner: Any) -> Metrics:
    """Frozen-learner test episodes appended to ``result.records``."""
    runner.test(result.records)
    result.trajectory = getattr(runner, "trajectory", [])
    result.metrics = compute_metrics(result.records, result.config.test_episodes)
    return result.metrics


def run(cfg: ExperimentConfig) -> RunResult:
    result, runner = train(cfg)
    evaluate(result, runner)
    return result


# --- persistence -----------------------------------------------------------------

def records_csv(records: Iterable[StepRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RECORD_FIELDS)
    for rec in records:
        w.writerow(rec.row())
    return buf.getvalue()


def write_records(path: str | Path, records: Iterable[StepRecord]) -> None:
    Path(path).write_text(records_csv(records), encoding="utf-8")


def read_records(path: str | Path) -> list[StepRecord]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out.append(StepRecord(row["phase"], int(row["epoch"]), int(row["episode"]), int(row["step"]),
                                  row["control_state"], row["env_state"], row["queried"] == "1",
                                  row["action"], row["success"] == "1", float(row["reward"])))
    return out


TRAJECTORY_FIELDS = ("step", "x", "y", "angle", "vx", "vy", "omega", "engine", "inject", "success", "reward")


def write_trajectory(path: str | Path, trajectory: Iterable[tuple]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_FIELDS)
        for row in trajectory:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def _fmt(v: Any) -> str:
    return repr(v) if isinstance(v, float) else str(v)


def write_rows(path: str | Path, header: Iterable[str], rows: Iterable[dict[str, Any]]) -> None:
    header = list(header)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(row[k]) for k in header])


def query_rows(result: RunResult) -> list[dict[str, Any]]:
    cfg = result.config
    return [
        {"case": cfg.case_label, "oracle": cfg.oracle, "policy": cfg.policy, "seed": cfg.seed,
         "epoch": i + 1, "queries": n}
        for i, n in enumerate(result.train_queries)
    ]


QUERY_FIELDS = ("case", "oracle", "policy", "seed", "epoch", "queries")
AGGREGATE_FIELDS = ("case", "oracle", "policy", "n",
                    "failure_pct_mean", "failure_pct_std",
                    "queries_per_episode_mean", "queries_per_episode_std",
                    "total_reward_mean", "total_reward_std")


def aggregate(rows: Iterable[dict[str, Any]]) -> list[dict[str, Any]]:
    """Mean and sample stdev of each metric per (case, oracle, policy)."""
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        groups.setdefault((row["case"], row["oracle"], row["policy"]), []).append(row)
    out = []
    for (case, oracle, policy), rs in groups.items():
        agg: dict[str, Any] = {"case": case, "oracle": oracle, "policy": policy, "n": len(rs)}
        for m in ("failure_pct", "queries_per_episode", "total_reward"):
            vals = [float(r[m]) for r in rs]
            agg[f"{m}_mean"] = statistics.fmean(vals)
            agg[f"{m}_std"] = statistics.stdev(vals) if len(vals) > 1 else 0.0
        out.append(agg)
    return out


# --- suite -----------------------------------------------------------------------

@dataclass
class SuiteConfig:
    domain: str = "automata"
    cases: list[str] = field(default_factory=lambda: list(CASES))
    oracles: list[str] = field(default_factory=lambda: ["teacher", "expert"])
    policies: list[str] = field(default_factory=lambda: list(POLICIES))
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    epochs: int = 40
    test_episodes: int = 5
    beta_ent: float = 0.25
    tau: float = 0.9
    beta_util: float = 0.95
    alpha: float = 0.5
    gamma: float = 0.9
    epsilon: float = 0.05
    out: Optional[str] = None
    workers: int = 1

    @classmethod
    def from_json(cls, doc: dict[str, Any]) -> "SuiteConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown suite config field")
        cfg = cls(**doc)
        cfg.cases = [_norm(c) for c in cfg.cases]
        cfg.policies = [_norm(p) for p in cfg.policies]
        return cfg


def suite_cells(suite: SuiteConfig) -> list[ExperimentConfig]:
    """Every (case, oracle, policy, seed) run; oracle-free baselines run once with oracle ``none``."""
    cases = suite.cases if suite.domain == "automata" else [None]
    oracles = [o for o in suite.oracles if not (suite.domain == "lander" and o == "expert")]
    shared = dict(epochs=suite.epochs, test_episodes=suite.test_episodes, beta_ent=suite.beta_ent,
                  tau=suite.tau, beta_util=suite.beta_util, alpha=suite.alpha, gamma=suite.gamma,
                  epsilon=suite.epsilon)
    cells = []
    for case in cases:
        for policy in suite.policies:
            for oracle in (["none"] if policy in ORACLE_FREE else oracles):
                for seed in suite.seeds:
                    cells.append(ExperimentConfig(domain=suite.domain, case=case, oracle=oracle,
                                                  policy=policy, seed=seed, **shared))
    return cells


@dataclass
class SuiteResult:
    rows: list[dict[str, Any]]
    aggregate: list[dict[str, Any]]
    queries: list[dict[str, Any]]
    errors: list[dict[str, Any]]
    runs: list[RunResult] = field(default_factory=list)


def _run_cell(cfg: ExperimentConfig) -> tuple[ExperimentConfig, Optional[RunResult], Optional[str]]:
    try:
        return cfg, run(cfg), None
    except Exception as exc:  # recorded per cell, the suite keeps going
        return cfg, None, f"{type(exc).__name__}: {exc}"


def run_suite(suite: SuiteConfig) -> SuiteResult:
    cells = suite_cells(suite)
    if suite.workers > 1:
        with ProcessPoolExecutor(max_workers=suite.workers) as pool:
            outcomes = list(pool.map(_run_cell, cells))
    else:
        outcomes = [_run_cell(c) for c in cells]

    rows, queries, errors, runs = [], [], [], []
    for cfg, result, err in outcomes:
        if err is not None:
            errors.append({"case": cfg.case_label, "oracle": cfg.oracle, "policy": cfg.policy,
                           "seed": cfg.seed, "error": err})
            continue
        runs.append(result)
        rows.append(result.result_row())
        queries.extend(query_rows(result))
    res = SuiteResult(rows, aggregate(rows), queries, errors, runs)
    if suite.out:
        write_suite(suite.out, res)
    return res


def run_name(cfg: ExperimentConfig) -> str:
    return f"{cfg.case_label}__{cfg.oracle}__{cfg.policy}__seed{cfg.seed}"


def write_suite(out_dir: str | Path, res: SuiteResult) -> None:
    out = Path(out_dir)
    (out / "records").mkdir(parents=True, exist_ok=True)
    write_rows(out / "results.csv", RESULT_FIELDS, res.rows)
    write_rows(out / "aggregate.csv", AGGREGATE_FIELDS, res.aggregate)
    write_rows(out / "queries.csv", QUERY_FIELDS, res.queries)
    if res.errors:
        write_rows(out / "errors.csv", ("case", "oracle", "policy", "seed", "error"), res.errors)
    for r in res.runs:
        write_records(out / "records" / f"{run_name(r.config)}.csv", r.records)


def read_rows(path: str | Path) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def config_to_json(cfg: ExperimentConfig) -> str:
    return json.dumps(asdict(cfg), sort_keys=True)
