"""Experiment orchestration: configuration, seeded runs, metrics and CSV output."""

from __future__ import annotations

import csv
import dataclasses
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field, fields

import numpy as np

from .data import Dataset, load_jsonl, partition, synth_varlen, synth_window_series
from .distributed import Graph, load_graph
from .exceptions import ConfigError
from .lstm import LstmParams, as_pooling
from .state_space import LstmStateSpace, NoiseSpec
from .streams import substream
from .trainers import ALGORITHMS, TRAINERS

logger = logging.getLogger(__name__)

CSV_HEADER = ("t", "node", "algorithm", "squared_error", "cumulative_mse")


@dataclass
class ExperimentConfig:
    """All knobs of one run. Defaults follow the exchange-rate setting (n = p = 2, four-node ring)."""

    algorithm: str = "dpf"
    n: int = 2
    p: int = 2
    pooling: str = "mean"
    nodes: int = 4
    graph: str = "ring"  # ring | complete | path | isolated | path to a graph file
    particles: int = 80
    steps: int = 3
    q0: float = 0.0004
    sigma0: float | None = None  # initial EKF covariance scale; defaults to q0
    R: float = 0.01
    mu: float = 0.1
    seed: int = 0
    T: int | None = None  # rounds; None runs until the shortest node stream ends
    dataset: str = "synth_window"  # synth_window | synth_varlen | path to a JSONL file
    partition: str = "round_robin"
    init_scale: float = 0.1
    workers: int = 1
    # synth_window
    series_a1: float = 0.7
    series_a2: float = 0.2
    series_noise: float = 0.3
    # synth_varlen
    m_max: int = 5
    teacher_scale: float = 1.0
    label_noise: float = 0.01

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm must be one of {', '.join(ALGORITHMS)}, got {self.algorithm!r}")
        try:
            as_pooling(self.pooling)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        for name in ("n", "p", "nodes", "workers"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        for name in ("q0", "R", "mu", "init_scale"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.sigma0 is not None and not self.sigma0 > 0:
            raise ConfigError("sigma0 must be positive")
        if self.algorithm in ("pf", "dpf") and self.particles < 1:
            raise ConfigError("particles must be positive for particle filters")
        if self.algorithm == "dpf" and self.steps < 1:
            raise ConfigError("steps must be positive for dpf")
        if self.T is not None and self.T < 0:
            raise ConfigError("T must be non-negative")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_mapping(cls, values: dict) -> "ExperimentConfig":
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(known[key], raw)
        return cls(**kwargs)


_TYPES = {"int": int, "float": float, "str": str}


def _coerce(f, raw):
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    kind = f.type if isinstance(f.type, str) else f.type.__name__
    optional = "None" in kind
    if optional and text.lower() in ("", "none"):
        return None
    base = kind.replace("| None", "").strip()
    try:
        return _TYPES[base](text)
    except (KeyError, ValueError):
        raise ConfigError(f"cannot read {f.name}={raw!r} as {base}") from None


def parse_config(text: str) -> ExperimentConfig:
    """Parse the flat ``key = value`` config format (``#`` starts a comment)."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        sep = "=" if "=" in line else ":" if ":" in line else None
        if sep is None:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (part.strip() for part in line.split(sep, 1))
        values[key] = value
    return ExperimentConfig.from_mapping(values)


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def format_config(cfg: ExperimentConfig) -> str:
    return "".join(f"{f.name} = {getattr(cfg, f.name)}\n" for f in fields(cfg))


@dataclass
class MetricsLog:
    """Per-node prequential errors, one row per (t, node)."""

    rows: list = field(default_factory=list)  # (t, node, algorithm, squared_error, cumulative_mse)

    def __len__(self):
        return len(self.rows)

    def squared_errors(self) -> np.ndarray:
        """Squared errors as a (T, K) array."""
        if not self.rows:
            return np.zeros((0, 0))
        T = max(r[0] for r in self.rows)
        K = max(r[1] for r in self.rows) + 1
        out = np.full((T, K), np.nan)
        for t, k, _, se, _ in self.rows:
            out[t - 1, k] = se
        return out

    def network_cumulative_mse(self) -> np.ndarray:
        """Running mean over rounds of the node-averaged squared error."""
        se = self.squared_errors()
        if se.size == 0:
            return np.zeros(0)
        return np.cumsum(se.mean(axis=1)) / np.arange(1, se.shape[0] + 1)


def build_graph(cfg: ExperimentConfig) -> Graph:
    builders = {"ring": Graph.ring, "complete": Graph.complete, "path": Graph.path, "isolated": Graph.isolated}
    if cfg.graph in builders:
        return builders[cfg.graph](cfg.nodes)
    g = load_graph(cfg.graph)
    if g.K != cfg.nodes:
        raise ConfigError(f"graph file has {g.K} nodes but config asks for {cfg.nodes}")
    return g


def build_dataset(cfg: ExperimentConfig) -> Dataset:
    rounds = cfg.T if cfg.T is not None else 250
    total = cfg.nodes * rounds
    if cfg.dataset == "synth_window":
        return synth_window_series(
            cfg.seed, total + 2, cfg.series_a1, cfg.series_a2, cfg.series_noise
        )
    if cfg.dataset == "synth_varlen":
        teacher = LstmParams.random(cfg.n, cfg.p, substream(cfg.seed, "teacher"), cfg.teacher_scale)
        return synth_varlen(cfg.seed, total, cfg.p, cfg.m_max, teacher, cfg.label_noise)
    if not os.path.exists(cfg.dataset):
        raise ConfigError(f"dataset {cfg.dataset!r} is neither a generator name nor an existing file")
    return load_jsonl(cfg.dataset)


def build_trainer(cfg: ExperimentConfig, graph: Graph | None = None):
    model = LstmStateSpace(cfg.n, cfg.p, cfg.pooling)
    graph = graph if graph is not None else build_graph(cfg)
    common = dict(init_scale=cfg.init_scale, graph=graph)
    noise = None
    if cfg.algorithm != "sgd":
        noise = NoiseSpec.isotropic(model.dim, cfg.q0, cfg.R)
    cls = TRAINERS[cfg.algorithm]
    if cfg.algorithm == "sgd":
        return cls(model, cfg.nodes, cfg.seed, mu=cfg.mu, **common)
    if cfg.algorithm in ("ekf", "dekf"):
        sigma0 = cfg.q0 if cfg.sigma0 is None else cfg.sigma0
        return cls(model, cfg.nodes, cfg.seed, noise=noise, sigma0=sigma0, **common)
    if cfg.algorithm == "pf":
        return cls(model, cfg.nodes, cfg.seed, noise=noise, particles=cfg.particles, **common)
    return cls(model, cfg.nodes, cfg.seed, noise=noise, particles=cfg.particles, steps=cfg.steps, **common)


@contextmanager
def _node_map(workers: int):
    if workers <= 1:
        yield map
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        yield pool.map


def run_experiment(cfg: ExperimentConfig, dataset: Dataset | None = None, trainer=None) -> MetricsLog:
    """Prequential run: every node predicts each item before training on it."""
    if cfg.T == 0:
        return MetricsLog()
    if dataset is None:
        dataset = build_dataset(cfg)
    if dataset.p is not None and dataset.p != cfg.p:
        raise ConfigError(f"dataset has p={dataset.p} but config has p={cfg.p}")
    if trainer is None:
        trainer = build_trainer(cfg)
    log = MetricsLog()
    streams = partition(dataset, cfg.nodes, cfg.partition)
    shortest = min(len(s) for s in streams)
    T = shortest if cfg.T is None else cfg.T
    if T > shortest:
        raise ConfigError(f"T={T} rounds requested but the shortest node stream has {shortest} items")
    totals = np.zeros(cfg.nodes)
    with _node_map(cfg.workers) as map_fn:
        for t in range(1, T + 1):
            observations = [(s[t - 1].X, s[t - 1].d) for s in streams]
            try:
                d_hat = trainer.step(t, observations, map_fn)
            except (ArithmeticError, ValueError, RuntimeError) as exc:
                raise type(exc)(f"round {t}: {exc}") from exc
            for k, (_, d) in enumerate(observations):
                se = (d - float(d_hat[k])) ** 2
                totals[k] += se
                log.rows.append((t, k, cfg.algorithm, se, totals[k] / t))
    return log


def _fmt(x) -> str:
    return format(float(x), ".17g")


def emit_csv(log: MetricsLog, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for t, k, alg, se, cm in sorted(log.rows, key=lambda r: (r[0], r[1])):
            writer.writerow((t, k, alg, _fmt(se), _fmt(cm)))


def read_csv(path) -> MetricsLog:
    log = MetricsLog()
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != CSV_HEADER:
            raise ValueError(f"unexpected CSV header {header}")
        for t, k, alg, se, cm in reader:
            log.rows.append((int(t), int(k), alg, float(se), float(cm)))
    return log


SWEEP_PARAMS = {"N": "particles", "particles": "particles", "s": "steps", "steps": "steps"}


def sweep(cfg: ExperimentConfig, param: str, values, dataset: Dataset | None = None) -> list:
    """Run one experiment per value of ``param`` (N or s); returns ``(value, log, seconds)`` tuples."""
    if param not in SWEEP_PARAMS:
        raise ConfigError(f"sweep parameter must be N or s, got {param!r}")
    values = list(values)
    if not values:
        raise ConfigError("sweep needs at least one value")
    if dataset is None:
        dataset = build_dataset(cfg)
    results = []
    for value in values:
        run_cfg = cfg.replace(**{SWEEP_PARAMS[param]: value})
        start = time.perf_counter()
        log = run_experiment(run_cfg, dataset)
        elapsed = time.perf_counter() - start
        logger.info("sweep %s=%s: %.3f s", param, value, elapsed)
        results.append((value, log, elapsed))
    return results


def time_rounds(cfg: ExperimentConfig, rounds: int = 5, repeats: int = 3, dataset: Dataset | None = None) -> float:
    """Best-of-``repeats`` mean wall-clock seconds per training round."""
    cfg = cfg.replace(T=rounds)
    if dataset is None:
        dataset = build_dataset(cfg)
    streams = partition(dataset, cfg.nodes, cfg.partition)
    best = np.inf
    for _ in range(repeats):
        trainer = build_trainer(cfg)
        start = time.perf_counter()
        for t in range(1, rounds + 1):
            trainer.step(t, [(s[t - 1].X, s[t - 1].d) for s in streams])
        best = min(best, (time.perf_counter() - start) / rounds)
    return best
