"""Datasets of labelled variable-length sequences.

On disk a dataset is JSON Lines, one record per sequence::

    {"seq": [[x_11, ..., x_1p], ..., [x_m1, ..., x_mp]], "label": d}

Each inner array is one input column of length ``p``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple

import numpy as np

from .exceptions import DimensionError
from .lstm import LstmParams, check_sequence, predict, run_sequence


class LabeledSequence(NamedTuple):
    X: np.ndarray  # (m, p)
    d: float


@dataclass
class Dataset:
    items: list = field(default_factory=list)
    p: int | None = None

    def __post_init__(self):
        for k, item in enumerate(self.items):
            if self.p is None:
                self.p = item.X.shape[1]
            if item.X.shape[1] != self.p:
                raise DimensionError(f"item {k} has {item.X.shape[1]} features, expected {self.p}")
            if not math.isfinite(item.d):
                raise ValueError(f"item {k} has a non-finite label")

    def __len__(self):
        return len(self.items)

    def __iter__(self) -> Iterator[LabeledSequence]:
        return iter(self.items)

    def __getitem__(self, k):
        return self.items[k]

    @property
    def feature_dim(self) -> int:
        if self.p is None:
            raise ValueError("empty dataset has no feature dimension")
        return self.p

    @property
    def labels(self) -> np.ndarray:
        return np.array([item.d for item in self.items], dtype=float)


def _reject_constant(token):
    raise ValueError(f"non-finite literal {token} is not allowed")


def _parse_line(line: str, lineno: int, p: int | None) -> LabeledSequence:
    try:
        obj = json.loads(line, parse_constant=_reject_constant, parse_int=float)
    except ValueError as exc:
        raise ValueError(f"line {lineno}: {exc}") from None
    if not isinstance(obj, dict) or "seq" not in obj or "label" not in obj:
        raise ValueError(f"line {lineno}: expected an object with 'seq' and 'label'")
    seq, label = obj["seq"], obj["label"]
    if isinstance(label, bool) or not isinstance(label, (int, float)):
        raise ValueError(f"line {lineno}: label must be a number")
    if not isinstance(seq, list) or not seq:
        raise ValueError(f"line {lineno}: 'seq' must be a non-empty array of columns")
    width = p
    for col in seq:
        if not isinstance(col, list) or not col:
            raise ValueError(f"line {lineno}: every column must be a non-empty array")
        if any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in col):
            raise ValueError(f"line {lineno}: non-numeric entry in 'seq'")
        if width is None:
            width = len(col)
        if len(col) != width:
            raise ValueError(f"line {lineno}: column of length {len(col)}, expected {width}")
    return LabeledSequence(np.array(seq, dtype=float), float(label))


def read_jsonl(lines) -> Dataset:
    items, p = [], None
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        item = _parse_line(line, lineno, p)
        p = item.X.shape[1]
        items.append(item)
    return Dataset(items, p)


def load_jsonl(path) -> Dataset:
    with open(path, encoding="utf-8") as fh:
        return read_jsonl(fh)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_jsonl(dataset: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for item in dataset:
            cols = ", ".join("[" + ", ".join(_fmt(v) for v in col) + "]" for col in item.X)
            fh.write(f'{{"seq": [{cols}], "label": {_fmt(item.d)}}}\n')


def synth_window_series(seed: int, T: int, a1: float, a2: float, noise_sd: float) -> Dataset:
    """Second-order autoregressive series cut into two-lag windows.

    ``v_t = a1 v_{t-1} + a2 v_{t-2} + noise`` with ``v_1 = v_2 = 0.1``; item
    ``t`` (for ``t = 3..T``) has input ``[[v_{t-1}, v_{t-2}]]`` and label ``v_t``.
    """
    if T < 3:
        raise ValueError("T must be at least 3")
    if noise_sd < 0:
        raise ValueError("noise_sd must be non-negative")
    if noise_sd > 0:
        roots = np.roots([1.0, -a1, -a2])
        if np.any(np.abs(roots) >= 1.0):
            raise ValueError("unstable series: autoregressive roots on or outside the unit circle")
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, noise_sd, T) if noise_sd > 0 else np.zeros(T)
    v = np.empty(T + 1)
    v[1] = v[2] = 0.1
    items = []
    for t in range(3, T + 1):
        v[t] = a1 * v[t - 1] + a2 * v[t - 2] + noise[t - 1]
        items.append(LabeledSequence(np.array([[v[t - 1], v[t - 2]]]), float(v[t])))
    return Dataset(items, 2)


def synth_varlen(
    seed: int, T: int, p: int, m_max: int, teacher: LstmParams, noise_var: float = 0.01
) -> Dataset:
    """Sequences of random length labelled by a fixed teacher LSTM plus Gaussian noise."""
    if m_max < 1:
        raise ValueError("m_max must be at least 1")
    if teacher.p != p:
        raise DimensionError("teacher input dimension does not match p")
    rng = np.random.default_rng(seed)
    items = []
    for _ in range(T):
        m = int(rng.integers(1, m_max + 1))
        X = rng.standard_normal((m, p))
        ybar, _ = run_sequence(teacher, X)
        d = predict(teacher.w, ybar)
        if noise_var > 0:
            d += float(rng.normal(0.0, math.sqrt(noise_var)))
        items.append(LabeledSequence(X, d))
    return Dataset(items, p)


def partition(dataset: Dataset, K: int, scheme: str = "round_robin") -> list:
    """Split a dataset into ``K`` per-node streams (lists of items)."""
    if K < 1:
        raise ValueError("K must be at least 1")
    if K > len(dataset):
        raise ValueError(f"cannot split {len(dataset)} items across {K} nodes")
    items = list(dataset)
    if scheme == "round_robin":
        return [items[k::K] for k in range(K)]
    if scheme == "contiguous":
        bounds = np.linspace(0, len(items), K + 1).round().astype(int)
        return [items[bounds[k] : bounds[k + 1]] for k in range(K)]
    raise ValueError(f"unknown partition scheme {scheme!r}")


def as_sequences(Xs, p: int | None = None) -> list:
    """Validate a list of sequences, each (m, p)."""
    out = []
    for k, X in enumerate(Xs):
        try:
            out.append(check_sequence(X, p))
        except ValueError as exc:
            raise type(exc)(f"sequence {k}: {exc}") from None
        p = out[-1].shape[1]
    return out
