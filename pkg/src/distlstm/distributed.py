"""Node graph and the two distributed trainers.

* DEKF: every node applies the scalar measurement updates of all its
  neighbours, then takes a Metropolis-weighted convex combination of the
  neighbours' updated means.
* MCDPF: particles random-walk the graph for ``s`` steps; at each visit the
  particle's weight is multiplied by the visited node's likelihood raised to
  ``2|E| / (s * deg)``, after which every node resamples its residents.

Per-node work takes an optional ``map_fn`` (e.g. ``executor.map``); random
draws come from ``rng_for(purpose, node, ...)`` substreams, so the result
does not depend on scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .exceptions import CovarianceError, EmptyNodeError
from .filters import (
    EkfState,
    ParticleSet,
    _scalar_update,
    ekf_time_update,
    gaussian_loglik,
    normalize,
    pf_estimate,
    pf_predict,
    pf_weight_update,
    resample,
)


class Graph:
    """Undirected node graph with a particle transition matrix.

    ``neighbors[k]`` lists the nodes adjacent to ``k``; ``k`` itself is
    always added. The default transition matrix is the uniform walk over
    ``N_k \\ {k}`` (a self-loop for an isolated node).
    """

    def __init__(self, neighbors: Sequence[Iterable[int]], transition=None):
        K = len(neighbors)
        if K < 1:
            raise ValueError("a graph needs at least one node")
        nbrs = []
        for k, row in enumerate(neighbors):
            s = {int(l) for l in row} | {k}
            if min(s) < 0 or max(s) >= K:
                raise ValueError(f"node {k} lists a neighbour outside 0..{K - 1}")
            nbrs.append(sorted(s))
        for k in range(K):
            for l in nbrs[k]:
                if k not in nbrs[l]:
                    raise ValueError(f"neighbour relation is not symmetric: {k}->{l}")
        self.neighbors = nbrs
        self.edges = sorted({(k, l) for k in range(K) for l in nbrs[k] if k < l})
        if transition is None:
            transition = np.zeros((K, K))
            for k in range(K):
                others = [l for l in nbrs[k] if l != k]
                if others:
                    transition[k, others] = 1.0 / len(others)
                else:
                    transition[k, k] = 1.0
        transition = np.asarray(transition, dtype=float)
        if transition.shape != (K, K):
            raise ValueError(f"transition matrix must be {K}x{K}")
        if np.any(transition < 0) or not np.allclose(transition.sum(axis=1), 1.0, atol=1e-12):
            raise ValueError("transition matrix must be row-stochastic")
        for k in range(K):
            outside = [l for l in range(K) if l not in nbrs[k] and transition[k, l] > 0]
            if outside:
                raise ValueError(f"transition from node {k} to non-neighbours {outside}")
        self.transition = transition

    @classmethod
    def ring(cls, K: int) -> "Graph":
        if K <= 2:
            return cls.complete(K)
        return cls([[(k - 1) % K, (k + 1) % K] for k in range(K)])

    @classmethod
    def complete(cls, K: int) -> "Graph":
        return cls([list(range(K)) for _ in range(K)])

    @classmethod
    def path(cls, K: int) -> "Graph":
        return cls([[l for l in (k - 1, k + 1) if 0 <= l < K] for k in range(K)])

    @classmethod
    def isolated(cls, K: int) -> "Graph":
        return cls([[] for _ in range(K)])

    @property
    def K(self) -> int:
        return len(self.neighbors)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def eta(self, k: int) -> int:
        """Neighbourhood size including the node itself."""
        return len(self.neighbors[k])

    def degree(self, k: int) -> int:
        """Number of incident edges."""
        return len(self.neighbors[k]) - 1

    def __repr__(self):
        return f"Graph(K={self.K}, edges={self.edges})"


def parse_graph(text: str) -> Graph:
    """Parse the graph file format.

    First line ``K``; then one line per node with its 0-based neighbour
    indices (blank for none, self implied); optionally ``K`` more lines
    holding the rows of an explicit transition matrix.
    """
    lines = [ln.split("#", 1)[0].rstrip() for ln in text.splitlines()]
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines or not lines[0].strip():
        raise ValueError("graph file is empty")
    K = int(lines[0])
    body = lines[1:]
    if len(body) not in (K, 2 * K):
        raise ValueError(f"graph file must have {K} neighbour lines, optionally {K} matrix rows")
    neighbors = [[int(tok) for tok in ln.replace(",", " ").split()] for ln in body[:K]]
    transition = None
    if len(body) == 2 * K:
        transition = np.array([[float(tok) for tok in ln.replace(",", " ").split()] for ln in body[K:]])
    return Graph(neighbors, transition)


def load_graph(path) -> Graph:
    with open(path, encoding="utf-8") as fh:
        return parse_graph(fh.read())


def format_graph(g: Graph, with_transition: bool = False) -> str:
    lines = [str(g.K)]
    for k, row in enumerate(g.neighbors):
        lines.append(" ".join(str(l) for l in row if l != k))
    if with_transition:
        lines.extend(" ".join(repr(float(v)) for v in row) for row in g.transition)
    return "\n".join(lines) + "\n"


def metropolis_weights(g: Graph) -> np.ndarray:
    """Metropolis combination weights; the self weight is formed in exact rationals."""
    K = g.K
    c = np.zeros((K, K))
    for k in range(K):
        rest = Fraction(1)
        for l in g.neighbors[k]:
            if l != k:
                w = Fraction(1, max(g.eta(k), g.eta(l)))
                c[k, l] = float(w)
                rest -= w
        c[k, k] = float(rest)
    return c


# -- DEKF -----------------------------------------------------------------


def dekf_predict(states, Xs, model, noise, map_fn=map):
    """Time update at every node with its own incoming sequence."""
    return list(map_fn(lambda sx: ekf_time_update(sx[0], sx[1], model, noise), zip(states, Xs)))


def dekf_update(predicted, ds, g: Graph, weights, R: float, model, map_fn=map):
    """Diffusion measurement update followed by the convex combination step.

    Node ``k`` folds in every ``l`` in its neighbourhood (ascending order),
    using ``l``'s Jacobian and label against ``k``'s own predicted label.
    """
    K = g.K
    H = [model.measurement_jacobian(s.a) for s in predicted]

    def local(k):
        phi, Phi = predicted[k].a, predicted[k].cov
        d_hat = model.measurement(predicted[k].a)
        for l in g.neighbors[k]:
            try:
                phi, Phi = _scalar_update(phi, Phi, H[l], ds[l] - d_hat, R)
            except CovarianceError as exc:
                raise CovarianceError(f"node {k}, neighbour {l}: {exc}") from None
        return phi, Phi

    local_results = list(map_fn(local, range(K)))
    out = []
    for k in range(K):
        a = sum(weights[k, l] * local_results[l][0] for l in g.neighbors[k])
        out.append(EkfState(a, local_results[k][1]))
    return out


def dekf_round(states, observations, g: Graph, weights, model, noise, map_fn=map):
    """One synchronous DEKF round: time update on each node's ``X``, then diffusion update."""
    Xs = [X for X, _ in observations]
    ds = [d for _, d in observations]
    predicted = dekf_predict(states, Xs, model, noise, map_fn)
    return dekf_update(predicted, ds, g, weights, noise.R, model, map_fn)


# -- random walk ----------------------------------------------------------


def move_particles(g: Graph, homes, rng: np.random.Generator) -> np.ndarray:
    """One step of the particle walk: new home drawn from row ``home`` of the transition matrix."""
    homes = np.asarray(homes, dtype=int)
    cdf = np.cumsum(g.transition, axis=1)[homes]
    cdf[:, -1] = 1.0
    u = rng.uniform(size=homes.size)
    return (u[:, None] >= cdf).sum(axis=1)


def random_walk(g: Graph, homes, s: int, rng: np.random.Generator):
    """Walk ``s`` steps; return final homes and visit counts ``M`` of shape (N, K)."""
    homes = np.asarray(homes, dtype=int).copy()
    visits = np.zeros((homes.size, g.K), dtype=int)
    rows = np.arange(homes.size)
    for _ in range(s):
        homes = move_particles(g, homes, rng)
        visits[rows, homes] += 1
    return homes, visits


def mcdpf_exponent(g: Graph, j: int, s: int) -> float:
    if s < 1:
        raise ValueError("number of walk steps must be at least 1")
    if g.degree(j) < 1:
        raise ValueError(f"node {j} is isolated; the particle walk is undefined there")
    return 2.0 * g.n_edges / (s * g.degree(j))


# -- MCDPF ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class McdpfProposal:
    """Particles advanced at their home node, plus what is needed to re-evaluate them elsewhere."""

    sets: list  # ParticleSet per node, proposed states
    prev: list  # pre-proposal states per node
    gamma: list  # process-noise draws per node

    def predict(self, j: int, model) -> float:
        return pf_predict(self.sets[j], model)


def mcdpf_propose(sets, Xs, model, noise, rng_for, map_fn=map) -> McdpfProposal:
    def one(j):
        ps = sets[j]
        gamma = noise.sample(rng_for("propose", j), len(ps))
        if len(ps):
            states = model.transition_batch(ps.states, Xs[j]) + gamma
        else:
            states = ps.states.copy()
        return ParticleSet(states, ps.logw, ps.home), ps.states, gamma

    parts = list(map_fn(one, range(len(sets))))
    return McdpfProposal([p[0] for p in parts], [p[1] for p in parts], [p[2] for p in parts])


def mcdpf_update(proposal: McdpfProposal, observations, g: Graph, s: int, model, R: float, rng_for):
    """Walk, weight, resample and estimate (everything after the proposal).

    A particle visiting node ``j`` is scored on ``j``'s own sequence: its
    state there is ``transition(prev, X_j) + gamma`` with the noise drawn
    at proposal, so at its home node it equals the proposal itself.

    Returns ``(sets, estimates, visits)``; ``estimates[j]`` is ``None`` when
    node ``j`` ends the round without particles.
    """
    K = g.K
    if K == 1:
        d = observations[0][1]
        ps = pf_weight_update(proposal.sets[0], d, R, model)
        ps = resample(ps, rng_for("resample", 0))
        return [ps], [pf_estimate(ps)], np.full((len(ps), 1), s)

    prev = np.concatenate(proposal.prev)
    gamma = np.concatenate(proposal.gamma)
    homes = np.concatenate([np.full(len(ps), j, dtype=int) for j, ps in enumerate(proposal.sets)])
    N = homes.size
    logw = np.zeros(N)
    visits = np.zeros((N, K), dtype=int)
    rows = np.arange(N)
    exponents = [mcdpf_exponent(g, j, s) for j in range(K)]

    def realize(idx, j):
        return model.transition_batch(prev[idx], observations[j][0]) + gamma[idx]

    for step in range(s):
        new_homes = homes.copy()
        for j in range(K):
            idx = np.flatnonzero(homes == j)
            if idx.size:
                new_homes[idx] = move_particles(g, homes[idx], rng_for("move", j, step))
        homes = new_homes
        visits[rows, homes] += 1
        for j in range(K):
            idx = np.flatnonzero(homes == j)
            if idx.size:
                pred = model.measurement_batch(realize(idx, j))
                logw[idx] += exponents[j] * gaussian_loglik(observations[j][1], pred, R)

    sets, estimates = [], []
    for j in range(K):
        idx = np.flatnonzero(homes == j)
        if idx.size == 0:
            sets.append(ParticleSet(np.zeros((0, model.dim)), np.zeros(0), np.zeros(0, dtype=int)))
            estimates.append(None)
            continue
        ps = ParticleSet(realize(idx, j), normalize(logw[idx]), homes[idx])
        ps = resample(ps, rng_for("resample", j))
        sets.append(ps)
        estimates.append(pf_estimate(ps))
    return sets, estimates, visits


def mcdpf_round(sets, observations, g: Graph, s: int, model, noise, rng_for, map_fn=map):
    """One full MCDPF round. Returns ``(sets, estimates, visits)``."""
    Xs = [X for X, _ in observations]
    proposal = mcdpf_propose(sets, Xs, model, noise, rng_for, map_fn)
    return mcdpf_update(proposal, observations, g, s, model, noise.R, rng_for)


def centralized_pf_round(sets, observations, model, noise, rng):
    """Reference particle filter that sees every node's observation.

    ``sets[j]`` holds the particles' state as seen from node ``j``; all
    sets share the same parameter block and are resampled jointly. Returns
    ``(sets, estimates)`` with one estimate per node.
    """
    K = len(sets)
    N = len(sets[0])
    gamma = noise.sample(rng, N)
    logw = np.zeros(N)
    realized = []
    for j in range(K):
        X, d = observations[j]
        A = model.transition_batch(sets[j].states, X) + gamma
        logw += gaussian_loglik(d, model.measurement_batch(A), noise.R)
        realized.append(A)
    logw = normalize(logw)
    joint = ParticleSet(np.hstack(realized), logw, np.zeros(N, dtype=int))
    joint = resample(joint, rng)
    D = model.dim
    out = [ParticleSet.uniform(joint.states[:, j * D : (j + 1) * D], j) for j in range(K)]
    return out, [pf_estimate(ps) for ps in out]
