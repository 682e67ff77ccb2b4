"""Parameterized distributions over length-n bitstrings.

Two families share one interface: a Bernoulli product with one logit per site,
and a masked autoregressive network with a single hidden layer in which output
i depends only on inputs before i. Both expose exact log-probabilities, exact
score vectors, i.i.d. sampling, and exact top-R state selection.
"""

from __future__ import annotations

import heapq
import json
from typing import Protocol

import numpy as np

from .linalg import bits_of_index, parse_bits


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=float)))


def _log_sigmoid(x):
    # -logaddexp keeps logs finite for any finite logit.
    return -np.logaddexp(0.0, -np.asarray(x, dtype=float))


class Distribution(Protocol):
    n: int

    @property
    def num_params(self) -> int: ...

    def log_prob(self, bits) -> float: ...

    def grad_log_prob(self, bits) -> np.ndarray: ...

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray: ...

    def conditional_logs(self, prefix: np.ndarray, position: int) -> tuple[float, float]: ...

    def get_params(self) -> np.ndarray: ...

    def set_params(self, params: np.ndarray) -> None: ...


class BernoulliProduct:
    """Site-wise independent bits, p_i = sigmoid(logit_i)."""

    kind = "bernoulli"

    def __init__(self, n: int, logits=None):
        if n < 1:
            raise ValueError("need at least one site")
        self.n = n
        self.logits = np.zeros(n) if logits is None else np.asarray(logits, dtype=float)
        if self.logits.shape != (n,):
            raise ValueError(f"expected {n} logits, got shape {self.logits.shape}")

    @property
    def num_params(self) -> int:
        return self.n

    @property
    def probs(self) -> np.ndarray:
        return _sigmoid(self.logits)

    def log_prob(self, bits) -> float:
        bits = parse_bits(bits, self.n)
        signed = np.where(bits, -self.logits, self.logits)
        return float(-np.sum(np.logaddexp(0.0, signed)))

    def grad_log_prob(self, bits) -> np.ndarray:
        bits = parse_bits(bits, self.n)
        return bits - self.probs

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        if count < 1:
            raise ValueError("count must be positive")
        u = rng.random((count, self.n))
        return (u < self.probs).astype(np.uint8)

    def conditional_logs(self, prefix: np.ndarray, position: int) -> tuple[float, float]:
        l = self.logits[position]
        return float(_log_sigmoid(-l)), float(_log_sigmoid(l))

    def get_params(self) -> np.ndarray:
        return self.logits.copy()

    def set_params(self, params: np.ndarray) -> None:
        params = np.asarray(params, dtype=float)
        if params.shape != (self.n,):
            raise ValueError("parameter vector has wrong length")
        self.logits = params.copy()

    def to_json(self) -> str:
        return json.dumps({"kind": self.kind, "n": self.n, "logits": self.logits.tolist()})


class AutoregressiveNet:
    """Masked single-hidden-layer network over bit conditionals.

    Hidden unit j carries a degree in 1..n-1 and sees inputs with smaller
    degree; output i only collects hidden units of degree <= i, which makes
    the product of conditionals an exact autoregressive factorization. The
    hidden activation is tanh and conditionals are logistic.
    """

    kind = "autoregressive"

    def __init__(self, n: int, w1, b1, w2, b2, hidden: int = 50):
        if n < 2:
            raise ValueError("autoregressive network needs n >= 2")
        self.n = n
        self.hidden = hidden
        self.w1 = np.asarray(w1, dtype=float)
        self.b1 = np.asarray(b1, dtype=float)
        self.w2 = np.asarray(w2, dtype=float)
        self.b2 = np.asarray(b2, dtype=float)
        if self.w1.shape != (hidden, n) or self.w2.shape != (n, hidden):
            raise ValueError("weight matrices have wrong shapes")
        degrees = np.arange(hidden) % (n - 1) + 1
        self.mask1 = (np.arange(n)[None, :] < degrees[:, None]).astype(float)
        self.mask2 = (degrees[None, :] <= np.arange(n)[:, None]).astype(float)

    @classmethod
    def create(cls, n: int, rng: np.random.Generator, hidden: int = 50,
               init_scale: float = 0.01) -> "AutoregressiveNet":
        w1 = rng.normal(0.0, init_scale, size=(hidden, n))
        w2 = rng.normal(0.0, init_scale, size=(n, hidden))
        return cls(n, w1, np.zeros(hidden), w2, np.zeros(n), hidden=hidden)

    @property
    def num_params(self) -> int:
        return self.w1.size + self.b1.size + self.w2.size + self.b2.size

    def _logits(self, x: np.ndarray) -> np.ndarray:
        """Conditional logits for inputs x of shape (..., n)."""
        h = np.tanh(x @ (self.w1 * self.mask1).T + self.b1)
        return h @ (self.w2 * self.mask2).T + self.b2

    def log_prob(self, bits) -> float:
        bits = parse_bits(bits, self.n)
        o = self._logits(bits.astype(float))
        signed = np.where(bits, -o, o)
        return float(-np.sum(np.logaddexp(0.0, signed)))

    def grad_log_prob(self, bits) -> np.ndarray:
        bits = parse_bits(bits, self.n)
        x = bits.astype(float)
        w1m = self.w1 * self.mask1
        w2m = self.w2 * self.mask2
        pre = w1m @ x + self.b1
        h = np.tanh(pre)
        o = w2m @ h + self.b2
        d_out = x - _sigmoid(o)
        d_w2 = (d_out[:, None] * h[None, :]) * self.mask2
        d_h = w2m.T @ d_out
        d_pre = d_h * (1.0 - h * h)
        d_w1 = (d_pre[:, None] * x[None, :]) * self.mask1
        return np.concatenate([d_w1.ravel(), d_pre, d_w2.ravel(), d_out])

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        if count < 1:
            raise ValueError("count must be positive")
        out = np.zeros((count, self.n))
        for i in range(self.n):
            p1 = _sigmoid(self._logits(out)[:, i])
            out[:, i] = rng.random(count) < p1
        return out.astype(np.uint8)

    def conditional_logs(self, prefix: np.ndarray, position: int) -> tuple[float, float]:
        x = np.zeros(self.n)
        x[: len(prefix)] = prefix
        o = float(self._logits(x)[position])
        return float(_log_sigmoid(-o)), float(_log_sigmoid(o))

    def get_params(self) -> np.ndarray:
        return np.concatenate(
            [self.w1.ravel(), self.b1, self.w2.ravel(), self.b2]
        )

    def set_params(self, params: np.ndarray) -> None:
        params = np.asarray(params, dtype=float)
        if params.shape != (self.num_params,):
            raise ValueError("parameter vector has wrong length")
        k = 0
        for name, arr in (("w1", self.w1), ("b1", self.b1), ("w2", self.w2), ("b2", self.b2)):
            setattr(self, name, params[k: k + arr.size].reshape(arr.shape).copy())
            k += arr.size

    def to_json(self) -> str:
        return json.dumps(
            {
                "kind": self.kind,
                "n": self.n,
                "hidden": self.hidden,
                "w1": self.w1.tolist(),
                "b1": self.b1.tolist(),
                "w2": self.w2.tolist(),
                "b2": self.b2.tolist(),
            }
        )


def distribution_from_json(text: str):
    doc = json.loads(text)
    if doc["kind"] == "bernoulli":
        return BernoulliProduct(doc["n"], np.array(doc["logits"]))
    if doc["kind"] == "autoregressive":
        return AutoregressiveNet(
            doc["n"], np.array(doc["w1"]), np.array(doc["b1"]),
            np.array(doc["w2"]), np.array(doc["b2"]), hidden=doc["hidden"],
        )
    raise ValueError(f"unknown distribution kind {doc['kind']!r}")


def make_distribution(kind: str, n: int, rng: np.random.Generator, hidden: int = 50):
    if kind == "bernoulli":
        return BernoulliProduct(n, rng.normal(0.0, 0.01, size=n))
    if kind == "autoregressive":
        return AutoregressiveNet.create(n, rng, hidden=hidden)
    raise ValueError(f"unknown distribution kind {kind!r}")


def top_r_states(dist, r: int) -> tuple[np.ndarray, np.ndarray]:
    """The r globally most probable bitstrings with renormalized probabilities.

    Best-first search over the prefix tree: a prefix's log-probability is a
    strict upper bound on every completion, so the first r full states popped
    from the frontier are exactly the top r. Ties break toward the smaller
    bitstring integer. Output probabilities are non-increasing and sum to 1.
    """
    n = dist.n
    if not 1 <= r <= (1 << n):
        raise ValueError(f"rank {r} out of range [1, {1 << n}]")
    # entries: (-log p of prefix, zero-padded integer, depth)
    frontier: list[tuple[float, int, int]] = [(0.0, 0, 0)]
    found_idx: list[int] = []
    found_logp: list[float] = []
    while frontier and len(found_idx) < r:
        neg, padded, depth = heapq.heappop(frontier)
        if depth == n:
            found_idx.append(padded)
            found_logp.append(-neg)
            continue
        prefix = bits_of_index(padded, n)[:depth]
        log_p0, log_p1 = dist.conditional_logs(prefix, depth)
        heapq.heappush(frontier, (neg - log_p0, padded, depth + 1))
        heapq.heappush(
            frontier, (neg - log_p1, padded | (1 << (n - 1 - depth)), depth + 1)
        )
    logp = np.array(found_logp)
    probs = np.exp(logp - logp.max())
    probs /= probs.sum()
    bits = np.stack([bits_of_index(i, n) for i in found_idx])
    return bits, probs


def enumerate_probs(dist) -> np.ndarray:
    """Exact probability of every bitstring, ordered by basis-state integer.

    Enumeration oracle for tests and small-n analysis; cost 2^n log-prob calls.
    """
    dim = 1 << dist.n
    return np.exp([dist.log_prob(bits_of_index(i, dist.n)) for i in range(dim)])
