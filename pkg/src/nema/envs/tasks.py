"""Fitness tasks behind one contract.

Every task exposes the episodic interface (``reset``/``step``) and a batched
``evaluate(genomes, seeds)`` used by the optimizers. ``evaluate`` returns
``-inf`` for individuals whose rollout produced non-finite values; a row's
fitness never depends on which other genomes share the call.
"""

from __future__ import annotations

from typing import Protocol, Sequence

import numpy as np

from ..network import Genome, NetworkSpec, PolicyBatch
from .mnist import MnistDataset, accuracy
from .swimmer import EpisodeDone, SwimmerConfig, SwimmerEnv, advance, observe, rest_state

FAILURE = -np.inf


class Task(Protocol):
    obs_dim: int
    action_dim: int
    episode_length: int

    def reset(self, seed: int | None = None) -> np.ndarray: ...

    def step(self, action) -> tuple[np.ndarray, float, bool]: ...

    def evaluate(self, genomes: Sequence[Genome], seeds: Sequence[int]) -> np.ndarray: ...


class SwimmerTask:
    """Episode return of each genome's policy driving its own swimmer."""

    def __init__(self, spec: NetworkSpec, cfg: SwimmerConfig | None = None):
        self.spec = spec
        self.cfg = cfg or SwimmerConfig()
        if spec.io.obs_dim != self.cfg.obs_dim or spec.io.action_dim != self.cfg.action_dim:
            raise ValueError(
                f"network io ({spec.io.obs_dim}, {spec.io.action_dim}) does not fit a "
                f"{self.cfg.links}-link swimmer ({self.cfg.obs_dim}, {self.cfg.action_dim})"
            )
        self._env = SwimmerEnv(self.cfg)

    obs_dim = property(lambda self: self.cfg.obs_dim)
    action_dim = property(lambda self: self.cfg.action_dim)
    episode_length = property(lambda self: self.cfg.episode_length)

    def reset(self, seed: int | None = None) -> np.ndarray:
        return self._env.reset(seed)

    def step(self, action) -> tuple[np.ndarray, float, bool]:
        return self._env.step(action)

    def evaluate(self, genomes: Sequence[Genome], seeds: Sequence[int] = ()) -> np.ndarray:
        if len(genomes) == 0:
            return np.zeros(0)
        policy = PolicyBatch(self.spec, list(genomes))
        net = policy.reset()
        body = rest_state(self.cfg, len(genomes))
        obs = observe(body)
        total = np.zeros(len(genomes))
        failed = np.zeros(len(genomes), dtype=bool)
        for _ in range(self.cfg.episode_length):
            net, action = policy.step(net, obs)
            failed |= ~np.all(np.isfinite(action), axis=1)
            action[failed] = 0.0
            body, reward = advance(self.cfg, body, action)
            total += reward
            obs = observe(body)
        failed |= ~np.isfinite(total)
        total[failed] = FAILURE
        return total


def mnist_fitness(genome: Genome, spec: NetworkSpec, data: MnistDataset, subset_size: int, seed: int) -> float:
    """Accuracy of ``genome`` on a seed-determined subset of ``data``."""
    return MnistTask(spec, data, subset_size, seed).evaluate([genome])[0]


class MnistTask:
    """Classification accuracy; every image is a one-step episode.

    The subset is fixed at construction, so all genomes (and generations)
    see the same images.
    """

    episode_length = 1

    def __init__(self, spec: NetworkSpec, data: MnistDataset, subset_size: int = 1000, seed: int = 0):
        if spec.io.obs_dim != 784 or spec.io.action_dim != 10:
            raise ValueError("an MNIST network needs obs_dim=784 and action_dim=10")
        self.spec = spec
        self.data = data.subset(subset_size, seed) if subset_size < len(data) else data
        self.obs_dim, self.action_dim = 784, 10
        self._label: int | None = None

    def reset(self, seed: int | None = None) -> np.ndarray:
        i = int(np.random.default_rng(seed).integers(len(self.data)))
        self._label = int(self.data.labels[i])
        return self.data.images[i]

    def step(self, action) -> tuple[np.ndarray, float, bool]:
        if self._label is None:
            raise EpisodeDone("call reset() first")
        reward = float(int(np.argmax(action)) == self._label)
        self._label = None
        return np.zeros(self.obs_dim), reward, True

    def scores(self, genome: Genome, images: np.ndarray | None = None) -> np.ndarray:
        images = self.data.images if images is None else images
        policy = PolicyBatch(self.spec, [genome], shared=True)
        _, out = policy.step(policy.reset(len(images)), images)
        return out

    def evaluate(self, genomes: Sequence[Genome], seeds: Sequence[int] = ()) -> np.ndarray:
        fit = np.empty(len(genomes))
        for k, g in enumerate(genomes):
            out = self.scores(g)
            fit[k] = accuracy(out, self.data.labels) if np.all(np.isfinite(out)) else FAILURE
        return fit


class QuadraticTask:
    """``-||flatten(genome) - target||^2``; a single-step episode whose action is the flat genome."""

    episode_length = 1

    def __init__(self, dim: int, target=None):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.target = np.zeros(dim) if target is None else np.asarray(target, dtype=float)
        if self.target.shape != (dim,):
            raise ValueError(f"target must have shape ({dim},)")
        self.obs_dim, self.action_dim = 0, dim
        self._open = False

    def fitness(self, vec: np.ndarray) -> float:
        d = np.asarray(vec, dtype=float) - self.target
        return -float(d @ d)

    def reset(self, seed: int | None = None) -> np.ndarray:
        self._open = True
        return np.zeros(0)

    def step(self, action) -> tuple[np.ndarray, float, bool]:
        if not self._open:
            raise EpisodeDone("episode finished; call reset()")
        self._open = False
        return np.zeros(0), self.fitness(action), True

    def evaluate(self, genomes: Sequence[Genome], seeds: Sequence[int] = ()) -> np.ndarray:
        return np.array([self.fitness(g.flatten()) for g in genomes])


def quadratic_task(dim: int, target=None) -> QuadraticTask:
    return QuadraticTask(dim, target)
