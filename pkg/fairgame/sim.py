from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from math import sqrt
from typing import Any, Dict, List, Optional

import numpy as np

from .graph import GameGraph, InducedChain, Strategy, induce_chain

logger = logging.getLogger(__name__)

STEP_CAP = 10**6


@dataclass(frozen=True)
class EpisodeResult:
    total_reward: float
    steps: int
    terminated: bool


@dataclass(frozen=True)
class Estimate:
    mean: Optional[float]
    stderr: float
    episodes: int
    termination_rate: float

    def serializable(self) -> Dict[str, Any]:
        return {
            "mean": self.mean,
            "stderr": self.stderr,
            "episodes": self.episodes,
            "termination_rate": self.termination_rate,
        }


class Walker:
    """Samples paths of an induced chain.

    Rows with a single successor are followed without drawing from the
    generator.
    """

    def __init__(self, chain: InducedChain) -> None:
        self.initial = chain.initial
        self.reward = chain.reward
        self.terminal = [chain.is_terminal(v) for v in range(chain.n)]
        self.targets = [np.array([t for t, _ in row], dtype=np.intp) for row in chain.rows]
        self.cumulative = [np.cumsum([p for _, p in row]) for row in chain.rows]

    def run(self, rng: np.random.Generator, step_cap: int = STEP_CAP) -> EpisodeResult:
        v = self.initial
        total = 0.0
        steps = 0

        while not self.terminal[v]:
            if steps >= step_cap:
                return EpisodeResult(total, steps, False)

            total += self.reward[v]
            targets = self.targets[v]

            if len(targets) == 1:
                v = int(targets[0])
            else:
                cumulative = self.cumulative[v]
                i = int(np.searchsorted(cumulative, rng.random() * cumulative[-1], side="right"))
                v = int(targets[min(i, len(targets) - 1)])

            steps += 1

        return EpisodeResult(total, steps, True)


def episode_rng(seed: int, episode: int) -> np.random.Generator:
    """PCG64 stream of one episode, seeded by SeedSequence([seed, episode])."""

    return np.random.default_rng([seed, episode])


def simulate_episode(
    game: GameGraph,
    sigma1: Optional[Strategy],
    sigma2: Optional[Strategy],
    rng: np.random.Generator,
    step_cap: int = STEP_CAP,
) -> EpisodeResult:
    return Walker(induce_chain(game, sigma1, sigma2)).run(rng, step_cap)


def estimate_value(
    game: GameGraph,
    sigma1: Optional[Strategy],
    sigma2: Optional[Strategy],
    episodes: int,
    seed: int = 0,
    step_cap: int = STEP_CAP,
    threads: int = 1,
) -> Estimate:
    """Monte-Carlo estimate of the total reward under a strategy pair.

    Mean and standard error are taken over the episodes that reached a
    terminal; truncated episodes only lower the termination rate.
    """

    if episodes < 1:
        raise ValueError("episodes must be at least 1")

    walker = Walker(induce_chain(game, sigma1, sigma2))

    def run(episode: int) -> EpisodeResult:
        return walker.run(episode_rng(seed, episode), step_cap)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            results: List[EpisodeResult] = list(executor.map(run, range(episodes)))
    else:
        results = [run(episode) for episode in range(episodes)]

    rewards = np.array([r.total_reward for r in results if r.terminated], dtype=np.float64)
    truncated = episodes - len(rewards)

    if truncated:
        logger.warning("%d of %d episodes hit the step cap of %d", truncated, episodes, step_cap)

    if not len(rewards):
        return Estimate(None, 0.0, episodes, 0.0)

    stderr = (
        float(np.std(rewards, ddof=1)) / sqrt(len(rewards)) if len(rewards) > 1 else 0.0
    )

    return Estimate(float(np.mean(rewards)), stderr, episodes, len(rewards) / episodes)
