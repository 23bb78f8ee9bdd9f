"""Seeded toy navigation simulator producing episode logs.

A point robot crosses a 20 x 20 m arena from the left edge towards a goal
near the right edge, past circular obstacles.  A scripted potential-field
controller heads for the goal; when the *perceived* clearance ``c~`` to the
nearest obstacle is below the avoidance threshold ``a`` it adds a
repulsive push ``k * w`` along the obstacle normal and a tangential slide
``w``, with ``w = (a - c~) / a``.  Perceived clearance is the true clearance
plus a signed half-Gaussian disturbance ``s * |N(0, sigma)|`` with
``s = +-1`` equiprobable (``noise_sign`` can fix the sign instead).
Episodes record the true clearance.

Below clearance ``a (1 - 1/k)`` the push outweighs any goal pull, and one
step is shorter than that margin, so a lone obstacle cannot be hit without
noise.  Obstacles are spaced so that only the zones of neighbours may
overlap; with ``sigma = 0`` no collisions occur in practice, but that is
checked empirically rather than guaranteed.

Randomness: each episode gets its own PCG64 stream spawned from
``SeedSequence(seed)``; layout is drawn first, then the per-step noise.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from .errors import DataError
from .estimation import Episode

PLACEMENT_TRIES = 10_000
NOISE_SIGNS = ("symmetric", "positive", "negative")


@dataclass(frozen=True)
class SimConfig:
    sigma: float = 0.5
    episodes: int = 300
    seed: int = 0
    arena: tuple = (20.0, 20.0)
    n_obstacles: int = 10
    obstacle_radius: float = 1.0
    goal_radius: float = 0.5
    robot_speed: float = 0.5
    avoid_threshold: float = 2.0
    repulsion_gain: float = 2.0
    noise_sign: str = "symmetric"
    max_steps: int = 1000
    start_clearance: float = 3.15

    def __post_init__(self):
        if self.sigma < 0:
            raise DataError("sigma must be non-negative")
        if self.max_steps < 1 or self.episodes < 0:
            raise DataError("max_steps must be >= 1 and episodes >= 0")
        geo = (*self.arena, self.obstacle_radius, self.goal_radius, self.robot_speed,
               self.avoid_threshold)
        if min(geo) <= 0:
            raise DataError("geometry values must be positive")
        if self.noise_sign not in NOISE_SIGNS:
            raise DataError(f"noise_sign must be one of {NOISE_SIGNS}")
        if self.repulsion_gain <= 1 or \
                self.robot_speed >= self.avoid_threshold * (1 - 1 / self.repulsion_gain):
            raise DataError("need repulsion_gain > 1 and robot_speed < "
                            "avoid_threshold * (1 - 1/repulsion_gain)")


def _layout(cfg: SimConfig, rng: np.random.Generator):
    w, h = cfg.arena
    r = cfg.obstacle_radius
    min_sep = 2 * r + cfg.avoid_threshold + cfg.robot_speed
    margin = cfg.start_clearance + r
    for _ in range(PLACEMENT_TRIES // 100):
        start = np.array([rng.uniform(0.5, 2.5), rng.uniform(2.0, h - 2.0)])
        goal = np.array([rng.uniform(w - 2.5, w - 0.5), rng.uniform(2.0, h - 2.0)])
        cand = rng.uniform((3.0, 1.0), (w - 3.0, h - 1.0), size=(100, 2))
        ok = (np.linalg.norm(cand - start, axis=1) >= margin) & \
             (np.linalg.norm(cand - goal, axis=1) >= margin)
        centers = np.empty((0, 2))
        for c in cand[ok]:
            if len(centers) == cfg.n_obstacles:
                break
            if np.all(np.hypot(*(centers - c).T) >= min_sep):
                centers = np.vstack([centers, c])
        if len(centers) == cfg.n_obstacles:
            return start, goal, centers
    raise DataError("could not place obstacles; arena too crowded")


def _segment_hits(p, q, centers, r) -> bool:
    d = q - p
    dd = float(d @ d)
    rel = centers - p
    t = np.clip(rel @ d / dd, 0.0, 1.0) if dd > 0 else np.zeros(len(centers))
    closest = p + t[:, None] * d
    return bool(np.any(np.linalg.norm(centers - closest, axis=1) <= r))


def run_episode(cfg: SimConfig, rng: np.random.Generator) -> Episode:
    start, goal, centers = _layout(cfg, rng)
    r = cfg.obstacle_radius
    pos = start
    clearance = []

    def true_clearance(x):
        if len(centers) == 0:
            return np.inf, None
        dist = np.linalg.norm(centers - x, axis=1)
        i = int(np.argmin(dist))
        return float(dist[i] - r), i

    c, near = true_clearance(pos)
    clearance.append(c)
    outcome = "timeout"
    for _ in range(cfg.max_steps - 1):
        to_goal = goal - pos
        dist_goal = float(np.linalg.norm(to_goal))
        g = to_goal / dist_goal
        noise = rng.normal(0.0, cfg.sigma) if cfg.sigma > 0 else 0.0
        u = rng.random()
        if cfg.noise_sign == "symmetric":
            sign = 1.0 if u < 0.5 else -1.0
        else:
            sign = 1.0 if cfg.noise_sign == "positive" else -1.0
        perceived = c + sign * abs(noise)
        heading = g
        if near is not None and perceived < cfg.avoid_threshold:
            n = pos - centers[near]
            n /= np.linalg.norm(n)
            t = np.array([-n[1], n[0]])
            if t @ g < 0:
                t = -t
            w = (cfg.avoid_threshold - perceived) / cfg.avoid_threshold
            heading = g + w * (cfg.repulsion_gain * n + t)
            heading /= np.linalg.norm(heading)
        new = pos + min(cfg.robot_speed, dist_goal) * heading
        if len(centers) and _segment_hits(pos, new, centers, r):
            clearance.append(0.0)
            outcome = "crash"
            break
        pos = new
        c, near = true_clearance(pos)
        clearance.append(c)
        if np.linalg.norm(goal - pos) <= cfg.goal_radius:
            outcome = "goal"
            break
    return Episode(clearance, outcome)


def simulate(cfg: SimConfig) -> List[Episode]:
    streams = np.random.SeedSequence(cfg.seed).spawn(cfg.episodes)
    return [run_episode(cfg, np.random.Generator(np.random.PCG64(s))) for s in streams]


def default_grid() -> List[float]:
    return [round(0.1 * i, 10) for i in range(1, 21)]


def derived_seed(base_seed: int, index: int) -> int:
    ss = np.random.SeedSequence(base_seed, spawn_key=(index,))
    return int(ss.generate_state(1, np.uint64)[0])


def sweep(sigmas: Optional[Sequence[float]], base: SimConfig) -> Dict[float, List[Episode]]:
    """One episode set per sigma, each with its own seed derived from ``base.seed``."""
    grid = default_grid() if sigmas is None else list(sigmas)
    return {s: simulate(replace(base, sigma=s, seed=derived_seed(base.seed, i)))
            for i, s in enumerate(grid)}
