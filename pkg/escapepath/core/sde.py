"""
Monte Carlo escape simulation
-----------------------------
Euler-Maruyama for  dX = (f + mu g)(X) dt + eps dW  with first-exit detection,
exit statistics and the empirical escape path averaged over exits.

Every path draws from its own counter-based Philox stream keyed by
(seed, path_index), and paths are processed in fixed-size chunks, so an
ensemble is bit-identical for any number of worker threads.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .model import Path, VectorFieldModel
from ..utils.config import SdeConfig, parse_vector
from ..utils.errors import InsufficientDataError, InvalidArgumentError
from ..utils.logger import setup_logger

# Get loggers
console_log, file_log = setup_logger()

CHUNK_SIZE = 128
MIN_EXITS_FOR_PATH = 50


class ExitKind(Enum):
    HYPERPLANE = "hyperplane"
    SADDLE_BALL = "saddle_ball"


@dataclass(frozen=True)
class ExitRule:
    """
    Exit set of the simulation.

    HYPERPLANE exits once <normal, x> >= offset; SADDLE_BALL exits on entering
    the ball of ``radius`` around ``center``.
    """
    kind: ExitKind
    normal: Tuple[float, ...] = (1.0, 0.0)
    offset: float = 0.0
    center: Tuple[float, ...] = (0.0, 0.0)
    radius: float = 0.1

    @classmethod
    def hyperplane(cls, normal: Sequence[float], offset: float = 0.0) -> 'ExitRule':
        normal = tuple(float(x) for x in normal)
        if not np.any(normal):
            raise InvalidArgumentError("hyperplane normal must be non-zero")
        return cls(ExitKind.HYPERPLANE, normal=normal, offset=float(offset))

    @classmethod
    def saddle_ball(cls, center: Sequence[float], radius: float) -> 'ExitRule':
        if radius <= 0:
            raise InvalidArgumentError(f"exit ball radius must be positive, got {radius}")
        return cls(ExitKind.SADDLE_BALL, center=tuple(float(x) for x in center), radius=float(radius))

    def level(self, x: np.ndarray) -> np.ndarray:
        """Signed level, negative before the exit and >= 0 on or past it."""
        if self.kind is ExitKind.HYPERPLANE:
            return x @ np.asarray(self.normal) - self.offset
        return self.radius - np.linalg.norm(x - np.asarray(self.center), axis=-1)

    def describe(self) -> str:
        if self.kind is ExitKind.HYPERPLANE:
            return f"hyperplane normal={self.normal} offset={self.offset:g}"
        return f"saddle_ball center={self.center} radius={self.radius:g}"


@dataclass(frozen=True)
class SimConfig:
    """Settings of one ensemble"""
    eps: float
    mu: float
    dt: float
    t_max: float
    n_paths: int
    seed: int
    start: Tuple[float, ...]
    exit_rule: ExitRule
    eta: float = 0.1
    block_steps: int = 1000
    keep_segments: bool = True

    def __post_init__(self):
        if not (np.isfinite(self.eps) and self.eps >= 0.0):
            raise InvalidArgumentError(f"noise amplitude must be non-negative, got {self.eps}")
        if not (self.dt > 0.0 and self.dt <= self.t_max):
            raise InvalidArgumentError(f"need 0 < dt <= t_max, got dt={self.dt}, t_max={self.t_max}")
        if self.n_paths < 1:
            raise InvalidArgumentError(f"need at least one path, got {self.n_paths}")
        if self.block_steps < 1:
            raise InvalidArgumentError(f"block_steps must be positive, got {self.block_steps}")

    @classmethod
    def from_settings(cls, settings: SdeConfig, start: Sequence[float]) -> 'SimConfig':
        """Build from the [sde] configuration section."""
        if settings.exit_rule == ExitKind.HYPERPLANE.value:
            rule = ExitRule.hyperplane(parse_vector(settings.exit_normal), settings.exit_offset)
        elif settings.exit_rule == ExitKind.SADDLE_BALL.value:
            rule = ExitRule.saddle_ball(parse_vector(settings.exit_center), settings.exit_radius)
        else:
            raise InvalidArgumentError(f"unknown exit rule '{settings.exit_rule}'")
        return cls(eps=settings.eps, mu=settings.mu, dt=settings.dt, t_max=settings.t_max,
                   n_paths=settings.n_paths, seed=settings.seed,
                   start=tuple(float(x) for x in start), exit_rule=rule,
                   eta=settings.eta, block_steps=settings.block_steps)


@dataclass(frozen=True)
class ExitRecord:
    path_id: int
    exit_time: float
    exit_location: np.ndarray
    escape_segment: Optional[Path] = None


@dataclass(frozen=True)
class EscapeEnsemble:
    """Exits of an ensemble in path-index order plus the paths that never left"""
    exits: List[ExitRecord]
    n_no_exit: int
    config: SimConfig
    no_exit_ids: Tuple[int, ...] = ()
    no_exit_states: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    rng: str = "numpy Philox, SeedSequence(entropy=seed, spawn_key=(path_index,))"

    @property
    def n_exits(self) -> int:
        return len(self.exits)

    @property
    def exit_fraction(self) -> float:
        return self.n_exits / self.config.n_paths

    def exit_times(self) -> np.ndarray:
        return np.array([e.exit_time for e in self.exits])

    def exit_locations(self) -> np.ndarray:
        if not self.exits:
            return np.zeros((0, len(self.config.start)))
        return np.vstack([e.exit_location for e in self.exits])


def path_generator(seed: int, path_index: int) -> np.random.Generator:
    """Independent counter-based stream of one path."""
    sequence = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(path_index),))
    return np.random.Generator(np.random.Philox(sequence))


class _SegmentBuffer:
    """States since the last visit to the eta-ball around the start"""

    def __init__(self, t0: float, x0: np.ndarray):
        self.times: List[np.ndarray] = [np.array([t0])]
        self.states: List[np.ndarray] = [x0[None, :].copy()]

    def extend(self, times: np.ndarray, states: np.ndarray, inside: np.ndarray) -> None:
        if times.size == 0:
            return
        hits = np.flatnonzero(inside)
        if hits.size:
            last = hits[-1]
            self.times = [times[last:]]
            self.states = [states[last:]]
        else:
            self.times.append(times)
            self.states.append(states)

    def close(self, t: float, x: np.ndarray) -> None:
        """Append the exit point, merging it into the last entry if the times coincide."""
        last = self.times[-1]
        if t <= last[-1]:
            self.states[-1] = self.states[-1].copy()
            self.states[-1][-1] = x
            return
        self.times.append(np.array([t]))
        self.states.append(x[None, :])

    def to_path(self) -> Path:
        return Path(np.concatenate(self.times), np.vstack(self.states))


def _simulate_chunk(model: VectorFieldModel, cfg: SimConfig,
                    path_ids: np.ndarray) -> Tuple[List[ExitRecord], List[Tuple[int, np.ndarray]]]:
    n = model.n
    start = np.asarray(cfg.start, dtype=float)
    generators = [path_generator(cfg.seed, i) for i in path_ids]
    K = path_ids.shape[0]
    X = np.tile(start, (K, 1))
    buffers = [_SegmentBuffer(0.0, start) for _ in range(K)] if cfg.keep_segments else None
    active = np.arange(K)
    total_steps = int(np.ceil(cfg.t_max / cfg.dt - 1e-9))
    noise_scale = cfg.eps * np.sqrt(cfg.dt)
    exits: List[ExitRecord] = []
    step = 0

    while active.size and step < total_steps:
        B = min(cfg.block_steps, total_steps - step)
        noise = np.stack([generators[k].standard_normal((B, n)) for k in active])
        traj = np.empty((active.size, B + 1, n))
        traj[:, 0] = X[active]
        for j in range(B):
            x = traj[:, j]
            traj[:, j + 1] = x + model.field(x, cfg.mu) * cfg.dt + noise_scale * noise[:, j]

        levels = cfg.exit_rule.level(traj)
        crossed = levels[:, 1:] >= 0.0
        first = np.where(crossed.any(axis=1), crossed.argmax(axis=1) + 1, -1)
        block_times = (step + np.arange(B + 1)) * cfg.dt

        still_active = []
        for row, k in enumerate(active):
            j = first[row]
            upto = j if j > 0 else B + 1
            if buffers is not None:
                inside = np.linalg.norm(traj[row, 1:upto] - start, axis=1) <= cfg.eta
                buffers[k].extend(block_times[1:upto], traj[row, 1:upto], inside)
            if j > 0:
                before, after = levels[row, j - 1], levels[row, j]
                theta = before / (before - after)
                location = traj[row, j - 1] + theta * (traj[row, j] - traj[row, j - 1])
                exit_time = block_times[j - 1] + theta * cfg.dt
                segment = None
                if buffers is not None:
                    buffers[k].close(exit_time, location)
                    segment = buffers[k].to_path()
                exits.append(ExitRecord(int(path_ids[k]), float(exit_time), location, segment))
            else:
                X[k] = traj[row, B]
                still_active.append(k)
        active = np.array(still_active, dtype=int)
        step += B

    survivors = [(int(path_ids[k]), X[k].copy()) for k in active]
    return exits, survivors


def simulate(model: VectorFieldModel, cfg: SimConfig, threads: int = 1) -> EscapeEnsemble:
    """
    Euler-Maruyama ensemble with first-exit detection.

    Steps follow  X_{k+1} = X_k + F(X_k) dt + eps sqrt(dt) xi_k. The exit is
    the first step whose level is non-negative, refined by linear
    interpolation inside the step.

    Args:
        model: Vector field model
        cfg: Simulation settings
        threads: Worker threads; the result does not depend on it

    Returns:
        EscapeEnsemble ordered by path index
    """
    if len(cfg.start) != model.n:
        raise InvalidArgumentError(f"start {cfg.start} does not match model dimension {model.n}")
    rule = cfg.exit_rule
    rule_dim = len(rule.normal) if rule.kind is ExitKind.HYPERPLANE else len(rule.center)
    if rule_dim != model.n:
        raise InvalidArgumentError(f"exit rule ({rule.describe()}) does not match dimension {model.n}")
    if rule.level(np.asarray(cfg.start, dtype=float)) >= 0.0:
        raise InvalidArgumentError(f"start {cfg.start} already lies in the exit set")

    ids = np.arange(cfg.n_paths)
    chunks = [ids[i:i + CHUNK_SIZE] for i in range(0, cfg.n_paths, CHUNK_SIZE)]
    console_log.info(f"Simulating {cfg.n_paths} paths (eps={cfg.eps:g}, mu={cfg.mu:g}, "
                     f"dt={cfg.dt:g}, t_max={cfg.t_max:g}) on {threads} thread(s)")
    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as pool:
        results = list(pool.map(lambda chunk: _simulate_chunk(model, cfg, chunk), chunks))

    exits = sorted((e for chunk_exits, _ in results for e in chunk_exits), key=lambda e: e.path_id)
    survivors = sorted((s for _, chunk_survivors in results for s in chunk_survivors),
                       key=lambda s: s[0])
    states = (np.vstack([s for _, s in survivors]) if survivors
              else np.zeros((0, model.n)))
    ensemble = EscapeEnsemble(exits=exits, n_no_exit=len(survivors), config=cfg,
                              no_exit_ids=tuple(i for i, _ in survivors), no_exit_states=states)
    console_log.info(f"✓ {ensemble.n_exits} exits, {ensemble.n_no_exit} paths reached t_max")
    return ensemble


@dataclass(frozen=True)
class ExitStatistics:
    n_exits: int
    mean_exit_time: float
    median_exit_time: float
    exit_time_stderr: float
    exit_location_mean: np.ndarray
    exit_location_cov: np.ndarray
    eps_log_mean_time: float
    eps2_log_mean_time: float

    def lines(self) -> List[str]:
        mean = ",".join(f"{x:.17g}" for x in self.exit_location_mean)
        cov = ";".join(",".join(f"{x:.17g}" for x in row) for row in self.exit_location_cov)
        return [f"n_exits={self.n_exits}",
                f"mean_exit_time={self.mean_exit_time:.17g}",
                f"median_exit_time={self.median_exit_time:.17g}",
                f"exit_time_stderr={self.exit_time_stderr:.17g}",
                f"exit_location_mean={mean}",
                f"exit_location_cov={cov}",
                f"eps_log_mean_time={self.eps_log_mean_time:.17g}",
                f"eps2_log_mean_time={self.eps2_log_mean_time:.17g}"]


def exit_statistics(ens: EscapeEnsemble) -> ExitStatistics:
    """
    Moments of exit times and locations.

    Both eps*log E[tau] and eps^2*log E[tau] are reported; with noise eps dW
    the exponential rate of the mean exit time is 2 dV / eps^2.
    """
    if ens.n_exits == 0:
        raise InsufficientDataError("no exits in the ensemble")
    times = ens.exit_times()
    locations = ens.exit_locations()
    mean_time = float(np.mean(times))
    if ens.n_exits > 1:
        cov = np.atleast_2d(np.cov(locations, rowvar=False))
        stderr = float(np.std(times, ddof=1) / np.sqrt(ens.n_exits))
    else:
        cov = np.zeros((locations.shape[1], locations.shape[1]))
        stderr = 0.0
    eps = ens.config.eps
    log_mean = float(np.log(mean_time)) if mean_time > 0 else float('-inf')
    return ExitStatistics(
        n_exits=ens.n_exits,
        mean_exit_time=mean_time,
        median_exit_time=float(np.median(times)),
        exit_time_stderr=stderr,
        exit_location_mean=locations.mean(axis=0),
        exit_location_cov=cov,
        eps_log_mean_time=eps * log_mean,
        eps2_log_mean_time=eps * eps * log_mean,
    )


def _arclength_resample(segment: Path, grid: np.ndarray) -> Optional[np.ndarray]:
    steps = np.linalg.norm(np.diff(segment.states, axis=0), axis=1)
    arclength = np.concatenate([[0.0], np.cumsum(steps)])
    if arclength[-1] <= 0.0:
        return None
    s = arclength / arclength[-1]
    # drop repeated arclength values so interpolation abscissae increase
    keep = np.concatenate([[True], np.diff(s) > 0.0])
    return np.column_stack([np.interp(grid, s[keep], segment.states[keep, k])
                            for k in range(segment.d)])


def empirical_mpep(ens: EscapeEnsemble, n_anchor: int = 101,
                   min_exits: int = MIN_EXITS_FOR_PATH) -> Path:
    """
    Pointwise mean of the escape segments on normalised arclength.

    Each segment starts at the last visit to the eta-ball around the start
    and ends at the exit location.

    Returns:
        Path on the arclength grid s in [0, 1] with ``n_anchor`` points
    """
    if n_anchor < 2:
        raise InvalidArgumentError(f"need at least 2 anchor points, got {n_anchor}")
    segments = [e.escape_segment for e in ens.exits if e.escape_segment is not None]
    if len(segments) < min_exits:
        raise InsufficientDataError(
            f"empirical escape path needs {min_exits} exits with segments, got {len(segments)}")
    grid = np.linspace(0.0, 1.0, n_anchor)
    resampled = [r for r in (_arclength_resample(seg, grid) for seg in segments) if r is not None]
    if len(resampled) < min_exits:
        raise InsufficientDataError(f"only {len(resampled)} non-degenerate escape segments")
    return Path(grid, np.mean(np.stack(resampled), axis=0))
