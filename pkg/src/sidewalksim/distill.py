"""Behavior cloning with dataset aggregation from a privileged teacher.

The student consumes the realistic observation only (272 capped lidar rays
plus the noisy goal polar), flattened to 275 features. Teacher actions are
the regression targets after normalization to [-1, 1]^2; training minimizes
the mean L1 error with exact hand-written gradients.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .episode import Episode, EpisodeConfig
from .errors import NoPathError, PrefillStallError, TrainingDivergedError
from .nets import Adam, StudentNet
from .planner import OracleTeacher, Policy
from .sensors import (
    Observation,
    RealisticObs,
    REALISTIC_LIDAR_MAX_RANGE,
)
from .world import Action, SPEED_MAX, SPEED_MIN, YAW_LIMIT

GOAL_DISTANCE_CAP = 15.0  # meters; matches the far end of the goal sampling range

FEATURE_DIM = 272 + 3

_SPEED_CENTER = (SPEED_MAX + SPEED_MIN) / 2.0
_SPEED_HALF = (SPEED_MAX - SPEED_MIN) / 2.0

NORMALIZATION = {
    "lidar_max_range": REALISTIC_LIDAR_MAX_RANGE,
    "goal_distance_cap": GOAL_DISTANCE_CAP,
    "speed_center": _SPEED_CENTER,
    "speed_half": _SPEED_HALF,
    "yaw_half": YAW_LIMIT,
}


def flatten_realistic(obs: RealisticObs) -> np.ndarray:
    """275 features in [-1, 1]: normalized ranges, capped distance, bearing."""
    out = np.empty(FEATURE_DIM)
    out[:272] = obs.lidar / REALISTIC_LIDAR_MAX_RANGE
    out[272] = min(obs.goal.distance, GOAL_DISTANCE_CAP) / GOAL_DISTANCE_CAP
    out[273] = math.sin(obs.goal.bearing)
    out[274] = math.cos(obs.goal.bearing)
    return out


def normalize_action(action: Action) -> np.ndarray:
    return np.array([(action.speed - _SPEED_CENTER) / _SPEED_HALF,
                     action.yaw_delta / YAW_LIMIT])


def denormalize_action(vec) -> Action:
    return Action(vec[0] * _SPEED_HALF + _SPEED_CENTER, vec[1] * YAW_LIMIT)


@dataclass
class Transition:
    features: np.ndarray      # (275,) float32
    action: np.ndarray        # (2,) float64, normalized teacher action
    episode_id: int
    step_index: int


class AggregatedDataset:
    """FIFO-bounded transition store with per-round bookkeeping."""

    def __init__(self, capacity: int = 200_000):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._buf: deque[Transition] = deque(maxlen=capacity)
        self.round_counts: list[int] = []

    def __len__(self) -> int:
        return len(self._buf)

    def append(self, transition: Transition) -> None:
        self._buf.append(transition)

    def record_round(self, count: int) -> None:
        self.round_counts.append(count)

    def transitions(self):
        return iter(self._buf)

    def matrices(self):
        """(X, Y) float64 design matrices in insertion order."""
        if not self._buf:
            raise ValueError("dataset is empty")
        x = np.stack([t.features for t in self._buf]).astype(float)
        y = np.stack([t.action for t in self._buf])
        return x, y


_TRANSITION_DTYPE = np.dtype([
    ("features", np.float32, (FEATURE_DIM,)),
    ("action", np.float64, (2,)),
    ("episode_id", np.int32),
    ("step_index", np.int32),
])


def save_transitions(path, dataset: AggregatedDataset) -> None:
    """Persist transitions as a single structured .npy (deterministic bytes)."""
    arr = np.zeros(len(dataset), dtype=_TRANSITION_DTYPE)
    for i, t in enumerate(dataset.transitions()):
        arr[i] = (t.features, t.action, t.episode_id, t.step_index)
    np.save(path, arr)


def load_transitions(path, capacity: int = 200_000) -> AggregatedDataset:
    arr = np.load(path)
    dataset = AggregatedDataset(capacity=capacity)
    for row in arr:
        dataset.append(Transition(
            features=np.array(row["features"], dtype=np.float32),
            action=np.array(row["action"], dtype=float),
            episode_id=int(row["episode_id"]),
            step_index=int(row["step_index"]),
        ))
    dataset.record_round(len(arr))
    return dataset


class StudentPolicy(Policy):
    """Wraps the network behind the common policy interface."""

    def __init__(self, net: StudentNet):
        self.net = net

    def act(self, obs: Observation) -> Action:
        if obs.realistic is None:
            raise ValueError("student policy needs the realistic observation")
        out = self.net.forward(flatten_realistic(obs.realistic))
        return denormalize_action(out)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 256
    epochs_per_round: int = 8
    rounds: int = 10
    prefill_count: int = 20_000
    seed: int = 0
    capacity: int = 200_000
    bc_epochs: int = 40                 # round-0 training on the prefill data
    collect_episodes_per_round: int = 60
    round_eval_episodes: int = 100
    final_eval_episodes: int = 100

    def __post_init__(self):
        for name in ("learning_rate", "batch_size", "epochs_per_round",
                     "capacity", "bc_epochs"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.rounds < 0 or self.prefill_count < 0:
            raise ValueError("rounds and prefill_count must be >= 0")


def _episode_stream(configs: list[EpisodeConfig], seed: int, obs_mode: str = "both"):
    """Endless deterministic stream of episodes cycling over the config list."""
    i = 0
    while True:
        child = np.random.SeedSequence(entropy=seed, spawn_key=(i,))
        ep_seed = int(child.generate_state(1)[0])
        cfg = replace(configs[i % len(configs)], seed=ep_seed, obs_mode=obs_mode,
                      render_bev=False)
        yield Episode(cfg)
        i += 1


def _run_labeled_episode(episode: Episode, driver: Policy, teacher: OracleTeacher,
                         episode_id: int):
    """Roll one episode with `driver` acting, teacher labeling every state."""
    obs = episode.reset()
    try:
        teacher.reset(episode.context())
        if driver is not teacher:
            driver.reset(episode.context())
    except NoPathError:
        return "timeout", []
    transitions = []
    outcome = "timeout"
    for step_index in range(episode.config.max_steps):
        try:
            label = teacher.act(obs)
            action = label if driver is teacher else driver.act(obs)
        except NoPathError:
            break
        transitions.append(Transition(
            features=flatten_realistic(obs.realistic).astype(np.float32),
            action=normalize_action(label),
            episode_id=episode_id,
            step_index=step_index,
        ))
        out = episode.step(action)
        obs = out.observation
        if out.terminal is not None:
            outcome = out.terminal
            break
    return outcome, transitions


def prefill(dataset: AggregatedDataset, teacher: OracleTeacher,
            configs: list[EpisodeConfig], count: int, seed: int = 0,
            max_episodes: Optional[int] = None) -> AggregatedDataset:
    """Fill the dataset with transitions from successful teacher episodes only."""
    if count < 0:
        raise ValueError("count must be >= 0")
    if count == 0:
        dataset.record_round(0)
        return dataset
    budget = max_episodes if max_episodes is not None else max(100, count)
    stream = _episode_stream(configs, seed)
    stored = 0
    episodes_run = 0
    successes = 0
    for episode in stream:
        if stored >= count:
            break
        if episodes_run >= budget or (episodes_run >= 50 and successes == 0):
            raise PrefillStallError(
                f"teacher yielded {successes} successes in {episodes_run} episodes; "
                f"stored {stored} of {count}"
            )
        outcome, transitions = _run_labeled_episode(episode, teacher, teacher, episodes_run)
        episodes_run += 1
        if outcome != "success":
            continue
        successes += 1
        for t in transitions:
            if stored >= count:
                break
            dataset.append(t)
            stored += 1
    dataset.record_round(stored)
    return dataset


def collect_round(dataset: AggregatedDataset, student: Policy, teacher: OracleTeacher,
                  configs: list[EpisodeConfig], n_episodes: int,
                  seed: int = 0) -> AggregatedDataset:
    """Student-driven rollouts labeled by the teacher at every visited state."""
    stream = _episode_stream(configs, seed)
    added = 0
    for episode_id, episode in zip(range(n_episodes), stream):
        _, transitions = _run_labeled_episode(episode, student, teacher, episode_id)
        for t in transitions:
            dataset.append(t)
            added += 1
    dataset.record_round(added)
    return dataset


def train_epochs(net: StudentNet, dataset: AggregatedDataset, config: TrainConfig,
                 optimizer: Adam, rng: np.random.Generator,
                 epochs: Optional[int] = None) -> list[float]:
    """Mini-batch L1 regression; returns the mean loss per epoch."""
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    x, y = dataset.matrices()
    n = len(x)
    n_epochs = epochs if epochs is not None else config.epochs_per_round
    history = []
    for _ in range(n_epochs):
        order = rng.permutation(n)
        losses = []
        for lo in range(0, n, config.batch_size):
            idx = order[lo:lo + config.batch_size]
            loss, grads = net.loss_and_grads(x[idx], y[idx])
            if not math.isfinite(loss):
                raise TrainingDivergedError(f"non-finite loss on batch at offset {lo}")
            optimizer.step(net, grads)
            losses.append(loss)
        history.append(float(np.mean(losses)))
    return history


@dataclass
class RoundRecord:
    round_index: int
    dataset_size: int
    train_loss: list[float]
    val_success_rate: float


@dataclass
class DaggerReport:
    rounds: list[RoundRecord]
    best_round: int
    baseline_final: dict
    best_final: dict
    teacher_final: dict

    def to_dict(self) -> dict:
        return {
            "rounds": [
                {
                    "round": r.round_index,
                    "dataset_size": r.dataset_size,
                    "train_loss": r.train_loss,
                    "val_success_rate": r.val_success_rate,
                }
                for r in self.rounds
            ],
            "best_round": self.best_round,
            "baseline_final": self.baseline_final,
            "best_final": self.best_final,
            "teacher_final": self.teacher_final,
        }


@dataclass
class DaggerResult:
    net: StudentNet
    report: DaggerReport
    dataset: AggregatedDataset = field(repr=False, default=None)


def dagger_run(train_configs: list[EpisodeConfig], val_configs: list[EpisodeConfig],
               config: TrainConfig, log=None) -> DaggerResult:
    """Full distillation loop: prefill, then train/collect/evaluate rounds.

    Returns the best-by-validation student; the report carries the per-round
    curve plus final evaluations of both the chosen student and the round-0
    (prefill-only behavior cloning) baseline on the larger validation suite.
    """
    from .evaluate import evaluate  # late import to keep module layers acyclic

    def say(msg):
        if log is not None:
            log(msg)

    ss = np.random.SeedSequence(config.seed)
    s_prefill, s_net, s_train, s_collect, s_eval = (
        int(c.generate_state(1)[0]) for c in ss.spawn(5)
    )

    teacher = OracleTeacher()
    dataset = AggregatedDataset(config.capacity)
    say(f"prefilling {config.prefill_count} transitions from successful teacher episodes")
    prefill(dataset, teacher, train_configs, config.prefill_count, seed=s_prefill)

    net = StudentNet(seed=s_net)
    optimizer = Adam(net, config.learning_rate)
    train_rng = np.random.default_rng(s_train)

    rounds: list[RoundRecord] = []
    bc_loss = train_epochs(net, dataset, config, optimizer, train_rng,
                           epochs=config.bc_epochs)
    ev = evaluate(StudentPolicy(net), val_configs, config.round_eval_episodes,
                  seed=s_eval)
    rounds.append(RoundRecord(0, len(dataset), bc_loss, ev.success_rate))
    say(f"round 0 (behavior cloning): loss {bc_loss[-1]:.4f}, "
        f"val success {ev.success_rate:.2f}")

    baseline_flat = net.get_flat().copy()
    best_flat = baseline_flat
    best_rate = ev.success_rate
    best_round = 0

    for r in range(1, config.rounds + 1):
        collect_round(dataset, StudentPolicy(net), teacher, train_configs,
                      config.collect_episodes_per_round, seed=s_collect + r)
        losses = train_epochs(net, dataset, config, optimizer, train_rng)
        ev = evaluate(StudentPolicy(net), val_configs, config.round_eval_episodes,
                      seed=s_eval)
        rounds.append(RoundRecord(r, len(dataset), losses, ev.success_rate))
        say(f"round {r}: dataset {len(dataset)}, loss {losses[-1]:.4f}, "
            f"val success {ev.success_rate:.2f}")
        if ev.success_rate > best_rate:
            best_rate = ev.success_rate
            best_flat = net.get_flat().copy()
            best_round = r

    baseline_net = StudentNet(seed=s_net)
    baseline_net.set_flat(baseline_flat)
    best_net = StudentNet(seed=s_net)
    best_net.set_flat(best_flat)

    baseline_final = evaluate(StudentPolicy(baseline_net), val_configs,
                              config.final_eval_episodes, seed=s_eval + 1)
    best_final = evaluate(StudentPolicy(best_net), val_configs,
                          config.final_eval_episodes, seed=s_eval + 1)
    # teacher on the same suite and episode seeds, through its own modality
    teacher_configs = [replace(c, obs_mode="privileged", render_bev=False)
                       for c in val_configs]
    teacher_final = evaluate(OracleTeacher(), teacher_configs,
                             config.final_eval_episodes, seed=s_eval + 1)
    say(f"final: teacher {teacher_final.success_rate:.2f}, "
        f"baseline {baseline_final.success_rate:.2f}, "
        f"best (round {best_round}) {best_final.success_rate:.2f}")
    report = DaggerReport(rounds=rounds, best_round=best_round,
                          baseline_final=baseline_final.to_dict(),
                          best_final=best_final.to_dict(),
                          teacher_final=teacher_final.to_dict())
    return DaggerResult(net=best_net, report=report, dataset=dataset)
