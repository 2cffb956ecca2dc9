"""Domain types and stream plumbing: frames, lookahead buffering, alignment,
scenario descriptions, and the normalization used before detection.

Time is integer ticks throughout; all delays are integer sample shifts.
Sensor indices are 0-based in code (sensor 0 is the default synchronization
reference).
"""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator, Sequence

import numpy as np

from .errors import (
    CsvFormatError,
    DegenerateInputError,
    DimensionMismatchError,
    InsufficientLookaheadError,
    StreamOrderError,
)

__all__ = [
    "MultiSensorFrame",
    "LookaheadBuffer",
    "DelayProfile",
    "Waveform",
    "ScenarioModel",
    "SpikedStats",
    "normalize_stream",
    "align_frames",
    "release_ready",
    "frames_from_array",
    "read_sensor_csv",
    "write_sensor_csv",
]


@dataclass(frozen=True)
class MultiSensorFrame:
    """One time tick of readings from all k sensors.

    Attributes:
        t: integer sample index (ticks).
        values: length-k vector of readings, k >= 2, all entries finite.
    """

    t: int
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.shape[0] < 2:
            raise DimensionMismatchError(
                f"frame needs a 1-D vector of at least 2 sensors, got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError(f"non-finite reading in frame t={self.t}")
        object.__setattr__(self, "t", int(self.t))
        object.__setattr__(self, "values", values)

    @property
    def k(self) -> int:
        return self.values.shape[0]


class LookaheadBuffer:
    """Sliding store that releases the frame at time t only once the w frames
    at t+1..t+w have been absorbed.

    After a release the buffer holds exactly those w future frames, so the
    released tick plus w always equals the newest absorbed tick. Frames must
    arrive with consecutive, strictly increasing ticks; gaps are rejected
    rather than imputed.

    Single-writer, single-reader; no internal locking.
    """

    def __init__(self, w: int):
        if w < 0:
            raise ValueError("lookahead w must be >= 0")
        self.w = int(w)
        self._frames: deque[MultiSensorFrame] = deque()
        self.emitted_t: int | None = None
        self._last_absorbed: int | None = None
        self._k: int | None = None

    def __len__(self) -> int:
        return len(self._frames)

    @property
    def frames(self) -> tuple[MultiSensorFrame, ...]:
        """Currently buffered frames, oldest first."""
        return tuple(self._frames)

    @property
    def newest_t(self) -> int | None:
        return self._last_absorbed

    def push(self, frame: MultiSensorFrame) -> MultiSensorFrame | None:
        """Absorb one frame; return the frame that becomes releasable, if any."""
        if self._k is None:
            self._k = frame.k
        elif frame.k != self._k:
            raise DimensionMismatchError(
                f"frame t={frame.t} has k={frame.k}, stream has k={self._k}"
            )
        if self._last_absorbed is not None:
            if frame.t <= self._last_absorbed:
                raise StreamOrderError(
                    f"tick {frame.t} arrived after tick {self._last_absorbed}"
                )
            if frame.t != self._last_absorbed + 1:
                raise StreamOrderError(
                    f"gap in stream: expected tick {self._last_absorbed + 1}, got {frame.t}"
                )
        self._last_absorbed = frame.t
        self._frames.append(frame)
        if len(self._frames) == self.w + 1:
            released = self._frames.popleft()
            self.emitted_t = released.t
            return released
        return None

    def future_window(self) -> list[MultiSensorFrame]:
        """The w frames strictly after the last released tick (newest last)."""
        if self.emitted_t is None:
            raise InsufficientLookaheadError("no frame has been released yet")
        return list(self._frames)


def release_ready(
    buffer: LookaheadBuffer, frame: MultiSensorFrame
) -> MultiSensorFrame | None:
    """Absorb ``frame`` into ``buffer``; emit the frame at (newest t - w) once available."""
    return buffer.push(frame)


@dataclass(frozen=True)
class DelayProfile:
    """Per-sensor delays relative to the reference sensor, in ticks.

    ``tau_hat[reference]`` is always 0 and every entry lies in
    [-tau_max, tau_max]. ``iterations``/``converged`` carry the metadata of
    the joint estimation loop that produced the profile.
    """

    tau_hat: np.ndarray
    tau_max: int
    iterations: int = 0
    converged: bool = True
    reference: int = 0

    def __post_init__(self):
        tau = np.asarray(self.tau_hat, dtype=int)
        if tau.ndim != 1:
            raise DimensionMismatchError("tau_hat must be a 1-D integer vector")
        if not (0 <= self.reference < tau.shape[0]):
            raise ValueError(f"reference index {self.reference} out of range")
        if tau[self.reference] != 0:
            raise ValueError("reference sensor delay must be 0")
        if np.any(np.abs(tau) > self.tau_max):
            raise ValueError(
                f"delays {tau.tolist()} exceed bound tau_max={self.tau_max}"
            )
        object.__setattr__(self, "tau_hat", tau)

    @property
    def k(self) -> int:
        return self.tau_hat.shape[0]

    @classmethod
    def zero(cls, k: int, tau_max: int, reference: int = 0) -> "DelayProfile":
        return cls(np.zeros(k, dtype=int), tau_max, reference=reference)


class Waveform:
    """Causal source signal s(.): queries at negative ticks return exactly 0.

    The built-in constructors place the first (possibly) nonzero sample at
    tick 1, so a sensor with onset tau emits its first signal sample at tick
    tau + 1, matching the convention that the change point is the last
    noise-only tick.
    """

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray]):
        self._fn = fn

    def __call__(self, ticks) -> np.ndarray:
        ticks = np.asarray(ticks, dtype=int)
        out = np.asarray(self._fn(ticks), dtype=float)
        return np.where(ticks < 0, 0.0, out)

    @classmethod
    def step(cls) -> "Waveform":
        """Unit step: 1 for ticks >= 1, else 0."""
        return cls(lambda m: (m >= 1).astype(float))

    @classmethod
    def from_samples(cls, values: Sequence[float], first_tick: int = 1) -> "Waveform":
        """Tabulated signal occupying ticks first_tick..first_tick+len-1, zero outside."""
        table = np.asarray(values, dtype=float)
        if table.ndim != 1 or table.size == 0:
            raise ValueError("sample table must be a nonempty 1-D sequence")

        def fn(m: np.ndarray) -> np.ndarray:
            idx = m - first_tick
            ok = (idx >= 0) & (idx < table.size)
            return np.where(ok, table[np.clip(idx, 0, table.size - 1)], 0.0)

        return cls(fn)

    @classmethod
    def from_callable(cls, fn: Callable[[np.ndarray], np.ndarray]) -> "Waveform":
        return cls(fn)


@dataclass(frozen=True)
class ScenarioModel:
    """Ground-truth generator parameters for one multi-sensor episode.

    Sensor i observes ``alpha[i] * s(t - onsets[i]) + noise`` where the noise
    is N(0, sigma2) i.i.d. across sensors and ticks. ``change_point`` is the
    minimum onset, i.e. the last tick at which every sensor is guaranteed to
    be pure noise.
    """

    k: int
    sigma2: float
    alpha: np.ndarray
    waveform: Waveform
    onsets: np.ndarray

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=float)
        onsets = np.asarray(self.onsets, dtype=int)
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be >= 0")
        if alpha.shape != (self.k,):
            raise DimensionMismatchError(f"alpha must have shape ({self.k},)")
        if onsets.shape != (self.k,):
            raise DimensionMismatchError(f"onsets must have shape ({self.k},)")
        if np.any(self.waveform(np.arange(-4, 0)) != 0.0):
            raise ValueError("waveform must vanish at negative ticks")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "onsets", onsets)

    @property
    def change_point(self) -> int:
        return int(self.onsets.min())


@dataclass(frozen=True)
class SpikedStats:
    """Rank-one post-change structure implied by a scenario.

    ``u`` is the unit vector of normalized amplitudes, ``energy`` the average
    signal energy E0, and ``rho = E0 * ||alpha||^2 / sigma2`` the average SNR.
    """

    u: np.ndarray
    rho: float
    energy: float
    signal_power: float  # ||alpha||^2

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        if abs(np.linalg.norm(u) - 1.0) > 1e-12:
            raise ValueError("u must have unit norm (within 1e-12)")
        if self.rho < 0 or self.energy < 0:
            raise ValueError("rho and energy must be nonnegative")
        object.__setattr__(self, "u", u)

    def theta(self, s_value: float | np.ndarray) -> float | np.ndarray:
        """Instantaneous strength theta = s(t)^2 * ||alpha||^2 for a signal value."""
        return np.square(s_value) * self.signal_power

    @classmethod
    def from_scenario(cls, model: ScenarioModel, energy_horizon: int = 10_000) -> "SpikedStats":
        """Derive the spiked statistics, averaging s^2 over ``energy_horizon`` ticks."""
        norm = np.linalg.norm(model.alpha)
        if norm == 0:
            raise DegenerateInputError("alpha is identically zero")
        if model.sigma2 <= 0:
            raise DegenerateInputError("sigma2 must be positive to define an SNR")
        s = model.waveform(np.arange(1, energy_horizon + 1))
        energy = float(np.mean(np.square(s)))
        rho = energy * norm**2 / model.sigma2
        return cls(u=model.alpha / norm, rho=rho, energy=energy, signal_power=norm**2)


def normalize_stream(raw, stats_prefix: int | None = None) -> np.ndarray:
    """Center a series at zero mean then scale so the maximum magnitude is 1.

    By default both statistics come from the full record. Pass
    ``stats_prefix=n`` to compute them from the first n samples only (e.g. a
    known pre-change stretch) while still transforming the whole series.

    Raises:
        DegenerateInputError: empty, non-finite, or constant input.
    """
    x = np.asarray(raw, dtype=float)
    if x.size == 0:
        raise DegenerateInputError("cannot normalize an empty series")
    if not np.all(np.isfinite(x)):
        raise DegenerateInputError("series contains non-finite values")
    ref = x if stats_prefix is None else x[: int(stats_prefix)]
    if ref.size == 0:
        raise DegenerateInputError("stats prefix selects no samples")
    centered = x - ref.mean()
    scale = np.max(np.abs(ref - ref.mean()))
    if scale == 0.0:
        raise DegenerateInputError("series is constant over the normalization window")
    return centered / scale


def align_frames(
    streams: np.ndarray,
    t: int,
    delays: DelayProfile,
    t0: int = 0,
) -> MultiSensorFrame:
    """Build the time-shifted frame with component i equal to stream i at
    tick ``t + delays.tau_hat[i]``.

    ``streams`` is a (k, n) array whose column j holds tick ``t0 + j``.

    Raises:
        InsufficientLookaheadError: a shifted index falls outside the array.
    """
    streams = np.asarray(streams, dtype=float)
    if streams.ndim != 2:
        raise DimensionMismatchError("streams must be a (k, n) array")
    k, n = streams.shape
    if delays.k != k:
        raise DimensionMismatchError(
            f"delay profile has k={delays.k}, streams have k={k}"
        )
    idx = (t - t0) + delays.tau_hat
    if np.any(idx < 0) or np.any(idx >= n):
        bad = int(np.argmax((idx < 0) | (idx >= n)))
        raise InsufficientLookaheadError(
            f"sensor {bad} needs tick {t + int(delays.tau_hat[bad])}, "
            f"buffered range is [{t0}, {t0 + n - 1}]"
        )
    return MultiSensorFrame(t=t, values=streams[np.arange(k), idx])


def frames_from_array(
    streams: np.ndarray, t0: int = 1
) -> Iterator[MultiSensorFrame]:
    """Iterate a (k, n) array as frames with ticks t0, t0+1, ..."""
    streams = np.asarray(streams, dtype=float)
    for j in range(streams.shape[1]):
        yield MultiSensorFrame(t=t0 + j, values=streams[:, j])


def write_sensor_csv(path, streams: np.ndarray, t0: int = 1) -> None:
    """Write the sensor dump schema: header ``t,s1,...,sk``, one row per tick."""
    streams = np.asarray(streams, dtype=float)
    if streams.ndim != 2:
        raise DimensionMismatchError("streams must be a (k, n) array")
    k, n = streams.shape
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"s{i + 1}" for i in range(k)])
        for j in range(n):
            writer.writerow([t0 + j] + [repr(float(v)) for v in streams[:, j]])


def read_sensor_csv(path) -> tuple[int, np.ndarray]:
    """Read the sensor dump schema; returns (t0, streams) with shape (k, n).

    Ticks must be strictly increasing and consecutive; missing cells are
    forbidden. Errors carry the offending line number.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError("empty file", line=1) from None
        header = [h.strip() for h in header]
        if not header or header[0] != "t" or len(header) < 2:
            raise CsvFormatError(f"expected header 't,s1,...,sk', got {header}", line=1)
        expected = ["t"] + [f"s{i + 1}" for i in range(len(header) - 1)]
        if header != expected:
            raise CsvFormatError(f"expected header {expected}, got {header}", line=1)
        k = len(header) - 1
        ticks: list[int] = []
        rows: list[list[float]] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != k + 1 or any(cell.strip() == "" for cell in row):
                raise CsvFormatError(f"expected {k + 1} non-empty cells", line=lineno)
            try:
                t = int(row[0])
                vals = [float(cell) for cell in row[1:]]
            except ValueError as exc:
                raise CsvFormatError(str(exc), line=lineno) from None
            if ticks:
                if t <= ticks[-1]:
                    raise CsvFormatError(
                        f"tick {t} not strictly increasing after {ticks[-1]}", line=lineno
                    )
                if t != ticks[-1] + 1:
                    raise CsvFormatError(
                        f"gap in ticks: {ticks[-1]} followed by {t}", line=lineno
                    )
            ticks.append(t)
            rows.append(vals)
    if not rows:
        raise CsvFormatError("no data rows", line=2)
    return ticks[0], np.asarray(rows, dtype=float).T
