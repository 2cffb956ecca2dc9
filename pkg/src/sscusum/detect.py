"""CUSUM detector family and drift selection.

Three detectors share the stopping rule "alarm at the first tick where the
running statistic reaches b":

* a CUSUM for a known signal direction, whose drift term is the exact
  log-likelihood-ratio offset;
* the subspace variant, which scores each sample against a direction
  estimated from the w samples strictly after it (so an alarm crossed at
  tick t actually consumed data through t + w, and is reported at t + w);
* a decentralized one-shot baseline, where every sensor runs its own scalar
  CUSUM with known mean shift and the first local alarm stops the system.

Drift selection comes in two forms: a closed-form admissible interval from
the large-window theory, and an empirical rule (factor times the observed
pre-change mean of the squared projections).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .core import (
    DelayProfile,
    LookaheadBuffer,
    MultiSensorFrame,
    align_frames,
)
from .errors import (
    DegenerateInputError,
    DimensionMismatchError,
    IndependenceViolationError,
)
from .linalg import default_max_iter, power_iteration, sample_covariance
from .sync import joint_estimate

# Streaming paths see the occasional window whose top two eigenvalues nearly
# tie; power iteration then needs far more steps than the per-call default
# budget, so detectors run with this floor unless told otherwise.
PIPELINE_MAX_ITER = 200_000


def _pipeline_budget(k: int, tol: float, max_iter: int | None) -> int:
    if max_iter is not None:
        return max_iter
    return max(default_max_iter(k, tol), PIPELINE_MAX_ITER)

__all__ = [
    "CusumState",
    "DriftBounds",
    "StoppingReport",
    "AsyncDetection",
    "cusum_step_known_u",
    "subspace_cusum_step",
    "KnownSubspaceCusum",
    "SubspaceCusum",
    "run_detector",
    "one_shot_detector",
    "drift_bounds",
    "calibrate_drift",
    "async_pipeline",
    "subspace_increments",
    "write_report_csv",
    "write_trajectory_csv",
]

_UNIT_NORM_ATOL = 1e-9


@dataclass(frozen=True)
class CusumState:
    """Running statistic with its drift, threshold, and crossing bookkeeping."""

    S: float = 0.0
    d: float = 0.0
    b: float = math.inf
    crossed_at: int | None = None
    reported_at: int | None = None


def _check_unit(u: np.ndarray, k: int) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != (k,):
        raise DimensionMismatchError(f"direction must have shape ({k},)")
    if abs(np.linalg.norm(u) - 1.0) > _UNIT_NORM_ATOL:
        raise ValueError(f"direction norm {np.linalg.norm(u)!r} is not 1 within 1e-9")
    return u


def llr_offset(sigma2: float, rho: float) -> float:
    """Drift term of the known-direction recursion: sigma2*(1+1/rho)*ln(1+rho)."""
    if rho <= 0 or sigma2 <= 0:
        raise ValueError("require rho > 0 and sigma2 > 0")
    return sigma2 * (1.0 + 1.0 / rho) * math.log1p(rho)


def cusum_step_known_u(
    state: CusumState,
    frame: MultiSensorFrame,
    u: np.ndarray,
    sigma2: float,
    rho: float,
) -> CusumState:
    """One update with the signal direction known exactly:
    S' = max(S, 0) + (u'x)^2 - sigma2*(1+1/rho)*ln(1+rho)."""
    u = _check_unit(u, frame.k)
    inc = float(u @ frame.values) ** 2 - llr_offset(sigma2, rho)
    return replace(state, S=max(state.S, 0.0) + inc)


def subspace_cusum_step(
    state: CusumState,
    frame: MultiSensorFrame,
    u_hat: np.ndarray,
    u_window_start: int | None = None,
) -> CusumState:
    """One update with an estimated direction: S' = max(S, 0) + (u'x)^2 - d.

    ``u_window_start`` is the first tick of the window that produced
    ``u_hat``; passing it enforces the independence contract (the window must
    lie strictly after the scored frame).
    """
    if u_window_start is not None and u_window_start <= frame.t:
        raise IndependenceViolationError(
            f"direction window starting at {u_window_start} overlaps frame t={frame.t}"
        )
    u_hat = _check_unit(u_hat, frame.k)
    inc = float(u_hat @ frame.values) ** 2 - state.d
    return replace(state, S=max(state.S, 0.0) + inc)


@dataclass(frozen=True)
class StoppingReport:
    """Outcome of one detector run: crossing times and the statistic path.

    ``statistic[i]`` is the value at ``ticks[i]``. ``reported_at`` equals
    ``crossed_at + lookahead`` (the true stopping time once the future window
    is accounted for). A run that exhausts its stream without crossing is a
    no-alarm outcome, not an error.
    """

    detector: str
    b: float
    d: float
    lookahead: int
    crossed_at: int | None
    reported_at: int | None
    ticks: np.ndarray
    statistic: np.ndarray

    @property
    def no_alarm(self) -> bool:
        return self.crossed_at is None

    def crossing_for(self, b: float) -> tuple[int | None, int | None]:
        """First crossing of an alternative threshold, read off the stored path.

        Only valid for b at or below the run's own threshold unless the run
        kept its full trajectory.
        """
        hits = np.flatnonzero(self.statistic >= b)
        if hits.size == 0:
            return None, None
        t = int(self.ticks[hits[0]])
        return t, t + self.lookahead


class KnownSubspaceCusum:
    """CUSUM with the signal direction, noise power, and SNR known."""

    name = "known_u"
    lookahead = 0

    def __init__(self, u: np.ndarray, sigma2: float, rho: float, b: float = math.inf):
        self.u = np.asarray(u, dtype=float)
        self.sigma2 = float(sigma2)
        self.rho = float(rho)
        self.d = llr_offset(sigma2, rho)
        self.state = CusumState(d=self.d, b=float(b))

    def step(self, frame: MultiSensorFrame) -> tuple[int, float]:
        self.state = cusum_step_known_u(self.state, frame, self.u, self.sigma2, self.rho)
        if self.state.S >= self.state.b and self.state.crossed_at is None:
            self.state = replace(self.state, crossed_at=frame.t, reported_at=frame.t)
        return frame.t, self.state.S


class SubspaceCusum:
    """Streaming subspace detector built on a lookahead buffer.

    Each pushed frame is absorbed; once a frame's w future samples are all
    buffered it is released, a direction is extracted from that future
    window, and the statistic advances. The buffer is the structural
    guarantee that the direction never sees the scored sample.
    """

    name = "subspace"

    def __init__(
        self,
        w: int,
        d: float,
        b: float = math.inf,
        *,
        tol: float = 1e-10,
        max_iter: int | None = None,
        warm_start: bool = True,
    ):
        if w < 1:
            raise ValueError("subspace detector needs lookahead w >= 1")
        self.lookahead = int(w)
        self.buffer = LookaheadBuffer(w)
        self.state = CusumState(d=float(d), b=float(b))
        self.tol = tol
        self.max_iter = max_iter
        self.warm_start = warm_start
        self._u_prev: np.ndarray | None = None
        self.last_u: np.ndarray | None = None

    @property
    def d(self) -> float:
        return self.state.d

    def step(self, frame: MultiSensorFrame) -> tuple[int, float] | None:
        released = self.buffer.push(frame)
        if released is None:
            return None
        window = self.buffer.future_window()
        cov = sample_covariance(window)
        result = power_iteration(
            cov.matrix,
            tol=self.tol,
            max_iter=_pipeline_budget(cov.k, self.tol, self.max_iter),
            start=self._u_prev if self.warm_start else None,
            estimate_gap=False,
        )
        if self.warm_start:
            self._u_prev = result.vector
        self.last_u = result.vector
        self.state = subspace_cusum_step(
            self.state, released, result.vector, u_window_start=released.t + 1
        )
        if self.state.S >= self.state.b and self.state.crossed_at is None:
            self.state = replace(
                self.state,
                crossed_at=released.t,
                reported_at=released.t + self.lookahead,
            )
        return released.t, self.state.S


def run_detector(
    frames: Iterable[MultiSensorFrame],
    detector,
    *,
    full_trajectory: bool = False,
) -> StoppingReport:
    """Drive a detector over a frame stream and collect its stopping report.

    Stops at the first threshold crossing unless ``full_trajectory`` is set;
    an exhausted stream yields a no-alarm report with the path intact.
    """
    ticks: list[int] = []
    values: list[float] = []
    crossed: int | None = None
    for frame in frames:
        emitted = detector.step(frame)
        if emitted is None:
            continue
        t, s = emitted
        ticks.append(t)
        values.append(s)
        if crossed is None and s >= detector.state.b:
            crossed = t
            if not full_trajectory:
                break
    reported = None if crossed is None else crossed + detector.lookahead
    return StoppingReport(
        detector=detector.name,
        b=detector.state.b,
        d=detector.d,
        lookahead=detector.lookahead,
        crossed_at=crossed,
        reported_at=reported,
        ticks=np.asarray(ticks, dtype=int),
        statistic=np.asarray(values, dtype=float),
    )


def one_shot_detector(
    streams: np.ndarray,
    mu: float,
    sigma2: float,
    b: float,
    t0: int = 1,
    *,
    full_trajectory: bool = False,
) -> StoppingReport:
    """Decentralized baseline: k scalar CUSUMs race, first local alarm stops.

    Each sensor i runs S_i' = max(S_i, 0) + (mu/sigma2)*(x_i - mu/2), the
    exact Gaussian log-likelihood ratio for a known mean shift mu. The
    recorded statistic is max_i S_i.
    """
    if mu == 0:
        raise DegenerateInputError("mu = 0 gives a degenerate likelihood ratio")
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    data = np.atleast_2d(np.asarray(streams, dtype=float))
    k, n = data.shape
    gain = mu / sigma2
    half = mu / 2.0
    s = np.zeros(k)
    ticks = np.arange(t0, t0 + n)
    values = np.empty(n)
    crossed: int | None = None
    stop_idx = n
    for j in range(n):
        s = np.maximum(s, 0.0) + gain * (data[:, j] - half)
        m = float(s.max())
        values[j] = m
        if crossed is None and m >= b:
            crossed = int(ticks[j])
            if not full_trajectory:
                stop_idx = j + 1
                break
    return StoppingReport(
        detector="one_shot",
        b=float(b),
        d=0.0,
        lookahead=0,
        crossed_at=crossed,
        reported_at=crossed,
        ticks=ticks[:stop_idx],
        statistic=values[:stop_idx],
    )


@dataclass(frozen=True)
class DriftBounds:
    """Admissible drift interval from the large-window approximation.

    ``lower`` is the pre-change mean of the squared projection; ``upper``
    subtracts the direction-estimation error from the time-averaged
    post-change mean. The interval can be empty (``valid`` False) when the
    window is too short for the given dimension and SNR.
    """

    lower: float
    upper: float
    valid: bool

    @property
    def midpoint(self) -> float:
        if not self.valid:
            raise DegenerateInputError(
                "drift interval is empty; calibrate the drift empirically instead"
            )
        return (self.lower + self.upper) / 2.0


def drift_bounds(sigma2: float, rho: float, k: int, w: int) -> DriftBounds:
    """Admissible drift interval (sigma2, sigma2*(1 + rho*(1 - (1+rho)(k-1)/(w rho^2))))."""
    if sigma2 <= 0 or rho <= 0:
        raise ValueError("require sigma2 > 0 and rho > 0")
    if k < 2 or w < 1:
        raise ValueError("require k >= 2 and w >= 1")
    bracket = rho * (1.0 - (1.0 + rho) * (k - 1) / (w * rho * rho))
    upper = sigma2 * (1.0 + bracket)
    return DriftBounds(lower=sigma2, upper=upper, valid=bracket > 0)


def calibrate_drift(prechange: np.ndarray, factor: float = 1.5) -> float:
    """Empirical drift: ``factor`` times the mean squared projection observed
    over a known pre-change stretch."""
    series = np.asarray(prechange, dtype=float)
    if series.size == 0:
        raise ValueError("cannot calibrate from an empty increment series")
    return factor * float(series.mean())


@dataclass(frozen=True)
class AsyncDetection:
    """Stopping report plus the per-window delay history of the joint loop."""

    report: StoppingReport
    delays: list[tuple[int, DelayProfile]]
    increments: np.ndarray  # squared projections (before subtracting d)
    skipped: range  # leading ticks without alignment headroom


def async_pipeline(
    streams: np.ndarray,
    *,
    w: int,
    tau_max: int,
    d: float,
    b: float = math.inf,
    delta: int = 1,
    n_max: int = 10,
    sync: bool = True,
    sync_every: int | None = None,
    t0: int = 1,
    reference: int = 0,
    tol: float = 1e-10,
    max_iter: int | None = None,
    warm_start: bool = True,
    full_trajectory: bool = False,
) -> AsyncDetection:
    """Full asynchronous detector: per-window delay estimation, alignment,
    future-window direction extraction, and the CUSUM recursion.

    At each emitted tick t the delays current for that window align the
    frame and its w future samples; the dominant direction of the aligned
    future covariance scores the aligned frame. Delay estimation reruns
    every ``sync_every`` emitted ticks (default: once per window length).
    Leading ticks without tau_max headroom on both sides are skipped and
    recorded, and the run needs streams covering at least one emittable tick.

    Returns an :class:`AsyncDetection`; its report carries the crossing pair
    (crossed_at, crossed_at + w) and the statistic path.
    """
    data = np.asarray(streams, dtype=float)
    if data.ndim != 2:
        raise DimensionMismatchError("streams must be a (k, n) array")
    k, n = data.shape
    if k < 2:
        raise ValueError("need at least 2 sensors")
    if w < 1:
        raise ValueError("w must be >= 1")
    if sync and w < 2:
        raise ValueError("delay estimation needs a window of at least 2 samples")
    if tau_max < 0:
        raise ValueError("tau_max must be >= 0")
    sync_every = w if sync_every is None else int(sync_every)
    if sync_every < 1:
        raise ValueError("sync_every must be >= 1")

    # Alignment headroom is only consumed when delays are actually estimated;
    # with the zero profile the shifted indices stay inside the window.
    headroom = tau_max if sync else 0
    t_first = t0 + headroom
    t_last = t0 + n - 1 - w - headroom
    if t_last < t_first:
        raise ValueError(
            f"streams cover {n} ticks; need at least {2 * headroom + w + 1} "
            f"for one emission with w={w}, tau_max={tau_max}"
        )

    rows = np.arange(k)[:, None]
    offsets = np.arange(1, w + 1)[None, :]
    profile = DelayProfile.zero(k, tau_max, reference=reference)
    delays_log: list[tuple[int, DelayProfile]] = []
    state = CusumState(d=float(d), b=float(b))
    u_prev: np.ndarray | None = None
    ticks: list[int] = []
    values: list[float] = []
    increments: list[float] = []

    for t in range(t_first, t_last + 1):
        if sync and (t - t_first) % sync_every == 0:
            est = joint_estimate(
                data,
                tau_max=tau_max,
                delta=delta,
                n_max=n_max,
                window=(t + 1, w),
                t0=t0,
                reference=reference,
                tol=tol,
                max_iter=_pipeline_budget(k, tol, max_iter),
            )
            profile = est.delays
            delays_log.append((t, profile))

        frame = align_frames(data, t, profile, t0=t0)
        future = data[rows, (t - t0) + offsets + profile.tau_hat[:, None]]  # (k, w)
        cov = sample_covariance(future.T)
        result = power_iteration(
            cov.matrix,
            tol=tol,
            max_iter=_pipeline_budget(k, tol, max_iter),
            start=u_prev if warm_start else None,
            estimate_gap=False,
        )
        if warm_start:
            u_prev = result.vector
        increments.append(float(result.vector @ frame.values) ** 2)
        state = subspace_cusum_step(state, frame, result.vector, u_window_start=t + 1)
        ticks.append(t)
        values.append(state.S)
        if state.S >= state.b and state.crossed_at is None:
            state = replace(state, crossed_at=t, reported_at=t + w)
            if not full_trajectory:
                break

    report = StoppingReport(
        detector="subspace",
        b=state.b,
        d=state.d,
        lookahead=w,
        crossed_at=state.crossed_at,
        reported_at=state.reported_at,
        ticks=np.asarray(ticks, dtype=int),
        statistic=np.asarray(values, dtype=float),
    )
    return AsyncDetection(
        report=report,
        delays=delays_log,
        increments=np.asarray(increments, dtype=float),
        skipped=range(t0, t_first),
    )


def subspace_increments(
    streams: np.ndarray,
    *,
    w: int,
    tau_max: int = 0,
    sync: bool = False,
    **kwargs,
) -> tuple[np.ndarray, np.ndarray]:
    """Squared projections (u_hat' x)^2 along a stream, with no stopping rule.

    Returns (ticks, increments); the drift is not subtracted. This is the
    series the empirical drift calibration averages.
    """
    detection = async_pipeline(
        streams,
        w=w,
        tau_max=tau_max,
        d=0.0,
        b=math.inf,
        sync=sync,
        full_trajectory=True,
        **kwargs,
    )
    return detection.report.ticks, detection.increments


def write_report_csv(
    path,
    reports: StoppingReport | Sequence[StoppingReport],
    rate: float | None = None,
) -> None:
    """Write ``detector,crossed_at,reported_at,b,d`` rows, one per report.

    With a sampling ``rate`` (Hz), crossing times are also emitted in
    seconds. No-alarm runs leave the time cells empty.
    """
    if isinstance(reports, StoppingReport):
        reports = [reports]
    header = ["detector", "crossed_at", "reported_at", "b", "d"]
    if rate is not None:
        header += ["crossed_sec", "reported_sec"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for r in reports:
            row = [
                r.detector,
                "" if r.crossed_at is None else r.crossed_at,
                "" if r.reported_at is None else r.reported_at,
                repr(float(r.b)),
                repr(float(r.d)),
            ]
            if rate is not None:
                row += [
                    "" if r.crossed_at is None else repr(r.crossed_at / rate),
                    "" if r.reported_at is None else repr(r.reported_at / rate),
                ]
            writer.writerow(row)


def write_trajectory_csv(path, report: StoppingReport) -> None:
    """Write the diagnostic path as ``t,S`` rows."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "S"])
        for t, s in zip(report.ticks.tolist(), report.statistic.tolist()):
            writer.writerow([t, repr(float(s))])
