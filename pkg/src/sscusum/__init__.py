"""Sequential change-point detection for asynchronous multi-sensor streams.

The package combines per-sensor delay estimation, windowed subspace
extraction, and CUSUM-style sequential detection, plus the Monte Carlo
machinery to calibrate drifts and compare detectors on ARL/EDD operating
curves.
"""

from .core import (
    DelayProfile,
    LookaheadBuffer,
    MultiSensorFrame,
    ScenarioModel,
    SpikedStats,
    Waveform,
    align_frames,
    frames_from_array,
    normalize_stream,
    read_sensor_csv,
    release_ready,
    write_sensor_csv,
)
from .detect import (
    AsyncDetection,
    CusumState,
    DriftBounds,
    KnownSubspaceCusum,
    StoppingReport,
    SubspaceCusum,
    async_pipeline,
    calibrate_drift,
    cusum_step_known_u,
    drift_bounds,
    one_shot_detector,
    run_detector,
    subspace_cusum_step,
    subspace_increments,
)
from .linalg import (
    CovarianceWindow,
    PowerIterationResult,
    power_iteration,
    sample_covariance,
    top_singular_vector,
)
from .sim import (
    OneShotSpec,
    SubspaceSpec,
    TrialResult,
    estimate_arl,
    estimate_edd,
    generate_episode,
    mean_shift_model,
    operating_curve,
    pure_noise_model,
    uniform_onsets,
)
from .sync import JointEstimate, WaveformEstimate, joint_estimate, ml_delay

__version__ = "0.1.0"
