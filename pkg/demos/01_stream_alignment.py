#!/usr/bin/env python3
"""Streams, lookahead buffering, and alignment of asynchronous sensors.

A detector that scores sample t with a direction estimated from samples
t+1..t+w can only emit once those future samples exist; the lookahead buffer
handles that bookkeeping. Alignment then undoes known relative delays.
"""

import numpy as np

from sscusum import (
    DelayProfile,
    LookaheadBuffer,
    MultiSensorFrame,
    align_frames,
    normalize_stream,
)

rng = np.random.default_rng(0)

print("== normalization ==")
raw = 3.0 * rng.standard_normal(8) + 40.0
norm = normalize_stream(raw)
print("raw     :", np.round(raw, 2))
print("scaled  :", np.round(norm, 2))
print(f"mean -> {norm.mean():+.2e}, max |.| -> {np.max(np.abs(norm)):.1f}")

print("\n== lookahead buffering (w = 3) ==")
buf = LookaheadBuffer(w=3)
for t in range(1, 9):
    released = buf.push(MultiSensorFrame(t, rng.standard_normal(2)))
    tag = f"released t={released.t}" if released else "buffering"
    print(f"absorbed t={t}: {tag}")
print("future window of the last release:", [f.t for f in buf.future_window()])

print("\n== alignment ==")
# sensor 2 sees everything two ticks later; aligning pulls its stream forward
k, n = 2, 12
base = np.zeros(n)
base[4:8] = [1.0, 3.0, 2.0, 1.0]
streams = np.stack([base, np.roll(base, 2)])
profile = DelayProfile(np.array([0, 2]), tau_max=3)
print("sensor 1:", streams[0])
print("sensor 2:", streams[1])
aligned = np.stack([align_frames(streams, t, profile, t0=0).values for t in range(n - 2)]).T
print("aligned :", aligned[1][: n - 2], "(sensor 2 after shifting by +2)")
