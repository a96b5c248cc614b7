"""Synthetic series for desk-scale experiments and tests."""

from __future__ import annotations

from datetime import datetime, timedelta

import numpy as np

from .series import SeriesFrame


def hourly_stamps(n: int, start: str = "2016-07-01 00:00:00") -> tuple[str, ...]:
    t0 = datetime.fromisoformat(start)
    return tuple(str(t0 + timedelta(hours=i)) for i in range(n))


def sum_of_sines(n: int = 5000, periods=(24.0, 100.0), amplitudes=(1.0, 0.5), noise: float = 0.0,
                 seed: int = 0, name: str = "sines") -> SeriesFrame:
    """One channel: sum of sinusoids, optionally with Gaussian noise."""
    t = np.arange(n, dtype=np.float64)
    x = sum(a * np.sin(2 * np.pi * t / p) for a, p in zip(amplitudes, periods))
    if noise:
        x = x + noise * np.random.default_rng(seed).standard_normal(n)
    return SeriesFrame(name=name, timestamps=hourly_stamps(n), values=x[:, None], columns=("x",),
                       frequency="1hour")


def ett_like(n: int = 17420, channels: int = 7, seed: int = 0, spike_rate: float = 0.0,
             name: str = "ett_like") -> SeriesFrame:
    """Daily and weekly cycles, a random-walk trend and noise per channel.

    Not a substitute for the real datasets; it exists so the full pipeline can
    be exercised offline.
    """
    rng = np.random.default_rng(seed)
    t = np.arange(n, dtype=np.float64)
    cols = []
    for _ in range(channels):
        daily = rng.uniform(0.5, 2.0) * np.sin(2 * np.pi * t / 24 + rng.uniform(0, 2 * np.pi))
        weekly = rng.uniform(0.2, 1.0) * np.sin(2 * np.pi * t / 168 + rng.uniform(0, 2 * np.pi))
        trend = np.cumsum(rng.standard_normal(n)) * 0.02
        x = daily + weekly + trend + 0.3 * rng.standard_normal(n)
        if spike_rate:
            spikes = rng.random(n) < spike_rate
            x = x + spikes * rng.normal(0, 6.0, n)
        cols.append(x)
    return SeriesFrame(name=name, timestamps=hourly_stamps(n), values=np.stack(cols, axis=1),
                       columns=tuple(f"c{i}" for i in range(channels)), frequency="1hour")


GENERATORS = {
    "sines": sum_of_sines,
    "ett_like": ett_like,
}


def generate(spec: str, **kwargs) -> SeriesFrame:
    """``spec`` is a generator name, e.g. ``"sines"`` or ``"ett_like"``."""
    try:
        fn = GENERATORS[spec]
    except KeyError:
        raise ValueError(f"unknown synthetic series {spec!r}; known: {sorted(GENERATORS)}") from None
    return fn(**kwargs)
