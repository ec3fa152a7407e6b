"""Deterministic demo face embeddings.

Both the demo seeding here and the web console's simulated camera derive
a profile's base embedding the same way: SHA-256 over "<name>:<counter>"
expanded to big-endian uint32 words, each mapped into [-1, 1), then the
first D components unit-normalized. Keeping the derivation identical on
both sides lets a seeded server account match the browser's camera.
"""

from __future__ import annotations

import hashlib

import numpy as np


def profile_embedding(name: str, dim: int) -> np.ndarray:
    values: list[float] = []
    counter = 0
    while len(values) < dim:
        digest = hashlib.sha256(f"{name}:{counter}".encode("utf-8")).digest()
        for i in range(0, len(digest), 4):
            word = int.from_bytes(digest[i:i + 4], "big")
            values.append(word / 2 ** 32 * 2.0 - 1.0)
        counter += 1
    vec = np.asarray(values[:dim], dtype=float)
    return vec / np.linalg.norm(vec)


def profile_frames(name: str, dim: int, count: int = 3,
                   jitter: float = 0.01, spoof: bool = False) -> list[list[float]]:
    """Frame sequence the way the simulated camera produces one.

    spoof=True replays the identical base frame (fails liveness);
    otherwise each frame gets its own deterministic jitter (passes
    liveness and still matches the profile's template).
    """
    base = profile_embedding(name, dim)
    if spoof:
        return [base.tolist() for _ in range(count)]
    frames = []
    for i in range(count):
        noise = profile_embedding(f"{name}#frame{i}", dim) * jitter
        frame = base + noise
        frames.append((frame / np.linalg.norm(frame)).tolist())
    return frames
