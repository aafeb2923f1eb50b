"""Counter-based random word streams keyed by (seed, stream id).

Every sampling routine in the package draws from a Philox stream whose
128-bit key is ``(seed, stream)``.  Philox is counter-based, so a stream
is a pure function of its key and the word offset: draw j of stream s is
the same number no matter which other streams are generated, in which
order, or on how many workers.  Shock columns key streams by asset index
and path simulations key them by path id; the two uses are separated by
a domain tag folded into the stream word so they can never collide.
"""
from __future__ import annotations

import numpy as np

# Philox emits 4 x 64-bit words per counter tick; advance() counts ticks.
_WORDS_PER_TICK = 4

# High bit pattern separating per-path streams from per-index streams.
PATH_STREAM_TAG = np.uint64(1) << np.uint64(62)

_U64_MAX = 2**64 - 1
_INV_2_53 = 1.0 / 9007199254740992.0  # 2**-53
_MIN_UNIFORM = 2.0**-53


def _check_u64(value: int, name: str) -> int:
    if not isinstance(value, (int, np.integer)):
        raise TypeError(f"{name} must be an integer, got {type(value).__name__}")
    if not 0 <= int(value) <= _U64_MAX:
        raise ValueError(f"{name} must fit in an unsigned 64-bit word, got {value}")
    return int(value)


def raw_words(seed: int, stream: int, start: int, count: int) -> np.ndarray:
    """Return words [start, start+count) of the (seed, stream) Philox stream.

    The offset is honoured exactly: generating a column in blocks gives
    bit-identical output to generating it in one shot.
    """
    seed = _check_u64(seed, "seed")
    stream = _check_u64(stream, "stream")
    if start < 0 or count < 0:
        raise ValueError("start and count must be nonnegative")
    if count == 0:
        return np.empty(0, dtype=np.uint64)
    bg = np.random.Philox(key=np.array([seed, stream], dtype=np.uint64))
    ticks, skip = divmod(start, _WORDS_PER_TICK)
    if ticks:
        bg.advance(ticks)
    if skip:
        bg.random_raw(skip)
    return bg.random_raw(count)


def uniforms(seed: int, stream: int, start: int, count: int) -> np.ndarray:
    """Uniform(0, 1) draws at word offsets [start, start+count).

    Zero is excluded so the values can feed inverse CDFs directly.
    """
    w = raw_words(seed, stream, start, count)
    u = (w >> np.uint64(11)).astype(np.float64) * _INV_2_53
    # P(word < 2**11) is ~1e-16 per draw; clamp rather than special-case.
    return np.maximum(u, _MIN_UNIFORM)


def path_stream(path: int) -> int:
    """Stream id for a simulated path, disjoint from asset-index streams."""
    path = _check_u64(path, "path")
    if path >= int(PATH_STREAM_TAG):
        raise ValueError(f"path id too large: {path}")
    return int(np.uint64(path) | PATH_STREAM_TAG)
