"""Counter-based random streams and exact state (de)serialization.

All randomness in the library flows through Philox generators so that runs
reproduce bit-for-bit across platforms and so that a bandit state snapshot
can capture the generator mid-stream.
"""

from __future__ import annotations

from typing import Any

import numpy as np


def make_generator(seed: int) -> np.random.Generator:
    """A Philox-backed generator for the given integer seed."""
    return np.random.Generator(np.random.Philox(key=np.uint64(seed)))


def run_generator(base_seed: int, run_index: int) -> np.random.Generator:
    """Independent per-run stream: spawn child `run_index` of `base_seed`.

    Distinct run indices give statistically independent streams, and the
    mapping (base_seed, run_index) -> stream is stable across processes.
    """
    ss = np.random.SeedSequence(base_seed, spawn_key=(run_index,))
    return np.random.Generator(np.random.Philox(seed=ss))


def generator_state(gen: np.random.Generator) -> dict[str, Any]:
    """JSON-friendly snapshot of a Philox generator (exact)."""
    st = gen.bit_generator.state
    return {
        "bit_generator": st["bit_generator"],
        "counter": [int(x) for x in st["state"]["counter"]],
        "key": [int(x) for x in st["state"]["key"]],
        "buffer": [int(x) for x in st["buffer"]],
        "buffer_pos": int(st["buffer_pos"]),
        "has_uint32": int(st["has_uint32"]),
        "uinteger": int(st["uinteger"]),
    }


def restore_generator(state: dict[str, Any]) -> np.random.Generator:
    """Inverse of :func:`generator_state`; the stream resumes exactly."""
    if state["bit_generator"] != "Philox":
        raise ValueError(f"unsupported bit generator: {state['bit_generator']!r}")
    bg = np.random.Philox()
    bg.state = {
        "bit_generator": "Philox",
        "state": {
            "counter": np.array(state["counter"], dtype=np.uint64),
            "key": np.array(state["key"], dtype=np.uint64),
        },
        "buffer": np.array(state["buffer"], dtype=np.uint64),
        "buffer_pos": int(state["buffer_pos"]),
        "has_uint32": int(state["has_uint32"]),
        "uinteger": int(state["uinteger"]),
    }
    return np.random.Generator(bg)
