"""Per-component random streams derived from one master seed.

Each component owns a fixed spawn key, so adding or reordering consumers
never shifts another component's stream.
"""

import numpy as np

STREAMS = {"init": 0, "buffer": 1, "noise": 2, "env": 3, "eval": 4, "warmup": 5}


def stream_seed(master: int, name: str) -> int:
    seq = np.random.SeedSequence(int(master), spawn_key=(STREAMS[name],))
    return int(seq.generate_state(1, dtype=np.uint32)[0])


def stream(master: int, name: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(master), spawn_key=(STREAMS[name],)))
