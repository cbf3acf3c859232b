"""Counter-based random streams, one per purpose, all derived from the run seed."""
import numpy as np

STREAMS = {"init": 0, "data": 1, "shuffle": 2, "mixup": 3, "bench": 4}


def stream(seed: int, purpose: str) -> np.random.Generator:
    """Independent Philox stream; drawing from one purpose never shifts another."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, STREAMS[purpose]])))
