"""Seed splitting.

All randomness comes from Philox (counter-based) bit generators. A master
seed expands into independent named streams by keying a ``SeedSequence`` with
``(stream_id, index)``, so e.g. the dropout stream never shares state with the
per-client batch streams and changing the dropout rate leaves batch draws
untouched.
"""

import numpy as np

PARTITION = 1
CLIENT = 2
DROPOUT = 3
PROBE = 4
SCHEDULE = 5
TRAIN_DATA = 6
TEST_DATA = 7
INIT = 8


def philox(seed):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def stream(master_seed, stream_id, index=0):
    """Generator for the named sub-stream ``(stream_id, index)`` of ``master_seed``."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(stream_id), int(index)))
    return np.random.Generator(np.random.Philox(ss))


def stream_seed(master_seed, stream_id, index=0):
    """Integer seed for APIs that take a seed rather than a generator."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(stream_id), int(index)))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
