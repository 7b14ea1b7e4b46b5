"""Named random substreams derived from one master seed."""

import zlib

import numpy as np


def substream(master_seed: int, name: str) -> np.random.Generator:
    """Return the generator for ``name`` under ``master_seed``.

    The same (seed, name) pair always yields the same stream, independent of
    how many other substreams were drawn before it.
    """
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng([master_seed, key])
