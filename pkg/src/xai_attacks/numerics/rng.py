"""Named, seedable random streams derived from one master seed."""

import zlib

import numpy as np


def _name_key(name):
    return zlib.crc32(str(name).encode("utf-8"))


def make_rng(master_seed, *names):
    """Return a generator for the stream ``names`` under ``master_seed``.

    The same ``(master_seed, names)`` always yields the same stream, and
    distinct name paths yield statistically independent streams, so each
    experiment component (data, model, explainer, attack, ...) and each
    parallel worker can own its substream without sharing state.
    """
    key = tuple(_name_key(n) for n in names)
    ss = np.random.SeedSequence(int(master_seed), spawn_key=key)
    return np.random.default_rng(ss)


def derive_seed(master_seed, *names):
    """Integer seed for libraries that take plain ints (e.g. torch)."""
    key = tuple(_name_key(n) for n in names)
    ss = np.random.SeedSequence(int(master_seed), spawn_key=key)
    return int(ss.generate_state(1, dtype=np.uint32)[0])
