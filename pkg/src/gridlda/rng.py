"""Seed derivation: every random stream is a PCG64 generator derived from one
root seed plus an integer tag path, so runs are reproducible and streams are
independent without global state."""

import numpy as np

# Tag namespaces for derived streams.
STREAM_SHUFFLE = 1
STREAM_SAMPLER = 2
STREAM_PREDICT = 3
STREAM_INIT = 4
STREAM_EVAL = 5


def derive(root_seed, *tags):
    """Generator for the stream identified by (root_seed, *tags)."""
    seq = np.random.SeedSequence(entropy=int(root_seed), spawn_key=tuple(int(t) for t in tags))
    return np.random.Generator(np.random.PCG64(seq))


def generator_state(gen):
    """JSON-serializable state of a generator."""
    return gen.bit_generator.state


def restore_generator(state):
    """Rebuild a generator from generator_state output."""
    gen = np.random.Generator(np.random.PCG64())
    gen.bit_generator.state = state
    return gen
