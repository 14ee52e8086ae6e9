"""Named, independent random substreams derived from one episode seed."""

from __future__ import annotations

import zlib

import numpy as np


def substream(seed: int, name: str) -> np.random.Generator:
    """Return a generator for ``name`` that is independent of every other name.

    Draws on one stream never shift another's, so toggling a noise source
    leaves scene layout and tie-breaks untouched.
    """
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([int(seed), key]))
