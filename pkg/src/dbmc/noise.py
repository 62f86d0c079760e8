"""Seed-addressed standard-normal streams.

Every path of an ensemble owns one stream, keyed by ``(master_seed, path_index)``.
The bit generator is numpy's counter-based Philox4x64-10 with the key set to
``(master_seed, path_index)`` and the counter starting at zero, so a path's
draws never depend on which other paths were generated, or in which order.
Normals come from numpy's ziggurat transform (``Generator.standard_normal``).

Noise fields are laid out row-major over lattice sites and time-major within a
path: the field for step ``t`` occupies cursor positions ``[t*L*L, (t+1)*L*L)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

#: Identifier byte stored in database files; bump if the generator or the
#: normal transform ever changes.
GENERATOR_ID = 1
GENERATOR_NAME = "numpy Philox4x64-10 key=(master_seed, path_index), ziggurat normals"

_U64 = (1 << 64) - 1


@dataclass
class NoiseStream:
    master_seed: int
    path_index: int
    cursor: int = 0
    _gen: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (0 <= self.master_seed <= _U64):
            raise ValueError(f"master_seed must be a 64-bit unsigned integer, got {self.master_seed}")
        if not (0 <= self.path_index <= _U64):
            raise ValueError(f"path_index must be a 64-bit unsigned integer, got {self.path_index}")
        if self.cursor != 0:
            raise ValueError("streams are created at cursor 0")
        bitgen = np.random.Philox(key=np.array([self.master_seed, self.path_index], dtype=np.uint64))
        self._gen = np.random.Generator(bitgen)

    def draw(self, shape) -> np.ndarray:
        """Next ``prod(shape)`` normals, filled in C order."""
        out = self._gen.standard_normal(shape)
        self.cursor += out.size
        return out

    def fill(self, out: np.ndarray) -> np.ndarray:
        """In-place variant of :meth:`draw` for a preallocated float64 buffer."""
        self._gen.standard_normal(out=out)
        self.cursor += out.size
        return out


def make_stream(master_seed: int, path_index: int) -> NoiseStream:
    return NoiseStream(int(master_seed), int(path_index))


def draw_noise_field(stream: NoiseStream, L: int) -> np.ndarray:
    """Draw one L x L noise field (row-major sites) and advance the cursor by L*L."""
    return stream.draw((L, L))
