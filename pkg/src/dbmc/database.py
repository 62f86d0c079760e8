"""Setup stage: control values at nominal parameters, plus the on-disk format.

File layout (little-endian throughout)::

    header   "DBMC" u16 version, u8 generator_id, u8 observable, u64 master_seed,
             u64 n_paths, u16 k, u32 L, u32 n_steps, f64 dt, f64 dx, f64 chi,
             f64 diffusion, u8 boundary, u8 initial_condition, f64 initial_value,
             2 x u32 point_site, u32 point_time_step, k x f64 nominals
    payload  N x k f64 controls (row-major), k x f64 means
    trailer  u64 checksum = blake2b-64 over header and payload

Random inputs are never stored; row ``j`` is regenerated from the stream
address ``(master_seed, j)``.
"""
from __future__ import annotations

import hashlib
import os
import struct
from dataclasses import dataclass

import numpy as np

from .noise import GENERATOR_ID
from .tdgl import BOUNDARIES, INITIAL_CONDITIONS, ModelConfig, Observable, simulate_paths

MAGIC = b"DBMC"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHBBQQHIIddddBBdIII")
_TRAILER = struct.Struct("<Q")


class FormatError(ValueError):
    """Not a database file, an unsupported version, or a truncated one."""


class ChecksumError(ValueError):
    """Stored checksum does not match the file contents."""


def _checksum(data: bytes) -> int:
    return int.from_bytes(hashlib.blake2b(data, digest_size=8).digest(), "little")


@dataclass(eq=False)
class Database:
    master_seed: int
    n_paths: int
    model: ModelConfig
    nominals: np.ndarray
    observable_kind: Observable
    controls: np.ndarray
    means: np.ndarray
    generator_id: int = GENERATOR_ID

    def __post_init__(self):
        self.nominals = np.asarray(self.nominals, dtype=float).reshape(-1)
        self.controls = np.asarray(self.controls, dtype=float)
        self.means = np.asarray(self.means, dtype=float).reshape(-1)
        self.observable_kind = Observable.parse(self.observable_kind)
        k = self.nominals.size
        if k < 1 or np.any(np.diff(self.nominals) <= 0):
            raise ValueError("nominals must be non-empty and strictly increasing")
        if self.controls.shape != (self.n_paths, k):
            raise ValueError(f"controls shape {self.controls.shape} != ({self.n_paths}, {k})")
        if self.means.size != k:
            raise ValueError("one mean per nominal required")
        if not np.all(np.isfinite(self.controls)):
            raise ValueError("controls contain non-finite values")
        if self.model.theta is not None:
            self.model = self.model.with_theta(None)

    @property
    def k(self) -> int:
        return self.nominals.size

    def header(self) -> dict:
        m = self.model
        return {
            "format_version": FORMAT_VERSION,
            "generator_id": self.generator_id,
            "observable": self.observable_kind.name,
            "master_seed": self.master_seed,
            "n_paths": self.n_paths,
            "k": self.k,
            "lattice_size": m.lattice_size,
            "n_steps": m.n_steps,
            "dt": m.dt,
            "dx": m.dx,
            "chi": m.chi,
            "diffusion": m.diffusion,
            "boundary": m.boundary,
            "initial_condition": m.initial_condition,
            "initial_value": m.initial_value,
            "point_site": m.point_site,
            "point_time_step": m.point_time_step,
            "nominals": self.nominals.tolist(),
            "means": self.means.tolist(),
        }

    def to_bytes(self) -> bytes:
        m = self.model
        head = _HEADER.pack(MAGIC, FORMAT_VERSION, self.generator_id, int(self.observable_kind),
                            self.master_seed, self.n_paths, self.k, m.lattice_size, m.n_steps,
                            m.dt, m.dx, m.chi, m.diffusion, BOUNDARIES.index(m.boundary),
                            INITIAL_CONDITIONS.index(m.initial_condition), m.initial_value,
                            m.point_site[0], m.point_site[1], m.point_time_step)
        body = (head + self.nominals.astype("<f8").tobytes()
                + np.ascontiguousarray(self.controls).astype("<f8").tobytes()
                + self.means.astype("<f8").tobytes())
        return body + _TRAILER.pack(_checksum(body))

    @classmethod
    def from_bytes(cls, data: bytes) -> "Database":
        if len(data) < _HEADER.size + _TRAILER.size:
            raise FormatError("file too short for a database header")
        (magic, version, gen_id, obs, seed, n, k, L, T, dt, dx, chi, diff,
         boundary, init, init_value, pi, pj, pstep) = _HEADER.unpack_from(data, 0)
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r}")
        if version != FORMAT_VERSION:
            raise FormatError(f"unsupported format version {version}")
        expected = _HEADER.size + 8 * (k + n * k + k) + _TRAILER.size
        if len(data) != expected:
            raise FormatError(f"expected {expected} bytes, found {len(data)} (truncated or padded file)")
        body = data[:-_TRAILER.size]
        (stored,) = _TRAILER.unpack_from(data, len(body))
        if stored != _checksum(body):
            raise ChecksumError("checksum mismatch")
        try:
            model = ModelConfig(theta=None, chi=chi, diffusion=diff, dt=dt, dx=dx, lattice_size=L, n_steps=T,
                                boundary=BOUNDARIES[boundary], initial_condition=INITIAL_CONDITIONS[init],
                                initial_value=init_value, point_site=(pi, pj), point_time_step=pstep)
            obs_kind = Observable(obs)
        except (ValueError, IndexError) as exc:
            raise FormatError(f"invalid header field: {exc}") from exc
        off = _HEADER.size
        nominals = np.frombuffer(data, "<f8", k, off).astype(float)
        off += 8 * k
        controls = np.frombuffer(data, "<f8", n * k, off).astype(float).reshape(n, k)
        off += 8 * n * k
        means = np.frombuffer(data, "<f8", k, off).astype(float)
        return cls(master_seed=seed, n_paths=n, model=model, nominals=nominals, observable_kind=obs_kind,
                   controls=controls, means=means, generator_id=gen_id)

    def __eq__(self, other):
        if not isinstance(other, Database):
            return NotImplemented
        return self.to_bytes() == other.to_bytes()


def build_database(model: ModelConfig, nominals, observable, n_paths: int, master_seed: int,
                   workers: int = 1) -> Database:
    """Simulate ``n_paths`` random inputs at every nominal and record their control values.

    All nominals of path ``j`` share the stream ``(master_seed, j)``.
    """
    nominals = np.asarray(nominals, dtype=float).reshape(-1)
    if nominals.size == 0:
        raise ValueError("at least one nominal parameter is required")
    if np.any(np.diff(nominals) <= 0):
        raise ValueError("nominals must be strictly increasing")
    if n_paths < 2:
        raise ValueError(f"n_paths must be >= 2, got {n_paths}")
    kind = Observable.parse(observable)
    obs = simulate_paths(model, nominals, master_seed, np.arange(n_paths), workers=workers)
    controls = np.ascontiguousarray(obs[:, :, kind - 1])
    means = controls.mean(axis=0)
    return Database(master_seed=int(master_seed), n_paths=int(n_paths), model=model.with_theta(None),
                    nominals=nominals, observable_kind=kind, controls=controls, means=means)


def save_database(db: Database, path) -> None:
    data = db.to_bytes()
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def load_database(path) -> Database:
    with open(path, "rb") as fh:
        return Database.from_bytes(fh.read())


def resample_indices(db: Database | int, n: int, seed: int) -> np.ndarray:
    """``n`` row indices drawn uniformly with replacement from the database."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    size = db if isinstance(db, (int, np.integer)) else db.n_paths
    return np.random.default_rng(seed).integers(0, size, size=n, dtype=np.int64)
