"""Binary field snapshots.

Layout (all little-endian):

    bytes 0..3     b"MKG1"
    bytes 4..11    uint64 length N of the metadata
    next N bytes   UTF-8 JSON metadata
    then           12 float64 arrays of n^3 values each, C order, in the order
                   phi_re, phi_im, pi_re, pi_im, a0, a1, a2, a3, adot0, adot1, adot2, adot3

The metadata holds t, eps, delta, m, p, u0, L, n, dt, scheme, phi_max0 and
any extra keys the writer adds (for example the launch parameters).
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .evolution import FieldState
from .grid import GridSpec

MAGIC = b"MKG1"
FIELD_ORDER = (
    "phi_re", "phi_im", "pi_re", "pi_im",
    "a0", "a1", "a2", "a3",
    "adot0", "adot1", "adot2", "adot3",
)


def _arrays(state: FieldState):
    yield state.phi.real
    yield state.phi.imag
    yield state.pi.real
    yield state.pi.imag
    yield from state.a_tilde
    yield from state.a_tilde_dot


def write_snapshot(path, state: FieldState, extra: dict | None = None) -> Path:
    g = state.grid
    meta = {
        "t": state.t,
        "eps": state.eps,
        "delta": state.delta,
        "m": state.m,
        "p": state.p,
        "u0": list(state.u0),
        "L": g.L,
        "n": g.n,
        "dt": g.dt,
        "scheme": g.scheme,
        "phi_max0": state.phi_max0,
    }
    if extra:
        meta.update(extra)
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for a in _arrays(state):
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())
    return path


def read_metadata(path) -> dict:
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise ValueError(f"{path} is not an MKG1 snapshot")
        (size,) = struct.unpack("<Q", fh.read(8))
        return json.loads(fh.read(size).decode("utf-8"))


def read_snapshot(path) -> tuple[FieldState, dict]:
    """(state, metadata) from a snapshot file."""
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise ValueError(f"{path} is not an MKG1 snapshot")
        (size,) = struct.unpack("<Q", fh.read(8))
        meta = json.loads(fh.read(size).decode("utf-8"))
        n = int(meta["n"])
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != 12 * n**3:
        raise ValueError(f"{path}: expected {12 * n**3} values, found {data.size}")
    arr = data.reshape(12, n, n, n).astype(float)
    grid = GridSpec(meta["L"], n, meta.get("dt", 0.0), meta.get("scheme", "spectral"))
    state = FieldState(
        t=meta["t"],
        phi=arr[0] + 1j * arr[1],
        pi=arr[2] + 1j * arr[3],
        a_tilde=arr[4:8].copy(),
        a_tilde_dot=arr[8:12].copy(),
        eps=meta["eps"],
        delta=meta["delta"],
        m=meta["m"],
        p=meta["p"],
        u0=tuple(meta["u0"]),
        grid=grid,
        phi_max0=meta.get("phi_max0", 0.0),
    )
    return state, meta


def list_snapshots(directory) -> list[Path]:
    return sorted(Path(directory).glob("*.mkg"))
