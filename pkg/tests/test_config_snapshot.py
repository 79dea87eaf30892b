import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mkglab.config import ExperimentConfig, format_config, load_config, parse_config
from mkglab.errors import ConfigInvalid
from mkglab.evolution import build_initial_data, make_perturbation
from mkglab.grid import GridSpec
from mkglab.snapshot import FIELD_ORDER, list_snapshots, read_metadata, read_snapshot, write_snapshot
from mkglab.soliton import SolitonParams

BASIC = """
[physics]
m = 1.0
p = 2.0
eps = 0.1
delta = 0.1

[soliton]
omega = 0.8
theta = 0.0
xi = 0, 0, 0
u = (0, 0, 0.3)   # full velocity

[grid]
L = 16
n = 64
cfl_safety = 0.1

[run]
t_end = 20
snapshot_every = 5
diag_every = 0.5

[perturbation]
seed = 0
amplitude = 0.1
profile = gaussian

[diagnostics]
R0 = 4
u0 = 0, 0, 0.3
track = no
"""


def test_parse_basic():
    cfg = parse_config(BASIC)
    assert cfg.u == (0.0, 0.0, 0.3) and cfg.u0 == (0.0, 0.0, 0.3)
    assert cfg.n == 64 and isinstance(cfg.n, int)
    assert cfg.track is False
    assert cfg.profile == "gaussian"
    assert cfg.h == 0.5
    # largest step under cfl * h / sqrt(3) that divides diag_every
    assert cfg.dt <= 0.1 * 0.5 / 3**0.5
    assert abs(cfg.diag_every / cfg.dt - round(cfg.diag_every / cfg.dt)) < 1e-9


def test_missing_grid_section_is_named():
    text = BASIC.replace("[grid]", "[gridd]")
    with pytest.raises(ConfigInvalid, match="gridd|grid"):
        parse_config(text)
    cut = BASIC[: BASIC.index("[grid]")] + BASIC[BASIC.index("[run]") :]
    with pytest.raises(ConfigInvalid, match=r"\[grid\]"):
        parse_config(cut)


@pytest.mark.parametrize(
    "old,new",
    [
        ("omega = 0.8", "omega = 1.2"),
        ("n = 64", "n = 63"),
        ("u = (0, 0, 0.3)", "u = 0, 0"),
        ("cfl_safety = 0.1", "cfl_safety = 1.5"),
        ("profile = gaussian", "profile = uniform"),
        ("R0 = 4", "R0 = 4\nbogus = 1"),
        ("p = 2.0", "p = two"),
    ],
)
def test_invalid_values(old, new):
    with pytest.raises(ConfigInvalid):
        parse_config(BASIC.replace(old, new))


def test_time_step_key():
    cfg = parse_config(BASIC.replace("cfl_safety = 0.1", "cfl_safety = 0.1\ntime_step = 0.025"))
    assert cfg.dt == 0.025
    with pytest.raises(ConfigInvalid):
        parse_config(BASIC.replace("cfl_safety = 0.1", "cfl_safety = 0.1\ntime_step = 0.03"))


def test_round_trip(tmp_path):
    cfg = parse_config(BASIC)
    path = tmp_path / "c.ini"
    path.write_text(format_config(cfg), encoding="utf-8")
    assert load_config(path) == cfg


def test_with_value():
    cfg = parse_config(BASIC)
    assert cfg.with_value("eps", "0.2").eps == 0.2
    assert cfg.with_value("u", "0, 0.1, 0").u == (0.0, 0.1, 0.0)
    fine = cfg.with_value("h", 0.25)
    assert fine.n == 128
    assert fine.dt == pytest.approx(cfg.dt / 2, rel=1e-14)
    with pytest.raises(ConfigInvalid):
        cfg.with_value("nope", 1)


@settings(max_examples=40, deadline=None)
@given(
    eps=st.floats(0.0, 1.0),
    omega=st.floats(0.0, 0.99),
    n=st.integers(4, 64).map(lambda k: 2 * k),
    seed=st.integers(0, 2**31),
    track=st.booleans(),
    xi=st.tuples(*[st.floats(-5.0, 5.0)] * 3),
)
def test_round_trip_property(eps, omega, n, seed, track, xi):
    cfg = ExperimentConfig(eps=eps, omega=omega, n=n, seed=seed, track=track, xi=xi).validate()
    assert parse_config(format_config(cfg)) == cfg


def _state(prof, grid):
    lam = SolitonParams(0.8, 0.0, (0, 0, 0), (0, 0, 0.3))
    return build_initial_data(grid, lam, prof, 0.2, 0.4, u0=(0, 0, 0.3), perturbation=make_perturbation(grid, lam, 0.1))


def test_snapshot_layout_is_byte_exact(prof08, tmp_path):
    grid = GridSpec(16.0, 16, 0.05)
    s = _state(prof08, grid)
    path = write_snapshot(tmp_path / "a.mkg", s, {"note": "x"})
    raw = path.read_bytes()
    assert raw[:4] == b"MKG1"
    (size,) = struct.unpack("<Q", raw[4:12])
    meta = json.loads(raw[12 : 12 + size])
    assert meta["n"] == 16 and meta["note"] == "x" and meta["dt"] == 0.05
    body = np.frombuffer(raw[12 + size :], dtype="<f8").reshape(len(FIELD_ORDER), 16, 16, 16)
    np.testing.assert_array_equal(body[0], s.phi.real)
    np.testing.assert_array_equal(body[3], s.pi.imag)
    np.testing.assert_array_equal(body[4], s.a_tilde[0])
    np.testing.assert_array_equal(body[11], s.a_tilde_dot[3])
    assert len(raw) == 12 + size + 12 * 16**3 * 8


def test_snapshot_round_trip(prof08, tmp_path):
    grid = GridSpec(16.0, 16, 0.05)
    s = _state(prof08, grid)
    s.t = 1.25
    write_snapshot(tmp_path / "b.mkg", s)
    back, meta = read_snapshot(tmp_path / "b.mkg")
    for name in ("phi", "pi", "a_tilde", "a_tilde_dot"):
        np.testing.assert_array_equal(getattr(back, name), getattr(s, name))
    assert (back.t, back.eps, back.delta, back.u0, back.grid, back.phi_max0) == (s.t, s.eps, s.delta, s.u0, s.grid, s.phi_max0)
    assert read_metadata(tmp_path / "b.mkg") == meta
    assert list_snapshots(tmp_path) == [tmp_path / "b.mkg"]


def test_snapshot_rejects_garbage(tmp_path):
    bad = tmp_path / "bad.mkg"
    bad.write_bytes(b"NOPE" + bytes(20))
    with pytest.raises(ValueError):
        read_snapshot(bad)
