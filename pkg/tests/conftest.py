import numpy as np
import pytest
from hypothesis import settings

from nesr.topology import MasterTopology, Subtopology, preset_master

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


def set_z(sub, j, pos, row, values, bias=0.0):
    """Write one z-node row of learnable unit ``(j, pos)``; unlisted inputs stay disabled."""
    L = sub.master.layer(j)
    W = sub.layer_weights(j)
    Mk = sub.layer_mask(j)
    r = L.z_offsets[pos] + row
    W[r, :] = 0.0
    Mk[r, :] = False
    for col, v in values.items():
        W[r, col] = v
        Mk[r, col] = v != 0.0
    W[r, -1] = bias
    Mk[r, -1] = bias != 0.0
    sub.invalidate()


def empty_sub(master):
    sub = Subtopology(master, mask=np.zeros(master.n_params, dtype=bool))
    sub.skip[:] = 0.0
    return sub


def copy_pos(master, j, source_pos):
    """Position, inside layer ``j``, of the copy unit mirroring ``(j-1, source_pos)``."""
    return master.layer(j).n_learn + source_pos


def resistors_network():
    """r1*r2 / (r1 + r2) written by hand into mastera."""
    m = preset_master("mastera", 2)
    s = empty_sub(m)
    kinds = [k.value for k in m.layer(1).kinds]
    mul, ident = kinds.index("multiply"), kinds.index("identity")
    set_z(s, 1, mul, 0, {0: 1.0})
    set_z(s, 1, mul, 1, {1: 1.0})
    set_z(s, 1, ident, 0, {0: 1.0, 1: 1.0})
    # carry both through layer 2 on copy units
    for pos in (mul, ident):
        s.skip[m.skip_index((2, copy_pos(m, 2, pos)))] = 1.0
    L3 = m.layer(3)
    div = [k.value for k in L3.kinds].index("divide")
    set_z(s, 3, div, 0, {copy_pos(m, 2, mul): 1.0})
    set_z(s, 3, div, 1, {copy_pos(m, 2, ident): 1.0})
    set_z(s, 4, 0, 0, {div: 1.0})
    return s


def linear_network(w=1.0, b=0.0, out=1.0):
    """Single identity hidden unit: out * (w * x + b)."""
    m = MasterTopology(1, [["identity"]], name="tiny")
    s = empty_sub(m)
    set_z(s, 1, 0, 0, {0: w}, b)
    set_z(s, 2, 0, 0, {0: out})
    return s


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, echoed at the end of the session
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
