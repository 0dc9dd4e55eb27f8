import math
from pathlib import Path

import pytest

NETLISTS = Path(__file__).resolve().parent.parent / "netlists"

# desk-scale induction machine used throughout the motor tests
IM_PARAMS = "Rs=0.435 Rr=0.816 Lls=2m Llr=2m Lm=69.3m J=0.089 D=0.01 Np=4"
IM_VM = 179.63
F60 = 60.0
W60 = 2.0 * math.pi * F60


def rl_netlist(dt="10u", tstop="16.6666666666667m", extra=""):
    return f"""
VSIN Va 1 0 100 60 0
R Rtot 1 2 5
L Ltot 2 0 10m
.tran {dt} {tstop} {extra}
.end
"""


def rl_exact(t, vm=100.0, r=5.0, l=0.01, w=W60):
    """Series RL current for v = Vm cos(wt), starting from the DC value Vm/R."""
    import numpy as np

    z = complex(r, w * l)
    im = vm / abs(z)
    phi = math.atan2(w * l, r)
    t = np.asarray(t, dtype=float)
    return im * np.cos(w * t - phi) + (vm / r - im * math.cos(phi)) * np.exp(-t * r / l)


def im_stiff_netlist(tstop="0.2", dt0="10u", dtmin="100n", dtmax="100u", ltetol="1e-4", vm=IM_VM):
    return f"""
VSIN Va a 0 {vm} 60 0
VSIN Vb b 0 {vm} 60 120
VSIN Vc c 0 {vm} 60 -120
IM M1 a b c {IM_PARAMS}
.tran {dt0} {tstop} dtmin={dtmin} dtmax={dtmax} ltetol={ltetol}
.end
"""


@pytest.fixture
def netlist_dir():
    return NETLISTS


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
