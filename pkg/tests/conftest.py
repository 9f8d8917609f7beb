"""Shared fixtures: synthetic material loops with known analytic shape."""

import numpy as np
import pytest

from magswitch.material import (
    BHCurve,
    TellinenTable,
    differentiate_loop,
    select_grid,
    symmetrize_loop,
)

# Loop parameters echoing the measured X6CrMoS17 values: saturation
# polarization 1.54 T, coercivity 121 A/m. The width parameter sets the
# peak branch slope Js/w.
JS = 1.54
HC = 121.0
W = 92.6


def tanh_branches(js=JS, hc=HC, w=W, h_max=2000.0, n=801):
    """Point-symmetric major loop with tanh-shaped branches."""
    h = np.linspace(-h_max, h_max, n)
    j_fall = js * np.tanh((h + hc) / w)
    j_rise = js * np.tanh((h - hc) / w)
    return (
        BHCurve(h, j_fall, kind="falling_branch"),
        BHCurve(h, j_rise, kind="rising_branch"),
    )


def build_table(count=61, **kwargs) -> TellinenTable:
    falling, rising = tanh_branches(**kwargs)
    falling, rising = symmetrize_loop(falling, rising)
    return select_grid(differentiate_loop(falling), differentiate_loop(rising), count)


@pytest.fixture(scope="session")
def loop_branches():
    return tanh_branches()


@pytest.fixture(scope="session")
def hyst_table():
    return build_table()


def linear_network(lam=2e-7, turns=100):
    """MMF source shunted by one constant permeance: L = N^2 * Lambda."""
    from magswitch.magnetics import (
        ConstantPermeance,
        MmfSource,
        NetworkElement,
        assemble_network,
    )

    els = [
        NetworkElement("coil", MmfSource(turns), "gnd", "hot"),
        NetworkElement("lam", ConstantPermeance(lam), "hot", "gnd"),
    ]
    return assemble_network(elements=els, reference="gnd")


def eddy_shell_network(lam=2e-7, l_m=500.0, turns=100):
    """Series loop: source, constant permeance, eddy element."""
    from magswitch.magnetics import (
        ConstantPermeance,
        EddyElement,
        MmfSource,
        NetworkElement,
        assemble_network,
    )

    els = [
        NetworkElement("coil", MmfSource(turns), "gnd", "hot"),
        NetworkElement("lam", ConstantPermeance(lam), "hot", "mid"),
        NetworkElement("shell", EddyElement(l_m), "mid", "gnd"),
    ]
    return assemble_network(elements=els, reference="gnd")


def hyst_element_network(table, length=0.1, area=1e-4, turns=100):
    """Source driving one isolated hysteresis reluctance."""
    from magswitch.magnetics import (
        FluxTubeGeometry,
        HysteresisReluctance,
        MmfSource,
        NetworkElement,
        assemble_network,
    )

    geom = FluxTubeGeometry(length=length, area=area)
    els = [
        NetworkElement("coil", MmfSource(turns), "gnd", "hot"),
        NetworkElement("iron", HysteresisReluctance(geom, table), "hot", "gnd"),
    ]
    return assemble_network(elements=els, reference="gnd")
