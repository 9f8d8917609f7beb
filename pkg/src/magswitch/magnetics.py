"""Magnetic element library and network solution.

Networks are graphs of two-terminal elements obeying Hopkinson's law
analogues: permeances (Phi = Lambda*V), nonlinear iron reluctances
(V = H(B)*l), hysteresis reluctances (B = J + mu0*H with J carried as
solver state), eddy elements (V = L_m * dPhi/dt) and MMF sources (N*i).
The solve uses scalar magnetic node potentials plus one extra unknown
per source, iron, hysteresis and eddy element, which keeps every
constitutive law a single residual row and makes the Jacobian analytic.

Sign conventions: element flux is positive from node_a to node_b, an MMF
source raises the potential from node_a to node_b by N*i, and gap forces
are attractive (they act toward closing, i.e. toward smaller gap).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from magswitch.errors import SolverError
from magswitch.material import (
    MU0,
    Diagnostics,
    PermeabilityFit,
    Resistivity,
    TellinenTable,
)

GAP_FLOOR = 1e-9  # numerical floor of the air-gap length [m]


@dataclass(frozen=True)
class FluxTubeGeometry:
    """Prismatic flux tube: length along the flux, area perpendicular."""

    length: float
    area: float

    def __post_init__(self):
        if not (self.length > 0.0 and self.area > 0.0):
            raise ValueError("flux tube length and area must be positive")

    @property
    def volume(self) -> float:
        return self.length * self.area


@dataclass(frozen=True)
class HollowCylinderShell:
    """Concentric shell carrying axial flux; inner radius 0 means solid."""

    r_inner: float
    r_outer: float
    height: float

    def __post_init__(self):
        if not (0.0 <= self.r_inner < self.r_outer):
            raise ValueError("need 0 <= r_inner < r_outer")
        if not self.height > 0.0:
            raise ValueError("shell height must be positive")

    @property
    def area(self) -> float:
        return math.pi * (self.r_outer**2 - self.r_inner**2)


@dataclass(frozen=True)
class NonlinearReluctance:
    """Iron flux tube with the single-valued analytical permeability law."""

    geometry: FluxTubeGeometry
    material: PermeabilityFit


@dataclass(frozen=True)
class HysteresisReluctance:
    """Iron flux tube whose polarization J follows the Tellinen rule."""

    geometry: FluxTubeGeometry
    table: TellinenTable


@dataclass(frozen=True)
class ConstantPermeance:
    permeance: float

    def __post_init__(self):
        if not self.permeance > 0.0:
            raise ValueError("permeance must be positive")


@dataclass(frozen=True)
class AirGapPermeance:
    """Prismatic working gap; its length is the armature position x."""

    area: float

    def __post_init__(self):
        if not self.area > 0.0:
            raise ValueError("gap area must be positive")


@dataclass(frozen=True)
class EddyElement:
    """Magnetic inductance L_m = 1/R_el adding V = L_m * dPhi/dt."""

    l_m: float

    def __post_init__(self):
        if self.l_m < 0.0:
            raise ValueError("magnetic inductance must be non-negative")


@dataclass(frozen=True)
class MmfSource:
    turns: int

    def __post_init__(self):
        if not (isinstance(self.turns, int) and self.turns > 0):
            raise ValueError("turns must be a positive integer")


MagneticElement = Union[
    NonlinearReluctance,
    HysteresisReluctance,
    ConstantPermeance,
    AirGapPermeance,
    EddyElement,
    MmfSource,
]


# ---------------------------------------------------------------------------
# Element laws
# ---------------------------------------------------------------------------


def reluctance_mmf(element: NonlinearReluctance, flux: float) -> float:
    """MMF drop of a nonlinear reluctance at the given flux, odd in flux."""
    b = flux / element.geometry.area
    mu = element.material.mu_r(b)
    return flux * element.geometry.length / (MU0 * mu * element.geometry.area)


def hysteresis_mmf(element: HysteresisReluctance, flux: float, j_state: float) -> float:
    """MMF drop of a hysteresis reluctance with frozen polarization state."""
    b = flux / element.geometry.area
    h = (b - j_state) / MU0
    return h * element.geometry.length


def gap_permeance(area: float, d: float, diag: Optional[Diagnostics] = None) -> float:
    """Prismatic gap permeance mu0*area/d, clamped at the numerical floor."""
    if not area > 0.0:
        raise ValueError("gap area must be positive")
    if d < GAP_FLOOR:
        if diag is not None:
            diag.extrapolations += 1
        d = GAP_FLOOR
    return MU0 * area / d


def gap_force(flux: float, area: float) -> float:
    """Attractive force of one gap element, Phi^2/(2*mu0*A), even in flux."""
    if not area > 0.0:
        raise ValueError("gap area must be positive")
    return flux * flux / (2.0 * MU0 * area)


def shell_partition(outer_radius: float, count: int = 6) -> list[HollowCylinderShell]:
    """Split a solid cylinder into `count` equal-area concentric shells.

    Boundaries sit at r_k = R*sqrt(k/count); the innermost shell is the
    solid core. Returned innermost first. Height is set by the caller via
    `with_height`; here it defaults to 1 m so areas are usable directly.
    """
    if count < 1:
        raise ValueError("need at least one shell")
    if not outer_radius > 0.0:
        raise ValueError("outer radius must be positive")
    bounds = outer_radius * np.sqrt(np.arange(count + 1) / count)
    return [
        HollowCylinderShell(r_inner=float(bounds[k]), r_outer=float(bounds[k + 1]), height=1.0)
        for k in range(count)
    ]


def shell_eddy_resistance(shell: HollowCylinderShell, rho: Resistivity) -> float:
    """Electrical resistance of the azimuthal eddy path around one shell.

    One mean-radius turn: R_el = rho * 2*pi*r_mean / (height * wall).
    """
    wall = shell.r_outer - shell.r_inner
    if wall <= 0.0:
        raise ValueError("shell wall thickness must be positive")
    r_mean = 0.5 * (shell.r_inner + shell.r_outer)
    return rho.rho * 2.0 * math.pi * r_mean / (shell.height * wall)


def eddy_mmf(element: EddyElement, dflux_dt: float) -> float:
    """MMF contribution L_m * dPhi/dt of the eddy path."""
    return element.l_m * dflux_dt


# ---------------------------------------------------------------------------
# Network description
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NetworkElement:
    name: str
    element: MagneticElement
    node_a: str
    node_b: str


@dataclass
class CircuitNetwork:
    """Named two-terminal elements on named nodes with one reference node."""

    elements: list[NetworkElement]
    reference: str
    gap_names: tuple[str, ...] = ()

    def node_names(self) -> list[str]:
        names = []
        for el in self.elements:
            for n in (el.node_a, el.node_b):
                if n not in names:
                    names.append(n)
        return names

    def validate(self, require_gap: bool = False):
        if not self.elements:
            raise ValueError("network has no elements")
        nodes = self.node_names()
        if self.reference not in nodes:
            raise ValueError(f"reference node {self.reference!r} not in network")
        seen_names = set()
        for el in self.elements:
            if el.node_a == el.node_b:
                raise ValueError(f"element {el.name!r} shorts a node to itself")
            if el.name in seen_names:
                raise ValueError(f"duplicate element name {el.name!r}")
            seen_names.add(el.name)
        for g in self.gap_names:
            if g not in seen_names:
                raise ValueError(f"gap element {g!r} is not part of the network")
        if not any(isinstance(el.element, MmfSource) for el in self.elements):
            raise ValueError("network has no MMF source")
        if require_gap and not self.gap_names:
            raise ValueError("actuator network needs at least one gap element")
        # connectivity via union-find
        parent = {n: n for n in nodes}

        def find(n):
            while parent[n] != n:
                parent[n] = parent[parent[n]]
                n = parent[n]
            return n

        for el in self.elements:
            parent[find(el.node_a)] = find(el.node_b)
        roots = {find(n) for n in nodes}
        if len(roots) > 1:
            raise ValueError("network graph is not connected")

    def compile(self) -> "CompiledNetwork":
        return CompiledNetwork(self)


@dataclass(frozen=True)
class ActuatorGeometry:
    """Default pot-magnet geometry: 25 mm diameter, 12.5 mm yoke height,
    9.8 mm inner pole, about 75.4 mm^2 cross-section throughout, 0.5 mm
    nominal working gap crossed twice by the flux."""

    iron_area: float = 75.4e-6
    inner_pole_radius: float = 4.9e-3
    inner_pole_length: float = 12.25e-3
    outer_pole_length: float = 12.25e-3
    armature_path_length: float = 7.35e-3
    base_path_length: float = 7.35e-3
    gap_area_inner: float = 75.4e-6
    gap_area_outer: float = 75.4e-6
    nominal_gap: float = 0.5e-3
    stray_fraction: float = 0.1
    leak_fraction: float = 0.1
    eddy_shell_count: int = 6

    @property
    def iron_path_length(self) -> float:
        return (
            self.inner_pole_length
            + self.outer_pole_length
            + self.armature_path_length
            + self.base_path_length
        )


PRESETS = ("full", "hysteresis_simplified", "eddy_ladder")


def assemble_network(
    preset: Optional[str] = None,
    *,
    fit: Optional[PermeabilityFit] = None,
    table: Optional[TellinenTable] = None,
    resistivity: Optional[Resistivity] = None,
    geometry: ActuatorGeometry = ActuatorGeometry(),
    turns: int = 131,
    elements: Optional[list[NetworkElement]] = None,
    gap_names: tuple[str, ...] = (),
    reference: str = "base_center",
) -> CircuitNetwork:
    """Build a validated network from a topology preset or an explicit list.

    Presets follow the actuator loop coil -> inner pole -> inner gap ->
    armature -> outer gap -> outer pole -> base:

    - `full`: single-valued iron everywhere plus one stray permeance
      across the coil window and one leakage permeance from the yoke
      outer surface to the armature top.
    - `hysteresis_simplified`: the same loop with hysteresis reluctances
      in all iron members and only the coil-window stray path.
    - `eddy_ladder`: `full` with the inner pole split into equal-area
      concentric shells, each a series reluctance + eddy element branch.
    """
    if elements is not None:
        net = CircuitNetwork(elements=list(elements), reference=reference,
                             gap_names=tuple(gap_names))
        net.validate()
        return net
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}; choose from {PRESETS}")
    if fit is None:
        raise ValueError("presets need a permeability fit")
    g = geometry
    lam_gap_nominal = gap_permeance(g.gap_area_inner, g.nominal_gap)
    els: list[NetworkElement] = [
        NetworkElement("coil", MmfSource(turns), "base_center", "drive"),
    ]
    hysteretic = preset == "hysteresis_simplified"
    if hysteretic and table is None:
        raise ValueError("hysteresis preset needs a Tellinen table")

    def iron(name, length, area, a, b):
        geom = FluxTubeGeometry(length=length, area=area)
        if hysteretic:
            return NetworkElement(name, HysteresisReluctance(geom, table), a, b)
        return NetworkElement(name, NonlinearReluctance(geom, fit), a, b)

    if preset == "eddy_ladder":
        if resistivity is None:
            raise ValueError("eddy ladder preset needs a resistivity")
        shells = shell_partition(g.inner_pole_radius, g.eddy_shell_count)
        n = len(shells)
        for k, shell in enumerate(shells):
            shell = HollowCylinderShell(shell.r_inner, shell.r_outer,
                                        height=g.inner_pole_length)
            outside_in = n - k  # paper-style numbering: 1 = outermost
            geom = FluxTubeGeometry(length=g.inner_pole_length, area=shell.area)
            mid = f"pole_mid_{outside_in}"
            els.append(NetworkElement(
                f"shell_{outside_in}_rel", NonlinearReluctance(geom, fit),
                "drive", mid))
            l_m = 1.0 / shell_eddy_resistance(shell, resistivity)
            els.append(NetworkElement(
                f"shell_{outside_in}_eddy", EddyElement(l_m), mid, "pole_top"))
    else:
        els.append(iron("inner_pole", g.inner_pole_length, g.iron_area,
                        "drive", "pole_top"))
    els.append(NetworkElement("gap_inner", AirGapPermeance(g.gap_area_inner),
                              "pole_top", "armature_center"))
    els.append(iron("armature", g.armature_path_length, g.iron_area,
                    "armature_center", "armature_outer"))
    els.append(NetworkElement("gap_outer", AirGapPermeance(g.gap_area_outer),
                              "armature_outer", "outer_top"))
    els.append(iron("outer_pole", g.outer_pole_length, g.iron_area,
                    "outer_top", "base_outer"))
    els.append(iron("base", g.base_path_length, g.iron_area,
                    "base_outer", "base_center"))
    if g.stray_fraction > 0.0:
        els.append(NetworkElement(
            "stray_window", ConstantPermeance(g.stray_fraction * lam_gap_nominal),
            "pole_top", "outer_top"))
    if not hysteretic and g.leak_fraction > 0.0:
        els.append(NetworkElement(
            "leak_yoke_armature", ConstantPermeance(g.leak_fraction * lam_gap_nominal),
            "armature_outer", "outer_top"))
    net = CircuitNetwork(elements=els, reference="base_center",
                         gap_names=("gap_inner", "gap_outer"))
    net.validate(require_gap=True)
    return net


# ---------------------------------------------------------------------------
# Compiled network: index arrays and residual/Jacobian assembly
# ---------------------------------------------------------------------------


@dataclass
class MagneticSolution:
    fluxes: dict
    mmf_drops: dict
    gap_fluxes: np.ndarray
    force: float
    y: np.ndarray
    newton_iterations: int

    @property
    def gap_flux(self) -> float:
        return float(self.gap_fluxes[0]) if self.gap_fluxes.size else 0.0


class CompiledNetwork:
    """Index-array form of a CircuitNetwork for fast repeated solves.

    Magnetic unknown vector layout:
        [u_free_nodes | phi_src | B_rel | H_hyst | phi_eddy]
    Residual rows follow the same order: one KCL row per free node, then
    one constitutive row per source / iron / hysteresis / eddy element.
    """

    def __init__(self, network: CircuitNetwork):
        network.validate()
        self.network = network
        nodes = [n for n in network.node_names() if n != network.reference]
        self.free_nodes = nodes
        self.n_free = len(nodes)
        index = {n: k for k, n in enumerate(nodes)}
        index[network.reference] = self.n_free  # padded zero-potential slot

        self.cperm = [e for e in network.elements if isinstance(e.element, ConstantPermeance)]
        self.gaps = [e for e in network.elements if isinstance(e.element, AirGapPermeance)]
        self.srcs = [e for e in network.elements if isinstance(e.element, MmfSource)]
        self.rels = [e for e in network.elements if isinstance(e.element, NonlinearReluctance)]
        self.hysts = [e for e in network.elements if isinstance(e.element, HysteresisReluctance)]
        self.eddys = [e for e in network.elements if isinstance(e.element, EddyElement)]

        def idx(els):
            a = np.array([index[e.node_a] for e in els], dtype=int)
            b = np.array([index[e.node_b] for e in els], dtype=int)
            return a, b

        self.cperm_a, self.cperm_b = idx(self.cperm)
        self.cperm_lam = np.array([e.element.permeance for e in self.cperm])
        self.gap_a, self.gap_b = idx(self.gaps)
        self.gap_area = np.array([e.element.area for e in self.gaps])
        self.src_a, self.src_b = idx(self.srcs)
        self.src_turns = np.array([e.element.turns for e in self.srcs], dtype=float)
        self.rel_a, self.rel_b = idx(self.rels)
        self.rel_len = np.array([e.element.geometry.length for e in self.rels])
        self.rel_area = np.array([e.element.geometry.area for e in self.rels])
        self.rel_mat = [e.element.material for e in self.rels]
        self.hyst_a, self.hyst_b = idx(self.hysts)
        self.hyst_len = np.array([e.element.geometry.length for e in self.hysts])
        self.hyst_area = np.array([e.element.geometry.area for e in self.hysts])
        self.hyst_tables = [e.element.table for e in self.hysts]
        self.eddy_a, self.eddy_b = idx(self.eddys)
        self.eddy_lm = np.array([e.element.l_m for e in self.eddys])

        self.n_src = len(self.srcs)
        self.n_rel = len(self.rels)
        self.n_hyst = len(self.hysts)
        self.n_eddy = len(self.eddys)
        o = self.n_free
        self.sl_src = slice(o, o + self.n_src); o += self.n_src
        self.sl_rel = slice(o, o + self.n_rel); o += self.n_rel
        self.sl_hyst = slice(o, o + self.n_hyst); o += self.n_hyst
        self.sl_eddy = slice(o, o + self.n_eddy); o += self.n_eddy
        self.n_unknowns = o

        # typical magnitudes for convergence scaling
        u_scale = 100.0
        phi_scale = 1e-4
        self.y_scale = np.concatenate([
            np.full(self.n_free, u_scale),
            np.full(self.n_src, phi_scale),
            np.ones(self.n_rel),            # B in T
            np.full(self.n_hyst, 1e3),      # H in A/m
            np.full(self.n_eddy, phi_scale),
        ])
        self.r_scale = np.concatenate([
            np.full(self.n_free, phi_scale),  # KCL rows
            np.full(self.n_src + self.n_rel + self.n_hyst + self.n_eddy, u_scale),
        ])

    # -- helpers -----------------------------------------------------------

    def gap_lambda(self, x: float):
        d = max(x, GAP_FLOOR)
        lam = MU0 * self.gap_area / d
        dlam_dx = -lam / d if x > GAP_FLOOR else np.zeros_like(lam)
        return lam, dlam_dx

    def assemble(
        self,
        y: np.ndarray,
        x: float,
        i_coil: float,
        hyst_fn: Callable[[int, float], tuple[float, float]],
        eddy_fn: Callable[[int, float], tuple[float, float]],
        want_jacobian: bool = True,
    ):
        """Residual, Jacobian and coupling blocks at magnetic state y.

        hyst_fn(k, H) -> (J, dJ/dH) closes the polarization update;
        eddy_fn(k, phi) -> (V, dV/dphi) closes the eddy MMF law.
        Returns a dict with residual `r`, Jacobian `jac`, coupling
        vectors `dr_dx`, `dr_di`, per-class fluxes, the total attractive
        gap force and its derivatives.
        """
        nf = self.n_free
        u_pad = np.concatenate([y[:nf], [0.0]])
        r = np.zeros(self.n_unknowns)
        out: dict = {}

        lam_gap, dlam_dx = self.gap_lambda(x)
        v_gap = u_pad[self.gap_a] - u_pad[self.gap_b]
        phi_gap = lam_gap * v_gap

        phi_cperm = self.cperm_lam * (u_pad[self.cperm_a] - u_pad[self.cperm_b])
        phi_src = y[self.sl_src].copy()

        b_rel = y[self.sl_rel]
        phi_rel = b_rel * self.rel_area
        h_rel = np.array([
            m.field_strength(b) for m, b in zip(self.rel_mat, b_rel)
        ]) if self.n_rel else np.zeros(0)

        h_hyst = y[self.sl_hyst]
        j_hyst = np.zeros(self.n_hyst)
        djdh_hyst = np.zeros(self.n_hyst)
        for k in range(self.n_hyst):
            j_hyst[k], djdh_hyst[k] = hyst_fn(k, float(h_hyst[k]))
        phi_hyst = (j_hyst + MU0 * h_hyst) * self.hyst_area

        phi_eddy = y[self.sl_eddy].copy()
        v_eddy = np.zeros(self.n_eddy)
        dv_dphi_eddy = np.zeros(self.n_eddy)
        for k in range(self.n_eddy):
            v_eddy[k], dv_dphi_eddy[k] = eddy_fn(k, float(phi_eddy[k]))

        # KCL rows: flux leaves node_a, enters node_b
        kcl = np.zeros(nf + 1)
        for a, b, phi in (
            (self.gap_a, self.gap_b, phi_gap),
            (self.cperm_a, self.cperm_b, phi_cperm),
            (self.src_a, self.src_b, phi_src),
            (self.rel_a, self.rel_b, phi_rel),
            (self.hyst_a, self.hyst_b, phi_hyst),
            (self.eddy_a, self.eddy_b, phi_eddy),
        ):
            np.add.at(kcl, a, phi)
            np.add.at(kcl, b, -phi)
        r[:nf] = kcl[:nf]

        r[self.sl_src] = (u_pad[self.src_b] - u_pad[self.src_a]) - self.src_turns * i_coil
        r[self.sl_rel] = (u_pad[self.rel_a] - u_pad[self.rel_b]) - h_rel * self.rel_len
        r[self.sl_hyst] = (u_pad[self.hyst_a] - u_pad[self.hyst_b]) - h_hyst * self.hyst_len
        r[self.sl_eddy] = (u_pad[self.eddy_a] - u_pad[self.eddy_b]) - v_eddy

        # attractive force of the gaps and its derivatives
        dfor_dphi = phi_gap / (MU0 * self.gap_area)
        force = float(np.sum(phi_gap**2 / (2.0 * MU0 * self.gap_area)))
        dfor_du = np.zeros(nf + 1)
        np.add.at(dfor_du, self.gap_a, dfor_dphi * lam_gap)
        np.add.at(dfor_du, self.gap_b, -dfor_dphi * lam_gap)
        dforce_dx = float(np.sum(dfor_dphi * dlam_dx * v_gap))

        out.update(
            r=r, phi_gap=phi_gap, phi_cperm=phi_cperm, phi_src=phi_src,
            phi_rel=phi_rel, b_rel=b_rel, phi_hyst=phi_hyst, j_hyst=j_hyst,
            h_hyst=h_hyst, phi_eddy=phi_eddy, v_eddy=v_eddy, h_rel=h_rel,
            force=force, dforce_du=dfor_du[:nf], dforce_dx=dforce_dx,
            lam_gap=lam_gap, v_gap=v_gap,
        )
        if not want_jacobian:
            return out

        jac = np.zeros((self.n_unknowns, self.n_unknowns))
        dr_dx = np.zeros(self.n_unknowns)
        dr_di = np.zeros(self.n_unknowns)

        def kcl_add(a_idx, b_idx, col, dphi):
            # d(KCL)/d(col unknown) for an element between a and b
            for a, b, d in zip(a_idx, b_idx, np.atleast_1d(dphi)):
                if a < nf:
                    jac[a, col] += d
                if b < nf:
                    jac[b, col] -= d

        # permeance-type elements: flux depends on node potentials (and x)
        for a, b, lam, dldx, v in [
            *zip(self.gap_a, self.gap_b, lam_gap, dlam_dx, v_gap),
            *zip(self.cperm_a, self.cperm_b, self.cperm_lam,
                 np.zeros(len(self.cperm)), np.zeros(len(self.cperm))),
        ]:
            for node, sign in ((a, 1.0), (b, -1.0)):
                if node < nf:
                    if a < nf:
                        jac[node, a] += sign * lam
                    if b < nf:
                        jac[node, b] -= sign * lam
                    dr_dx[node] += sign * dldx * v

        # unknown-flux elements: unit entries in KCL columns
        for k in range(self.n_src):
            kcl_add(self.src_a[k:k+1], self.src_b[k:k+1], self.sl_src.start + k, 1.0)
        for k in range(self.n_rel):
            kcl_add(self.rel_a[k:k+1], self.rel_b[k:k+1], self.sl_rel.start + k,
                    self.rel_area[k])
        for k in range(self.n_hyst):
            dphi_dh = (djdh_hyst[k] + MU0) * self.hyst_area[k]
            kcl_add(self.hyst_a[k:k+1], self.hyst_b[k:k+1], self.sl_hyst.start + k,
                    dphi_dh)
        for k in range(self.n_eddy):
            kcl_add(self.eddy_a[k:k+1], self.eddy_b[k:k+1], self.sl_eddy.start + k, 1.0)

        def pot_row(row, a, b, sign_a=1.0):
            if a < nf:
                jac[row, a] += sign_a
            if b < nf:
                jac[row, b] -= sign_a

        for k in range(self.n_src):
            row = self.sl_src.start + k
            pot_row(row, self.src_b[k], self.src_a[k])
            dr_di[row] = -self.src_turns[k]
        for k in range(self.n_rel):
            row = self.sl_rel.start + k
            pot_row(row, self.rel_a[k], self.rel_b[k])
            jac[row, self.sl_rel.start + k] = -self.rel_mat[k].dh_db(float(b_rel[k])) \
                * self.rel_len[k]
        for k in range(self.n_hyst):
            row = self.sl_hyst.start + k
            pot_row(row, self.hyst_a[k], self.hyst_b[k])
            jac[row, self.sl_hyst.start + k] = -self.hyst_len[k]
        for k in range(self.n_eddy):
            row = self.sl_eddy.start + k
            pot_row(row, self.eddy_a[k], self.eddy_b[k])
            jac[row, self.sl_eddy.start + k] = -dv_dphi_eddy[k]

        out.update(jac=jac, dr_dx=dr_dx, dr_di=dr_di)
        return out

    # -- energies ----------------------------------------------------------

    def stored_energy(self, aux: dict, x: float) -> float:
        """Field energy of all storing elements at the assembled state [J]."""
        lam_gap, _ = self.gap_lambda(x)
        e = float(np.sum(aux["phi_gap"] ** 2 / (2.0 * lam_gap))) if len(self.gaps) else 0.0
        if len(self.cperm):
            e += float(np.sum(aux["phi_cperm"] ** 2 / (2.0 * self.cperm_lam)))
        for k in range(self.n_rel):
            vol = self.rel_len[k] * self.rel_area[k]
            e += vol * float(self.rel_mat[k].energy_density(float(aux["b_rel"][k])))
        for k in range(self.n_hyst):
            vol = self.hyst_len[k] * self.hyst_area[k]
            e += vol * 0.5 * MU0 * float(aux["h_hyst"][k]) ** 2
        return e

    def coenergy(self, aux: dict, x: float) -> float:
        """Magnetic co-energy of the single-valued elements [J].

        Only defined for networks without hysteresis elements (their
        co-energy depends on history)."""
        if self.n_hyst:
            raise ValueError("co-energy is undefined for hysteretic networks")
        lam_gap, _ = self.gap_lambda(x)
        e = float(np.sum(aux["phi_gap"] ** 2 / (2.0 * lam_gap))) if len(self.gaps) else 0.0
        if len(self.cperm):
            e += float(np.sum(aux["phi_cperm"] ** 2 / (2.0 * self.cperm_lam)))
        for k in range(self.n_rel):
            vol = self.rel_len[k] * self.rel_area[k]
            e += vol * float(self.rel_mat[k].coenergy_density(float(aux["b_rel"][k])))
        return e

    def flux_dict(self, aux: dict) -> dict:
        fluxes = {}
        for els, key in (
            (self.gaps, "phi_gap"), (self.cperm, "phi_cperm"), (self.srcs, "phi_src"),
            (self.rels, "phi_rel"), (self.hysts, "phi_hyst"), (self.eddys, "phi_eddy"),
        ):
            for k, el in enumerate(els):
                fluxes[el.name] = float(aux[key][k])
        return fluxes

    def mmf_dict(self, aux: dict, y: np.ndarray) -> dict:
        u_pad = np.concatenate([y[: self.n_free], [0.0]])
        drops = {}
        for els, a_idx, b_idx in (
            (self.gaps, self.gap_a, self.gap_b),
            (self.cperm, self.cperm_a, self.cperm_b),
            (self.srcs, self.src_a, self.src_b),
            (self.rels, self.rel_a, self.rel_b),
            (self.hysts, self.hyst_a, self.hyst_b),
            (self.eddys, self.eddy_a, self.eddy_b),
        ):
            for k, el in enumerate(els):
                drops[el.name] = float(u_pad[a_idx[k]] - u_pad[b_idx[k]])
        return drops


def _static_closures(compiled: CompiledNetwork, j_states, eddy_dflux):
    j_states = np.zeros(compiled.n_hyst) if j_states is None else np.asarray(j_states, float)
    eddy_dflux = np.zeros(compiled.n_eddy) if eddy_dflux is None else np.asarray(eddy_dflux, float)
    if j_states.shape != (compiled.n_hyst,):
        raise ValueError("j_states length must match the hysteresis element count")
    if eddy_dflux.shape != (compiled.n_eddy,):
        raise ValueError("eddy_dflux length must match the eddy element count")

    def hyst_fn(k, h):
        return float(j_states[k]), 0.0

    def eddy_fn(k, phi):
        return float(compiled.eddy_lm[k] * eddy_dflux[k]), 0.0

    return hyst_fn, eddy_fn


def solve_magnetics(
    network: CircuitNetwork | CompiledNetwork,
    mmf_drive: float,
    x: float,
    j_states=None,
    eddy_dflux=None,
    y0: Optional[np.ndarray] = None,
    tol: float = 1e-10,
    max_iter: int = 60,
) -> MagneticSolution:
    """Magnetostatic network solve at a given current linkage and gap.

    `mmf_drive` is the applied current linkage in ampere-turns; the coil
    current follows from the first source's turns. Hysteresis elements
    use the frozen polarizations `j_states`; eddy elements contribute
    L_m times the externally supplied flux rates `eddy_dflux`.
    Converges with damped Newton; raises SolverError on failure.
    """
    compiled = network if isinstance(network, CompiledNetwork) else network.compile()
    hyst_fn, eddy_fn = _static_closures(compiled, j_states, eddy_dflux)
    i_coil = mmf_drive / compiled.src_turns[0] if compiled.n_src else 0.0

    y = np.zeros(compiled.n_unknowns) if y0 is None else np.array(y0, dtype=float)
    iterations = 0
    aux = compiled.assemble(y, x, i_coil, hyst_fn, eddy_fn)
    norm = float(np.max(np.abs(aux["r"] / compiled.r_scale)))
    for iterations in range(1, max_iter + 1):
        if norm < tol:
            break
        try:
            step = np.linalg.solve(aux["jac"], -aux["r"])
        except np.linalg.LinAlgError as exc:
            raise SolverError(f"singular magnetic Jacobian: {exc}") from exc
        alpha = 1.0
        for _ in range(12):
            y_try = y + alpha * step
            aux_try = compiled.assemble(y_try, x, i_coil, hyst_fn, eddy_fn)
            norm_try = float(np.max(np.abs(aux_try["r"] / compiled.r_scale)))
            if np.isfinite(norm_try) and (norm_try < norm or norm_try < tol):
                break
            alpha *= 0.5
        else:
            raise SolverError(
                "magnetostatic Newton stalled",
                residual_report={"norm": norm, "iteration": iterations},
            )
        y, aux, norm = y_try, aux_try, norm_try
    else:
        raise SolverError(
            f"magnetostatic Newton did not converge in {max_iter} iterations",
            residual_report={"norm": norm},
        )
    return MagneticSolution(
        fluxes=compiled.flux_dict(aux),
        mmf_drops=compiled.mmf_dict(aux, y),
        gap_fluxes=np.atleast_1d(aux["phi_gap"]).astype(float),
        force=aux["force"],
        y=y,
        newton_iterations=iterations,
    )
