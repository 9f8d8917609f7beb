"""Coupled time integration of the electro-magneto-mechanical system.

One implicit Euler step solves a single Newton system over all unknowns:
armature position and speed, coil current, magnetic node potentials, and
the per-element flux/field unknowns of the network. Hysteresis states
advance inside the iteration along the Tellinen flow with the iterate's
drive direction; eddy fluxes are differential states through their
L_m * dPhi/dt law. Step doubling supplies the local error estimate for
adaptive stepping, and energy integrals accumulate per accepted substep
so the ledger closes to discretization accuracy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Optional

import numpy as np

from magswitch.electrical import (
    AmplifierParams,
    CoilParams,
    DriveWaveform,
    drive_setpoint,
    limiter_current,
    limiter_current_derivative,
)
from magswitch.errors import SolverError
from magswitch.magnetics import (
    CircuitNetwork,
    CompiledNetwork,
    solve_magnetics,
)
from magswitch.material import Diagnostics, advance_polarization, tellinen_slope
from magswitch.mechanics import (
    MechanicalConfig,
    acceleration,
    contact_force,
    contact_force_partials,
    spring_force,
)

DRIVE_MODES = ("amplifier", "voltage", "current")


@dataclass(frozen=True)
class SolverConfig:
    """Integration tolerances and step-size limits."""

    rel_tol: float = 3e-6
    abs_tol_x: float = 1e-10
    abs_tol_v: float = 1e-7
    abs_tol_i: float = 1e-7
    abs_tol_phi: float = 1e-11
    abs_tol_j: float = 1e-7
    dt_init: float = 1e-8
    dt_min: float = 1e-12
    dt_max: float = 5e-5
    newton_tol: float = 1e-9
    newton_max_iter: int = 50
    output_stride: float = 1e-6

    def __post_init__(self):
        if min(self.rel_tol, self.abs_tol_x, self.abs_tol_v, self.abs_tol_i,
               self.abs_tol_phi, self.abs_tol_j) <= 0.0:
            raise ValueError("tolerances must be positive")
        if not (0.0 < self.dt_min <= self.dt_init <= self.dt_max):
            raise ValueError("need dt_min <= dt_init <= dt_max, all positive")
        if self.output_stride <= 0.0:
            raise ValueError("output stride must be positive")


@dataclass(frozen=True)
class EnergyTally:
    """Cumulative energy integrals along the accepted trajectory [J]."""

    input: float = 0.0
    resistive: float = 0.0
    eddy: float = 0.0
    hysteresis: float = 0.0
    contact: float = 0.0


@dataclass(frozen=True)
class SimState:
    """Solver state after an accepted step, plus derived quantities."""

    t: float
    x: float
    v: float
    i: float
    phi: np.ndarray      # eddy branch fluxes [Wb]
    j: np.ndarray        # hysteresis polarizations [T]
    y_full: np.ndarray   # converged unknown vector (warm start)
    force: float         # attractive gap force [N]
    v_coil: float
    i_set: float
    energy: EnergyTally
    row: np.ndarray      # output channels at this state
    hyst_sign: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))


class _NewtonFailure(Exception):
    def __init__(self, norm, history=None):
        self.norm = norm
        self.history = history or []
        super().__init__(f"Newton failed, scaled residual {norm:.3e}")


class SystemModel:
    """Assembled simulation model: network + mechanics + drive chain.

    `mechanics=None` pins the armature at `x_fixed` (gap length). Drive
    modes: 'amplifier' is the current-controlled source with voltage
    limiter, 'voltage' an ideal voltage source, 'current' an ideal
    current source following the setpoint directly.
    """

    def __init__(
        self,
        network: CircuitNetwork,
        coil: CoilParams,
        waveform: DriveWaveform,
        drive_mode: str = "amplifier",
        amplifier: Optional[AmplifierParams] = None,
        mechanics: Optional[MechanicalConfig] = None,
        x_fixed: float = 0.5e-3,
        x_initial: Optional[float] = None,
        v_initial: float = 0.0,
        i_initial: float = 0.0,
    ):
        if drive_mode not in DRIVE_MODES:
            raise ValueError(f"drive_mode must be one of {DRIVE_MODES}")
        if drive_mode == "amplifier" and amplifier is None:
            amplifier = AmplifierParams()
        self.network = network
        self.coil = coil
        self.waveform = waveform
        self.drive_mode = drive_mode
        self.amplifier = amplifier
        self.mechanics = mechanics
        self.x_fixed = x_fixed
        self.x_initial = x_initial
        self.v_initial = v_initial
        self.i_initial = i_initial
        self.diagnostics = Diagnostics()

    @cached_property
    def compiled(self) -> CompiledNetwork:
        compiled = self.network.compile()
        if compiled.n_src != 1:
            raise ValueError("the drive chain couples to exactly one MMF source")
        return compiled

    # -- output channels ----------------------------------------------------

    @cached_property
    def _eddy_channel_info(self):
        """(name, area) per eddy element; area from the series reluctance."""
        info = []
        rel_by_node_b = {el.node_b: el for el in self.compiled.rels}
        for el in self.compiled.eddys:
            partner = rel_by_node_b.get(el.node_a)
            area = partner.element.geometry.area if partner is not None else None
            info.append((el.name, area))
        return info

    @cached_property
    def channel_names(self):
        names = ["t", "x", "v", "gap", "i", "i_set", "v_coil", "phi_work", "force"]
        units = ["s", "m", "m/s", "m", "A", "A", "V", "Wb", "N"]
        for el in self.compiled.gaps:
            names.append(f"b_{el.name}")
            units.append("T")
        for el in self.compiled.rels:
            names.append(f"b_{el.name}")
            units.append("T")
        shell_area_total = 0.0
        for name, area in self._eddy_channel_info:
            if area is not None:
                names.append(f"b_{name.replace('_eddy', '')}")
                units.append("T")
                shell_area_total += area
            else:
                names.append(f"phi_{name}")
                units.append("Wb")
        if shell_area_total > 0.0:
            names.append("b_pole_eff")
            units.append("T")
        for el in self.compiled.hysts:
            names.extend([f"h_{el.name}", f"j_{el.name}", f"b_{el.name}"])
            units.extend(["A/m", "T", "T"])
        names.extend(["e_input", "e_resistive", "e_eddy", "e_hyst", "e_contact",
                      "e_kinetic", "e_spring", "e_magnetic"])
        units.extend(["J"] * 8)
        self._units = units
        return names

    @property
    def channel_units(self):
        self.channel_names  # ensure built
        return self._units

    def build_row(self, t, x, v, i, i_set, v_coil, aux, energy: EnergyTally):
        from magswitch.material import MU0

        compiled = self.compiled
        phi_src = float(aux["phi_src"][0])
        row = [t, x, v, max(x, 0.0), i, i_set, v_coil, phi_src, aux["force"]]
        for k in range(len(compiled.gaps)):
            row.append(float(aux["phi_gap"][k]) / compiled.gap_area[k])
        for k in range(compiled.n_rel):
            row.append(float(aux["b_rel"][k]))
        shell_flux = 0.0
        shell_area = 0.0
        for k, (name, area) in enumerate(self._eddy_channel_info):
            phi = float(aux["phi_eddy"][k])
            if area is not None:
                row.append(phi / area)
                shell_flux += phi
                shell_area += area
            else:
                row.append(phi)
        if shell_area > 0.0:
            row.append(shell_flux / shell_area)
        for k in range(compiled.n_hyst):
            h = float(aux["h_hyst"][k])
            j = float(aux["j_hyst"][k])
            row.extend([h, j, j + MU0 * h])
        if self.mechanics is not None:
            e_kin = 0.5 * self.mechanics.mass * v * v
            e_spr = 0.5 * self.mechanics.spring_rate * (
                x - self.mechanics.spring_unstressed) ** 2
        else:
            e_kin = 0.0
            e_spr = 0.0
        e_mag = compiled.stored_energy(aux, x)
        row.extend([energy.input, energy.resistive, energy.eddy, energy.hysteresis,
                    energy.contact, e_kin, e_spr, e_mag])
        return np.asarray(row, dtype=float)


def initialize(model: SystemModel, cfg: SolverConfig = SolverConfig()) -> SimState:
    """Consistent initial state at t = 0 via a magnetostatic solve."""
    compiled = model.compiled
    mech = model.mechanics
    if mech is not None:
        x0 = model.x_initial if model.x_initial is not None else mech.x_max
    else:
        x0 = model.x_fixed
    v0 = model.v_initial if mech is not None else 0.0
    i0 = model.i_initial
    j0 = np.zeros(compiled.n_hyst)
    mmf0 = compiled.src_turns[0] * i0
    sol = solve_magnetics(compiled, mmf0, x0, j_states=j0)
    y_full = np.concatenate([[x0, v0, i0], sol.y])

    def hyst_fn(k, h):
        return float(j0[k]), 0.0

    def eddy_fn(k, phi):
        return 0.0, 0.0

    aux = compiled.assemble(sol.y, x0, i0, hyst_fn, eddy_fn, want_jacobian=False)
    i_set = drive_setpoint(model.waveform, 0.0)
    v_coil = model.coil.resistance * i0
    energy = EnergyTally()
    row = model.build_row(0.0, x0, v0, i0, i_set, v_coil, aux, energy)
    return SimState(
        t=0.0, x=x0, v=v0, i=i0,
        phi=np.array(aux["phi_eddy"], dtype=float),
        j=j0.copy(), y_full=y_full, force=aux["force"], v_coil=v_coil,
        i_set=i_set, energy=energy, row=row,
        hyst_sign=np.zeros(compiled.n_hyst, dtype=int),
    )


def step(state: SimState, dt: float, model: SystemModel,
         cfg: SolverConfig = SolverConfig()) -> SimState:
    """Advance the coupled system by one implicit Euler step of length dt.

    All residuals (mechanical ODE, drive chain, node conservation and
    element laws) converge in one damped Newton iteration; hysteresis
    branch selection follows the sign of the iterate's field change and
    is frozen if it oscillates. Raises on non-convergence so the caller
    can shrink dt.
    """
    compiled = model.compiled
    mech = model.mechanics
    coil = model.coil
    t1 = state.t + dt
    if model.waveform.interpolation == "hold":
        set1 = drive_setpoint(model.waveform, state.t)
    else:
        set1 = drive_setpoint(model.waveform, t1)

    n_mag = compiled.n_unknowns
    n = 3 + n_mag
    sl_hyst = compiled.sl_hyst
    sl_eddy = compiled.sl_eddy
    phi_src_col = 3 + compiled.sl_src.start
    h_prev = state.y_full[3 + sl_hyst.start: 3 + sl_hyst.stop]
    phi_prev = state.phi
    j_prev = state.j

    # hysteresis branch bookkeeping across Newton iterations
    last_sign = np.zeros(compiled.n_hyst, dtype=int)
    flips = np.zeros(compiled.n_hyst, dtype=int)
    frozen = [None] * compiled.n_hyst

    def hyst_fn(k, h):
        dh = h - h_prev[k]
        sign = 0 if dh == 0.0 else (1 if dh > 0.0 else -1)
        if frozen[k] is None and sign != 0:
            if last_sign[k] != 0 and sign != last_sign[k]:
                flips[k] += 1
                if flips[k] > 3:
                    frozen[k] = last_sign[k]
                    model.diagnostics.branch_sign_freezes += 1
            last_sign[k] = sign
        override = frozen[k]
        table = compiled.hyst_tables[k]
        # single midpoint substep: keeps J smooth in H across Newton
        # iterates (substep-count switches would add jumps below the
        # convergence tolerance); accuracy is owned by step doubling
        j_new = advance_polarization(table, float(h_prev[k]), float(j_prev[k]), h,
                                     max_substeps=1, sign_override=override,
                                     diag=model.diagnostics)
        slope_sign = override if override is not None else sign
        if slope_sign == 0 and k < state.hyst_sign.size:
            # warm start sits at dh = 0; seed the Jacobian slope with the
            # previous step's drive direction so the first Newton
            # direction anticipates the branch response
            slope_sign = int(state.hyst_sign[k])
        djdh = tellinen_slope(table, h, j_new, slope_sign) if slope_sign else 0.0
        return j_new, djdh

    def eddy_fn(k, phi):
        lm = compiled.eddy_lm[k]
        return lm * (phi - phi_prev[k]) / dt, lm / dt

    x_fixed = model.x_fixed
    mech_on = mech is not None

    y_scale = np.concatenate([[1e-3, 1.0, 1.0], compiled.y_scale])
    r_scale = np.concatenate([[1e-6, 1e-3, 1.0], compiled.r_scale])

    def build(z, want_jacobian=True):
        x, v, i = z[0], z[1], z[2]
        aux = compiled.assemble(z[3:], x if mech_on else x_fixed, i,
                                hyst_fn, eddy_fn, want_jacobian=want_jacobian)
        r = np.empty(n)
        if mech_on:
            f_sp = spring_force(x, mech)
            f_c = contact_force(x, v, mech)
            f_tot = f_sp + f_c - aux["force"]
            r[0] = x - state.x - dt * v
            r[1] = v - state.v - dt * f_tot / mech.mass
        else:
            r[0] = x - x_fixed
            r[1] = v
        phidot_src = (z[phi_src_col] - state.y_full[phi_src_col]) / dt
        v_coil = coil.resistance * i + coil.turns * phidot_src
        if model.drive_mode == "amplifier":
            amp = model.amplifier
            r[2] = set1 - amp.conductance * limiter_current(v_coil, amp) - i
        elif model.drive_mode == "voltage":
            r[2] = v_coil - set1
        else:
            r[2] = i - set1
        r[3:] = aux["r"]
        aux["v_coil"] = v_coil
        if not want_jacobian:
            return r, aux, None
        jac = np.zeros((n, n))
        if mech_on:
            dfc_dx, dfc_dv = contact_force_partials(x, v, mech)
            jac[0, 0] = 1.0
            jac[0, 1] = -dt
            jac[1, 0] = -dt / mech.mass * (-mech.spring_rate + dfc_dx - aux["dforce_dx"])
            jac[1, 1] = 1.0 - dt / mech.mass * dfc_dv
            jac[1, 3:3 + compiled.n_free] = dt / mech.mass * aux["dforce_du"]
            jac[3:, 0] = aux["dr_dx"]
        else:
            jac[0, 0] = 1.0
            jac[1, 1] = 1.0
        if model.drive_mode == "amplifier":
            amp = model.amplifier
            dlim = amp.conductance * limiter_current_derivative(v_coil, amp)
            jac[2, 2] = -dlim * coil.resistance - 1.0
            jac[2, phi_src_col] = -dlim * coil.turns / dt
        elif model.drive_mode == "voltage":
            jac[2, 2] = coil.resistance
            jac[2, phi_src_col] = coil.turns / dt
        else:
            jac[2, 2] = 1.0
        jac[3:, 2] = aux["dr_di"]
        jac[3:, 3:] = aux["jac"]
        return r, aux, jac

    z = state.y_full.copy()
    r, aux, jac = build(z)
    norm = float(np.max(np.abs(r / r_scale)))
    iterations = 0
    stalls = 0
    watchdogs = 0
    history = []
    while norm >= cfg.newton_tol:
        iterations += 1
        history.append((norm, int(np.argmax(np.abs(r / r_scale)))))
        if iterations > cfg.newton_max_iter:
            raise _NewtonFailure(norm, history)
        try:
            delta = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError:
            raise _NewtonFailure(norm, history) from None
        if float(np.max(np.abs(delta / y_scale))) < cfg.newton_tol:
            # update below solver precision: the residual floor is
            # floating-point noise from the dPhi/dt differences
            z_try = z + delta
            r, aux, _ = build(z_try, want_jacobian=False)
            z = z_try
            break
        alpha = 1.0
        accepted = None
        full_probe = None
        for _ in range(26):
            # deep backtracking: the limiter's conduction cliff needs
            # alpha down to ~1e-5 when the setpoint jumps
            z_try = z + alpha * delta
            r_try, aux_try, jac_try = build(z_try, want_jacobian=(alpha == 1.0))
            norm_try = float(np.max(np.abs(r_try / r_scale)))
            if alpha == 1.0:
                full_probe = (z_try, r_try, aux_try, jac_try, norm_try)
            if np.isfinite(norm_try) and (norm_try < norm or norm_try < cfg.newton_tol):
                accepted = (z_try, r_try, aux_try, jac_try, norm_try)
                break
            alpha *= 0.5
        if accepted is None:
            if norm < 1e3 * cfg.newton_tol:
                # kink lock: piecewise-linear table laws can pin the
                # residual at a tiny floor where no direction descends
                break
            # watchdog: a stale Jacobian (branch slope switched under the
            # iterate) may require a temporary residual rise; take the
            # full step a limited number of times before giving up
            if watchdogs < 2 and full_probe is not None and np.isfinite(full_probe[4]):
                watchdogs += 1
                accepted = full_probe
            else:
                raise _NewtonFailure(norm, history)
        norm_prev = norm
        z, r, aux, jac, norm = accepted
        # piecewise element laws (branch clamps, table kinks) leave a tiny
        # residual floor; accept it once progress stops well below any
        # physically meaningful scale
        if norm > 0.9 * norm_prev:
            stalls += 1
            if stalls >= 3 and norm < 1e3 * cfg.newton_tol:
                break
        else:
            stalls = 0
        if norm >= cfg.newton_tol and jac is None:
            r, aux, jac = build(z)

    x1 = z[0] if mech_on else x_fixed
    v1, i1 = z[1], z[2]
    phi1 = np.array(aux["phi_eddy"], dtype=float)
    j1 = np.array(aux["j_hyst"], dtype=float)
    h1 = np.array(aux["h_hyst"], dtype=float)
    v_coil1 = aux["v_coil"]
    phidot_src = (z[phi_src_col] - state.y_full[phi_src_col]) / dt
    phidot_eddy = (phi1 - phi_prev) / dt

    res = coil.resistance
    e = state.energy
    input_inc = dt * (res * 0.5 * (state.i**2 + i1**2)
                      + coil.turns * phidot_src * 0.5 * (state.i + i1))
    resistive_inc = dt * res * 0.5 * (state.i**2 + i1**2)
    eddy_inc = dt * float(np.sum(compiled.eddy_lm * phidot_eddy**2))
    hyst_inc = 0.0
    for k in range(compiled.n_hyst):
        vol = compiled.hyst_len[k] * compiled.hyst_area[k]
        h_old = state.y_full[3 + sl_hyst.start + k]
        hyst_inc += vol * 0.5 * (h_old + h1[k]) * (j1[k] - j_prev[k])
    if mech_on:
        fc_old = contact_force(state.x, state.v, mech)
        fc_new = contact_force(x1, v1, mech)
        contact_inc = -dt * 0.5 * (fc_old * state.v + fc_new * v1)
    else:
        contact_inc = 0.0
    energy = EnergyTally(
        input=e.input + input_inc,
        resistive=e.resistive + resistive_inc,
        eddy=e.eddy + eddy_inc,
        hysteresis=e.hysteresis + hyst_inc,
        contact=e.contact + contact_inc,
    )
    dh_step = h1 - h_prev
    hyst_sign = np.where(dh_step > 0.0, 1, np.where(dh_step < 0.0, -1,
                                                    state.hyst_sign)).astype(int)
    row = model.build_row(t1, x1, v1, i1, set1, v_coil1, aux, energy)
    return SimState(
        t=t1, x=x1, v=v1, i=i1, phi=phi1, j=j1, y_full=z,
        force=aux["force"], v_coil=v_coil1, i_set=set1, energy=energy, row=row,
        hyst_sign=hyst_sign,
    )


def _local_error(coarse: SimState, fine: SimState, prev: SimState,
                 cfg: SolverConfig) -> float:
    def term(a, b, ref, abs_tol):
        scale = abs_tol + cfg.rel_tol * max(abs(b), abs(ref))
        return abs(a - b) / scale

    err = term(coarse.x, fine.x, prev.x, cfg.abs_tol_x)
    err = max(err, term(coarse.v, fine.v, prev.v, cfg.abs_tol_v))
    err = max(err, term(coarse.i, fine.i, prev.i, cfg.abs_tol_i))
    for a, b, ref in zip(coarse.phi, fine.phi, prev.phi):
        err = max(err, term(a, b, ref, cfg.abs_tol_phi))
    for a, b, ref in zip(coarse.j, fine.j, prev.j):
        err = max(err, term(a, b, ref, cfg.abs_tol_j))
    return err


@dataclass
class TimeSeries:
    """Uniform-stride sampled channels with units.

    Values are quantized to 9 significant digits when the series is
    built, which makes the CSV round trip exact.
    """

    names: list
    units: list
    data: dict

    def __post_init__(self):
        if len(self.names) != len(self.units):
            raise ValueError("names and units must align")
        n_rows = {len(self.data[k]) for k in self.names}
        if len(n_rows) > 1:
            raise ValueError("all channels must have the same length")

    def __len__(self):
        return len(self.data[self.names[0]])

    def column(self, name) -> np.ndarray:
        return self.data[name]

    @property
    def t(self) -> np.ndarray:
        return self.data["t"]

    def to_csv(self, path, metadata: Optional[dict] = None):
        with open(path, "w", encoding="utf-8") as fh:
            for key, value in (metadata or {}).items():
                fh.write(f"# {key} = {value}\n")
            fh.write(",".join(f"{n} [{u}]" for n, u in zip(self.names, self.units)))
            fh.write("\n")
            cols = [self.data[n] for n in self.names]
            for row in zip(*cols):
                fh.write(",".join(f"{v:.9g}" for v in row))
                fh.write("\n")

    @classmethod
    def from_csv(cls, path) -> "TimeSeries":
        from magswitch.errors import DataFormatError

        names, units, rows = [], [], []
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                if not names:
                    for token in line.split(","):
                        token = token.strip()
                        if "[" in token and token.endswith("]"):
                            name, unit = token.rsplit("[", 1)
                            names.append(name.strip())
                            units.append(unit[:-1])
                        else:
                            names.append(token)
                            units.append("")
                    continue
                parts = line.split(",")
                if len(parts) != len(names):
                    raise DataFormatError(
                        f"expected {len(names)} columns, found {len(parts)}",
                        path=str(path), line=lineno,
                    )
                try:
                    rows.append([float(p) for p in parts])
                except ValueError:
                    raise DataFormatError("non-numeric value", path=str(path),
                                          line=lineno) from None
        if not names:
            raise DataFormatError("missing header row", path=str(path))
        arr = np.asarray(rows, dtype=float)
        data = {n: arr[:, k] if arr.size else np.empty(0) for k, n in enumerate(names)}
        return cls(names=names, units=units, data=data)


def _quantize9(values: np.ndarray) -> np.ndarray:
    return np.asarray([float(f"{v:.9g}") for v in values])


def integrate(model: SystemModel, t_end: float,
              cfg: SolverConfig = SolverConfig()) -> tuple[TimeSeries, SimState]:
    """Adaptive implicit integration from t = 0 to t_end.

    Each accepted step passes a step-doubling error test (one full step
    against two half steps; the half-step solution is kept). Steps are
    clipped so waveform breakpoints land exactly on step boundaries.
    Returns the uniformly strided series and the terminal state.
    """
    state = initialize(model, cfg)
    samples = [(state.t, state.row)]
    if t_end < 0.0:
        raise ValueError("t_end must be non-negative")
    if t_end > 0.0:
        breakpoints = [t for t in model.waveform.times if 0.0 < t < t_end]
        breakpoints.append(t_end)
        dt = min(cfg.dt_init, t_end)
        t_guard = 1e-15 * max(t_end, 1.0)
        rejects_in_a_row = 0
        while state.t < t_end - t_guard:
            next_stop = next((b for b in breakpoints if b > state.t + t_guard), t_end)
            gap = next_stop - state.t
            # absorb slivers (never leave a remainder much smaller than
            # dt), but only while the controller is accepting steps
            if rejects_in_a_row == 0 and gap <= 1.5 * dt:
                dt_try = gap
            else:
                dt_try = min(dt, gap)
            try:
                coarse = step(state, dt_try, model, cfg)
                half = step(state, 0.5 * dt_try, model, cfg)
                fine = step(half, 0.5 * dt_try, model, cfg)
            except _NewtonFailure as exc:
                dt = 0.5 * dt_try
                rejects_in_a_row += 1
                if dt < cfg.dt_min or rejects_in_a_row > 80:
                    raise SolverError(
                        f"step size collapsed below dt_min at t = {state.t:.6e} s",
                        residual_report={"t": state.t, "dt": dt_try, "norm": exc.norm},
                    ) from exc
                continue
            err = _local_error(coarse, fine, state, cfg)
            if err <= 1.0 or dt_try <= 2.0 * cfg.dt_min:
                state = fine
                samples.append((state.t, state.row))
                factor = 5.0 if err == 0.0 else min(5.0, max(0.3, 0.9 * err**-0.5))
                dt = min(cfg.dt_max, dt_try * factor)
                rejects_in_a_row = 0
            else:
                dt = max(cfg.dt_min, dt_try * max(0.1, 0.9 * err**-0.5))
                rejects_in_a_row += 1
                if rejects_in_a_row > 200:
                    raise SolverError(
                        f"error control cannot make progress at t = {state.t:.6e} s",
                        residual_report={"t": state.t, "err": err},
                    )

    names = model.channel_names
    units = model.channel_units
    t_samples = np.asarray([s[0] for s in samples])
    rows = np.asarray([s[1] for s in samples])
    if t_end <= 0.0:
        t_out = np.array([0.0])
    else:
        n_strides = int(math.floor(t_end / cfg.output_stride + 1e-9))
        t_out = np.arange(n_strides + 1) * cfg.output_stride
        if t_out[-1] < t_end - 1e-15:
            t_out = np.append(t_out, t_end)
    data = {}
    for k, name in enumerate(names):
        col = np.interp(t_out, t_samples, rows[:, k])
        data[name] = _quantize9(col)
    data["t"] = _quantize9(t_out)
    return TimeSeries(names=names, units=units, data=data), state


@dataclass
class EnergyLedger:
    """Energy bookkeeping over a simulated series [J].

    Stored terms are deltas between the final and initial sample; the
    residual is input minus all sinks and stores and should vanish for a
    well-resolved run. Contact loss includes the elastic energy still
    stored while seated on a stop.
    """

    input: float
    resistive_loss: float
    eddy_loss: float
    hysteresis_loss: float
    contact_loss: float
    kinetic_delta: float
    spring_delta: float
    magnetic_delta: float
    residual: float
    residual_fraction: float


def energy_ledger(series: TimeSeries, model: Optional[SystemModel] = None) -> EnergyLedger:
    """Close the energy balance of a simulated series."""
    required = ["e_input", "e_resistive", "e_eddy", "e_hyst", "e_contact",
                "e_kinetic", "e_spring", "e_magnetic"]
    missing = [c for c in required if c not in series.data]
    if missing:
        raise ValueError(f"series lacks energy channels: {missing}")

    def total(name):
        col = series.column(name)
        return float(col[-1] - col[0])

    input_e = total("e_input")
    ledger = EnergyLedger(
        input=input_e,
        resistive_loss=total("e_resistive"),
        eddy_loss=total("e_eddy"),
        hysteresis_loss=total("e_hyst"),
        contact_loss=total("e_contact"),
        kinetic_delta=total("e_kinetic"),
        spring_delta=total("e_spring"),
        magnetic_delta=total("e_magnetic"),
        residual=0.0,
        residual_fraction=0.0,
    )
    residual = ledger.input - (
        ledger.resistive_loss + ledger.eddy_loss + ledger.hysteresis_loss
        + ledger.contact_loss + ledger.kinetic_delta + ledger.spring_delta
        + ledger.magnetic_delta
    )
    ledger.residual = residual
    ledger.residual_fraction = abs(residual) / max(abs(ledger.input), 1e-30)
    return ledger
