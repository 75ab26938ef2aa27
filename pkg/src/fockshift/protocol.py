"""Pulse sequences: spin rotations, spin-dependent rotations, selective
decoupling schedules, Ramsey execution, filter plans, and calibrations.

The Ramsey sequence is R_x(pi/2), drive step 1, R_y(pi) echo, drive step 2,
then a final pi/2 pulse about the axis at phase phi + phi_off + pi.  With
the rotation convention R_alpha(theta) = exp(-i sigma_alpha theta / 2) the
extra pi on the final pulse puts the vacuum on the dark fringe, giving

    P_up = (1 - cos(theta . n - phi)) / 2

per occupation vector n, which is the contract the filters and fit models
rely on.  phi_off = sum_j theta_j / 2 compensates the +1/2 offset of each
mode's dispersive phase and is always applied virtually through the final
pulse phase.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import curve_fit

from .dynamics import DriveSegment, dephase, dispersive_coefficients, evolve_segment
from .errors import CalibrationError, SchedulingError
from .space import HilbertSpace
from .states import fock_state, is_density, prob_up, to_density

# Dark-fringe convention: the final pi/2 pulse carries this extra phase so a
# vacuum input returns to |down> at phi = 0.
FINAL_PHASE_SHIFT = math.pi

RATIO_TOLERANCE = 1e-9


def _stark_rate(segment: DriveSegment) -> float:
    return -segment.omega_rabi**2 / (4.0 * segment.carrier_detuning)


def spin_rotation(space: HilbertSpace, angle: float, axis="x", ion: int = 0) -> np.ndarray:
    """R_axis(angle) = exp(-i sigma_axis angle / 2) lifted to the space.

    ``axis`` is "x", "y", "z", or a float phase phi selecting the equatorial
    axis sigma_phi = cos(phi) sigma_x + sin(phi) sigma_y.
    """
    if isinstance(axis, str):
        sigma2 = {"x": _sx, "y": _sy, "z": _sz}[axis]
    else:
        phi = float(axis)
        sigma2 = math.cos(phi) * _sx + math.sin(phi) * _sy
    r2 = math.cos(angle / 2) * np.eye(2) - 1j * math.sin(angle / 2) * sigma2
    out = np.eye(1, dtype=complex)
    for i in range(space.spin_count):
        out = np.kron(out, r2 if i == ion else np.eye(2, dtype=complex))
    return np.kron(out, np.eye(space.motional_dim, dtype=complex))


_sx = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
_sy = np.array([[0.0, 1.0j], [-1.0j, 0.0]], dtype=complex)
_sz = np.array([[-1.0, 0.0], [0.0, 1.0]], dtype=complex)


def sdr_unitary(space: HilbertSpace, theta, ion: int = 0) -> np.ndarray:
    """Spin-dependent rotation exp(-i sigma_z theta . n_hat / 2), diagonal.

    The +1/2 per-mode offset is deliberately excluded; it is tracked as
    phi_off by the sequences that use this operator.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    angle = space.occupations @ theta
    sz = 2.0 * space.spin_values[:, ion] - 1.0
    return np.diag(np.exp(-1j * sz * angle / 2.0))


def ideal_ramsey_unitary(space: HilbertSpace, theta, phi: float, ion: int = 0) -> np.ndarray:
    """Dispersive-limit sequence unitary V(theta, phi).

    Built from the explicit pulse product with ideal (purely dispersive)
    drive steps, so spin-motion coherences carry the same phases a perfect
    two-segment echo would imprint.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    phi_off = float(theta.sum()) / 2.0
    half = (space.occupations @ theta + theta.sum() / 2.0) / 4.0
    sz = 2.0 * space.spin_values[:, ion] - 1.0
    u1 = np.diag(np.exp(-1j * sz * (-half)))
    u2 = np.diag(np.exp(-1j * sz * half))
    seq = spin_rotation(space, math.pi / 2, "x", ion)
    seq = u1 @ seq
    seq = spin_rotation(space, math.pi, "y", ion) @ seq
    seq = u2 @ seq
    final = spin_rotation(space, math.pi / 2, phi + phi_off + FINAL_PHASE_SHIFT, ion)
    return final @ seq


@dataclass(frozen=True)
class RamseySpec:
    """A scheduled two-step selective-decoupling Ramsey sequence.

    theta is the per-mode phase-angle vector achieved over the full
    sequence; chi_eff the step-averaged shifts (rad/s) so that
    theta_j = 2 chi_eff_j * total_time.
    """

    theta: tuple
    phi: float
    phi_off: float
    segments: tuple
    chi_eff: tuple
    echo_axis: str = "y"
    validate: bool = True

    def __post_init__(self):
        if not self.validate:
            return
        s1, s2 = self.segments
        lhs = s1.duration * s2.carrier_detuning
        rhs = s2.duration * s1.carrier_detuning
        scale = max(abs(lhs), abs(rhs), 1e-30)
        if abs(lhs - rhs) / scale > RATIO_TOLERANCE:
            raise ValueError("segment durations violate t1/t2 = Delta1/Delta2")
        if abs(self.phi_off - sum(self.theta) / 2.0) > 1e-9:
            raise ValueError("phi_off must equal sum(theta)/2")

    @property
    def total_time(self) -> float:
        return self.segments[0].duration + self.segments[1].duration

    def with_total_time(self, total: float) -> "RamseySpec":
        scale = total / self.total_time
        segs = tuple(replace(s, duration=s.duration * scale) for s in self.segments)
        theta = tuple(2.0 * c * total for c in self.chi_eff)
        return replace(self, segments=segs, theta=theta, phi_off=sum(theta) / 2.0)

    def with_phi(self, phi: float) -> "RamseySpec":
        return replace(self, phi=phi)

    def to_json_dict(self) -> dict:
        twopi = 2 * math.pi
        return {
            "theta_rad": list(self.theta),
            "phi_rad": self.phi,
            "phi_off_rad": self.phi_off,
            "chi_eff_hz": [c / twopi for c in self.chi_eff],
            "segments": [s.to_json_dict() for s in self.segments],
            "echo_axis": self.echo_axis,
        }


def analytic_stark_phase(spec: RamseySpec) -> float:
    """Residual carrier Stark phase of the echoed sequence (rad).

    Returned with the sign it appears as a fringe displacement in phi:
    -(Omega^2/2)(t1/Delta1 - t2/Delta2).  Exactly zero whenever the duration
    constraint t1/t2 = Delta1/Delta2 holds.
    """
    s1, s2 = spec.segments
    return -((s1.omega_rabi**2 / 2.0) * (s1.duration / s1.carrier_detuning)
             - (s2.omega_rabi**2 / 2.0) * (s2.duration / s2.carrier_detuning))


def schedule_selective_decoupling(modes, theta_target, omega_rabi, step_detunings,
                                  sideband: str = "blue", phi: float = 0.0,
                                  total_time: float | None = None,
                                  n_ref: int = 0) -> RamseySpec:
    """Solve the two-step schedule for a target phase-angle vector.

    ``step_detunings`` anchors each step to one sideband:
    ((mode_index, delta_1), (mode_index, delta_2)) with delta in rad/s
    measured from that mode's sideband.  Targets are per mode; use nan for
    modes whose angle is unconstrained.  With fixed detunings the achievable
    theta vectors form a ray 2 chi_eff * T, so the solve is a 1-D root find
    in the total time; incompatible targets raise SchedulingError naming the
    achievable ratio.
    """
    omegas = np.array([m.omega for m in modes])
    side = +1 if sideband == "blue" else -1
    carriers = []
    for mode_idx, delta in step_detunings:
        carriers.append(side * omegas[mode_idx] + delta)
    d1, d2 = carriers
    if d1 == 0 or d2 == 0 or d1 + d2 == 0:
        raise SchedulingError("carrier detunings must be nonzero with nonzero sum")
    f1 = d1 / (d1 + d2)
    f2 = d2 / (d1 + d2)
    if f1 <= 0 or f2 <= 0:
        raise SchedulingError("duration fractions are not both positive for these detunings")

    seg1 = DriveSegment(sideband, omega_rabi, d1, 0.0)
    seg2 = DriveSegment(sideband, omega_rabi, d2, 0.0)
    chi1 = dispersive_coefficients(modes, seg1, n_ref=n_ref).chi
    chi2 = dispersive_coefficients(modes, seg2, n_ref=n_ref).chi
    chi_eff = -chi1 * f1 + chi2 * f2

    if total_time is not None:
        t_total = float(total_time)
    else:
        targets = np.atleast_1d(np.asarray(theta_target, dtype=float))
        if targets.size != len(modes):
            raise ValueError("need one target angle (or nan) per mode")
        constrained = ~np.isnan(targets)
        if not constrained.any():
            raise SchedulingError("no target angle given")
        idx = np.flatnonzero(constrained)
        times = targets[idx] / (2.0 * chi_eff[idx])
        t_total = float(times[0])
        if t_total <= 0:
            raise SchedulingError(
                f"target angle {targets[idx[0]]:.4g} needs negative time at "
                f"chi_eff/(2 pi) = {chi_eff[idx[0]] / (2 * math.pi):.4g} Hz"
            )
        achieved = 2.0 * chi_eff * t_total
        err = np.abs(achieved[idx] - targets[idx])
        if np.any(err > 1e-6 * np.maximum(1.0, np.abs(targets[idx]))):
            ratio = chi_eff / chi_eff[idx[0]]
            raise SchedulingError(
                "target angles are not proportional to the achievable ratio "
                f"{np.round(ratio, 6).tolist()} set by the chosen detunings"
            )
    seg1 = replace(seg1, duration=f1 * t_total)
    seg2 = replace(seg2, duration=f2 * t_total)
    theta = tuple(2.0 * c * t_total for c in chi_eff)
    return RamseySpec(
        theta=theta,
        phi=phi,
        phi_off=sum(theta) / 2.0,
        segments=(seg1, seg2),
        chi_eff=tuple(chi_eff),
    )


@dataclass(frozen=True)
class PulseSequence:
    """Ordered pulse list; each entry is ('rotate', axis, angle) or
    ('segment', index) or ('measure',)."""

    ops: tuple


def ramsey_sequence(spec: RamseySpec) -> PulseSequence:
    return PulseSequence(ops=(
        ("rotate", "x", math.pi / 2),
        ("segment", 0),
        ("rotate", spec.echo_axis, math.pi),
        ("segment", 1),
        ("rotate", spec.phi + spec.phi_off + FINAL_PHASE_SHIFT, math.pi / 2),
        ("measure",),
    ))


def run_ramsey(space: HilbertSpace, state: np.ndarray, modes, spec: RamseySpec,
               nonlinear: bool = False, include_stark: bool = False,
               gammas=None, residual_shift: float = 0.0,
               extra_final_phase: float = 0.0) -> np.ndarray:
    """Run the full sequence with simulated drive segments.

    ``gammas`` (per-mode rates, 1/s) applies the dephasing channel after
    each segment and forces a density-operator output.  ``residual_shift``
    injects an uncompensated z rotation accumulating over the total time,
    for calibration studies.  ``extra_final_phase`` adds to the final pulse
    phase (the knob the offset calibration scans).
    """
    if gammas is not None and not is_density(state):
        state = to_density(state)

    def rotate(st, angle, axis):
        u = spin_rotation(space, angle, axis)
        return u @ st @ u.conj().T if is_density(st) else u @ st

    state = rotate(state, math.pi / 2, "x")
    for k, seg in enumerate(spec.segments):
        state = evolve_segment(space, state, modes, seg, nonlinear=nonlinear)
        if gammas is not None:
            state = dephase(space, state, gammas, seg.duration)
        if k == 0:
            state = rotate(state, math.pi, spec.echo_axis)
    if include_stark:
        # The carrier Stark shift is an effective-model sigma_z term; with
        # the echo sign it contributes 2(s1 t1 - s2 t2) to the fringe
        # argument and is applied here as one analytic z rotation, which
        # the duration constraint cancels identically.
        s1, s2 = spec.segments
        arg = 2.0 * (_stark_rate(s1) * s1.duration - _stark_rate(s2) * s2.duration)
        if arg != 0.0:
            state = rotate(state, -arg, "z")
    if residual_shift != 0.0:
        state = rotate(state, -residual_shift * spec.total_time, "z")
    final_phase = spec.phi + spec.phi_off + FINAL_PHASE_SHIFT + extra_final_phase
    state = rotate(state, math.pi / 2, final_phase)
    return state


def simulate_trace(space: HilbertSpace, state: np.ndarray, modes, spec: RamseySpec,
                   times, nonlinear: bool = False, include_stark: bool = False,
                   gammas=None) -> np.ndarray:
    """P_up of the full sequence at each total interaction time."""
    out = np.empty(len(times))
    for i, t in enumerate(times):
        final = run_ramsey(space, state, modes, spec.with_total_time(t),
                           nonlinear=nonlinear, include_stark=include_stark,
                           gammas=gammas)
        out[i] = prob_up(space, final)
    return out


# -- filter plans -------------------------------------------------------------


@dataclass(frozen=True)
class FilterStep:
    """One dispersive-rotation-plus-measurement step; passing requires the
    dark outcome (spin down by default)."""

    theta: tuple
    phi: float
    keep_outcome: int = 0

    def __post_init__(self):
        object.__setattr__(self, "phi", self.phi % (2 * math.pi))


@dataclass(frozen=True)
class FilterPlan:
    steps: tuple
    target: tuple
    mode_assignment: tuple
    phase_mode: str = "exact"

    def to_json_dict(self) -> dict:
        return {
            "phase_mode": self.phase_mode,
            "target": list(self.target),
            "mode_assignment": list(self.mode_assignment),
            "steps": [
                {"theta_rad": list(s.theta), "phi_rad": s.phi, "keep_outcome": s.keep_outcome}
                for s in self.steps
            ],
        }


def parity_filter_plan(n_modes: int, mode_mask, sector: str = "even") -> FilterStep:
    """Single-step parity filter on a subset of modes.

    theta = pi on the masked modes; phi = 0 keeps the even sector, pi the
    odd one (pass outcome is spin down either way).
    """
    if sector not in ("even", "odd"):
        raise ValueError("sector must be 'even' or 'odd'")
    theta = [0.0] * n_modes
    for m in mode_mask:
        theta[m] = math.pi
    return FilterStep(theta=tuple(theta), phi=0.0 if sector == "even" else math.pi)


def binary_filter_plan(target: int, bits: int, mode: int = 0, n_modes: int = 1,
                       phase_mode: str = "exact") -> FilterPlan:
    """Bit-by-bit filter plan selecting |target> on one mode.

    Step ell uses theta_ell = pi / 2^ell.  In "exact" mode the phase is
    pi * target / 2^ell (a true projector onto target mod 2^bits); "bitwise"
    mode uses phi_ell = b_ell * pi from the target's binary digits, which
    passes the target with probability below one whenever a lower bit is
    set.  The two coincide when all bits below each step are zero.
    """
    if phase_mode not in ("exact", "bitwise"):
        raise ValueError("phase_mode must be 'exact' or 'bitwise'")
    if not 0 <= target < 2**bits:
        raise ValueError(f"target {target} needs more than {bits} bits")
    steps = []
    for ell in range(bits):
        theta = [0.0] * n_modes
        theta[mode] = math.pi / 2**ell
        if phase_mode == "exact":
            phi = (math.pi * target / 2**ell) % (2 * math.pi)
        else:
            phi = math.pi * ((target >> ell) & 1)
        steps.append(FilterStep(theta=tuple(theta), phi=phi))
    target_vec = [0] * n_modes
    target_vec[mode] = target
    return FilterPlan(steps=tuple(steps), target=tuple(target_vec),
                      mode_assignment=tuple(mode for _ in range(bits)),
                      phase_mode=phase_mode)


def multimode_filter_plan(targets, bits, phase_mode: str = "exact") -> FilterPlan:
    """Concatenated binary filter plans, one per mode."""
    targets = list(targets)
    bits = list(bits)
    n_modes = len(targets)
    steps = []
    assignment = []
    for mode, (n_star, m) in enumerate(zip(targets, bits)):
        sub = binary_filter_plan(n_star, m, mode=mode, n_modes=n_modes,
                                 phase_mode=phase_mode)
        steps.extend(sub.steps)
        assignment.extend(sub.mode_assignment)
    return FilterPlan(steps=tuple(steps), target=tuple(targets),
                      mode_assignment=tuple(assignment), phase_mode=phase_mode)


def parallel_filter_plan(bits_per_mode, n_ions: int):
    """Pack per-mode bit conditions into simultaneous multi-ion rounds.

    Returns a list of rounds, each a tuple of (mode, bit_level) conditions
    with at most ``n_ions`` entries; the round count is
    ceil(sum(bits) / n_ions).
    """
    if n_ions < 1:
        raise ValueError("need at least one ion")
    conditions = [(mode, ell) for mode, m in enumerate(bits_per_mode) for ell in range(m)]
    return [tuple(conditions[i:i + n_ions]) for i in range(0, len(conditions), n_ions)]


# -- calibrations -------------------------------------------------------------


@dataclass
class SimulatedRamsey:
    """A Ramsey sequence bound to a simulator, used by calibration routines."""

    space: HilbertSpace
    modes: tuple
    spec: RamseySpec
    nonlinear: bool = False
    include_stark: bool = True
    residual_shift: float = 0.0

    def prob_up(self, state: np.ndarray | None = None, total_time: float | None = None,
                phi: float | None = None, extra_final_phase: float = 0.0) -> float:
        spec = self.spec
        if total_time is not None:
            spec = spec.with_total_time(total_time)
        if phi is not None:
            spec = spec.with_phi(phi)
        if state is None:
            state = fock_state(self.space, [0] * self.space.n_modes, 0)
        out = run_ramsey(self.space, state, self.modes, spec,
                         nonlinear=self.nonlinear, include_stark=self.include_stark,
                         residual_shift=self.residual_shift,
                         extra_final_phase=extra_final_phase)
        return prob_up(self.space, out)


DEFAULT_T_CAL = 4e-3


def calibrate_offset(sim: SimulatedRamsey, t_cal: float = DEFAULT_T_CAL,
                     points: int = 41, scan_halfwidth: float | None = None) -> float:
    """Locate the residual phase-offset rate by scanning the final pulse.

    The final pulse phase is advanced by Delta * t_cal over a grid of slope
    values Delta; the vacuum P_up traces a sinusoid whose dip sits at the
    residual rate.  A three-parameter sinusoid fit returns the center; the
    calibration is rejected unless the compensated vacuum point satisfies
    P_up < 0.1.
    """
    if scan_halfwidth is None:
        scan_halfwidth = math.pi / t_cal
    grid = np.linspace(-scan_halfwidth, scan_halfwidth, points)
    pvals = np.array([
        sim.prob_up(total_time=t_cal, phi=0.0, extra_final_phase=d * t_cal)
        for d in grid
    ])

    def model(delta, amp, center, base):
        return base - amp * np.cos((delta - center) * t_cal)

    amp0 = (pvals.max() - pvals.min()) / 2.0
    if amp0 < 0.05:
        raise CalibrationError("no fringe found in the offset scan range")
    c0 = grid[int(np.argmin(pvals))]
    try:
        popt, _ = curve_fit(model, grid, pvals, p0=[amp0, c0, pvals.mean()])
    except RuntimeError as exc:
        raise CalibrationError(f"offset fringe fit failed: {exc}") from exc
    amp, center, _ = popt
    if amp < 0:
        center += math.pi / t_cal
        center = (center + scan_halfwidth) % (2 * scan_halfwidth) - scan_halfwidth
    check = sim.prob_up(total_time=t_cal, phi=0.0, extra_final_phase=center * t_cal)
    if check >= 0.1:
        raise CalibrationError(
            f"post-calibration vacuum check failed: P_up = {check:.3f} >= 0.1"
        )
    # the dip sits where the scanned phase cancels the residual rotation, so
    # the residual rate itself is the negated dip location
    return float(-center)


def calibrate_tpi(sim: SimulatedRamsey, points: int = 121,
                  t_max: float | None = None) -> float:
    """Calibrate the interaction time at which theta_1 reaches pi.

    Probes the |2, 0, ...> Fock state and scans the total interaction time;
    P_up rises to its first maximum and returns to a dip at t_pi, where the
    first mode's angle is pi.  Returns the fitted dip location.
    """
    if sim.space.mode_dims[0] < 3:
        raise CalibrationError("t_pi calibration needs the |2> level in mode 1")
    chi1 = sim.spec.chi_eff[0]
    t_design = math.pi / (2.0 * abs(chi1))
    if t_max is None:
        t_max = 1.4 * t_design
    ns = [0] * sim.space.n_modes
    ns[0] = 2
    probe = fock_state(sim.space, ns, 0)
    grid = np.linspace(t_max / points, t_max, points)
    pvals = np.array([sim.prob_up(state=probe, total_time=t, phi=0.0) for t in grid])
    if pvals.max() - pvals.min() < 0.1:
        raise CalibrationError("no oscillation found in the t_pi scan range")

    def model(t, w, amp, base):
        return base - amp * np.cos(w * t)

    w0 = 4.0 * abs(chi1)
    try:
        popt, _ = curve_fit(model, grid, pvals, p0=[w0, 0.5, 0.5])
    except RuntimeError as exc:
        raise CalibrationError(f"t_pi fringe fit failed: {exc}") from exc
    w = abs(popt[0])
    if w == 0:
        raise CalibrationError("t_pi fit collapsed to zero frequency")
    return float(2.0 * math.pi / w)
