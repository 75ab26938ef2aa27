"""Hamiltonians and segment-wise time evolution.

Two levels of description live here.  The full Jaynes-Cummings Hamiltonian
(linear or with finite-eta corrections) evolved exactly per segment is the
oracle; the dispersive coefficients (per-mode shift chi_j, residual
beam-splitter couplings K_jk, carrier Stark shift) are the effective model
everything else is checked against.

Sign conventions, fixed throughout the package:
  - blue sideband couples |down, n> <-> |up, n+1> via sigma_+ a^dag;
    red couples |down, n> <-> |up, n-1> via sigma_+ a
  - sideband detuning: delta_j = Delta - omega_j (blue), Delta + omega_j (red)
  - in the rotating frame that removes the drive's time dependence,
    H0 = -hbar sum_j delta_j n_j (blue) or +hbar sum_j delta_j n_j (red),
    and the frame unitary is W(tau) = exp(+i s tau sum_j delta_j n_j) with
    s = +1 (blue), -1 (red)
  - chi_j = -g_j^2 / delta_j with g_j = eta_j Omega / 2, so sign(chi) =
    -sign(delta)
All frequencies are angular (rad/s) unless a name says otherwise.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidityWarning
from .laguerre import bystander_factor, coupling_factor, shift_scaling
from .space import HilbertSpace

VALIDITY_WARN_RATIO = 0.2


@dataclass(frozen=True)
class ModeSpec:
    """One motional mode: secular frequency (rad/s) and Lamb-Dicke parameter."""

    omega: float
    eta: float

    def __post_init__(self):
        if self.omega <= 0:
            raise ValueError("mode frequency must be positive")
        if not 0 < self.eta < 1:
            raise ValueError("Lamb-Dicke parameter must be in (0, 1)")


@dataclass(frozen=True)
class DriveSegment:
    """One constant-detuning drive interval.

    ``carrier_detuning`` is the laser detuning Delta from the carrier
    (rad/s); the per-mode sideband detunings follow from the sideband kind.
    """

    sideband: str
    omega_rabi: float
    carrier_detuning: float
    duration: float

    def __post_init__(self):
        if self.sideband not in ("red", "blue"):
            raise ValueError("sideband must be 'red' or 'blue'")
        if self.duration < 0:
            raise ValueError("duration must be >= 0")
        if self.omega_rabi < 0:
            raise ValueError("Rabi frequency must be >= 0")

    @property
    def sideband_sign(self) -> int:
        return +1 if self.sideband == "blue" else -1

    def sideband_detunings(self, modes) -> np.ndarray:
        """delta_j = Delta - omega_j (blue) or Delta + omega_j (red)."""
        omegas = np.array([m.omega for m in modes])
        return self.carrier_detuning - self.sideband_sign * omegas

    def couplings(self, modes) -> np.ndarray:
        """Sideband couplings g_j = eta_j Omega / 2."""
        etas = np.array([m.eta for m in modes])
        return etas * self.omega_rabi / 2.0

    def to_json_dict(self) -> dict:
        return {
            "sideband": self.sideband,
            "omega_rabi_hz": self.omega_rabi / (2 * np.pi),
            "carrier_detuning_hz": self.carrier_detuning / (2 * np.pi),
            "duration_s": self.duration,
        }


@dataclass(frozen=True)
class DispersiveCoefficients:
    """Effective-model coefficients for one segment (all rad/s)."""

    chi: np.ndarray
    kappa: np.ndarray
    stark: float
    validity_mode: np.ndarray
    validity_pair: np.ndarray

    def to_json_dict(self) -> dict:
        twopi = 2 * np.pi
        return {
            "chi_hz": [c / twopi for c in self.chi],
            "kappa_hz": (self.kappa / twopi).tolist(),
            "stark_hz": self.stark / twopi,
            "validity_mode": self.validity_mode.tolist(),
            "validity_pair": self.validity_pair.tolist(),
        }


@dataclass(frozen=True)
class MultiIonModel:
    """Per-ion dispersive shifts chi_ij (rad/s) for spin-string analytics."""

    chi_matrix: np.ndarray
    eta_matrix: np.ndarray
    omega_rabi: np.ndarray

    def theta(self, t: float) -> np.ndarray:
        """Ion-resolved phase-angle vectors theta_i(t) = t * chi_i."""
        return t * self.chi_matrix


def _stark_shift(segment: DriveSegment) -> float:
    return -segment.omega_rabi**2 / (4.0 * segment.carrier_detuning)


def jc_frame_hamiltonian(space: HilbertSpace, modes, segment: DriveSegment,
                         include_stark: bool = False) -> np.ndarray:
    """Time-independent Jaynes-Cummings Hamiltonian in the detuning frame.

    Linear (Lamb-Dicke) coupling.  Units of hbar = 1, so the result is in
    rad/s.  ``include_stark`` appends the analytic carrier Stark term
    stark * sigma_z with stark = -Omega^2/(4 Delta).
    """
    if len(modes) != space.n_modes:
        raise ValueError("mode list does not match the space")
    deltas = segment.sideband_detunings(modes)
    gs = segment.couplings(modes)
    s = segment.sideband_sign
    diag = -s * (space.occupations @ deltas)
    h = np.diag(diag.astype(complex))
    sp = space.sigma("+")
    for j, g in enumerate(gs):
        if g == 0:
            continue
        a = space.destroy(j)
        coupling = sp @ (a.conj().T if s > 0 else a)
        h += g * (coupling + coupling.conj().T)
    if include_stark:
        h += _stark_shift(segment) * space.sigma("z")
    return h


def nonlinear_jc_hamiltonian(space: HilbertSpace, modes, segment: DriveSegment,
                             include_stark: bool = False) -> np.ndarray:
    """Jaynes-Cummings Hamiltonian with finite-eta coupling corrections.

    The sideband coupling a_j is replaced by f_j(n_j) a_j M_j, where f is
    the occupation-dependent coupling factor and M_j collects the spectator
    carrier factors of the other modes.
    """
    if len(modes) != space.n_modes:
        raise ValueError("mode list does not match the space")
    deltas = segment.sideband_detunings(modes)
    gs = segment.couplings(modes)
    etas = [m.eta for m in modes]
    s = segment.sideband_sign
    diag = -s * (space.occupations @ deltas)
    h = np.diag(diag.astype(complex))
    sp = space.sigma("+")
    occ = space.occupations
    for j, g in enumerate(gs):
        if g == 0:
            continue
        f_diag = np.array([coupling_factor(n, etas[j]) for n in occ[:, j]])
        m_diag = np.ones(space.dim)
        for ell in range(space.n_modes):
            if ell == j:
                continue
            m_diag *= np.array([bystander_factor(n, etas[ell]) for n in occ[:, ell]])
        a_tilde = (f_diag[:, None] * space.destroy(j)) * m_diag[None, :]
        coupling = sp @ (a_tilde.conj().T if s > 0 else a_tilde)
        h += g * (coupling + coupling.conj().T)
    if include_stark:
        h += _stark_shift(segment) * space.sigma("z")
    return h


def dispersive_coefficients(modes, segment: DriveSegment, n_ref: int = 0,
                            warn: bool = True) -> DispersiveCoefficients:
    """Second-order effective coefficients of one segment.

    chi_j = -g_j^2/delta_j, K_jk = -(g_j g_k / 2)(1/delta_j + 1/delta_k),
    stark = -Omega^2/(4 Delta).  Validity ratios compare the coupling to the
    detuning at a reference occupation; a ratio above 0.2 triggers a warning
    because the perturbative picture degrades there.
    """
    deltas = segment.sideband_detunings(modes)
    if np.any(deltas == 0):
        raise ValueError("sideband detuning is zero for at least one mode (resonant drive)")
    gs = segment.couplings(modes)
    etas = np.array([m.eta for m in modes])
    chi = -(gs**2) / deltas
    m = len(modes)
    kappa = np.zeros((m, m))
    validity_pair = np.zeros((m, m))
    for j in range(m):
        for k in range(m):
            if j == k:
                continue
            kappa[j, k] = -(gs[j] * gs[k] / 2.0) * (1.0 / deltas[j] + 1.0 / deltas[k])
            gap = abs(deltas[j] - deltas[k])
            validity_pair[j, k] = abs(kappa[j, k]) / gap if gap > 0 else np.inf
    validity_mode = etas * segment.omega_rabi * np.sqrt(n_ref + 1.0) / np.abs(deltas)
    if warn and (np.any(validity_mode > VALIDITY_WARN_RATIO)
                 or np.any(validity_pair > VALIDITY_WARN_RATIO)):
        worst = max(validity_mode.max(), validity_pair.max())
        warnings.warn(
            f"dispersive validity ratio {worst:.3f} exceeds {VALIDITY_WARN_RATIO}; "
            "effective-model predictions are unreliable here",
            ValidityWarning,
            stacklevel=2,
        )
    return DispersiveCoefficients(
        chi=chi,
        kappa=kappa,
        stark=_stark_shift(segment),
        validity_mode=validity_mode,
        validity_pair=validity_pair,
    )


def nonlinear_phase(ns, chi, etas, t: float) -> float:
    """Number-dependent dispersive phase at finite eta, in rad.

    Phi_n(t) = t sum_j chi_j M_j(n)^2 S_j(n_j), where S is the finite-eta
    occupation scaling (S -> 2n+1 as eta -> 0) and M_j(n) the spectator
    product.  Reduces to t sum_j chi_j (2 n_j + 1) in the Lamb-Dicke limit.
    """
    ns = [int(n) for n in np.atleast_1d(ns)]
    chi = np.atleast_1d(np.asarray(chi, dtype=float))
    etas = np.atleast_1d(np.asarray(etas, dtype=float))
    total = 0.0
    for j, (n, c, eta) in enumerate(zip(ns, chi, etas)):
        m = 1.0
        for ell, (n_l, eta_l) in enumerate(zip(ns, etas)):
            if ell == j:
                continue
            m *= bystander_factor(n_l, eta_l)
        total += c * m * m * shift_scaling(n, eta)
    return t * total


def _unitary_from_hamiltonian(h: np.ndarray, t: float) -> np.ndarray:
    evals, evecs = np.linalg.eigh(h)
    return (evecs * np.exp(-1j * evals * t)) @ evecs.conj().T


def frame_unitary(space: HilbertSpace, modes, segment: DriveSegment, tau: float) -> np.ndarray:
    """Diagonal detuning-frame unitary W(tau) at absolute time tau."""
    deltas = segment.sideband_detunings(modes)
    phases = segment.sideband_sign * tau * (space.occupations @ deltas)
    return np.diag(np.exp(1j * phases))


def segment_propagator(space: HilbertSpace, modes, segment: DriveSegment,
                       nonlinear: bool = False, include_stark: bool = False,
                       start_time: float = 0.0) -> np.ndarray:
    """Bare-interaction-picture propagator of one segment.

    U = W^dag(t0 + t) expm(-i H t) W(t0), so consecutive segments compose
    correctly when ``start_time`` carries the accumulated duration.

    The carrier Stark term is inserted as the analytic, commuting factor
    exp(-i stark t sigma_z) rather than inside the exponentiated sideband
    Hamiltonian: it models the off-resonant carrier's phase on the spin
    alone, so the per-segment vacuum spin phase is -(Omega^2/2 Delta) t
    exactly and the echoed decoupling constraint cancels it identically.
    """
    builder = nonlinear_jc_hamiltonian if nonlinear else jc_frame_hamiltonian
    h = builder(space, modes, segment, include_stark=False)
    t = segment.duration
    u = _unitary_from_hamiltonian(h, t)
    if include_stark:
        half = _stark_shift(segment) * t / 2.0
        sz = 2.0 * space.spin_values[:, 0] - 1.0
        stark_half = np.diag(np.exp(-1j * sz * half))
        u = stark_half @ u @ stark_half
    w0 = frame_unitary(space, modes, segment, start_time)
    w1 = frame_unitary(space, modes, segment, start_time + t)
    return w1.conj().T @ u @ w0


def evolve_segment(space: HilbertSpace, state: np.ndarray, modes, segment: DriveSegment,
                   nonlinear: bool = False, include_stark: bool = False,
                   start_time: float = 0.0) -> np.ndarray:
    """Evolve a pure state or density operator through one drive segment."""
    u = segment_propagator(space, modes, segment, nonlinear=nonlinear,
                           include_stark=include_stark, start_time=start_time)
    if state.ndim == 2:
        return u @ state @ u.conj().T
    return u @ state


def apply_unitary(state: np.ndarray, u: np.ndarray) -> np.ndarray:
    if state.ndim == 2:
        return u @ state @ u.conj().T
    return u @ state


def dephase(space: HilbertSpace, rho: np.ndarray, gammas, t: float) -> np.ndarray:
    """Occupation-dependent spin dephasing channel over duration t.

    Decay rate gamma_n = sum_j gamma_j (2 n_j + 1).  Spin off-diagonal
    blocks at motional labels (n, n') are damped by exp(-(gamma_n +
    gamma_n') t / 2); populations and spin-diagonal blocks are untouched.
    Requires density-operator input.
    """
    if rho.ndim != 2:
        raise ValueError("dephase requires a density operator; promote the state first")
    gammas = np.atleast_1d(np.asarray(gammas, dtype=float))
    gamma_n = space.occupations @ (2.0 * gammas) + gammas.sum()
    spin = np.arange(space.dim) // space.motional_dim
    damp = np.exp(-np.add.outer(gamma_n, gamma_n) * t / 2.0)
    mask = np.not_equal.outer(spin, spin)
    out = rho.copy()
    out[mask] *= damp[mask]
    return out


def multi_ion_model(eta_matrix, modes, segments) -> MultiIonModel:
    """Analytic dispersive shifts for several ions driven concurrently.

    ``eta_matrix`` is (n_ions, n_modes); ``segments`` one DriveSegment per
    ion (each ion sees its own Rabi frequency and carrier detuning).
    chi_ij = -eta_ij^2 Omega_i^2 / (4 delta_ij).
    """
    eta_matrix = np.atleast_2d(np.asarray(eta_matrix, dtype=float))
    n_ions, n_modes = eta_matrix.shape
    if len(segments) != n_ions:
        raise ValueError("need one drive segment per ion")
    if n_modes != len(modes):
        raise ValueError("eta matrix does not match the mode list")
    chi = np.zeros((n_ions, n_modes))
    rabis = np.zeros(n_ions)
    for i, seg in enumerate(segments):
        deltas = seg.sideband_detunings(modes)
        if np.any(deltas == 0):
            raise ValueError("sideband detuning is zero (resonant drive)")
        chi[i] = -(eta_matrix[i] * seg.omega_rabi / 2.0) ** 2 / deltas
        rabis[i] = seg.omega_rabi
    return MultiIonModel(chi_matrix=chi, eta_matrix=eta_matrix, omega_rabi=rabis)
