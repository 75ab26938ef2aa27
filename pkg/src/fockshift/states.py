"""State constructors, probes, and plain-JSON serialization.

States are dense numpy arrays: shape (dim,) for vectors and (dim, dim) for
density matrices, using the basis ordering fixed by
:class:`fockshift.space.HilbertSpace`.
"""

from __future__ import annotations

import math
import warnings

import numpy as np

from .errors import TruncationWarning
from .space import HilbertSpace

TRUNCATION_TOLERANCE = 1e-6


def _check_mode(space: HilbertSpace, mode: int) -> None:
    if not 0 <= mode < space.n_modes:
        raise IndexError(f"mode index {mode} outside space with {space.n_modes} modes")


def fock_state(space: HilbertSpace, ns, spins=0) -> np.ndarray:
    """Basis vector |spins> (x) |n_1 ... n_M>."""
    psi = np.zeros(space.dim, dtype=complex)
    psi[space.index(spins, ns)] = 1.0
    return psi


def coherent_amplitudes(alpha: complex, dim: int) -> np.ndarray:
    """Fock amplitudes of |alpha> truncated to ``dim`` levels, renormalized.

    Warns with :class:`TruncationWarning` if the discarded weight exceeds
    ``TRUNCATION_TOLERANCE``.
    """
    if abs(alpha) == 0:
        amps = np.zeros(dim, dtype=complex)
        amps[0] = 1.0
        return amps
    n = np.arange(dim)
    # log-domain to stay finite for large alpha
    log_fact = np.cumsum(np.concatenate(([0.0], np.log(np.arange(1, dim)))))
    logmag = n * math.log(abs(alpha)) - 0.5 * log_fact
    phase = np.exp(1j * n * np.angle(alpha))
    amps = np.exp(logmag - abs(alpha) ** 2 / 2) * phase
    kept = float(np.sum(np.abs(amps) ** 2))
    lost = 1.0 - kept
    if lost > TRUNCATION_TOLERANCE:
        warnings.warn(
            f"coherent state |alpha|={abs(alpha):.4g} loses {lost:.3e} weight "
            f"at truncation dim={dim}",
            TruncationWarning,
            stacklevel=3,
        )
    return amps / math.sqrt(kept)


def coherent_state(space: HilbertSpace, alphas, spins=0) -> np.ndarray:
    """Product of coherent states, one amplitude per mode."""
    alphas = np.atleast_1d(np.asarray(alphas, dtype=complex))
    if alphas.size != space.n_modes:
        raise ValueError("need one alpha per mode")
    mot = np.ones(1, dtype=complex)
    for a, d in zip(alphas, space.mode_dims):
        mot = np.kron(mot, coherent_amplitudes(a, d))
    spin_vec = np.zeros(space.spin_dim, dtype=complex)
    spins_t = tuple(int(s) for s in np.atleast_1d(spins))
    idx = 0
    for s in spins_t:
        idx = 2 * idx + s
    spin_vec[idx] = 1.0
    return np.kron(spin_vec, mot)


def cat_state(space: HilbertSpace, alpha: complex, sign: int = +1, mode: int = 0, spins=0) -> np.ndarray:
    """Even (sign=+1) or odd (sign=-1) cat N(|alpha> + sign|-alpha>) in one mode."""
    _check_mode(space, mode)
    if sign not in (+1, -1):
        raise ValueError("sign must be +1 or -1")
    alphas = np.zeros(space.n_modes, dtype=complex)
    alphas[mode] = alpha
    plus = coherent_state(space, alphas, spins)
    alphas[mode] = -alpha
    minus = coherent_state(space, alphas, spins)
    psi = plus + sign * minus
    return normalize(psi)


def entangled_coherent_state(space: HilbertSpace, alpha: complex, sign: int = +1,
                             modes: tuple[int, int] = (0, 1), spins=0) -> np.ndarray:
    """Two-mode state N(|alpha, 0> + sign |0, alpha>)."""
    if space.n_modes < 2:
        raise ValueError("need at least two modes")
    if sign not in (+1, -1):
        raise ValueError("sign must be +1 or -1")
    j, k = modes
    _check_mode(space, j)
    _check_mode(space, k)
    alphas = np.zeros(space.n_modes, dtype=complex)
    alphas[j] = alpha
    first = coherent_state(space, alphas, spins)
    alphas[j] = 0.0
    alphas[k] = alpha
    second = coherent_state(space, alphas, spins)
    return normalize(first + sign * second)


def thermal_populations(nbar: float, dim: int) -> np.ndarray:
    """Fock populations of a thermal state with mean occupation ``nbar``."""
    if nbar < 0:
        raise ValueError("nbar must be >= 0")
    if nbar == 0:
        p = np.zeros(dim)
        p[0] = 1.0
        return p
    n = np.arange(dim)
    p = (nbar / (1.0 + nbar)) ** n / (1.0 + nbar)
    return p / p.sum()


def normalize(psi: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(psi))
    if norm == 0:
        raise ValueError("cannot normalize the zero vector")
    return psi / norm


def is_density(state: np.ndarray) -> bool:
    return state.ndim == 2


def to_density(state: np.ndarray) -> np.ndarray:
    if is_density(state):
        return state
    return np.outer(state, state.conj())


def fock_populations(space: HilbertSpace, state: np.ndarray) -> dict[tuple[int, ...], float]:
    """Joint mode-occupation distribution, traced over spin."""
    if is_density(state):
        diag = np.real(np.diag(state))
    else:
        diag = np.abs(state) ** 2
    out: dict[tuple[int, ...], float] = {}
    for i, p in enumerate(diag):
        if p <= 0:
            continue
        ns = tuple(int(v) for v in space.occupations[i])
        out[ns] = out.get(ns, 0.0) + float(p)
    return out


def spin_populations(space: HilbertSpace, state: np.ndarray) -> np.ndarray:
    """Probability of each joint spin configuration (length 2**N)."""
    if is_density(state):
        diag = np.real(np.diag(state))
    else:
        diag = np.abs(state) ** 2
    out = np.zeros(space.spin_dim)
    mot = space.motional_dim
    for s in range(space.spin_dim):
        out[s] = diag[s * mot:(s + 1) * mot].sum()
    return out


def prob_up(space: HilbertSpace, state: np.ndarray, ion: int = 0) -> float:
    """Probability that one ion reads |up>, tracing everything else out."""
    if is_density(state):
        diag = np.real(np.diag(state))
    else:
        diag = np.abs(state) ** 2
    mask = space.spin_values[:, ion] == 1
    return float(diag[mask].sum())


def mode_parity(space: HilbertSpace, state: np.ndarray, mode: int = 0) -> float:
    """Expectation of (-1)^n on one mode, traced over everything else."""
    _check_mode(space, mode)
    if is_density(state):
        diag = np.real(np.diag(state))
    else:
        diag = np.abs(state) ** 2
    signs = np.where(space.occupations[:, mode] % 2 == 0, 1.0, -1.0)
    return float(np.dot(signs, diag))


def project_spin(space: HilbertSpace, state: np.ndarray, spin: int, ion: int = 0):
    """Project onto one ion's spin value; returns (state, probability).

    The projected state is renormalized; probability 0 raises ValueError.
    """
    mask = space.spin_values[:, ion] == spin
    if is_density(state):
        rho = state.copy()
        rho[~mask, :] = 0.0
        rho[:, ~mask] = 0.0
        p = float(np.real(np.trace(rho)))
        if p <= 0:
            raise ValueError("projection has zero probability")
        return rho / p, p
    psi = state.copy()
    psi[~mask] = 0.0
    p = float(np.linalg.norm(psi) ** 2)
    if p <= 0:
        raise ValueError("projection has zero probability")
    return psi / math.sqrt(p), p


# -- serialization -----------------------------------------------------------


def state_to_json_dict(space: HilbertSpace, state: np.ndarray) -> dict:
    rep = "density" if is_density(state) else "vector"
    flat = state.reshape(-1)
    return {
        "space": space.to_json_dict(),
        "representation": rep,
        "amplitudes": [[float(z.real), float(z.imag)] for z in flat],
    }


def state_from_json_dict(d: dict) -> tuple[HilbertSpace, np.ndarray]:
    space = HilbertSpace.from_json_dict(d["space"])
    flat = np.array([complex(re, im) for re, im in d["amplitudes"]], dtype=complex)
    if d["representation"] == "density":
        state = flat.reshape(space.dim, space.dim)
    elif d["representation"] == "vector":
        if flat.size != space.dim:
            raise ValueError("amplitude count does not match the space dimension")
        state = flat
    else:
        raise ValueError(f"unknown representation {d['representation']!r}")
    return space, state
