"""Truncated spin (x) multimode Fock space with a fixed, documented basis ordering.

Basis ordering is part of the public contract: the spin register is the
slowest index, then mode 1, ..., mode M (mode M fastest).  For N spins the
spin register index is sum_i s_i * 2**(N-1-i) with s_i = 0 for |down> and
s_i = 1 for |up>.  Per-spin operators therefore use the (down, up) column
ordering, i.e. sigma_z = diag(-1, +1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import SpaceSizeError

DEFAULT_DIMENSION_CAP = 65536

SPIN_DOWN = 0
SPIN_UP = 1

_SIGMA = {
    "x": np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex),
    # (down, up) ordering: <down|sigma_y|up> = +i
    "y": np.array([[0.0, 1.0j], [-1.0j, 0.0]], dtype=complex),
    "z": np.array([[-1.0, 0.0], [0.0, 1.0]], dtype=complex),
}
_SIGMA_PLUS = np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex)  # |up><down|
_SIGMA_MINUS = _SIGMA_PLUS.T.copy()


def pauli(which: str) -> np.ndarray:
    """2x2 Pauli matrix in the (down, up) basis ordering."""
    return _SIGMA[which].copy()


@dataclass(frozen=True)
class HilbertSpace:
    """Truncated spin (x) Fock space.  Immutable after construction."""

    mode_dims: tuple[int, ...]
    spin_count: int = 1

    @property
    def n_modes(self) -> int:
        return len(self.mode_dims)

    @property
    def motional_dim(self) -> int:
        return math.prod(self.mode_dims)

    @property
    def spin_dim(self) -> int:
        return 2**self.spin_count

    @property
    def dim(self) -> int:
        return self.spin_dim * self.motional_dim

    # -- index bookkeeping -------------------------------------------------

    def index(self, spins, ns) -> int:
        """Flat basis index of |spins> (x) |n_1 ... n_M>."""
        spins = tuple(int(s) for s in np.atleast_1d(spins))
        ns = tuple(int(n) for n in np.atleast_1d(ns))
        if len(spins) != self.spin_count or len(ns) != self.n_modes:
            raise ValueError("label length does not match the space")
        for j, (n, d) in enumerate(zip(ns, self.mode_dims)):
            if not 0 <= n < d:
                raise IndexError(f"occupation n_{j + 1}={n} outside truncation dim {d}")
        if any(s not in (0, 1) for s in spins):
            raise ValueError("spin labels must be 0 (down) or 1 (up)")
        spin_idx = 0
        for s in spins:
            spin_idx = 2 * spin_idx + s
        mot = 0
        for n, d in zip(ns, self.mode_dims):
            mot = mot * d + n
        return spin_idx * self.motional_dim + mot

    def unindex(self, i: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
        """Inverse of :meth:`index`."""
        if not 0 <= i < self.dim:
            raise IndexError(f"index {i} outside space of dimension {self.dim}")
        spin_idx, mot = divmod(i, self.motional_dim)
        spins = tuple((spin_idx >> (self.spin_count - 1 - k)) & 1 for k in range(self.spin_count))
        ns = []
        for d in reversed(self.mode_dims):
            mot, n = divmod(mot, d)
            ns.append(n)
        return spins, tuple(reversed(ns))

    @cached_property
    def occupations(self) -> np.ndarray:
        """(dim, M) array of mode occupations per basis index."""
        out = np.empty((self.dim, self.n_modes), dtype=np.int64)
        for i in range(self.dim):
            out[i] = self.unindex(i)[1]
        return out

    @cached_property
    def spin_values(self) -> np.ndarray:
        """(dim, N) array of spin labels (0 down, 1 up) per basis index."""
        out = np.empty((self.dim, self.spin_count), dtype=np.int64)
        for i in range(self.dim):
            out[i] = self.unindex(i)[0]
        return out

    # -- operators ---------------------------------------------------------

    def _lift_mode(self, op2: np.ndarray, mode: int) -> np.ndarray:
        factors = [np.eye(self.spin_dim, dtype=complex)]
        for j, d in enumerate(self.mode_dims):
            factors.append(op2 if j == mode else np.eye(d, dtype=complex))
        out = factors[0]
        for f in factors[1:]:
            out = np.kron(out, f)
        return out

    def destroy(self, mode: int) -> np.ndarray:
        d = self.mode_dims[mode]
        a = np.diag(np.sqrt(np.arange(1, d, dtype=float)), 1).astype(complex)
        return self._lift_mode(a, mode)

    def create(self, mode: int) -> np.ndarray:
        return self.destroy(mode).conj().T

    def number(self, mode: int) -> np.ndarray:
        return np.diag(self.occupations[:, mode].astype(complex))

    def sigma(self, which: str, ion: int = 0) -> np.ndarray:
        """Pauli / ladder operator of one ion lifted to the full space."""
        if which in ("+", "-"):
            op2 = _SIGMA_PLUS if which == "+" else _SIGMA_MINUS
        else:
            op2 = _SIGMA[which]
        out = np.eye(1, dtype=complex)
        for i in range(self.spin_count):
            out = np.kron(out, op2 if i == ion else np.eye(2, dtype=complex))
        return np.kron(out, np.eye(self.motional_dim, dtype=complex))

    def identity(self) -> np.ndarray:
        return np.eye(self.dim, dtype=complex)

    def to_json_dict(self) -> dict:
        return {"mode_dims": list(self.mode_dims), "spin_count": self.spin_count}

    @classmethod
    def from_json_dict(cls, d: dict) -> "HilbertSpace":
        return make_space(d["mode_dims"], d["spin_count"])


def make_space(mode_dims, spin_count: int = 1, max_dim: int = DEFAULT_DIMENSION_CAP) -> HilbertSpace:
    """Construct a space, enforcing the total-dimension cap."""
    dims = tuple(int(d) for d in mode_dims)
    if not dims or any(d < 1 for d in dims):
        raise ValueError("every mode dimension must be >= 1")
    if spin_count < 1:
        raise ValueError("spin_count must be >= 1")
    total = 2**spin_count * math.prod(dims)
    if total > max_dim:
        raise SpaceSizeError(
            f"total dimension 2^{spin_count} * {' * '.join(map(str, dims))} = {total} "
            f"exceeds the cap of {max_dim}"
        )
    return HilbertSpace(mode_dims=dims, spin_count=spin_count)
