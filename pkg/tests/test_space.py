import numpy as np
import pytest

from fockshift.errors import SpaceSizeError
from fockshift.space import HilbertSpace, SPIN_DOWN, SPIN_UP, make_space, pauli


def test_index_unindex_roundtrip():
    space = make_space([4, 3], spin_count=2)
    for i in range(space.dim):
        spins, ns = space.unindex(i)
        assert space.index(spins, ns) == i


def test_spin_is_slowest_axis():
    space = make_space([3, 2])
    # the first motional_dim states are all spin down
    for i in range(space.motional_dim):
        spins, _ = space.unindex(i)
        assert spins == (SPIN_DOWN,)
    spins, ns = space.unindex(space.motional_dim)
    assert spins == (SPIN_UP,)
    assert ns == (0, 0)


def test_last_mode_varies_fastest():
    space = make_space([3, 4])
    _, ns0 = space.unindex(0)
    _, ns1 = space.unindex(1)
    assert ns0 == (0, 0)
    assert ns1 == (0, 1)


def test_ladder_operator_algebra():
    space = make_space([6])
    a = space.destroy(0)
    n = space.number(0)
    comm = a @ space.create(0) - space.create(0) @ a
    # [a, a+] = 1 everywhere below the truncation edge
    occ = space.occupations[:, 0]
    inner = occ < 5
    assert np.allclose(comm[np.ix_(inner, inner)], np.eye(inner.sum()))
    assert np.allclose(space.create(0) @ a, n)


def test_number_operator_matches_occupations():
    space = make_space([3, 4])
    for m in range(2):
        n_op = space.number(m)
        assert np.allclose(np.diag(n_op).real, space.occupations[:, m])
        assert np.count_nonzero(n_op - np.diag(np.diag(n_op))) == 0


def test_sigma_z_acts_on_spin_only():
    space = make_space([3])
    sz = space.sigma("z")
    diag = np.diag(sz).real
    assert np.all(diag[: space.motional_dim] == -1)
    assert np.all(diag[space.motional_dim:] == +1)


def test_sigma_plus_raises_spin():
    space = make_space([2])
    sp = space.sigma("+")
    down = np.zeros(space.dim)
    down[space.index(0, (0,))] = 1.0
    up = sp @ down
    assert up[space.index(1, (0,))] == 1.0


def test_pauli_y_convention():
    sy = pauli("y")
    assert sy[0, 1] == 1j and sy[1, 0] == -1j


def test_dimension_cap():
    with pytest.raises(SpaceSizeError):
        make_space([300, 300, 300])


def test_json_roundtrip():
    space = make_space([5, 2], spin_count=2)
    again = HilbertSpace.from_json_dict(space.to_json_dict())
    assert again == space
