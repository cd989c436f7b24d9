import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sandlab.torus import (
    NonConservedMassError,
    SiteField,
    TorusGrid,
    character,
    dft_forward,
    dft_inverse,
    dump_site_field,
    laplacian_apply,
    laplacian_eigenvalue,
    laplacian_eigenvalues,
    load_site_field,
    poisson_solve,
)

grids = st.tuples(st.integers(1, 3), st.integers(2, 9)).map(lambda t: TorusGrid(*t))


def random_field(grid, seed=0):
    rng = np.random.default_rng(seed)
    return SiteField(grid, rng.normal(size=grid.shape))


def test_grid_validation():
    with pytest.raises(ValueError):
        TorusGrid(0, 4)
    with pytest.raises(ValueError):
        TorusGrid(5, 4)
    with pytest.raises(ValueError):
        TorusGrid(2, 1)


def test_axis_coordinates_bijection():
    grid = TorusGrid(1, 8)
    coords = grid.axis_coordinates()
    assert sorted(coords.tolist()) == list(range(-4, 4))
    assert grid.index_of((-4,)) == (4,)
    assert grid.index_of((3,)) == (3,)


def test_laplacian_of_constant_is_zero():
    grid = TorusGrid(2, 8)
    out = laplacian_apply(grid, SiteField(grid, np.full(grid.shape, 3.7)))
    assert np.abs(out.values).max() == 0.0


def test_laplacian_double_edge_n2():
    grid = TorusGrid(1, 2)
    out = laplacian_apply(grid, SiteField(grid, np.array([1.0, 0.0])))
    assert out.values.tolist() == [-2.0, 2.0]


@settings(max_examples=25, deadline=None)
@given(grids, st.integers(0, 2**32 - 1))
def test_laplacian_always_sums_to_zero(grid, seed):
    out = laplacian_apply(grid, random_field(grid, seed))
    assert abs(out.values.sum()) < 1e-12 * max(1.0, np.abs(out.values).max()) * grid.n_sites


def test_eigenvalue_formula():
    assert laplacian_eigenvalue(TorusGrid(1, 4), (0,)) == 0.0
    assert laplacian_eigenvalue(TorusGrid(1, 4), (1,)) == pytest.approx(-2.0, abs=1e-14)
    with pytest.raises(ValueError):
        laplacian_eigenvalue(TorusGrid(1, 4), (5,))


@pytest.mark.parametrize(
    "d,n",
    [(1, n) for n in range(2, 17)] + [(2, n) for n in range(2, 17)] + [(3, 2), (3, 4)],
)
def test_eigenvalues_diagonalize_laplacian(d, n):
    # oracle: apply the stencil Laplacian to every character explicitly
    grid = TorusGrid(d, n)
    lam = laplacian_eigenvalues(grid)
    coords = grid.axis_coordinates()
    worst = 0.0
    for flat_idx in np.ndindex(grid.shape):
        w = tuple(int(coords[i]) for i in flat_idx)
        chi = character(grid, w)
        applied = laplacian_apply(grid, chi).values
        worst = max(worst, float(np.abs(applied - lam[flat_idx] * chi.values).max()))
    assert worst < 1e-10


def test_dft_of_constant_and_character():
    grid = TorusGrid(2, 8)
    hat = dft_forward(grid, SiteField(grid, np.full(grid.shape, 2.5 + 0j)))
    assert hat.values[0, 0] == pytest.approx(2.5)
    assert np.abs(hat.values).sum() == pytest.approx(2.5, abs=1e-12)
    chi = character(grid, (3, -2))
    hat = dft_forward(grid, chi)
    assert abs(hat.values[3, -2 % 8] - 1.0) < 1e-12
    assert np.abs(hat.values).sum() == pytest.approx(1.0, abs=1e-10)


@settings(max_examples=25, deadline=None)
@given(grids, st.integers(0, 2**32 - 1))
def test_dft_round_trip_and_parseval(grid, seed):
    v = random_field(grid, seed)
    hat = dft_forward(grid, v)
    back = dft_inverse(grid, hat)
    scale = np.abs(v.values).max() + 1e-30
    assert np.abs(back.values.real - v.values).max() < 1e-12 * scale
    lhs = np.abs(v.values**2).sum() / grid.n_sites
    rhs = np.abs(hat.values**2).sum()
    assert abs(lhs - rhs) < 1e-12 * max(1.0, lhs)


def test_dft_round_trip_larger_grids():
    for d, n in ((1, 256), (2, 64), (3, 16)):
        grid = TorusGrid(d, n)
        v = random_field(grid, seed=n)
        back = dft_inverse(grid, dft_forward(grid, v))
        assert np.abs(back.values.real - v.values).max() < 1e-12 * np.abs(v.values).max()


def test_poisson_zero_rhs():
    grid = TorusGrid(2, 8)
    assert np.abs(poisson_solve(grid, SiteField.zeros(grid)).values).max() == 0.0


def test_poisson_two_site_hand_solve():
    # Dv = (-1, 1) with mean zero on two sites forces v = (1/4, -1/4):
    # Dv(0) = 2 (v(1) - v(0)) over the doubled edge.
    grid = TorusGrid(1, 2)
    v = poisson_solve(grid, SiteField(grid, np.array([-1.0, 1.0])))
    assert v.values == pytest.approx([0.25, -0.25], abs=1e-14)


@settings(max_examples=25, deadline=None)
@given(grids, st.integers(0, 2**32 - 1))
def test_poisson_round_trip(grid, seed):
    rhs = random_field(grid, seed).values
    rhs -= rhs.mean()
    v = poisson_solve(grid, SiteField(grid, rhs))
    residual = laplacian_apply(grid, v).values - rhs
    assert np.abs(residual).max() < 1e-9 * max(1e-30, np.abs(rhs).max())
    assert abs(v.values.sum()) < 1e-9 * grid.n_sites


def test_poisson_rejects_nonzero_mean():
    grid = TorusGrid(2, 16)
    with pytest.raises(NonConservedMassError):
        poisson_solve(grid, SiteField(grid, np.ones(grid.shape)))


def test_field_snapshot_round_trip(tmp_path):
    grid = TorusGrid(2, 8)
    field = random_field(grid, 5)
    path = tmp_path / "field.bin"
    dump_site_field(field, path)
    loaded = load_site_field(path)
    assert loaded.grid == grid
    assert np.array_equal(loaded.values, field.values)
    header = path.read_bytes().split(b"\n", 1)[0].decode()
    assert '"dtype": "f64"' in header


def test_snapshot_rejects_complex():
    grid = TorusGrid(1, 4)
    with pytest.raises(ValueError):
        dump_site_field(SiteField(grid, np.ones(grid.shape, dtype=complex)), "/tmp/x.bin")
