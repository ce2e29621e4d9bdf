import numpy as np
import pytest

from oracles import ladder_nu, nullspace_stationary, ou_family_nu
from switchsde.chain import (
    SparseGenerator,
    convergence_sweep,
    stationary,
    truncate,
)


def two_base_ladder():
    def row(i):
        if i == 1:
            return {2: 1.0, 3: 1.0}
        if i == 2:
            return {1: 1.0, 3: 1.0}
        return {1: 1.0, 2: 1.0, i + 1: 1.0}

    return SparseGenerator(row, rate_bound=3.0, name="two_base")


def return_ladder():
    def row(i):
        if i == 1:
            return {2: 1.0}
        return {1: 1.0, i + 1: 1.0}

    return SparseGenerator(row, rate_bound=2.0, name="return")


def test_truncate_rows_sum_to_zero_exactly():
    for gen in (two_base_ladder(), return_ladder()):
        tg = truncate(gen, 12)
        sums = tg.q.sum(axis=1)
        assert (sums == 0.0).all()


def test_truncate_lumps_overflow_into_boundary():
    tg = truncate(return_ladder(), 4)
    # climbing out of the last kept mode cancels against the diagonal,
    # leaving only the return rate
    assert np.allclose(tg.q[3], [1.0, 0.0, 0.0, -1.0])
    tg2 = truncate(two_base_ladder(), 4)
    assert np.allclose(tg2.q[3], [1.0, 1.0, 0.0, -2.0])
    # an interior row is untouched
    assert np.allclose(tg2.q[2], [1.0, 1.0, -3.0, 1.0])


def test_truncate_level_bounds():
    with pytest.raises(ValueError):
        truncate(return_ladder(), 1)
    with pytest.raises(ValueError):
        truncate(return_ladder(), 5000)


def test_triplets_accumulate_and_validate():
    gen = SparseGenerator.from_triplets([(1, 2, 1.0), (1, 2, 0.5), (2, 1, 2.0)])
    assert gen.row(1) == {2: 1.5}
    assert gen.rate_bound == pytest.approx(2.0)
    with pytest.raises(ValueError):
        SparseGenerator.from_triplets([(1, 1, 1.0)])
    with pytest.raises(ValueError):
        SparseGenerator.from_triplets([(1, 2, -1.0)])
    with pytest.raises(ValueError):
        SparseGenerator.from_triplets([(0, 2, 1.0)])


def test_from_dense_ignores_diagonal():
    gen = SparseGenerator.from_dense([[-1.0, 1.0], [2.0, -2.0]])
    assert gen.row(1) == {2: 1.0}
    assert gen.row(2) == {1: 2.0}


def test_stationary_two_base_golden_values():
    dist = stationary(truncate(two_base_ladder(), 30))
    assert dist.residual <= 1e-10
    assert dist.nu.sum() == pytest.approx(1.0)
    for k in range(1, 26):
        assert dist.nu[k - 1] == pytest.approx(ou_family_nu(k), abs=1e-8)


def test_stationary_return_ladder_golden_values():
    dist = stationary(truncate(return_ladder(), 30))
    assert dist.residual <= 1e-10
    for k in range(1, 26):
        assert dist.nu[k - 1] == pytest.approx(ladder_nu(k), abs=1e-8)


def test_stationary_matches_nullspace_oracle():
    rng = np.random.default_rng(5)
    for _ in range(10):
        n = int(rng.integers(3, 9))
        q = rng.uniform(0.1, 2.0, size=(n, n))
        np.fill_diagonal(q, 0.0)
        gen = SparseGenerator.from_dense(q)
        tg = truncate(gen, n)
        dist = stationary(tg)
        ref = nullspace_stationary(tg.q)
        assert np.allclose(dist.nu, ref, atol=1e-10)


def test_stationary_rejects_reducible():
    gen = SparseGenerator.from_triplets([(1, 2, 1.0), (3, 4, 1.0), (4, 3, 1.0), (2, 1, 1.0)])
    with pytest.raises(ValueError):
        stationary(truncate(gen, 4))


def test_convergence_sweep_reports_decreasing_change():
    sweep = convergence_sweep(two_base_ladder(), [8, 16, 24])
    assert sweep[0]["l1_change"] is None
    assert sweep[1]["l1_change"] < 1e-3
    assert sweep[2]["l1_change"] < sweep[1]["l1_change"]
    assert all(len(s["nu_head"]) <= 10 for s in sweep)


def test_row_index_validation():
    gen = return_ladder()
    with pytest.raises(ValueError):
        gen.row(0)
