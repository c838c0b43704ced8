import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nullrec.streams import LIMIT_CLOCK, PRELIMIT, PathNoise, default_workers, derive_seed, \
    inverse_cdf_normals, ordered_map, path_blocks, path_generator, path_normals


def test_derive_seed_is_deterministic_and_tag_sensitive():
    assert derive_seed(5, 1, 2) == derive_seed(5, 1, 2)
    assert derive_seed(5, 1, 2) != derive_seed(5, 2, 1)
    assert derive_seed(5) != derive_seed(6)
    assert 0 <= derive_seed(2 ** 70, 3) < 2 ** 64


def test_substreams_differ():
    a = inverse_cdf_normals(path_generator(1, 0, PRELIMIT), 8)
    b = inverse_cdf_normals(path_generator(1, 0, LIMIT_CLOCK), 8)
    assert not np.allclose(a, b)
    with pytest.raises(ValueError):
        path_generator(1, 0, 16)


def test_normals_have_unit_moments():
    z = inverse_cdf_normals(path_generator(3, 0), 200000)
    assert abs(z.mean()) < 0.01
    assert abs(z.var() - 1) < 0.01
    assert np.all(np.isfinite(z))


def test_one_raw_draw_per_normal():
    g = path_generator(9, 4)
    first = inverse_cdf_normals(g, 5)
    rest = inverse_cdf_normals(g, 3)
    assert np.array_equal(np.concatenate([first, rest]), inverse_cdf_normals(path_generator(9, 4), 8))


def test_path_normals_independent_of_grouping():
    full = path_normals(11, [0, 1, 2, 3], 6, 2, PRELIMIT)
    part = path_normals(11, [2, 3], 6, 2, PRELIMIT)
    assert full.shape == (6, 4, 2)
    assert np.array_equal(full[:, 2:], part)
    pm = path_normals(11, [0, 1, 2, 3], 6, 2, PRELIMIT, path_major=True)
    assert np.array_equal(pm.transpose(1, 0, 2), full)


def test_path_noise_matches_path_normals_across_chunks():
    pn = PathNoise(4, [5, 6], 3, chunk=4)
    got = np.stack([pn.next() for _ in range(10)])
    ref = path_normals(4, [5, 6], 10, 3, PRELIMIT)
    assert np.array_equal(got, ref)


def test_path_noise_inactive_paths_do_not_consume():
    pn = PathNoise(4, [0, 1], 1, chunk=2)
    pn.next(), pn.next()
    pn.next(active=np.array([True, False]))
    z = pn.next()
    assert z[0, 0] == path_normals(4, [0], 4, 1, PRELIMIT)[3, 0, 0]


@given(st.integers(1, 500), st.integers(1, 64))
@settings(max_examples=50, deadline=None)
def test_path_blocks_partition(n, b):
    blocks = path_blocks(n, b)
    assert np.array_equal(np.concatenate(blocks), np.arange(n))
    assert all(len(x) <= b for x in blocks)


def _square(a):
    return a * a


def test_ordered_map_keeps_order_with_workers():
    args = [(i,) for i in range(7)]
    assert ordered_map(_square, args, 1) == ordered_map(_square, args, 2) == [i * i for i in range(7)]


def test_default_workers_reads_environment(monkeypatch):
    monkeypatch.setenv("NULLREC_WORKERS", "3")
    assert default_workers() == 3
    monkeypatch.setenv("NULLREC_WORKERS", "bogus")
    assert default_workers() == 1
