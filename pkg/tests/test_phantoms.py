import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pathis.core import ConfigError, FormatError, Image, make_grid, write_image, write_pgm
from pathis.phantoms import FRAME, KINDS, PhantomSpec, from_file, generate


def components(mask):
    """4-connected component count, by flood fill."""
    seen = np.zeros_like(mask, dtype=bool)
    count = 0
    for start in zip(*np.nonzero(mask)):
        if seen[start]:
            continue
        count += 1
        stack = [start]
        seen[start] = True
        while stack:
            i, j = stack.pop()
            for a, b in ((i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1)):
                if 0 <= a < mask.shape[0] and 0 <= b < mask.shape[1] and mask[a, b] and not seen[a, b]:
                    seen[a, b] = True
                    stack.append((a, b))
    return count


@settings(max_examples=20, deadline=None)
@given(st.sampled_from(KINDS), st.integers(0, 1000), st.integers(16, 80), st.integers(1, 5))
def test_range_frame_and_determinism(kind, seed, n, complexity):
    spec = PhantomSpec(kind, seed, n, complexity)
    a, b = generate(spec).array, generate(spec).array
    assert np.array_equal(a, b)
    assert a.min() >= 0.0 and a.max() <= 1.0
    assert not np.any(a[:FRAME]) and not np.any(a[-FRAME:])
    assert not np.any(a[:, :FRAME]) and not np.any(a[:, -FRAME:])


@pytest.mark.parametrize("kind", KINDS)
def test_distinct_seeds_differ(kind):
    a = generate(PhantomSpec(kind, 1, 64, 3)).array
    b = generate(PhantomSpec(kind, 2, 64, 3)).array
    assert np.mean(a != b) >= 0.01


def test_vascular_foreground_fraction():
    x = generate(PhantomSpec("vascular", 7, 128, 5)).array
    frac = np.mean(x > 0.1)
    assert 0.01 <= frac <= 0.30


@pytest.mark.parametrize("seed", range(6))
def test_vascular_tree_is_connected(seed):
    x = generate(PhantomSpec("vascular", seed, 96, 4)).array
    assert components(x > 0.1) == 1


def test_disks_and_geometric_have_content():
    for kind in ("geometric", "disks"):
        x = generate(PhantomSpec(kind, 0, 64, 3)).array
        assert 0.01 < np.mean(x > 0.1) < 0.5


def test_validation():
    with pytest.raises(ConfigError):
        generate(PhantomSpec("geometric", 0, 15, 3))
    with pytest.raises(ConfigError):
        generate(PhantomSpec("stars", 0, 32, 3))
    with pytest.raises(ConfigError):
        generate(PhantomSpec("disks", 0, 32, 0))


def test_from_file_pgm_levels(tmp_path):
    p = tmp_path / "a.pgm"
    p.write_bytes(b"P5\n2 2\n255\n" + bytes([0, 255, 51, 255]))
    x = from_file(p)
    assert x.grid.n == 2
    assert x.array[0, 0] == 0.0 and x.array[0, 1] == 1.0
    assert x.array[1, 0] == pytest.approx(0.2)


def test_from_file_constant_pgm(tmp_path):
    p = tmp_path / "c.pgm"
    write_pgm(p, np.ones((4, 4)))
    assert not np.any(from_file(p).values)


def test_from_file_paf_round_trip(tmp_path):
    x = generate(PhantomSpec("disks", 3, 32, 2))
    x.values[5] = 1.0  # span exactly [0, 1] so the rescale is the identity
    p = tmp_path / "x.paf"
    write_image(p, x)
    back = from_file(p)
    assert np.array_equal(back.values, x.values.astype(np.float32))


def test_from_file_rejects_other_formats(tmp_path):
    p = tmp_path / "x.png"
    p.write_bytes(b"\x89PNG....")
    with pytest.raises(FormatError):
        from_file(p)
    q = tmp_path / "r.pgm"
    q.write_bytes(b"P5\n3 2\n255\n" + bytes(6))
    with pytest.raises(FormatError):
        from_file(q)
