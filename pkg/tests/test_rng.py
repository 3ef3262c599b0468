"""Generator tests against an independently coded reference."""

import math

import pytest

from canloop.errors import ConfigError
from canloop.rng import Rng, gaussian_draw


def reference_stream(seed, n):
    # Deliberately re-typed from the published SplitMix64 finalizer, not
    # imported from the package, so a transcription bug there cannot
    # hide here.
    mask = 0xFFFFFFFFFFFFFFFF
    state = seed & mask
    out = []
    for _ in range(n):
        state = (state + 0x9E3779B97F4A7C15) & mask
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & mask
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
        out.append(z ^ (z >> 31))
    return out


@pytest.mark.parametrize("seed", [0, 1, 42, 0xDEADBEEF, 2**64 - 1])
def test_u64_stream_matches_reference(seed):
    rng = Rng(seed)
    assert [rng.next_u64() for _ in range(8)] == reference_stream(seed, 8)


def test_same_seed_same_sequence():
    a, b = Rng(14), Rng(14)
    assert [a.normal() for _ in range(100)] == [b.normal() for _ in range(100)]


def test_uniform_range_and_top53_derivation():
    rng = Rng(7)
    ref = reference_stream(7, 1000)
    for k in range(1000):
        u = rng.uniform()
        assert u == (ref[k] >> 11) * 2.0**-53
        assert 0.0 <= u < 1.0


def test_normal_moments():
    rng = Rng(123)
    n = 100_000
    draws = [rng.normal() for _ in range(n)]
    mean = math.fsum(draws) / n
    var = math.fsum((x - mean) ** 2 for x in draws) / (n - 1)
    assert abs(mean) < 3.0 / math.sqrt(n)
    assert 0.97 < var < 1.03


def test_box_muller_pairing_consumes_two_u64_per_pair():
    rng = Rng(99)
    rng.normal()
    rng.normal()                  # second draw comes from the cache
    shadow = Rng(99)
    shadow.next_u64()
    shadow.next_u64()
    assert rng.next_u64() == shadow.next_u64()


def test_zero_covariance_consumes_nothing():
    rng = Rng(5)
    assert gaussian_draw(rng, 0.0) == [0.0]
    assert gaussian_draw(rng, [[0.0, 0.0], [0.0, 0.0]]) == [0.0, 0.0]
    assert gaussian_draw(rng, [0.0, 0.0]) == [0.0, 0.0]
    assert rng.next_u64() == reference_stream(5, 1)[0]


def test_scalar_draw_scaling():
    a, b = Rng(3), Rng(3)
    assert gaussian_draw(a, 4.0)[0] == 2.0 * b.normal()


def test_diagonal_draw_skips_zero_components():
    # A zero on the diagonal must not consume a normal draw, so the
    # remaining component sees the same stream either way.
    a, b = Rng(11), Rng(11)
    da = gaussian_draw(a, [0.0, 9.0])
    assert da[0] == 0.0
    assert da[1] == 3.0 * b.normal()


def test_matrix_draw_covariance():
    numpy = pytest.importorskip("numpy")
    cov = [[4.0, 1.2], [1.2, 1.0]]
    rng = Rng(2024)
    draws = numpy.array([gaussian_draw(rng, cov) for _ in range(40_000)])
    sample = numpy.cov(draws.T)
    assert numpy.allclose(sample, numpy.array(cov), rtol=0.06, atol=0.03)


def test_matrix_draw_matches_cholesky_oracle():
    numpy = pytest.importorskip("numpy")
    cov = [[4.0, 1.2], [1.2, 1.0]]
    low = numpy.linalg.cholesky(numpy.array(cov))
    a, b = Rng(8), Rng(8)
    draw = gaussian_draw(a, cov)
    z = [b.normal(), b.normal()]
    expect = low @ numpy.array(z)
    assert draw == pytest.approx(list(expect), rel=1e-12)


def test_rejects_bad_covariance():
    rng = Rng(0)
    with pytest.raises(ConfigError):
        gaussian_draw(rng, -1.0)
    with pytest.raises(ConfigError):
        gaussian_draw(rng, [[1.0, 0.5], [0.4, 1.0]])      # asymmetric
    with pytest.raises(ConfigError):
        gaussian_draw(rng, [[1.0, 5.0], [5.0, 1.0]])      # indefinite
    with pytest.raises(ConfigError):
        gaussian_draw(rng, [1.0, -2.0])
