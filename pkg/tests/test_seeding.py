import pytest

from icumort.seeding import SplitMix64, derive_seed, splitmix64


def test_splitmix64_reference_values():
    # Frozen outputs of the documented algorithm; guards against regressions.
    rng = SplitMix64(1234567)
    seq = [rng.next_u64() for _ in range(3)]
    assert seq == [
        6457827717110365317,
        3203168211198807973,
        9817491932198370423,
    ]


def test_splitmix64_pure_function():
    assert splitmix64(42) == splitmix64(42)
    assert splitmix64(42) != splitmix64(43)


def test_derive_seed_deterministic_and_key_sensitive():
    a = derive_seed(7, "featurize", 1001, 3)
    assert a == derive_seed(7, "featurize", 1001, 3)
    assert a != derive_seed(7, "featurize", 1001, 4)
    assert a != derive_seed(7, "featurize", 1002, 3)
    assert a != derive_seed(8, "featurize", 1001, 3)
    assert derive_seed(7, "ab") != derive_seed(7, "ba")


def test_randbelow_bounds_and_determinism():
    rng = SplitMix64(99)
    draws = [rng.randbelow(10) for _ in range(200)]
    assert all(0 <= d < 10 for d in draws)
    rng2 = SplitMix64(99)
    assert draws == [rng2.randbelow(10) for _ in range(200)]
    with pytest.raises(ValueError):
        rng.randbelow(0)


def test_uniform_in_unit_interval():
    rng = SplitMix64(5)
    draws = [rng.uniform() for _ in range(100)]
    assert all(0.0 <= u < 1.0 for u in draws)
    assert len(set(draws)) > 90


def test_shuffle_is_permutation_and_seeded():
    items = list(range(50))
    a = items[:]
    SplitMix64(3).shuffle(a)
    assert sorted(a) == items
    assert a != items
    b = items[:]
    SplitMix64(3).shuffle(b)
    assert a == b
