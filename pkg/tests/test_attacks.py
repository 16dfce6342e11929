import random
import time

import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from wuplab import kernels
from wuplab.attacks import (
    MitmTable,
    SeedNotInWindow,
    TableTooLarge,
    cca2_attack,
    factor_modulus,
    guesses_for_offset,
    mitm_attack,
    mitm_build_table,
    mitm_cost,
    prng_attack,
    recover_private_key,
    split_probability,
)
from wuplab.attacks.prng import offset_at, search_order
from wuplab.attacks.split import draw_samples, splits_from_primes
from wuplab.numtheory import NotCompositeError, gen_prime
from wuplab.oracle_server import Oracle, OracleConfig, OracleUnavailable
from wuplab.rsa_core import RsaPublicKey, encrypt_raw, keygen
from wuplab.victim_prng import SessionKey, keygen_v65
from wuplab.wup_protocol import MessageKind, Scheme, WupMessage, seal_session

KEY = keygen(1024, rng=8)
KEY512 = keygen(512, rng=8)
MSG = WupMessage.build(MessageKind.REQUEST, imei="861234567890123")
T0 = 1_400_000_000_000


# -- PRNG seed search -------------------------------------------------------------

def v65_session(seed_ms):
    return seal_session(KEY.public, keygen_v65(seed_ms), MSG)


def test_search_order_interleaves():
    assert [offset_at(i) for i in range(7)] == [0, 1, -1, 2, -2, 3, -3]
    assert list(search_order(100, 2)) == [100, 101, 99, 102, 98]


@given(st.integers(-100_000, 100_000))
def test_guesses_for_offset_inverts_order(offset):
    assert offset_at(guesses_for_offset(offset) - 1) == offset


def test_guess_count_examples():
    # +d is visited at position 2d, -d at 2d+1
    assert guesses_for_offset(0) == 1
    assert guesses_for_offset(5000) == 10_000
    assert guesses_for_offset(-5000) == 10_001
    assert guesses_for_offset(-35_000) == 70_001


@pytest.mark.parametrize("offset", [0, 1, -1, 777, -5000])
def test_prng_attack_finds_key(offset):
    res = prng_attack(v65_session(T0 + offset), T0, 35_000)
    assert res.key == keygen_v65(T0 + offset)
    assert res.guesses == guesses_for_offset(offset) <= 2 * abs(offset) + 1
    assert res.offset_ms == offset and res.seed_millis == T0 + offset


def test_prng_attack_outside_window():
    with pytest.raises(SeedNotInWindow) as info:
        prng_attack(v65_session(T0 + 500), T0, 100)
    assert info.value.guesses == 201


def test_prng_attack_custom_check_and_chunking():
    target = keygen_v65(T0 - 300).key
    res = prng_attack(v65_session(0), T0, 1000, check=lambda k: k == target, chunk=7)
    assert res.key.key == target and res.guesses == 601


def test_prng_attack_rejects_negative_radius():
    with pytest.raises(ValueError):
        prng_attack(v65_session(T0), T0, -1)


# -- CCA2 -------------------------------------------------------------------------

def victim(pair, key_int, scheme=Scheme.TEXTBOOK):
    sk = SessionKey.from_int(key_int)
    return sk, seal_session(pair.public, sk, MSG, scheme=scheme, rng=random.Random(key_int))


@pytest.mark.parametrize("seed", range(3))
def test_cca2_recovers_random_key(seed):
    oracle = Oracle(OracleConfig(KEY))
    sk, target = victim(KEY, random.Random(seed).getrandbits(128))
    res = cca2_attack(target, oracle, KEY.public)
    assert res.recovered and res.recovered_key == sk
    assert res.queries == 128 == len(oracle.transcript)
    # response means bit 0: bit i of k was decided by query number i
    k = sk.as_int()
    assert res.per_bit_outcomes == [not (k >> i) & 1 for i in range(128)]


def test_cca2_all_zero_key():
    oracle = Oracle(OracleConfig(KEY))
    _, target = victim(KEY, 0)
    res = cca2_attack(target, oracle, KEY.public)
    assert res.recovered_key.as_int() == 0 and all(res.per_bit_outcomes) and res.queries == 128


def test_cca2_eight_bit_variant_every_key():
    oracle = Oracle(OracleConfig(KEY512, key_bits=8, query_log=False))
    for k in range(256):
        sk, target = victim(KEY512, k)
        res = cca2_attack(target, oracle, KEY512.public, key_bits=8)
        assert res.queries == 8
        assert res.recovered_key == sk, k


class FlakyOracle:
    def __init__(self, inner, fail_every):
        self.inner, self.fail_every, self.calls, self.delivered = inner, fail_every, 0, 0

    def __call__(self, sess):
        self.calls += 1
        if self.calls % self.fail_every == 0:
            raise OracleUnavailable("dropped")
        self.delivered += 1
        return self.inner(sess)


def test_cca2_retries_transport_errors_without_double_counting():
    flaky = FlakyOracle(Oracle(OracleConfig(KEY)), fail_every=10)
    sk, target = victim(KEY, 0xDEADBEEF << 64)
    res = cca2_attack(target, flaky, KEY.public)
    assert res.recovered_key == sk
    assert res.queries == 128 == flaky.delivered
    assert res.transport_retries == flaky.calls - 128 > 0


def test_cca2_gives_up_after_retries():
    def dead(sess):
        raise OracleUnavailable("down")

    _, target = victim(KEY, 1)
    with pytest.raises(OracleUnavailable):
        cca2_attack(target, dead, KEY.public, retries=2)


def test_cca2_fails_against_oaep():
    oracle = Oracle(OracleConfig(KEY, scheme=Scheme.OAEP))
    sk, target = victim(KEY, random.Random(77).getrandbits(128), Scheme.OAEP)
    res = cca2_attack(target, oracle, KEY.public)
    assert not res.recovered and res.recovered_key != sk
    assert oracle.transcript.accepted == 0


def test_cca2_json_is_deterministic():
    _, target = victim(KEY, 12345)
    a = cca2_attack(target, Oracle(OracleConfig(KEY)), KEY.public).to_json()
    b = cca2_attack(target, Oracle(OracleConfig(KEY)), KEY.public).to_json()
    assert a == b and "wall_time_s" not in a


# -- meet in the middle -------------------------------------------------------------

TOY = keygen(128, rng=3)


def test_mitm_table_small():
    table = mitm_build_table(TOY.public, 4)
    assert len(table) == 16
    assert sorted(table.m1_candidates) == list(range(1, 17))
    assert list(table.values) == sorted(table.values)
    for v, m1 in zip(table.values, table.m1_candidates):
        assert pow(m1, TOY.e, TOY.n) == v
        assert table.lookup(v) == m1
    assert isinstance(table, MitmTable)


def test_mitm_exhaustive_at_m6():
    table = mitm_build_table(TOY.public, 6)
    for a in range(1, 65):
        for b in range(1, 65):
            m = a * b
            got = mitm_attack(table, encrypt_raw(TOY.public, m), 6)
            assert got == m


def test_mitm_absent_for_large_prime():
    table = mitm_build_table(TOY.public, 8)
    p = sympy.nextprime(1 << 20)
    assert mitm_attack(table, encrypt_raw(TOY.public, p), 8) is None


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 2**40))
def test_mitm_never_returns_wrong_plaintext(m):
    table = mitm_build_table(TOY.public, 8)
    c = encrypt_raw(TOY.public, m)
    got = mitm_attack(table, c, 8)
    assert got is None or pow(got, TOY.e, TOY.n) == c


def test_mitm_guards():
    with pytest.raises(TableTooLarge) as info:
        mitm_build_table(TOY.public, 29)
    assert "gigabytes" in str(info.value)
    with pytest.raises(ValueError):
        mitm_attack(mitm_build_table(TOY.public, 2), TOY.n, 2)


def test_mitm_cost_figures():
    cost = mitm_cost(64, 64, 128)
    assert cost.table_bits == 2**65 * 64
    assert cost.table_bytes == 295_147_905_179_352_825_856
    assert cost.table_bytes_human == "295,148 petabytes"
    assert cost.exponentiations == 2**64
    assert mitm_cost(4, 4, 8).table_bits == 128
    assert mitm_cost(30, 36, 64).table_bits == 2**31 * 36
    assert mitm_cost(1, 1, 2).table_bytes_human == "1 bytes"
    assert cost.to_json()["petabytes"] == 295_148


# -- split probability ---------------------------------------------------------------

def brute_force_splits(v, b1, b2):
    return any(d <= b1 and v // d <= b2 for d in sympy.divisors(v))


def test_split_matches_brute_force_on_64bit_samples():
    values = draw_samples(64, 100, random.Random(99))
    arr = np.array(values, dtype=np.uint64)
    factors, counts = kernels.factor_batch(arr)
    hits = kernels.split_batch(arr, factors, counts, 1 << 32, 1 << 32)
    for v, h, f, c in zip(values, hits, factors, counts):
        assert sorted(int(p) for p in f[:c]) == sorted(sympy.factorint(v, multiple=True))
        assert bool(h) == brute_force_splits(v, 1 << 32, 1 << 32)


@settings(max_examples=200)
@given(st.integers(1, 2**40), st.integers(0, 24), st.integers(0, 24))
def test_splits_from_primes_matches_brute_force(v, m1, m2):
    primes = sympy.factorint(v, multiple=True)
    assert splits_from_primes(v, primes, 1 << m1, 1 << m2) == brute_force_splits(v, 1 << m1, 1 << m2)


def test_splits_from_primes_many_factors_path():
    v = 2**30 * 3**5
    primes = [2] * 30 + [3] * 5
    for m1, m2 in [(10, 30), (20, 18), (5, 5), (0, 40)]:
        assert splits_from_primes(v, primes, 1 << m1, 1 << m2) == brute_force_splits(v, 1 << m1, 1 << m2)


def test_split_probability_tiny_exact():
    # over [1, 8) only 1, 2 and 4 split with both factors <= 2
    assert [v for v in range(1, 8) if brute_force_splits(v, 2, 2)] == [1, 2, 4]
    est = split_probability(3, 1, 1, samples=7000, rng=0)
    assert abs(est.probability - 3 / 7) < 0.03


def test_split_probability_bound_argument():
    est = split_probability(32, 1, 1, samples=2000, rng=0)
    assert est.successes == 0


def test_split_probability_wide_inputs_use_budget():
    est = split_probability(80, 40, 40, samples=100, rng=1, budget=1 << 12)
    assert est.samples + est.skipped == 100
    assert est.to_json()["skipped"] == est.skipped


def test_split_probability_validation():
    with pytest.raises(ValueError):
        split_probability(64, 32, 32, samples=10)
    with pytest.raises(ValueError):
        split_probability(0, 1, 1)


def test_split_probability_deterministic():
    a = split_probability(64, 32, 32, samples=200, rng=5)
    b = split_probability(64, 32, 32, samples=200, rng=5)
    assert a == b


# -- factoring -----------------------------------------------------------------------

def test_factor_two_32bit_primes_quickly():
    rng = random.Random(32)
    p, q = gen_prime(32, rng), gen_prime(32, rng)
    start = time.perf_counter()
    assert factor_modulus(p * q).primes == sorted([p, q])
    assert time.perf_counter() - start < 5


def test_factor_modulus_rejects_prime():
    with pytest.raises(NotCompositeError):
        factor_modulus(2**61 - 1)


def test_recover_private_key_128bit():
    pair = keygen(128, rng=21)
    recovered = recover_private_key(pair.public)
    assert recovered.n == pair.n and {recovered.p, recovered.q} == {pair.p, pair.q}
    m = 0x1234567890
    assert pow(encrypt_raw(pair.public, m), recovered.d, pair.n) == m


def test_recover_private_key_rejects_prime_square():
    p = 4294967311
    with pytest.raises(ValueError):
        recover_private_key(RsaPublicKey(p * p, 65537))
