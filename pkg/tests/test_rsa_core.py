import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wuplab.numtheory import DomainError
from wuplab.rsa_core import (
    PaddingError,
    RsaKeyPair,
    RsaPublicKey,
    decrypt_padded,
    decrypt_raw,
    dump_key,
    encrypt_padded,
    encrypt_raw,
    keygen,
    load_key,
    oaep_capacity,
    read_key,
    save_key,
    shift_ciphertext,
)

TOY = RsaKeyPair.from_primes(61, 53, 17)
KEY512 = keygen(512, rng=11)
KEY1024 = keygen(1024, rng=1)


def test_toy_key_values():
    assert TOY.n == 3233 and TOY.d == 413
    c = encrypt_raw(TOY.public, 65)
    assert c == 2790
    assert decrypt_raw(TOY, c) == 65


def test_toy_shift():
    c = encrypt_raw(TOY.public, 5)
    assert decrypt_raw(TOY, shift_ciphertext(TOY.public, c, 3)) == 40


@pytest.mark.parametrize("bits", [128, 256, 512, 1024])
def test_keygen_exact_bits(bits):
    key = keygen(bits, rng=bits)
    assert key.public.bits == bits
    assert key.p * key.q == key.n
    assert key.e * key.d % math.lcm(key.p - 1, key.q - 1) == 1


def test_keygen_deterministic_for_seed():
    assert keygen(256, rng=3) == keygen(256, rng=3)
    assert keygen(256, rng=3) != keygen(256, rng=4)


@pytest.mark.parametrize("bits,e", [(100, 65537), (512, 4), (512, 1)])
def test_keygen_rejects_bad_params(bits, e):
    with pytest.raises(DomainError):
        keygen(bits, e)


@settings(max_examples=50)
@given(st.integers(0, 2**511))
def test_raw_roundtrip(m):
    m %= KEY512.n
    c = encrypt_raw(KEY512.public, m)
    assert decrypt_raw(KEY512, c) == m
    # CRT result equals the plain exponentiation
    assert pow(c, KEY512.d, KEY512.n) == m


def test_raw_domain_checks():
    with pytest.raises(DomainError):
        encrypt_raw(TOY.public, TOY.n)
    with pytest.raises(DomainError):
        decrypt_raw(TOY, -1)
    with pytest.raises(DomainError):
        shift_ciphertext(TOY.public, 5, -1)


@settings(max_examples=50)
@given(st.integers(1, 2**128 - 1), st.integers(0, 127))
def test_shift_is_multiplication_by_power_of_two(k, b):
    pub = KEY512.public
    c = encrypt_raw(pub, k)
    assert decrypt_raw(KEY512, shift_ciphertext(pub, c, b)) == (k << b) % pub.n


@settings(max_examples=30)
@given(st.integers(1, 2**64), st.integers(1, 2**64))
def test_multiplicative_homomorphism(a, b):
    pub = KEY512.public
    assert encrypt_raw(pub, a) * encrypt_raw(pub, b) % pub.n == encrypt_raw(pub, a * b % pub.n)


@settings(max_examples=25)
@given(st.binary(max_size=62))
def test_oaep_roundtrip(m):
    c = encrypt_padded(KEY1024.public, m, random.Random(len(m)))
    assert decrypt_padded(KEY1024, c) == m


def test_oaep_is_randomised():
    rng = random.Random(0)
    m = b"sixteen byte key"
    assert encrypt_padded(KEY1024.public, m, rng) != encrypt_padded(KEY1024.public, m, rng)


def test_oaep_capacity_and_errors():
    # 64-byte modulus: no room for two SHA-256 digests plus framing
    assert oaep_capacity(KEY512.public) == -2
    key = KEY1024
    assert oaep_capacity(key.public) == 62
    with pytest.raises(DomainError):
        encrypt_padded(key.public, bytes(63))


def test_oaep_rejects_tampering_uniformly():
    key = KEY1024
    c = encrypt_padded(key.public, b"k" * 16, random.Random(1))
    errors = set()
    for tampered in (shift_ciphertext(key.public, c, 1), c ^ 1, encrypt_raw(key.public, 12345)):
        with pytest.raises(PaddingError) as info:
            decrypt_padded(key, tampered)
        errors.add(str(info.value))
    with pytest.raises(PaddingError):
        decrypt_padded(key, c, label=b"other")
    assert errors == {"decryption error"}


def test_key_file_roundtrip(tmp_path):
    key = keygen(256, rng=9)
    assert load_key(dump_key(key)) == key
    assert load_key(dump_key(key.public)) == key.public
    save_key(tmp_path / "k", key)
    assert read_key(tmp_path / "k") == key
    assert dump_key(TOY.public) == "n: 3233\ne: 17\n"


@pytest.mark.parametrize("text", ["n: 33\n", "n: 33\ne: x\n", "bogus\n", "n: 35\ne: 5\nd: 5\np: 5\nq: 5\n"])
def test_key_file_errors(text):
    with pytest.raises(ValueError):
        load_key(text)


def test_public_key_properties():
    pub = RsaPublicKey(3233, 17)
    assert pub.bits == 12 and pub.byte_len == 2
