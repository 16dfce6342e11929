import io
import random
import zlib

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wuplab.rsa_core import encrypt_raw, keygen
from wuplab.victim_prng import SessionKey
from wuplab.wup_protocol import (
    DES_MAC_KEY,
    MAX_FRAME,
    TEA_RESPONSE_KEY,
    DecryptionError,
    EncryptedSession,
    FramingError,
    InvalidRequest,
    MessageKind,
    Scheme,
    WupFormatError,
    WupMessage,
    aes_block_encrypt,
    aes_ecb_decrypt,
    aes_ecb_encrypt,
    decrypt_message,
    frame,
    frame_read,
    frame_write,
    key_int_to_session_key,
    looks_like_message,
    open_session,
    pkcs7_pad,
    pkcs7_unpad,
    seal_raw,
    seal_session,
    tea_cbc_decrypt,
    tea_cbc_encrypt,
    tea_decrypt_block,
    tea_encrypt_block,
)

KEY = keygen(1024, rng=2)
SK = SessionKey(bytes(range(16)))
MSG = WupMessage.build(MessageKind.REQUEST, imei="861234567890123", url="http://example.test/")

field_names = st.text(st.characters(min_codepoint=33, max_codepoint=126), max_size=20)
messages = st.builds(
    WupMessage,
    st.sampled_from(list(MessageKind)),
    st.lists(st.tuples(field_names, st.binary(max_size=64)), max_size=6).map(tuple),
)


def test_hardcoded_constants():
    assert DES_MAC_KEY == bytes.fromhex("25923c7f2ae5ef92")
    assert TEA_RESPONSE_KEY == b"sDf434ol*123+-KD"


def test_aes_fips197_vector():
    key = bytes.fromhex("000102030405060708090a0b0c0d0e0f")
    pt = bytes.fromhex("00112233445566778899aabbccddeeff")
    assert aes_block_encrypt(key, pt).hex() == "69c4e0d86a7b0430d8cdb78070b4c55a"


def test_tea_zero_vector_and_inverse():
    assert tea_encrypt_block(bytes(16), bytes(8)).hex() == "41ea3a0a94baa940"
    block = b"8 bytes!"
    assert tea_decrypt_block(TEA_RESPONSE_KEY, tea_encrypt_block(TEA_RESPONSE_KEY, block)) == block


@given(st.binary(max_size=100))
def test_tea_cbc_roundtrip(data):
    ct = tea_cbc_encrypt(TEA_RESPONSE_KEY, data)
    assert len(ct) % 8 == 0 and len(ct) > len(data)
    assert tea_cbc_decrypt(TEA_RESPONSE_KEY, ct) == data


def test_tea_cbc_rejects_bad_length():
    with pytest.raises(DecryptionError):
        tea_cbc_decrypt(TEA_RESPONSE_KEY, b"1234567")


@given(st.binary(max_size=100))
def test_pkcs7_roundtrip(data):
    padded = pkcs7_pad(data)
    assert len(padded) % 16 == 0 and 1 <= len(padded) - len(data) <= 16
    assert pkcs7_unpad(padded) == data


@pytest.mark.parametrize("bad", [b"", b"x" * 15, b"x" * 15 + b"\x00", b"x" * 14 + b"\x01\x02", b"x" * 15 + b"\x11"])
def test_pkcs7_rejects(bad):
    with pytest.raises(DecryptionError):
        pkcs7_unpad(bad)


@given(st.binary(max_size=200))
def test_aes_ecb_roundtrip(data):
    assert aes_ecb_decrypt(SK, aes_ecb_encrypt(SK, data)) == data


def test_aes_ecb_is_deterministic_per_block():
    ct = aes_ecb_encrypt(SK, bytes(32))
    assert ct[:16] == ct[16:32]


def test_bad_key_length():
    with pytest.raises(ValueError):
        aes_ecb_encrypt(b"short", b"data")


@given(messages)
def test_message_roundtrip(msg):
    assert WupMessage.from_bytes(msg.to_bytes()) == msg


def test_message_checksum_is_crc32_of_prefix():
    raw = MSG.to_bytes()
    assert raw[:4] == b"WUP1"
    assert int.from_bytes(raw[-4:], "big") == zlib.crc32(raw[:-4])
    assert zlib.crc32(b"123456789") == 0xCBF43926


@given(messages, st.data())
def test_corrupted_message_rejected(msg, data):
    raw = bytearray(msg.to_bytes())
    i = data.draw(st.integers(0, len(raw) - 1))
    raw[i] ^= data.draw(st.integers(1, 255))
    with pytest.raises(WupFormatError):
        WupMessage.from_bytes(bytes(raw))


def test_message_get():
    assert MSG.get("imei") == b"861234567890123"
    assert MSG.get("missing") is None
    assert MSG.get("missing", b"d") == b"d"


@pytest.mark.parametrize("data", [b"", b"WUP1", b"XXXX" + bytes(20)])
def test_message_garbage(data):
    with pytest.raises(WupFormatError):
        WupMessage.from_bytes(data)


def test_decrypt_message_and_magic_filter():
    ct = aes_ecb_encrypt(SK, MSG.to_bytes())
    assert decrypt_message(SK, ct) == MSG
    assert looks_like_message(SK, ct[:16])
    other = SessionKey(bytes(16))
    assert not looks_like_message(other, ct[:16])
    with pytest.raises((DecryptionError, WupFormatError)):
        decrypt_message(other, ct)


def test_encrypted_session_layout():
    sess = seal_session(KEY.public, SK, MSG)
    assert len(sess.rsa_blob) == 128 and len(sess.payload) % 16 == 0
    assert sess.blob_int == encrypt_raw(KEY.public, SK.as_int())
    assert EncryptedSession.from_bytes(sess.to_bytes(), 128) == sess
    with pytest.raises(WupFormatError):
        EncryptedSession(b"x" * 128, b"")
    with pytest.raises(WupFormatError):
        EncryptedSession.from_bytes(b"x" * 130, 128)


def test_textbook_session_is_deterministic():
    assert seal_session(KEY.public, SK, MSG) == seal_session(KEY.public, SK, MSG)


@pytest.mark.parametrize("scheme", list(Scheme))
def test_open_session_roundtrip(scheme):
    sess = seal_session(KEY.public, SK, MSG, scheme=scheme, rng=random.Random(1))
    key, msg = open_session(KEY, sess, scheme=scheme)
    assert key == SK and msg == MSG


def test_open_session_failures_are_uniform():
    sess = seal_session(KEY.public, SK, MSG)
    wrong_key = seal_raw(KEY.public, sess.blob_int, SessionKey(bytes(16)), MSG)
    cases = [
        EncryptedSession(sess.rsa_blob, sess.payload[:-16] + bytes(16)),  # bad padding
        EncryptedSession(sess.rsa_blob, aes_ecb_encrypt(SK, b"not a message")),
        EncryptedSession(b"\xff" * 128, sess.payload),  # blob >= n
        EncryptedSession(sess.rsa_blob[1:], sess.payload),  # wrong blob length
        EncryptedSession(sess.rsa_blob, wrong_key.payload),
    ]
    for bad in cases:
        with pytest.raises(InvalidRequest) as info:
            open_session(KEY, bad)
        assert str(info.value) == ""
    with pytest.raises(InvalidRequest):
        open_session(KEY, sess, scheme=Scheme.OAEP)


def test_server_keeps_low_key_bits():
    big = (0xABCD << 128) | SK.as_int()
    assert key_int_to_session_key(big) == SK
    assert key_int_to_session_key(0x1FF, 8) == SessionKey.from_int(0xFF)
    sess = seal_raw(KEY.public, encrypt_raw(KEY.public, big), SK, MSG)
    assert open_session(KEY, sess)[0] == SK


@settings(max_examples=30)
@given(st.binary(max_size=5000))
def test_frame_roundtrip(data):
    buf = io.BytesIO()
    frame_write(buf, data)
    assert buf.getvalue() == frame(data)
    buf.seek(0)
    assert frame_read(buf) == data


def test_frame_errors():
    with pytest.raises(FramingError):
        frame(bytes(MAX_FRAME + 1))
    with pytest.raises(FramingError):
        frame_read(io.BytesIO((MAX_FRAME + 1).to_bytes(4, "big")))
    with pytest.raises(FramingError):
        frame_read(io.BytesIO(b"\x00\x00\x00\x10short"))
    with pytest.raises(FramingError):
        frame_read(io.BytesIO(b"\x00"))
