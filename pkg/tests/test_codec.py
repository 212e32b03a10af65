import pytest
from hypothesis import given
from hypothesis import strategies as st

from certchain.codec import CodecError, Reader, bstr, u16, u32, u64


def test_fixed_width_encodings():
    assert u16(0) == b"\x00\x00"
    assert u16(0xFFFF) == b"\xff\xff"
    assert u32(1) == b"\x00\x00\x00\x01"
    assert u64(5000) == b"\x00\x00\x00\x00\x00\x00\x13\x88"


@pytest.mark.parametrize("fn,bad", [(u16, -1), (u16, 1 << 16), (u32, 1 << 32), (u64, 1 << 64)])
def test_out_of_range_rejected(fn, bad):
    with pytest.raises(CodecError):
        fn(bad)


def test_bstr_roundtrip():
    payload = b"\x00\x01binary\xff"
    r = Reader(bstr(payload))
    assert r.bstr() == payload
    r.expect_end()


def test_reader_truncation_and_trailing():
    r = Reader(b"\x00\x00\x00\x05ab")
    with pytest.raises(CodecError):
        r.bstr()
    r = Reader(b"\x01\x02")
    r.take(1)
    with pytest.raises(CodecError):
        r.expect_end()


@given(st.lists(st.binary(max_size=64), max_size=8), st.integers(0, 2**64 - 1))
def test_mixed_stream_roundtrip(chunks, n):
    blob = u64(n) + b"".join(bstr(c) for c in chunks) + u32(len(chunks))
    r = Reader(blob)
    assert r.u64() == n
    assert [r.bstr() for _ in chunks] == chunks
    assert r.u32() == len(chunks)
    r.expect_end()
