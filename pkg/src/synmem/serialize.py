"""Binary container and summary records for encoded stores.

Container layout (all little-endian):

    magic      4s   b"SYNM"
    version    u16  currently 1
    scheme     u8   1=CB  2=PB-CSR  3=PB-BMP  4=FUNC
    geometry header, scheme-specific:
        CB     u32 n_pre, u32 n_post, u16 b_w
        CSR    u32 n_pre, u32 n_post, u16 b_w, u64 nnz
        BMP    u32 n_pre, u32 n_post, u16 b_w, u16 w_word, u64 nnz
        FUNC   u32 in_h, u32 in_w, u16 k_h, u16 k_w, u32 c_in, u32 c_out, u16 b_w
    bank count u8, then per bank:
        u8 name length, name (ascii), u64 n_words, u16 word_bits,
        n_words words of ceil(word_bits/8) bytes each, little-endian.

Weight-bank words are signed two's-complement multiples of the grid step
2**(1 - b_w); index banks (pointers, column indices, bitmaps) are unsigned.
Zero-width banks (an empty structure needs zero-bit pointers) carry no
payload bytes. A crossbar records only weight words, so a reloaded
crossbar treats nonzero words as the connectivity.
"""

import json
import struct

import numpy as np

from .conv import ConvGeometry, FunctionalStore
from .quant import sigma
from .stores import BitmapStore, CrossbarStore, CsrStore

MAGIC = b"SYNM"
VERSION = 1
_SCHEME_TAGS = {"CB": 1, "PB-CSR": 2, "PB-BMP": 3, "FUNC": 4}


def _pack_words(values, word_bits, signed):
    nbytes = -(-word_bits // 8)
    if word_bits == 0 or len(values) == 0:
        return b""
    out = bytearray()
    mod = 1 << word_bits
    for v in values:
        v = int(v)
        if signed and v < 0:
            v += mod
        out += v.to_bytes(nbytes, "little")
    return bytes(out)


def _unpack_words(buf, offset, n_words, word_bits, signed):
    nbytes = -(-word_bits // 8)
    if word_bits == 0:
        return np.zeros(n_words, dtype=np.int64), offset
    vals = np.empty(n_words, dtype=np.int64 if signed else np.uint64)
    half = 1 << (word_bits - 1)
    mod = 1 << word_bits
    for k in range(n_words):
        v = int.from_bytes(buf[offset:offset + nbytes], "little")
        if signed and v >= half:
            v -= mod
        vals[k] = v
        offset += nbytes
    return vals, offset


def _weight_codes(weights, b_w):
    return np.round(np.asarray(weights) / sigma(b_w)).astype(np.int64)


def _bank_blob(name, values, n_words, word_bits, signed):
    head = struct.pack("<B", len(name)) + name.encode("ascii")
    head += struct.pack("<QH", n_words, word_bits)
    return head + _pack_words(values, word_bits, signed)


def to_bytes(store):
    tag = _SCHEME_TAGS[store.scheme]
    head = struct.pack("<4sHB", MAGIC, VERSION, tag)
    if isinstance(store, CrossbarStore):
        head += struct.pack("<IIH", store.n_pre, store.n_post, store.b_w)
        codes = _weight_codes(store.weights.reshape(-1), store.b_w)
        banks = [_bank_blob("weight", codes, len(codes), store.b_w, True)]
    elif isinstance(store, CsrStore):
        head += struct.pack("<IIHQ", store.n_pre, store.n_post, store.b_w, store.nnz)
        banks = [
            _bank_blob("row_ptr", store.row_ptr, len(store.row_ptr), store.p_bits, False),
            _bank_blob("col_idx", store.col_idx, len(store.col_idx), store.c_bits, False),
            _bank_blob("weight", _weight_codes(store.weights, store.b_w),
                       store.nnz, store.b_w, True),
        ]
    elif isinstance(store, BitmapStore):
        head += struct.pack("<IIHHQ", store.n_pre, store.n_post, store.b_w,
                            store.w_word, store.nnz)
        banks = [
            _bank_blob("row_ptr", store.row_ptr, len(store.row_ptr), store.p_bits, False),
            _bank_blob("bitmap", store.bitmap.reshape(-1),
                       store.bitmap.size, store.w_word, False),
            _bank_blob("weight", _weight_codes(store.weights, store.b_w),
                       store.nnz, store.b_w, True),
        ]
    elif isinstance(store, FunctionalStore):
        g = store.geometry
        head += struct.pack("<IIHHIIH", g.in_h, g.in_w, g.k_h, g.k_w,
                            g.c_in, g.c_out, store.b_w)
        codes = _weight_codes(store.kernel.reshape(-1), store.b_w)
        banks = [_bank_blob("weight", codes, len(codes), store.b_w, True)]
    else:
        raise TypeError(f"unknown store type {type(store).__name__}")
    return head + struct.pack("<B", len(banks)) + b"".join(banks)


def _read_bank(buf, offset, signed_names=("weight",)):
    (name_len,) = struct.unpack_from("<B", buf, offset)
    offset += 1
    name = buf[offset:offset + name_len].decode("ascii")
    offset += name_len
    n_words, word_bits = struct.unpack_from("<QH", buf, offset)
    offset += 10
    vals, offset = _unpack_words(buf, offset, n_words, word_bits,
                                 name in signed_names)
    return name, vals, word_bits, offset


def from_bytes(buf):
    magic, version, tag = struct.unpack_from("<4sHB", buf, 0)
    if magic != MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ValueError(f"unsupported container version {version}")
    offset = 7
    if tag == 1:
        n_pre, n_post, b_w = struct.unpack_from("<IIH", buf, offset)
        offset += 10 + 1    # header + bank count
        _, codes, _, offset = _read_bank(buf, offset)
        weights = codes.reshape(n_pre, n_post) * sigma(b_w)
        return CrossbarStore(weights, weights != 0.0, b_w)
    if tag == 2:
        n_pre, n_post, b_w, nnz = struct.unpack_from("<IIHQ", buf, offset)
        offset += 18 + 1
        banks = {}
        for _ in range(3):
            name, vals, _, offset = _read_bank(buf, offset)
            banks[name] = vals
        return CsrStore(banks["row_ptr"], banks["col_idx"],
                        banks["weight"] * sigma(b_w), n_post, b_w)
    if tag == 3:
        n_pre, n_post, b_w, w_word, nnz = struct.unpack_from("<IIHHQ", buf, offset)
        offset += 20 + 1
        banks = {}
        for _ in range(3):
            name, vals, _, offset = _read_bank(buf, offset)
            banks[name] = vals
        words_per_row = -(-n_post // w_word)
        bitmap = banks["bitmap"].astype(np.uint64).reshape(n_pre, words_per_row)
        return BitmapStore(banks["row_ptr"], bitmap,
                           banks["weight"] * sigma(b_w), n_post, b_w, w_word)
    if tag == 4:
        in_h, in_w, k_h, k_w, c_in, c_out, b_w = struct.unpack_from("<IIHHIIH", buf, offset)
        offset += 22 + 1
        _, codes, _, offset = _read_bank(buf, offset)
        g = ConvGeometry(in_h, in_w, k_h, k_w, c_in, c_out)
        kernel = codes.reshape(c_in, c_out, k_h, k_w) * sigma(b_w)
        return FunctionalStore(g, kernel, b_w)
    raise ValueError(f"unknown scheme tag {tag}")


def summary(store):
    """Human-readable record: scheme, dims, density, word width, bank sizes."""
    rec = {
        "scheme": store.scheme,
        "n_pre": store.n_pre,
        "n_post": store.n_post,
        "b_w": store.b_w,
        "density": store.nnz / (store.n_pre * store.n_post),
        "storage_bits": store.storage_bits(),
        "total_bits": sum(store.storage_bits().values()),
    }
    if isinstance(store, FunctionalStore):
        g = store.geometry
        rec["geometry"] = {"in_h": g.in_h, "in_w": g.in_w, "k_h": g.k_h,
                           "k_w": g.k_w, "c_in": g.c_in, "c_out": g.c_out}
    return rec


def summary_json(store):
    return json.dumps(summary(store), sort_keys=True)
