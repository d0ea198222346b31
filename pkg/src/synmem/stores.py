"""Encoded synaptic weight stores: crossbar, pointer CSR, pointer bitmap.

Each store answers forward lookups (all posts of a pre), reverse lookups
(all pres of a post) and in-place weight writes, and reports the exact
memory traffic of each operation as an AccessTrace. Connectivity is frozen
at build time for the sparse formats; weight values stay mutable.

Lookup traffic contracts (single query):
  crossbar  fwd: n_post weight reads        rev: n_pre weight reads
  CSR       fwd: 2 row_ptr + k col_idx + k weight reads
            rev: full scan, (n_pre+1) row_ptr + nnz col_idx + match weights
  bitmap    fwd: 1 row_ptr + ceil(n_post/w_word) bitmap + k weight reads
            rev: n_pre row_ptr + per-row rank words + match weights

Whole-layer passes are closed forms: a forward pass is the sum of the
per-pre lookups; a backward pass amortizes to a single scan of the
structure (each pointer/index/bitmap word and each weight read once)
plus, when updating, one write per stored weight.

Thread contract: any number of concurrent readers or one writer; traces
are returned per call and merged by the caller.
"""

import numpy as np

from .matrix import SynapseMatrix
from .quant import quantize_weights
from .trace import AccessTrace, MemBank


def ceil_log2(n):
    """Bits needed to address n distinct values; 0 for n <= 1."""
    return 0 if n <= 1 else int(n - 1).bit_length()


def quantize_for_store(values, b_w):
    """Weight words for a b_w-bit store.

    The signed grid at one bit degenerates to {0} (its feasible range is
    empty), so 1-bit stores hold zero words; wider stores use the normal
    clip-and-snap grid.
    """
    if b_w < 1:
        raise ValueError(f"b_w must be >= 1, got {b_w}")
    if b_w == 1:
        return np.zeros_like(np.asarray(values, dtype=np.float64))
    return quantize_weights(values, b_w)


class CrossbarStore:
    """Dense row-major storage of every potential synapse.

    The slot of synapse (i, j) is word i * n_post + j; absent synapses hold
    zero words. The connectivity mask is kept as bookkeeping so lookups can
    report exactly the built matrix (a present synapse may legitimately
    quantize to zero); it occupies no counted storage.
    """

    scheme = "CB"

    def __init__(self, weights, mask, b_w):
        self.n_pre, self.n_post = weights.shape
        self.b_w = b_w
        self.weights = weights
        self.mask = mask
        self.weight_bank = MemBank("weight", "weight", self.n_pre * self.n_post, b_w)

    @property
    def nnz(self):
        return int(self.mask.sum())

    def banks(self):
        return (self.weight_bank,)

    def storage_bits(self):
        return {b.name: b.capacity_bits for b in self.banks()}

    def to_dense(self):
        return self.weights.copy()

    def forward_lookup(self, pre_id):
        if not 0 <= pre_id < self.n_pre:
            raise IndexError(f"pre_id {pre_id} out of range [0, {self.n_pre})")
        t = AccessTrace()
        t.read(self.weight_bank, self.n_post)
        cols = np.nonzero(self.mask[pre_id])[0]
        return [(int(j), float(self.weights[pre_id, j])) for j in cols], t

    def reverse_lookup(self, post_id):
        if not 0 <= post_id < self.n_post:
            raise IndexError(f"post_id {post_id} out of range [0, {self.n_post})")
        t = AccessTrace()
        t.read(self.weight_bank, self.n_pre)
        rows = np.nonzero(self.mask[:, post_id])[0]
        return [(int(i), float(self.weights[i, post_id])) for i in rows], t

    def write_weight(self, pre_id, post_id, value, batched=False):
        if not (0 <= pre_id < self.n_pre and 0 <= post_id < self.n_post):
            raise IndexError(f"synapse ({pre_id}, {post_id}) out of range")
        self.weights[pre_id, post_id] = quantize_for_store(value, self.b_w)
        self.mask[pre_id, post_id] = True
        t = AccessTrace()
        t.write(self.weight_bank)
        return t

    def forward_pass_trace(self):
        t = AccessTrace()
        t.read(self.weight_bank, self.n_pre * self.n_post)
        return t

    def backward_scan_trace(self):
        t = AccessTrace()
        t.read(self.weight_bank, self.n_pre * self.n_post)
        return t

    def weight_update_trace(self):
        t = AccessTrace()
        t.write(self.weight_bank, self.nnz)
        return t

    def backward_pass_trace(self):
        return self.backward_scan_trace() + self.weight_update_trace()


class CsrStore:
    """Pointer-based compressed sparse row storage.

    row_ptr has n_pre + 1 entries of p = ceil_log2(nnz + 1) bits, col_idx
    nnz entries of ceil_log2(n_post) bits, and the weight memory nnz words.
    Column indices are strictly increasing within a row. Reverse access has
    no transpose table and scans the whole structure.
    """

    scheme = "PB-CSR"

    def __init__(self, row_ptr, col_idx, weights, n_post, b_w):
        self.n_pre = len(row_ptr) - 1
        self.n_post = n_post
        self.b_w = b_w
        self.row_ptr = row_ptr
        self.col_idx = col_idx
        self.weights = weights
        self.p_bits = ceil_log2(self.nnz + 1)
        self.c_bits = ceil_log2(n_post)
        self.ptr_bank = MemBank("row_ptr", "index", self.n_pre + 1, self.p_bits)
        self.idx_bank = MemBank("col_idx", "index", self.nnz, self.c_bits)
        self.weight_bank = MemBank("weight", "weight", self.nnz, b_w)

    @property
    def nnz(self):
        return len(self.col_idx)

    def banks(self):
        return (self.ptr_bank, self.idx_bank, self.weight_bank)

    def storage_bits(self):
        return {b.name: b.capacity_bits for b in self.banks()}

    def to_dense(self):
        dense = np.zeros((self.n_pre, self.n_post))
        for i in range(self.n_pre):
            lo, hi = self.row_ptr[i], self.row_ptr[i + 1]
            dense[i, self.col_idx[lo:hi]] = self.weights[lo:hi]
        return dense

    def forward_lookup(self, pre_id):
        if not 0 <= pre_id < self.n_pre:
            raise IndexError(f"pre_id {pre_id} out of range [0, {self.n_pre})")
        lo, hi = int(self.row_ptr[pre_id]), int(self.row_ptr[pre_id + 1])
        t = AccessTrace()
        t.read(self.ptr_bank, 2)
        t.read(self.idx_bank, hi - lo)
        t.read(self.weight_bank, hi - lo)
        return [(int(self.col_idx[k]), float(self.weights[k]))
                for k in range(lo, hi)], t

    def reverse_lookup(self, post_id):
        if not 0 <= post_id < self.n_post:
            raise IndexError(f"post_id {post_id} out of range [0, {self.n_post})")
        t = AccessTrace()
        t.read(self.ptr_bank, self.n_pre + 1)
        t.read(self.idx_bank, self.nnz)
        hits = np.nonzero(self.col_idx == post_id)[0]
        t.read(self.weight_bank, len(hits))
        rows = np.searchsorted(self.row_ptr, hits, side="right") - 1
        return [(int(r), float(self.weights[k])) for r, k in zip(rows, hits)], t

    def _locate(self, pre_id, post_id, t):
        """Find the weight slot of (pre_id, post_id), charging the scan reads."""
        lo, hi = int(self.row_ptr[pre_id]), int(self.row_ptr[pre_id + 1])
        t.read(self.ptr_bank, 2)
        row_cols = self.col_idx[lo:hi]
        pos = int(np.searchsorted(row_cols, post_id))
        # sequential compare hardware: reads up to and including the hit
        if pos == len(row_cols) or row_cols[pos] != post_id:
            t.read(self.idx_bank, len(row_cols))
            raise KeyError(f"synapse ({pre_id}, {post_id}) not present")
        t.read(self.idx_bank, pos + 1)
        return lo + pos

    def write_weight(self, pre_id, post_id, value, batched=False):
        if not (0 <= pre_id < self.n_pre and 0 <= post_id < self.n_post):
            raise IndexError(f"synapse ({pre_id}, {post_id}) out of range")
        t = AccessTrace()
        if batched:
            lo, hi = int(self.row_ptr[pre_id]), int(self.row_ptr[pre_id + 1])
            row_cols = self.col_idx[lo:hi]
            pos = int(np.searchsorted(row_cols, post_id))
            if pos == len(row_cols) or row_cols[pos] != post_id:
                raise KeyError(f"synapse ({pre_id}, {post_id}) not present")
            slot = lo + pos
        else:
            slot = self._locate(pre_id, post_id, t)
        self.weights[slot] = quantize_for_store(value, self.b_w)
        t.write(self.weight_bank)
        return t

    def forward_pass_trace(self):
        t = AccessTrace()
        t.read(self.ptr_bank, 2 * self.n_pre)
        t.read(self.idx_bank, self.nnz)
        t.read(self.weight_bank, self.nnz)
        return t

    def backward_scan_trace(self):
        t = AccessTrace()
        t.read(self.ptr_bank, self.n_pre + 1)
        t.read(self.idx_bank, self.nnz)
        t.read(self.weight_bank, self.nnz)
        return t

    def weight_update_trace(self):
        t = AccessTrace()
        t.write(self.weight_bank, self.nnz)
        return t

    def backward_pass_trace(self):
        return self.backward_scan_trace() + self.weight_update_trace()


class BitmapStore:
    """Pointer-based bitmap storage.

    Each row owns a presence bitmap of ceil(n_post / w_word) words plus a
    base pointer into a packed weight memory; the weight of (i, j) sits at
    row_ptr[i] + rank(i, j) where rank counts set bits before column j.
    Rank hardware reads every bitmap word up to and including j's word.
    """

    scheme = "PB-BMP"

    def __init__(self, row_ptr, bitmap, weights, n_post, b_w, w_word):
        self.n_pre = len(row_ptr)
        self.n_post = n_post
        self.b_w = b_w
        self.w_word = w_word
        self.row_ptr = row_ptr
        self.bitmap = bitmap            # (n_pre, words_per_row) uint64, w_word used bits
        self.weights = weights
        self.words_per_row = bitmap.shape[1]
        self.p_bits = ceil_log2(self.nnz + 1)
        self.ptr_bank = MemBank("row_ptr", "index", self.n_pre, self.p_bits)
        self.bitmap_bank = MemBank(
            "bitmap", "index", self.n_pre * self.words_per_row, w_word)
        self.weight_bank = MemBank("weight", "weight", self.nnz, b_w)

    @property
    def nnz(self):
        return len(self.weights)

    def banks(self):
        return (self.ptr_bank, self.bitmap_bank, self.weight_bank)

    def storage_bits(self):
        return {b.name: b.capacity_bits for b in self.banks()}

    def _row_cols(self, pre_id):
        words = self.bitmap[pre_id]
        bits = (words[:, None] >> np.arange(self.w_word, dtype=np.uint64)) & np.uint64(1)
        cols = np.nonzero(bits.reshape(-1))[0]
        return cols[cols < self.n_post]

    def to_dense(self):
        dense = np.zeros((self.n_pre, self.n_post))
        for i in range(self.n_pre):
            cols = self._row_cols(i)
            base = int(self.row_ptr[i])
            dense[i, cols] = self.weights[base:base + len(cols)]
        return dense

    def forward_lookup(self, pre_id):
        if not 0 <= pre_id < self.n_pre:
            raise IndexError(f"pre_id {pre_id} out of range [0, {self.n_pre})")
        t = AccessTrace()
        t.read(self.ptr_bank)
        t.read(self.bitmap_bank, self.words_per_row)
        cols = self._row_cols(pre_id)
        t.read(self.weight_bank, len(cols))
        base = int(self.row_ptr[pre_id])
        return [(int(j), float(self.weights[base + k]))
                for k, j in enumerate(cols)], t

    def _rank(self, pre_id, post_id):
        """Set bits of row pre_id strictly before column post_id."""
        word, bit = divmod(post_id, self.w_word)
        row = self.bitmap[pre_id]
        below = int(np.bitwise_count(row[:word]).sum()) if word else 0
        partial = int(row[word]) & ((1 << bit) - 1)
        return below + partial.bit_count()

    def reverse_lookup(self, post_id):
        if not 0 <= post_id < self.n_post:
            raise IndexError(f"post_id {post_id} out of range [0, {self.n_post})")
        word, bit = divmod(post_id, self.w_word)
        t = AccessTrace()
        t.read(self.ptr_bank, self.n_pre)
        t.read(self.bitmap_bank, self.n_pre * (word + 1))
        masked = self.bitmap[:, :word + 1].copy()
        masked[:, word] &= np.uint64((1 << bit) - 1)
        ranks = np.bitwise_count(masked).sum(axis=1).astype(np.int64)
        present = (self.bitmap[:, word] >> np.uint64(bit)) & np.uint64(1)
        rows = np.nonzero(present)[0]
        t.read(self.weight_bank, len(rows))
        return [(int(i), float(self.weights[int(self.row_ptr[i]) + int(ranks[i])]))
                for i in rows], t

    def write_weight(self, pre_id, post_id, value, batched=False):
        if not (0 <= pre_id < self.n_pre and 0 <= post_id < self.n_post):
            raise IndexError(f"synapse ({pre_id}, {post_id}) out of range")
        word, bit = divmod(post_id, self.w_word)
        t = AccessTrace()
        if not batched:
            t.read(self.ptr_bank)
            t.read(self.bitmap_bank, word + 1)
        if not (int(self.bitmap[pre_id, word]) >> bit) & 1:
            raise KeyError(f"synapse ({pre_id}, {post_id}) not present")
        slot = int(self.row_ptr[pre_id]) + self._rank(pre_id, post_id)
        self.weights[slot] = quantize_for_store(value, self.b_w)
        t.write(self.weight_bank)
        return t

    def forward_pass_trace(self):
        t = AccessTrace()
        t.read(self.ptr_bank, self.n_pre)
        t.read(self.bitmap_bank, self.n_pre * self.words_per_row)
        t.read(self.weight_bank, self.nnz)
        return t

    def backward_scan_trace(self):
        t = AccessTrace()
        t.read(self.ptr_bank, self.n_pre)
        t.read(self.bitmap_bank, self.n_pre * self.words_per_row)
        t.read(self.weight_bank, self.nnz)
        return t

    def weight_update_trace(self):
        t = AccessTrace()
        t.write(self.weight_bank, self.nnz)
        return t

    def backward_pass_trace(self):
        return self.backward_scan_trace() + self.weight_update_trace()


def fc_pass_traces(scheme, n_pre, n_post, nnz, b_w, w_word=32):
    """(forward, backward_scan, update) traces of a layer from its counts.

    Pass traffic depends only on the shape, the nonzero count and the word
    widths, so layer-level accounting can skip building the store; equality
    with built-store traces is covered by tests.
    """
    p = ceil_log2(nnz + 1)
    fwd, bwd, upd = AccessTrace(), AccessTrace(), AccessTrace()
    if scheme == "CB":
        wt = MemBank("weight", "weight", n_pre * n_post, b_w)
        fwd.read(wt, n_pre * n_post)
        bwd.read(wt, n_pre * n_post)
        upd.write(wt, nnz)
    elif scheme == "PB-CSR":
        ptr = MemBank("row_ptr", "index", n_pre + 1, p)
        idx = MemBank("col_idx", "index", nnz, ceil_log2(n_post))
        wt = MemBank("weight", "weight", nnz, b_w)
        fwd.read(ptr, 2 * n_pre)
        fwd.read(idx, nnz)
        fwd.read(wt, nnz)
        bwd.read(ptr, n_pre + 1)
        bwd.read(idx, nnz)
        bwd.read(wt, nnz)
        upd.write(wt, nnz)
    elif scheme == "PB-BMP":
        words_per_row = -(-n_post // w_word)
        ptr = MemBank("row_ptr", "index", n_pre, p)
        bm = MemBank("bitmap", "index", n_pre * words_per_row, w_word)
        wt = MemBank("weight", "weight", nnz, b_w)
        for t in (fwd, bwd):
            t.read(ptr, n_pre)
            t.read(bm, n_pre * words_per_row)
            t.read(wt, nnz)
        upd.write(wt, nnz)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    return fwd, bwd, upd


def build_crossbar(m: SynapseMatrix, b_w):
    if b_w < 1:
        raise ValueError(f"b_w must be >= 1, got {b_w}")
    weights = np.where(m.mask, quantize_for_store(m.weights, b_w), 0.0)
    return CrossbarStore(weights, m.mask.copy(), b_w)


def build_csr(m: SynapseMatrix, b_w):
    if b_w < 1:
        raise ValueError(f"b_w must be >= 1, got {b_w}")
    counts = m.mask.sum(axis=1)
    row_ptr = np.zeros(m.n_pre + 1, dtype=np.int64)
    np.cumsum(counts, out=row_ptr[1:])
    rows, cols = np.nonzero(m.mask)      # row-major: cols ascending per row
    weights = quantize_for_store(m.weights[rows, cols], b_w)
    return CsrStore(row_ptr, cols.astype(np.int64), weights, m.n_post, b_w)


def build_bitmap(m: SynapseMatrix, b_w, w_word=32):
    if b_w < 1:
        raise ValueError(f"b_w must be >= 1, got {b_w}")
    if not 1 <= w_word <= 64:
        raise ValueError(f"w_word must be in [1, 64], got {w_word}")
    words_per_row = -(-m.n_post // w_word)
    bitmap = np.zeros((m.n_pre, words_per_row), dtype=np.uint64)
    rows, cols = np.nonzero(m.mask)
    np.bitwise_or.at(bitmap, (rows, cols // w_word),
                     np.uint64(1) << (cols % w_word).astype(np.uint64))
    counts = m.mask.sum(axis=1)
    row_ptr = np.zeros(m.n_pre, dtype=np.int64)
    np.cumsum(counts[:-1], out=row_ptr[1:])
    weights = quantize_for_store(m.weights[rows, cols], b_w)
    return BitmapStore(row_ptr, bitmap, weights, m.n_post, b_w, w_word)
