"""Linear-scan retrieval over bit-packed codes, plus exact ground-truth scans.

Hamming distances are popcounts of XORed 64-bit words. All rankings break
ties by ascending id so results are deterministic; top-n selection uses an
O(N) partition on a composite (distance, id) key rather than a full sort.
Indexes are immutable after construction and queries are pure, so batch
queries may run in parallel over the query axis.
"""

from dataclasses import dataclass

import numpy as np

from .codes import PLUS_MINUS, HashCode, n_words, unpack_bits
from .errors import InputError
from .model import ModelParams

# distances accumulate in 32-bit ints; 64-bit ids share a selection key with
# a 16-bit distance field, so cap the code length
MAX_BITS = 4096
_ID_BITS = 48


@dataclass
class BinaryIndex:
    """N bit-packed codes of l bits each, searchable by Hamming scan."""

    codes: np.ndarray
    l: int
    ids: np.ndarray | None = None

    def __post_init__(self):
        self.codes = np.ascontiguousarray(self.codes, dtype=np.uint64)
        if self.codes.ndim != 2 or self.codes.shape[1] != n_words(self.l):
            raise InputError(
                f"codes must be (N, {n_words(self.l)}) words for {self.l} bits, "
                f"got {self.codes.shape}"
            )
        if not 1 <= self.l <= MAX_BITS:
            raise InputError(f"code length must lie in [1, {MAX_BITS}]")
        if len(self) >= (1 << _ID_BITS):
            raise InputError("index too large for the selection key")
        pad = n_words(self.l) * 64 - self.l
        if pad and np.any(self.codes[:, -1] >> np.uint64(64 - pad)):
            raise InputError("padding bits beyond the code length must be zero")
        if self.ids is not None:
            self.ids = np.asarray(self.ids)
            if self.ids.shape != (len(self),):
                raise InputError("id_map length must match the number of codes")

    def __len__(self) -> int:
        return self.codes.shape[0]

    def code(self, i: int) -> HashCode:
        return HashCode(self.codes[i].copy(), self.l)

    def external_ids(self, positions: np.ndarray) -> np.ndarray:
        return positions if self.ids is None else self.ids[positions]


def hamming_distance(a: HashCode, b: HashCode) -> int:
    """Number of differing bits: popcount of the XORed words."""
    if a.l != b.l:
        raise InputError(f"code lengths differ: {a.l} vs {b.l}")
    return int(np.bitwise_count(a.words ^ b.words).sum())


def hamming_scan(index: BinaryIndex, query: HashCode) -> np.ndarray:
    """Hamming distance from the query to every code, as (N,) int32."""
    if query.l != index.l:
        raise InputError(f"query length {query.l} != index length {index.l}")
    diff = index.codes ^ query.words[None, :]
    return np.bitwise_count(diff).sum(axis=1, dtype=np.int32)


def _select_smallest(keys: np.ndarray, n: int) -> np.ndarray:
    """Positions of the n smallest keys, in ascending key order."""
    count = len(keys)
    n = min(n, count)
    if n == 0:
        return np.empty(0, dtype=np.int64)
    if n < count:
        part = np.argpartition(keys, n - 1)[:n]
    else:
        part = np.arange(count)
    return part[np.argsort(keys[part], kind="stable")]


def knn_hamming(index: BinaryIndex, query: HashCode, n: int) -> np.ndarray:
    """Ids of the n nearest codes by Hamming distance, ties by ascending id."""
    dist = hamming_scan(index, query)
    pos = np.arange(len(index), dtype=np.uint64)
    keys = (dist.astype(np.uint64) << np.uint64(_ID_BITS)) | pos
    return index.external_ids(_select_smallest(keys, n))


def knn_hamming_batch(index: BinaryIndex, queries: np.ndarray, n: int) -> np.ndarray:
    """knn_hamming over a (Q, words) array of packed queries; (Q, min(n,N)) ids."""
    queries = np.ascontiguousarray(queries, dtype=np.uint64)
    if queries.ndim != 2 or queries.shape[1] != n_words(index.l):
        raise InputError(f"queries must be (Q, {n_words(index.l)}) packed words")
    out = [knn_hamming(index, HashCode(q, index.l), n) for q in queries]
    return np.stack(out) if out else np.empty((0, 0), dtype=np.int64)


def knn_exact_l2(dataset, query, k: int) -> np.ndarray:
    """Brute-force squared-Euclidean top-k, ascending distance, ties by id."""
    rows = np.asarray(getattr(dataset, "rows", dataset), dtype=np.float64)
    query = np.asarray(query, dtype=np.float64)
    if rows.ndim != 2 or query.shape != (rows.shape[1],):
        raise InputError("query dimension does not match dataset")
    d2 = (rows * rows).sum(axis=1) - 2.0 * (rows @ query)
    return _select_smallest_float(d2, k)


def knn_exact_ip(dataset, query, k: int) -> np.ndarray:
    """Brute-force inner-product top-k, descending score, ties by id."""
    rows = np.asarray(getattr(dataset, "rows", dataset), dtype=np.float64)
    query = np.asarray(query, dtype=np.float64)
    if rows.ndim != 2 or query.shape != (rows.shape[1],):
        raise InputError("query dimension does not match dataset")
    return _select_smallest_float(-(rows @ query), k)


def _select_smallest_float(scores: np.ndarray, k: int) -> np.ndarray:
    k = min(k, len(scores))
    if k == 0:
        return np.empty(0, dtype=np.int64)
    if k < len(scores):
        part = np.argpartition(scores, k - 1)[:k]
        # a stable sort on (score, position) keeps equal scores in id order,
        # but the partition boundary may have split a tie group arbitrarily;
        # widen to include every score tied with the current worst
        worst = scores[part].max()
        part = np.flatnonzero(scores <= worst)
    else:
        part = np.arange(len(scores))
    order = np.argsort(scores[part], kind="stable")
    return part[order][:k]


def asymmetric_ip_search(index: BinaryIndex, params: ModelParams, query, n: int) -> np.ndarray:
    """Rank codes by the inner product of the query with their reconstructions.

    Precomputes s = U^T x once; each code then scores sum of s over its set
    bits (sign-weighted under the plus-minus domain). Descending score, ties
    by ascending id.
    """
    if params.l != index.l:
        raise InputError(f"model code length {params.l} != index length {index.l}")
    query = np.asarray(query, dtype=np.float64)
    if query.shape != (params.d,):
        raise InputError(f"query has shape {query.shape}, expected ({params.d},)")
    s = params.U.T @ query
    bits = unpack_bits(index.codes, index.l).astype(np.float64)
    if params.code_domain == PLUS_MINUS:
        scores = (2.0 * bits - 1.0) @ s
    else:
        scores = bits @ s
    return index.external_ids(_select_smallest_float(-scores, n))
