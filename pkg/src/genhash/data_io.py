"""Dataset readers/writers, the synthetic generator, and checkpoint persistence.

Vector files follow the classic ANN-benchmark record layout: a 4-byte
little-endian int dimension prefix per record, then that many elements
(float32 / uint8 / int32 for .fvecs / .bvecs / .ivecs). All records must
share one dimension and files must contain whole records. The digit-image
reader takes the big-endian IDX format. Checkpoints are a little-endian
binary container with a trailing FNV-1a checksum; loads are bit-exact.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .baselines import ItqModel, PcaModel
from .codes import CODE_DOMAINS, n_words
from .errors import FormatError, InputError
from .model import ModelParams

CHECKPOINT_MAGIC = b"GHCKPT\x00\x00"
CHECKPOINT_VERSION = 1
CODES_MAGIC = b"GHCODES\x00"

KIND_SGH = "SGH"
KIND_ITQ = "ITQ"
KIND_PCA = "PCA"
_KIND_TAGS = {KIND_SGH: 0, KIND_ITQ: 1, KIND_PCA: 2}
_TAG_KINDS = {v: k for k, v in _KIND_TAGS.items()}

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3


@dataclass
class Dataset:
    """Dense feature matrix, held as float64 in memory (32-bit on disk)."""

    rows: np.ndarray
    mean: np.ndarray | None = None
    source: str = ""

    def __post_init__(self):
        self.rows = np.ascontiguousarray(self.rows, dtype=np.float64)
        if self.rows.ndim != 2:
            raise InputError("dataset rows must form a (N, d) matrix")
        if self.rows.size and not np.all(np.isfinite(self.rows)):
            raise InputError("dataset contains non-finite values")

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def d(self) -> int:
        return self.rows.shape[1]

    def centered(self) -> "Dataset":
        """Subtract the column means; the removed mean rides along."""
        mean = self.rows.mean(axis=0)
        return Dataset(self.rows - mean, mean=mean, source=self.source)


# ---------------------------------------------------------------------------
# fvecs / bvecs / ivecs
# ---------------------------------------------------------------------------

_VEC_ELEMENT = {"fvecs": ("<f4", 4), "bvecs": ("u1", 1), "ivecs": ("<i4", 4)}


def _read_vecs(path, flavor: str) -> np.ndarray:
    dtype, elem_size = _VEC_ELEMENT[flavor]
    with open(path, "rb") as f:
        raw = f.read()
    if not raw:
        return np.empty((0, 0), dtype=np.dtype(dtype))
    if len(raw) < 4:
        raise FormatError(f"{path}: truncated dimension prefix at byte 0")
    d = struct.unpack_from("<i", raw, 0)[0]
    if d <= 0:
        raise FormatError(f"{path}: non-positive dimension {d} at byte 0")
    record = 4 + d * elem_size
    if len(raw) % record != 0:
        offset = (len(raw) // record) * record
        raise FormatError(
            f"{path}: file size {len(raw)} is not a whole number of "
            f"{record}-byte records (trailing data at byte {offset})"
        )
    n = len(raw) // record
    buf = np.frombuffer(raw, dtype=np.uint8).reshape(n, record)
    dims = buf[:, :4].copy().view("<i4").ravel()
    bad = np.flatnonzero(dims != d)
    if bad.size:
        raise FormatError(
            f"{path}: record {bad[0]} has dimension {dims[bad[0]]} != {d} "
            f"(at byte {bad[0] * record})"
        )
    return buf[:, 4:].copy().view(dtype)


def read_fvecs(path) -> Dataset:
    """Read float32 vectors; see module docstring for the record layout."""
    return Dataset(_read_vecs(path, "fvecs").astype(np.float64), source=str(path))


def read_bvecs(path) -> Dataset:
    """Read uint8 vectors, widened to float64."""
    return Dataset(_read_vecs(path, "bvecs").astype(np.float64), source=str(path))


def read_ivecs(path) -> np.ndarray:
    """Read int32 id lists as an (N, k) array."""
    return _read_vecs(path, "ivecs").astype(np.int32)


def _write_vecs(path, rows, flavor: str):
    dtype, _ = _VEC_ELEMENT[flavor]
    rows = np.asarray(rows)
    if rows.ndim != 2:
        raise InputError("can only write a (N, d) matrix")
    n, d = rows.shape
    payload = rows.astype(np.dtype(dtype))
    if flavor == "bvecs" and (np.any(np.asarray(rows) < 0) or np.any(np.asarray(rows) > 255)):
        raise InputError("bvecs values must lie in [0, 255]")
    with open(path, "wb") as f:
        dim = struct.pack("<i", d)
        for row in payload:
            f.write(dim)
            f.write(row.tobytes())


def write_fvecs(path, rows):
    _write_vecs(path, rows, "fvecs")


def write_bvecs(path, rows):
    _write_vecs(path, rows, "bvecs")


def write_ivecs(path, rows):
    _write_vecs(path, rows, "ivecs")


# ---------------------------------------------------------------------------
# IDX digit images
# ---------------------------------------------------------------------------

IDX_IMAGE_MAGIC = 0x00000803


def read_mnist_idx(path) -> Dataset:
    """Read a big-endian IDX image file; pixels are scaled into [0, 1]."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 16:
        raise FormatError(f"{path}: IDX header truncated")
    magic, count, rows_, cols = struct.unpack_from(">iiii", raw, 0)
    if magic != IDX_IMAGE_MAGIC:
        raise FormatError(f"{path}: bad IDX magic {magic:#010x}")
    expected = 16 + count * rows_ * cols
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(raw)}")
    pixels = np.frombuffer(raw, dtype=np.uint8, offset=16).reshape(count, rows_ * cols)
    return Dataset(pixels.astype(np.float64) / 255.0, source=str(path))


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------


def synth_mixture(n: int, d: int, n_clusters: int, spread: float, seed: int) -> Dataset:
    """Seeded Gaussian mixture: centers uniform on a sphere of radius 10*spread,
    per-cluster standard deviation = spread. Pure function of its arguments."""
    if n < 1 or d < 1 or n_clusters < 1:
        raise InputError("n, d and n_clusters must be positive")
    if n_clusters > n:
        raise InputError(f"n_clusters {n_clusters} exceeds n {n}")
    if spread <= 0:
        raise InputError("spread must be positive")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    centers = rng.normal(size=(n_clusters, d))
    norms = np.linalg.norm(centers, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    centers = centers / norms * (10.0 * spread)
    assignment = rng.integers(0, n_clusters, size=n)
    rows = centers[assignment] + rng.normal(0.0, spread, size=(n, d))
    return Dataset(rows, source=f"synth(n={n},d={d},clusters={n_clusters},spread={spread},seed={seed})")


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def fnv1a_64(data: bytes) -> int:
    """64-bit FNV-1a hash."""
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def _block(arr) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f8").tobytes()


def save_checkpoint(path, model, center_mean=None):
    """Serialize a model (with optional preprocessing mean) to a binary file."""
    if isinstance(model, ModelParams):
        kind = KIND_SGH
        d, l = model.d, model.l
        domain = CODE_DOMAINS.index(model.code_domain)
        mean = np.zeros(d) if center_mean is None else np.asarray(center_mean, dtype=np.float64)
        if mean.shape != (d,):
            raise InputError(f"center mean must have length {d}")
        payload = (
            _block(model.W)
            + _block(model.U)
            + _block(model.beta)
            + _block([model.log_rho])
            + struct.pack("<B", 0 if center_mean is None else 1)
            + _block(mean)
        )
        extra = 0
    elif isinstance(model, ItqModel):
        kind = KIND_ITQ
        d, l = model.W_pca.shape
        domain = 0
        payload = (
            _block(model.mean)
            + _block(model.W_pca)
            + _block(model.R)
            + _block(model.scale)
        )
        extra = model.iterations
    elif isinstance(model, PcaModel):
        kind = KIND_PCA
        d, l = model.W_pca.shape
        domain = 0
        payload = _block(model.mean) + _block(model.W_pca)
        extra = 0
    else:
        raise InputError(f"cannot checkpoint model of type {type(model).__name__}")

    header = CHECKPOINT_MAGIC + struct.pack(
        "<IBBIIq", CHECKPOINT_VERSION, _KIND_TAGS[kind], domain, d, l, extra
    )
    with open(path, "wb") as f:
        f.write(header)
        f.write(payload)
        f.write(struct.pack("<Q", fnv1a_64(payload)))


def _take(buf: memoryview, count: int, shape):
    n_bytes = 8 * count
    arr = np.frombuffer(buf[:n_bytes], dtype="<f8").reshape(shape).copy()
    return arr, buf[n_bytes:]


def load_checkpoint(path, expect_kind=None):
    """Load a checkpoint; returns (model, center_mean_or_None).

    Rejects unknown versions, checksum mismatches, and (when expect_kind is
    given) checkpoints of a different model kind.
    """
    with open(path, "rb") as f:
        raw = f.read()
    head_size = len(CHECKPOINT_MAGIC) + struct.calcsize("<IBBIIq")
    if len(raw) < head_size + 8:
        raise FormatError(f"{path}: checkpoint truncated")
    if raw[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: not a checkpoint file")
    version, tag, domain, d, l, extra = struct.unpack_from(
        "<IBBIIq", raw, len(CHECKPOINT_MAGIC)
    )
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    if tag not in _TAG_KINDS:
        raise FormatError(f"{path}: unknown model kind tag {tag}")
    kind = _TAG_KINDS[tag]
    if expect_kind is not None and kind != expect_kind:
        raise FormatError(f"{path}: checkpoint holds a {kind} model, expected {expect_kind}")
    payload = raw[head_size:-8]
    (stored,) = struct.unpack("<Q", raw[-8:])
    if fnv1a_64(payload) != stored:
        raise FormatError(f"{path}: checksum mismatch; file is corrupted")

    buf = memoryview(bytes(payload))
    if kind == KIND_SGH:
        W, buf = _take(buf, d * l, (d, l))
        U, buf = _take(buf, d * l, (d, l))
        beta, buf = _take(buf, l, (l,))
        log_rho, buf = _take(buf, 1, (1,))
        centered = buf[0]
        buf = buf[1:]
        mean, buf = _take(buf, d, (d,))
        params = ModelParams(W, U, beta, float(log_rho[0]), CODE_DOMAINS[domain])
        return params, (mean if centered else None)
    if kind == KIND_ITQ:
        mean, buf = _take(buf, d, (d,))
        W_pca, buf = _take(buf, d * l, (d, l))
        R, buf = _take(buf, l * l, (l, l))
        scale, buf = _take(buf, l, (l,))
        return ItqModel(mean=mean, W_pca=W_pca, R=R, iterations=int(extra), scale=scale), None
    mean, buf = _take(buf, d, (d,))
    W_pca, buf = _take(buf, d * l, (d, l))
    return PcaModel(mean=mean, W_pca=W_pca), None


# ---------------------------------------------------------------------------
# packed-code files
# ---------------------------------------------------------------------------


def write_packed_codes(path, codes: np.ndarray, l: int):
    """Header (magic, N, l) followed by N*ceil(l/64) little-endian words."""
    codes = np.ascontiguousarray(codes, dtype=np.uint64)
    if codes.ndim != 2 or codes.shape[1] != n_words(l):
        raise InputError(f"codes must be (N, {n_words(l)}) for {l} bits")
    with open(path, "wb") as f:
        f.write(CODES_MAGIC)
        f.write(struct.pack("<QI", codes.shape[0], l))
        f.write(codes.astype("<u8").tobytes())


def read_packed_codes(path):
    """Returns (codes, l) as written by write_packed_codes."""
    with open(path, "rb") as f:
        raw = f.read()
    head = len(CODES_MAGIC) + struct.calcsize("<QI")
    if len(raw) < head:
        raise FormatError(f"{path}: code file truncated")
    if raw[: len(CODES_MAGIC)] != CODES_MAGIC:
        raise FormatError(f"{path}: not a packed-code file")
    count, l = struct.unpack_from("<QI", raw, len(CODES_MAGIC))
    expected = head + count * n_words(l) * 8
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(raw)}")
    words = np.frombuffer(raw, dtype="<u8", offset=head).reshape(count, n_words(l))
    return words.astype(np.uint64), l
