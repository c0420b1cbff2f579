"""Binary I/O: minimal NIfTI-1 reader/writer plus the internal
feature-bank and slice-corpus containers.

NIfTI-1 support is deliberately narrow: uncompressed single-file ".nii"
with a 348-byte header, 3-D volumes only, datatypes uint8/int16/int32/
float32/float64 (all cast to float32), either endianness. Voxel order on
disk is Fortran (x fastest), mirroring the published header layout. The
affine is ignored apart from pixdim; slicing downstream treats the third
axis as axial.

Internal containers share one framing: an 8-byte little-endian header
length, a UTF-8 JSON header, then raw little-endian float32 payload.
Byte-level tables for everything here live in docs/formats.md.
"""

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import MagicError, NumericError, ShapeError, TruncationError, UnsupportedType

HEADER_SIZE = 348
VOX_OFFSET = 352.0
MAGIC_SINGLE = b"n+1\x00"
MAGIC_PAIR = b"ni1\x00"

# NIfTI-1 datatype code -> (numpy char, bitpix)
DATATYPES = {
    2: ("u1", 8),     # uint8
    4: ("i2", 16),    # int16
    8: ("i4", 32),    # int32
    16: ("f4", 32),   # float32
    64: ("f8", 64),   # float64
}


@dataclass
class NiftiHeader:
    sizeof_hdr: int
    dim: tuple
    datatype: int
    bitpix: int
    pixdim: tuple
    vox_offset: float
    scl_slope: float
    scl_inter: float
    magic: bytes
    byteorder: str  # "<" or ">"


@dataclass
class Volume:
    data: np.ndarray          # (X, Y, Z) float32
    spacing: tuple = (1.0, 1.0, 1.0)
    source_id: str = ""

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 3:
            raise ShapeError("Volume: need 3 dims", self.data.shape)
        if not np.all(np.isfinite(self.data)):
            raise NumericError("Volume: non-finite voxels")


def _u32(blob, offset, byteorder):
    return struct.unpack_from(byteorder + "i", blob, offset)[0]


def parse_nifti(blob, source_id=""):
    """Parse single-file NIfTI-1 bytes into (NiftiHeader, Volume)."""
    if len(blob) < HEADER_SIZE:
        raise TruncationError(
            f"nifti: file ends at byte {len(blob)}, header needs {HEADER_SIZE}")
    if _u32(blob, 0, "<") == HEADER_SIZE:
        bo = "<"
    elif _u32(blob, 0, ">") == HEADER_SIZE:
        bo = ">"
    else:
        raise MagicError("nifti: sizeof_hdr at byte 0 is not 348 in either endianness")
    magic = bytes(blob[344:348])
    if magic == MAGIC_PAIR:
        raise MagicError("nifti: two-file form ('ni1') at byte 344 is unsupported")
    if magic != MAGIC_SINGLE:
        raise MagicError(f"nifti: bad magic {magic!r} at byte 344")
    dim = struct.unpack_from(bo + "8h", blob, 40)
    datatype, bitpix = struct.unpack_from(bo + "2h", blob, 70)
    pixdim = struct.unpack_from(bo + "8f", blob, 76)
    vox_offset, scl_slope, scl_inter = struct.unpack_from(bo + "3f", blob, 108)
    header = NiftiHeader(HEADER_SIZE, dim, datatype, bitpix, pixdim,
                         vox_offset, scl_slope, scl_inter, magic, bo)

    if dim[0] != 3:
        raise UnsupportedType(f"nifti: dim[0]={dim[0]} at byte 40; only 3-D accepted")
    if datatype not in DATATYPES:
        raise UnsupportedType(f"nifti: datatype code {datatype} at byte 70")
    np_char, want_bitpix = DATATYPES[datatype]
    if bitpix != want_bitpix:
        raise UnsupportedType(
            f"nifti: bitpix {bitpix} at byte 72 inconsistent with datatype {datatype}")
    if vox_offset < HEADER_SIZE:
        raise UnsupportedType(f"nifti: vox_offset {vox_offset} at byte 108 below 348")

    shape = tuple(int(d) for d in dim[1:4])
    if any(d < 1 for d in shape):
        raise UnsupportedType(f"nifti: non-positive dim {shape} at byte 40")
    itemsize = want_bitpix // 8
    count = shape[0] * shape[1] * shape[2]
    start = int(vox_offset)
    end = start + count * itemsize
    if len(blob) < end:
        raise TruncationError(
            f"nifti: file ends at byte {len(blob)}, payload needs {end}")
    raw = np.frombuffer(blob, dtype=np.dtype(bo + np_char), count=count, offset=start)
    data = raw.reshape(shape, order="F").astype(np.float32)
    # slope 0 means "no scaling"; the (1, 0) pair is skipped as an arithmetic no-op
    if scl_slope != 0.0 and not (scl_slope == 1.0 and scl_inter == 0.0):
        data = data * np.float32(scl_slope) + np.float32(scl_inter)
    spacing = tuple(float(abs(p)) for p in pixdim[1:4])
    return header, Volume(data=data, spacing=spacing, source_id=source_id)


def write_nifti(volume):
    """Serialize a Volume to single-file NIfTI-1 bytes (little-endian float32)."""
    data = np.asarray(volume.data, dtype=np.float32)
    if not np.all(np.isfinite(data)):
        raise NumericError("write_nifti: non-finite voxels")
    x, y, z = data.shape
    header = bytearray(HEADER_SIZE)
    struct.pack_into("<i", header, 0, HEADER_SIZE)
    struct.pack_into("<b", header, 38, ord("r"))  # regular
    struct.pack_into("<8h", header, 40, 3, x, y, z, 1, 1, 1, 1)
    struct.pack_into("<2h", header, 70, 16, 32)   # float32
    sx, sy, sz = (tuple(volume.spacing) + (1.0, 1.0, 1.0))[:3]
    struct.pack_into("<8f", header, 76, 1.0, sx, sy, sz, 0.0, 0.0, 0.0, 0.0)
    struct.pack_into("<3f", header, 108, VOX_OFFSET, 1.0, 0.0)
    header[344:348] = MAGIC_SINGLE
    pad = b"\x00" * (int(VOX_OFFSET) - HEADER_SIZE)
    payload = data.astype("<f4", copy=False).tobytes(order="F")
    return bytes(header) + pad + payload


def read_nifti_file(path):
    with open(path, "rb") as f:
        blob = f.read()
    import os
    return parse_nifti(blob, source_id=os.path.splitext(os.path.basename(path))[0])


def write_nifti_file(path, volume):
    import os
    blob = write_nifti(volume)
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as f:
        f.write(blob)
    os.replace(tmp, path)


# ------------------------------------------------------------- feature banks

@dataclass
class FeatureBank:
    """Subject-level embeddings with aligned labels.

    label_kind: "class" (int), "continuous" (float), "survival" (columns
    [time_days, event]), or "none".
    """

    features: np.ndarray
    subject_ids: list
    label_kind: str = "none"
    labels: np.ndarray | None = None
    modality: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float32)
        if self.features.ndim != 2:
            raise ShapeError("FeatureBank: features must be 2-D", self.features.shape)
        if not np.all(np.isfinite(self.features)):
            raise NumericError("FeatureBank: non-finite features")
        if len(self.subject_ids) != self.features.shape[0]:
            raise ShapeError("FeatureBank: ids/features mismatch",
                             (len(self.subject_ids),), self.features.shape)
        if self.label_kind != "none":
            self.labels = np.asarray(self.labels)
            if self.labels.shape[0] != self.features.shape[0]:
                raise ShapeError("FeatureBank: labels/features mismatch",
                                 self.labels.shape, self.features.shape)

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]


def _framed(header_dict, payload):
    header = json.dumps(header_dict, sort_keys=True).encode("utf-8")
    return struct.pack("<Q", len(header)) + header + payload


def _unframe(blob, what):
    if len(blob) < 8:
        raise TruncationError(f"{what}: missing length prefix at byte 0")
    (hlen,) = struct.unpack("<Q", blob[:8])
    if len(blob) < 8 + hlen:
        raise TruncationError(f"{what}: header truncated at byte {len(blob)}")
    header = json.loads(blob[8:8 + hlen].decode("utf-8"))
    return header, blob[8 + hlen:]


def save_feature_bank(bank, meta=None):
    """FeatureBank -> bytes (JSON header + raw float32 matrix)."""
    labels = None
    if bank.label_kind != "none":
        labels = np.asarray(bank.labels).tolist()
    header = {
        "version": 1,
        "kind": "feature_bank",
        "n": bank.n,
        "dim": bank.dim,
        "dtype": "float32",
        "subject_ids": list(bank.subject_ids),
        "label_kind": bank.label_kind,
        "labels": labels,
        "modality": bank.modality,
        "meta": {**bank.meta, **(meta or {})},
    }
    payload = bank.features.astype("<f4", copy=False).tobytes()
    return _framed(header, payload)


def load_feature_bank(blob):
    header, payload = _unframe(blob, "feature_bank")
    n, d = header["n"], header["dim"]
    need = n * d * 4
    if len(payload) != need:
        raise ShapeError("feature_bank: payload bytes", (len(payload),), (need,))
    feats = np.frombuffer(payload, dtype="<f4").reshape(n, d).astype(np.float32)
    labels = header["labels"]
    if labels is not None:
        labels = np.asarray(labels)
    bank = FeatureBank(
        features=feats, subject_ids=list(header["subject_ids"]),
        label_kind=header["label_kind"], labels=labels,
        modality=header.get("modality", ""), meta=header.get("meta", {}))
    return bank


def save_feature_bank_file(path, bank, meta=None):
    import os
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as f:
        f.write(save_feature_bank(bank, meta))
    os.replace(tmp, path)


def load_feature_bank_file(path):
    with open(path, "rb") as f:
        return load_feature_bank(f.read())


# -------------------------------------------------------------- slice corpus

def save_slice_corpus(path, slices, records, meta=None):
    """Write slices (list of 2-D float32 arrays) plus per-slice records."""
    import os
    out_records = []
    payload = bytearray()
    for arr, rec in zip(slices, records):
        arr = np.ascontiguousarray(arr, dtype=np.float32)
        out_records.append({**rec, "h": arr.shape[0], "w": arr.shape[1],
                            "offset": len(payload)})
        payload += arr.astype("<f4", copy=False).tobytes()
    header = {"version": 1, "kind": "slice_corpus", "records": out_records,
              "meta": meta or {}}
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as f:
        f.write(_framed(header, bytes(payload)))
    os.replace(tmp, path)


def load_slice_corpus(path):
    """Returns (list of 2-D arrays, list of record dicts, meta dict)."""
    with open(path, "rb") as f:
        blob = f.read()
    header, payload = _unframe(blob, "slice_corpus")
    slices, records = [], []
    for rec in header["records"]:
        h, w, off = rec["h"], rec["w"], rec["offset"]
        end = off + h * w * 4
        if end > len(payload):
            raise TruncationError(f"slice_corpus: payload ends at byte {len(payload)}, need {end}")
        arr = np.frombuffer(payload[off:end], dtype="<f4").reshape(h, w)
        slices.append(arr.astype(np.float32))
        records.append({k: v for k, v in rec.items() if k != "offset"})
    return slices, records, header.get("meta", {})
