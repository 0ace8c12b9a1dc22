"""Binary containers, provenance sidecars and image export.

All binary formats are little-endian.  Each file ``name.ext`` is accompanied
by ``name.ext.json`` holding a readable mirror of the header plus a
provenance block (input hashes, configuration, tool version).

=========  ===========================================================
SGRM       ``<4sIII3d`` (magic, version, n_alpha, n_s, B, a, s_max),
           then ``n_alpha * n_s`` float64 values, row-major
SIMG       ``<4sIII3d`` (magic, version, n, n, B, a, half_width),
           then ``n * n`` float64 values, row-major
PHDS       ``<4s5I4dq16s`` (magic, version, n_chords, n_k, n_alpha, n_s,
           B, a, s_max, noise, seed, model), then the chord table
           ``(alpha, s)``, the k table and the ``f`` grid as float64
=========  ===========================================================
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from . import __version__
from .errors import FormatError
from .geometry import SliceGeometry
from .radon import Sinogram, SliceImage
from .recon import Volume
from .scatter import FrequencyLadder, PhaselessDataset

VERSION = 1
GRID_HEADER = struct.Struct("<4sIII3d")
PHDS_HEADER = struct.Struct("<4s5I4dq16s")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def provenance(inputs: dict | None = None, config: dict | None = None) -> dict:
    """Provenance block: sha256 of each input file, the config and the version."""
    hashes = {name: sha256_file(p) for name, p in (inputs or {}).items()}
    return {"inputs": hashes, "config": config or {}, "tool": "phaseless", "version": __version__}


def write_sidecar(path, header: dict, prov: dict | None = None, **extra) -> Path:
    doc = {"header": header, "provenance": prov or provenance(), **extra}
    side = sidecar_path(path)
    side.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_jsonable) + "\n")
    return side


def read_sidecar(path) -> dict:
    side = sidecar_path(path)
    try:
        return json.loads(side.read_text())
    except FileNotFoundError as exc:
        raise FormatError(side, "provenance sidecar is missing") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(side, f"sidecar is not valid JSON ({exc})") from exc


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except FileNotFoundError as exc:
        raise FormatError(path, "file not found") from exc


def _unpack(fmt: struct.Struct, buf: bytes, path, magic: bytes, offset: int = 0):
    if len(buf) < offset + fmt.size:
        raise FormatError(path, f"truncated header ({len(buf) - offset} bytes, need {fmt.size})")
    fields = fmt.unpack_from(buf, offset)
    if fields[0] != magic:
        raise FormatError(path, f"bad magic {fields[0]!r}, expected {magic!r}")
    if fields[1] != VERSION:
        raise FormatError(path, f"unsupported version {fields[1]}")
    return fields


def _payload(buf: bytes, offset: int, count: int, path, what: str) -> np.ndarray:
    need = offset + 8 * count
    if len(buf) < need:
        raise FormatError(path, f"truncated {what}: {len(buf)} bytes, need {need}")
    return np.frombuffer(buf, dtype="<f8", count=count, offset=offset).copy()


# sinograms ----------------------------------------------------------------

def _sinogram_bytes(sg: Sinogram) -> bytes:
    n_alpha, n_s = sg.values.shape
    head = GRID_HEADER.pack(b"SGRM", VERSION, n_alpha, n_s, sg.slice.B, sg.slice.a, sg.s_max)
    return head + np.ascontiguousarray(sg.values, dtype="<f8").tobytes()


def save_sinogram(sg: Sinogram, path, prov: dict | None = None) -> Path:
    path = Path(path)
    path.write_bytes(_sinogram_bytes(sg))
    n_alpha, n_s = sg.values.shape
    write_sidecar(path, {"magic": "SGRM", "version": VERSION, "n_alpha": n_alpha, "n_s": n_s,
                         "B": sg.slice.B, "a": sg.slice.a, "s_max": sg.s_max}, prov)
    return path


def load_sinogram(path) -> Sinogram:
    from .radon import angle_grid, offset_grid

    buf = _read_bytes(path)
    _, _, n_alpha, n_s, B, a, s_max = _unpack(GRID_HEADER, buf, path, b"SGRM")
    values = _payload(buf, GRID_HEADER.size, n_alpha * n_s, path, "sinogram values")
    return Sinogram(SliceGeometry(B, a), angle_grid(n_alpha), offset_grid(s_max, n_s),
                    values.reshape(n_alpha, n_s), s_max)


# slice images and volumes -------------------------------------------------

def _image_bytes(img: SliceImage) -> bytes:
    head = GRID_HEADER.pack(b"SIMG", VERSION, img.n, img.n, img.slice.B, img.slice.a, img.slice.B_a)
    return head + np.ascontiguousarray(img.values, dtype="<f8").tobytes()


def _image_from(buf: bytes, offset: int, path):
    _, _, n1, n2, B, a, _ = _unpack(GRID_HEADER, buf, path, b"SIMG", offset)
    if n1 != n2:
        raise FormatError(path, f"image record is not square ({n1} x {n2})")
    start = offset + GRID_HEADER.size
    values = _payload(buf, start, n1 * n2, path, "image values")
    return SliceImage(SliceGeometry(B, a), values.reshape(n1, n2)), start + 8 * n1 * n2


def save_image(img: SliceImage, path, prov: dict | None = None) -> Path:
    path = Path(path)
    path.write_bytes(_image_bytes(img))
    write_sidecar(path, {"magic": "SIMG", "version": VERSION, "n": img.n, "B": img.slice.B,
                         "a": img.slice.a, "half_width": img.slice.B_a}, prov)
    return path


def load_image(path) -> SliceImage:
    buf = _read_bytes(path)
    img, end = _image_from(buf, 0, path)
    if end != len(buf):
        raise FormatError(path, f"{len(buf) - end} trailing bytes after image record")
    return img


def save_volume(vol: Volume, path, prov: dict | None = None) -> Path:
    """Concatenated SIMG records plus a manifest sidecar."""
    path = Path(path)
    path.write_bytes(b"".join(_image_bytes(img) for _, img in vol))
    grids = sorted({img.n for _, img in vol})
    write_sidecar(path, {"magic": "SIMG*", "version": VERSION, "B": vol.B, "heights": list(vol.heights),
                         "n": grids}, prov)
    return path


def load_volume(path) -> Volume:
    buf = _read_bytes(path)
    manifest = read_sidecar(path)["header"]
    slices, offset = [], 0
    while offset < len(buf):
        img, offset = _image_from(buf, offset, path)
        slices.append((img.slice.a, img))
    heights = [a for a, _ in slices]
    if not np.allclose(heights, manifest.get("heights", []), rtol=0, atol=0):
        raise FormatError(path, "slice heights disagree with the manifest")
    return Volume(float(manifest["B"]), tuple(slices))


def write_pgm(values, path) -> dict:
    """8-bit binary PGM with linear min-max scaling; returns the scaling."""
    v = np.asarray(values, dtype=float)
    lo, hi = float(np.min(v)), float(np.max(v))
    span = hi - lo if hi > lo else 1.0
    pixels = np.round(255.0 * (v - lo) / span).astype(np.uint8)
    # row 0 of the array is the lowest y2, PGM rows run top-down
    pixels = pixels[::-1]
    h, w = pixels.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode() + pixels.tobytes())
    return {"min": lo, "max": hi, "scale": "linear"}


def save_pgm(img: SliceImage, path, prov: dict | None = None) -> Path:
    scaling = write_pgm(img.values, path)
    write_sidecar(path, {"format": "pgm", "n": img.n, "a": img.slice.a}, prov, scaling=scaling)
    return Path(path)


# phaseless datasets -------------------------------------------------------

def save_dataset(ds: PhaselessDataset, path, prov: dict | None = None) -> Path:
    path = Path(path)
    n_alpha, n_s, n_k = ds.f_values.shape
    model = ds.model_tag.encode()
    if len(model) > 16:
        raise FormatError(path, f"model tag {ds.model_tag!r} exceeds 16 bytes")
    head = PHDS_HEADER.pack(b"PHDS", VERSION, n_alpha * n_s, n_k, n_alpha, n_s, ds.slice.B, ds.slice.a,
                            ds.s_max, ds.noise_level, -1 if ds.seed is None else int(ds.seed), model)
    body = [np.ascontiguousarray(arr, dtype="<f8").tobytes()
            for arr in (ds.chord_table(), ds.ladder.k_values, ds.f_values)]
    path.write_bytes(head + b"".join(body))
    header = {"magic": "PHDS", "version": VERSION, "n_chords": n_alpha * n_s, "n_k": n_k, "n_alpha": n_alpha,
              "n_s": n_s, "B": ds.slice.B, "a": ds.slice.a, "s_max": ds.s_max, "model": ds.model_tag,
              "noise": ds.noise_level, "seed": ds.seed, "k": ds.ladder.k_values}
    write_sidecar(path, header, prov, meta=ds.meta)
    return path


def load_dataset(path) -> PhaselessDataset:
    buf = _read_bytes(path)
    fields = _unpack(PHDS_HEADER, buf, path, b"PHDS")
    _, _, n_chords, n_k, n_alpha, n_s, B, a, s_max, noise, seed, model = fields
    if n_chords != n_alpha * n_s:
        raise FormatError(path, f"chord count {n_chords} != n_alpha * n_s = {n_alpha * n_s}")
    off = PHDS_HEADER.size
    chords = _payload(buf, off, 2 * n_chords, path, "chord table").reshape(n_alpha, n_s, 2)
    off += 16 * n_chords
    k = _payload(buf, off, n_k, path, "k table")
    off += 8 * n_k
    f = _payload(buf, off, n_chords * n_k, path, "f grid").reshape(n_alpha, n_s, n_k)
    off += 8 * n_chords * n_k
    if off != len(buf):
        raise FormatError(path, f"{len(buf) - off} trailing bytes after dataset")
    try:
        ladder = FrequencyLadder(k)
    except ValueError as exc:
        raise FormatError(path, f"invalid k table: {exc}") from exc
    return PhaselessDataset(SliceGeometry(B, a), chords[:, 0, 0].copy(), chords[0, :, 1].copy(), s_max, ladder, f,
                            model.rstrip(b"\0").decode(), noise, None if seed < 0 else int(seed))
