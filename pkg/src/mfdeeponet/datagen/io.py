"""Dataset directories: ``manifest.json`` plus raw little-endian float64 files.

``inputs.bin`` holds ``inputs`` (and ``inputs_lf`` when present),
``outputs.bin`` holds ``outputs`` (and any extra output arrays such as
``truth``), ``grids.bin`` holds ``sensors``, ``queries`` and ``params``.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..multifidelity import FidelityDataset

FORMAT = "mfdeeponet-dataset"
VERSION = 1
_DTYPE = np.dtype("<f8")
_FILES = {"inputs": "inputs.bin", "inputs_lf": "inputs.bin", "outputs": "outputs.bin",
          "sensors": "grids.bin", "queries": "grids.bin", "params": "grids.bin"}


class DatasetFormatError(ValueError):
    pass


def write_dataset(path, ds: FidelityDataset, extra_outputs: dict | None = None, name: str | None = None) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    arrays = {"inputs": ds.inputs, "inputs_lf": ds.inputs_lf, "outputs": ds.outputs,
              "sensors": ds.sensors, "queries": ds.queries, "params": ds.params}
    files = dict(_FILES)
    for key, arr in (extra_outputs or {}).items():
        arrays[key] = arr
        files[key] = "outputs.bin"
    entries, blobs = {}, {}
    for key, arr in arrays.items():
        if arr is None:
            continue
        arr = np.ascontiguousarray(arr, dtype=_DTYPE)
        f = files[key]
        buf = blobs.setdefault(f, bytearray())
        entries[key] = {"file": f, "offset": len(buf), "shape": list(arr.shape)}
        buf += arr.tobytes()
    for f in sorted(set(_FILES.values())):
        (path / f).write_bytes(bytes(blobs.get(f, b"")))
    manifest = {
        "format": FORMAT, "version": VERSION, "name": name or path.name, "fidelity": ds.fidelity,
        "N": ds.n_samples, "M": ds.sensors.shape[0], "P": ds.queries.shape[0], "components": ds.n_out,
        "dim": ds.queries.shape[1], "entries": entries, "meta": ds.meta,
    }
    (path / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def read_manifest(path) -> dict:
    path = Path(path)
    try:
        manifest = json.loads((path / "manifest.json").read_text())
    except FileNotFoundError:
        raise DatasetFormatError(f"{path} has no manifest.json") from None
    if manifest.get("format") != FORMAT:
        raise DatasetFormatError(f"{path}: not a {FORMAT} directory")
    if manifest.get("version") != VERSION:
        raise DatasetFormatError(f"{path}: unsupported dataset version {manifest.get('version')!r}")
    return manifest


def read_dataset(path, with_extras: bool = False):
    """Load a dataset; with ``with_extras`` also return the extra output arrays."""
    path = Path(path)
    manifest = read_manifest(path)
    cache, arrays = {}, {}
    for key, e in manifest["entries"].items():
        if e["file"] not in cache:
            cache[e["file"]] = (path / e["file"]).read_bytes()
        raw = cache[e["file"]]
        count = int(np.prod(e["shape"], dtype=np.int64))
        end = e["offset"] + count * _DTYPE.itemsize
        if end > len(raw):
            raise DatasetFormatError(f"{path}: entry {key!r} runs past the end of {e['file']}")
        arrays[key] = np.frombuffer(raw, dtype=_DTYPE, count=count, offset=e["offset"]).reshape(e["shape"]).copy()
    for key in ("inputs", "outputs", "sensors", "queries"):
        if key not in arrays:
            raise DatasetFormatError(f"{path}: missing entry {key!r}")
    n, m, p = arrays["inputs"].shape[0], arrays["sensors"].shape[0], arrays["queries"].shape[0]
    if (manifest["N"], manifest["M"], manifest["P"]) != (n, m, p):
        raise DatasetFormatError(f"{path}: manifest counts {(manifest['N'], manifest['M'], manifest['P'])} "
                                 f"disagree with stored arrays {(n, m, p)}")
    ds = FidelityDataset(manifest["fidelity"], arrays["sensors"], arrays["inputs"], arrays["queries"],
                         arrays["outputs"], arrays.get("inputs_lf"), arrays.get("params"), manifest.get("meta", {}))
    if ds.n_out != manifest["components"]:
        raise DatasetFormatError(f"{path}: component count mismatch")
    if with_extras:
        extras = {k: v for k, v in arrays.items() if k not in _FILES}
        return ds, extras
    return ds
