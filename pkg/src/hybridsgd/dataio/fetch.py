"""Dataset registry, download cache and checksum verification."""

from __future__ import annotations

import bz2
import gzip
import hashlib
import io
import json
import logging
import os
import time
import urllib.request
from collections.abc import Callable
from importlib import resources
from pathlib import Path

from .dataset import Dataset
from .libsvm import parse_libsvm

log = logging.getLogger(__name__)

CACHE_ENV = "HYBRIDSGD_CACHE"


class FetchError(OSError):
    """Download failed. ``retryable`` is True for network-level failures."""

    def __init__(self, message: str, retryable: bool = True):
        super().__init__(message)
        self.retryable = retryable


class ChecksumError(FetchError):
    def __init__(self, message: str):
        super().__init__(message, retryable=False)


def default_cache_dir() -> Path:
    env = os.environ.get(CACHE_ENV)
    return Path(env) if env else Path.home() / ".cache" / "hybridsgd"


def load_registry(path: str | Path | None = None) -> dict:
    if path is None:
        text = resources.files("hybridsgd").joinpath("data/registry.json").read_text()
    else:
        text = Path(path).read_text()
    return json.loads(text)


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _urlopen(url: str) -> bytes:
    with urllib.request.urlopen(url, timeout=30) as resp:
        return resp.read()


def _decompress(data: bytes) -> bytes:
    if data[:2] == b"\x1f\x8b":
        return gzip.decompress(data)
    if data[:3] == b"BZh":
        return bz2.decompress(data)
    return data


def _parse(data: bytes, name: str, entry: dict) -> Dataset:
    label_map = entry.get("label_map")
    if label_map is not None:
        label_map = {float(k): float(v) for k, v in label_map.items()}
    text = io.StringIO(_decompress(data).decode("ascii"))
    return parse_libsvm(text, n=entry.get("n"), label_map=label_map, name=name)


def _download(url: str, opener: Callable[[str], bytes], retries: int) -> bytes:
    last: Exception | None = None
    for attempt in range(retries + 1):
        try:
            return opener(url)
        except Exception as exc:  # network stacks raise a zoo of types
            last = exc
            if attempt < retries:
                time.sleep(0.5 * 2 ** attempt)
    raise FetchError(f"could not download {url}: {last}", retryable=True) from last


def fetch_dataset(name: str, cache_dir: str | Path | None = None, *,
                  registry: dict | None = None,
                  opener: Callable[[str], bytes] | None = None,
                  retries: int = 2, allow_bundled: bool = True) -> Dataset:
    """Return a registry dataset, downloading into the cache on first use.

    Cache layout is ``<cache_dir>/<name>/<filename>``. If the registry pins a
    sha256 it is enforced; otherwise the digest of the first download is
    recorded next to the file and enforced on later reads. When the download
    fails and the registry names a bundled copy, that copy is used instead.
    """
    registry = load_registry() if registry is None else registry
    if name not in registry:
        raise KeyError(f"unknown dataset {name!r}; known: {sorted(registry)}")
    entry = registry[name]
    cache_dir = Path(cache_dir) if cache_dir is not None else default_cache_dir()
    target = cache_dir / name / entry["filename"]
    sidecar = target.with_name(target.name + ".sha256")

    if target.exists():
        data = target.read_bytes()
        expected = entry.get("sha256") or (sidecar.read_text().strip() if sidecar.exists() else None)
        if expected and _sha256(data) != expected:
            raise ChecksumError(f"cached {target} does not match sha256 {expected}")
        return _parse(data, name, entry)

    try:
        data = _download(entry["url"], opener or _urlopen, retries)
    except FetchError:
        bundled = entry.get("bundled")
        if not (allow_bundled and bundled):
            raise
        log.warning("download of %s failed; using bundled copy %s", name, bundled)
        data = resources.files("hybridsgd").joinpath("data", bundled).read_bytes()
        if entry.get("bundled_sha256") and _sha256(data) != entry["bundled_sha256"]:
            raise ChecksumError(f"bundled copy of {name} is corrupt") from None
        return _parse(data, name, entry)

    digest = _sha256(data)
    if entry.get("sha256") and digest != entry["sha256"]:
        raise ChecksumError(f"{entry['url']} has sha256 {digest}, expected {entry['sha256']}")
    target.parent.mkdir(parents=True, exist_ok=True)
    tmp = target.with_name(target.name + ".part")
    tmp.write_bytes(data)
    tmp.replace(target)
    sidecar.write_text(digest + "\n")
    return _parse(data, name, entry)
