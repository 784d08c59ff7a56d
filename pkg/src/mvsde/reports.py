"""Atomic output files and run manifests."""

import hashlib
import json
import os
import tempfile
import time

from . import __version__
from .config import canonical_json, config_hash

MANIFEST = "manifest.json"
CONFIG_COPY = "config.json"


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def atomic_write(path, data):
    """Write to a sibling temp file and rename it into place."""
    if isinstance(data, str):
        data = data.encode()
    folder = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class OutputSet:
    """Collects files written for one run and emits the manifest last."""

    def __init__(self, folder, raw_config, seed, command):
        self.folder = folder
        self.raw = raw_config
        self.seed = seed
        self.command = command
        self.files = {}
        self.started = time.time()
        os.makedirs(folder, exist_ok=True)

    def path(self, name):
        return os.path.join(self.folder, name)

    def write(self, name, data):
        atomic_write(self.path(name), data)
        self.files[name] = sha256_file(self.path(name))
        return self.path(name)

    def register(self, name):
        """Record a file produced by another writer (figures)."""
        self.files[name] = sha256_file(self.path(name))

    def finish(self, status, extra=None):
        self.write(CONFIG_COPY, canonical_json(self.raw) + "\n")
        manifest = {
            "command": self.command,
            "config_sha256": config_hash(self.raw),
            "seed": self.seed,
            "version": __version__,
            "files": dict(sorted(self.files.items())),
            "status": status,
            "wall_clock_seconds": round(time.time() - self.started, 3),
        }
        if extra:
            manifest.update(extra)
        atomic_write(self.path(MANIFEST), json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return manifest


def verify_manifest(folder):
    """Recompute the config hash and every file checksum; return the mismatches."""
    with open(os.path.join(folder, MANIFEST)) as fh:
        manifest = json.load(fh)
    with open(os.path.join(folder, CONFIG_COPY)) as fh:
        raw = json.load(fh)
    bad = []
    if config_hash(raw) != manifest["config_sha256"]:
        bad.append(CONFIG_COPY)
    for name, digest in manifest["files"].items():
        p = os.path.join(folder, name)
        if not os.path.exists(p) or sha256_file(p) != digest:
            bad.append(name)
    return bad
