"""
An output directory held under a file lock for the duration of a command.
Every artifact goes through atomic_write, so no file is ever left half
written. Commands interrupted mid-run write the rows finished so far
and exit with status 130.
"""
import logging
import os
import pathlib

import filelock
import pandas as pd
from atomicwrites import atomic_write

from .errors import IoError
from .streamfile import write_canonical

log = logging.getLogger(__name__)

LOCK_NAME = ".gclgame.lock"
FLOAT_FORMAT = "%.17g"


class OutputDir:
    def __init__(self, path, *, timeout=1):
        self.path = pathlib.Path(path)
        self._lock = filelock.FileLock(str(self.path / LOCK_NAME))
        self._timeout = timeout
        self.written = []

    def __enter__(self):
        try:
            self.path.mkdir(parents=True, exist_ok=True)
            self._lock.acquire(timeout=self._timeout)
        except filelock.Timeout as e:
            raise IoError("output directory {} is in use by another command".format(self.path)) from e
        except OSError as e:
            raise IoError("cannot create output directory {}: {}".format(self.path, e)) from e
        return self

    def __exit__(self, *exc):
        self._lock.release()

    def __truediv__(self, name):
        return self.path / name

    def _text(self, name, text):
        assert self._lock.is_locked
        target = self.path / name
        try:
            with atomic_write(str(target), overwrite=True) as f:
                f.write(text)
        except OSError as e:
            raise IoError("cannot write {}: {}".format(target, e)) from e

        self.written.append(target)
        log.debug("wrote path=%s bytes=%d", target, len(text))
        return target

    def write_csv(self, name, frame):
        return self._text(name, frame.to_csv(index=False, float_format=FLOAT_FORMAT))

    def write_svg(self, name, svg):
        return self._text(name, svg)

    def write_json(self, name, value):
        assert self._lock.is_locked
        target = self.path / name
        write_canonical(target, value)
        self.written.append(target)
        return target


def read_csv(path):
    try:
        return pd.read_csv(path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise IoError("cannot read {}: {}".format(path, e)) from e


def list_csvs(path, prefix):
    path = pathlib.Path(path)
    if not path.is_dir():
        return []
    return sorted(p for p in path.iterdir() if p.name.startswith(prefix) and p.suffix == ".csv"
                  and os.path.isfile(p))
