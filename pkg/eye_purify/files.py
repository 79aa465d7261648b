"""Atomic output files: write next to the target, rename on success."""

from contextlib import contextmanager
import csv
import logging
import os
import tempfile

from eye_purify import exceptions


logger = logging.getLogger(__name__)


@contextmanager
def atomic_path(path, error=exceptions.ImageIOError):
    """Yield a temporary path in the target's directory, renamed onto path on success.

    Nothing is left behind when the body raises. OS errors surface as
    `error` carrying the target path.
    """
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    root, ext = os.path.splitext(os.path.basename(path))
    try:
        fd, tmp = tempfile.mkstemp(prefix='.{}.'.format(root), suffix=ext, dir=directory)
    except OSError as e:
        raise error("could not write: {}".format(e), path=path)
    os.close(fd)
    try:
        yield tmp
        os.replace(tmp, path)
    except OSError as e:
        _discard(tmp)
        raise error("could not write: {}".format(e), path=path)
    except BaseException:
        _discard(tmp)
        raise


def _discard(tmp):
    if os.path.exists(tmp):
        os.remove(tmp)


def write_csv(path, header, rows):
    """Write a CSV file atomically."""
    with atomic_path(path) as tmp:
        with open(tmp, 'w', newline='') as fp:
            writer = csv.writer(fp)
            writer.writerow(header)
            for row in rows:
                writer.writerow(row)
    logger.debug("wrote %s", path)
