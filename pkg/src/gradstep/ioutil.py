"""Small file helpers shared by the writers (atomic replace, float formatting)."""

import os
import tempfile


def format_float(v):
    """17 significant digits: round-trips any double exactly."""
    return "%.17g" % v


def atomic_write_text(path, text):
    """Write `text` to `path` via a temp file + rename, so readers never see partial output."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise
