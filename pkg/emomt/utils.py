"""
Utility functions shared by the emomt modules
"""
import json
import os
from contextlib import contextmanager

from slugify import slugify

from emomt.errors import RecordError


def error_log(string, directory="."):
    """
    Append an error message to the errors file of a directory

    Args:
        string: Error message to log
        directory: Directory holding the errors file
    """
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "errors"), "a", encoding="utf-8") as error_file:
        error_file.write(string + "\n")


def read_jsonl(path):
    """
    Iterate over the records of a JSON Lines file

    Blank lines are skipped; line numbers are 1-based.

    Args:
        path: Path to the JSONL file

    Yields:
        tuple: (line_number, record dict)
    """
    with open(path, "r", encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise RecordError(f"invalid JSON: {e.msg}", path=path, line=line_number) from e
            if not isinstance(record, dict):
                raise RecordError("record is not a JSON object", path=path, line=line_number)
            yield line_number, record


@contextmanager
def atomic_write(path):
    """
    Open a file for writing that only replaces the target once fully written

    Args:
        path: Destination path

    Yields:
        file: Text handle to write into
    """
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    tmp_path = f"{path}.tmp"
    handle = open(tmp_path, "w", encoding="utf-8")
    try:
        yield handle
        handle.close()
        os.replace(tmp_path, path)
    finally:
        if not handle.closed:
            handle.close()
        if os.path.exists(tmp_path):
            os.remove(tmp_path)


def write_jsonl(path, rows):
    """
    Write dicts as JSON Lines (UTF-8, no ASCII escaping)

    Args:
        path: Destination path
        rows: Iterable of JSON-serializable dicts

    Returns:
        int: Number of rows written
    """
    count = 0
    with atomic_write(path) as handle:
        for row in rows:
            handle.write(json.dumps(row, ensure_ascii=False) + "\n")
            count += 1
    return count


def write_json(path, data):
    """Write a single JSON document, pretty-printed"""
    with atomic_write(path) as handle:
        json.dump(data, handle, ensure_ascii=False, indent=2, sort_keys=False)
        handle.write("\n")


def read_json(path):
    """Read a single JSON document"""
    with open(path, "r", encoding="utf-8") as handle:
        return json.load(handle)


def run_directory(root, label, seed):
    """
    Build the directory path for one experiment row

    Args:
        root: Root directory for all runs
        label: Row label, e.g. "arousal source-side"
        seed: Training seed of the row

    Returns:
        str: Path of the form <root>/<slug>-seed<seed>
    """
    return os.path.join(root, f"{slugify(label)}-seed{seed}")


def chunked(items, size):
    """Split a sequence into consecutive lists of at most size items"""
    if size < 1:
        raise ValueError("chunk size must be positive")
    return [list(items[start:start + size]) for start in range(0, len(items), size)]
