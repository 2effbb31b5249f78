"""
Exceptions raised by the emomt pipeline
"""


class EmomtError(Exception):
    """Base class for all pipeline errors"""


class RecordError(EmomtError, ValueError):
    """A single JSONL record could not be parsed or is malformed"""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        location = ""
        if path is not None and line is not None:
            location = f"{path}:{line}: "
        elif line is not None:
            location = f"line {line}: "
        super().__init__(f"{location}{message}")


class ValidationError(EmomtError, ValueError):
    """A value or collection violates one of its invariants"""


class CoverageError(EmomtError, KeyError):
    """Some utterance ids have no emotion scores"""

    def __init__(self, missing_ids, context="annotations"):
        self.missing_ids = list(missing_ids)
        shown = ", ".join(self.missing_ids[:20])
        more = f" (+{len(self.missing_ids) - 20} more)" if len(self.missing_ids) > 20 else ""
        super().__init__(f"{context} missing {len(self.missing_ids)} id(s): {shown}{more}")

    def __str__(self):
        # KeyError would otherwise repr() the message
        return self.args[0]


class UsageError(EmomtError, ValueError):
    """The caller combined arguments that cannot work together"""


class TransportError(EmomtError, ConnectionError):
    """A remote endpoint was unreachable or answered with an error"""


class BackendError(EmomtError, RuntimeError):
    """A training or generation backend failed"""

    def __init__(self, message, returncode=None, stderr=None):
        self.returncode = returncode
        self.stderr = stderr
        details = message
        if returncode is not None:
            details += f" (exit code {returncode})"
        if stderr:
            details += f"\n--- backend stderr ---\n{stderr}"
        super().__init__(details)


class LeakageError(EmomtError, AssertionError):
    """Emotion vocabulary found where none is allowed"""


class IncompleteReportError(EmomtError, ValueError):
    """Operation needs every report row to be populated"""
