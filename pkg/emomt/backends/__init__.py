"""
Translation backends: the reference toy trainer and the external-command driver
"""
import os

from emomt.errors import UsageError

BACKEND_TYPES = ("toy", "external")


def make_backend(backend_type, work_dir=".", **options):
    """
    Instantiate a backend by type name

    Args:
        backend_type: "toy" or "external"
        work_dir: Directory for checkpoints and exchange files
        options: Backend-specific options

    Returns:
        TranslationBackend
    """
    if backend_type == "toy":
        from emomt.backends.toy import ToyTrainer
        return ToyTrainer(work_dir=work_dir, **options)
    if backend_type == "external":
        from emomt.backends.external import ExternalTrainer
        return ExternalTrainer(work_dir=work_dir, **options)
    raise UsageError(f"unknown backend {backend_type!r}, expected one of {BACKEND_TYPES}")


def backend_for_handle(handle, **options):
    """Backend able to generate from a handle's checkpoint, using default options"""
    work_dir = os.path.dirname(os.path.abspath(handle.checkpoint_ref)) if handle.backend_id == "toy" else "."
    return make_backend(handle.backend_id, work_dir=work_dir, **options)
