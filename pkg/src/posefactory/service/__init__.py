"""HTTP annotation service and the shared application layer behind it."""

from .core import AnnotationService, ApiError

__all__ = ["AnnotationService", "ApiError"]
