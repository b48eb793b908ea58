"""Exception types shared across the package."""


class MeshTextError(Exception):
    """Base class for all package errors."""


class DegenerateGeometryError(MeshTextError, ValueError):
    """Raised when a triangle or quad has effectively zero area."""


class EmptySceneError(MeshTextError, ValueError):
    """Raised when an operation requires at least one triangle."""


class SceneLoadError(MeshTextError, RuntimeError):
    """Raised when a scene file or one of its resources cannot be loaded."""


class ValidationError(MeshTextError, ValueError):
    """Raised when loaded data violates a documented invariant."""


class ConfigError(MeshTextError, ValueError):
    """Raised for unusable pipeline configuration (missing corpus, bad paths)."""
