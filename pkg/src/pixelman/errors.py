"""Exception types shared across the package."""


class PixelManError(Exception):
    """Base class for all package errors."""


class ConfigurationError(PixelManError):
    """Invalid schedule, kernel, or run configuration."""


class InvalidEditError(PixelManError):
    """The requested edit cannot be performed on the given inputs."""


class BackendUnavailableError(PixelManError):
    """The selected denoiser backend cannot be constructed (e.g. missing weights)."""


class JobFailureError(PixelManError):
    """A sampler job failed mid-run; the message carries a stage tag."""
