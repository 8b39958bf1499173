"""Exception hierarchy shared across the package."""


class DomainError(ValueError):
    """An argument lies outside its mathematical domain."""


class FilterFailure(RuntimeError):
    """The particle filter could not continue at time ``t`` (1-based)."""

    def __init__(self, message, t=None):
        self.t = t
        self.message = message
        if t is not None:
            message = f"{message} (t={t})"
        super().__init__(message)


class PropagationError(FilterFailure):
    """A latent-state transition produced a non-finite or clamped value."""


class UpdateDegeneracyError(RuntimeError):
    """Iterated-filtering prediction variance collapsed below the floor."""
