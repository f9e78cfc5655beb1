"""Feature-adapter service: joint image-query vectors for resolution selection."""

__version__ = "0.1.0"
