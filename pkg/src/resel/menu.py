"""The shared resolution menu: valid range, discrete entries, deployment sizes.

Resolutions are longest-side pixel counts. The menu is configuration
data so that two-way and three-way classification setups (and anything
an operator invents later) run from the same binary.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping

from .errors import MenuError


@dataclass(frozen=True)
class ResolutionMenu:
    entries: tuple[int, ...]
    range_min: int
    range_max: int
    supported_sizes: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(int(e) for e in self.entries))
        if self.supported_sizes is not None:
            object.__setattr__(
                self, "supported_sizes", tuple(int(s) for s in self.supported_sizes)
            )
        if len(self.entries) < 2:
            raise MenuError("entries must contain at least two resolutions")
        if any(e <= 0 for e in self.entries):
            raise MenuError("entries must be positive")
        if any(a >= b for a, b in zip(self.entries, self.entries[1:])):
            raise MenuError("entries must be strictly increasing")
        if self.range_min <= 0 or self.range_max <= 0:
            raise MenuError("range bounds must be positive")
        if self.range_min > self.entries[0]:
            raise MenuError("range_min must not exceed the smallest entry")
        if self.entries[-1] > self.range_max:
            raise MenuError("range_max must not be below the largest entry")
        if self.supported_sizes is not None:
            if not self.supported_sizes:
                raise MenuError("supported_sizes, when given, must be non-empty")
            if any(s <= 0 for s in self.supported_sizes):
                raise MenuError("supported_sizes must be positive")
            if any(a >= b for a, b in zip(self.supported_sizes, self.supported_sizes[1:])):
                raise MenuError("supported_sizes must be strictly increasing")
            if self.supported_sizes[-1] < self.entries[-1]:
                raise MenuError(
                    "supported_sizes must contain a value at least as large as the top entry"
                )

    @property
    def k(self) -> int:
        """Number of discrete classes."""
        return len(self.entries)

    @property
    def supported(self) -> tuple[int, ...]:
        """Deployment-acceptable sizes; defaults to the entries themselves."""
        return self.supported_sizes if self.supported_sizes is not None else self.entries

    def class_of(self, resolution: int) -> int:
        """Index of a menu entry; raises MenuError for non-entries."""
        try:
            return self.entries.index(resolution)
        except ValueError:
            raise MenuError(f"{resolution} is not a menu entry {list(self.entries)}") from None

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "entries": list(self.entries),
            "range_min": self.range_min,
            "range_max": self.range_max,
        }
        if self.supported_sizes is not None:
            d["supported_sizes"] = list(self.supported_sizes)
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ResolutionMenu":
        try:
            entries = tuple(d["entries"])
        except KeyError:
            raise MenuError("menu config needs an 'entries' list") from None
        supported = d.get("supported_sizes")
        return cls(
            entries=entries,
            range_min=int(d.get("range_min", entries[0])),
            range_max=int(d.get("range_max", entries[-1])),
            supported_sizes=tuple(supported) if supported is not None else None,
        )


def default_menu() -> ResolutionMenu:
    """Three-way menu {384, 768, 1024} over the range [384, 1024]."""
    return ResolutionMenu(entries=(384, 768, 1024), range_min=384, range_max=1024)


def binary_menu() -> ResolutionMenu:
    """Two-way menu {384, 1024} used by the coarse-vs-fine ablation setup."""
    return ResolutionMenu(entries=(384, 1024), range_min=384, range_max=1024)
