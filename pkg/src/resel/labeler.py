"""Multi-resolution rollouts and the sufficiency rule that labels them.

A sample's label is the smallest menu resolution whose utility reaches
the threshold ``tau`` with no later resolution improving on it by more
than the margin ``delta``; if none qualifies the top entry is assigned.

Rollouts query resolutions in increasing order and may stop early, but
only once the final label is already determined: the current utility
must clear ``max(tau, 1 - delta)`` (so no future utility can break its
margin) and every lower resolution must already be disqualified. Under
that guard the early-exit label always equals the full-scan label.
"""

from __future__ import annotations

import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence

from .errors import LengthMismatch, ReselError, VlmError
from .imageops import load_image, resize_payload
from .menu import ResolutionMenu

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SufficiencyLabel:
    resolution: int
    class_index: int

    def to_dict(self) -> dict[str, int]:
        return {"r": self.resolution, "k": self.class_index}

    @classmethod
    def from_dict(cls, d: dict[str, int]) -> "SufficiencyLabel":
        return cls(resolution=int(d["r"]), class_index=int(d["k"]))


@dataclass(frozen=True)
class LabelingConfig:
    tau: float = 0.85
    delta: float = 0.1
    early_exit: bool = True

    def __post_init__(self):
        if not 0.0 < self.tau <= 1.0:
            raise ValueError(f"tau must be in (0, 1], got {self.tau}")
        if not 0.0 <= self.delta < 1.0:
            raise ValueError(f"delta must be in [0, 1), got {self.delta}")

    @property
    def early_exit_bar(self) -> float:
        """Utility at which no later resolution can violate the margin."""
        return max(self.tau, 1.0 - self.delta)


@dataclass
class RolloutStep:
    resolution: int
    response: str
    utility: float

    def to_dict(self) -> dict[str, Any]:
        return {"r": self.resolution, "response": self.response, "utility": self.utility}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RolloutStep":
        return cls(resolution=int(d["r"]), response=str(d["response"]), utility=float(d["utility"]))


@dataclass
class RolloutRecord:
    steps: list[RolloutStep] = field(default_factory=list)

    @property
    def utilities(self) -> list[float]:
        return [s.utility for s in self.steps]

    @property
    def evaluated_upto(self) -> int:
        """Index of the last resolution actually queried."""
        return len(self.steps) - 1

    def to_list(self) -> list[dict[str, Any]]:
        return [s.to_dict() for s in self.steps]

    @classmethod
    def from_list(cls, items: Sequence[dict[str, Any]]) -> "RolloutRecord":
        return cls(steps=[RolloutStep.from_dict(d) for d in items])


def label_from_utilities(
    utilities: Sequence[float], menu: ResolutionMenu, cfg: LabelingConfig
) -> SufficiencyLabel:
    """Apply the sufficiency rule to a complete utility vector."""
    k = menu.k
    utilities = [float(u) for u in utilities]
    if len(utilities) != k:
        raise LengthMismatch(f"expected {k} utilities for this menu, got {len(utilities)}")
    for i, u in enumerate(utilities):
        if u < cfg.tau:
            continue
        later = utilities[i + 1 :]
        if not later or max(later) - u <= cfg.delta:
            return SufficiencyLabel(resolution=menu.entries[i], class_index=i)
    return SufficiencyLabel(resolution=menu.entries[k - 1], class_index=k - 1)


def _lower_index_still_in_play(utilities: Sequence[float], cfg: LabelingConfig) -> bool:
    """True if some earlier resolution could still end up as the label.

    An earlier index j stays in play while u_j >= tau and no utility seen
    after it exceeds u_j + delta. Stopping while such a j exists would be
    unsound: unqueried resolutions decide between j and the current index.
    """
    last = len(utilities) - 1
    for j in range(last):
        if utilities[j] >= cfg.tau and max(utilities[j + 1 :]) - utilities[j] <= cfg.delta:
            return True
    return False


def early_exit_determined(utilities_so_far: Sequence[float], cfg: LabelingConfig, k: int) -> bool:
    """Whether the label is already decided to be the latest queried index.

    Requires the latest utility to clear max(tau, 1 - delta), so no later
    utility can break its margin, and every earlier index to be out of
    play. Only then does stopping agree with the full scan.
    """
    current = len(utilities_so_far) - 1
    if current >= k - 1:
        return False  # final index: the full vector is known anyway
    return (
        utilities_so_far[-1] >= cfg.early_exit_bar
        and not _lower_index_still_in_play(utilities_so_far, cfg)
    )


def replay_rollout(
    utilities: Sequence[float], menu: ResolutionMenu, cfg: LabelingConfig
) -> SufficiencyLabel:
    """Run the sequential early-exit logic off a known utility vector.

    Shares the stopping rule with the live rollout; used to check that
    early exit and the full scan always agree.
    """
    seen: list[float] = []
    for i, u in enumerate(utilities):
        seen.append(float(u))
        if cfg.early_exit and early_exit_determined(seen, cfg, menu.k):
            return SufficiencyLabel(resolution=menu.entries[i], class_index=i)
    return label_from_utilities(seen, menu, cfg)


def rollout_and_label(
    sample_id: str,
    image_bytes: bytes,
    query: str,
    ground_truths: Sequence[str],
    menu: ResolutionMenu,
    cfg: LabelingConfig,
    vlm,
    metric: Callable[[str, Sequence[str]], float],
    *,
    resample_filter: str = "bicubic",
    jpeg_quality: int = 90,
) -> tuple[RolloutRecord, SufficiencyLabel]:
    """Query the VLM at each menu resolution in order and label the sample.

    ``vlm`` is any object exposing ``answer(image_bytes, query, sample_id=...)``
    returning an object with a text ``answer`` attribute.
    """
    decoded = load_image(image_bytes)
    record = RolloutRecord()
    for i, r in enumerate(menu.entries):
        payload, _, _ = resize_payload(
            image_bytes, r, image=decoded, filter=resample_filter, quality=jpeg_quality
        )
        response = vlm.answer(payload, query, sample_id=sample_id)
        utility = metric(response.answer, ground_truths)
        record.steps.append(RolloutStep(resolution=r, response=response.answer, utility=utility))
        if cfg.early_exit and early_exit_determined(record.utilities, cfg, menu.k):
            return record, SufficiencyLabel(resolution=r, class_index=i)
    return record, label_from_utilities(record.utilities, menu, cfg)


@dataclass
class LabelingSummary:
    labeled: int = 0
    failed: int = 0
    skipped: int = 0
    label_counts: dict[int, int] = field(default_factory=dict)
    vlm_calls: int = 0
    utility_sum: float = 0.0

    @property
    def mean_chosen_utility(self) -> float:
        return self.utility_sum / self.labeled if self.labeled else 0.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "labeled": self.labeled,
            "failed": self.failed,
            "skipped": self.skipped,
            "label_counts": {str(r): c for r, c in sorted(self.label_counts.items())},
            "vlm_calls": self.vlm_calls,
            "mean_chosen_utility": self.mean_chosen_utility,
        }


def label_dataset(
    records: Iterable,
    menu: ResolutionMenu,
    cfg: LabelingConfig,
    vlm,
    writer,
    *,
    parallelism: int = 1,
    read_image: Callable[[str], bytes] | None = None,
    metric_resolver: Callable[[str], Callable] | None = None,
) -> LabelingSummary:
    """Run rollouts over a stream of sample records, persisting as we go.

    Records whose ids are already present in ``writer`` are skipped, which
    makes interrupted runs resumable. Failed samples are stored with their
    error rather than silently labeled.
    """
    from .metrics import resolve_metric
    from .store import read_image_ref

    read_image = read_image or read_image_ref
    metric_resolver = metric_resolver or resolve_metric
    summary = LabelingSummary()
    lock = threading.Lock()

    def work(record):
        if record.sample_id in writer.ids:
            with lock:
                summary.skipped += 1
            return
        try:
            image_bytes = read_image(record.image_ref)
            metric = metric_resolver(record.metric)
            rollout, label = rollout_and_label(
                record.sample_id,
                image_bytes,
                record.query,
                record.ground_truths,
                menu,
                cfg,
                vlm,
                metric,
            )
        except VlmError as exc:
            done = record.replace(status="failed", error=str(exc))
            with lock:
                summary.failed += 1
                writer.append(done)
            return
        done = record.replace(status="labeled", rollout=rollout, label=label, error=None)
        chosen_utility = rollout.steps[label.class_index].utility
        with lock:
            summary.labeled += 1
            summary.vlm_calls += len(rollout.steps)
            summary.label_counts[label.resolution] = (
                summary.label_counts.get(label.resolution, 0) + 1
            )
            summary.utility_sum += chosen_utility
            writer.append(done)

    if parallelism <= 1:
        for record in records:
            work(record)
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            futures = [pool.submit(work, record) for record in records]
            for f in futures:
                exc = f.exception()
                if exc is not None:
                    if isinstance(exc, ReselError):
                        raise exc
                    raise RuntimeError("labeling worker failed") from exc
    return summary
