"""String-similarity metrics used to score VLM answers against ground truths.

The similarity underlying the answer-quality scores is normalized edit
distance with the usual document-VQA conventions: answers are compared
case-insensitively after whitespace cleanup, per-answer similarity below
0.5 counts as zero, and the score against multiple admissible ground
truths is the best one.
"""

from __future__ import annotations

from typing import Callable, Sequence

from .errors import EmptyGroundTruth

NormalizeFn = Callable[[str], str]


def normalize_answer(text: str) -> str:
    """Trim, collapse internal whitespace runs, and case-fold."""
    return " ".join(text.casefold().split())


def levenshtein(a: str, b: str) -> int:
    """Edit distance over Unicode code points (insert/delete/substitute)."""
    if a == b:
        return 0
    # keep the DP row as short as possible
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            current.append(
                min(
                    previous[j] + 1,          # delete from a
                    current[j - 1] + 1,       # insert into a
                    previous[j - 1] + (ca != cb),
                )
            )
        previous = current
    return previous[-1]


def nls(
    prediction: str,
    ground_truth: str,
    *,
    threshold: float = 0.5,
    normalize: NormalizeFn = normalize_answer,
) -> float:
    """Normalized Levenshtein similarity of one prediction/answer pair.

    Returns ``1 - distance / max(len)`` over the normalized strings,
    zeroed when it falls below ``threshold``. Two empty strings score 1.
    """
    p = normalize(prediction)
    g = normalize(ground_truth)
    longest = max(len(p), len(g))
    if longest == 0:
        return 1.0
    similarity = 1.0 - levenshtein(p, g) / longest
    return similarity if similarity >= threshold else 0.0


def anls(
    prediction: str,
    ground_truths: Sequence[str],
    *,
    threshold: float = 0.5,
    normalize: NormalizeFn = normalize_answer,
) -> float:
    """Best thresholded similarity over all admissible ground truths."""
    if not ground_truths:
        raise EmptyGroundTruth("anls needs at least one ground truth")
    return max(
        nls(prediction, g, threshold=threshold, normalize=normalize)
        for g in ground_truths
    )


def exact_match(
    prediction: str,
    ground_truths: Sequence[str],
    *,
    normalize: NormalizeFn = normalize_answer,
) -> float:
    """1.0 if the normalized prediction equals any normalized ground truth."""
    if not ground_truths:
        raise EmptyGroundTruth("exact_match needs at least one ground truth")
    p = normalize(prediction)
    return 1.0 if any(p == normalize(g) for g in ground_truths) else 0.0


METRICS: dict[str, Callable[[str, Sequence[str]], float]] = {
    "anls": anls,
    "exact_match": exact_match,
}


def resolve_metric(tag: str) -> Callable[[str, Sequence[str]], float]:
    """Look up a utility metric by its dataset-level tag."""
    try:
        return METRICS[tag]
    except KeyError:
        raise KeyError(f"unknown metric tag {tag!r}; expected one of {sorted(METRICS)}") from None
