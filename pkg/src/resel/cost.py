"""Visual-token counting, prefill FLOPs estimates, and savings accounting.

FLOPs are estimated with the standard dense-prefill rule of thumb,
2 * parameters * tokens. The absolute numbers are rough; the relative
deltas reported here are what matters, and the parameter count cancels
in every ratio when text tokens are negligible.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

from .errors import ConfigError, EmptyEvaluation, NonpositiveBaseline
from .imageops import ImageDims

COST_KINDS = ("patch_grid", "tiled", "fixed")


@dataclass(frozen=True)
class CostScheme:
    """How a target VLM turns image dimensions into visual tokens."""

    kind: str
    patch_size: int = 0        # patch_grid
    merge_factor: int = 1      # patch_grid: spatial merge of patches per token
    tile_size: int = 0         # tiled
    tokens_per_tile: int = 0   # tiled
    base_tokens: int = 0       # tiled: thumbnail / global-view tokens
    fixed_tokens: int = 0      # fixed

    def __post_init__(self):
        if self.kind not in COST_KINDS:
            raise ConfigError(f"cost scheme kind must be one of {COST_KINDS}, got {self.kind!r}")
        if self.kind == "patch_grid" and (self.patch_size <= 0 or self.merge_factor <= 0):
            raise ConfigError("patch_grid needs positive patch_size and merge_factor")
        if self.kind == "tiled":
            if self.tile_size <= 0 or self.tokens_per_tile <= 0:
                raise ConfigError("tiled needs positive tile_size and tokens_per_tile")
            if self.base_tokens < 0:
                raise ConfigError("base_tokens must be nonnegative")
        if self.kind == "fixed" and self.fixed_tokens <= 0:
            raise ConfigError("fixed needs positive fixed_tokens")

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"kind": self.kind}
        if self.kind == "patch_grid":
            d.update(patch_size=self.patch_size, merge_factor=self.merge_factor)
        elif self.kind == "tiled":
            d.update(
                tile_size=self.tile_size,
                tokens_per_tile=self.tokens_per_tile,
                base_tokens=self.base_tokens,
            )
        else:
            d.update(fixed_tokens=self.fixed_tokens)
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "CostScheme":
        return cls(
            kind=d["kind"],
            patch_size=int(d.get("patch_size", 0)),
            merge_factor=int(d.get("merge_factor", 1)),
            tile_size=int(d.get("tile_size", 0)),
            tokens_per_tile=int(d.get("tokens_per_tile", 0)),
            base_tokens=int(d.get("base_tokens", 0)),
            fixed_tokens=int(d.get("fixed_tokens", 0)),
        )


@dataclass(frozen=True)
class ModelProfile:
    """Per-target-VLM accounting profile (token scheme + parameter count)."""

    name: str
    parameter_count: int
    scheme: CostScheme
    supported_sizes: tuple[int, ...] = ()
    price_per_1k_tokens: float | None = None
    notes: str = ""

    def __post_init__(self):
        if self.parameter_count <= 0:
            raise ConfigError("parameter_count must be positive")

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "name": self.name,
            "parameter_count": self.parameter_count,
            "scheme": self.scheme.to_dict(),
            "supported_sizes": list(self.supported_sizes),
        }
        if self.price_per_1k_tokens is not None:
            d["price_per_1k_tokens"] = self.price_per_1k_tokens
        if self.notes:
            d["notes"] = self.notes
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ModelProfile":
        return cls(
            name=str(d["name"]),
            parameter_count=int(d["parameter_count"]),
            scheme=CostScheme.from_dict(d["scheme"]),
            supported_sizes=tuple(int(s) for s in d.get("supported_sizes", ())),
            price_per_1k_tokens=d.get("price_per_1k_tokens"),
            notes=str(d.get("notes", "")),
        )


def load_profile(name_or_path: str) -> ModelProfile:
    """Resolve a built-in profile name or a JSON profile file path."""
    builtin = resources.files("resel").joinpath(f"profiles/{name_or_path}.json")
    if builtin.is_file():
        return ModelProfile.from_dict(json.loads(builtin.read_text(encoding="utf-8")))
    path = Path(name_or_path)
    if path.is_file():
        return ModelProfile.from_dict(json.loads(path.read_text(encoding="utf-8")))
    available = builtin_profile_names()
    raise ConfigError(
        f"no profile named {name_or_path!r}; built-ins: {available}, or pass a JSON file path"
    )


def builtin_profile_names() -> list[str]:
    root = resources.files("resel").joinpath("profiles")
    return sorted(p.name[: -len(".json")] for p in root.iterdir() if p.name.endswith(".json"))


def visual_tokens(scheme: CostScheme, dims: ImageDims) -> int:
    """Visual tokens the target model forms for an image of these dimensions."""
    if scheme.kind == "patch_grid":
        cell = scheme.patch_size * scheme.merge_factor
        return math.ceil(dims.width / cell) * math.ceil(dims.height / cell)
    if scheme.kind == "tiled":
        tiles = math.ceil(dims.width / scheme.tile_size) * math.ceil(dims.height / scheme.tile_size)
        return scheme.base_tokens + tiles * scheme.tokens_per_tile
    return scheme.fixed_tokens


def prefill_flops(visual_tokens: int, text_tokens: int, params: int) -> float:
    """Dense prefill estimate: 2 * parameters * total tokens."""
    if visual_tokens < 0 or text_tokens < 0 or params < 0:
        raise ValueError("token and parameter counts must be nonnegative")
    return 2.0 * params * (visual_tokens + text_tokens)


def relative_savings(baseline: float, adaptive: float) -> float:
    """Signed percentage delta; negative means the adaptive run is cheaper."""
    if baseline <= 0:
        raise NonpositiveBaseline(f"baseline must be positive, got {baseline}")
    return 100.0 * (adaptive - baseline) / baseline


def estimate_text_tokens(text: str) -> int:
    """Coarse fallback when the VLM reports no usage: ~4 characters/token."""
    return math.ceil(len(text) / 4)


# ------------------------------------------------------------------ reporting


@dataclass(frozen=True)
class EvalRecord:
    """One evaluated sample, as costed by run_report."""

    dims_used: ImageDims
    dims_native: ImageDims
    text_tokens: int
    utility: float
    sample_id: str = ""
    tag: str = ""


@dataclass
class CostReport:
    profile_name: str
    parameter_count: int
    samples: int
    mean_utility: float
    mean_tokens: float
    mean_flops: float
    total_flops: float
    total_flops_native: float
    savings_pct: float
    mean_utility_by_tag: dict[str, float]
    macro_utility: float
    rows: list[dict[str, Any]] = field(default_factory=list)
    cost_usd: float | None = None
    cost_usd_native: float | None = None

    def to_dict(self) -> dict[str, Any]:
        d = {
            "profile": self.profile_name,
            "parameter_count": self.parameter_count,
            "flops_rule": "2 * parameters * (visual + text tokens), prefill only",
            "samples": self.samples,
            "mean_utility": self.mean_utility,
            "macro_utility": self.macro_utility,
            "mean_utility_by_tag": self.mean_utility_by_tag,
            "mean_tokens": self.mean_tokens,
            "mean_flops": self.mean_flops,
            "total_flops": self.total_flops,
            "total_flops_native": self.total_flops_native,
            "savings_pct": self.savings_pct,
            "rows": self.rows,
        }
        if self.cost_usd is not None:
            d["cost_usd"] = self.cost_usd
            d["cost_usd_native"] = self.cost_usd_native
        return d


def run_report(records: Sequence[EvalRecord], profile: ModelProfile) -> CostReport:
    """Aggregate an evaluation run, pricing the native dims as the baseline."""
    if not records:
        raise EmptyEvaluation("no evaluation records to report on")
    rows = []
    total_tokens = 0
    total_flops = 0.0
    total_flops_native = 0.0
    utility_sum = 0.0
    by_tag: dict[str, list[float]] = {}
    for rec in records:
        tokens = visual_tokens(profile.scheme, rec.dims_used)
        tokens_native = visual_tokens(profile.scheme, rec.dims_native)
        flops = prefill_flops(tokens, rec.text_tokens, profile.parameter_count)
        flops_native = prefill_flops(tokens_native, rec.text_tokens, profile.parameter_count)
        total_tokens += tokens
        total_flops += flops
        total_flops_native += flops_native
        utility_sum += rec.utility
        by_tag.setdefault(rec.tag or "default", []).append(rec.utility)
        rows.append(
            {
                "id": rec.sample_id,
                "tag": rec.tag or "default",
                "dims_used": rec.dims_used.as_tuple(),
                "dims_native": rec.dims_native.as_tuple(),
                "visual_tokens": tokens,
                "visual_tokens_native": tokens_native,
                "text_tokens": rec.text_tokens,
                "flops": flops,
                "flops_native": flops_native,
                "utility": rec.utility,
            }
        )
    n = len(records)
    tag_means = {tag: float(sum(v) / len(v)) for tag, v in sorted(by_tag.items())}
    report = CostReport(
        profile_name=profile.name,
        parameter_count=profile.parameter_count,
        samples=n,
        mean_utility=utility_sum / n,
        mean_tokens=total_tokens / n,
        mean_flops=total_flops / n,
        total_flops=total_flops,
        total_flops_native=total_flops_native,
        savings_pct=relative_savings(total_flops_native, total_flops),
        mean_utility_by_tag=tag_means,
        macro_utility=float(sum(tag_means.values()) / len(tag_means)),
        rows=rows,
    )
    if profile.price_per_1k_tokens is not None:
        price = profile.price_per_1k_tokens / 1000.0
        text_total = sum(r["text_tokens"] for r in rows)
        native_tokens_total = sum(r["visual_tokens_native"] for r in rows)
        report.cost_usd = (total_tokens + text_total) * price
        report.cost_usd_native = (native_tokens_total + text_total) * price
    return report


def render_table(report: CostReport, *, max_rows: int = 20) -> str:
    """Aligned text rendering of a cost report."""
    lines = [
        f"profile: {report.profile_name}  ({report.parameter_count / 1e9:.2f}B params, "
        f"FLOPs = 2 * params * tokens, prefill only)",
        f"samples: {report.samples}   mean utility: {report.mean_utility:.4f}   "
        f"macro utility: {report.macro_utility:.4f}",
        f"mean visual tokens: {report.mean_tokens:.1f}   mean prefill FLOPs: {report.mean_flops:.3e}",
        f"savings vs native: {report.savings_pct:+.1f}%",
    ]
    if report.cost_usd is not None:
        lines.append(
            f"estimated cost: ${report.cost_usd:.4f} vs ${report.cost_usd_native:.4f} native"
        )
    for tag, mean in report.mean_utility_by_tag.items():
        lines.append(f"  utility[{tag}]: {mean:.4f}")
    header = f"{'id':<16} {'dims':>12} {'tokens':>8} {'flops':>12} {'utility':>8}"
    lines += ["", header, "-" * len(header)]
    for row in report.rows[:max_rows]:
        dims = "x".join(str(v) for v in row["dims_used"])
        lines.append(
            f"{row['id'][:16]:<16} {dims:>12} {row['visual_tokens']:>8} "
            f"{row['flops']:>12.3e} {row['utility']:>8.3f}"
        )
    if len(report.rows) > max_rows:
        lines.append(f"... {len(report.rows) - max_rows} more rows")
    return "\n".join(lines)


def render_scatter_svg(report: CostReport, *, width: int = 640, height: int = 420) -> str:
    """Utility-vs-FLOPs scatter as a standalone SVG document."""
    pad = 50
    xs = [row["flops"] for row in report.rows]
    ys = [row["utility"] for row in report.rows]
    x_min, x_max = min(xs), max(xs)
    if x_max == x_min:
        x_max = x_min + 1.0
    def sx(v):
        return pad + (v - x_min) / (x_max - x_min) * (width - 2 * pad)
    def sy(v):
        return height - pad - v * (height - 2 * pad)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{width / 2:.0f}" y="{height - 12}" text-anchor="middle" font-size="12">'
        "prefill FLOPs</text>",
        f'<text x="14" y="{height / 2:.0f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {height / 2:.0f})">utility</text>',
    ]
    for x, y in zip(xs, ys):
        parts.append(f'<circle cx="{sx(x):.1f}" cy="{sy(y):.1f}" r="3" fill="steelblue" fill-opacity="0.6"/>')
    parts.append(
        f'<text x="{pad}" y="{pad - 16}" font-size="12">{report.profile_name}: '
        f"savings {report.savings_pct:+.1f}%, mean utility {report.mean_utility:.3f}</text>"
    )
    parts.append("</svg>")
    return "\n".join(parts)
