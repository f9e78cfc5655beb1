"""Command-line entry point: simulate, label, train, select, eval, report, serve.

Every command is deterministic under a fixed seed and writes a run
manifest next to its output. Exit codes: 0 success, 1 validation error,
2 runtime/transport error.
"""

from __future__ import annotations

import hashlib
import json
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import click
import numpy as np

from . import __version__
from .cost import (
    EvalRecord,
    estimate_text_tokens,
    load_profile,
    prefill_flops,
    render_scatter_svg,
    render_table,
    run_report,
    visual_tokens,
)
from .errors import BadMix, ConfigError, RuntimeFailure, ValidationFailure
from .imageops import ImageDims, dims_of, load_image, resize_payload, target_dims
from .labeler import LabelingConfig, SufficiencyLabel, label_dataset
from .menu import ResolutionMenu, default_menu
from .metrics import resolve_metric
from .selector import (
    TrainConfig,
    data_checksum,
    expected_resolution,
    load_head,
    round_to_supported,
    save_head,
    select_discrete,
    softmax,
    train_head,
)
from .store import JsonlWriter, SampleRecord, iter_records, read_image_ref
from .vlm import HttpVlmClient, SimulatedSample, SimulatedVlm, SimulatedVlmSpec, VlmEndpoint

logger = logging.getLogger(__name__)


# ------------------------------------------------------------------ manifests


def write_manifest(command: str, output: Path, params: dict, *, seed: int | None = None,
                   inputs: list[str] | None = None, outputs: list[str] | None = None,
                   started: float | None = None) -> None:
    """Reproducibility sidecar written next to each command's output."""
    payload = json.dumps(params, sort_keys=True, default=str)
    manifest = {
        "command": command,
        "config_hash": hashlib.sha256(payload.encode()).hexdigest(),
        "params": json.loads(payload),
        "inputs": inputs or [],
        "outputs": outputs or [str(output)],
        "seed": seed,
        "tool_version": __version__,
        "started": started,
        "finished": time.time(),
    }
    if output.is_dir():
        path = output / "manifest.json"
    else:
        path = output.with_name(output.name + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")


def _load_toml_or_json(path: Path) -> dict:
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".json":
        return json.loads(text)
    if sys.version_info >= (3, 11):
        import tomllib
    else:
        import tomli as tomllib
    return tomllib.loads(text)


def _parse_mix(mix: str, menu: ResolutionMenu) -> dict[int, float]:
    out: dict[int, float] = {}
    try:
        for part in mix.split(","):
            r, share = part.split(":")
            out[int(r.strip())] = float(share.strip())
    except ValueError:
        raise BadMix(f"cannot parse mix {mix!r}; expected like '384:0.7,768:0.2,1024:0.1'") from None
    unknown = set(out) - set(menu.entries)
    if unknown:
        raise BadMix(f"mix mentions non-menu resolutions {sorted(unknown)}")
    total = sum(out.values())
    if abs(total - 1.0) > 1e-9:
        raise BadMix(f"mix shares sum to {total}, expected 1.0")
    if any(v < 0 for v in out.values()):
        raise BadMix("mix shares must be nonnegative")
    return out


def _parse_menu_option(entries: str | None) -> ResolutionMenu:
    if not entries:
        return default_menu()
    values = tuple(int(v.strip()) for v in entries.split(","))
    return ResolutionMenu(entries=values, range_min=values[0], range_max=values[-1])


def _parse_dims(text: str) -> ImageDims:
    try:
        w, h = text.lower().split("x")
        return ImageDims(width=int(w), height=int(h))
    except ValueError:
        raise ConfigError(f"cannot parse dimensions {text!r}; expected like '1024x512'") from None


def _parse_supported(text: str) -> tuple[int, ...]:
    """Parse '384,768,1024' or a dense integer range '384-1024'."""
    try:
        if "-" in text and "," not in text:
            lo, hi = (int(v) for v in text.split("-"))
            return tuple(range(lo, hi + 1))
        return tuple(sorted(int(v) for v in text.split(",")))
    except ValueError:
        raise ConfigError(
            f"cannot parse supported sizes {text!r}; expected '384,768,1024' or '384-1024'"
        ) from None


# ------------------------------------------------------------------------ cli


@click.group()
@click.option("--log-level", default="warning", show_default=True,
              type=click.Choice(["debug", "info", "warning", "error"]))
def cli(log_level: str):
    """Adaptive input-resolution selection toolkit."""
    logging.basicConfig(
        level=getattr(logging, log_level.upper()),
        stream=sys.stderr,
        format='{"ts": "%(asctime)s", "level": "%(levelname)s", "logger": "%(name)s", "msg": "%(message)s"}',
    )


@cli.command()
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
@click.option("--n", default=1000, show_default=True)
@click.option("--mix", default="384:0.7,768:0.2,1024:0.1", show_default=True,
              help="threshold shares per menu resolution")
@click.option("--seed", default=7, show_default=True)
@click.option("--dim", default=64, show_default=True, help="synthetic feature dimension")
@click.option("--menu", "menu_entries", default=None, help="comma-separated menu, e.g. 384,768,1024")
@click.option("--native-size", default="1024x512", show_default=True,
              help="native image dimensions WxH")
@click.option("--cluster-sep", default=10.0, show_default=True,
              help="distance between class feature-cluster means (in sigmas)")
def simulate(out_dir: Path, n: int, mix: str, seed: int, dim: int, menu_entries: str | None,
             native_size: str, cluster_sep: float):
    """Generate a synthetic dataset, simulator spec, and feature vectors."""
    started = time.time()
    if n < 1:
        raise ConfigError("--n must be at least 1")
    menu = _parse_menu_option(menu_entries)
    shares = _parse_mix(mix, menu)
    native = _parse_dims(native_size)
    if native.long_side < menu.entries[-1]:
        raise ConfigError(
            f"native size {native_size} cannot produce {menu.entries[-1]}-px rollouts"
        )
    rng = np.random.default_rng(seed)
    out_dir.mkdir(parents=True, exist_ok=True)
    images_dir = out_dir / "images"
    images_dir.mkdir(exist_ok=True)
    # fresh generation, not an append: clear earlier outputs
    for stale in ("samples.jsonl", "features.jsonl", "vlm_spec.json"):
        (out_dir / stale).unlink(missing_ok=True)

    resolutions = list(shares)
    probs = np.array([shares[r] for r in resolutions])
    thresholds = rng.choice(resolutions, size=n, p=probs)

    # class-conditional Gaussian clusters, one mean per menu entry
    means = np.zeros((menu.k, dim))
    for i in range(menu.k):
        means[i, i] = cluster_sep

    palette = [(int(c[0]), int(c[1]), int(c[2])) for c in rng.integers(30, 225, size=(64, 3))]
    encoded_cache: dict[tuple[int, int, int], bytes] = {}

    spec = SimulatedVlmSpec()
    samples_path = out_dir / "samples.jsonl"
    features_path = out_dir / "features.jsonl"
    with JsonlWriter(samples_path) as samples_writer, open(
        features_path, "w", encoding="utf-8"
    ) as features_fh:
        for i in range(n):
            sid = f"sim-{i:06d}"
            threshold = int(thresholds[i])
            klass = menu.class_of(threshold)
            answer = f"value {rng.integers(10**8):08d}"
            query = f"what is the printed value in field {i}?"
            color = palette[int(rng.integers(len(palette)))]
            image_path = images_dir / f"{sid}.jpg"
            if color not in encoded_cache:
                from PIL import Image

                from .imageops import encode_jpeg

                encoded_cache[color] = encode_jpeg(
                    Image.new("RGB", native.as_tuple(), color)
                )
            image_path.write_bytes(encoded_cache[color])
            features = means[klass] + rng.standard_normal(dim)
            spec.samples[sid] = SimulatedSample(
                sufficient_resolution=threshold, correct_answer=answer
            )
            # relative ref keeps the dataset directory relocatable
            samples_writer.append(
                SampleRecord(
                    sample_id=sid,
                    image_ref=f"images/{sid}.jpg",
                    query=query,
                    ground_truths=[answer],
                    metric="anls",
                    features=features,
                )
            )
            from .store import features_to_b64

            features_fh.write(
                json.dumps({"id": sid, "features": features_to_b64(features)}) + "\n"
            )
    spec_path = out_dir / "vlm_spec.json"
    spec.save(spec_path)
    params = {"n": n, "mix": mix, "seed": seed, "dim": dim, "native_size": native_size,
              "menu": menu.to_dict(), "cluster_sep": cluster_sep}
    write_manifest("simulate", out_dir, params, seed=seed, started=started,
                   outputs=[str(samples_path), str(spec_path), str(features_path)])
    click.echo(json.dumps({"samples": n, "out": str(out_dir)}))


def _labeling_options(config_path: Path | None):
    menu = default_menu()
    labeling = {}
    vlm_cfg = None
    if config_path is not None:
        raw = _load_toml_or_json(config_path)
        if "menu" in raw:
            menu = ResolutionMenu.from_dict(raw["menu"])
        labeling = raw.get("labeling", {})
        vlm_cfg = raw.get("vlm")
    return menu, labeling, vlm_cfg


@cli.command()
@click.option("--input", "input_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--output", "output_path", required=True, type=click.Path(path_type=Path))
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path))
@click.option("--vlm-spec", type=click.Path(exists=True, path_type=Path),
              help="simulated-VLM spec file (instead of a live endpoint)")
@click.option("--tau", type=float, default=None, help="utility threshold (default 0.85)")
@click.option("--delta", type=float, default=None, help="improvement margin (default 0.1)")
@click.option("--parallelism", default=1, show_default=True)
@click.option("--no-early-exit", is_flag=True, default=False)
def label(input_path: Path, output_path: Path, config_path: Path | None, vlm_spec: Path | None,
          tau: float | None, delta: float | None, parallelism: int, no_early_exit: bool):
    """Run multi-resolution sufficiency rollouts over a sample store."""
    started = time.time()
    menu, labeling_raw, vlm_raw = _labeling_options(config_path)
    cfg = LabelingConfig(
        tau=tau if tau is not None else float(labeling_raw.get("tau", 0.85)),
        delta=delta if delta is not None else float(labeling_raw.get("delta", 0.1)),
        early_exit=False if no_early_exit else bool(labeling_raw.get("early_exit", True)),
    )
    if vlm_spec is not None:
        vlm = SimulatedVlm(SimulatedVlmSpec.load(vlm_spec))
    elif vlm_raw is not None:
        vlm = HttpVlmClient(VlmEndpoint.from_dict(vlm_raw))
    else:
        raise ConfigError("label needs --vlm-spec or a [vlm] section in --config")

    base_dir = input_path.parent
    with JsonlWriter(output_path) as writer:
        summary = label_dataset(
            iter_records(input_path), menu, cfg, vlm, writer, parallelism=parallelism,
            read_image=lambda ref: read_image_ref(ref, base_dir=base_dir),
        )
    params = {"input": str(input_path), "output": str(output_path), "tau": cfg.tau,
              "delta": cfg.delta, "early_exit": cfg.early_exit, "menu": menu.to_dict(),
              "parallelism": parallelism, "vlm_spec": str(vlm_spec) if vlm_spec else None}
    write_manifest("label", output_path, params, started=started, inputs=[str(input_path)])
    click.echo(json.dumps(summary.to_dict()))


def _load_training_matrix(data_path: Path, features_path: Path | None):
    from .store import features_from_b64

    side_features = {}
    if features_path is not None:
        with open(features_path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    d = json.loads(line)
                    side_features[d["id"]] = features_from_b64(d["features"])
    xs, ys = [], []
    menu = None
    for record in iter_records(data_path):
        if record.status != "labeled" or record.label is None:
            continue
        vector = record.features if record.features is not None else side_features.get(record.sample_id)
        if vector is None:
            continue
        xs.append(vector)
        ys.append(record.label.class_index)
    if not xs:
        raise ConfigError(f"no labeled records with features in {data_path}")
    return np.asarray(xs, dtype=np.float64), np.asarray(ys, dtype=np.int64)


@cli.command()
@click.option("--data", "data_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--out", "out_path", required=True, type=click.Path(path_type=Path))
@click.option("--features", "features_path", type=click.Path(exists=True, path_type=Path),
              help="side JSONL with {id, features} lines when --data lacks them")
@click.option("--menu", "menu_entries", default=None)
@click.option("--lr", default=1e-3, show_default=True)
@click.option("--batch", default=32, show_default=True)
@click.option("--epochs", default=6, show_default=True)
@click.option("--smoothing", default=0.05, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--val-frac", default=0.1, show_default=True)
@click.option("--hidden", default=0, show_default=True, help="hidden width; 0 = linear head")
@click.option("--optimizer", default="adam", show_default=True,
              type=click.Choice(["adam", "sgd"]))
def train(data_path: Path, out_path: Path, features_path: Path | None, menu_entries: str | None,
          lr: float, batch: int, epochs: int, smoothing: float, seed: int, val_frac: float,
          hidden: int, optimizer: str):
    """Train the selector head on labeled feature vectors."""
    started = time.time()
    menu = _parse_menu_option(menu_entries)
    x, y = _load_training_matrix(data_path, features_path)
    cfg = TrainConfig(
        learning_rate=lr, batch_size=batch, epochs=epochs, label_smoothing=smoothing,
        seed=seed, optimizer=optimizer, hidden_dim=hidden,
    )
    rng = np.random.default_rng(seed)
    order = rng.permutation(x.shape[0])
    n_val = int(round(val_frac * x.shape[0]))
    val_idx, train_idx = order[:n_val], order[n_val:]
    if train_idx.size == 0:
        raise ConfigError("validation split leaves no training data")
    head, report = train_head(
        x[train_idx], y[train_idx], menu, cfg,
        val_features=x[val_idx] if n_val else None,
        val_labels=y[val_idx] if n_val else None,
    )
    save_head(head, out_path, train_config=cfg, data_checksum=data_checksum(x, y))
    params = {"data": str(data_path), "out": str(out_path), **cfg.to_dict(),
              "val_frac": val_frac, "menu": menu.to_dict()}
    write_manifest("train", out_path, params, seed=seed, started=started,
                   inputs=[str(data_path)])
    click.echo(json.dumps(report.to_dict()))


def _parse_feature_vector(text: str) -> np.ndarray:
    if text.startswith("@"):
        content = Path(text[1:]).read_text(encoding="utf-8")
        return np.asarray(json.loads(content), dtype=np.float64)
    return np.asarray([float(v) for v in text.split(",")], dtype=np.float64)


@cli.command()
@click.option("--head", "head_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--features", "features_text", default=None,
              help="comma-separated vector, or @file.json")
@click.option("--image", "image_path", type=click.Path(exists=True, path_type=Path))
@click.option("--query", default=None)
@click.option("--feature-url", default=None, help="feature service base URL for --image/--query")
@click.option("--supported", default=None, help="comma-separated deployment sizes")
def select(head_path: Path, features_text: str | None, image_path: Path | None,
           query: str | None, feature_url: str | None, supported: str | None):
    """Pick a resolution for one feature vector or image-query pair."""
    head = load_head(head_path)
    if features_text is not None:
        vector = _parse_feature_vector(features_text)
    elif image_path is not None and query is not None and feature_url is not None:
        import base64 as b64mod

        import httpx

        image_bytes = Path(image_path).read_bytes()
        payload, _, _ = resize_payload(image_bytes, head.menu.entries[0])
        resp = httpx.post(
            feature_url.rstrip("/") + "/features",
            json={"image_b64": b64mod.b64encode(payload).decode("ascii"), "query": query},
            timeout=60.0,
        )
        resp.raise_for_status()
        vector = np.asarray(resp.json()["vector"], dtype=np.float64)
    else:
        raise ConfigError("select needs --features, or --image with --query and --feature-url")
    sizes = tuple(int(v) for v in supported.split(",")) if supported else head.menu.supported
    p = softmax(head.logits(vector))
    r_tilde = expected_resolution(p, head.menu)
    rounded = round_to_supported(r_tilde, sizes)
    discrete = select_discrete(head, vector)
    click.echo(json.dumps({
        "r_continuous": r_tilde,
        "r_rounded": rounded,
        "r_discrete": discrete.resolution,
        "probabilities": [float(v) for v in p],
    }))


@dataclass
class _EvalRow:
    record: SampleRecord
    r_continuous: float | None
    r_rounded: int
    dims_native: ImageDims
    dims_used: ImageDims
    utility: float
    text_tokens: int


def _eval_one(record: SampleRecord, mode_kind: str, fixed_r: int | None, head, supported,
              vlm, base_dir: Path | None = None, resample_filter: str = "bicubic") -> _EvalRow:
    image_bytes = read_image_ref(record.image_ref, base_dir=base_dir)
    native = dims_of(image_bytes)
    r_continuous = None
    if mode_kind == "passthrough":
        chosen = native.long_side
    elif mode_kind == "fixed":
        chosen = fixed_r
    elif mode_kind == "discrete":
        chosen = select_discrete(head, record.features).resolution
    else:
        p = softmax(head.logits(record.features))
        r_continuous = expected_resolution(p, head.menu)
        chosen = round_to_supported(r_continuous, supported)
    payload, _, dims_used = resize_payload(image_bytes, chosen, filter=resample_filter)
    response = vlm.answer(payload, record.query, sample_id=record.sample_id)
    metric = resolve_metric(record.metric)
    utility = metric(response.answer, record.ground_truths)
    return _EvalRow(
        record=record,
        r_continuous=r_continuous,
        r_rounded=chosen,
        dims_native=native,
        dims_used=dims_used,
        utility=utility,
        text_tokens=estimate_text_tokens(record.query),
    )


@cli.command(name="eval")
@click.option("--data", "data_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--out", "out_path", required=True, type=click.Path(path_type=Path))
@click.option("--head", "head_path", type=click.Path(exists=True, path_type=Path))
@click.option("--vlm-spec", type=click.Path(exists=True, path_type=Path))
@click.option("--endpoint-config", type=click.Path(exists=True, path_type=Path),
              help="TOML/JSON file with a [vlm] section for a live endpoint")
@click.option("--profile", default="patchgrid-2b", show_default=True)
@click.option("--mode", default="continuous", show_default=True)
@click.option("--supported", "supported_text", default=None,
              help="override deployment sizes, e.g. '384,768,1024' or '384-1024'")
@click.option("--images-root", type=click.Path(exists=True, path_type=Path),
              help="base directory for relative image refs (default: the data file's directory)")
@click.option("--parallelism", default=1, show_default=True)
def eval_command(data_path: Path, out_path: Path, head_path: Path | None, vlm_spec: Path | None,
                 endpoint_config: Path | None, profile: str, mode: str,
                 supported_text: str | None, images_root: Path | None, parallelism: int):
    """Replay a labeled dataset through a routing mode and cost the run."""
    from .gateway import parse_mode

    started = time.time()
    mode_kind, fixed_r = parse_mode(mode)
    prof = load_profile(profile)
    head = load_head(head_path) if head_path else None
    if mode_kind in ("continuous", "discrete") and head is None:
        raise ConfigError(f"mode {mode} needs --head")
    if supported_text is not None:
        supported = _parse_supported(supported_text)
    else:
        supported = tuple(prof.supported_sizes) or (head.menu.supported if head else ())
    if mode_kind == "fixed" and supported and fixed_r not in supported:
        raise ConfigError(f"fixed resolution {fixed_r} not in supported sizes {list(supported)}")
    if vlm_spec is not None:
        vlm = SimulatedVlm(SimulatedVlmSpec.load(vlm_spec))
    elif endpoint_config is not None:
        raw = _load_toml_or_json(endpoint_config)
        vlm = HttpVlmClient(VlmEndpoint.from_dict(raw.get("vlm", raw)))
    else:
        raise ConfigError("eval needs --vlm-spec or --endpoint-config")

    records = [
        r for r in iter_records(data_path)
        if r.status != "failed" and (mode_kind in ("passthrough", "fixed") or r.features is not None)
    ]
    if not records:
        raise ConfigError(f"no evaluable records in {data_path}")

    base_dir = images_root if images_root is not None else data_path.parent

    def run(record):
        return _eval_one(record, mode_kind, fixed_r, head, supported, vlm, base_dir=base_dir)

    if parallelism > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            rows = list(pool.map(run, records))
    else:
        rows = [run(r) for r in records]

    by_tag: dict[str, list[float]] = {}
    total_flops = 0.0
    total_native = 0.0
    with open(out_path, "w", encoding="utf-8") as fh:
        for row in rows:
            tokens = visual_tokens(prof.scheme, row.dims_used)
            tokens_native = visual_tokens(prof.scheme, row.dims_native)
            flops = prefill_flops(tokens, row.text_tokens, prof.parameter_count)
            flops_native = prefill_flops(tokens_native, row.text_tokens, prof.parameter_count)
            total_flops += flops
            total_native += flops_native
            by_tag.setdefault(row.record.metric, []).append(row.utility)
            fh.write(json.dumps({
                "id": row.record.sample_id,
                "tag": row.record.metric,
                "mode": mode,
                "r_continuous": row.r_continuous,
                "r_rounded": row.r_rounded,
                "dims_used": row.dims_used.as_tuple(),
                "dims_native": row.dims_native.as_tuple(),
                "text_tokens": row.text_tokens,
                "visual_tokens": tokens,
                "flops": flops,
                "flops_native": flops_native,
                "utility": row.utility,
            }) + "\n")
    tag_means = {tag: sum(v) / len(v) for tag, v in sorted(by_tag.items())}
    summary = {
        "mode": mode,
        "samples": len(rows),
        "utility_by_tag": tag_means,
        "macro_utility": sum(tag_means.values()) / len(tag_means),
        "total_flops": total_flops,
        "total_flops_native": total_native,
        "savings_pct": 100.0 * (total_flops - total_native) / total_native if total_native else 0.0,
    }
    summary_path = out_path.with_name(out_path.stem + ".summary.json")
    summary_path.write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    params = {"data": str(data_path), "out": str(out_path), "head": str(head_path),
              "profile": profile, "mode": mode, "supported": supported_text}
    write_manifest("eval", out_path, params, started=started, inputs=[str(data_path)],
                   outputs=[str(out_path), str(summary_path)])
    click.echo(json.dumps(summary))


@cli.command()
@click.option("--run", "run_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--profile", default="patchgrid-2b", show_default=True)
@click.option("--svg", "svg_path", type=click.Path(path_type=Path))
@click.option("--json", "json_path", type=click.Path(path_type=Path))
def report(run_path: Path, profile: str, svg_path: Path | None, json_path: Path | None):
    """Aggregate an eval run into a cost/utility report."""
    prof = load_profile(profile)
    records = []
    with open(run_path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            d = json.loads(line)
            records.append(EvalRecord(
                dims_used=ImageDims(*d["dims_used"]),
                dims_native=ImageDims(*d["dims_native"]),
                text_tokens=int(d["text_tokens"]),
                utility=float(d["utility"]),
                sample_id=str(d.get("id", "")),
                tag=str(d.get("tag", "")),
            ))
    result = run_report(records, prof)
    if json_path:
        json_path.write_text(json.dumps(result.to_dict(), indent=2) + "\n", encoding="utf-8")
    if svg_path:
        svg_path.write_text(render_scatter_svg(result), encoding="utf-8")
    click.echo(render_table(result))


@cli.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, path_type=Path))
def serve(config_path: Path):
    """Run the resolution-routing gateway."""
    from .gateway import load_gateway_config
    from .gateway import serve as run_server

    run_server(load_gateway_config(config_path))


def main():
    try:
        cli(standalone_mode=False)
    except click.exceptions.Abort:
        sys.exit(130)
    except click.ClickException as exc:
        exc.show()
        sys.exit(1)
    except ValidationFailure as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    except ValueError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    except RuntimeFailure as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    return 0


if __name__ == "__main__":
    main()
