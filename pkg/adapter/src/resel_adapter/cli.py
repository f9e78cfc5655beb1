"""CLI: run the feature-adapter service."""

from __future__ import annotations

import click

from .app import create_app
from .backbones import BackboneSettings


@click.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8601, show_default=True)
@click.option("--fake", is_flag=True, default=False,
              help="serve deterministic hash-derived vectors; no model weights")
@click.option("--dim", default=960, show_default=True, help="vector dimension in --fake mode")
@click.option("--backbone", default="HuggingFaceTB/SmolVLM-500M-Instruct", show_default=True)
@click.option("--layer", default=16, show_default=True,
              help="truncation depth; the served hidden state's layer index")
@click.option("--max-side", default=384, show_default=True,
              help="backbone input cap for the cheap low-resolution pass")
@click.option("--device", default="cpu", show_default=True)
def main(host: str, port: int, fake: bool, dim: int, backbone: str, layer: int,
         max_side: int, device: str):
    """Serve joint image-query feature vectors over HTTP."""
    import uvicorn

    settings = BackboneSettings(
        fake=fake,
        fake_dim=dim,
        model_id=backbone,
        layer=layer,
        max_input_side=max_side,
        device=device,
    )
    uvicorn.run(create_app(settings), host=host, port=port, log_level="info")


if __name__ == "__main__":
    main()
