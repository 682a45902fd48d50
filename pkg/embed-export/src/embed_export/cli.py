"""Command line entry points for the exporter.

Exit codes match the extraction CLI: 0 on success, 1 for validation
problems (bad corpus, bad flags, incomplete coverage, unknown model
id), 2 for a missing input artifact.
"""

from __future__ import annotations

import logging
import sys
from pathlib import Path

import click

from . import __version__
from .corpus import CorpusReadError
from .encoder import EncoderError, make_encoder
from .export import EmbeddingFormatError, ExportJob, export_embeddings, verify_file

log = logging.getLogger(__name__)


@click.group()
@click.version_option(__version__, prog_name="embed-export")
@click.option("-v", "--verbose", count=True, help="-v for info, -vv for debug.")
def cli(verbose: int) -> None:
    """Encode corpora with a transformer and write embedding files."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


@cli.command()
@click.option("--corpus", "corpus_path", required=True, type=click.Path())
@click.option("--model", "model_id", required=True,
              help="Local encoder directory or hub model id.")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--batch", "batch_size", default=8, show_default=True)
@click.option("--max-len", default=128, show_default=True)
@click.option("--pooling", type=click.Choice(["cls", "mean"]), default="cls",
              show_default=True)
@click.option("--device", default="cpu", show_default=True)
@click.option("--window/--truncate", default=False,
              help="Mean over word windows instead of truncating long components.")
def export(corpus_path, model_id, out_path, batch_size, max_len, pooling,
           device, window) -> None:
    """Encode a corpus and write the embedding file."""
    job = ExportJob(
        corpus=Path(corpus_path),
        model=model_id,
        out=Path(out_path),
        batch_size=batch_size,
        max_len=max_len,
        pooling=pooling,
        device=device,
        window=window,
    )
    stats = export_embeddings(job)
    click.echo(f"wrote {stats.vectors} vectors (dim {stats.dim}) to {out_path}")
    if stats.skipped:
        click.echo(f"skipped {stats.skipped} mentions with no aligned positions")
    if stats.truncated:
        click.echo(f"truncated {stats.truncated} over-length texts")


@cli.command()
@click.option("--file", "file_path", required=True, type=click.Path())
@click.option("--corpus", "corpus_path", required=True, type=click.Path())
def verify(file_path: str, corpus_path: str) -> None:
    """Check an embedding file against the keys its corpus induces."""
    cov = verify_file(file_path, corpus_path)
    click.echo(
        f"dim {cov.dim}, {cov.records} records, "
        f"{cov.entailment_records} entailment scores"
    )
    click.echo(f"components covered: {cov.component_present}/{cov.component_total}")
    for wid in cov.missing:
        click.echo(f"missing: {wid}")
    for wid in cov.extra:
        click.echo(f"extra: {wid}")
    if not cov.complete:
        sys.exit(1)


@cli.command("make-encoder")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--seed", default=0, show_default=True)
@click.option("--hidden", default=32, show_default=True)
@click.option("--layers", default=2, show_default=True)
@click.option("--heads", default=4, show_default=True)
def make_encoder_cmd(out_dir: str, seed: int, hidden: int, layers: int,
                     heads: int) -> None:
    """Build the deterministic offline encoder for tests and smoke runs."""
    path = make_encoder(Path(out_dir), seed=seed, hidden=hidden, layers=layers,
                        heads=heads)
    click.echo(f"wrote encoder (hidden {hidden}, {layers} layers, seed {seed}) to {path}")


def main() -> None:
    try:
        cli.main(standalone_mode=False)
    except click.Abort:
        sys.exit(1)
    except click.ClickException as exc:
        exc.show()
        sys.exit(1)
    except FileNotFoundError as exc:
        click.echo(f"error: missing artifact: {exc}", err=True)
        sys.exit(2)
    except (EncoderError, CorpusReadError, EmbeddingFormatError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    main()
