"""Command-line front end: augmentation, loss evaluation, adapter utilities,
and the pos/neg evaluation harness.

Configuration precedence, highest first: command-line flags, ``SVLC_*``
environment variables, ``--config`` key=value file, built-in defaults.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import evalkit, lora, losses
from ._http import JsonServiceClient
from .analogy import HttpCompletionClient
from .corpus import IngestStats, read_pairs, write_augmented
from .errors import FormatError, ServiceError
from .lexicon import MATCH_FIRST, MATCH_RANDOM, SVLC_TYPES, builtin_lexicons, load_lexicon
from .parser import HttpPosTagger
from .pipeline import AugmentOptions, AugmentSummary, augment_stream
from .unmask import DEFAULT_TOP_K, HttpFillMaskClient

_CONFIG_COMMANDS = ("augment", "loss-eval", "eval")


def _parse_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for line_no, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise click.UsageError(f"{path}:{line_no}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _load_config(ctx: click.Context, param: click.Parameter, value: str | None):
    if not value:
        return value
    flat = _parse_config_file(value)
    default_map: dict = {cmd: dict(flat) for cmd in _CONFIG_COMMANDS}
    default_map["lora"] = {cmd: dict(flat) for cmd in ("fold", "init", "apply")}
    default_map["lexicon"] = {"list": dict(flat)}
    ctx.default_map = default_map
    return value


@click.group()
@click.option(
    "--config",
    type=click.Path(exists=True, dir_okay=False),
    callback=_load_config,
    expose_value=False,
    is_eager=True,
    help="key=value config file (lowest-precedence settings)",
)
@click.version_option(package_name="svlckit", prog_name="svlc")
def main() -> None:
    """Structured-concept caption augmentation and evaluation toolkit."""


def _resolve_lexicons(svlc_types: str, overrides: tuple[str, ...]):
    wanted = [t.strip() for t in svlc_types.split(",") if t.strip()]
    unknown = [t for t in wanted if t not in SVLC_TYPES]
    if unknown:
        raise click.UsageError(f"unknown svlc types: {', '.join(unknown)}")
    paths: dict[str, str] = {}
    for override in overrides:
        if "=" not in override:
            raise click.UsageError(f"--lexicon expects type=path, got {override!r}")
        svlc_type, path = override.split("=", 1)
        if svlc_type not in SVLC_TYPES:
            raise click.UsageError(f"unknown lexicon type {svlc_type!r}")
        paths[svlc_type] = path
    builtin = {lex.svlc_type: lex for lex in builtin_lexicons()}
    out = []
    for svlc_type in SVLC_TYPES:
        if svlc_type not in wanted:
            continue
        if svlc_type in paths:
            out.append(load_lexicon(paths[svlc_type], svlc_type))
        else:
            out.append(builtin[svlc_type])
    return tuple(out)


@main.command()
@click.option("--input", "input_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--output", "output_path", required=True, type=click.Path(dir_okay=False))
@click.option("--format", "pair_format", type=click.Choice(["tsv", "jsonl"]), default="tsv")
@click.option("--methods", default="rb", show_default=True, help="comma-separated subset of rb,llm-neg,llm-pos")
@click.option("--svlc-types", default=",".join(SVLC_TYPES), show_default=True)
@click.option("--lexicon", "lexicon_overrides", multiple=True, metavar="TYPE=PATH")
@click.option("--seed", type=int, default=0, envvar="SVLC_SEED", show_default=True)
@click.option("--match-mode", type=click.Choice([MATCH_FIRST, MATCH_RANDOM]), default=MATCH_FIRST)
@click.option("--unmask-endpoint", envvar="SVLC_UNMASK_ENDPOINT", default=None)
@click.option("--complete-endpoint", envvar="SVLC_COMPLETE_ENDPOINT", default=None)
@click.option("--tag-endpoint", default=None, help="external POS tagging service (default: builtin tagger)")
@click.option("--top-k", type=int, default=DEFAULT_TOP_K, show_default=True)
@click.option("--concurrency", type=int, default=8, show_default=True, help="max in-flight service requests")
@click.option("--workers", type=int, default=1, show_default=True, help="record worker pool size")
@click.option("--max-negatives", type=int, default=0, show_default=True, help="cap negatives per record (0 = unlimited)")
def augment(
    input_path: str,
    output_path: str,
    pair_format: str,
    methods: str,
    svlc_types: str,
    lexicon_overrides: tuple[str, ...],
    seed: int,
    match_mode: str,
    unmask_endpoint: str | None,
    complete_endpoint: str | None,
    tag_endpoint: str | None,
    top_k: int,
    concurrency: int,
    workers: int,
    max_negatives: int,
) -> None:
    """Generate negative and analogy captions for an image-caption pair file."""
    method_list = tuple(m.strip() for m in methods.split(",") if m.strip())
    if not method_list:
        raise click.UsageError("at least one method is required")
    for method in method_list:
        if method not in ("rb", "llm-neg", "llm-pos"):
            raise click.UsageError(f"unknown method {method!r}")
    if "llm-neg" in method_list and not unmask_endpoint:
        raise click.UsageError("llm-neg requires --unmask-endpoint (or SVLC_UNMASK_ENDPOINT)")
    if "llm-pos" in method_list and not complete_endpoint:
        raise click.UsageError("llm-pos requires --complete-endpoint (or SVLC_COMPLETE_ENDPOINT)")

    lexicons = _resolve_lexicons(svlc_types, lexicon_overrides) if "rb" in method_list else ()
    fill_mask = (
        HttpFillMaskClient(JsonServiceClient(unmask_endpoint, max_in_flight=concurrency))
        if unmask_endpoint
        else None
    )
    completion = (
        HttpCompletionClient(JsonServiceClient(complete_endpoint, max_in_flight=concurrency))
        if complete_endpoint
        else None
    )
    tagger = (
        HttpPosTagger(JsonServiceClient(tag_endpoint, max_in_flight=concurrency))
        if tag_endpoint
        else None
    )
    options = AugmentOptions(
        methods=method_list,
        lexicons=lexicons,
        seed=seed,
        match_mode=match_mode,
        top_k=top_k,
        max_negatives=max_negatives,
        workers=workers,
    )

    stats = IngestStats()
    summary = AugmentSummary()
    try:
        with open(input_path, "rb") as source, open(output_path, "wb") as sink:
            records = read_pairs(source, format=pair_format, stats=stats)
            augmented = augment_stream(
                records, options, summary,
                tagger=tagger, fill_mask=fill_mask, completion=completion,
            )
            write_augmented(augmented, sink)
    except FormatError as exc:
        raise click.ClickException(f"input format error: {exc}")
    except OSError as exc:
        raise click.ClickException(f"I/O error: {exc}")
    summary.skipped = stats.malformed
    click.echo(json.dumps(summary.to_json_obj()))


@main.command("loss-eval")
@click.option("--batch", "batch_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--tau", type=float, default=1.0, show_default=True)
@click.option("--alpha", type=float, default=1.0, show_default=True)
@click.option("--beta", type=float, default=1.0, show_default=True)
@click.option(
    "--neg-mode",
    type=click.Choice([losses.NEG_MODE_SEPARATE, losses.NEG_MODE_MERGED]),
    default=losses.NEG_MODE_SEPARATE,
    show_default=True,
)
@click.option("--gradients", "with_gradients", is_flag=True, help="include gradients in the output")
def loss_eval(
    batch_path: str, tau: float, alpha: float, beta: float, neg_mode: str, with_gradients: bool
) -> None:
    """Evaluate the combined loss on an embedding batch JSON file."""
    try:
        with open(batch_path, "r", encoding="utf-8") as fh:
            batch = losses.EmbeddingBatch.from_json(fh)
        cfg = losses.LossConfig(tau=tau, alpha=alpha, beta=beta, neg_mode=neg_mode)
        output = losses.total_loss(batch, cfg)
    except (ValueError, KeyError) as exc:
        raise click.ClickException(f"invalid batch: {exc}")
    obj = {
        "total": output.total,
        "parts": output.parts,
        "warnings": list(output.warnings),
    }
    if with_gradients:
        grads = output.gradients
        obj["gradients"] = {
            "text_emb": grads.text_emb.tolist(),
            "image_emb": grads.image_emb.tolist(),
            "neg_text_emb": grads.neg_text_emb.tolist() if grads.neg_text_emb is not None else None,
            "pos_text_emb": grads.pos_text_emb.tolist() if grads.pos_text_emb is not None else None,
            "tau": grads.tau,
        }
    click.echo(json.dumps(obj))


@main.group("lora")
def lora_group() -> None:
    """Low-rank adapter utilities."""


@lora_group.command("fold")
@click.option("--base", "base_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--adapter", "adapter_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def lora_fold(base_path: str, adapter_path: str, out_path: str) -> None:
    """Merge an adapter into its base weight file."""
    try:
        base = lora.load_base(base_path)
        adapter, kind = lora.load_adapter(adapter_path)
        if kind != base.kind:
            raise ValueError(f"adapter kind {kind!r} does not match base kind {base.kind!r}")
        lora.save_base(lora.fold(base, adapter), out_path)
    except (ValueError, OSError) as exc:
        raise click.ClickException(str(exc))
    click.echo(json.dumps({"folded": out_path, "name": base.name, "kind": base.kind}))


@lora_group.command("init")
@click.option("--base", "base_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--rank", type=int, default=lora.DEFAULT_RANK, show_default=True)
@click.option("--seed", type=int, default=0, envvar="SVLC_SEED", show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def lora_init(base_path: str, rank: int, seed: int, out_path: str) -> None:
    """Create a fresh, behavior-neutral adapter for a base weight file."""
    try:
        base = lora.load_base(base_path)
        adapter = lora.init_adapter(base, rank, np.random.default_rng(seed))
        lora.save_adapter(adapter, base.kind, out_path)
    except (ValueError, OSError) as exc:
        raise click.ClickException(str(exc))
    click.echo(
        json.dumps(
            {"adapter": out_path, "name": base.name, "rank": rank, "params": adapter.param_count}
        )
    )


@lora_group.command("apply")
@click.option("--base", "base_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--adapter", "adapter_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--x", "x_json", default=None, help="input vector as a JSON array (linear weights)")
@click.option("--ids", "ids_csv", default=None, help="comma-separated vocabulary ids (embedding weights)")
def lora_apply(base_path: str, adapter_path: str | None, x_json: str | None, ids_csv: str | None) -> None:
    """Apply a base weight (with optional residual adapter) to an input."""
    try:
        base = lora.load_base(base_path)
        adapter = None
        if adapter_path:
            adapter, kind = lora.load_adapter(adapter_path)
            if kind != base.kind:
                raise ValueError(f"adapter kind {kind!r} does not match base kind {base.kind!r}")
        if base.kind == lora.KIND_LINEAR:
            if x_json is None:
                raise click.UsageError("linear weights need --x")
            result = lora.apply_linear(base, adapter, np.asarray(json.loads(x_json)))
        else:
            if ids_csv is None:
                raise click.UsageError("embedding weights need --ids")
            ids = [int(part) for part in ids_csv.split(",") if part.strip()]
            result = lora.apply_embedding(base, adapter, ids)
    except (ValueError, OSError) as exc:
        raise click.ClickException(str(exc))
    click.echo(json.dumps({"output": result.tolist()}))


@main.command("eval")
@click.option("--items", "items_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--backend", "backend_spec", default=None, help="http:URL or synthetic:SEED")
@click.option("--tau", type=float, default=1.0, show_default=True)
@click.option("--report", "report_path", type=click.Path(dir_okay=False), default=None)
@click.option("--batch-size", type=int, default=evalkit.DEFAULT_BATCH_SIZE, show_default=True)
@click.option("--collapse", is_flag=True, help="aggregate by object/attribute/relation groups")
def eval_cmd(
    items_path: str,
    backend_spec: str | None,
    tau: float,
    report_path: str | None,
    batch_size: int,
    collapse: bool,
) -> None:
    """Evaluate pos/neg caption discrimination over an items JSONL file."""
    if backend_spec is None:
        endpoint = os.environ.get("SVLC_EMBED_ENDPOINT")
        backend_spec = f"http:{endpoint}" if endpoint else None
    if backend_spec is None:
        raise click.UsageError("--backend is required (or set SVLC_EMBED_ENDPOINT)")

    if backend_spec.startswith("synthetic:"):
        backend = evalkit.SyntheticBackend(seed=int(backend_spec.split(":", 1)[1]))
    elif backend_spec.startswith("http"):
        endpoint = backend_spec
        if endpoint.startswith("http:") and not endpoint.startswith("http://"):
            endpoint = endpoint[len("http:"):]  # the http:URL prefix form
        backend = evalkit.HttpEmbeddingBackend(JsonServiceClient(endpoint))
    else:
        raise click.UsageError(f"unknown backend {backend_spec!r}")

    try:
        with open(items_path, "rb") as fh:
            report = evalkit.evaluate(
                evalkit.read_items(fh), backend, tau, batch_size=batch_size, collapse_types=collapse
            )
    except (OSError, ServiceError, ValueError, KeyError) as exc:
        raise click.ClickException(str(exc))
    obj = report.to_json_obj()
    if report_path:
        Path(report_path).write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")
    click.echo(json.dumps(obj))


@main.group("lexicon")
def lexicon_group() -> None:
    """Inspect substitution word lists."""


@lexicon_group.command("list")
@click.option("--words", "show_words", is_flag=True, help="also print each word list")
def lexicon_list(show_words: bool) -> None:
    """List the builtin lexicons and their sizes."""
    for lex in builtin_lexicons():
        click.echo(f"{lex.svlc_type}\t{len(lex.words)}")
        if show_words:
            for word in lex.words:
                click.echo(f"  {word}")


if __name__ == "__main__":
    sys.exit(main())
