"""Command-line interface.

Settings come from a YAML (or JSON) config file given with ``--config``;
command-line flags override it, and defaults fill the rest. Relative paths
in the config are resolved against the config file's directory.

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 transport error.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import click
import numpy as np
import yaml

from .corpus import label_docs, parse_label_corpus, parse_target_set
from .embed import (
    BagOfVectorsBackend,
    ExternalBackend,
    PrecomputedBackend,
    load_precomputed,
    load_word_vectors,
    write_precomputed,
)
from .exceptions import ContractError, DataError, TransportError, UnembeddableError
from .lexicon import Lexicon, build_lexicon, stopword_curve
from .metrics import DEFAULT_KS, DEFAULT_THRESHOLD, detect_mislabels, evaluate
from .rank import build_index, rank_labels, rank_target
from .stats import pearson_r, t_test_two_sided

logger = logging.getLogger(__name__)

BACKENDS = ("bag_of_vectors", "external", "precomputed")
INDEX_FILE = "labels.vec"
META_FILE = "index.json"
LEXICON_FILE = "lexicon.json"
STOPWORDS_FILE = "stopwords.txt"
CURVE_FILE = "stopword_curve.csv"
REPORT_FILE = "report.json"
PER_TARGET_FILE = "per_target.csv"
DEFAULT_GRID = tuple(round(0.05 * i, 2) for i in range(1, 21))


class ConfigError(click.UsageError):
    pass


@dataclass
class RunConfig:
    corpus_path: Path | None = None
    targets_path: Path | None = None
    backend: str = "bag_of_vectors"
    vectors_path: Path | None = None
    bucket_vectors_path: Path | None = None
    provider: dict = field(default_factory=dict)
    precomputed: dict = field(default_factory=dict)
    stop_fraction: float = 0.2
    ks: tuple = DEFAULT_KS
    threshold: int = DEFAULT_THRESHOLD
    k: int = 15
    seed: int = 0
    trials: int = 10_000
    output_dir: Path = Path("out")

    def require(self, *names):
        for name in names:
            if getattr(self, name) is None:
                raise ConfigError(f"missing required setting {name!r} (set it in the config or with a flag)")

    def check_backend(self):
        if self.backend not in BACKENDS:
            raise ConfigError(f"backend must be one of {', '.join(BACKENDS)}, got {self.backend!r}")
        if self.backend == "bag_of_vectors":
            self.require("vectors_path")
        elif self.backend == "external":
            for key in ("url", "model"):
                if key not in self.provider:
                    raise ConfigError(f"external backend needs provider.{key}")
        elif "labels" not in self.precomputed:
            raise ConfigError("precomputed backend needs precomputed.labels")


_PATH_KEYS = {
    "corpus": "corpus_path",
    "targets": "targets_path",
    "vectors": "vectors_path",
    "bucket_vectors": "bucket_vectors_path",
    "output_dir": "output_dir",
}
_PLAIN_KEYS = {"backend", "stop_fraction", "ks", "threshold", "k", "seed", "trials", "provider", "precomputed"}


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path} is not valid YAML: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must hold a mapping")
    unknown = set(raw) - set(_PATH_KEYS) - _PLAIN_KEYS
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    base = path.parent
    cfg = RunConfig()
    for key, attr in _PATH_KEYS.items():
        if raw.get(key) is not None:
            setattr(cfg, attr, base / raw[key])
    for key in _PLAIN_KEYS:
        if key in raw:
            setattr(cfg, key, raw[key])
    cfg.ks = tuple(cfg.ks)
    for sub in ("labels", "targets"):
        if sub in cfg.precomputed:
            cfg.precomputed[sub] = base / cfg.precomputed[sub]
    return cfg


def _overrides(cfg, **flags):
    for attr, value in flags.items():
        if value is not None:
            setattr(cfg, attr, Path(value) if attr.endswith(("_path", "_dir")) else value)
    return cfg


def make_backend(cfg: RunConfig, lexicon: Lexicon | None = None):
    """Instantiate the configured backend and the roles used for labels and targets."""
    cfg.check_backend()
    if cfg.backend == "bag_of_vectors":
        buckets = np.load(cfg.bucket_vectors_path) if cfg.bucket_vectors_path else None
        table = load_word_vectors(cfg.vectors_path, bucket_vectors=buckets)
        return BagOfVectorsBackend(table, lexicon), "symmetric", "symmetric"
    if cfg.backend == "external":
        from .provider import EmbeddingClient, ProviderConfig

        opts = dict(cfg.provider)
        label_mode = opts.pop("label_mode", "document")
        target_mode = opts.pop("target_mode", "query")
        client = EmbeddingClient(ProviderConfig(**opts))
        if not client.config.supports_asymmetric:
            label_mode = target_mode = "symmetric"
        return ExternalBackend(client, label_mode=label_mode, target_mode=target_mode), label_mode, target_mode
    backend_id = cfg.precomputed.get("backend_id", "precomputed")
    targets = cfg.precomputed.get("targets")
    if targets is None:
        store = load_precomputed(cfg.precomputed["labels"], backend_id, "symmetric")
        return PrecomputedBackend(store, backend_id=backend_id), "symmetric", "symmetric"
    labels = load_precomputed(cfg.precomputed["labels"], backend_id, "document")
    queries = load_precomputed(targets, backend_id, "query")
    return PrecomputedBackend(labels, queries, backend_id=backend_id), "document", "query"


def load_index(out_dir: Path):
    meta_path = out_dir / META_FILE
    if not meta_path.is_file():
        raise DataError(f"{meta_path}: no index found, run 'build' first")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    store = load_precomputed(out_dir / INDEX_FILE, meta["backend_id"], meta["role"])
    index = build_index(list(store.items()))
    lexicon = None
    if (out_dir / LEXICON_FILE).is_file():
        lexicon = Lexicon.from_dict(json.loads((out_dir / LEXICON_FILE).read_text(encoding="utf-8")))
    return index, meta, lexicon


def _csv_text(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _config(ctx) -> RunConfig:
    return ctx.obj if ctx.obj is not None else RunConfig()


def _corpus_options(f):
    f = click.option("--corpus", "corpus_path", type=click.Path(dir_okay=False), help="Label corpus (JSON Lines).")(f)
    f = click.option("--out", "output_dir", type=click.Path(file_okay=False), help="Output directory.")(f)
    return f


def _backend_options(f):
    f = click.option("--backend", type=click.Choice(BACKENDS), help="Embedding backend.")(f)
    f = click.option("--vectors", "vectors_path", type=click.Path(dir_okay=False), help="Word vector file.")(f)
    return f


@click.group()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="YAML/JSON run config.")
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
@click.pass_context
def cli(ctx, config_path, verbose):
    """Rank regulatory device categories against free-text descriptions."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(message)s")
    ctx.obj = load_config(config_path) if config_path else RunConfig()


@cli.command()
@_corpus_options
@click.option("--targets", "targets_path", type=click.Path(dir_okay=False), help="Target set (JSON Lines).")
@click.pass_context
def ingest(ctx, **flags):
    """Parse and validate the corpus (and targets), print a summary."""
    cfg = _overrides(_config(ctx), **flags)
    cfg.require("corpus_path")
    labels = parse_label_corpus(cfg.corpus_path)
    summary = {"corpus": str(cfg.corpus_path), "labels": len(labels)}
    if cfg.targets_path is not None:
        targets = parse_target_set(cfg.targets_path, labels)
        summary.update(
            targets=len(targets),
            mislabeled=sum(t.is_mislabeled for t in targets),
            targets_file=str(cfg.targets_path),
        )
    click.echo(json.dumps(summary, sort_keys=True))


@cli.command()
@_corpus_options
@_backend_options
@click.option("--theta", "stop_fraction", type=float, help="Stop-word document fraction.")
@click.pass_context
def build(ctx, **flags):
    """Embed every label and persist the index, lexicon and stop words."""
    cfg = _overrides(_config(ctx), **flags)
    cfg.require("corpus_path")
    cfg.check_backend()
    labels = parse_label_corpus(cfg.corpus_path)
    lexicon = build_lexicon(label_docs(labels), cfg.stop_fraction)
    backend, label_role, _ = make_backend(cfg, lexicon)
    items = [(e.label_id, e.description) for e in labels]
    if cfg.backend == "bag_of_vectors":
        embeddings, bad = [], []
        for doc_id, text in items:
            try:
                embeddings.append(backend.embed_one(doc_id, text))
            except UnembeddableError as exc:
                bad.append(exc.doc_id)
        if bad:
            raise DataError(f"{len(bad)} unembeddable label(s): {', '.join(bad)}")
    else:
        embeddings = backend.embed(items, label_role)
    index = build_index(list(zip([e.label_id for e in labels], embeddings)))
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    write_precomputed(zip(index.label_ids, embeddings), out / INDEX_FILE)
    meta = {
        "backend": cfg.backend,
        "backend_id": index.backend_id,
        "role": index.role,
        "dim": index.dim,
        "n_labels": index.n_labels,
    }
    _write(out / META_FILE, json.dumps(meta, indent=2, sort_keys=True) + "\n")
    _write(out / LEXICON_FILE, json.dumps(lexicon.to_dict(), indent=1, sort_keys=True, ensure_ascii=False) + "\n")
    _write(out / STOPWORDS_FILE, "".join(t + "\n" for t in sorted(lexicon.stopwords)))
    click.echo(json.dumps({"index": str(out / INDEX_FILE), **meta}, sort_keys=True))


def _query_backend(cfg, lexicon):
    backend, _, target_role = make_backend(cfg, lexicon)
    return backend, target_role


@cli.command()
@click.argument("text", required=False)
@_corpus_options
@_backend_options
@click.option("-k", "k", type=int, help="Number of rows to print (default 15).")
@click.pass_context
def classify(ctx, text, **flags):
    """Print the top-k labels for TEXT (or standard input).

    With the precomputed backend TEXT is a target id from the query store.
    """
    cfg = _overrides(_config(ctx), **flags)
    cfg.require("corpus_path")
    if text is None:
        text = sys.stdin.read()
    index, meta, lexicon = load_index(cfg.output_dir)
    if cfg.k < 1 or cfg.k > index.n_labels:
        raise click.BadParameter(f"k must lie in [1, {index.n_labels}], got {cfg.k}", param_hint="-k")
    names = {e.label_id: e.name for e in parse_label_corpus(cfg.corpus_path)}
    backend, role = _query_backend(cfg, lexicon)
    doc_id = text.strip() if cfg.backend == "precomputed" else "query"
    query = backend.embed([(doc_id, text)], role)[0]
    ranking = rank_labels(query, index, cfg.k)
    rows = [(i, lid, names.get(lid, ""), f"{score:.6f}") for i, (lid, score) in enumerate(ranking.top(cfg.k), 1)]
    click.echo(_csv_text(("rank", "label_id", "name", "score"), rows), nl=False)


@cli.command("evaluate")
@_corpus_options
@_backend_options
@click.option("--targets", "targets_path", type=click.Path(dir_okay=False), help="Target set (JSON Lines).")
@click.option("--threshold", type=int, help="Mislabel rank threshold (default 100).")
@click.option("--seed", type=int, help="Seed for the simulated random baseline.")
@click.pass_context
def evaluate_cmd(ctx, **flags):
    """Rank every target and write report.json and per_target.csv."""
    cfg = _overrides(_config(ctx), **flags)
    cfg.require("corpus_path", "targets_path")
    labels = parse_label_corpus(cfg.corpus_path)
    targets = parse_target_set(cfg.targets_path, labels)
    index, meta, lexicon = load_index(cfg.output_dir)
    backend, role = _query_backend(cfg, lexicon)
    queries = backend.embed([(t.target_id, t.description) for t in targets], role)
    results = [
        rank_target(q, index, t.gold_label_id, k=min(cfg.k, index.n_labels), target_id=t.target_id)
        for q, t in zip(queries, targets)
    ]
    report = evaluate(results, targets, backend_id=index.backend_id, ks=cfg.ks, threshold=cfg.threshold,
                      seed=cfg.seed, trials=cfg.trials)
    flagged = {v.target_id for v in detect_mislabels(results, cfg.threshold) if v.flagged}
    rows = [(t.target_id, t.word_count, r.gold_rank, str(t.target_id in flagged).lower())
            for t, r in zip(targets, results)]
    out = cfg.output_dir
    _write(out / REPORT_FILE, json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    _write(out / PER_TARGET_FILE, _csv_text(("target_id", "word_count", "gold_rank", "flagged"), rows))
    click.echo(json.dumps({
        "n_correct": report.n_correct,
        "n_mislabeled": report.n_mislabeled,
        "avg_rank_correct": report.avg_rank_correct,
        "avg_rank_mislabeled": report.avg_rank_mislabeled,
        "report": str(out / REPORT_FILE),
    }, sort_keys=True))


@cli.command()
@_corpus_options
@click.option("--theta", "stop_fraction", type=float, help="Fraction used for the stop-word list.")
@click.option("--grid", type=str, help="Comma-separated thresholds for the curve.")
@click.pass_context
def stopwords(ctx, grid, **flags):
    """Print the vocabulary-versus-threshold curve; write it and the stop-word list to --out."""
    cfg = _overrides(_config(ctx), **flags)
    cfg.require("corpus_path")
    try:
        thetas = [float(x) for x in grid.split(",")] if grid else list(DEFAULT_GRID)
    except ValueError:
        raise click.BadParameter("grid must be comma-separated numbers", param_hint="--grid") from None
    docs = label_docs(parse_label_corpus(cfg.corpus_path))
    curve = stopword_curve(docs, thetas)
    lexicon = build_lexicon(docs, cfg.stop_fraction)
    text = _csv_text(("theta", "remaining_vocab"), [(repr(th), n) for th, n in curve])
    _write(cfg.output_dir / CURVE_FILE, text)
    _write(cfg.output_dir / STOPWORDS_FILE, "".join(t + "\n" for t in sorted(lexicon.stopwords)))
    click.echo(text, nl=False)


@cli.command()
@click.option("--r", "r", type=float, help="Correlation coefficient to test.")
@click.option("--n", "n", type=int, help="Sample size for --r.")
@click.option("--pairs", type=click.Path(exists=True, dir_okay=False),
              help="CSV with header x,y; computes r and its p-value.")
def stats(r, n, pairs):
    """Pearson r and its two-sided t-test p-value."""
    if pairs:
        if r is not None:
            raise click.UsageError("use either --pairs or --r/--n")
        with open(pairs, encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            try:
                xy = [(float(row["x"]), float(row["y"])) for row in reader]
            except (KeyError, TypeError, ValueError):
                raise DataError(f"{pairs}: expected numeric columns x,y") from None
        n = len(xy)
        r = pearson_r([a for a, _ in xy], [b for _, b in xy])
    elif r is None or n is None:
        raise click.UsageError("give --r and --n, or --pairs")
    p = t_test_two_sided(r, n)
    click.echo(_csv_text(("r", "n", "p_value"), [(repr(r), n, repr(p))]), nl=False)


def main(argv=None):
    try:
        rv = cli.main(args=argv, prog_name="devicerank", standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except TransportError as exc:
        click.echo(f"error: {exc}", err=True)
        return 3
    except (DataError, ContractError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except ValueError as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    return rv if isinstance(rv, int) else 0


def run():
    sys.exit(main())


if __name__ == "__main__":
    run()
