"""
Command-line front end.

Subcommands: ``train``, ``split``, ``encode``, ``retrieve`` and ``eval``.
Exit codes: 0 success, 2 configuration error, 3 data error, 4 divergence.
"""

import argparse
import csv
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from src.hashkit.__version__ import __version__
from src.hashkit.dsdh.client import Client
from src.hashkit.dsdh.config import RunConfig, load_config, threads_override
from src.hashkit.dsdh.exceptions import (
    ConfigError,
    DataFormatError,
    DivergenceError,
    NotPositiveDefiniteError,
    ShapeError,
)
from src.hashkit.dsdh.services.data import load_features, load_labels, save_dataset
from src.hashkit.dsdh.services.model import load_model, save_model
from src.hashkit.dsdh.services.objective import TermBreakdown
from src.hashkit.dsdh.services.retrieval import (
    CodeDatabase,
    PackedCode,
    load_database,
    pack_columns,
    save_database,
)
from src.hashkit.dsdh.services.evaluation import write_report
from src.hashkit.dsdh.utils import filter_parameters

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGED = 4


def training_log_path(model_path: Path) -> Path:
    return model_path.with_name(model_path.name + ".log")


def cmd_train(config_path: str, overrides: Optional[Dict[str, Any]] = None) -> Path:
    """
    Train a model from a run configuration and write it with its log.

    Args:
        config_path (str): Configuration file.
        overrides (Optional[Dict[str, Any]]): Field overrides (None values ignored).

    Returns:
        Path: The written model file.
    """
    config = load_config(config_path).with_overrides(filter_parameters(overrides or {}))
    if config.features_path is None or config.model_path is None:
        raise ConfigError("features_path and model_path are required for training")

    client = Client(config)
    dataset = client.data().load(config.features_path, config.labels_path)
    history: List[TermBreakdown] = []
    model = client.solver().train(dataset, history=history)

    model_path = Path(config.model_path)
    save_model(model, model_path)
    lines = [
        f"epoch={epoch} pairwise={terms.pairwise!r} classification={terms.classification!r} "
        f"regularizer={terms.regularizer!r} quantization={terms.quantization!r} total={terms.total!r}"
        for epoch, terms in enumerate(history, start=1)
    ]
    training_log_path(model_path).write_text(
        "".join(line + "\n" for line in lines), encoding="utf-8"
    )
    return model_path


def cmd_split(
    features_path: str,
    labels_path: Optional[str],
    train_out: str,
    query_out: str,
    queries_per_class: int,
    train_per_class: Optional[int] = None,
    format: str = "csv",
    seed: int = 0,
    database_out: Optional[str] = None,
    include_queries: bool = False,
) -> None:
    """
    Split a dataset into training and query files (binary format).

    Args:
        features_path (str): Features file (or binary dataset).
        labels_path (Optional[str]): Labels file for the csv format.
        train_out (str): Training set destination.
        query_out (str): Query set destination.
        queries_per_class (int): Queries per class.
        train_per_class (Optional[int]): Training items per class; all
            remaining items when None.
        format (str): Input format, "csv" or "binary".
        seed (int): Split seed.
        database_out (Optional[str]): Also write the retrieval database items.
        include_queries (bool): Append the queries to the database items.
    """
    service = Client(RunConfig(format=format, seed=seed)).data()
    dataset = service.load(features_path, labels_path)
    train, query = service.split(dataset, queries_per_class, train_per_class)
    save_dataset(train, train_out)
    save_dataset(query, query_out)
    if database_out is not None:
        save_dataset(service.database(train, query, include_queries), database_out)


def cmd_encode(
    model_path: str,
    features_path: str,
    out_path: str,
    format: str = "csv",
    use_trained_codes: bool = False,
) -> CodeDatabase:
    """
    Hash a feature file and write the code database.

    Args:
        model_path (str): Model file.
        features_path (str): Features to hash.
        out_path (str): Code database destination.
        format (str): Features format, "csv" or "binary".
        use_trained_codes (bool): Store the model's training codes instead of
            sgn(h); the feature file must then be the training set.

    Returns:
        CodeDatabase: The database written.
    """
    model = load_model(model_path)
    features = load_features(features_path, format)
    if use_trained_codes and model.B is None:
        logger.warning("%s stores no training codes, encoding with sgn(h) instead", model_path)
    if use_trained_codes and model.B is not None:
        if model.B.shape[1] != features.shape[1]:
            raise ShapeError("Stored codes do not match the feature file", model.B.shape, features.shape)
        if features.shape[0] != model.input_dim:
            raise ShapeError("Feature dimension does not match the model", features.shape, (model.input_dim,))
        codes = model.B
    else:
        codes = model.encode(features)
    db = CodeDatabase.from_codes(codes)
    save_database(db, out_path)
    logger.info("Encoded %d items with K=%d into %s", len(db), db.K, out_path)
    return db


def cmd_retrieve(
    db_path: str,
    model_path: str,
    query_features: str,
    out_path: str,
    top: int = 10,
    format: str = "csv",
    threads: int = 0,
) -> None:
    """
    Write the top-N database items for every query as CSV.

    Args:
        db_path (str): Code database.
        model_path (str): Model used to hash the queries.
        query_features (str): Query features.
        out_path (str): CSV destination (query, rank, id, distance).
        top (int): Neighbours per query.
        format (str): Features format.
        threads (int): Worker cap.
    """
    db = load_database(db_path)
    model = load_model(model_path)
    words = pack_columns(model.encode(load_features(query_features, format)))
    queries = [PackedCode(db.K, row) for row in words]
    results = Client(RunConfig(threads=threads)).retrieval().top(db, queries, top)
    with open(out_path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(("query", "rank", "id", "distance"))
        for query, ranked in enumerate(results):
            for position, (item, distance) in enumerate(ranked, start=1):
                writer.writerow((query, position, item, distance))


def cmd_eval(
    db_path: str,
    query_features: str,
    query_labels: str,
    model_path: str,
    db_labels: str,
    out_path: str,
    truncate: Optional[int] = None,
    radius: int = 2,
    format: str = "csv",
    threads: int = 0,
) -> List[Path]:
    """
    Evaluate retrieval and write the report files.

    Args:
        db_path (str): Code database.
        query_features (str): Query features.
        query_labels (str): Query labels.
        model_path (str): Model used to hash the queries.
        db_labels (str): Labels of the database items, in database order.
        out_path (str): Text report destination.
        truncate (Optional[int]): AP cut-off.
        radius (int): Hamming radius.
        format (str): Features / labels format.
        threads (int): Worker cap.

    Returns:
        List[Path]: Every report file written.
    """
    for path in (db_path, query_features, query_labels, model_path, db_labels):
        if not Path(path).exists():
            raise FileNotFoundError(f"Missing input file {path}")
    db = load_database(db_path)
    model = load_model(model_path)
    query_codes = model.encode(load_features(query_features, format))
    service = Client(RunConfig(threads=threads)).evaluation(truncate=truncate, radius=radius)
    report = service.evaluate(
        db,
        load_labels(db_labels, format).data,
        query_codes,
        load_labels(query_labels, format).data,
    )
    return write_report(report, out_path)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hashkit", description="Supervised discrete hashing toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default="INFO", help="Logging level (default INFO).")
    commands = parser.add_subparsers(dest="command", required=True)

    train = commands.add_parser("train", help="Train a model from a config file.")
    train.add_argument("config")
    train.add_argument("--model", dest="model_path")
    train.add_argument("--seed", type=int)
    train.add_argument("--epochs", type=int)
    train.add_argument("--bits", type=int)
    train.add_argument("--variant", choices=["full", "A", "B", "C"])

    split = commands.add_parser("split", help="Split a dataset into train and query files.")
    split.add_argument("features")
    split.add_argument("labels", nargs="?")
    split.add_argument("--train-out", required=True)
    split.add_argument("--query-out", required=True)
    split.add_argument("--queries-per-class", type=int, required=True)
    split.add_argument("--train-per-class", type=int)
    split.add_argument("--format", choices=["csv", "binary"], default="csv")
    split.add_argument("--seed", type=int, default=0)
    split.add_argument("--database-out")
    split.add_argument("--include-queries", action="store_true")

    encode = commands.add_parser("encode", help="Hash features into a code database.")
    encode.add_argument("model")
    encode.add_argument("features")
    encode.add_argument("out")
    encode.add_argument("--format", choices=["csv", "binary"], default="csv")
    encode.add_argument("--use-trained-codes", action="store_true")

    retrieve = commands.add_parser("retrieve", help="Top-N neighbours for a query file.")
    retrieve.add_argument("db")
    retrieve.add_argument("model")
    retrieve.add_argument("queries")
    retrieve.add_argument("--out", required=True)
    retrieve.add_argument("--top", type=int, default=10)
    retrieve.add_argument("--format", choices=["csv", "binary"], default="csv")

    evaluate = commands.add_parser("eval", help="Evaluate retrieval quality.")
    evaluate.add_argument("db")
    evaluate.add_argument("query_features")
    evaluate.add_argument("query_labels")
    evaluate.add_argument("model")
    evaluate.add_argument("--db-labels", required=True)
    evaluate.add_argument("--out", default="report.txt")
    evaluate.add_argument("--truncate", type=int)
    evaluate.add_argument("--radius", type=int, default=2)
    evaluate.add_argument("--format", choices=["csv", "binary"], default="csv")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run the command line.

    Args:
        argv (Optional[Sequence[str]]): Arguments (sys.argv[1:] when None).

    Returns:
        int: Process exit code.
    """
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        threads = int(threads_override().get("threads", 0))
        if args.command == "train":
            cmd_train(
                args.config,
                {
                    "model_path": args.model_path,
                    "seed": args.seed,
                    "epochs": args.epochs,
                    "bits": args.bits,
                    "variant": args.variant,
                },
            )
        elif args.command == "split":
            cmd_split(
                args.features,
                args.labels,
                args.train_out,
                args.query_out,
                args.queries_per_class,
                args.train_per_class,
                args.format,
                args.seed,
                args.database_out,
                args.include_queries,
            )
        elif args.command == "encode":
            cmd_encode(args.model, args.features, args.out, args.format, args.use_trained_codes)
        elif args.command == "retrieve":
            cmd_retrieve(args.db, args.model, args.queries, args.out, args.top, args.format, threads)
        else:
            cmd_eval(
                args.db,
                args.query_features,
                args.query_labels,
                args.model,
                args.db_labels,
                args.out,
                args.truncate,
                args.radius,
                args.format,
                threads,
            )
    except ConfigError as error:
        print(f"config error: {error}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataFormatError, ShapeError, FileNotFoundError) as error:
        print(f"data error: {error}", file=sys.stderr)
        return EXIT_DATA
    except (DivergenceError, NotPositiveDefiniteError) as error:
        print(f"diverged: {error}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK
