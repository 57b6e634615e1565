"""Command-line operator surface for the full pipeline.

Seven subcommands cover corpus ingestion, training, evaluation,
cross-domain matrices, hyperparameter search, explanation reports, and
annotation agreement. Each run merges a JSON config file with flag
overrides, validates the result against a schema, and writes its
artifacts under ``--out`` together with a ``manifest.json`` index.

Reproducibility contract: every report file embeds the config hash and
the master seed, and rerunning a command with the same config and seed
reproduces every artifact byte for byte. Exit codes are stable: 0 on
success, 1 on runtime failure, 2 on input or config errors.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import re
import sys
from pathlib import Path

import jsonschema

from .corpus import (
    Corpus,
    Segment,
    build_vocab,
    read_jsonl,
    segment_documents,
    tokenize,
    write_jsonl,
)
from .evaluation import (
    AnnotationSet,
    Choice,
    IntRange,
    LogUniform,
    MetricsReport,
    MetricValue,
    SearchSpace,
    cohens_kappa,
    cross_domain,
    cross_validate,
    expert_agreement,
    hyperparameter_search,
    krippendorff_alpha,
    majority_vote,
    score_predictor,
)
from .explain import (
    ConceptConfig,
    SlalomFitConfig,
    completeness_score,
    discover_concepts,
    exact_shap,
    fit_slalom,
    format_concept_card,
    salient_examples,
    save_concepts,
    shap_sample,
)
from .bridge import BridgeClient, BridgeEndpoint, as_predictor
from .llm_client import ApiPredictor, ApiPredictorConfig, PromptTemplate
from .models import (
    LatentPredictor,
    load_model,
    save_model,
    train_ffnn,
    train_naive_bayes,
    train_ngram_logreg,
)

__all__ = ["CliError", "main"]

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


class CliError(Exception):
    """Failure with a machine-readable kind: config, input, or runtime."""

    def __init__(self, kind: str, message: str, **details):
        super().__init__(message)
        self.kind = kind
        self.message = message
        self.details = details

    @property
    def exit_code(self) -> int:
        return EXIT_RUNTIME if self.kind == "runtime" else EXIT_USAGE


# ---------------------------------------------------------------------------
# Config schemas
# ---------------------------------------------------------------------------

_COMMON_PROPS = {
    "seed": {"type": "integer", "minimum": 0},
    "jobs": {"type": "integer", "minimum": 1},
}

_MODEL_SCHEMA = {
    "type": "object",
    "properties": {
        "type": {"enum": ["nb", "logreg", "ffnn"]},
        "alpha": {"type": "number", "exclusiveMinimum": 0},
        "use_counts": {"type": "boolean"},
        "n_range": {
            "type": "array",
            "items": {"type": "integer", "minimum": 1},
            "minItems": 2,
            "maxItems": 2,
        },
        "C": {"type": "number", "exclusiveMinimum": 0},
        "penalty": {"enum": ["l2", "none"]},
        "min_df": {"type": "integer", "minimum": 1},
        "tol": {"type": "number", "exclusiveMinimum": 0},
        "max_iter": {"type": "integer", "minimum": 1},
        "hidden_dims": {
            "type": "array",
            "items": {"type": "integer", "minimum": 1},
            "minItems": 1,
            "maxItems": 2,
        },
        "lr": {"type": "number", "exclusiveMinimum": 0},
        "epochs": {"type": "integer", "minimum": 0},
        "batch_size": {"type": "integer", "minimum": 1},
    },
    "required": ["type"],
    "additionalProperties": False,
}

# which hyperparameters each model type accepts, beyond "type" itself
_MODEL_KEYS = {
    "nb": {"alpha", "use_counts"},
    "logreg": {"n_range", "C", "penalty", "min_df", "tol", "max_iter"},
    "ffnn": {"hidden_dims", "lr", "epochs", "batch_size", "min_df"},
}

_PREDICTOR_SCHEMA = {
    "type": "object",
    "properties": {
        "source": {"enum": ["file", "api", "bridge"]},
        "path": {"type": "string"},
        "endpoint": {"type": "string"},
        "model": {"type": "string"},
        "auth_env": {"type": "string"},
        "cache_dir": {"type": "string"},
        "timeout": {"type": "number", "exclusiveMinimum": 0},
        "max_retries": {"type": "integer", "minimum": 0},
        "backoff": {"type": "number", "minimum": 0},
        "context": {"type": "string"},
        "command": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "host": {"type": "string"},
        "port": {"type": "integer", "minimum": 1, "maximum": 65535},
    },
    "required": ["source"],
    "additionalProperties": False,
}

_SPACE_SCHEMA = {
    "type": "object",
    "properties": {
        "params": {
            "type": "object",
            "minProperties": 1,
            "additionalProperties": {
                "type": "object",
                "properties": {
                    "type": {"enum": ["choice", "int", "loguniform"]},
                    "values": {"type": "array", "minItems": 1},
                    "lo": {"type": "number"},
                    "hi": {"type": "number"},
                },
                "required": ["type"],
                "additionalProperties": False,
            },
        },
        "budget": {"type": "integer", "minimum": 1},
        "objective": {
            "enum": ["auroc", "f1_binary", "accuracy", "precision", "recall"]
        },
    },
    "required": ["params"],
    "additionalProperties": False,
}

SCHEMAS = {
    "ingest": {
        "type": "object",
        "properties": {
            "input": {"type": "string"},
            "format": {"enum": ["jsonl", "csv"]},
            "max_tokens": {"type": ["integer", "null"], "minimum": 1},
            **_COMMON_PROPS,
        },
        "required": ["input"],
        "additionalProperties": False,
    },
    "train": {
        "type": "object",
        "properties": {
            "corpus": {"type": "string"},
            "model": _MODEL_SCHEMA,
            **_COMMON_PROPS,
        },
        "required": ["corpus", "model"],
        "additionalProperties": False,
    },
    "eval": {
        "type": "object",
        "properties": {
            "corpus": {"type": "string"},
            "dataset": {"type": "string"},
            "model": _MODEL_SCHEMA,
            "predictor": _PREDICTOR_SCHEMA,
            "cross_validation": {
                "type": "object",
                "properties": {
                    "folds": {"type": "integer", "minimum": 1},
                    "mode": {"enum": ["shuffle", "kfold"]},
                    "test_fraction": {
                        "type": "number",
                        "exclusiveMinimum": 0,
                        "exclusiveMaximum": 1,
                    },
                },
                "additionalProperties": False,
            },
            **_COMMON_PROPS,
        },
        "required": ["corpus"],
        "additionalProperties": False,
    },
    "crosstest": {
        "type": "object",
        "properties": {
            "domains": {
                "type": "object",
                "minProperties": 2,
                "additionalProperties": {"type": "string"},
            },
            "model": _MODEL_SCHEMA,
            "runs": {"type": "integer", "minimum": 1},
            "test_fraction": {
                "type": "number",
                "exclusiveMinimum": 0,
                "exclusiveMaximum": 1,
            },
            "include_combined": {"type": "boolean"},
            **_COMMON_PROPS,
        },
        "required": ["domains", "model"],
        "additionalProperties": False,
    },
    "search": {
        "type": "object",
        "properties": {
            "corpus": {"type": "string"},
            "model": _MODEL_SCHEMA,
            "space": _SPACE_SCHEMA,
            "inner_test_fraction": {
                "type": "number",
                "exclusiveMinimum": 0,
                "exclusiveMaximum": 1,
            },
            **_COMMON_PROPS,
        },
        "required": ["corpus", "model", "space"],
        "additionalProperties": False,
    },
    "explain": {
        "type": "object",
        "properties": {
            "corpus": {"type": "string"},
            "kind": {"enum": ["shap", "slalom", "concepts"]},
            "predictor": _PREDICTOR_SCHEMA,
            "shap": {
                "type": "object",
                "properties": {
                    "n_samples": {"type": "integer", "minimum": 1},
                    "max_instances": {"type": "integer", "minimum": 1},
                    "method": {"enum": ["sampling", "exact"]},
                },
                "additionalProperties": False,
            },
            "slalom": {
                "type": "object",
                "properties": {
                    "n_background": {"type": "integer", "minimum": 1},
                    "min_df": {"type": "integer", "minimum": 1},
                    "epochs": {"type": "integer", "minimum": 1},
                    "lr": {"type": "number", "exclusiveMinimum": 0},
                    "lr_decay": {
                        "type": "number",
                        "exclusiveMinimum": 0,
                        "maximum": 1,
                    },
                    "batch_size": {"type": "integer", "minimum": 1},
                },
                "additionalProperties": False,
            },
            "concepts": {
                "type": "object",
                "properties": {
                    "k": {"type": "integer", "minimum": 1},
                    "snippet_length": {"type": "integer", "minimum": 1},
                    "top_m": {"type": "integer", "minimum": 1},
                    "eval_corpus": {"type": "string"},
                    "epochs": {"type": "integer", "minimum": 1},
                    "batch_size": {"type": "integer", "minimum": 1},
                    "lr_schedule": {
                        "type": "array",
                        "items": {"type": "number", "exclusiveMinimum": 0},
                        "minItems": 1,
                    },
                },
                "additionalProperties": False,
            },
            **_COMMON_PROPS,
        },
        "required": ["corpus", "kind", "predictor"],
        "additionalProperties": False,
    },
    "agree": {
        "type": "object",
        "properties": {
            "annotations": {"type": "string"},
            "expert": {"type": "string"},
            **_COMMON_PROPS,
        },
        "required": ["annotations"],
        "additionalProperties": False,
    },
}


# ---------------------------------------------------------------------------
# Artifact output
# ---------------------------------------------------------------------------


class ArtifactWriter:
    """Writes files under one output directory and indexes them.

    Report files embed the config hash and seed directly; fixed-format
    data files (corpus JSONL, model and concept containers) are covered
    by their checksum in ``manifest.json`` instead, which carries the
    hash and seed itself.
    """

    def __init__(self, root: Path, config_hash: str, seed: int):
        self.root = root
        self.config_hash = config_hash
        self.seed = seed
        self._hashes: dict[str, str] = {}

    def write_json(self, relpath: str, payload: dict) -> None:
        body = {"config_hash": self.config_hash, "seed": self.seed}
        body.update(payload)
        self._write_text(relpath, json.dumps(body, sort_keys=True, indent=2) + "\n")

    def write_csv(self, relpath: str, fieldnames: list[str], rows: list[list]) -> None:
        buf = io.StringIO()
        buf.write(f"# config_hash={self.config_hash} seed={self.seed}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(fieldnames)
        writer.writerows(rows)
        self._write_text(relpath, buf.getvalue())

    def write_text(self, relpath: str, text: str) -> None:
        header = f"# config_hash={self.config_hash} seed={self.seed}\n\n"
        self._write_text(relpath, header + text)

    def adopt(self, relpath: str) -> None:
        """Index a file that a library serializer already wrote in place."""
        data = (self.root / relpath).read_bytes()
        self._hashes[relpath] = hashlib.sha256(data).hexdigest()

    def _write_text(self, relpath: str, text: str) -> None:
        data = text.encode("utf-8")
        path = self.root / relpath
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)
        self._hashes[relpath] = hashlib.sha256(data).hexdigest()

    def finalize(self) -> None:
        manifest = {
            "config_hash": self.config_hash,
            "seed": self.seed,
            "files": dict(sorted(self._hashes.items())),
        }
        path = self.root / "manifest.json"
        path.write_bytes((json.dumps(manifest, sort_keys=True, indent=2) + "\n").encode("utf-8"))


# ---------------------------------------------------------------------------
# Config loading and validation
# ---------------------------------------------------------------------------

# flag destination -> config key, applied over the file when the flag is set
_FLAG_OVERRIDES = {
    "ingest": [("input", "input"), ("format", "format"), ("max_tokens", "max_tokens")],
    "train": [("corpus", "corpus")],
    "eval": [("corpus", "corpus")],
    "crosstest": [],
    "search": [("corpus", "corpus")],
    "explain": [("corpus", "corpus"), ("kind", "kind")],
    "agree": [("annotations", "annotations"), ("expert", "expert")],
}


def _load_config(args: argparse.Namespace) -> dict:
    config: dict = {}
    if args.config is not None:
        try:
            with open(args.config, encoding="utf-8") as fh:
                config = json.load(fh)
        except OSError as exc:
            raise CliError("config", f"cannot read config file: {exc}")
        except json.JSONDecodeError as exc:
            raise CliError("config", f"config file is not valid JSON: {exc}")
        if not isinstance(config, dict):
            raise CliError("config", "config file must hold a JSON object")
    for dest, key in _FLAG_OVERRIDES[args.command]:
        value = getattr(args, dest)
        if value is not None:
            config[key] = value
    if args.seed is not None:
        config["seed"] = args.seed
    if args.jobs is not None:
        config["jobs"] = args.jobs
    config.setdefault("seed", 0)
    config.setdefault("jobs", 1)
    return config


def _validate_config(command: str, config: dict) -> None:
    try:
        jsonschema.validate(config, SCHEMAS[command])
    except jsonschema.ValidationError as exc:
        where = exc.json_path.removeprefix("$")
        location = f" at {where}" if where else ""
        raise CliError("config", f"invalid config{location}: {exc.message}")


def _config_hash(command: str, config: dict) -> str:
    blob = json.dumps({"command": command, "config": config}, sort_keys=True)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# Shared pieces
# ---------------------------------------------------------------------------


def _load_corpus(path: str) -> Corpus:
    try:
        return read_jsonl(path)
    except OSError as exc:
        raise CliError("input", f"cannot read corpus {path}: {exc}")
    except ValueError as exc:
        raise CliError("input", str(exc), **_line_detail(str(exc)))


def _line_detail(message: str) -> dict:
    found = re.search(r"line (\d+)", message)
    return {"line": int(found.group(1))} if found else {}


def _read_csv_corpus(path: str) -> Corpus:
    segments: list[Segment] = []
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or not {"id", "text"} <= set(reader.fieldnames):
                raise CliError("input", f"{path}: need columns id, text")
            for row in reader:
                raw = (row.get("label") or "").strip()
                if raw not in ("", "0", "1"):
                    raise CliError(
                        "input",
                        f"{path}: bad label at line {reader.line_num}",
                        line=reader.line_num,
                    )
                try:
                    segments.append(
                        Segment(
                            id=row["id"],
                            text=row["text"],
                            label=int(raw) if raw else None,
                            domain=(row.get("domain") or "unspecified"),
                            parent_id=(row.get("parent_id") or None),
                        )
                    )
                except ValueError as exc:
                    raise CliError(
                        "input",
                        f"{path}: bad record at line {reader.line_num}: {exc}",
                        line=reader.line_num,
                    )
    except OSError as exc:
        raise CliError("input", f"cannot read corpus {path}: {exc}")
    try:
        return Corpus(segments)
    except ValueError as exc:
        raise CliError("input", f"{path}: {exc}")


def _check_model_keys(spec: dict, extra_keys=()) -> None:
    model_type = spec["type"]
    allowed = _MODEL_KEYS[model_type]
    extras = (set(spec) | set(extra_keys)) - allowed - {"type"}
    if extras:
        names = ", ".join(sorted(extras))
        raise CliError("config", f"model type {model_type!r} does not accept: {names}")


def _train_with_report(spec: dict, corpus: Corpus, seed: int):
    _check_model_keys(spec)
    model_type = spec["type"]
    if model_type == "nb":
        return train_naive_bayes(
            corpus,
            alpha=spec.get("alpha", 1.0),
            use_counts=spec.get("use_counts", True),
        )
    if model_type == "logreg":
        return train_ngram_logreg(
            corpus,
            n_range=tuple(spec.get("n_range", (1, 2))),
            C=spec.get("C", 1.0),
            penalty=spec.get("penalty", "l2"),
            min_df=spec.get("min_df", 1),
            tol=spec.get("tol", 1e-6),
            max_iter=spec.get("max_iter", 2000),
        )
    return train_ffnn(
        corpus,
        hidden_dims=tuple(spec.get("hidden_dims", (50,))),
        lr=spec.get("lr", 0.1),
        epochs=spec.get("epochs", 10),
        batch_size=spec.get("batch_size", 32),
        seed=seed,
        min_df=spec.get("min_df", 1),
    )


def _trainer_from_spec(spec: dict):
    _check_model_keys(spec)

    def trainer(corpus: Corpus, seed: int):
        return _train_with_report(spec, corpus, seed)[0]

    return trainer


def _open_predictor(spec: dict, out_root: Path, seed: int, jobs: int):
    """Build a predictor from its config block.

    Returns the predictor and a close callback (a no-op except for
    bridge connections).
    """
    source = spec["source"]
    if source == "file":
        if "path" not in spec:
            raise CliError("config", "predictor source 'file' needs 'path'")
        try:
            model = load_model(spec["path"])
        except OSError as exc:
            raise CliError("input", f"cannot read model {spec['path']}: {exc}")
        except ValueError as exc:
            raise CliError("input", f"{spec['path']}: {exc}")
        return model, (lambda: None)
    if source == "api":
        missing = [key for key in ("endpoint", "model") if key not in spec]
        if missing:
            raise CliError(
                "config", f"predictor source 'api' needs: {', '.join(missing)}"
            )
        config = ApiPredictorConfig(
            endpoint=spec["endpoint"],
            model=spec["model"],
            auth_env=spec.get("auth_env", "TRACE_API_KEY"),
            timeout=spec.get("timeout", 30.0),
            max_retries=spec.get("max_retries", 3),
            backoff=spec.get("backoff", 0.5),
            seed=seed,
        )
        template = PromptTemplate()
        if "context" in spec:
            template = PromptTemplate(context=spec["context"])
        cache_dir = spec.get("cache_dir", str(out_root / "api_cache"))
        predictor = ApiPredictor(
            config, template=template, cache_dir=cache_dir, max_concurrency=jobs
        )
        return predictor, (lambda: None)
    # bridge
    try:
        if "command" in spec:
            if "host" in spec or "port" in spec:
                raise ValueError("give either 'command' or 'host'+'port', not both")
            endpoint = BridgeEndpoint(command=tuple(spec["command"]))
        else:
            if "host" not in spec or "port" not in spec:
                raise ValueError("predictor source 'bridge' needs 'command' or 'host'+'port'")
            endpoint = BridgeEndpoint(host=spec["host"], port=spec["port"])
    except ValueError as exc:
        raise CliError("config", str(exc))
    client = BridgeClient(endpoint)
    return as_predictor(client), client.close


def _single_run_report(scores: dict, dataset: str, model: str) -> MetricsReport:
    metrics = {
        name: MetricValue(mean=value, std_error=0.0, values=(value,))
        for name, value in scores.items()
    }
    return MetricsReport(dataset=dataset, model=model, metrics=metrics)


def _write_metrics(writer: ArtifactWriter, report: MetricsReport) -> None:
    writer.write_json("metrics.json", report.to_dict())
    rows = [
        [name, mv.mean, mv.std_error, mv.n_runs]
        for name, mv in sorted(report.metrics.items())
    ]
    writer.write_csv("metrics.csv", ["metric", "mean", "std_error", "n_runs"], rows)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_ingest(config: dict, writer: ArtifactWriter) -> None:
    fmt = config.get("format", "jsonl")
    if fmt == "jsonl":
        corpus = _load_corpus(config["input"])
    else:
        corpus = _read_csv_corpus(config["input"])
    max_tokens = config.get("max_tokens")
    if max_tokens is not None:
        corpus = segment_documents(corpus, max_tokens=max_tokens)
    write_jsonl(corpus, str(writer.root / "corpus.jsonl"))
    writer.adopt("corpus.jsonl")
    writer.write_json("stats.json", _corpus_stats(corpus))


def _corpus_stats(corpus: Corpus) -> dict:
    def block(segments: list[Segment]) -> dict:
        labeled = [seg for seg in segments if seg.label is not None]
        positive = sum(seg.label for seg in labeled)
        lengths = [len(tokenize(seg.text)) for seg in segments]
        return {
            "size": len(segments),
            "labeled": len(labeled),
            "positive": positive,
            "negative": len(labeled) - positive,
            "positive_rate": (positive / len(labeled)) if labeled else None,
            "mean_tokens": (sum(lengths) / len(lengths)) if lengths else 0.0,
        }

    domains = sorted({seg.domain for seg in corpus})
    return {
        **block(list(corpus)),
        "domains": {
            name: block([seg for seg in corpus if seg.domain == name])
            for name in domains
        },
    }


def cmd_train(config: dict, writer: ArtifactWriter) -> None:
    corpus = _load_corpus(config["corpus"])
    model, report = _train_with_report(config["model"], corpus, config["seed"])
    save_model(model, str(writer.root / "model.tkm"))
    writer.adopt("model.tkm")
    writer.write_json(
        "training.json",
        {
            "model": config["model"]["type"],
            "n_iter": report.n_iter,
            "converged": report.converged,
            "warnings": list(report.warnings),
            "final_loss": report.loss_history[-1] if report.loss_history else None,
            "loss_history": list(report.loss_history),
        },
    )


def cmd_eval(config: dict, writer: ArtifactWriter) -> None:
    corpus = _load_corpus(config["corpus"])
    dataset = config.get("dataset", Path(config["corpus"]).stem)
    has_model = "model" in config
    has_predictor = "predictor" in config
    if has_model == has_predictor:
        raise CliError("config", "eval needs exactly one of 'model' or 'predictor'")
    if has_model:
        cv = config.get("cross_validation", {})
        report = cross_validate(
            _trainer_from_spec(config["model"]),
            corpus,
            folds=cv.get("folds", 5),
            seed=config["seed"],
            mode=cv.get("mode", "shuffle"),
            test_fraction=cv.get("test_fraction", 0.2),
            dataset=dataset,
            model=config["model"]["type"],
            jobs=config["jobs"],
        )
    else:
        predictor, close = _open_predictor(
            config["predictor"], writer.root, config["seed"], config["jobs"]
        )
        try:
            scores = score_predictor(predictor, corpus)
        finally:
            close()
        report = _single_run_report(scores, dataset, config["predictor"]["source"])
    _write_metrics(writer, report)


def cmd_crosstest(config: dict, writer: ArtifactWriter) -> None:
    corpora = {name: _load_corpus(path) for name, path in sorted(config["domains"].items())}
    matrix = cross_domain(
        _trainer_from_spec(config["model"]),
        corpora,
        include_combined=config.get("include_combined", True),
        seed=config["seed"],
        runs=config.get("runs", 3),
        test_fraction=config.get("test_fraction", 0.2),
        model=config["model"]["type"],
        jobs=config["jobs"],
    )
    writer.write_json("matrix.json", matrix.to_dict())
    rows = [
        [
            row["train_domain"],
            row["test_domain"],
            row["metric"],
            row["mean"],
            row["std_error"],
            row["n_runs"],
        ]
        for row in matrix.as_rows()
    ]
    writer.write_csv(
        "matrix.csv",
        ["train_domain", "test_domain", "metric", "mean", "std_error", "n_runs"],
        rows,
    )


def _build_space(space_config: dict) -> SearchSpace:
    params = {}
    for name, domain in sorted(space_config["params"].items()):
        kind = domain["type"]
        if kind == "choice":
            if "values" not in domain:
                raise CliError("config", f"space parameter {name!r} needs 'values'")
            params[name] = Choice(tuple(domain["values"]))
        else:
            if "lo" not in domain or "hi" not in domain:
                raise CliError("config", f"space parameter {name!r} needs 'lo' and 'hi'")
            if kind == "int":
                params[name] = IntRange(int(domain["lo"]), int(domain["hi"]))
            else:
                params[name] = LogUniform(float(domain["lo"]), float(domain["hi"]))
    return SearchSpace(
        params=params,
        budget=space_config.get("budget", 50),
        objective=space_config.get("objective", "auroc"),
    )


def cmd_search(config: dict, writer: ArtifactWriter) -> None:
    corpus = _load_corpus(config["corpus"])
    base = config["model"]
    space = _build_space(config["space"])
    _check_model_keys(base, extra_keys=space.params.keys())

    def factory(params: dict):
        return _trainer_from_spec({**base, **params})

    result = hyperparameter_search(
        factory,
        space,
        corpus,
        seed=config["seed"],
        inner_test_fraction=config.get("inner_test_fraction", 0.25),
        jobs=config["jobs"],
    )
    writer.write_json(
        "search.json",
        {
            "objective": result.objective,
            "budget": space.budget,
            "best_index": result.best_index,
            "best_score": result.best_score,
            "best_params": result.best_params,
            "trials": [trial.to_dict() for trial in result.trials],
        },
    )
    writer.write_json("best.json", {"model": {**base, **result.best_params}})


def cmd_explain(config: dict, writer: ArtifactWriter) -> None:
    corpus = _load_corpus(config["corpus"])
    kind = config["kind"]
    predictor, close = _open_predictor(
        config["predictor"], writer.root, config["seed"], config["jobs"]
    )
    try:
        if kind == "shap":
            _explain_shap(predictor, corpus, config.get("shap", {}), writer, config["seed"])
        elif kind == "slalom":
            _explain_slalom(predictor, corpus, config.get("slalom", {}), writer, config["seed"])
        else:
            _explain_concepts(
                predictor, corpus, config.get("concepts", {}), writer, config["seed"]
            )
    finally:
        close()


def _explain_shap(predictor, corpus: Corpus, params: dict, writer, seed: int) -> None:
    method = params.get("method", "sampling")
    n_samples = params.get("n_samples", 2000)
    max_instances = params.get("max_instances", 5)
    chosen = [seg for seg in corpus if tokenize(seg.text)][:max_instances]
    if not chosen:
        raise CliError("input", "no instance in the corpus has any tokens")
    instances = []
    for i, seg in enumerate(chosen):
        if method == "exact":
            report = exact_shap(predictor, seg.text)
        else:
            report = shap_sample(predictor, seg.text, n_samples=n_samples, seed=seed)
        relpath = f"shap/instance_{i:03d}.json"
        writer.write_json(
            relpath,
            {"segment_id": seg.id, "residual": report.residual, **report.to_dict()},
        )
        tolerance = max(3.0 * math.sqrt(sum(se * se for se in report.std_errors)), 1e-9)
        instances.append(
            {
                "segment_id": seg.id,
                "file": relpath,
                "residual": report.residual,
                "efficiency_ok": bool(abs(report.residual) <= tolerance),
            }
        )
    writer.write_json(
        "summary.json", {"kind": "shap", "method": method, "instances": instances}
    )


def _explain_slalom(predictor, corpus: Corpus, params: dict, writer, seed: int) -> None:
    vocab = build_vocab(corpus, min_df=params.get("min_df", 1))
    fit_config = SlalomFitConfig(
        epochs=params.get("epochs", 80),
        lr=params.get("lr", 0.5),
        lr_decay=params.get("lr_decay", 0.95),
        batch_size=params.get("batch_size", 256),
    )
    model = fit_slalom(
        predictor,
        vocab.tokens,
        n_background=params.get("n_background", 100_000),
        seed=seed,
        config=fit_config,
    )
    writer.write_json(
        "slalom.json", {"vocab_size": len(model.fitted_vocab), **model.to_dict()}
    )
    rows = [
        [token, model.value[token], model.importance[token]]
        for token in model.fitted_vocab
    ]
    writer.write_csv("slalom.csv", ["token", "value", "importance"], rows)


def _explain_concepts(predictor, corpus: Corpus, params: dict, writer, seed: int) -> None:
    if not isinstance(predictor, LatentPredictor):
        raise CliError("config", "concept discovery needs a predictor that exposes latents")
    optimizer = None
    if any(key in params for key in ("epochs", "batch_size", "lr_schedule")):
        defaults = ConceptConfig()
        optimizer = ConceptConfig(
            epochs=params.get("epochs", defaults.epochs),
            batch_size=params.get("batch_size", defaults.batch_size),
            lr_schedule=tuple(params.get("lr_schedule", defaults.lr_schedule)),
        )
    concepts = discover_concepts(
        predictor,
        corpus,
        n_concepts=params.get("k", 10),
        snippet_length=params.get("snippet_length", 5),
        seed=seed,
        config=optimizer,
    )
    eval_corpus = corpus
    if "eval_corpus" in params:
        eval_corpus = _load_corpus(params["eval_corpus"])
    completeness = completeness_score(concepts, eval_corpus, predictor)
    top_m = params.get("top_m", 25)
    salient = salient_examples(concepts, predictor, eval_corpus, top_m=top_m)
    enriched = concepts.with_salient(salient)
    save_concepts(str(writer.root / "concepts.bin"), enriched)
    writer.adopt("concepts.bin")
    writer.write_json(
        "concepts.json",
        {
            "n_concepts": enriched.n_concepts,
            "snippet_length": enriched.snippet_length,
            "head_weights": [float(w) for w in enriched.head_weights],
            "head_bias": enriched.head_bias,
            "train_completeness": enriched.train_completeness,
            "completeness": completeness,
            "top_m": top_m,
        },
    )
    writer.write_json("salient.json", salient.to_dict())
    for index in range(enriched.n_concepts):
        writer.write_text(
            f"cards/concept_{index:02d}.txt", format_concept_card(index, enriched)
        )


def cmd_agree(config: dict, writer: ArtifactWriter) -> None:
    path = config["annotations"]
    try:
        annotations = AnnotationSet.from_csv(path)
    except OSError as exc:
        raise CliError("input", f"cannot read annotations {path}: {exc}")
    except ValueError as exc:
        raise CliError("input", str(exc), **_line_detail(str(exc)))
    alpha = krippendorff_alpha(annotations)
    majority, ties = majority_vote(annotations)
    payload: dict = {
        "alpha": alpha,
        "n_items": len(annotations.item_ids),
        "n_annotators": len(annotations.annotator_ids),
        "tie_count": int(sum(ties)),
    }
    if len(annotations.annotator_ids) == 2:
        pairs = [row for row in annotations.votes if None not in row]
        if pairs:
            payload["pairwise_kappa"] = cohens_kappa(
                [a for a, _ in pairs], [b for _, b in pairs]
            )
    expert_path = config.get("expert")
    if expert_path:
        expert_by_item = _read_expert_csv(expert_path)
        missing = [i for i in annotations.item_ids if i not in expert_by_item]
        if missing:
            raise CliError(
                "input", f"expert file is missing items: {', '.join(missing[:5])}"
            )
        expert = [expert_by_item[i] for i in annotations.item_ids]
        payload["expert_f1"] = expert_agreement(majority, expert)
        payload["expert_kappa"] = cohens_kappa(majority, expert)
    writer.write_json("agreement.json", payload)


def _read_expert_csv(path: str) -> dict[str, int]:
    labels: dict[str, int] = {}
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or not {"item_id", "label"} <= set(reader.fieldnames):
                raise CliError("input", f"{path}: need columns item_id, label")
            for row in reader:
                raw = (row.get("label") or "").strip()
                if raw not in ("0", "1"):
                    raise CliError(
                        "input",
                        f"{path}: bad label at line {reader.line_num}",
                        line=reader.line_num,
                    )
                labels[row["item_id"]] = int(raw)
    except OSError as exc:
        raise CliError("input", f"cannot read expert file {path}: {exc}")
    return labels


HANDLERS = {
    "ingest": cmd_ingest,
    "train": cmd_train,
    "eval": cmd_eval,
    "crosstest": cmd_crosstest,
    "search": cmd_search,
    "explain": cmd_explain,
    "agree": cmd_agree,
}


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tracekit",
        description="Train, evaluate, and explain binary text classifiers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, help="master seed (overrides config)")
        p.add_argument("--jobs", type=int, help="parallel worker cap (overrides config)")
        return p

    p = add("ingest", "normalize a corpus file and report stats")
    p.add_argument("--input", help="corpus file to ingest")
    p.add_argument("--format", choices=["jsonl", "csv"], help="input format")
    p.add_argument("--max-tokens", type=int, dest="max_tokens", help="split long documents")

    p = add("train", "fit a model on a corpus")
    p.add_argument("--corpus", help="training corpus (JSONL)")

    p = add("eval", "score a model or predictor on a corpus")
    p.add_argument("--corpus", help="evaluation corpus (JSONL)")

    add("crosstest", "train and test across domains")

    p = add("search", "random hyperparameter search")
    p.add_argument("--corpus", help="search corpus (JSONL)")

    p = add("explain", "explanation reports for a predictor")
    p.add_argument("--corpus", help="corpus to explain against (JSONL)")
    p.add_argument("--kind", choices=["shap", "slalom", "concepts"], help="report kind")

    p = add("agree", "annotator agreement report")
    p.add_argument("--annotations", help="long-form votes CSV")
    p.add_argument("--expert", help="expert labels CSV")

    return parser


def _emit_error(kind: str, message: str, details: dict | None = None) -> None:
    payload = {"error": kind, "message": message}
    payload.update(details or {})
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = _load_config(args)
        _validate_config(args.command, config)
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        writer = ArtifactWriter(out_dir, _config_hash(args.command, config), config["seed"])
        HANDLERS[args.command](config, writer)
        writer.finalize()
    except CliError as exc:
        _emit_error(exc.kind, exc.message, exc.details)
        return exc.exit_code
    except ValueError as exc:
        _emit_error("input", str(exc), _line_detail(str(exc)))
        return EXIT_USAGE
    except RuntimeError as exc:
        _emit_error("runtime", str(exc))
        return EXIT_RUNTIME
    except OSError as exc:
        _emit_error("runtime", str(exc))
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
