import argparse
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import pandas as pd

from crosschv.alignment import (
    align,
    load_anchors,
    report_anchors,
    save_alignment,
    subsample_anchors,
)
from crosschv.analysis.data import (
    compare_methods,
    compare_runs,
    paired_first_ranks,
    rank_frame,
    report_frame,
    threshold_sweep,
    translation_precision_at_k,
)
from crosschv.analysis.evaluation import evaluate, load_ground_truth, random_baseline_mrr, wilcoxon_signed_rank
from crosschv.datamodel import (
    BilingualSpace,
    EmbeddingSpace,
    Query,
    TaggedWord,
    TokenizedCorpus,
    TokenizerConfig,
    TrainConfig,
)
from crosschv.embeddings.skipgram import normalize, train
from crosschv.embeddings.space import load_space, save_space
from crosschv.errors import ConfigError, CrossChvError, OutOfVocabularyError
from crosschv.expansion.retrieval import (
    DEFAULT_DELTA_GRID,
    DEFAULT_K,
    DEFAULT_KNN_GRID,
    DEFAULT_MAX_K,
    calibrate_dynamic_threshold,
    load_policy,
    load_queries,
    save_policy,
)
from crosschv.expansion.strategies import (
    DynamicThresholdStrategy,
    ExpansionStrategy,
    KnnStrategy,
    ThresholdStrategy,
    modularity_frame,
    read_expansion,
    write_expansion,
    write_rejects,
)
from crosschv.logger import RunLogger, configure_logging
from crosschv.text_pipeline import (
    DEFAULT_DELTA,
    DEFAULT_PASSES,
    DEFAULT_THRESHOLD,
    apply_phrases,
    default_english_stopwords,
    learn_phrases,
    load_phrase_model,
    load_stopwords,
    load_user_dictionary,
    read_documents,
    save_phrase_model,
    tokenize,
)

logger = logging.getLogger(__name__)

POSITIVE_PARAMS = [
    "dim",
    "window",
    "negatives",
    "min_count",
    "epochs",
    "workers",
    "passes",
    "k",
    "max_k",
    "n_groups",
    "anchor_sample",
    "precision_k",
]

# Flags that hold paths rather than parameters
INPUT_FLAGS = [
    "corpus",
    "stopwords",
    "user_dictionary",
    "phrases",
    "source",
    "target",
    "anchors",
    "held_out",
    "space",
    "queries",
    "policy",
    "truth",
    "expansion",
]
OUTPUT_FLAGS = ["output", "output_space", "apply_output", "sweep_output", "ranks_output"]
INTERNAL_FLAGS = ["func", "command", "verbose", "quiet", "seed", "runs"]


@dataclass(frozen=True)
class RunConfig:
    command: str
    inputs: dict[str, Path]
    outputs: dict[str, Path]
    params: dict[str, Any]
    seed: int
    runs: dict[str, Path] = field(default_factory=dict)

    @classmethod
    def from_namespace(cls, args: argparse.Namespace) -> "RunConfig":
        values = vars(args)
        skipped = INPUT_FLAGS + OUTPUT_FLAGS + INTERNAL_FLAGS

        runs = {}
        for name, path in values.get("runs") or []:
            if name in runs:
                raise ConfigError(f"Run name '{name}' is given twice")

            runs[name] = path

        config = cls(
            command=args.command,
            inputs={name: values[name] for name in INPUT_FLAGS if values.get(name) is not None},
            outputs={name: values[name] for name in OUTPUT_FLAGS if values.get(name) is not None},
            params={name: value for name, value in values.items() if name not in skipped},
            seed=args.seed,
            runs=runs,
        )

        config.validate()
        return config

    def validate(self) -> None:
        for name, path in [*self.inputs.items(), *self.runs.items()]:
            if not path.is_file():
                raise ConfigError(f"Input file {path} (--{name.replace('_', '-')}) does not exist")

        for path in self.outputs.values():
            if not path.parent.is_dir():
                raise ConfigError(f"Output directory {path.parent} does not exist")

        for name in POSITIVE_PARAMS:
            value = self.params.get(name)
            if value is not None and value < 1:
                raise ConfigError(f"--{name.replace('_', '-')} must be >= 1, got {value}")

        delta = self.params.get("delta")
        if self.command != "phrases" and delta is not None and not -1.0 <= delta <= 1.0:
            raise ConfigError(f"--delta must lie in [-1, 1], got {delta}")

        for name in ["delta_grid", "knn_grid"]:
            if name in self.params and len(self.params[name]) == 0:
                raise ConfigError(f"--{name.replace('_', '-')} must not be empty")

        for value in self.params.get("knn_grid", []):
            if value < 1:
                raise ConfigError(f"--knn-grid values must be >= 1, got {value}")

        for value in self.params.get("delta_grid", []):
            if not -1.0 <= value <= 1.0:
                raise ConfigError(f"--delta-grid values must lie in [-1, 1], got {value}")

        if self.command == "expand":
            method = self.params["method"]
            if method == "threshold" and delta is None:
                raise ConfigError("--method threshold requires --delta")

            if method == "dynamic" and "policy" not in self.inputs:
                raise ConfigError("--method dynamic requires --policy")

        if self.command == "eval":
            self._validate_eval()

        if self.command in ("train", "phrases"):
            self.tokenizer_config(frozenset())

        if self.command == "train":
            self.train_config()

    def _validate_eval(self) -> None:
        mode = self.params["mode"]
        required = {"ranked": ["expansion"], "grid": ["space", "queries"]}.get(mode, [])

        for name in required:
            if name not in self.inputs:
                raise ConfigError(f"eval --mode {mode} requires --{name}")

        if mode == "compare" and len(self.runs) == 0:
            raise ConfigError("eval --mode compare requires at least one --run NAME=PATH")

        if mode == "significance" and len(self.runs) != 2:
            raise ConfigError(f"eval --mode significance requires exactly two --run NAME=PATH, got {len(self.runs)}")

    def tokenizer_config(
        self, stopwords: frozenset[str], user_dictionary: tuple[tuple[str, ...], ...] = ()
    ) -> TokenizerConfig:
        return TokenizerConfig(
            language_tag=self.params["language"],
            mode=self.params["mode"],
            stopwords=stopwords,
            lowercase=not self.params["keep_case"],
            user_dictionary=user_dictionary,
            joiner=self.params.get("joiner", "_"),
            workers=self.params["workers"],
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            dim=self.params["dim"],
            window=self.params["window"],
            negatives=self.params["negatives"],
            min_count=self.params["min_count"],
            epochs=self.params["epochs"],
            initial_lr=self.params["lr"],
            subsample_t=self.params["subsample"],
            seed=self.seed,
            workers=self.params["workers"],
        )


def _float_list(value: str) -> list[float]:
    try:
        return [float(item) for item in value.split(",") if item.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{value}'")


def _int_list(value: str) -> list[int]:
    try:
        return [int(item) for item in value.split(",") if item.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{value}'")


def _named_path(value: str) -> tuple[str, Path]:
    name, separator, path = value.partition("=")
    if separator == "" or name == "" or path == "":
        raise argparse.ArgumentTypeError(f"expected NAME=PATH, got '{value}'")

    return name, Path(path)


def _rejects_path(output: Path) -> Path:
    return output.with_suffix(".rejects.tsv")


def _write_table(frame: pd.DataFrame, path: Path | None) -> None:
    if path is None:
        print(frame.to_string(index=False))
    else:
        frame.to_csv(path, sep="\t", index=False, lineterminator="\n")


def _load_corpus(config: RunConfig, run_logger: RunLogger) -> TokenizedCorpus:
    stopwords = frozenset[str]()
    if "stopwords" in config.inputs:
        stopwords |= load_stopwords(config.inputs["stopwords"])

    if config.params["english_stopwords"]:
        stopwords |= default_english_stopwords()

    entries: tuple[tuple[str, ...], ...] = ()
    if "user_dictionary" in config.inputs:
        entries = load_user_dictionary(config.inputs["user_dictionary"])

    tokenizer = config.tokenizer_config(stopwords, entries)

    corpus = tokenize(read_documents(config.inputs["corpus"]), tokenizer)
    run_logger.print(f"{len(corpus)} documents, {corpus.total_tokens} tokens, {len(corpus.token_counts)} types")
    return corpus


def cmd_train(config: RunConfig, run_logger: RunLogger) -> dict[str, str]:
    train_config = config.train_config()
    corpus = _load_corpus(config, run_logger)

    if "phrases" in config.inputs:
        corpus = apply_phrases(corpus, load_phrase_model(config.inputs["phrases"]))
    elif config.params["learn_phrases"]:
        model = learn_phrases(corpus, config.params["phrase_delta"], config.params["phrase_threshold"])
        run_logger.print(f"{len(model)} phrases learned")
        corpus = apply_phrases(corpus, model)

    space = normalize(train(corpus, train_config))
    save_space(space, config.outputs["output"])

    run_logger.print(f"{len(space)} words, d={space.dim}")
    return {"space": str(config.outputs["output"])}


def cmd_phrases(config: RunConfig, run_logger: RunLogger) -> dict[str, str]:
    corpus = _load_corpus(config, run_logger)

    model = learn_phrases(
        corpus,
        config.params["delta"],
        config.params["threshold"],
        config.params["passes"],
        config.params["joiner"],
    )
    save_phrase_model(model, config.outputs["output"])
    run_logger.print(f"{len(model)} phrases")

    artifacts = {"phrases": str(config.outputs["output"])}

    if "apply_output" in config.outputs:
        phrased = apply_phrases(corpus, model)
        with open(config.outputs["apply_output"], "w", encoding="utf-8", newline="\n") as file:
            for document in phrased.documents:
                file.write(" ".join(document) + "\n")

        artifacts["corpus"] = str(config.outputs["apply_output"])

    return artifacts


def _load_monolingual(path: Path, language: str | None) -> EmbeddingSpace:
    space = load_space(path, "word2vec", language)
    assert isinstance(space, EmbeddingSpace)
    return normalize(space)


def _load_bilingual(path: Path) -> BilingualSpace:
    space = load_space(path, "bilingual")
    assert isinstance(space, BilingualSpace)
    return space


def cmd_align(config: RunConfig, run_logger: RunLogger) -> dict[str, str]:
    source = _load_monolingual(config.inputs["source"], config.params["source_language"])
    target = _load_monolingual(config.inputs["target"], config.params["target_language"])

    anchors = load_anchors(config.inputs["anchors"])
    if config.params["anchor_sample"] is not None:
        anchors = subsample_anchors(anchors, config.params["anchor_sample"], config.seed)

    artifacts = {}

    report = report_anchors(anchors, source, target)
    run_logger.print(f"{len(report.kept)} of {report.total} anchors kept")

    if len(report.dropped) > 0:
        rejects = _rejects_path(config.outputs["output"])
        write_rejects([(a, b, reason) for (a, b), reason in report.dropped], rejects, ["source", "target", "reason"])
        artifacts["rejects"] = str(rejects)

    _, alignment, bilingual = align(source, target, anchors)

    save_alignment(alignment, config.outputs["output"])
    save_space(bilingual, config.outputs["output_space"])

    artifacts["matrix"] = str(config.outputs["output"])
    artifacts["space"] = str(config.outputs["output_space"])

    if "held_out" in config.inputs:
        held_out = load_anchors(config.inputs["held_out"])
        k = config.params["precision_k"]
        precision = translation_precision_at_k(bilingual, held_out, k, source.language_tag)
        run_logger.print(f"held-out precision@{k} {precision:.4f}")

    return artifacts


def _split_resolvable(
    space: BilingualSpace, queries: Sequence[Query]
) -> tuple[list[Query], list[tuple[TaggedWord, str]]]:
    resolvable = []
    rejects = []
    for query in queries:
        try:
            space.row(query.word, query.language_tag)
            resolvable.append(query)
        except OutOfVocabularyError as e:
            logger.warning("skipping query %s: %s", query.key, e)
            rejects.append((query.key, str(e)))

    return resolvable, rejects


def _finish_rejects(
    rejects: Sequence[tuple[TaggedWord, str]], output: Path, artifacts: dict[str, str], run_logger: RunLogger
) -> None:
    if len(rejects) == 0:
        return

    path = _rejects_path(output)
    write_rejects(rejects, path)

    artifacts["rejects"] = str(path)
    run_logger.print(f"{len(rejects)} queries rejected")


def cmd_expand(config: RunConfig, run_logger: RunLogger) -> dict[str, str]:
    space = _load_bilingual(config.inputs["space"])
    queries = load_queries(config.inputs["queries"], config.params["target_language"])

    method = config.params["method"]
    max_k = config.params["max_k"]

    strategy: ExpansionStrategy
    if method == "knn":
        strategy = KnnStrategy(space, config.params["k"])
    elif method == "threshold":
        strategy = ThresholdStrategy(space, config.params["delta"], max_k)
    else:
        strategy = DynamicThresholdStrategy(space, load_policy(config.inputs["policy"]), max_k)

    result = strategy.run(queries)
    write_expansion(result, config.outputs["output"])

    run_logger.print(strategy.describe())
    run_logger.print(f"{len(result.ranked)} queries expanded, {result.retrieved_count} candidates")

    artifacts = {"expansion": str(config.outputs["output"])}
    _finish_rejects(result.rejects, config.outputs["output"], artifacts, run_logger)
    return artifacts


def cmd_modularity(config: RunConfig, run_logger: RunLogger) -> dict[str, str]:
    space = _load_bilingual(config.inputs["space"])
    queries = load_queries(config.inputs["queries"])

    frame, rejects = modularity_frame(space, queries, config.params["k"])
    frame.to_csv(config.outputs["output"], sep="\t", index=False, lineterminator="\n")

    artifacts = {"modularity": str(config.outputs["output"])}
    _finish_rejects(rejects, config.outputs["output"], artifacts, run_logger)
    return artifacts


def cmd_calibrate(config: RunConfig, run_logger: RunLogger) -> dict[str, str]:
    space = _load_bilingual(config.inputs["space"])
    truth = load_ground_truth(config.inputs["truth"])
    queries = load_queries(config.inputs["queries"], config.params["target_language"])
    queries, rejects = _split_resolvable(space, queries)

    policy = calibrate_dynamic_threshold(
        space,
        queries,
        truth,
        config.params["n_groups"],
        config.params["k"],
        config.params["delta_grid"],
        config.params["max_k"],
    )
    save_policy(policy, config.outputs["output"])
    run_logger.print(policy)

    artifacts = {"policy": str(config.outputs["output"])}

    if "sweep_output" in config.outputs:
        sweep = threshold_sweep(
            space,
            queries,
            truth,
            config.params["n_groups"],
            config.params["k"],
            config.params["delta_grid"],
            config.params["max_k"],
        )
        sweep.to_csv(config.outputs["sweep_output"], index=False, lineterminator="\n")
        artifacts["sweep"] = str(config.outputs["sweep_output"])

    _finish_rejects(rejects, config.outputs["output"], artifacts, run_logger)
    return artifacts


def _ranked_lists(path: Path, queries: Sequence[Query] | None) -> dict[TaggedWord, list[TaggedWord]]:
    ranked = read_expansion(path)
    if queries is None:
        return ranked

    # Queries without any retrieved candidate still count, with an empty list
    return {query.key: ranked.get(query.key, []) for query in queries} | ranked


def _eval_ranked(config: RunConfig, queries: list[Query] | None, run_logger: RunLogger) -> dict[str, str]:
    truth = load_ground_truth(config.inputs["truth"])
    ranked = _ranked_lists(config.inputs["expansion"], queries)

    report = evaluate(ranked, truth)
    baseline = random_baseline_mrr(truth, ranked.keys())
    _write_table(report_frame(report, baseline), config.outputs.get("output"))

    run_logger.print(f"MRR {report.mrr:.5f}, F1 {report.f1:.5f}, random baseline {baseline:.5f}")

    artifacts = {}
    if "output" in config.outputs:
        artifacts["report"] = str(config.outputs["output"])

    if "ranks_output" in config.outputs:
        rank_frame(report, config.params["max_k"]).to_csv(config.outputs["ranks_output"], index=False)
        artifacts["ranks"] = str(config.outputs["ranks_output"])

    return artifacts


def _eval_compare(config: RunConfig, queries: list[Query] | None, run_logger: RunLogger) -> dict[str, str]:
    truth = load_ground_truth(config.inputs["truth"])
    runs = {name: _ranked_lists(path, queries) for name, path in config.runs.items()}

    frame = compare_runs(runs, truth)
    _write_table(frame, config.outputs.get("output"))
    run_logger.print(frame.to_dict(orient="records"))

    return {"table": str(config.outputs["output"])} if "output" in config.outputs else {}


def _eval_grid(config: RunConfig, queries: list[Query] | None, run_logger: RunLogger) -> dict[str, str]:
    assert queries is not None

    space = _load_bilingual(config.inputs["space"])
    truth = load_ground_truth(config.inputs["truth"])
    queries, _ = _split_resolvable(space, queries)

    params = config.params
    if "policy" in config.inputs:
        policy = load_policy(config.inputs["policy"])
    else:
        policy = calibrate_dynamic_threshold(
            space, queries, truth, params["n_groups"], params["k"], params["delta_grid"], params["max_k"]
        )

    frame = compare_methods(space, queries, truth, params["knn_grid"], params["delta_grid"], policy, params["max_k"])
    _write_table(frame, config.outputs.get("output"))
    run_logger.print(frame.attrs["settings"])

    artifacts = {}
    if "output" in config.outputs:
        artifacts["table"] = str(config.outputs["output"])

    if "sweep_output" in config.outputs:
        sweep = threshold_sweep(
            space, queries, truth, policy.n_groups, policy.k, params["delta_grid"], params["max_k"]
        )
        sweep.to_csv(config.outputs["sweep_output"], index=False, lineterminator="\n")
        artifacts["sweep"] = str(config.outputs["sweep_output"])

    return artifacts


def _eval_significance(config: RunConfig, queries: list[Query] | None, run_logger: RunLogger) -> dict[str, str]:
    truth = load_ground_truth(config.inputs["truth"])
    (name_a, path_a), (name_b, path_b) = config.runs.items()

    ranks = paired_first_ranks(_ranked_lists(path_a, queries), _ranked_lists(path_b, queries), truth)
    result = wilcoxon_signed_rank(ranks["rank_a"], ranks["rank_b"], correction=not config.params["no_continuity"])

    frame = pd.DataFrame(
        [
            ("run_a", name_a),
            ("run_b", name_b),
            ("pairs", len(ranks)),
            ("non_zero_pairs", result.n),
            (f"mean_rank_{name_a}", float(ranks["rank_a"].mean())),
            (f"mean_rank_{name_b}", float(ranks["rank_b"].mean())),
            ("statistic", result.statistic),
            ("method", "exact" if result.exact else "normal"),
            ("z", result.z),
            ("p_value", result.p_value),
        ],
        columns=["metric", "value"],
    )
    _write_table(frame, config.outputs.get("output"))
    run_logger.print(f"W={result.statistic}, p={result.p_value:.6f}")

    return {"report": str(config.outputs["output"])} if "output" in config.outputs else {}


EVAL_MODES: dict[str, Callable[[RunConfig, list[Query] | None, RunLogger], dict[str, str]]] = {
    "ranked": _eval_ranked,
    "compare": _eval_compare,
    "grid": _eval_grid,
    "significance": _eval_significance,
}


def cmd_eval(config: RunConfig, run_logger: RunLogger) -> dict[str, str]:
    queries = None
    if "queries" in config.inputs:
        queries = load_queries(config.inputs["queries"], config.params["target_language"])

    return EVAL_MODES[config.params["mode"]](config, queries, run_logger)


def _add_tokenizer_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--corpus", type=Path, required=True, help="UTF-8 corpus, one document per line")
    parser.add_argument("--language", default="en", help="language tag of the corpus")
    parser.add_argument("--mode", choices=["whitespace", "pretokenized"], default="whitespace", help="tokenizer mode")
    parser.add_argument("--keep-case", action="store_true", help="do not lowercase in whitespace mode")
    parser.add_argument("--stopwords", type=Path, help="stopword file, one token per line")
    parser.add_argument("--english-stopwords", action="store_true", help="also drop the shipped English stopwords")
    parser.add_argument("--user-dictionary", type=Path, help="multiword entries to merge, one per line")
    parser.add_argument("--workers", type=int, default=1, help="parallel workers")


def _add_query_arguments(parser: argparse.ArgumentParser, required: bool = True) -> None:
    parser.add_argument("--queries", type=Path, required=required, help="query file, one language_tag:word per line")
    parser.add_argument(
        "--target-language",
        help="candidate language (default: the language other than the query's)",
    )


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=1, help="seed for every randomized step")
    common.add_argument("-v", "--verbose", action="count", default=0, help="more logging, repeatable")
    common.add_argument("-q", "--quiet", action="count", default=0, help="less logging, repeatable")

    parser = argparse.ArgumentParser(
        prog="crosschv",
        description="Cross-lingual health vocabulary expansion over aligned word embedding spaces",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    def add_command(name: str, func: Callable, summary: str) -> argparse.ArgumentParser:
        subparser = subparsers.add_parser(
            name, parents=[common], help=summary, formatter_class=argparse.ArgumentDefaultsHelpFormatter
        )
        subparser.set_defaults(func=func)
        return subparser

    train_parser = add_command("train", cmd_train, "tokenize a corpus and train a normalized skip-gram space")
    _add_tokenizer_arguments(train_parser)
    train_parser.add_argument("--output", type=Path, required=True, help="space file in word2vec text format")
    train_parser.add_argument("--phrases", type=Path, help="phrase model to apply before training")
    train_parser.add_argument("--learn-phrases", action="store_true", help="learn and apply phrases before training")
    train_parser.add_argument("--phrase-delta", type=float, default=DEFAULT_DELTA, help="phrase count discount")
    train_parser.add_argument("--phrase-threshold", type=float, default=DEFAULT_THRESHOLD, help="phrase threshold")
    train_parser.add_argument("--dim", type=int, default=100, help="embedding dimensionality")
    train_parser.add_argument("--window", type=int, default=5, help="maximum context offset")
    train_parser.add_argument("--negatives", type=int, default=5, help="negative samples per positive")
    train_parser.add_argument("--min-count", type=int, default=5, help="vocabulary frequency floor")
    train_parser.add_argument("--epochs", type=int, default=5, help="passes over the corpus")
    train_parser.add_argument("--lr", type=float, default=0.025, help="initial learning rate")
    train_parser.add_argument("--subsample", type=float, default=1e-3, help="subsampling threshold, 0 disables")

    phrases_parser = add_command("phrases", cmd_phrases, "learn multiword phrases from a corpus")
    _add_tokenizer_arguments(phrases_parser)
    phrases_parser.add_argument("--output", type=Path, required=True, help="phrase model TSV")
    phrases_parser.add_argument("--apply-output", type=Path, help="also write the phrased corpus here")
    phrases_parser.add_argument("--delta", type=float, default=DEFAULT_DELTA, help="count discount")
    phrases_parser.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD, help="minimum phrase score")
    phrases_parser.add_argument("--passes", type=int, default=DEFAULT_PASSES, help="phrase passes")
    phrases_parser.add_argument("--joiner", default="_", help="separator inside merged tokens")

    align_parser = add_command("align", cmd_align, "align two spaces with orthogonal Procrustes over anchors")
    align_parser.add_argument("--source", type=Path, required=True, help="source space, mapped onto the target")
    align_parser.add_argument("--target", type=Path, required=True, help="target space")
    align_parser.add_argument("--source-language", help="source language tag (default: from the space metadata)")
    align_parser.add_argument("--target-language", help="target language tag (default: from the space metadata)")
    align_parser.add_argument("--anchors", type=Path, required=True, help="anchor TSV, source_word<TAB>target_word")
    align_parser.add_argument("--anchor-sample", type=int, help="use a random subset of this many anchors")
    align_parser.add_argument("--held-out", type=Path, help="held-out anchor TSV to report precision@k on")
    align_parser.add_argument("--precision-k", type=int, default=1, help="k for the held-out precision")
    align_parser.add_argument("--output", type=Path, required=True, help="alignment matrix file")
    align_parser.add_argument("--output-space", type=Path, required=True, help="bilingual space file")

    expand_parser = add_command("expand", cmd_expand, "expand queries into cross-lingual candidates")
    expand_parser.add_argument("--space", type=Path, required=True, help="bilingual space")
    _add_query_arguments(expand_parser)
    expand_parser.add_argument("--method", choices=["knn", "threshold", "dynamic"], default="knn", help="retrieval")
    expand_parser.add_argument("--k", type=int, default=DEFAULT_K, help="neighbors for --method knn")
    expand_parser.add_argument("--delta", type=float, help="similarity threshold for --method threshold")
    expand_parser.add_argument("--policy", type=Path, help="calibrated policy for --method dynamic")
    expand_parser.add_argument("--max-k", type=int, default=DEFAULT_MAX_K, help="candidate window for thresholds")
    expand_parser.add_argument("--output", type=Path, required=True, help="expansion TSV")

    modularity_parser = add_command("modularity", cmd_modularity, "score queries by neighborhood modularity")
    modularity_parser.add_argument("--space", type=Path, required=True, help="bilingual space")
    modularity_parser.add_argument("--queries", type=Path, required=True, help="query file")
    modularity_parser.add_argument("--k", type=int, default=DEFAULT_K, help="neighbors per language")
    modularity_parser.add_argument("--output", type=Path, required=True, help="modularity TSV")

    calibrate_parser = add_command("calibrate", cmd_calibrate, "calibrate a dynamic threshold policy")
    calibrate_parser.add_argument("--space", type=Path, required=True, help="bilingual space")
    _add_query_arguments(calibrate_parser)
    calibrate_parser.add_argument("--truth", type=Path, required=True, help="ground truth TSV")
    calibrate_parser.add_argument("--n-groups", type=int, default=4, help="modularity quantile groups")
    calibrate_parser.add_argument("--k", type=int, default=DEFAULT_K, help="neighbors per language for modularity")
    calibrate_parser.add_argument(
        "--delta-grid", type=_float_list, default=list(DEFAULT_DELTA_GRID), help="comma-separated deltas"
    )
    calibrate_parser.add_argument("--max-k", type=int, default=DEFAULT_MAX_K, help="candidate window")
    calibrate_parser.add_argument("--output", type=Path, required=True, help="policy TSV")
    calibrate_parser.add_argument("--sweep-output", type=Path, help="per-group threshold sweep CSV")

    eval_parser = add_command("eval", cmd_eval, "evaluate expansion runs against ground truth")
    eval_parser.add_argument(
        "--mode", choices=list(EVAL_MODES), default="ranked", help="ranked, compare, grid or significance"
    )
    eval_parser.add_argument("--truth", type=Path, required=True, help="ground truth TSV")
    eval_parser.add_argument("--expansion", type=Path, help="expansion TSV for --mode ranked")
    eval_parser.add_argument(
        "--run", dest="runs", type=_named_path, action="append", help="NAME=PATH expansion run, repeatable"
    )
    _add_query_arguments(eval_parser, required=False)
    eval_parser.add_argument("--space", type=Path, help="bilingual space for --mode grid")
    eval_parser.add_argument("--policy", type=Path, help="policy for --mode grid (default: calibrate one)")
    eval_parser.add_argument(
        "--knn-grid", type=_int_list, default=list(DEFAULT_KNN_GRID), help="comma-separated k values"
    )
    eval_parser.add_argument(
        "--delta-grid", type=_float_list, default=list(DEFAULT_DELTA_GRID), help="comma-separated deltas"
    )
    eval_parser.add_argument("--n-groups", type=int, default=4, help="groups when calibrating for --mode grid")
    eval_parser.add_argument("--k", type=int, default=DEFAULT_K, help="modularity neighbors for --mode grid")
    eval_parser.add_argument("--max-k", type=int, default=DEFAULT_MAX_K, help="candidate window and rank histogram")
    eval_parser.add_argument("--no-continuity", action="store_true", help="drop the continuity correction")
    eval_parser.add_argument("--output", type=Path, help="report TSV (default: print a table)")
    eval_parser.add_argument("--ranks-output", type=Path, help="rank distribution CSV for --mode ranked")
    eval_parser.add_argument("--sweep-output", type=Path, help="threshold sweep CSV for --mode grid")

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    configure_logging(args.verbose - args.quiet)
    run_logger = RunLogger()

    config = None
    try:
        config = RunConfig.from_namespace(args)
        artifacts = args.func(config, run_logger)
    except (CrossChvError, OSError, ValueError) as e:
        print(f"crosschv {args.command}: error: {e}", file=sys.stderr)
        run_logger.flush(args.command, config, {}, 1)
        return 1

    run_logger.flush(args.command, config, artifacts, 0)
    return 0
