"""Skip-gram word embeddings trained with negative sampling.

Training follows the classic recipe: a vocabulary floor (``min_count``), frequent-word
subsampling, a per-center reduced window drawn uniformly from ``[1, window]``, negatives
drawn from the unigram distribution raised to 0.75, and a learning rate that decays
linearly from ``initial_lr`` to ``initial_lr / 10000`` over all training tokens.

Updates are applied per document: the gradients of every (center, context) pair of a
document are computed against the current parameters and added in one scatter step.
With ``workers > 1`` shards of the corpus update the shared matrices without locks, so
only single-worker runs are reproducible.
"""

import logging
import threading
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.special import expit

from crosschv.datamodel import EmbeddingSpace, TokenizedCorpus, TrainConfig, Word
from crosschv.errors import TrainingError, ZeroNormError

logger = logging.getLogger(__name__)

NEGATIVE_SAMPLING_POWER = 0.75


def negative_sampling_loss(center: np.ndarray, context: np.ndarray, negatives: np.ndarray) -> float:
    """Loss of one (center, context, negatives) step: -log s(c.o) - sum log s(-c.n)."""
    positive = np.log(expit(center @ context))
    negative = np.sum(np.log(expit(-(negatives @ center))))
    return float(-(positive + negative))


def negative_sampling_gradients(
    center: np.ndarray, context: np.ndarray, negatives: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of :func:`negative_sampling_loss` w.r.t. the center, context and negative vectors."""
    targets = np.vstack([context[None, :], negatives])
    labels = np.zeros(len(targets))
    labels[0] = 1.0

    coefficients = _coefficients(center[None, :], targets[None, :, :], labels[None, :])[0]

    # The trainer ascends along the coefficients, the loss gradient is their negation
    grad_center = -(coefficients @ targets)
    grad_targets = -coefficients[:, None] * center[None, :]
    return grad_center, grad_targets[0], grad_targets[1:]


def _coefficients(centers: np.ndarray, targets: np.ndarray, labels: np.ndarray) -> np.ndarray:
    scores = np.einsum("pd,pkd->pk", centers, targets)
    return labels - expit(scores)


class _Vocabulary:
    def __init__(self, corpus: TokenizedCorpus, config: TrainConfig) -> None:
        kept = [(word, count) for word, count in corpus.token_counts.items() if count >= config.min_count]
        if len(kept) == 0:
            raise TrainingError(
                f"No {corpus.language_tag} token occurs at least min_count={config.min_count} times, "
                f"the vocabulary is empty"
            )

        kept.sort(key=lambda item: (-item[1], item[0]))

        self.words: list[Word] = [word for word, _ in kept]
        self.ids = {word: i for i, word in enumerate(self.words)}
        self.counts = np.array([count for _, count in kept], dtype=np.float64)

        self.total = float(self.counts.sum())

        weights = self.counts**NEGATIVE_SAMPLING_POWER
        self.noise_cdf = np.cumsum(weights / weights.sum())
        self.noise_cdf[-1] = 1.0

        if config.subsample_t > 0:
            threshold_count = config.subsample_t * self.total
            keep = (np.sqrt(self.counts / threshold_count) + 1) * threshold_count / self.counts
            self.keep_probability = np.minimum(keep, 1.0)
        else:
            self.keep_probability = np.ones(len(self.words))

    def __len__(self) -> int:
        return len(self.words)


class SkipGramTrainer:
    def __init__(self, corpus: TokenizedCorpus, config: TrainConfig) -> None:
        if corpus.total_tokens == 0:
            raise TrainingError(f"Cannot train on the empty {corpus.language_tag} corpus")

        self.corpus = corpus
        self.config = config
        self.vocab = _Vocabulary(corpus, config)

        rng = np.random.default_rng(config.seed)
        self.input_vectors = (rng.random((len(self.vocab), config.dim)) - 0.5) / config.dim
        self.output_vectors = np.zeros((len(self.vocab), config.dim))

        self.documents = [
            np.array([self.vocab.ids[token] for token in document if token in self.vocab.ids], dtype=np.int64)
            for document in corpus.documents
        ]

        self.total_tokens = config.epochs * sum(len(document) for document in self.documents)
        self.processed_tokens = 0
        self.lock = threading.Lock()

    def learning_rate(self) -> float:
        progress = min(self.processed_tokens / max(self.total_tokens, 1), 1.0)
        return self.config.initial_lr - (self.config.initial_lr - self.config.min_lr) * progress

    def train(self) -> EmbeddingSpace:
        logger.info(
            "training skip-gram on %i %s documents, vocabulary %i, dim %i, %i epochs",
            len(self.documents),
            self.corpus.language_tag,
            len(self.vocab),
            self.config.dim,
            self.config.epochs,
        )

        for epoch in range(self.config.epochs):
            if self.config.workers == 1:
                self.train_shard(self.documents, np.random.default_rng([self.config.seed, epoch]))
            else:
                shards = [self.documents[i :: self.config.workers] for i in range(self.config.workers)]
                with ThreadPoolExecutor(max_workers=self.config.workers) as executor:
                    futures = [
                        executor.submit(self.train_shard, shard, np.random.default_rng([self.config.seed, epoch, i]))
                        for i, shard in enumerate(shards)
                    ]

                    for future in futures:
                        future.result()

            logger.info("epoch %i/%i done, learning rate %.6f", epoch + 1, self.config.epochs, self.learning_rate())

        words = tuple(self.vocab.words)
        return EmbeddingSpace(self.corpus.language_tag, words, self.input_vectors.copy(), False, self.config)

    def train_shard(self, documents: list[np.ndarray], rng: np.random.Generator) -> None:
        for document in documents:
            lr = self.learning_rate()

            with self.lock:
                self.processed_tokens += len(document)

            kept = document[rng.random(len(document)) < self.vocab.keep_probability[document]]
            if len(kept) < 2:
                continue

            centers, contexts = self.pairs(kept, rng)
            if len(centers) == 0:
                continue

            self.update(centers, contexts, lr, rng)

    def pairs(self, document: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        reduced_windows = rng.integers(1, self.config.window + 1, size=len(document))

        centers = []
        contexts = []
        for position, window in enumerate(reduced_windows):
            start = max(position - window, 0)
            end = min(position + window + 1, len(document))

            for other in range(start, end):
                if other != position:
                    centers.append(document[position])
                    contexts.append(document[other])

        return np.array(centers, dtype=np.int64), np.array(contexts, dtype=np.int64)

    def update(self, centers: np.ndarray, contexts: np.ndarray, lr: float, rng: np.random.Generator) -> None:
        noise = np.searchsorted(self.vocab.noise_cdf, rng.random((len(centers), self.config.negatives)), side="right")
        noise = np.minimum(noise, len(self.vocab) - 1)

        targets = np.concatenate([contexts[:, None], noise], axis=1)
        labels = np.zeros(targets.shape)
        labels[:, 0] = 1.0

        hidden = self.input_vectors[centers]
        outputs = self.output_vectors[targets]

        coefficients = _coefficients(hidden, outputs, labels) * lr

        # A negative that hits the true context is skipped
        coefficients[:, 1:][noise == contexts[:, None]] = 0.0

        hidden_update = np.einsum("pk,pkd->pd", coefficients, outputs)
        output_update = coefficients[:, :, None] * hidden[:, None, :]

        np.add.at(self.output_vectors, targets, output_update)
        np.add.at(self.input_vectors, centers, hidden_update)


def train(corpus: TokenizedCorpus, config: TrainConfig | None = None) -> EmbeddingSpace:
    return SkipGramTrainer(corpus, config or TrainConfig()).train()


def normalize(space: EmbeddingSpace) -> EmbeddingSpace:
    norms = np.linalg.norm(space.vectors, axis=1)

    zero_rows = np.flatnonzero(norms == 0)
    if len(zero_rows) > 0:
        raise ZeroNormError(space.words[zero_rows[0]])

    if space.normalized and np.all(np.abs(norms - 1.0) <= 1e-6):
        return space

    return EmbeddingSpace(space.language_tag, space.words, space.vectors / norms[:, None], True, space.config)
