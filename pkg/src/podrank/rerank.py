"""Second-stage scorers over token embeddings, and their training.

Two scoring heads re-rank segments shortlisted by the lexical stage:

* The similarity head builds the query/document cosine matrix, pools it
  through a bank of RBF kernels centred at different similarity levels,
  then combines a log-normalized and a length-normalized view of the pooled
  counts through two bias-free linear layers and a weighted sum, squashed
  by a sigmoid.
* The regression head mean-pools the token vectors of the joint
  query/description/segment sequence (last layer, or the concatenation of
  the last two layers) and applies a linear layer plus sigmoid.

Both heads train with cross-entropy or hinge loss under an Adam-style
optimizer with decoupled weight decay; analytic gradients are verified
against central finite differences by grad_check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .embedding import TokenEmbeddings
from .errors import DimensionError, FormatError, TrainingDataError
from .index import RankedList

VARIANT_LAST = "last-layer"
VARIANT_CONCAT = "concat-last-two"

LOSS_CROSS_ENTROPY = "cross-entropy"
LOSS_HINGE = "hinge"

_ADAM_BETA1 = 0.9
_ADAM_BETA2 = 0.999
_ADAM_EPS = 1e-8

HEAD_FILE_VERSION = 1


def sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


def _default_mus() -> tuple[float, ...]:
    return (1.0, 0.9, 0.7, 0.5, 0.3, 0.1, -0.1, -0.3, -0.5, -0.7, -0.9)


def _default_sigmas() -> tuple[float, ...]:
    return tuple(1e-3 if mu == 1.0 else 0.1 for mu in _default_mus())


@dataclass(frozen=True)
class KernelBank:
    """RBF kernel centres and widths; one kernel per similarity level."""

    mus: tuple[float, ...] = field(default_factory=_default_mus)
    sigmas: tuple[float, ...] = field(default_factory=_default_sigmas)

    def __post_init__(self):
        if len(self.mus) != len(self.sigmas) or not self.mus:
            raise ValueError("mus and sigmas must be equal-length and non-empty")
        if any(s <= 0 for s in self.sigmas):
            raise ValueError("all sigmas must be positive")
        if any(not -1.0 <= m <= 1.0 for m in self.mus):
            raise ValueError("all mus must lie in [-1, 1]")

    @property
    def size(self) -> int:
        return len(self.mus)


def default_kernel_bank() -> KernelBank:
    return KernelBank()


@dataclass
class ScoringHead:
    """Trainable parameters of the kernel-pooling scorer."""

    w1: np.ndarray
    w2: np.ndarray
    head_alpha: float = 0.5
    head_beta: float = 0.5
    log_base: float = math.e
    epsilon: float = 1e-10

    def __post_init__(self):
        self.w1 = np.asarray(self.w1, dtype=np.float64)
        self.w2 = np.asarray(self.w2, dtype=np.float64)
        if self.w1.shape != self.w2.shape or self.w1.ndim != 1:
            raise DimensionError("w1 and w2 must be 1-d vectors of equal length")
        if self.log_base <= 1.0:
            raise ValueError("log_base must exceed 1")

    @property
    def size(self) -> int:
        return self.w1.shape[0]

    @classmethod
    def zeros(cls, k: int, **kwargs) -> "ScoringHead":
        return cls(w1=np.zeros(k), w2=np.zeros(k), **kwargs)

    def copy(self) -> "ScoringHead":
        return replace(self, w1=self.w1.copy(), w2=self.w2.copy())


@dataclass
class RegressionHead:
    """Linear layer plus sigmoid over a mean-pooled token vector."""

    weights: np.ndarray
    bias: float = 0.0
    variant: str = VARIANT_LAST

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 1:
            raise DimensionError("weights must be a 1-d vector")
        if self.variant not in (VARIANT_LAST, VARIANT_CONCAT):
            raise ValueError(f"unknown variant '{self.variant}'")

    @classmethod
    def zeros(cls, dim: int, variant: str = VARIANT_LAST) -> "RegressionHead":
        width = dim if variant == VARIANT_LAST else 2 * dim
        return cls(weights=np.zeros(width), variant=variant)

    def copy(self) -> "RegressionHead":
        return replace(self, weights=self.weights.copy())


def similarity_matrix(query_vectors: np.ndarray, doc_vectors: np.ndarray) -> np.ndarray:
    """Cosine similarity of every query token against every document token.

    Rows are token vectors (last encoder layer). Zero-norm vectors get
    cosine 0 against everything.
    """
    q = np.asarray(query_vectors, dtype=np.float64)
    d = np.asarray(doc_vectors, dtype=np.float64)
    if q.ndim != 2 or d.ndim != 2:
        raise DimensionError("token matrices must be 2-d")
    if q.shape[0] == 0 or d.shape[0] == 0:
        raise DimensionError("query and document must both be non-empty")
    if q.shape[1] != d.shape[1]:
        raise DimensionError(
            f"embedding dims differ: query {q.shape[1]} vs document {d.shape[1]}"
        )
    qn = np.linalg.norm(q, axis=1, keepdims=True)
    dn = np.linalg.norm(d, axis=1, keepdims=True)
    q = np.divide(q, qn, out=np.zeros_like(q), where=qn > 0)
    d = np.divide(d, dn, out=np.zeros_like(d), where=dn > 0)
    return q @ d.T


def kernel_pool(M: np.ndarray, bank: KernelBank) -> np.ndarray:
    """Soft-match counts: K[k][i] sums the kernel response over doc tokens."""
    M = np.asarray(M, dtype=np.float64)
    mus = np.asarray(bank.mus, dtype=np.float64)[:, None, None]
    sigmas = np.asarray(bank.sigmas, dtype=np.float64)[:, None, None]
    responses = np.exp(-((M[None, :, :] - mus) ** 2) / (2.0 * sigmas**2))
    return responses.sum(axis=2)


@dataclass(frozen=True)
class HeadIntermediates:
    kernel_log: np.ndarray
    kernel_len: np.ndarray
    s_log: float
    s_len: float
    combined: float
    score: float


def head_score(
    K: np.ndarray, d_len: int, head: ScoringHead
) -> tuple[float, HeadIntermediates]:
    """Log- and length-normalized pooled counts through the linear layers.

    The epsilon clamp guards the logarithm: pooled counts underflow to zero
    for kernels far from every observed similarity.
    """
    K = np.asarray(K, dtype=np.float64)
    if K.ndim != 2 or K.shape[0] != head.size:
        raise DimensionError(
            f"kernel matrix has {K.shape[0] if K.ndim == 2 else '?'} rows, head expects {head.size}"
        )
    if d_len < 1:
        raise ValueError("d_len must be >= 1")
    kernel_log = (np.log(np.maximum(K, head.epsilon)) / math.log(head.log_base)).sum(axis=1)
    kernel_len = (K / d_len).sum(axis=1)
    s_log = float(kernel_log @ head.w1)
    s_len = float(kernel_len @ head.w2)
    combined = s_log * head.head_alpha + s_len * head.head_beta
    score = sigmoid(combined)
    return score, HeadIntermediates(
        kernel_log=kernel_log,
        kernel_len=kernel_len,
        s_log=s_log,
        s_len=s_len,
        combined=combined,
        score=score,
    )


def sim_score(
    query_emb: TokenEmbeddings,
    doc_emb: TokenEmbeddings,
    bank: KernelBank,
    head: ScoringHead,
) -> float:
    M = similarity_matrix(query_emb.last_layer(), doc_emb.last_layer())
    K = kernel_pool(M, bank)
    score, _ = head_score(K, len(doc_emb), head)
    return score


def pooled_vector(joint: TokenEmbeddings, variant: str) -> np.ndarray:
    """Mean over tokens of the last layer, or of the last-two concatenation."""
    if len(joint) == 0:
        raise DimensionError("cannot pool an empty token sequence")
    if variant == VARIANT_LAST:
        per_token = joint.last_layer()
    elif variant == VARIANT_CONCAT:
        per_token = joint.last_two_concat()
    else:
        raise ValueError(f"unknown variant '{variant}'")
    return np.asarray(per_token, dtype=np.float64).mean(axis=0)


def regression_score(joint: TokenEmbeddings, head: RegressionHead) -> float:
    pooled = pooled_vector(joint, head.variant)
    if pooled.shape[0] != head.weights.shape[0]:
        raise DimensionError(
            f"pooled dim {pooled.shape[0]} != head weights {head.weights.shape[0]}"
        )
    return sigmoid(float(head.weights @ pooled) + head.bias)


@dataclass
class LabeledPair:
    """One training pair; sim heads use query/doc tokens, regression the joint."""

    label: int
    query_tokens: list[str] | None = None
    doc_tokens: list[str] | None = None
    joint_tokens: list[str] | None = None

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError("label must be 0 or 1")


@dataclass(frozen=True)
class TrainConfig:
    loss: str = LOSS_CROSS_ENTROPY
    learning_rate: float = 1e-3
    weight_decay: float = 0.01
    max_epochs: int = 5
    patience: int = 2
    seed: int = 0
    batch_size: int = 32

    def __post_init__(self):
        if self.loss not in (LOSS_CROSS_ENTROPY, LOSS_HINGE):
            raise ValueError(f"unknown loss '{self.loss}'")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class TrainingExample:
    """Head-independent features of one pair, precomputed once."""

    label: int
    loss: str
    phi_log: np.ndarray | None = None
    phi_len: np.ndarray | None = None
    pooled: np.ndarray | None = None

    @property
    def kind(self) -> str:
        return "reg" if self.pooled is not None else "sim"


def prepare_example(
    pair: LabeledPair,
    head: ScoringHead | RegressionHead,
    loss: str,
    embed_fn: Callable[[list[str]], TokenEmbeddings],
    bank: KernelBank | None = None,
) -> TrainingExample:
    """Embed a pair and reduce it to the features its head consumes."""
    if isinstance(head, ScoringHead):
        if pair.query_tokens is None or pair.doc_tokens is None:
            raise TrainingDataError("similarity pairs need query_tokens and doc_tokens")
        bank = bank or default_kernel_bank()
        q = embed_fn(pair.query_tokens)
        d = embed_fn(pair.doc_tokens)
        K = kernel_pool(similarity_matrix(q.last_layer(), d.last_layer()), bank)
        phi_log = (np.log(np.maximum(K, head.epsilon)) / math.log(head.log_base)).sum(axis=1)
        phi_len = (K / len(d)).sum(axis=1)
        return TrainingExample(label=pair.label, loss=loss, phi_log=phi_log, phi_len=phi_len)
    if pair.joint_tokens is None:
        raise TrainingDataError("regression pairs need joint_tokens")
    pooled = pooled_vector(embed_fn(pair.joint_tokens), head.variant)
    if pooled.shape[0] != head.weights.shape[0]:
        raise DimensionError(
            f"pooled dim {pooled.shape[0]} != head weights {head.weights.shape[0]}"
        )
    return TrainingExample(label=pair.label, loss=loss, pooled=pooled)


def _get_params(head: ScoringHead | RegressionHead) -> np.ndarray:
    if isinstance(head, ScoringHead):
        return np.concatenate([head.w1, head.w2, [head.head_alpha, head.head_beta]])
    return np.concatenate([head.weights, [head.bias]])


def _set_params(head: ScoringHead | RegressionHead, params: np.ndarray) -> None:
    if isinstance(head, ScoringHead):
        k = head.size
        head.w1 = params[:k].copy()
        head.w2 = params[k : 2 * k].copy()
        head.head_alpha = float(params[2 * k])
        head.head_beta = float(params[2 * k + 1])
    else:
        head.weights = params[:-1].copy()
        head.bias = float(params[-1])


def _pre_sigmoid(head, ex: TrainingExample) -> float:
    if isinstance(head, ScoringHead):
        return head.head_alpha * float(head.w1 @ ex.phi_log) + head.head_beta * float(
            head.w2 @ ex.phi_len
        )
    return float(head.weights @ ex.pooled) + head.bias


def _score_grad(head, ex: TrainingExample) -> np.ndarray:
    """Gradient of the pre-sigmoid score with respect to the parameter vector."""
    if isinstance(head, ScoringHead):
        return np.concatenate(
            [
                head.head_alpha * ex.phi_log,
                head.head_beta * ex.phi_len,
                [float(head.w1 @ ex.phi_log), float(head.w2 @ ex.phi_len)],
            ]
        )
    return np.concatenate([ex.pooled, [1.0]])


def example_loss(head, ex: TrainingExample) -> float:
    s = _pre_sigmoid(head, ex)
    if ex.loss == LOSS_CROSS_ENTROPY:
        p = min(max(sigmoid(s), 1e-12), 1.0 - 1e-12)
        return -(ex.label * math.log(p) + (1 - ex.label) * math.log(1.0 - p))
    margin = (2 * ex.label - 1) * s
    return max(0.0, 1.0 - margin)


def loss_and_grad(head, ex: TrainingExample) -> tuple[float, np.ndarray]:
    s = _pre_sigmoid(head, ex)
    score_grad = _score_grad(head, ex)
    if ex.loss == LOSS_CROSS_ENTROPY:
        p = sigmoid(s)
        p_safe = min(max(p, 1e-12), 1.0 - 1e-12)
        loss = -(ex.label * math.log(p_safe) + (1 - ex.label) * math.log(1.0 - p_safe))
        return loss, (p - ex.label) * score_grad
    margin = (2 * ex.label - 1) * s
    if margin < 1.0:
        return 1.0 - margin, -(2 * ex.label - 1) * score_grad
    return 0.0, np.zeros_like(score_grad)


def grad_check(head, example: TrainingExample, h: float = 1e-5) -> float:
    """Max relative error of the analytic gradient vs central differences.

    The head's parameters are restored exactly on return.
    """
    work = head.copy()
    params = _get_params(work)
    _, analytic = loss_and_grad(work, example)
    worst = 0.0
    for i in range(params.shape[0]):
        original = params[i]
        params[i] = original + h
        _set_params(work, params)
        plus = example_loss(work, example)
        params[i] = original - h
        _set_params(work, params)
        minus = example_loss(work, example)
        params[i] = original
        _set_params(work, params)
        numeric = (plus - minus) / (2.0 * h)
        denom = max(abs(analytic[i]), abs(numeric), 1e-6)
        worst = max(worst, abs(analytic[i] - numeric) / denom)
    return worst


@dataclass
class TrainResult:
    head: ScoringHead | RegressionHead
    loss_history: list[float]
    steps: int
    stopped_early: bool


def training_accuracy(head, examples: Sequence[TrainingExample]) -> float:
    correct = sum(1 for ex in examples if (_pre_sigmoid(head, ex) >= 0.0) == bool(ex.label))
    return correct / len(examples)


def train_head(
    pairs: Sequence[LabeledPair],
    head: ScoringHead | RegressionHead,
    cfg: TrainConfig,
    embed_fn: Callable[[list[str]], TokenEmbeddings],
    bank: KernelBank | None = None,
) -> TrainResult:
    """Minimize the configured loss over the pairs with AdamW-style updates.

    Deterministic for a fixed config seed: the shuffle order, moment
    buffers, and every floating-point operation replay identically. Stops
    at max_epochs, or earlier once the epoch-mean loss has failed to improve
    for `patience` consecutive epochs.
    """
    labels = {pair.label for pair in pairs}
    if labels != {0, 1}:
        raise TrainingDataError("training needs at least one positive and one negative pair")

    trained = head.copy()
    examples = [prepare_example(p, trained, cfg.loss, embed_fn, bank) for p in pairs]

    params = _get_params(trained)
    m = np.zeros_like(params)
    v = np.zeros_like(params)
    t = 0
    rng = np.random.default_rng(cfg.seed)
    history: list[float] = []
    best = math.inf
    bad_epochs = 0
    stopped_early = False

    for _ in range(cfg.max_epochs):
        order = rng.permutation(len(examples))
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            grad = np.zeros_like(params)
            for i in batch:
                _, g = loss_and_grad(trained, examples[i])
                grad += g
            grad /= len(batch)
            t += 1
            m = _ADAM_BETA1 * m + (1.0 - _ADAM_BETA1) * grad
            v = _ADAM_BETA2 * v + (1.0 - _ADAM_BETA2) * grad * grad
            m_hat = m / (1.0 - _ADAM_BETA1**t)
            v_hat = v / (1.0 - _ADAM_BETA2**t)
            params = params - cfg.learning_rate * (
                m_hat / (np.sqrt(v_hat) + _ADAM_EPS)
            ) - cfg.learning_rate * cfg.weight_decay * params
            _set_params(trained, params)

        epoch_loss = sum(example_loss(trained, ex) for ex in examples) / len(examples)
        history.append(epoch_loss)
        if epoch_loss < best:
            best = epoch_loss
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= cfg.patience:
                stopped_early = True
                break

    return TrainResult(head=trained, loss_history=history, steps=t, stopped_early=stopped_early)


class SimilaritySegmentScorer:
    """Scores segments for one query with the kernel-pooling head."""

    def __init__(self, qid: str, bank: KernelBank, head: ScoringHead):
        self.qid = qid
        self.bank = bank
        self.head = head
        self._query_emb: TokenEmbeddings | None = None

    def score_segment(self, provider, segment_id: str) -> float:
        if self._query_emb is None:
            self._query_emb = provider.query_embedding(self.qid)
        doc_emb = provider.segment_embedding(segment_id)
        return sim_score(self._query_emb, doc_emb, self.bank, self.head)


class RegressionSegmentScorer:
    """Scores segments for one query with the pooled regression head."""

    def __init__(self, qid: str, head: RegressionHead):
        self.qid = qid
        self.head = head

    def score_segment(self, provider, segment_id: str) -> float:
        joint = provider.joint_embedding(self.qid, segment_id)
        return regression_score(joint, self.head)


def rerank_segments(
    candidates: RankedList, scorer, provider, cutoff: int = 1000
) -> RankedList:
    """Re-score the top `cutoff` candidates and sort by the neural score."""
    if cutoff < 1:
        raise ValueError("cutoff must be >= 1")
    scores: dict[str, float] = {}
    for segment_id, _ in list(candidates)[:cutoff]:
        scores[segment_id] = scorer.score_segment(provider, segment_id)
    return RankedList.from_scores(scores)


def _fmt_floats(values) -> str:
    return " ".join(format(float(v), ".17g") for v in np.atleast_1d(values))


def _parse_floats(text: str) -> np.ndarray:
    if not text.strip():
        return np.zeros(0)
    return np.array([float(tok) for tok in text.split()], dtype=np.float64)


def save_head(path, head: ScoringHead | RegressionHead, bank: KernelBank | None = None) -> None:
    """Plain-text key=value persistence with 17-significant-digit floats."""
    lines = [f"version = {HEAD_FILE_VERSION}"]
    if isinstance(head, ScoringHead):
        if bank is None:
            raise ValueError("saving a similarity head requires its kernel bank")
        lines += [
            "kind = sim",
            f"mus = {_fmt_floats(bank.mus)}",
            f"sigmas = {_fmt_floats(bank.sigmas)}",
            f"w1 = {_fmt_floats(head.w1)}",
            f"w2 = {_fmt_floats(head.w2)}",
            f"head_alpha = {_fmt_floats(head.head_alpha)}",
            f"head_beta = {_fmt_floats(head.head_beta)}",
            f"log_base = {_fmt_floats(head.log_base)}",
            f"epsilon = {_fmt_floats(head.epsilon)}",
        ]
    else:
        lines += [
            "kind = reg",
            f"variant = {head.variant}",
            f"weights = {_fmt_floats(head.weights)}",
            f"bias = {_fmt_floats(head.bias)}",
        ]
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("\n".join(lines) + "\n")


def load_head(path) -> tuple[ScoringHead | RegressionHead, KernelBank | None]:
    entries: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            if "=" not in line:
                raise FormatError(f"{path}: line {line_no}: expected 'key = value'")
            key, _, value = line.partition("=")
            entries[key.strip()] = value.strip()

    def need(key: str) -> str:
        if key not in entries:
            raise FormatError(f"{path}: missing key '{key}'")
        return entries[key]

    if need("version") != str(HEAD_FILE_VERSION):
        raise FormatError(f"{path}: unsupported head file version {entries['version']}")
    kind = need("kind")
    if kind == "sim":
        bank = KernelBank(
            mus=tuple(_parse_floats(need("mus"))),
            sigmas=tuple(_parse_floats(need("sigmas"))),
        )
        head = ScoringHead(
            w1=_parse_floats(need("w1")),
            w2=_parse_floats(need("w2")),
            head_alpha=float(need("head_alpha")),
            head_beta=float(need("head_beta")),
            log_base=float(need("log_base")),
            epsilon=float(need("epsilon")),
        )
        if head.size != bank.size:
            raise FormatError(f"{path}: head width {head.size} != kernel count {bank.size}")
        return head, bank
    if kind == "reg":
        return (
            RegressionHead(
                weights=_parse_floats(need("weights")),
                bias=float(need("bias")),
                variant=need("variant"),
            ),
            None,
        )
    raise FormatError(f"{path}: unknown head kind '{kind}'")
