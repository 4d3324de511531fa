"""Contrastive, negatives and analogy losses over embedding batches.

All losses are negative log-likelihoods of temperature-scaled exponentiated
cosine similarities, averaged over the batch rows they apply to, with exact
analytic gradients with respect to every embedding matrix and the
temperature. Softmax terms are evaluated in the log domain with
max-subtraction so large learned temperatures (around 100) do not overflow.

The combined objective is::

    total = contrastive + alpha * negatives + beta * (analogy_text + analogy_image)

where ``negatives`` contrasts each caption with its one-word-edited negative
against the caption's own image, and the two analogy terms pull a reworded
positive toward its source caption and source image respectively.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import IO

import numpy as np
from scipy.special import expit, logsumexp, softmax

NEG_MODE_SEPARATE = "separate_loss"
NEG_MODE_MERGED = "merged_into_contrastive"
NEG_MODES = (NEG_MODE_SEPARATE, NEG_MODE_MERGED)


def _as_matrix(value, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-D matrix, got shape {arr.shape}")
    return arr


def _as_mask(value, n: int, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=bool)
    if arr.shape != (n,):
        raise ValueError(f"{name} must have shape ({n},), got {arr.shape}")
    return arr


@dataclass
class EmbeddingBatch:
    """Aligned text/image/negative/positive embedding rows for one batch.

    Row ``i`` of every matrix belongs to the same source pair. ``has_neg``
    and ``has_pos`` mark which rows actually carry a generated negative or
    positive; unmarked rows of the optional matrices are ignored entirely
    (they never enter any similarity and receive zero gradient).
    """

    text_emb: np.ndarray
    image_emb: np.ndarray
    neg_text_emb: np.ndarray | None = None
    pos_text_emb: np.ndarray | None = None
    has_neg: np.ndarray | None = None
    has_pos: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.text_emb = _as_matrix(self.text_emb, "text_emb")
        self.image_emb = _as_matrix(self.image_emb, "image_emb")
        n, d = self.text_emb.shape
        if n < 1:
            raise ValueError("batch must contain at least one row")
        if self.image_emb.shape != (n, d):
            raise ValueError(
                f"image_emb shape {self.image_emb.shape} != text_emb shape {(n, d)}"
            )

        if self.neg_text_emb is not None:
            self.neg_text_emb = _as_matrix(self.neg_text_emb, "neg_text_emb")
            if self.neg_text_emb.shape != (n, d):
                raise ValueError("neg_text_emb shape mismatch")
        if self.has_neg is None:
            self.has_neg = np.full(n, self.neg_text_emb is not None)
        else:
            self.has_neg = _as_mask(self.has_neg, n, "has_neg")
        if self.neg_text_emb is None and self.has_neg.any():
            raise ValueError("has_neg set but neg_text_emb missing")

        if self.pos_text_emb is not None:
            self.pos_text_emb = _as_matrix(self.pos_text_emb, "pos_text_emb")
            if self.pos_text_emb.shape != (n, d):
                raise ValueError("pos_text_emb shape mismatch")
        if self.has_pos is None:
            self.has_pos = np.full(n, self.pos_text_emb is not None)
        else:
            self.has_pos = _as_mask(self.has_pos, n, "has_pos")
        if self.pos_text_emb is None and self.has_pos.any():
            raise ValueError("has_pos set but pos_text_emb missing")

        _require_nonzero_rows(self.text_emb, "text_emb")
        _require_nonzero_rows(self.image_emb, "image_emb")
        if self.neg_text_emb is not None:
            _require_nonzero_rows(self.neg_text_emb[self.has_neg], "neg_text_emb (active rows)")
        if self.pos_text_emb is not None:
            _require_nonzero_rows(self.pos_text_emb[self.has_pos], "pos_text_emb (active rows)")

    @property
    def n(self) -> int:
        return self.text_emb.shape[0]

    @property
    def d(self) -> int:
        return self.text_emb.shape[1]

    @classmethod
    def from_json(cls, source: dict | str | IO[str]) -> "EmbeddingBatch":
        """Build a batch from the JSON schema used by the ``loss-eval`` command."""
        if hasattr(source, "read"):
            obj = json.load(source)
        elif isinstance(source, str):
            obj = json.loads(source)
        else:
            obj = source
        return cls(
            text_emb=obj["text_emb"],
            image_emb=obj["image_emb"],
            neg_text_emb=obj.get("neg_text_emb"),
            pos_text_emb=obj.get("pos_text_emb"),
            has_neg=obj.get("has_neg"),
            has_pos=obj.get("has_pos"),
        )


def _require_nonzero_rows(matrix: np.ndarray, name: str) -> None:
    if matrix.size and not np.linalg.norm(matrix, axis=1).all():
        raise ValueError(f"{name} contains a zero-norm row; cosine similarity undefined")


@dataclass(frozen=True)
class LossConfig:
    """Temperature, combination weights and the negatives-handling mode.

    ``neg_mode`` selects between the dedicated negatives loss
    (``separate_loss``) and the ablation baseline that merely appends
    negative texts to the contrastive denominators
    (``merged_into_contrastive``).
    """

    tau: float
    alpha: float = 1.0
    beta: float = 1.0
    neg_mode: str = NEG_MODE_SEPARATE

    def __post_init__(self) -> None:
        if not math.isfinite(self.tau):
            raise ValueError("tau must be finite")
        for name in ("alpha", "beta"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and >= 0")
        if self.neg_mode not in NEG_MODES:
            raise ValueError(f"neg_mode must be one of {NEG_MODES}")


@dataclass
class LossGradients:
    """Gradients of a loss with respect to every batch input and tau."""

    text_emb: np.ndarray
    image_emb: np.ndarray
    neg_text_emb: np.ndarray | None
    pos_text_emb: np.ndarray | None
    tau: float = 0.0

    @classmethod
    def zeros_like(cls, batch: EmbeddingBatch) -> "LossGradients":
        return cls(
            text_emb=np.zeros_like(batch.text_emb),
            image_emb=np.zeros_like(batch.image_emb),
            neg_text_emb=(
                np.zeros_like(batch.neg_text_emb) if batch.neg_text_emb is not None else None
            ),
            pos_text_emb=(
                np.zeros_like(batch.pos_text_emb) if batch.pos_text_emb is not None else None
            ),
        )

    def add_scaled(self, other: "LossGradients", scale: float) -> None:
        self.text_emb += scale * other.text_emb
        self.image_emb += scale * other.image_emb
        if self.neg_text_emb is not None and other.neg_text_emb is not None:
            self.neg_text_emb += scale * other.neg_text_emb
        if self.pos_text_emb is not None and other.pos_text_emb is not None:
            self.pos_text_emb += scale * other.pos_text_emb
        self.tau += scale * other.tau


@dataclass
class LossTerm:
    """One loss component: scalar value, gradients, and a degeneracy flag.

    ``degenerate`` is set when the loss had no applicable rows (for
    example, a negatives loss over a batch with no negatives) and the
    value defaulted to zero so the combined loss stays defined.
    """

    value: float
    gradients: LossGradients
    degenerate: bool = False


@dataclass
class LossOutput:
    """Combined loss with its parts and summed gradients."""

    total: float
    parts: dict[str, float]
    gradients: LossGradients
    warnings: tuple[str, ...] = field(default=())


def similarity(e_t: np.ndarray, e_i: np.ndarray, tau: float) -> float:
    """Exponentiated temperature-scaled cosine similarity of two vectors."""
    e_t = np.asarray(e_t, dtype=np.float64)
    e_i = np.asarray(e_i, dtype=np.float64)
    nt = np.linalg.norm(e_t)
    ni = np.linalg.norm(e_i)
    if nt == 0.0 or ni == 0.0:
        raise ValueError("similarity undefined for zero-norm vectors")
    return float(np.exp(tau * float(e_t @ e_i) / (nt * ni)))


def _unit_rows(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(matrix, axis=1)
    return norms, matrix / norms[:, None]


def _chain_cosine(
    grad_cos: np.ndarray,
    cos: np.ndarray,
    a_hat: np.ndarray,
    a_norms: np.ndarray,
    b_hat: np.ndarray,
    b_norms: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Backpropagate d(loss)/d(cos matrix) through ``cos = a_hat @ b_hat.T``.

    For rows a_i, b_j: d cos_ij / d a_i = (b_hat_j - cos_ij a_hat_i) / |a_i|.
    """
    weighted = (grad_cos * cos).sum(axis=1, keepdims=True)
    grad_a = (grad_cos @ b_hat - weighted * a_hat) / a_norms[:, None]
    weighted_b = (grad_cos * cos).sum(axis=0)[:, None]
    grad_b = (grad_cos.T @ a_hat - weighted_b * b_hat) / b_norms[:, None]
    return grad_a, grad_b


def contrastive_loss(batch: EmbeddingBatch, cfg: LossConfig) -> LossTerm:
    """Symmetric InfoNCE over the pairwise text-image similarity matrix.

    Each row contributes a text-to-image and an image-to-text negative
    log-softmax of the matching pair; the result is averaged over rows.
    In ``merged_into_contrastive`` mode, rows with negatives contribute
    their negative text as an extra unmatched text row, enlarging the
    image-to-text denominators only.
    """
    n = batch.n
    merged = cfg.neg_mode == NEG_MODE_MERGED and bool(batch.has_neg.any())

    if merged:
        extra = batch.neg_text_emb[batch.has_neg]
        texts = np.vstack([batch.text_emb, extra])
    else:
        texts = batch.text_emb

    t_norms, t_hat = _unit_rows(texts)
    i_norms, i_hat = _unit_rows(batch.image_emb)
    cos = t_hat @ i_hat.T  # (n [+ m], n)
    logits = cfg.tau * cos
    diag = np.diagonal(logits)[:n] if merged else np.diagonal(logits)

    row_lse = logsumexp(logits[:n], axis=1)
    col_lse = logsumexp(logits, axis=0)
    value = float((row_lse - diag).sum() + (col_lse - diag).sum()) / n

    grad_logits = np.zeros_like(logits)
    grad_logits[:n] += softmax(logits[:n], axis=1)
    grad_logits += softmax(logits, axis=0)
    grad_logits[np.arange(n), np.arange(n)] -= 2.0
    grad_logits /= n

    grads = LossGradients.zeros_like(batch)
    grads.tau = float((grad_logits * cos).sum())
    grad_cos = cfg.tau * grad_logits
    grad_texts, grad_images = _chain_cosine(grad_cos, cos, t_hat, t_norms, i_hat, i_norms)
    grads.text_emb += grad_texts[:n]
    grads.image_emb += grad_images
    if merged:
        grads.neg_text_emb[batch.has_neg] += grad_texts[n:]
    return LossTerm(value=value, gradients=grads)


def negatives_loss(batch: EmbeddingBatch, cfg: LossConfig) -> LossTerm:
    """Binary contrast of each caption against its own negative for its image.

    Per applicable row: -log[ S(T,I) / (S(T,I) + S(T_neg,I)) ], averaged
    over rows that carry a negative. With no such rows the value is zero
    and the term is flagged degenerate rather than raising, so the
    combined loss stays defined.
    """
    grads = LossGradients.zeros_like(batch)
    active = batch.has_neg
    m = int(active.sum())
    if m == 0:
        return LossTerm(value=0.0, gradients=grads, degenerate=True)

    t = batch.text_emb[active]
    u = batch.image_emb[active]
    g = batch.neg_text_emb[active]
    t_norms, t_hat = _unit_rows(t)
    u_norms, u_hat = _unit_rows(u)
    g_norms, g_hat = _unit_rows(g)

    cos_pos = (t_hat * u_hat).sum(axis=1)
    cos_neg = (g_hat * u_hat).sum(axis=1)
    a = cfg.tau * cos_pos
    b = cfg.tau * cos_neg
    value = float(np.mean(np.logaddexp(a, b) - a))

    # d/da [logaddexp(a,b) - a] = -sigmoid(b-a); d/db = sigmoid(b-a)
    s = expit(b - a)
    grad_a = -s / m
    grad_b = s / m
    grads.tau = float((grad_a * cos_pos + grad_b * cos_neg).sum())

    ga = (cfg.tau * grad_a)[:, None]
    gb = (cfg.tau * grad_b)[:, None]
    grad_t = ga * (u_hat - cos_pos[:, None] * t_hat) / t_norms[:, None]
    grad_g = gb * (u_hat - cos_neg[:, None] * g_hat) / g_norms[:, None]
    grad_u = (
        ga * (t_hat - cos_pos[:, None] * u_hat) + gb * (g_hat - cos_neg[:, None] * u_hat)
    ) / u_norms[:, None]

    grads.text_emb[active] += grad_t
    grads.neg_text_emb[active] += grad_g
    grads.image_emb[active] += grad_u
    return LossTerm(value=value, gradients=grads)


def _analogy_loss(batch: EmbeddingBatch, cfg: LossConfig, against_images: bool) -> LossTerm:
    grads = LossGradients.zeros_like(batch)
    active = batch.has_pos
    m = int(active.sum())
    if m == 0:
        return LossTerm(value=0.0, gradients=grads, degenerate=True)

    pos = batch.pos_text_emb[active]
    ref = batch.image_emb if against_images else batch.text_emb
    p_norms, p_hat = _unit_rows(pos)
    r_norms, r_hat = _unit_rows(ref)

    cos = p_hat @ r_hat.T  # (m, n)
    logits = cfg.tau * cos
    targets = np.flatnonzero(active)
    rows = np.arange(m)
    value = float(np.mean(logsumexp(logits, axis=1) - logits[rows, targets]))

    grad_logits = softmax(logits, axis=1)
    grad_logits[rows, targets] -= 1.0
    grad_logits /= m
    grads.tau = float((grad_logits * cos).sum())

    grad_cos = cfg.tau * grad_logits
    grad_pos, grad_ref = _chain_cosine(grad_cos, cos, p_hat, p_norms, r_hat, r_norms)
    grads.pos_text_emb[active] += grad_pos
    if against_images:
        grads.image_emb += grad_ref
    else:
        grads.text_emb += grad_ref
    return LossTerm(value=value, gradients=grads)


def analogy_text_loss(batch: EmbeddingBatch, cfg: LossConfig) -> LossTerm:
    """Pull each reworded positive toward its source caption.

    Per applicable row: -log softmax over similarities of the positive to
    all source captions in the batch, targeting its own.
    """
    return _analogy_loss(batch, cfg, against_images=False)


def analogy_image_loss(batch: EmbeddingBatch, cfg: LossConfig) -> LossTerm:
    """Pull each reworded positive toward its source image (image-to-text
    half of the contrastive loss with the positive standing in for the
    caption)."""
    return _analogy_loss(batch, cfg, against_images=True)


def total_loss(batch: EmbeddingBatch, cfg: LossConfig) -> LossOutput:
    """Combined loss: contrastive + alpha * negatives + beta * analogies.

    In ``merged_into_contrastive`` mode the negatives enter the contrastive
    denominators instead of their own term, so the negatives part reports
    zero and alpha has no effect.
    """
    warnings: list[str] = []
    cont = contrastive_loss(batch, cfg)

    if cfg.neg_mode == NEG_MODE_MERGED:
        neg = LossTerm(value=0.0, gradients=LossGradients.zeros_like(batch))
    else:
        neg = negatives_loss(batch, cfg)
        if neg.degenerate:
            warnings.append("negatives_loss: no row carries a negative; term is 0")

    ana_t = analogy_text_loss(batch, cfg)
    ana_i = analogy_image_loss(batch, cfg)
    if ana_t.degenerate:
        warnings.append("analogy losses: no row carries a positive; terms are 0")

    total = cont.value + cfg.alpha * neg.value + cfg.beta * (ana_t.value + ana_i.value)
    grads = LossGradients.zeros_like(batch)
    grads.add_scaled(cont.gradients, 1.0)
    grads.add_scaled(neg.gradients, cfg.alpha)
    grads.add_scaled(ana_t.gradients, cfg.beta)
    grads.add_scaled(ana_i.gradients, cfg.beta)

    return LossOutput(
        total=total,
        parts={
            "contrastive": cont.value,
            "negatives": neg.value,
            "analogy_text": ana_t.value,
            "analogy_image": ana_i.value,
        },
        gradients=grads,
        warnings=tuple(warnings),
    )
