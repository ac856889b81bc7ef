"""Cross-lingual embedding alignment and dictionary-based retrieval.

Row-vector convention throughout: a source vector x is mapped into the
target space as x @ W.

fit_procrustes solves the orthogonal least-squares problem over the
resolved dictionary pairs via SVD.  fit_rcsls refines that solution by
full-batch gradient ascent on a relaxed nearest-neighbor objective: for
each pair (x, y) it rewards 2*cos(xW, y) and penalizes the mean cosine
to the k nearest target-pool neighbors of xW and the mean cosine of the
k mapped source-pool vectors nearest to y.  Neighborhoods are recomputed
every epoch and held fixed inside the gradient; W is unconstrained and
the iterate with the best objective seen (including the init) is
returned, so the objective never ends below its starting point.

csls_score implements the matching retrieval criterion
    2*cos(x, y) - r_tgt(x) - r_src(y)
where each r is the mean cosine to the k nearest neighbors in the
respective pool; ranking ties are broken by vocabulary index.
"""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field

import numpy as np

from .embeddings import EmbeddingSpace
from .errors import FormatError, ValidationError

logger = logging.getLogger(__name__)

METHOD_PROCRUSTES = "procrustes"
METHOD_RCSLS = "rcsls"


@dataclass(frozen=True)
class SeedDictionary:
    """Ordered (source word, target word) pairs; exact duplicates dropped."""

    pairs: tuple[tuple[str, str], ...]
    provenance: str = ""

    def __post_init__(self) -> None:
        seen = set()
        unique = []
        for pair in self.pairs:
            if pair not in seen:
                seen.add(pair)
                unique.append((str(pair[0]), str(pair[1])))
        object.__setattr__(self, "pairs", tuple(unique))

    def __len__(self) -> int:
        return len(self.pairs)


def read_dictionary(path: str, provenance: str | None = None) -> SeedDictionary:
    """Parse 'source<TAB>target' lines; '#" comment lines are skipped."""
    pairs = []
    with io.open(path, "r", encoding="utf-8", newline="\n") as fin:
        for lineno, line in enumerate(fin, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            if "\t" not in line:
                raise FormatError("{}:{}: missing tab separator".format(path, lineno))
            src, tgt = line.split("\t", 1)
            if not src or not tgt:
                raise FormatError("{}:{}: empty word".format(path, lineno))
            pairs.append((src, tgt))
    return SeedDictionary(pairs=tuple(pairs),
                          provenance=provenance if provenance is not None else path)


def write_dictionary(dictionary: SeedDictionary, path: str) -> None:
    with io.open(path, "w", encoding="utf-8", newline="\n") as fout:
        for src, tgt in dictionary.pairs:
            fout.write("{}\t{}\n".format(src, tgt))


@dataclass(frozen=True)
class FitReport:
    retained_pairs: int
    dropped_pairs: int
    objective: float


@dataclass(frozen=True, eq=False)
class AlignmentMap:
    """A dim x dim linear map from one language's space into another's."""

    w: np.ndarray
    source_language: str
    target_language: str
    method: str
    report: FitReport | None = None

    def __post_init__(self) -> None:
        w = np.asarray(self.w, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValidationError("alignment matrix must be square, got {}".format(w.shape))
        if self.method not in (METHOD_PROCRUSTES, METHOD_RCSLS):
            raise ValidationError("unknown alignment method {!r}".format(self.method))
        if self.method == METHOD_PROCRUSTES:
            gram = w.T @ w
            if np.max(np.abs(gram - np.eye(w.shape[0]))) > 1e-6:
                raise ValidationError("procrustes map is not orthogonal within 1e-6")
        w = w.copy()
        w.flags.writeable = False
        object.__setattr__(self, "w", w)

    @property
    def dim(self) -> int:
        return self.w.shape[0]


def save_map(amap: AlignmentMap, path: str) -> None:
    """Two header lines then the numeric grid, one matrix row per line."""
    with io.open(path, "w", encoding="utf-8", newline="\n") as fout:
        fout.write("{} {}\n".format(amap.dim, amap.dim))
        fout.write("{} {} {}\n".format(amap.source_language, amap.target_language,
                                       amap.method))
        for row in amap.w:
            fout.write(" ".join(repr(float(v)) for v in row))
            fout.write("\n")


def load_map(path: str) -> AlignmentMap:
    with io.open(path, "r", encoding="utf-8", newline="\n") as fin:
        header = fin.readline().split()
        if len(header) != 2:
            raise FormatError("{}: malformed size header".format(path))
        try:
            rows, cols = int(header[0]), int(header[1])
        except ValueError:
            raise FormatError("{}: non-integer size header".format(path))
        if rows != cols or rows < 1:
            raise FormatError("{}: map must be square and non-empty".format(path))
        tag = fin.readline().split()
        if len(tag) != 3:
            raise FormatError("{}: malformed language/method header".format(path))
        src_lang, tgt_lang, method = tag
        w = np.empty((rows, cols), dtype=np.float64)
        for r in range(rows):
            line = fin.readline()
            if not line:
                raise FormatError("{}: expected {} matrix rows".format(path, rows))
            values = line.split()
            if len(values) != cols:
                raise FormatError(
                    "{}: row {} has {} values, expected {}".format(path, r, len(values), cols)
                )
            try:
                w[r] = [float(v) for v in values]
            except ValueError:
                raise FormatError("{}: unparsable value in row {}".format(path, r))
    return AlignmentMap(w=w, source_language=src_lang, target_language=tgt_lang,
                        method=method)


@dataclass(frozen=True)
class AlignHyper:
    """Refinement hyperparameters.

    batch=None means full-batch; a smaller value processes the pairs in
    consecutive chunks each epoch (still deterministic).  neighbor_pool
    caps the number of leading vocabulary rows used for neighborhoods.
    """

    k_neighbors: int = 10
    learning_rate: float = 1.0
    epochs: int = 10
    batch: int | None = None
    neighbor_pool: int = 10000

    def __post_init__(self) -> None:
        if self.k_neighbors < 1:
            raise ValidationError("k_neighbors must be >= 1")
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be > 0")
        if self.epochs < 0:
            raise ValidationError("epochs must be >= 0")
        if self.batch is not None and self.batch < 1:
            raise ValidationError("batch must be >= 1 when set")
        if self.neighbor_pool < 1:
            raise ValidationError("neighbor_pool must be >= 1")


@dataclass(frozen=True)
class AlignmentQuality:
    accuracy_at_1: float
    accuracy_at_5: float
    mean_csls_margin: float
    evaluated_pairs: int


def _require_normalized(space: EmbeddingSpace, role: str) -> None:
    if not space.normalized:
        raise ValidationError("{} space must be normalized first".format(role))


def resolve_pairs(dictionary: SeedDictionary, src: EmbeddingSpace,
                  tgt: EmbeddingSpace):
    """Rows for the pairs present in both vocabularies.

    Returns (X, Y, retained pair list, dropped count).
    """
    xs, ys, kept = [], [], []
    dropped = 0
    for s, t in dictionary.pairs:
        si = src.row_index(s)
        ti = tgt.row_index(t)
        if si is None or ti is None:
            dropped += 1
            continue
        xs.append(src.matrix[si])
        ys.append(tgt.matrix[ti])
        kept.append((s, t))
    if not kept:
        raise ValidationError("no dictionary pair is covered by both vocabularies")
    return np.array(xs), np.array(ys), kept, dropped


def fit_procrustes(src: EmbeddingSpace, tgt: EmbeddingSpace,
                   dictionary: SeedDictionary) -> AlignmentMap:
    """Best orthogonal map X @ W ~ Y over the resolved pairs.

    W = U V^T from the SVD of X^T Y; the objective recorded in the report
    is the residual ||XW - Y||_F.
    """
    if src.dim != tgt.dim:
        raise ValidationError(
            "dimension mismatch: {} vs {}".format(src.dim, tgt.dim)
        )
    _require_normalized(src, "source")
    _require_normalized(tgt, "target")
    x, y, kept, dropped = resolve_pairs(dictionary, src, tgt)
    if len(kept) < src.dim:
        logger.warning(
            "procrustes fit with %d pairs in dimension %d is under-determined",
            len(kept), src.dim,
        )
    u, _, vt = np.linalg.svd(x.T @ y)
    w = u @ vt
    residual = float(np.linalg.norm(x @ w - y))
    return AlignmentMap(
        w=w,
        source_language=src.language,
        target_language=tgt.language,
        method=METHOD_PROCRUSTES,
        report=FitReport(retained_pairs=len(kept), dropped_pairs=dropped,
                         objective=residual),
    )


def _unit_rows(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(m, axis=1)
    if np.any(norms == 0.0):
        raise ValidationError("zero-norm vector encountered")
    return m / norms[:, None], norms


def rcsls_objective(w: np.ndarray, x: np.ndarray, y: np.ndarray,
                    src_pool: np.ndarray, tgt_pool: np.ndarray, k: int) -> float:
    """Mean relaxed-neighborhood score of the pairs under the map w."""
    u = x @ w
    un, _ = _unit_rows(u)
    pn, _ = _unit_rows(src_pool @ w)
    fidelity = 2.0 * np.sum(un * y, axis=1)
    cos_ut = un @ tgt_pool.T
    top_t = np.sort(cos_ut, axis=1)[:, -k:]
    hub_t = top_t.mean(axis=1)
    cos_py = pn @ y.T
    top_s = np.sort(cos_py, axis=0)[-k:, :]
    hub_s = top_s.mean(axis=0)
    value = float(np.mean(fidelity - hub_t - hub_s))
    if not np.isfinite(value):
        raise ValidationError("alignment objective is not finite")
    return value


def _rcsls_gradient(w, x, y, src_pool, tgt_pool, k):
    """Gradient of the mean objective at fixed neighborhood memberships."""
    m = x.shape[0]
    u = x @ w
    un, nu = _unit_rows(u)
    p = src_pool @ w
    pn, npn = _unit_rows(p)

    # d/du of cos(u, b) for unit b: (b - cos*un) / |u|
    cos_xy = np.sum(un * y, axis=1)
    du = 2.0 * (y - cos_xy[:, None] * un) / nu[:, None]

    cos_ut = un @ tgt_pool.T
    idx_t = np.argpartition(cos_ut, -k, axis=1)[:, -k:]
    sel = np.take_along_axis(cos_ut, idx_t, axis=1)
    neigh_sum = tgt_pool[idx_t].sum(axis=1)
    du -= ((neigh_sum - sel.sum(axis=1)[:, None] * un) / nu[:, None]) / k

    grad = x.T @ du

    cos_py = pn @ y.T
    idx_s = np.argpartition(cos_py, -k, axis=0)[-k:, :]
    dp = np.zeros_like(p)
    cols = np.broadcast_to(np.arange(m), idx_s.shape)
    flat_rows = idx_s.ravel()
    flat_cols = cols.ravel()
    contrib = (y[flat_cols] - cos_py[flat_rows, flat_cols][:, None] * pn[flat_rows])
    contrib = contrib / npn[flat_rows][:, None] / k
    np.subtract.at(dp, flat_rows, contrib)
    grad += src_pool.T @ dp
    return grad / m


def fit_rcsls(src: EmbeddingSpace, tgt: EmbeddingSpace,
              dictionary: SeedDictionary,
              init: AlignmentMap | None = None,
              hyper: AlignHyper = AlignHyper()) -> AlignmentMap:
    """Refine an orthogonal init by gradient ascent; never ends worse.

    The returned map carries the best objective seen across epochs
    (the init counts as epoch zero), so epochs=0 returns the init as an
    unconstrained-method map.
    """
    if src.dim != tgt.dim:
        raise ValidationError("dimension mismatch: {} vs {}".format(src.dim, tgt.dim))
    _require_normalized(src, "source")
    _require_normalized(tgt, "target")
    if init is None:
        init = fit_procrustes(src, tgt, dictionary)
    x, y, kept, dropped = resolve_pairs(dictionary, src, tgt)
    pool_n_src = min(hyper.neighbor_pool, len(src))
    pool_n_tgt = min(hyper.neighbor_pool, len(tgt))
    src_pool = src.matrix[:pool_n_src]
    tgt_pool = tgt.matrix[:pool_n_tgt]
    k = hyper.k_neighbors
    if k > pool_n_src or k > pool_n_tgt:
        raise ValidationError(
            "k_neighbors {} exceeds a neighbor pool ({} source, {} target)".format(
                k, pool_n_src, pool_n_tgt
            )
        )
    w = np.array(init.w, dtype=np.float64)
    best_w = w.copy()
    best_obj = rcsls_objective(w, x, y, src_pool, tgt_pool, k)
    chunk = len(kept) if hyper.batch is None else min(hyper.batch, len(kept))
    for epoch in range(hyper.epochs):
        for start in range(0, len(kept), chunk):
            xb = x[start:start + chunk]
            yb = y[start:start + chunk]
            grad = _rcsls_gradient(w, xb, yb, src_pool, tgt_pool, k)
            if not np.all(np.isfinite(grad)):
                raise ValidationError(
                    "non-finite gradient at epoch {}".format(epoch + 1)
                )
            w = w + hyper.learning_rate * grad
        try:
            obj = rcsls_objective(w, x, y, src_pool, tgt_pool, k)
        except ValidationError:
            raise ValidationError(
                "non-finite objective at epoch {}".format(epoch + 1)
            )
        if obj > best_obj:
            best_obj = obj
            best_w = w.copy()
    return AlignmentMap(
        w=best_w,
        source_language=src.language,
        target_language=tgt.language,
        method=METHOD_RCSLS,
        report=FitReport(retained_pairs=len(kept), dropped_pairs=dropped,
                         objective=best_obj),
    )


def _mean_topk(values: np.ndarray, k: int) -> float:
    # partial-select then sort the k survivors descending: summation order
    # is fixed by value, independent of the pool's ordering
    top = np.partition(values, len(values) - k)[len(values) - k:]
    return float(np.mean(np.sort(top)[::-1]))


def csls_score(x: np.ndarray, y: np.ndarray, mapped_src_pool: np.ndarray,
               tgt_pool: np.ndarray, k: int = 10) -> float:
    """2*cos(x, y) - r_tgt(x) - r_src(y) for unit-norm inputs.

    r_tgt is the mean cosine from x to its k nearest target-pool rows,
    r_src the mean cosine from y to its k nearest mapped-source rows.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if k < 1:
        raise ValidationError("k must be >= 1")
    if k > len(mapped_src_pool) or k > len(tgt_pool):
        raise ValidationError("k larger than a neighbor pool")
    r_tgt = _mean_topk(tgt_pool @ x, k)
    r_src = _mean_topk(mapped_src_pool @ y, k)
    return float(2.0 * np.dot(x, y) - r_tgt - r_src)


def _retrieval_context(src: EmbeddingSpace, tgt: EmbeddingSpace,
                       amap: AlignmentMap, k: int):
    """Shared precomputation: mapped+renormalized source, r_src per target."""
    mapped = src.matrix @ amap.w
    mapped_n, _ = _unit_rows(mapped)
    tgt_m = tgt.matrix
    cos_ts = tgt_m @ mapped_n.T  # (|tgt|, |src|)
    part = np.partition(cos_ts, cos_ts.shape[1] - k, axis=1)[:, -k:]
    r_src = np.sort(part, axis=1)[:, ::-1].mean(axis=1)
    return mapped_n, tgt_m, r_src


def translate_word(src: EmbeddingSpace, tgt: EmbeddingSpace,
                   amap: AlignmentMap, word: str, k_candidates: int = 5,
                   k_neighbors: int = 10) -> list[tuple[str, float]]:
    """Top target words for a source word by retrieval score.

    Returns (word, score) pairs in descending score order; ties broken by
    vocabulary index.  OOV source words raise.
    """
    _validate_map_spaces(src, tgt, amap)
    idx = src.row_index(word)
    if idx is None:
        raise ValidationError("word {!r} not in the source vocabulary".format(word))
    if k_candidates < 1:
        raise ValidationError("k_candidates must be >= 1")
    k = min(k_neighbors, len(src), len(tgt))
    mapped_n, tgt_m, r_src = _retrieval_context(src, tgt, amap, k)
    q = mapped_n[idx]
    cos_q = tgt_m @ q
    r_tgt = _mean_topk(cos_q, k)
    scores = 2.0 * cos_q - r_tgt - r_src
    order = np.argsort(-scores, kind="stable")[:k_candidates]
    return [(tgt.vocab[j], float(scores[j])) for j in order]


def _validate_map_spaces(src: EmbeddingSpace, tgt: EmbeddingSpace,
                         amap: AlignmentMap) -> None:
    if src.dim != amap.dim or tgt.dim != amap.dim:
        raise ValidationError("space dimension does not match the map")
    if src.language != amap.source_language or tgt.language != amap.target_language:
        raise ValidationError(
            "map is {}->{} but spaces are {}->{}".format(
                amap.source_language, amap.target_language,
                src.language, tgt.language,
            )
        )
    _require_normalized(src, "source")
    _require_normalized(tgt, "target")


def eval_alignment(src: EmbeddingSpace, tgt: EmbeddingSpace,
                   amap: AlignmentMap, test_dict: SeedDictionary,
                   k_neighbors: int = 10) -> AlignmentQuality:
    """Retrieval accuracy over the resolvable test pairs.

    A pair counts at rank r when its own target word is among the top r
    retrieved candidates.  mean_csls_margin is the mean of
    score(gold) - best score among the other candidates, so positive
    margins mean rank-1 retrieval.
    """
    _validate_map_spaces(src, tgt, amap)
    pairs = [(s, t) for s, t in test_dict.pairs
             if src.row_index(s) is not None and tgt.row_index(t) is not None]
    if not pairs:
        raise ValidationError("no test pair is covered by both vocabularies")
    k = min(k_neighbors, len(src), len(tgt))
    mapped_n, tgt_m, r_src = _retrieval_context(src, tgt, amap, k)
    hits1 = 0
    hits5 = 0
    margins = []
    for s, t in pairs:
        q = mapped_n[src.row_index(s)]
        gold = tgt.row_index(t)
        cos_q = tgt_m @ q
        r_tgt = _mean_topk(cos_q, k)
        scores = 2.0 * cos_q - r_tgt - r_src
        order = np.argsort(-scores, kind="stable")
        rank = int(np.where(order == gold)[0][0])
        if rank == 0:
            hits1 += 1
        if rank < 5:
            hits5 += 1
        others = np.delete(scores, gold)
        margins.append(float(scores[gold] - np.max(others)) if others.size
                       else float(scores[gold]))
    n = len(pairs)
    return AlignmentQuality(
        accuracy_at_1=hits1 / n,
        accuracy_at_5=hits5 / n,
        mean_csls_margin=float(np.mean(margins)),
        evaluated_pairs=n,
    )


def apply_map(space: EmbeddingSpace, amap: AlignmentMap) -> EmbeddingSpace:
    """Map every row into the target coordinate system.

    The result keeps the source language code and drops the normalized
    flag; callers re-normalize when they need unit rows.
    """
    if space.dim != amap.dim:
        raise ValidationError(
            "space dim {} does not match map dim {}".format(space.dim, amap.dim)
        )
    if space.language != amap.source_language:
        raise ValidationError(
            "map expects source language {!r}, space is {!r}".format(
                amap.source_language, space.language
            )
        )
    return EmbeddingSpace(
        language=space.language,
        dim=space.dim,
        vocab=space.vocab,
        matrix=space.matrix @ amap.w,
        normalized=False,
    )
