"""Multi-class classifiers over feature matrices.

A one-vs-one RBF-kernel SVM trained by sequential minimal optimization,
a k-nearest-neighbor baseline, and accuracy scoring. The SMO solver works
on a precomputed Gram matrix so binary subproblems share one kernel
evaluation; rows are put into a canonical order before training so that
permuting the input rows cannot change the fitted model.
"""

import hashlib
import itertools
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateClass,
    DimensionMismatch,
    InvariantViolation,
    LengthMismatch,
    MalformedFile,
)
from .features import FeatureMatrix
from .ingest import derive_seed

ALPHA_EPS = 1e-12


# ===== kernel =============================================================

def squared_distances(a, b):
    """Pairwise squared Euclidean distances, clipped at zero."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    d2 = (a * a).sum(axis=1)[:, None] + (b * b).sum(axis=1)[None, :] \
        - 2.0 * (a @ b.T)
    return np.maximum(d2, 0.0)


def rbf_kernel(a, b, gamma):
    """exp(-gamma * ||x - y||^2) between the rows of a and b."""
    return np.exp(-gamma * squared_distances(a, b))


def rbf_gram(x, gamma):
    """Symmetric train Gram: K[i,j] == K[j,i] and K[i,i] == 1 exactly."""
    k = rbf_kernel(x, x, gamma)
    iu = np.triu_indices(k.shape[0], 1)
    k[(iu[1], iu[0])] = k[iu]
    np.fill_diagonal(k, 1.0)
    return k


# ===== SMO ================================================================

@dataclass(frozen=True)
class SmoResult:
    alpha: np.ndarray
    bias: float
    converged: bool
    epochs_run: int
    objective_history: np.ndarray
    kkt_violation: float


def _kkt_violation(alpha, y, err, c, eps=ALPHA_EPS):
    """Largest KKT residual: r = y*E must obey the sign of alpha's bound."""
    r = y * err
    v = np.zeros_like(r)
    free = (alpha > eps) & (alpha < c - eps)
    v[free] = np.abs(r[free])
    at_zero = alpha <= eps
    v[at_zero] = np.maximum(0.0, -r[at_zero])
    at_c = alpha >= c - eps
    v[at_c] = np.maximum(0.0, r[at_c])
    return float(np.max(v))


def smo_solve(gram, y, c=100.0, tol=1e-3, max_epochs=200, rng=None):
    """Maximize the soft-margin SVM dual over a precomputed Gram matrix.

    Parameters
    ----------
    gram : (n, n) ndarray
        Kernel matrix of the training rows.
    y : (n,) ndarray of +-1
    c : float
        Box constraint.
    tol : float
        KKT tolerance for convergence.
    max_epochs : int
        Upper bound on passes over the data.
    rng : numpy Generator, optional
        Orders the working-set scan; defaults to a fixed seed.

    Returns
    -------
    SmoResult
        alpha in [0, c]^n, bias, convergence flag, epoch count, per-epoch
        dual objective values, and the final KKT violation.
    """
    y = np.asarray(y, float)
    n = y.size
    if rng is None:
        rng = np.random.default_rng(0)
    if set(np.unique(y)) - {-1.0, 1.0}:
        raise InvariantViolation("labels must be +-1")
    alpha = np.zeros(n)
    bias = 0.0
    err = np.full(n, 0.0) - y  # f(x) - y with alpha = 0, b = 0

    def take_step(i, j):
        nonlocal bias, err
        if i == j:
            return False
        ai, aj = alpha[i], alpha[j]
        yi, yj = y[i], y[j]
        s = yi * yj
        if s > 0:
            lo, hi = max(0.0, ai + aj - c), min(c, ai + aj)
        else:
            lo, hi = max(0.0, aj - ai), min(c, c + aj - ai)
        if lo >= hi:
            return False
        eta = gram[i, i] + gram[j, j] - 2.0 * gram[i, j]
        if eta <= 0.0:
            return False  # identical or degenerate pair; no ascent direction
        aj_new = aj + yj * (err[i] - err[j]) / eta
        aj_new = min(max(aj_new, lo), hi)
        if abs(aj_new - aj) < ALPHA_EPS:
            return False
        ai_new = ai + s * (aj - aj_new)
        ai_new = min(max(ai_new, 0.0), c)  # absorb constraint round-off
        d_i = yi * (ai_new - ai)
        d_j = yj * (aj_new - aj)
        b1 = bias - err[i] - d_i * gram[i, i] - d_j * gram[i, j]
        b2 = bias - err[j] - d_i * gram[i, j] - d_j * gram[j, j]
        if ALPHA_EPS < ai_new < c - ALPHA_EPS:
            b_new = b1
        elif ALPHA_EPS < aj_new < c - ALPHA_EPS:
            b_new = b2
        else:
            b_new = 0.5 * (b1 + b2)
        err += d_i * gram[:, i] + d_j * gram[:, j] + (b_new - bias)
        alpha[i], alpha[j] = ai_new, aj_new
        bias = b_new
        return True

    def violates(i):
        r = err[i] * y[i]
        return (r < -tol and alpha[i] < c) or (r > tol and alpha[i] > 0)

    history = []
    epochs_run = 0
    for _ in range(max_epochs):
        epochs_run += 1
        changed = 0
        for i in rng.permutation(n):
            if not violates(i):
                continue
            # second choice: largest |E_i - E_j| first, then a seeded scan
            gap = np.abs(err - err[i])
            gap[i] = -1.0
            if take_step(i, int(np.argmax(gap))):
                changed += 1
                continue
            for j in rng.permutation(n):
                if take_step(i, int(j)):
                    changed += 1
                    break
        ay = alpha * y
        history.append(float(np.sum(alpha) - 0.5 * (ay @ gram @ ay)))
        if changed == 0:
            break
    kkt = _kkt_violation(alpha, y, err, c)
    return SmoResult(alpha, float(bias), kkt <= tol, epochs_run,
                     np.array(history), kkt)


# ===== one-vs-one SVM =====================================================

@dataclass(frozen=True)
class PairModel:
    """One binary decision function: positive side is label_pos.

    sv_idx indexes the shared model-level support matrix, so the many
    pairwise problems of a large class set never copy their rows.
    """

    label_pos: str
    label_neg: str
    sv_idx: np.ndarray
    coef: np.ndarray
    bias: float
    converged: bool
    kkt_violation: float


@dataclass(frozen=True)
class SvmModel:
    """One-vs-one RBF SVM over a fixed class label set."""

    classes: tuple
    c: float
    gamma: float
    sv_matrix: np.ndarray
    pairs: tuple

    def __post_init__(self):
        for pair in self.pairs:
            if np.any(np.abs(pair.coef) > self.c * (1 + 1e-9)):
                raise InvariantViolation("dual coefficients must lie in [0, c]")

    def support_rows(self, pair):
        return self.sv_matrix[pair.sv_idx]

    @property
    def dim(self):
        return self.sv_matrix.shape[1]

    @property
    def all_converged(self):
        return all(p.converged for p in self.pairs)


@dataclass(frozen=True)
class PredictionResult:
    """Predicted labels per row plus the pairwise vote tally."""

    labels: tuple
    votes: np.ndarray
    classes: tuple

    def __post_init__(self):
        if len(self.labels) != self.votes.shape[0]:
            raise InvariantViolation("one prediction per vote row required")
        if any(lab not in self.classes for lab in self.labels):
            raise InvariantViolation("predicted label outside class set")


def canonical_order(values, labels):
    """Row order independent of input permutation: by label, then by a
    content hash of the row bytes, then by original position."""
    digests = [hashlib.sha256(np.ascontiguousarray(values[i]).tobytes())
               .hexdigest() for i in range(values.shape[0])]
    return sorted(range(values.shape[0]),
                  key=lambda i: (labels[i], digests[i], i))


def svm_train(m, c=100.0, gamma=1.0, tol=1e-3, max_epochs=200, seed=0):
    """Train a one-vs-one RBF SVM on the rows of ``m``.

    Parameters
    ----------
    m : FeatureMatrix
        Rows labeled by subject_ids; every class needs >= 2 rows.
    c, gamma : float
        Box constraint and kernel width.
    tol, max_epochs : SMO stopping controls.
    seed : int
        Seeds the per-pair working-set scan order.

    Returns
    -------
    SvmModel
    """
    labels = list(m.subject_ids)
    classes = tuple(sorted(set(labels)))
    if len(classes) < 2:
        raise DegenerateClass("need >= 2 classes, got %d" % len(classes))
    for cls in classes:
        if labels.count(cls) < 2:
            raise DegenerateClass("class %r has < 2 rows" % cls)
    order = canonical_order(m.values, labels)
    x = np.ascontiguousarray(m.values[order])
    labs = [labels[i] for i in order]
    gram = rbf_gram(x, gamma)
    idx_by_class = {cls: np.array([i for i, lab in enumerate(labs)
                                   if lab == cls]) for cls in classes}
    pairs = []
    for pos, neg in itertools.combinations(classes, 2):
        idx = np.concatenate([idx_by_class[pos], idx_by_class[neg]])
        y = np.where(np.arange(idx.size) < idx_by_class[pos].size, 1.0, -1.0)
        sub = gram[np.ix_(idx, idx)]
        rng = np.random.default_rng(derive_seed("smo", seed, pos, neg))
        res = smo_solve(sub, y, c=c, tol=tol, max_epochs=max_epochs, rng=rng)
        keep = res.alpha > ALPHA_EPS
        pairs.append(PairModel(
            pos, neg, idx[keep], res.alpha[keep] * y[keep],
            res.bias, res.converged, res.kkt_violation))
    return SvmModel(classes, float(c), float(gamma), x, tuple(pairs))


def svm_decision_values(model, values):
    """Per-pair decision values f(x) for each row; columns follow
    model.pairs order. One kernel evaluation against the shared support
    matrix serves every pair."""
    k = rbf_kernel(values, model.sv_matrix, model.gamma)
    out = np.zeros((values.shape[0], len(model.pairs)))
    for col, pair in enumerate(model.pairs):
        if pair.sv_idx.size == 0:
            out[:, col] = pair.bias
            continue
        out[:, col] = k[:, pair.sv_idx] @ pair.coef + pair.bias
    return out


def svm_predict(model, m):
    """Majority vote over pairwise decisions; ties go to the label that
    sorts first."""
    if m.dim != model.dim:
        raise DimensionMismatch(
            "matrix dim %d vs model dim %d" % (m.dim, model.dim))
    dec = svm_decision_values(model, m.values)
    votes = np.zeros((m.n_rows, len(model.classes)), dtype=int)
    col_of = {cls: i for i, cls in enumerate(model.classes)}
    for col, pair in enumerate(model.pairs):
        winners = np.where(dec[:, col] >= 0.0,
                           col_of[pair.label_pos], col_of[pair.label_neg])
        np.add.at(votes, (np.arange(m.n_rows), winners), 1)
    # np.argmax returns the first maximum, i.e. the ascending-order label
    pred = tuple(model.classes[i] for i in np.argmax(votes, axis=1))
    return PredictionResult(pred, votes, model.classes)


# ===== nearest neighbor ===================================================

def knn_predict(train, test, k=1):
    """Euclidean k-nearest-neighbor majority vote.

    Distance ties are broken by ascending train-row index; label ties by
    ascending label order.
    """
    if train.dim != test.dim:
        raise DimensionMismatch(
            "train dim %d vs test dim %d" % (train.dim, test.dim))
    if not 1 <= k <= train.n_rows:
        raise InvariantViolation("k must lie in [1, n_train]")
    classes = tuple(sorted(set(train.subject_ids)))
    d2 = squared_distances(test.values, train.values)
    votes = np.zeros((test.n_rows, len(classes)), dtype=int)
    col_of = {cls: i for i, cls in enumerate(classes)}
    pred = []
    for row in range(test.n_rows):
        near = np.lexsort((np.arange(train.n_rows), d2[row]))[:k]
        for idx in near:
            votes[row, col_of[train.subject_ids[idx]]] += 1
        pred.append(classes[int(np.argmax(votes[row]))])
    return PredictionResult(tuple(pred), votes, classes)


def accuracy(pred, truth):
    """Fraction of exact label matches between a prediction and truth."""
    truth = tuple(truth)
    if len(pred.labels) != len(truth):
        raise LengthMismatch(
            "%d predictions vs %d truth labels" % (len(pred.labels), len(truth)))
    hits = sum(1 for a, b in zip(pred.labels, truth) if a == b)
    return hits / len(truth)


# ===== persistence ========================================================

def save_svm_model(model, path):
    """Textual dump: kernel params, classes, then per-pair blocks with the
    support rows spelled out so a load needs no other state."""
    lines = ["svm,c=%s,gamma=%s,classes=%d,pairs=%d" % (
        repr(model.c), repr(model.gamma), len(model.classes),
        len(model.pairs))]
    lines.append(",".join(model.classes))
    for pair in model.pairs:
        rows = model.support_rows(pair)
        lines.append("pair,%s,%s,bias=%s,converged=%d,kkt=%s,sv=%d,dim=%d" % (
            pair.label_pos, pair.label_neg, repr(float(pair.bias)),
            int(pair.converged), repr(float(pair.kkt_violation)),
            rows.shape[0], rows.shape[1]))
        if rows.shape[0]:
            lines.append(",".join(repr(float(v)) for v in pair.coef))
            for row in rows:
                lines.append(",".join(repr(float(v)) for v in row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")


def load_svm_model(path):
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().split("\n") if ln]
    if not lines or not lines[0].startswith("svm,"):
        raise MalformedFile("%s line 1: expected `svm,...` header" % path)
    try:
        fields = dict(part.split("=") for part in lines[0].split(",")[1:])
        c = float(fields["c"])
        gamma = float(fields["gamma"])
        n_classes = int(fields["classes"])
        n_pairs = int(fields["pairs"])
    except (KeyError, ValueError):
        raise MalformedFile("%s line 1: bad header %r" % (path, lines[0]))
    classes = tuple(lines[1].split(","))
    if len(classes) != n_classes:
        raise MalformedFile("%s line 2: expected %d classes" % (path, n_classes))
    pairs = []
    blocks = []
    offset = 0
    at = 2
    for _ in range(n_pairs):
        if at >= len(lines) or not lines[at].startswith("pair,"):
            raise MalformedFile("%s line %d: expected `pair,...`" % (path, at + 1))
        head = lines[at].split(",")
        meta = dict(part.split("=") for part in head[3:])
        n_sv = int(meta["sv"])
        dim = int(meta["dim"])
        if n_sv:
            coef = np.array([float(v) for v in lines[at + 1].split(",")])
            if coef.size != n_sv:
                raise MalformedFile("%s line %d: expected %d coefficients"
                                    % (path, at + 2, n_sv))
            rows = np.zeros((n_sv, dim))
            for r in range(n_sv):
                vals = lines[at + 2 + r].split(",")
                if len(vals) != dim:
                    raise MalformedFile("%s line %d: expected %d values"
                                        % (path, at + 3 + r, dim))
                rows[r] = [float(v) for v in vals]
            at += 2 + n_sv
        else:
            coef = np.zeros(0)
            rows = np.zeros((0, dim))
            at += 1
        blocks.append(rows)
        pairs.append(PairModel(head[1], head[2],
                               np.arange(offset, offset + n_sv), coef,
                               float(meta["bias"]), bool(int(meta["converged"])),
                               float(meta["kkt"])))
        offset += n_sv
    dim = blocks[0].shape[1] if blocks else 0
    sv_matrix = np.vstack(blocks) if offset else np.zeros((0, dim))
    return SvmModel(classes, c, gamma, sv_matrix, tuple(pairs))
