"""Market state segmentation.

Each state k is a Gaussian with mean mu_k and a sparse LoGo precision J_k
built on that state's own TMFG. A time point t scores
-0.5 (x_t - mu_k)' J_k (x_t - mu_k) + 0.5 log |J_k| under state k, and a
switching penalty gamma is charged whenever consecutive assignments
differ. Because the penalty only couples neighboring time points, the
optimal assignment given fixed states is found exactly by dynamic
programming; fitting alternates that assignment step with per-state
re-estimation until the labels stop changing.
"""

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, EstimationError, FitError
from .ifn import SparsePrecision, TmfgGraph, build_tmfg, logo_precision
from .ingest import ReturnsPanel, standardize_returns

SCORING_MODES = ("likelihood", "mahalanobis")
SIMILARITY_MODES = ("signed", "absolute", "squared")

_DECREASE_TOL = 1e-9
_MAX_REPAIR_ATTEMPTS = 2


@dataclass(frozen=True)
class ClusteringConfig:
    """Fit settings.

    min_cluster_size defaults to n_assets + 1 (at least 5) when left as
    None; gamma is in log-likelihood units. restarts adds that many
    random contiguous-block initializations on top of the deterministic
    equal-block one, keeping the best final objective.
    """

    n_clusters: int = 4
    gamma: float = 100.0
    scoring_mode: str = "likelihood"
    similarity_mode: str = "signed"
    max_iterations: int = 50
    seed: int = 0
    min_cluster_size: int | None = None
    standardize: bool = False
    restarts: int = 0

    def validate(self) -> None:
        if not isinstance(self.n_clusters, int) or self.n_clusters < 2:
            raise ConfigError(f"n_clusters must be an integer >= 2, got {self.n_clusters}")
        if not np.isfinite(self.gamma) or self.gamma < 0.0:
            raise ConfigError(f"gamma must be finite and >= 0, got {self.gamma}")
        if self.scoring_mode not in SCORING_MODES:
            raise ConfigError(f"scoring_mode must be one of {SCORING_MODES}, got {self.scoring_mode!r}")
        if self.similarity_mode not in SIMILARITY_MODES:
            raise ConfigError(
                f"similarity_mode must be one of {SIMILARITY_MODES}, got {self.similarity_mode!r}"
            )
        if not isinstance(self.max_iterations, int) or self.max_iterations < 1:
            raise ConfigError(f"max_iterations must be a positive integer, got {self.max_iterations}")
        if self.min_cluster_size is not None and (
            not isinstance(self.min_cluster_size, int) or self.min_cluster_size < 5
        ):
            raise ConfigError(f"min_cluster_size must be an integer >= 5, got {self.min_cluster_size}")
        if not isinstance(self.restarts, int) or self.restarts < 0:
            raise ConfigError(f"restarts must be a non-negative integer, got {self.restarts}")

    def resolved_min_cluster_size(self, n_assets: int) -> int:
        if self.min_cluster_size is not None:
            return self.min_cluster_size
        return max(n_assets + 1, 5)


@dataclass
class ClusterModel:
    """Fitted parameters of one market state."""

    label: int
    mu: np.ndarray
    precision: SparsePrecision
    graph: TmfgGraph
    member_count: int


@dataclass
class ScoreMatrix:
    """T x K matrix of per-point, per-state scores (switching penalty excluded)."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.size == 0:
            raise ValueError("score matrix must be 2-d and non-empty")
        if not np.all(np.isfinite(self.values)):
            t, k = np.argwhere(~np.isfinite(self.values))[0]
            raise ValueError(f"score at t={t}, state={k} is not finite")

    @property
    def shape(self):
        return self.values.shape


@dataclass
class StatePath:
    """A label per time point plus the penalized objective it achieves."""

    labels: np.ndarray
    objective: float
    switches: int


@dataclass
class FitReport:
    """Diagnostics from one fit: trajectory, convergence, and occupancy."""

    iterations: int
    objective_trajectory: list
    objective: float
    switches: int
    occupancy: list
    converged: bool
    objective_decreased: bool
    repairs: int
    best_iteration: int
    standardized: bool
    restarts_used: int = 0

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "objective_trajectory": [float(v) for v in self.objective_trajectory],
            "objective": float(self.objective),
            "switches": int(self.switches),
            "occupancy": [int(c) for c in self.occupancy],
            "converged": self.converged,
            "objective_decreased": self.objective_decreased,
            "repairs": int(self.repairs),
            "best_iteration": int(self.best_iteration),
            "standardized": self.standardized,
            "restarts_used": int(self.restarts_used),
        }


def score_states(returns: ReturnsPanel, models, mode: str = "likelihood") -> ScoreMatrix:
    """Score every (time point, state) pair, penalty excluded.

    likelihood mode: -0.5 d' J d + 0.5 log |J| with d = x_t - mu_k;
    mahalanobis mode drops the log-determinant term.
    """
    if mode not in SCORING_MODES:
        raise ConfigError(f"scoring mode must be one of {SCORING_MODES}, got {mode!r}")
    if len(models) < 2:
        raise ValueError(f"need at least 2 state models, got {len(models)}")
    x = returns.values
    t_len, n = x.shape
    values = np.empty((t_len, len(models)))
    for k, model in enumerate(models):
        mu = np.asarray(model.mu, dtype=float)
        if mu.shape != (n,) or model.precision.n != n:
            raise ValueError(f"state {k} dimension does not match panel width {n}")
        d = x - mu
        quad = np.einsum("ti,ti->t", d, (model.precision.matrix @ d.T).T)
        values[:, k] = -0.5 * quad
        if mode == "likelihood":
            values[:, k] += 0.5 * model.precision.log_det
    bad = ~np.isfinite(values)
    if bad.any():
        t, k = np.argwhere(bad)[0]
        raise ValueError(f"non-finite score at t={t}, state={k}")
    return ScoreMatrix(values=values)


def solve_path(scores: ScoreMatrix, gamma: float) -> StatePath:
    """Maximize sum_t score[t, k_t] - gamma * #switches over all label paths.

    Exact dynamic programming: the penalty only looks one step back, so
    each state's best predecessor is either itself (no penalty) or the
    globally best previous state (penalized). Ties prefer staying.
    """
    if not np.isfinite(gamma) or gamma < 0.0:
        raise ValueError(f"gamma must be finite and >= 0, got {gamma}")
    if not isinstance(scores, ScoreMatrix):
        scores = ScoreMatrix(np.asarray(scores, dtype=float))
    v = scores.values
    t_len, k_len = v.shape

    back = np.zeros((t_len, k_len), dtype=int)
    value = v[0].copy()
    ks = np.arange(k_len)
    for t in range(1, t_len):
        best_j = int(np.argmax(value))
        switch_value = value[best_j] - gamma
        stay = value >= switch_value
        back[t] = np.where(stay, ks, best_j)
        value = v[t] + np.where(stay, value, switch_value)

    labels = np.empty(t_len, dtype=int)
    k = int(np.argmax(value))
    labels[-1] = k
    for t in range(t_len - 1, 0, -1):
        k = int(back[t, k])
        labels[t - 1] = k

    switches = int(np.count_nonzero(np.diff(labels)))
    objective = float(v[np.arange(t_len), labels].sum() - gamma * switches)
    return StatePath(labels=labels, objective=objective, switches=switches)


def _similarity_matrix(rows: np.ndarray, mode: str) -> np.ndarray:
    std = rows.std(axis=0)
    flat = np.flatnonzero(~(std > 0.0))
    if flat.size:
        raise EstimationError(
            f"degenerate covariance: asset column {flat[0]} has zero variance in cluster"
        )
    corr = np.corrcoef(rows, rowvar=False)
    if mode == "absolute":
        return np.abs(corr)
    if mode == "squared":
        return corr * corr
    return corr


def estimate_cluster(
    returns: ReturnsPanel, member_indices, config: ClusteringConfig, label: int = 0
) -> ClusterModel:
    """Fit one state from its member time points.

    mu and the covariance are the sample mean/covariance of the member
    rows; the TMFG is rebuilt on the configured similarity of those rows
    and the precision is the LoGo estimate on it.
    """
    idx = np.asarray(sorted(member_indices), dtype=int)
    n = returns.values.shape[1]
    min_size = config.resolved_min_cluster_size(n)
    if idx.size < min_size:
        raise EstimationError(
            f"state {label}: {idx.size} member(s), need at least {min_size}"
        )
    rows = returns.values[idx]
    mu = rows.mean(axis=0)
    cov = np.cov(rows, rowvar=False, ddof=1)
    graph = build_tmfg(_similarity_matrix(rows, config.similarity_mode))
    precision = logo_precision(cov, graph)
    return ClusterModel(
        label=label, mu=mu, precision=precision, graph=graph, member_count=int(idx.size)
    )


def _block_initial_labels(t_len: int, k: int) -> np.ndarray:
    return np.minimum(np.arange(t_len) * k // t_len, k - 1).astype(int)


def _random_contiguous_labels(t_len: int, k: int, min_size: int, rng) -> np.ndarray:
    slack = t_len - k * min_size
    lengths = min_size + rng.multinomial(slack, np.full(k, 1.0 / k))
    return np.repeat(np.arange(k), lengths)


def _absorb_window(labels, realized_scores, state, length, blocked):
    """Reassign the worst-scoring contiguous window of time points to `state`.

    realized_scores[t] is the previous score of t under its own label;
    blocked marks stretches already consumed by an earlier repair.
    """
    t_len = labels.shape[0]
    cost = np.where(blocked, np.inf, realized_scores)
    window_cost = np.convolve(cost, np.ones(length), mode="valid")
    start = int(np.argmin(window_cost))
    if not np.isfinite(window_cost[start]):
        raise FitError(f"state {state}: no free window of {length} points left to absorb")
    labels = labels.copy()
    labels[start : start + length] = state
    blocked[start : start + length] = True
    return labels


def _estimate_all(panel, labels, config: ClusteringConfig):
    models = []
    for k in range(config.n_clusters):
        idx = np.flatnonzero(labels == k)
        try:
            models.append(estimate_cluster(panel, idx, config, label=k))
        except EstimationError as exc:
            exc.cluster_label = k
            raise
    return models


def _fit_once(panel: ReturnsPanel, config: ClusteringConfig, initial_labels, min_size):
    k_len = config.n_clusters
    t_len = panel.values.shape[0]
    labels = np.asarray(initial_labels, dtype=int).copy()
    prev_scores = None

    trajectory: list = []
    repairs = 0
    converged = False
    decreased = False
    best = None  # (objective, models, path, iteration)

    for _ in range(config.max_iterations):
        # Repair pass: undersized or degenerate states absorb the worst
        # contiguous run of points before re-estimation. Two failed
        # attempts abort the fit.
        realized = None
        if prev_scores is not None:
            realized = prev_scores[np.arange(t_len), labels]
        blocked = np.zeros(t_len, dtype=bool)
        attempts = 0
        while True:
            sizes = np.bincount(labels, minlength=k_len)
            under = np.flatnonzero(sizes < min_size)
            if under.size:
                if realized is None or attempts >= _MAX_REPAIR_ATTEMPTS:
                    raise FitError(
                        f"cannot repair undersized state(s) {under.tolist()} "
                        f"(sizes {sizes.tolist()}, need {min_size})"
                    )
                for k in under:
                    labels = _absorb_window(labels, realized, int(k), min_size, blocked)
                    repairs += 1
                attempts += 1
                continue
            try:
                models = _estimate_all(panel, labels, config)
                break
            except EstimationError as exc:
                failed = getattr(exc, "cluster_label", None)
                if realized is None or attempts >= _MAX_REPAIR_ATTEMPTS or failed is None:
                    raise FitError(f"state estimation failed: {exc}") from exc
                labels = _absorb_window(labels, realized, failed, min_size, blocked)
                repairs += 1
                attempts += 1

        scores = score_states(panel, models, config.scoring_mode)
        path = solve_path(scores, config.gamma)
        trajectory.append(path.objective)

        if best is None or path.objective > best[0]:
            best = (path.objective, models, path, len(trajectory) - 1)

        if len(trajectory) >= 2 and path.objective < trajectory[-2] - _DECREASE_TOL:
            # Graph re-selection can lower the objective; stop and keep
            # the best iterate seen so far.
            decreased = True
            break
        if np.array_equal(path.labels, labels):
            converged = True
            break
        prev_scores = scores.values
        labels = path.labels.copy()

    objective, models, path, best_iteration = best
    report = FitReport(
        iterations=len(trajectory),
        objective_trajectory=trajectory,
        objective=objective,
        switches=path.switches,
        occupancy=np.bincount(path.labels, minlength=k_len).tolist(),
        converged=converged,
        objective_decreased=decreased,
        repairs=repairs,
        best_iteration=best_iteration,
        standardized=config.standardize,
    )
    return models, path, report


def fit(returns: ReturnsPanel, config: ClusteringConfig, initial_labels=None):
    """Fit K market states to a returns panel.

    Alternates exact penalized assignment (solve_path) with per-state
    re-estimation (estimate_cluster) until the label sequence stops
    changing, the iteration budget runs out, or the objective drops after
    a graph re-selection; the best-objective iterate is returned either
    way. Deterministic for a given (panel, config, seed).

    Returns (models, path, report).
    """
    config.validate()
    panel = standardize_returns(returns) if config.standardize else returns
    t_len, n = panel.values.shape
    if n < 4:
        raise ConfigError(f"need at least 4 assets, got {n}")
    min_size = config.resolved_min_cluster_size(n)
    if t_len < config.n_clusters * min_size:
        raise ConfigError(
            f"infeasible: {t_len} time points cannot hold {config.n_clusters} "
            f"states of at least {min_size} points each"
        )

    if initial_labels is not None:
        inits = [np.asarray(initial_labels, dtype=int)]
        if inits[0].shape != (t_len,):
            raise ConfigError("initial_labels length does not match the panel")
        if inits[0].min() < 0 or inits[0].max() >= config.n_clusters:
            raise ConfigError("initial_labels contain out-of-range states")
    else:
        inits = [_block_initial_labels(t_len, config.n_clusters)]
        if config.restarts:
            rng = np.random.default_rng(config.seed)
            for _ in range(config.restarts):
                inits.append(
                    _random_contiguous_labels(t_len, config.n_clusters, min_size, rng)
                )

    best_result = None
    for labels0 in inits:
        models, path, report = _fit_once(panel, config, labels0, min_size)
        report = replace(report, restarts_used=len(inits) - 1)
        if best_result is None or path.objective > best_result[1].objective:
            best_result = (models, path, report)
    return best_result
