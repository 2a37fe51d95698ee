"""Rotation-invariance checks, the three-condition evaluation protocol and ablations.

Conditions name the rotations seen at training / test time:

    z/z       train with random z rotations, test on unrotated clouds
    z/SO3     train with random z rotations, test under arbitrary rotations
    SO3/SO3   train with arbitrary rotations (fresh draw every epoch), test likewise

Test rotations are drawn once per object from the run seed, so every model
evaluated with the same seed sees the same rotated test set.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .canonical import canonical_frame, edge_features, min_separation, project
from .config import DESK_CONFIG, RunConfig
from .errors import DegenerateSpectrum
from .geometry import PointCloud, apply_rotation, pairwise_distances, random_rotation
from .local import local_representation
from .network import Model, build_model, predict_logits, train
from .shapes import KINDS, make_dataset

CONDITIONS = ("z/z", "z/SO3", "SO3/SO3")
SUITES = ("branches", "fusion", "sampling")
SEPARATION_TOL = 1e-3

# (train augmentation, test rotation) per condition
_CONDITION_MODES = {"z/z": ("z", None), "z/SO3": ("z", "so3"), "SO3/SO3": ("so3", "so3")}


@dataclass(frozen=True)
class InvarianceReport:
    check: str
    max_diff: float
    tol: float
    trials: int
    parts: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.max_diff < self.tol)

    def to_dict(self) -> dict:
        return {"check": self.check, "max_diff": self.max_diff, "tol": self.tol,
                "trials": self.trials, "passed": self.passed, "parts": dict(self.parts)}


def _rotations(trials: int, seed: int, mode: str, rotations=None) -> list:
    if rotations is not None:
        return [np.asarray(R, dtype=np.float64) for R in rotations]
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    return [random_rotation(rng, mode) for _ in range(trials)]


def _cosines(points: np.ndarray) -> np.ndarray:
    lengths = np.linalg.norm(points, axis=1)
    lengths[lengths == 0] = 1.0
    unit = points / lengths[:, None]
    return unit @ unit.T


def verify_pairwise_invariance(cloud: PointCloud, trials: int = 20, tol: float = 1e-12,
                               seed: int = 0, mode: str = "so3", rotations=None) -> InvarianceReport:
    """Max change of pairwise distances and point-vector angle cosines under rotation."""
    rots = _rotations(trials, seed, mode, rotations)
    dist0 = pairwise_distances(cloud.points)
    cos0 = _cosines(cloud.points)
    d_dist = d_cos = 0.0
    for R in rots:
        moved = cloud.points @ R
        d_dist = max(d_dist, float(np.abs(pairwise_distances(moved) - dist0).max()))
        d_cos = max(d_cos, float(np.abs(_cosines(moved) - cos0).max()))
    return InvarianceReport("pairwise", max(d_dist, d_cos), tol, len(rots),
                            {"distance": d_dist, "cosine": d_cos})


def check_separation(cloud: PointCloud, m: int = 32, sampler: str = "fps", seed: int = 0) -> float:
    """Relative singular-value gap of the skeleton; raises DegenerateSpectrum if too small."""
    frame = canonical_frame(cloud, min(m, len(cloud)), sampler, seed)
    sep = min_separation(frame.singular_values)
    # the small slack keeps exact-boundary spectra (gap == tol up to roundoff) on the degenerate side
    if sep <= SEPARATION_TOL * (1 + 1e-9):
        raise DegenerateSpectrum(f"singular values too close for a stable frame: separation {sep:.3g}")
    return sep


def verify_svd_invariance(cloud: PointCloud, trials: int = 20, m: int = 32, tol: float = 1e-6,
                          seed: int = 0, mode: str = "so3", rotations=None,
                          sampler: str = "fps") -> InvarianceReport:
    """Max elementwise change of the canonically projected points under rotation."""
    sep = check_separation(cloud, m, sampler, seed)
    m = min(m, len(cloud))
    base = project(cloud, canonical_frame(cloud, m, sampler, seed)).points
    diff = 0.0
    rots = _rotations(trials, seed, mode, rotations)
    for R in rots:
        moved = apply_rotation(cloud, R)
        proj = project(moved, canonical_frame(moved, m, sampler, seed)).points
        diff = max(diff, float(np.abs(proj - base).max()))
    return InvarianceReport("svd", diff, tol, len(rots), {"separation": sep})


def verify_feature_invariance(cloud: PointCloud, trials: int = 20, tol: float = 1e-6,
                              k: int = 32, m: int = 32, seed: int = 0, mode: str = "so3",
                              rotations=None) -> InvarianceReport:
    """Max change of the local features and the projected edge features under rotation."""
    m = min(m, len(cloud))
    local0 = local_representation(cloud, k)
    edge0 = edge_features(project(cloud, canonical_frame(cloud, m)), k)
    d_local = d_edge = 0.0
    rots = _rotations(trials, seed, mode, rotations)
    for R in rots:
        moved = apply_rotation(cloud, R)
        d_local = max(d_local, float(np.abs(local_representation(moved, k) - local0).max()))
        edge = edge_features(project(moved, canonical_frame(moved, m)), k)
        d_edge = max(d_edge, float(np.abs(edge - edge0).max()))
    return InvarianceReport("features", max(d_local, d_edge), tol, len(rots),
                            {"local": d_local, "edge": d_edge})


def verify_logit_invariance(model: Model, clouds, trials: int = 20, tol: float = 1e-5,
                            seed: int = 0, mode: str = "so3") -> InvarianceReport:
    """Max change of inference-mode logits when each cloud is rotated `trials` times."""
    base = predict_logits(model, clouds)
    rng = np.random.default_rng(seed)
    diff = 0.0
    for _ in range(trials):
        moved = [apply_rotation(c, random_rotation(rng, mode)) for c in clouds]
        diff = max(diff, float(np.abs(predict_logits(model, moved) - base).max()))
    return InvarianceReport("logits", diff, tol, trials)


# ---------------------------------------------------------------------------
# protocol


@dataclass
class ProtocolReport:
    condition: str
    seed: int
    accuracy: float
    per_class: list
    confusion: list
    invariance_max_diff: float
    runtime_s: float | None = None
    # kept in memory for plots and follow-up checks; not part of the JSON schema
    history: list = field(default_factory=list, repr=False)
    model: Model | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {"condition": self.condition, "seed": self.seed, "accuracy": self.accuracy,
                "per_class": list(self.per_class), "confusion": [list(r) for r in self.confusion],
                "invariance_max_diff": self.invariance_max_diff, "runtime_s": self.runtime_s}


def frozen_test_rotations(n: int, seed: int, mode: str = "so3") -> list:
    """One frozen rotation per test object, fixed by the seed."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 104729]))
    return [random_rotation(rng, mode) for _ in range(n)]


def confusion_matrix(labels, predicted, n_classes: int) -> np.ndarray:
    out = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(out, (np.asarray(labels), np.asarray(predicted)), 1)
    return out


def baseline_config(config: RunConfig) -> RunConfig:
    """The rotation-sensitive comparison model: raw centered xyz in the global branch."""
    return config.updated(global_input="raw")


def run_protocol(config: RunConfig = DESK_CONFIG, condition: str = "z/SO3", seed: int | None = None,
                 timing: bool = False, data=None) -> ProtocolReport:
    """Train on the synthetic shape set under `condition` and evaluate on its test split.

    `data` may pass pre-built ((train_clouds, train_labels), (test_clouds, test_labels)).
    """
    if condition not in CONDITIONS:
        raise ValueError(f"condition must be one of {CONDITIONS}, got {condition!r}")
    seed = config.seed if seed is None else seed
    config = config.updated(seed=seed)
    start = time.perf_counter()
    train_set, test_set = data or build_splits(config)
    augment = _CONDITION_MODES[condition][0]

    model = build_model(config)
    model, history = train(model, *train_set, augment=augment, config=config)
    report = evaluate_model(model, test_set, condition, seed)
    report.history = history
    if timing:
        report.runtime_s = time.perf_counter() - start
    return report


def evaluate_model(model: Model, test_set, condition: str, seed: int) -> ProtocolReport:
    """Score a trained model on the test split rotated as `condition` prescribes.

    invariance_max_diff compares logits of each test object with and without its
    frozen arbitrary rotation, whatever the condition.
    """
    if condition not in CONDITIONS:
        raise ValueError(f"condition must be one of {CONDITIONS}, got {condition!r}")
    test_clouds, test_labels = test_set
    rotated = [apply_rotation(c, R) for c, R in
               zip(test_clouds, frozen_test_rotations(len(test_clouds), seed))]
    plain_logits = predict_logits(model, test_clouds)
    rotated_logits = predict_logits(model, rotated)
    inv = float(np.abs(rotated_logits - plain_logits).max())
    logits = plain_logits if _CONDITION_MODES[condition][1] is None else rotated_logits
    return evaluate_logits(logits, test_labels, model.config.n_classes, condition, seed, inv,
                           model=model)


def evaluate_logits(logits, labels, n_classes: int, condition: str, seed: int, inv: float,
                    runtime_s=None, history=None, model=None) -> ProtocolReport:
    labels = np.asarray(labels)
    predicted = np.asarray(logits).argmax(axis=1)
    conf = confusion_matrix(labels, predicted, n_classes)
    counts = conf.sum(axis=1)
    per_class = [float(conf[i, i] / counts[i]) if counts[i] else 0.0 for i in range(n_classes)]
    return ProtocolReport(
        condition=condition, seed=seed, accuracy=float(np.mean(predicted == labels)),
        per_class=per_class, confusion=conf.tolist(), invariance_max_diff=inv,
        runtime_s=runtime_s, history=list(history or []), model=model,
    )


def build_splits(config: RunConfig):
    kinds = KINDS[: config.n_classes]
    common = dict(n_points=config.n_points, jitter=config.jitter, seed=config.seed, kinds=kinds)
    return (make_dataset(config.train_per_class, "train", **common),
            make_dataset(config.test_per_class, "test", **common))


def run_all_conditions(config: RunConfig = DESK_CONFIG, seed: int | None = None,
                       timing: bool = False, baseline: bool = True) -> dict:
    """Every condition for the invariant pipeline, plus z/z and z/SO3 for the raw baseline."""
    seed = config.seed if seed is None else seed
    config = config.updated(seed=seed)
    data = build_splits(config)
    out = {"lgr": [run_protocol(config, c, seed, timing, data) for c in CONDITIONS]}
    if baseline:
        raw = baseline_config(config)
        out["raw_xyz"] = [run_protocol(raw, c, seed, timing, data) for c in ("z/z", "z/SO3")]
    return out


# ---------------------------------------------------------------------------
# ablations


def suite_variants(suite: str, config: RunConfig) -> list:
    """(label, config) pairs for an ablation suite."""
    if suite == "branches":
        return [("global-only", config.updated(fusion="global")),
                ("local-only", config.updated(fusion="local")),
                ("avg-pool", config.updated(fusion="avg")),
                ("cat-conv", config.updated(fusion="cat")),
                ("attention", config.updated(fusion="attention"))]
    if suite == "fusion":
        return [("avg-pool", config.updated(fusion="avg")),
                ("cat-conv", config.updated(fusion="cat")),
                ("attention", config.updated(fusion="attention"))]
    if suite == "sampling":
        return [(f"{sampler}-m{m}", config.updated(m=m, sampler=sampler))
                for sampler in ("fps", "random") for m in (8, 16, 32)]
    raise ValueError(f"suite must be one of {SUITES}, got {suite!r}")


@dataclass
class AblationTable:
    suite: str
    condition: str
    rows: list  # (label, ProtocolReport)

    def accuracies(self) -> dict:
        return {label: rep.accuracy for label, rep in self.rows}

    def to_dict(self) -> dict:
        return {"suite": self.suite, "condition": self.condition,
                "rows": [{"variant": label, "report": rep.to_dict()} for label, rep in self.rows]}

    def format(self) -> str:
        width = max(len(label) for label, _ in self.rows)
        lines = [f"{'variant':<{width}}  accuracy"]
        lines += [f"{label:<{width}}  {rep.accuracy:.4f}" for label, rep in self.rows]
        return "\n".join(lines)


def run_ablation(suite: str, config: RunConfig = DESK_CONFIG, seed: int | None = None,
                 condition: str = "z/SO3", timing: bool = False) -> AblationTable:
    seed = config.seed if seed is None else seed
    config = config.updated(seed=seed)
    variants = suite_variants(suite, config)
    data = build_splits(config)
    rows = [(label, run_protocol(cfg, condition, seed, timing, data)) for label, cfg in variants]
    return AblationTable(suite, condition, rows)
