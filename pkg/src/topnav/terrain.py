"""Terrain estimation: prototype classifier with Monte-Carlo entropy, experience
retrieval and the confidence-gated terrain layer."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .gridmap import CostGrid, GridSpec, Pose, cell_centers_robot, to_world_frame

# operator preference table for real terrains
REAL_PRIOR_COSTS = {
    "slab": 0.0, "cement": 0.0, "paved": 0.0, "grass": 0.2,
    "brick": 0.6, "bush": 0.7, "gravel": 0.7, "snow": 0.9,
}
SIM_LEVELS = (0.0, 0.25, 0.5, 0.75, 1.0)
SIM_CLASS_NAMES = tuple(f"level{i}" for i in range(len(SIM_LEVELS)))
SIM_PRIOR_COSTS = dict(zip(SIM_CLASS_NAMES, SIM_LEVELS))


def make_prototypes(n: int, dim: int, seed: int = 0) -> np.ndarray:
    """n mutually orthogonal unit vectors in R^dim."""
    if n > dim:
        raise ValueError("cannot build more orthogonal prototypes than dimensions")
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.normal(size=(dim, n)))
    return q.T.copy()


def _unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(n == 0):
        raise ValueError("zero-length feature")
    return v / n


@dataclass
class FeatureBank:
    """Appearance prototypes of every terrain class that exists in a world."""
    names: tuple[str, ...]
    prototypes: np.ndarray

    @classmethod
    def build(cls, names: Sequence[str], dim: int = 16, seed: int = 0) -> "FeatureBank":
        return cls(tuple(names), make_prototypes(len(names), dim, seed))

    @property
    def dim(self) -> int:
        return self.prototypes.shape[1]


@dataclass
class TerrainClassModel:
    names: tuple[str, ...]
    class_prototypes: np.ndarray
    noise_sigma: float = 0.05
    softmax_temperature: float = 0.1
    K: int = 8

    def __post_init__(self):
        self.class_prototypes = np.asarray(self.class_prototypes, dtype=float)
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if not np.allclose(np.linalg.norm(self.class_prototypes, axis=1), 1.0):
            raise ValueError("prototypes must be unit length")
        if len(self.names) < 2:
            raise ValueError("need at least two classes")

    @classmethod
    def from_bank(cls, bank: FeatureBank, known: Sequence[str], **kw) -> "TerrainClassModel":
        idx = [bank.names.index(n) for n in known]
        return cls(tuple(known), bank.prototypes[idx], **kw)

    @property
    def n_classes(self) -> int:
        return len(self.names)


@dataclass
class TerrainPrediction:
    probs: np.ndarray
    label: int
    entropy: float
    confidence: float
    latent: np.ndarray


def confidence(U, n_classes: int):
    c = 1.0 - np.asarray(U, dtype=float) / math.log(n_classes)
    c = np.clip(c, 0.0, 1.0)
    return float(c) if c.ndim == 0 else c


def classify_patches(features: np.ndarray, model: TerrainClassModel,
                     rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Vectorized classify over m features (m, F); returns arrays keyed like TerrainPrediction."""
    f = np.asarray(features, dtype=float)
    if f.ndim != 2 or f.shape[1] != model.class_prototypes.shape[1]:
        raise ValueError("feature dimension does not match the model")
    if np.any(np.linalg.norm(f, axis=1) == 0):
        raise ValueError("zero-length feature")
    m, dim = f.shape
    noise = rng.normal(0.0, model.noise_sigma, size=(m, model.K, dim)) if model.noise_sigma > 0 \
        else np.zeros((m, model.K, dim))
    perturbed = f[:, None, :] + noise
    cos = _unit(perturbed) @ model.class_prototypes.T
    logits = cos / model.softmax_temperature
    logits -= logits.max(axis=-1, keepdims=True)
    p = np.exp(logits)
    p /= p.sum(axis=-1, keepdims=True)
    probs = p.mean(axis=1)
    probs /= probs.sum(axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(probs > 0, probs * np.log(probs), 0.0)
    entropy = np.clip(-plogp.sum(axis=-1), 0.0, math.log(model.n_classes))
    return {
        "probs": probs,
        "label": probs.argmax(axis=-1),
        "entropy": entropy,
        "confidence": confidence(entropy, model.n_classes),
        "latent": _unit(perturbed.mean(axis=1)),
    }


def classify_patch(observed_feature, model: TerrainClassModel,
                   rng: np.random.Generator) -> TerrainPrediction:
    out = classify_patches(np.asarray(observed_feature, dtype=float)[None, :], model, rng)
    return TerrainPrediction(
        probs=out["probs"][0], label=int(out["label"][0]), entropy=float(out["entropy"][0]),
        confidence=float(out["confidence"][0]), latent=out["latent"][0],
    )


@dataclass
class TerrainCorrectionConfig:
    k_T3: float = 15.0
    S_0: float = 0.85
    k_T4: float = 20.0
    C_0: float = 0.9
    prior_costs: dict[str, float] = field(default_factory=lambda: dict(REAL_PRIOR_COSTS))
    patch_size_m: float = 0.3
    buffer_capacity: int = 512


def corrected_cost(t_p_hist, S, cfg: TerrainCorrectionConfig):
    return t_p_hist / (1.0 + np.exp(-cfg.k_T3 * (np.asarray(S, dtype=float) - cfg.S_0)))


def blended_cost(m_to, m_tp, C, cfg: TerrainCorrectionConfig):
    gate = 1.0 / (1.0 + np.exp(-cfg.k_T4 * (np.asarray(C, dtype=float) - cfg.C_0)))
    return (np.asarray(m_to) - m_tp) * gate + m_tp


@dataclass(frozen=True)
class ExperienceRecord:
    location: tuple[float, float]
    t_p: float
    latent: np.ndarray


class ExperienceBuffer:
    """Insertion-ordered records; oldest first."""

    def __init__(self, capacity: int = 512):
        self.capacity = capacity
        self.records: list[ExperienceRecord] = []
        self._latents: np.ndarray | None = None

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def latent_matrix(self) -> np.ndarray:
        if self._latents is None:
            self._latents = np.array([r.latent for r in self.records]).reshape(len(self.records), -1)
        return self._latents

    def t_p_array(self) -> np.ndarray:
        return np.array([r.t_p for r in self.records])

    def add(self, record: ExperienceRecord, dedupe_radius: float) -> None:
        loc = np.asarray(record.location)
        self.records = [r for r in self.records
                        if np.hypot(*(np.asarray(r.location) - loc)) >= dedupe_radius]
        self.records.append(record)
        if len(self.records) > self.capacity:
            self.records = self.records[-self.capacity:]
        self._latents = None


def update_experience(buffer: ExperienceBuffer, location, t_p: float, latent,
                      cfg: TerrainCorrectionConfig) -> ExperienceBuffer:
    if not 0.0 <= t_p <= 1.0:
        raise ValueError(f"t_p must lie in [0, 1], got {t_p}")
    latent = _unit(np.asarray(latent, dtype=float))
    buffer.add(ExperienceRecord((float(location[0]), float(location[1])), float(t_p), latent),
               cfg.patch_size_m)
    return buffer


def retrieve(buffer: ExperienceBuffer, query_latent) -> tuple[ExperienceRecord, float] | None:
    """Most cosine-similar record (earliest insertion wins ties); None when empty."""
    if len(buffer) == 0:
        return None
    q = _unit(np.asarray(query_latent, dtype=float))
    sims = buffer.latent_matrix() @ q
    i = int(np.argmax(sims))
    return buffer.records[i], float(sims[i])


def retrieve_many(buffer: ExperienceBuffer, queries: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batched retrieval: (t_p of best record, similarity) per query row."""
    sims = _unit(queries) @ buffer.latent_matrix().T
    best = sims.argmax(axis=1)
    return buffer.t_p_array()[best], sims[np.arange(len(best)), best]


@dataclass
class PatchLayout:
    """Tiling of a window into square patches."""
    cell_patch: np.ndarray   # (H, W) patch id per cell
    centers: np.ndarray      # (P, 2) patch centers, robot frame


def patch_layout(spec: GridSpec, patch_size_m: float) -> PatchLayout:
    n = max(1, int(round(patch_size_m / spec.resolution_m)))
    pw = -(-spec.width_cells // n)
    ph = -(-spec.height_cells // n)
    iy, ix = np.indices(spec.shape)
    cell_patch = (iy // n) * pw + (ix // n)
    rel = cell_centers_robot(spec).reshape(-1, 2)
    ids = cell_patch.ravel()
    centers = np.array([rel[ids == k].mean(axis=0) for k in range(pw * ph)])
    return PatchLayout(cell_patch, centers)


# (world_centers (P, 2), robot-frame centers (P, 2)) -> (visible mask (P,), features (n_visible, F))
PatchSensor = Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]


class TerrainEstimator:
    """Per-episode terrain state: classifier, experience buffer and latent memory."""

    def __init__(self, model: TerrainClassModel, cfg: TerrainCorrectionConfig,
                 use_correction: bool = True, remember: bool = True):
        missing = [n for n in model.names if n not in cfg.prior_costs]
        if missing:
            raise ValueError(f"no prior cost for classes {missing}")
        self.model = model
        self.cfg = cfg
        self.use_correction = use_correction
        self.remember = remember
        self.buffer = ExperienceBuffer(cfg.buffer_capacity)
        self._prior = np.array([cfg.prior_costs[n] for n in model.names])
        self._latent_memory: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}
        self._layouts: dict[GridSpec, PatchLayout] = {}

    def _patch_key(self, p) -> tuple[int, int]:
        s = self.cfg.patch_size_m
        return (int(math.floor(p[0] / s)), int(math.floor(p[1] / s)))

    def latent_at(self, location) -> np.ndarray | None:
        """Latest latent of the nearest observed patch center within one patch size."""
        kx, ky = self._patch_key(location)
        best, best_d = None, self.cfg.patch_size_m
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                hit = self._latent_memory.get((kx + dx, ky + dy))
                if hit is None:
                    continue
                d = math.hypot(hit[0][0] - location[0], hit[0][1] - location[1])
                if d < best_d:
                    best, best_d = hit[1], d
        return best

    def record(self, location, t_p: float) -> bool:
        """Store (T_P, latent) at the robot location; False when the patch was never seen."""
        latent = self.latent_at(location)
        if latent is None:
            return False
        update_experience(self.buffer, location, t_p, latent, self.cfg)
        return True

    def cost_map(self, pose: Pose, spec: GridSpec, sensor: PatchSensor,
                 rng: np.random.Generator) -> CostGrid:
        layout = self._layouts.get(spec)
        if layout is None:
            layout = self._layouts[spec] = patch_layout(spec, self.cfg.patch_size_m)
        world_centers = to_world_frame(layout.centers, pose)
        visible, features = sensor(world_centers, layout.centers)
        # patches outside coverage fall back to their last observation, if any
        known = visible.copy()
        rows = [np.asarray(features, dtype=float).reshape(-1, self.model.class_prototypes.shape[1])]
        if self.remember:
            for i in np.flatnonzero(~visible):
                lat = self.latent_at(world_centers[i])
                if lat is not None:
                    known[i] = True
                    rows.append(lat[None, :])
        order = np.concatenate([np.flatnonzero(visible), np.flatnonzero(known & ~visible)])
        obs = np.concatenate(rows)
        patch_cost = np.zeros(len(layout.centers))
        if len(obs):
            out = classify_patches(obs, self.model, rng)
            m_to = self._prior[out["label"]]
            m_tp = np.zeros_like(m_to)
            if self.use_correction and len(self.buffer):
                t_p, sim = retrieve_many(self.buffer, out["latent"])
                m_tp = corrected_cost(t_p, sim, self.cfg)
            patch_cost[order] = blended_cost(m_to, m_tp, out["confidence"], self.cfg)
            n_vis = int(visible.sum())
            for c, lat in zip(world_centers[visible], out["latent"][:n_vis]):
                self._latent_memory[self._patch_key(c)] = (c, lat)
        return CostGrid(spec, patch_cost[layout.cell_patch])


def terrain_cost_map(pose: Pose, spec: GridSpec, sensor: PatchSensor,
                     estimator: TerrainEstimator, rng: np.random.Generator) -> CostGrid:
    return estimator.cost_map(pose, spec, sensor, rng)
