"""Cross-task component bias: embed de-domained pairs, cluster, and diff
skeleton sets against prior tasks."""

from __future__ import annotations

import os
import zlib
from dataclasses import dataclass

import numpy as np
import requests

from .schema import Schema, Task
from .skeleton import DedomainedPair, SqlParseError, SqlSkeleton, dedomain

EMBED_DIM = 256


@dataclass
class EmbeddingProvider:
    """Deterministic text embedder: hashed character-3-gram term frequencies
    (local mode) or an OpenAI-compatible embeddings endpoint (remote mode)."""

    mode: str = "local-featurizer"
    dimension: int = EMBED_DIM
    model: str = "embedding"

    def embed_text(self, text: str) -> np.ndarray:
        if self.mode == "local-featurizer":
            return _ngram_features(text, self.dimension)
        return self._remote_embed(text)

    def _remote_embed(self, text: str) -> np.ndarray:
        base = os.environ.get("EMBED_API_BASE")
        if not base:
            raise RuntimeError("EMBED_API_BASE not set for remote embedding mode")
        headers = {}
        key = os.environ.get("EMBED_API_KEY")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        resp = requests.post(f"{base.rstrip('/')}/embeddings",
                             json={"model": self.model, "input": [text]},
                             headers=headers, timeout=60)
        resp.raise_for_status()
        data = resp.json()["data"][0]["embedding"]
        vec = np.asarray(data, dtype=float)
        if vec.ndim == 2:  # token-level vectors: mean-pool
            vec = vec.mean(axis=0)
        if vec.shape != (self.dimension,):
            raise RuntimeError(
                f"embedding dimension mismatch: got {vec.shape}, want ({self.dimension},)")
        if not np.all(np.isfinite(vec)):
            raise RuntimeError("non-finite embedding components from endpoint")
        return vec


def _ngram_features(text: str, dim: int) -> np.ndarray:
    vec = np.zeros(dim)
    padded = f"  {text.lower()}  "
    for i in range(len(padded) - 2):
        gram = padded[i:i + 3]
        vec[zlib.crc32(gram.encode()) % dim] += 1.0
    norm = np.linalg.norm(vec)
    if norm > 0:
        vec /= norm
    return vec


def embed(provider: EmbeddingProvider, pair: DedomainedPair) -> np.ndarray:
    return provider.embed_text(pair.q_de + " | " + pair.z.skeleton)


def kmeans(points: list[np.ndarray] | np.ndarray, k: int, seed: int,
           tol: float = 1e-6, max_iter: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd's algorithm with k-means++ seeding.

    Returns (assignments, centroids). k is clamped to the number of distinct
    points.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] == 0 or pts.shape[1] == 0:
        raise ValueError(f"points must be a non-empty 2-D array, got shape {pts.shape}")
    distinct = np.unique(pts, axis=0)
    k = min(k, len(distinct))
    rng = np.random.RandomState(seed)

    # k-means++ initialization
    centroids = np.empty((k, pts.shape[1]))
    centroids[0] = pts[rng.randint(len(pts))]
    d2 = np.sum((pts - centroids[0]) ** 2, axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:
            centroids[i:] = centroids[0]
            break
        probs = d2 / total
        idx = rng.choice(len(pts), p=probs)
        centroids[i] = pts[idx]
        d2 = np.minimum(d2, np.sum((pts - centroids[i]) ** 2, axis=1))

    for _ in range(max_iter):
        dists = np.linalg.norm(pts[:, None, :] - centroids[None, :, :], axis=2)
        assign = np.argmin(dists, axis=1)
        new_centroids = centroids.copy()
        for c in range(k):
            members = pts[assign == c]
            if len(members):
                new_centroids[c] = members.mean(axis=0)
        shift = np.linalg.norm(new_centroids - centroids, axis=1).max()
        centroids = new_centroids
        if shift < tol:
            break
    dists = np.linalg.norm(pts[:, None, :] - centroids[None, :, :], axis=2)
    assign = np.argmin(dists, axis=1)
    return assign, centroids


@dataclass(frozen=True)
class ComponentFeatureSet:
    """The per-task skeleton set persisted across tasks: for each cluster
    center, the skeleton of the nearest training sample."""

    task_id: str
    skeletons: frozenset[SqlSkeleton]
    k_used: int


@dataclass(frozen=True)
class ComponentBias:
    """Skeletons seen in prior tasks but absent from the current one."""

    task_id: str
    skeletons: frozenset[SqlSkeleton]


def extract_feature_set(task: Task, schemas: dict[str, Schema],
                        provider: EmbeddingProvider, k: int,
                        seed: int) -> ComponentFeatureSet:
    """De-domain and embed every train sample, cluster, and keep the skeleton
    nearest each centroid (ties to the lowest sample index)."""
    pairs: list[DedomainedPair] = []
    for sample in task.train:
        try:
            pairs.append(dedomain(sample.question, sample.sql, schemas[sample.db_id]))
        except SqlParseError:
            continue
    if not pairs:
        raise ValueError(f"task {task.task_id}: no train sample parsed")
    vectors = np.stack([embed(provider, p) for p in pairs])
    _, centroids = kmeans(vectors, k, seed)
    chosen: dict[str, SqlSkeleton] = {}
    for centroid in centroids:
        idx = int(np.argmin(np.linalg.norm(vectors - centroid, axis=1)))
        z = pairs[idx].z
        chosen.setdefault(z.skeleton, z)
    return ComponentFeatureSet(task_id=task.task_id,
                               skeletons=frozenset(chosen.values()),
                               k_used=len(centroids))


def compute_bias(current: ComponentFeatureSet,
                 priors: list[ComponentFeatureSet]) -> ComponentBias:
    """Union of prior tasks' skeleton sets minus the current task's set."""
    current_keys = {z.skeleton for z in current.skeletons}
    out: dict[str, SqlSkeleton] = {}
    for prior in priors:
        for z in prior.skeletons:
            if z.skeleton not in current_keys:
                out.setdefault(z.skeleton, z)
    return ComponentBias(task_id=current.task_id, skeletons=frozenset(out.values()))
