"""Seeded generators for correlated seller datasets.

Every seller observes one coordinate of a jointly Gaussian vector per time
step.  Feature column 0 carries that coordinate; the remaining ``d - 1``
columns are independent standard normals.  Labels come from a fixed linear
ground-truth model plus Gaussian noise so the learner has a solvable task.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

__all__ = [
    "CorrelationSpec",
    "SellerDataset",
    "ground_truth_weights",
    "generate_correlated_profiles",
    "make_three_seller_scenario",
    "three_seller_streams",
    "make_overlap_scenario",
    "export_datasets_csv",
]

PSD_TOL = 1e-10


class EmptyDatasetError(ValueError):
    pass


@dataclass(frozen=True)
class SellerDataset:
    device_id: int
    sample_ids: np.ndarray
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        ids = np.asarray(self.sample_ids, dtype=np.int64)
        feats = np.atleast_2d(np.asarray(self.features, dtype=float))
        labels = np.asarray(self.labels, dtype=float).ravel()
        if ids.ndim != 1 or len(ids) != feats.shape[0] or len(labels) != feats.shape[0]:
            raise ValueError(
                f"device {self.device_id}: {len(ids)} ids, {feats.shape[0]} feature rows, {len(labels)} labels"
            )
        if len(np.unique(ids)) != len(ids):
            raise ValueError(f"device {self.device_id}: duplicate sample ids")
        object.__setattr__(self, "sample_ids", ids)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return len(self.sample_ids)

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def id_set(self) -> frozenset[int]:
        return frozenset(int(i) for i in self.sample_ids)

    def subset(self, ids: Sequence[int]) -> "SellerDataset":
        """Rows for the given sample ids, in the order given."""
        pos = {int(s): k for k, s in enumerate(self.sample_ids)}
        rows = [pos[int(i)] for i in ids]
        return SellerDataset(self.device_id, self.sample_ids[rows], self.features[rows], self.labels[rows])


@dataclass
class CorrelationSpec:
    num_devices: int
    mean_vector: np.ndarray
    covariance: np.ndarray
    samples_per_device: Sequence[int]
    shared_sample_ids: Sequence[Sequence[int]] | None = None
    n_features: int = 1
    label_noise: float = 0.1

    def __post_init__(self):
        self.mean_vector = np.asarray(self.mean_vector, dtype=float)
        self.covariance = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        m = self.num_devices
        if self.mean_vector.shape != (m,) or self.covariance.shape != (m, m):
            raise ValueError(f"mean/covariance shapes do not match num_devices={m}")
        if len(self.samples_per_device) != m or min(self.samples_per_device) < 1:
            raise ValueError("samples_per_device needs one count >= 1 per device")
        if self.n_features < 1:
            raise ValueError("n_features must be >= 1")
        if self.shared_sample_ids is not None:
            if len(self.shared_sample_ids) != m:
                raise ValueError("shared_sample_ids needs one id set per device")
            for i, ids in enumerate(self.shared_sample_ids):
                if len(ids) != self.samples_per_device[i]:
                    raise ValueError(f"device {i}: {len(ids)} ids but {self.samples_per_device[i]} samples")
                if any(int(s) < 0 for s in ids):
                    raise ValueError(f"device {i}: sample ids must be non-negative")

    def validate_covariance(self) -> None:
        cov = self.covariance
        if not np.allclose(cov, cov.T, atol=1e-12):
            raise ValueError("covariance is not symmetric")
        eig = np.linalg.eigvalsh(cov)
        bad = int(np.argmin(eig))
        if eig[bad] < -PSD_TOL:
            raise ValueError(f"covariance is not positive semi-definite: eigenvalue[{bad}] = {eig[bad]:.6g}")


def ground_truth_weights(d: int) -> np.ndarray:
    """Fixed linear model behind every generated label."""
    return np.linspace(1.0, 0.5, d) if d > 1 else np.ones(1)


def _labels(features: np.ndarray, noise: np.ndarray, scale: float) -> np.ndarray:
    return features @ ground_truth_weights(features.shape[1]) + scale * noise


def _mvn_rows(rng: np.random.Generator, mean: np.ndarray, cov: np.ndarray, n: int) -> np.ndarray:
    # eigh factor tolerates singular (PSD) covariances such as Z = 0.5X + Y
    w, v = np.linalg.eigh(cov)
    factor = v * np.sqrt(np.clip(w, 0.0, None))
    return mean + rng.standard_normal((n, len(mean))) @ factor.T


def generate_correlated_profiles(spec: CorrelationSpec, seed: int) -> list[SellerDataset]:
    """One dataset per device; row t of every device comes from the same joint draw."""
    spec.validate_covariance()
    rng = np.random.default_rng(seed)
    counts = list(spec.samples_per_device)
    steps = max(counts)
    joint = _mvn_rows(rng, spec.mean_vector, spec.covariance, steps)
    out = []
    for i, n in enumerate(counts):
        dev_rng = np.random.default_rng([seed, i, 1])
        feats = np.empty((n, spec.n_features))
        feats[:, 0] = joint[:n, i]
        if spec.n_features > 1:
            feats[:, 1:] = dev_rng.standard_normal((n, spec.n_features - 1))
        labels = _labels(feats, dev_rng.standard_normal(n), spec.label_noise)
        if spec.shared_sample_ids is not None:
            ids = np.asarray(spec.shared_sample_ids[i], dtype=np.int64)
        else:
            ids = i * steps + np.arange(n, dtype=np.int64)
        out.append(SellerDataset(i, ids, feats, labels))
    return out


def three_seller_streams(
    mu_x: float, sigma_x: float, mu_y: float, sigma_y: float, n: int, seed: int, chunk: int = 1 << 20
) -> Iterator[np.ndarray]:
    """Yield ``(3, k)`` blocks of the X, Y, Z = 0.5X + Y streams, ``n`` columns in total."""
    if sigma_x <= 0 or sigma_y <= 0:
        raise ValueError("sigma_x and sigma_y must be positive")
    if n < 1:
        raise EmptyDatasetError("three-seller scenario needs n >= 1")
    rng = np.random.default_rng(seed)
    done = 0
    while done < n:
        k = min(chunk, n - done)
        x = rng.normal(mu_x, sigma_x, k)
        y = rng.normal(mu_y, sigma_y, k)
        yield np.stack([x, y, 0.5 * x + y])
        done += k


def make_three_seller_scenario(
    mu_x: float, sigma_x: float, mu_y: float, sigma_y: float, n: int, seed: int, n_features: int = 1
) -> list[SellerDataset]:
    """Sellers 0, 1, 2 carry the X, Y and Z streams respectively."""
    streams = np.concatenate(list(three_seller_streams(mu_x, sigma_x, mu_y, sigma_y, n, seed)), axis=1)
    out = []
    for i in range(3):
        rng = np.random.default_rng([seed, i, 2])
        feats = np.empty((n, n_features))
        feats[:, 0] = streams[i]
        if n_features > 1:
            feats[:, 1:] = rng.standard_normal((n, n_features - 1))
        labels = _labels(feats, rng.standard_normal(n), 0.1)
        out.append(SellerDataset(i, i * n + np.arange(n), feats, labels))
    return out


def make_overlap_scenario(
    sample_sets: Sequence[Sequence[int]], seed: int = 0, n_features: int = 1, label_noise: float = 0.1
) -> list[SellerDataset]:
    """Datasets over explicit global sample ids; a shared id yields identical rows everywhere."""
    out = []
    for i, ids in enumerate(sample_sets):
        ids = sorted(int(s) for s in ids)
        if not ids:
            raise EmptyDatasetError(f"device {i}: empty sample set")
        feats = np.empty((len(ids), n_features))
        noise = np.empty(len(ids))
        for r, sid in enumerate(ids):
            rng = np.random.default_rng([seed, sid])
            feats[r] = rng.standard_normal(n_features)
            noise[r] = rng.standard_normal()
        out.append(SellerDataset(i, np.array(ids), feats, _labels(feats, noise, label_noise)))
    return out


def export_datasets_csv(datasets: Sequence[SellerDataset], path: str | Path) -> None:
    path = Path(path)
    d = datasets[0].n_features if datasets else 1
    try:
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["device_id", "sample_id", *[f"feature_{j}" for j in range(d)], "label"])
            for ds in sorted(datasets, key=lambda s: s.device_id):
                for sid, row, y in zip(ds.sample_ids, ds.features, ds.labels):
                    w.writerow([ds.device_id, int(sid), *(repr(float(v)) for v in row), repr(float(y))])
    except OSError as exc:
        raise OSError(f"cannot write datasets to {path}: {exc}") from exc
