"""Dataset construction: synthetic generators, delimited-text ingestion,
min-max scaling, and OOD/train/val/test splitting.

Scaling statistics are always fit on the training split only. OOD rows are
stored unclipped, so their scaled targets may exceed 1; that is what makes
OOD metrics meaningful when the OOD set holds the largest targets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import dna
from .augment import BoxBounds
from .dna import (decode_dna, encode_dna, enumerate_canonical_8mers,  # noqa: F401
                  gc_content, reverse_complement)
from .errors import ParseError, SplitError
from .rng import NOISE, SPLIT, stream

DEFAULT_TOY_REGIONS = ((0.2, 0.4), (0.7, 0.9))
# The generator noise is quoted as N(0, 0.02); read as a variance.
DEFAULT_TOY_NOISE_STD = math.sqrt(0.02)


@dataclass(frozen=True)
class ScalingInfo:
    """Per-column min/max for features plus target min/max, fit on train rows."""

    feature_min: np.ndarray
    feature_max: np.ndarray
    target_min: float
    target_max: float


@dataclass
class Dataset:
    """Feature matrix with targets, the input box, and scaling provenance.

    ``declared_domain`` marks datasets whose bounds are part of the problem
    definition (synthetic/one-hot inputs) rather than inferred from rows.
    """

    features: np.ndarray            # (n, D)
    targets: np.ndarray             # (n,)
    bounds: BoxBounds
    scaling: ScalingInfo | None = None
    name: str = ""
    sequences: tuple[str, ...] | None = None
    declared_domain: bool = False

    def __post_init__(self):
        self.features = np.atleast_2d(np.asarray(self.features, dtype=np.float64))
        self.targets = np.asarray(self.targets, dtype=np.float64)
        if self.features.shape[0] != self.targets.shape[0]:
            raise ValueError("features and targets disagree on row count")
        if self.features.shape[0] < 1:
            raise ValueError("dataset must have at least one row")
        if not (np.all(np.isfinite(self.features)) and np.all(np.isfinite(self.targets))):
            raise ValueError("non-finite entries in dataset")
        if self.sequences is not None and len(self.sequences) != len(self.targets):
            raise ValueError("sequences and targets disagree on row count")

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class OODRule:
    """How to carve the OOD subset out of a dataset."""

    kind: str  # top_y_fraction | gc_content | none
    value: float = 0.0

    @staticmethod
    def top_y(fraction: float) -> "OODRule":
        return OODRule("top_y_fraction", fraction)

    @staticmethod
    def gc(threshold: float) -> "OODRule":
        return OODRule("gc_content", threshold)

    @staticmethod
    def parse(text: str) -> "OODRule":
        text = text.strip()
        if text == "none":
            return OODRule("none")
        if ":" not in text:
            raise ParseError(f"cannot parse OOD rule {text!r}")
        kind, _, value = text.partition(":")
        if kind not in ("top_y_fraction", "gc_content"):
            raise ParseError(f"unknown OOD rule kind {kind!r}")
        return OODRule(kind, float(value))


@dataclass(frozen=True)
class SplitSpec:
    """Train/val sizing (fractional or absolute) plus the shuffle seed."""

    train_fraction: float | None = None
    val_fraction: float | None = None
    train_count: int | None = None
    val_count: int | None = None
    seed: int = 0

    def __post_init__(self):
        fractional = self.train_fraction is not None and self.val_fraction is not None
        absolute = self.train_count is not None and self.val_count is not None
        if fractional == absolute:
            raise ValueError("specify either fractions or absolute counts, not both")
        if fractional:
            if self.train_fraction <= 0 or self.val_fraction <= 0:
                raise ValueError("fractions must be positive")
            if self.train_fraction + self.val_fraction >= 1:
                raise ValueError("train+val fractions must leave room for a test split")


def toy_function(x: np.ndarray) -> np.ndarray:
    """The 1-D target curve: 0.3x + 0.3 sin(2 pi x) + 0.3 sin(4 pi x)."""
    x = np.asarray(x, dtype=np.float64)
    return 0.3 * x + 0.3 * np.sin(2 * np.pi * x) + 0.3 * np.sin(4 * np.pi * x)


def synth_1d(n_per_region: int, regions=DEFAULT_TOY_REGIONS,
             noise_std: float = DEFAULT_TOY_NOISE_STD, seed: int = 0,
             domain: tuple[float, float] = (0.0, 1.0)) -> Dataset:
    """Noisy draws of the toy curve inside each training region.

    ``domain`` declares the full input box, which is wider than the union
    of the sampled regions; the gap is what OOD evaluation probes.
    """
    if not regions:
        raise ValueError("need at least one region")
    if noise_std < 0:
        raise ValueError("noise_std must be nonnegative")
    rng = stream(seed, NOISE)
    xs = []
    for lo, hi in regions:
        xs.append(rng.uniform(lo, hi, size=n_per_region))
    x = np.concatenate(xs)
    y = toy_function(x)
    if noise_std > 0:
        y = y + noise_std * rng.standard_normal(x.shape[0])
    return Dataset(features=x[:, None], targets=y,
                   bounds=BoxBounds(np.array([domain[0]]), np.array([domain[1]])),
                   name="synth1d", declared_domain=True)


def synth_1d_grid(n_points: int = 512,
                  domain: tuple[float, float] = (0.0, 1.0)) -> Dataset:
    """Noise-free pool on an even grid, targets min-max scaled to [0, 1]."""
    x = np.linspace(domain[0], domain[1], n_points)
    y = toy_function(x)
    y = (y - y.min()) / (y.max() - y.min())
    return Dataset(features=x[:, None], targets=y,
                   bounds=BoxBounds(np.array([domain[0]]), np.array([domain[1]])),
                   name="synth1d-grid", declared_domain=True)


def load_delimited(path: str | Path, target_column: str | int,
                   delimiter: str = ",") -> Dataset:
    """Parse a delimited numeric file into a raw dataset.

    A header row is auto-detected (any non-numeric cell). The target column
    may be named (requires a header) or a zero-based index. Blank trailing
    lines are ignored; ragged or non-numeric rows are reported with their
    line number.
    """
    path = Path(path)
    if not path.exists():
        raise ParseError(f"no such file: {path}")
    rows = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            rows.append((lineno, [c.strip() for c in line.split(delimiter)]))
    if not rows:
        raise ParseError(f"{path}: empty file")

    def numeric(cells):
        try:
            return [float(c) for c in cells]
        except ValueError:
            return None

    header = None
    if numeric(rows[0][1]) is None:
        header = rows[0][1]
        rows = rows[1:]
    if not rows:
        raise ParseError(f"{path}: no data rows")

    width = len(header) if header is not None else len(rows[0][1])
    if isinstance(target_column, str):
        if header is None:
            raise ParseError(f"{path}: named target column needs a header row")
        if target_column not in header:
            raise ParseError(f"{path}: no column named {target_column!r}")
        target_idx = header.index(target_column)
    else:
        target_idx = int(target_column)
        if not 0 <= target_idx < width:
            raise ParseError(f"{path}: target index {target_idx} out of range")

    matrix = []
    for lineno, cells in rows:
        if len(cells) != width:
            raise ParseError(f"{path}:{lineno}: expected {width} cells, got {len(cells)}")
        values = numeric(cells)
        if values is None:
            raise ParseError(f"{path}:{lineno}: non-numeric cell")
        matrix.append(values)
    data = np.asarray(matrix, dtype=np.float64)
    targets = data[:, target_idx]
    features = np.delete(data, target_idx, axis=1)
    if features.shape[1] == 0:
        raise ParseError(f"{path}: no feature columns besides the target")
    bounds = BoxBounds(features.min(axis=0), features.max(axis=0))
    return Dataset(features=features, targets=targets, bounds=bounds, name=path.stem)


def fit_scaling(features: np.ndarray, targets: np.ndarray,
                feature_bounds: BoxBounds | None = None) -> ScalingInfo:
    """Min-max statistics from training rows (or a declared feature box)."""
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    targets = np.asarray(targets, dtype=np.float64)
    if features.shape[0] == 0:
        raise ValueError("cannot fit scaling on an empty split")
    if feature_bounds is not None:
        fmin, fmax = feature_bounds.lower.copy(), feature_bounds.upper.copy()
    else:
        fmin, fmax = features.min(axis=0), features.max(axis=0)
    return ScalingInfo(feature_min=fmin, feature_max=fmax,
                       target_min=float(targets.min()), target_max=float(targets.max()))


def _minmax(values: np.ndarray, low, high) -> np.ndarray:
    span = np.asarray(high, dtype=np.float64) - np.asarray(low, dtype=np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = (values - low) / span
    # Constant columns carry no information; park them at the midpoint.
    return np.where(span == 0, 0.5, out)


def apply_scaling(info: ScalingInfo, features: np.ndarray,
                  targets: np.ndarray | None = None):
    """Scale rows by training statistics. Values are not clipped."""
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    scaled = _minmax(features, info.feature_min, info.feature_max)
    if targets is None:
        return scaled
    targets = np.asarray(targets, dtype=np.float64)
    return scaled, _minmax(targets, info.target_min, info.target_max)


def unscale_targets(info: ScalingInfo, targets: np.ndarray) -> np.ndarray:
    targets = np.asarray(targets, dtype=np.float64)
    span = info.target_max - info.target_min
    if span == 0:
        return np.full_like(targets, info.target_min)
    return info.target_min + targets * span


def scale_dataset(ds: Dataset, info: ScalingInfo) -> Dataset:
    """Apply training-fit scaling; the sampler box becomes the unit cube."""
    features, targets = apply_scaling(info, ds.features, ds.targets)
    return replace(ds, features=features, targets=targets,
                   bounds=BoxBounds.unit(ds.dim), scaling=info)


def _take(ds: Dataset, idx: np.ndarray) -> Dataset:
    seqs = tuple(ds.sequences[i] for i in idx) if ds.sequences is not None else None
    return replace(ds, features=ds.features[idx].copy(),
                   targets=ds.targets[idx].copy(), sequences=seqs)


def split_ood(ds: Dataset, rule: OODRule) -> tuple[Dataset, Dataset]:
    """Partition rows into (in-distribution, OOD) per the rule."""
    n = len(ds)
    if rule.kind == "top_y_fraction":
        k = math.ceil(rule.value * n)
        order = np.argsort(-ds.targets, kind="stable")
        ood_mask = np.zeros(n, dtype=bool)
        ood_mask[order[:k]] = True
    elif rule.kind == "gc_content":
        if ds.sequences is not None:
            gc = np.array([dna.gc_content(s) for s in ds.sequences])
        else:
            gc = dna.gc_content_onehot(ds.features)
        ood_mask = gc > rule.value
    elif rule.kind == "none":
        raise SplitError("OOD rule 'none' does not define a split")
    else:
        raise SplitError(f"unknown OOD rule {rule.kind!r}")
    ood_idx = np.flatnonzero(ood_mask)
    in_idx = np.flatnonzero(~ood_mask)
    if len(ood_idx) == 0 or len(in_idx) == 0:
        raise SplitError(f"OOD rule {rule.kind} left an empty side "
                         f"({len(in_idx)} in-dist, {len(ood_idx)} OOD)")
    return _take(ds, in_idx), _take(ds, ood_idx)


def split_train_val_test(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset, Dataset]:
    """Seeded shuffle, then contiguous train/val/test slices."""
    n = len(ds)
    if spec.train_count is not None:
        n_train, n_val = spec.train_count, spec.val_count
    else:
        n_train = int(spec.train_fraction * n)
        n_val = int(spec.val_fraction * n)
    if n_train < 1 or n_val < 1 or n_train + n_val >= n:
        raise SplitError(f"infeasible split sizes train={n_train}, val={n_val} of n={n}")
    perm = stream(spec.seed, SPLIT).permutation(n)
    return (_take(ds, perm[:n_train]),
            _take(ds, perm[n_train:n_train + n_val]),
            _take(ds, perm[n_train + n_val:]))


def prepare_splits(ds: Dataset, ood_rule: OODRule | None, split: SplitSpec
                   ) -> tuple[Dataset, Dataset, Dataset, Dataset | None]:
    """The full protocol: OOD carve-out, train/val/test shuffle, then scaling.

    Returns scaled (train, val, test, ood). Scaling is fit on the training
    rows (features fall back to the declared domain when the dataset has
    one) and applied unclipped everywhere else.
    """
    if ood_rule is not None and ood_rule.kind != "none":
        in_dist, ood = split_ood(ds, ood_rule)
    else:
        in_dist, ood = ds, None
    train, val, test = split_train_val_test(in_dist, split)
    feature_bounds = ds.bounds if ds.declared_domain else None
    info = fit_scaling(train.features, train.targets, feature_bounds=feature_bounds)
    return (scale_dataset(train, info), scale_dataset(val, info),
            scale_dataset(test, info),
            scale_dataset(ood, info) if ood is not None else None)


def synthetic_binding_dataset(seed: int = 0, noise_std: float = 0.02,
                              motif: str = "CACGTG") -> Dataset:
    """Seeded binding-affinity surrogate over the canonical 8-mer universe.

    Affinity is a smooth power of the best motif match fraction over all
    alignments on either strand, plus Gaussian noise, min-max scaled to
    [0, 1]. Stands in for microarray data in desk-scale runs.
    """
    universe = dna.enumerate_canonical_8mers()
    width = len(motif)
    if not 1 <= width <= dna.SEQUENCE_LENGTH:
        raise ValueError("motif longer than the sequences")
    scores = np.empty(len(universe))
    for i, seq in enumerate(universe):
        best = 0
        for cand in (seq, dna.reverse_complement(seq)):
            for off in range(dna.SEQUENCE_LENGTH - width + 1):
                hits = sum(1 for a, b in zip(cand[off:off + width], motif) if a == b)
                best = max(best, hits)
        scores[i] = (best / width) ** 4
    rng = stream(seed, NOISE)
    y = scores + noise_std * rng.standard_normal(len(universe))
    y = (y - y.min()) / (y.max() - y.min())
    return Dataset(features=dna.encoded_canonical_universe().copy(), targets=y,
                   bounds=BoxBounds.unit(dna.ENCODED_LENGTH), name="dna-synthetic",
                   sequences=universe, declared_domain=True)


# ---------------------------------------------------------------------------
# Dataset manifests: flat key = value text files.

def read_manifest(path: str | Path) -> dict[str, str]:
    path = Path(path)
    if not path.exists():
        raise ParseError(f"no such manifest: {path}")
    out: dict[str, str] = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    if "kind" not in out:
        raise ParseError(f"{path}: manifest is missing 'kind'")
    return out


@dataclass
class DatasetSpec:
    """A resolved manifest: raw dataset plus split instructions."""

    dataset: Dataset
    ood_rule: OODRule | None
    train_fraction: float | None
    val_fraction: float | None
    train_count: int | None
    val_count: int | None


def _parse_regions(text: str):
    out = []
    for part in text.split(","):
        lo, _, hi = part.partition(":")
        out.append((float(lo), float(hi)))
    return tuple(out)


def dataset_from_manifest(manifest: dict[str, str], base_dir: str | Path = ".",
                          generation_seed: int | None = None) -> DatasetSpec:
    """Materialize the dataset a manifest describes.

    ``generation_seed`` overrides the manifest's own seed for synthetic
    kinds (used to vary replicates).
    """
    kind = manifest["kind"]
    seed = generation_seed if generation_seed is not None else int(manifest.get("seed", "0"))
    if kind == "delimited":
        target: str | int = manifest["target_column"]
        if isinstance(target, str) and target.lstrip("-").isdigit():
            target = int(target)
        ds = load_delimited(Path(base_dir) / manifest["path"], target,
                            delimiter=manifest.get("delimiter", ","))
    elif kind == "synth1d":
        lo, _, hi = manifest.get("domain", "0:1").partition(":")
        ds = synth_1d(n_per_region=int(manifest.get("n_per_region", "50")),
                      regions=_parse_regions(manifest.get("regions", "0.2:0.4,0.7:0.9")),
                      noise_std=float(manifest.get("noise_std", str(DEFAULT_TOY_NOISE_STD))),
                      seed=seed, domain=(float(lo), float(hi)))
    elif kind == "synth1d-grid":
        lo, _, hi = manifest.get("domain", "0:1").partition(":")
        ds = synth_1d_grid(n_points=int(manifest.get("n_points", "512")),
                           domain=(float(lo), float(hi)))
    elif kind == "dna-synthetic":
        ds = synthetic_binding_dataset(seed=seed,
                                       noise_std=float(manifest.get("noise_std", "0.02")),
                                       motif=manifest.get("motif", "CACGTG"))
    else:
        raise ParseError(f"unknown dataset kind {kind!r}")
    if "name" in manifest:
        ds = replace(ds, name=manifest["name"])

    rule = OODRule.parse(manifest["ood_rule"]) if "ood_rule" in manifest else None

    def opt_float(key):
        return float(manifest[key]) if key in manifest else None

    def opt_int(key):
        return int(manifest[key]) if key in manifest else None

    return DatasetSpec(dataset=ds, ood_rule=rule,
                       train_fraction=opt_float("train_fraction"),
                       val_fraction=opt_float("val_fraction"),
                       train_count=opt_int("train_count"),
                       val_count=opt_int("val_count"))
