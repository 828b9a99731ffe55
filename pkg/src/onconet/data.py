"""Dataset manifest handling, the preprocessing chain, augmentation, class
rebalancing, batching, and a synthetic blob-image generator for desk-scale
runs.

Pipeline order is fixed: slice selection, masking (masked-CT only),
per-modality normalization, PET upscaling, channel concatenation, then
augmentation for training samples only.
"""
from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .tensor import ShapeError, Tensor, load_tensor, save_tensor

__all__ = [
    "Modality",
    "Sample",
    "ManifestRow",
    "Manifest",
    "MANIFEST_HEADER",
    "select_slice",
    "normalize",
    "resize_bilinear",
    "apply_mask",
    "assemble_input",
    "augment",
    "warp_affine",
    "rebalance",
    "synth_dataset",
    "load_sample",
    "iter_epoch",
    "INSTITUTIONS",
]

INSTITUTIONS = ("site01", "site02", "site03", "site04")

MANIFEST_HEADER = ["patient_id", "institution", "ct_path", "pet_path", "mask_path", "label", "split"]

MAX_SHIFT_FRACTION = 0.4
MAX_ROTATION_DEG = 20.0


class Modality(str, Enum):
    PET = "pet"
    CT = "ct"
    MASKED_CT = "masked_ct"
    PET_CT = "pet_ct"

    @property
    def channels(self) -> int:
        return 2 if self is Modality.PET_CT else 1


@dataclass
class Sample:
    """One patient's 2-d CT slice, PET slice, tumor mask, and outcome label."""

    patient_id: str
    institution: str
    ct: Tensor  # (1, H, W)
    pet: Tensor  # (1, h, w), native resolution <= CT's
    mask: Tensor  # (1, H, W), binary
    label: int  # 0 survival, 1 death
    split: str = "train"
    duplicate: bool = False  # oversampled copy; receives fresh augmentation draws

    def __post_init__(self) -> None:
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label}")
        mv = self.mask.data
        if not np.isin(mv, (0.0, 1.0)).all():
            raise ValueError("mask values must be exactly 0 or 1")


@dataclass(frozen=True)
class ManifestRow:
    patient_id: str
    institution: str
    ct_path: str
    pet_path: str
    mask_path: str
    label: int
    split: str


class Manifest:
    """Index of samples on disk; backed by a plain CSV file."""

    def __init__(self, rows: Sequence[ManifestRow], base_dir: Path | None = None):
        ids = [r.patient_id for r in rows]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ValueError(f"duplicate patient ids in manifest: {dupes}")
        self.rows = list(rows)
        self.base_dir = Path(base_dir) if base_dir is not None else None

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self) -> Iterator[ManifestRow]:
        return iter(self.rows)

    def resolve(self, rel: str) -> Path:
        p = Path(rel)
        if p.is_absolute() or self.base_dir is None:
            return p
        return self.base_dir / p

    def split_rows(self, split: str) -> list[ManifestRow]:
        return [r for r in self.rows if r.split == split]

    @staticmethod
    def read(path) -> "Manifest":
        path = Path(path)
        rows = []
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != MANIFEST_HEADER:
                raise ValueError(
                    f"manifest header {reader.fieldnames} != expected {MANIFEST_HEADER}"
                )
            for rec in reader:
                rows.append(
                    ManifestRow(
                        patient_id=rec["patient_id"],
                        institution=rec["institution"],
                        ct_path=rec["ct_path"],
                        pet_path=rec["pet_path"],
                        mask_path=rec["mask_path"],
                        label=int(rec["label"]),
                        split=rec["split"],
                    )
                )
        return Manifest(rows, base_dir=path.parent)

    def write(self, path) -> None:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(MANIFEST_HEADER)
            for r in self.rows:
                writer.writerow(
                    [r.patient_id, r.institution, r.ct_path, r.pet_path, r.mask_path, r.label, r.split]
                )

    def validate_paths(self) -> None:
        missing = []
        for r in self.rows:
            for rel in (r.ct_path, r.pet_path, r.mask_path):
                if not self.resolve(rel).exists():
                    missing.append(rel)
        if missing:
            raise FileNotFoundError(f"manifest references missing files: {missing}")


def load_sample(manifest: Manifest, row: ManifestRow) -> Sample:
    """Load one manifest row.  Files hold (D, H, W) volumes; multi-slice
    volumes go through largest-tumor-area slice selection, single-slice
    files pass straight through."""
    ct = load_tensor(manifest.resolve(row.ct_path))
    pet = load_tensor(manifest.resolve(row.pet_path))
    mask = load_tensor(manifest.resolve(row.mask_path))
    return select_slice(
        ct,
        pet,
        mask,
        patient_id=row.patient_id,
        institution=row.institution,
        label=row.label,
        split=row.split,
    )


# -- preprocessing ------------------------------------------------------------------


def select_slice(
    ct_volume: Tensor,
    pet_volume: Tensor,
    mask_volume: Tensor,
    *,
    patient_id: str = "",
    institution: str = "",
    label: int = 0,
    split: str = "train",
) -> Sample:
    """Pick the axial slice with the largest tumor area; ties take the lowest index."""
    if ct_volume.ndim != 3 or mask_volume.ndim != 3 or pet_volume.ndim != 3:
        raise ShapeError("volumes must be (D, H, W)")
    d = ct_volume.shape[0]
    if mask_volume.shape[0] != d or pet_volume.shape[0] != d:
        raise ShapeError(
            f"volumes are not slice-aligned: ct {ct_volume.shape[0]}, "
            f"pet {pet_volume.shape[0]}, mask {mask_volume.shape[0]} slices"
        )
    areas = mask_volume.data.reshape(d, -1).sum(axis=1)
    if areas.sum() == 0:
        raise ValueError("mask volume is empty: no tumor region to select")
    idx = int(np.argmax(areas))  # argmax returns the first (lowest) maximizer
    return Sample(
        patient_id=patient_id,
        institution=institution,
        ct=Tensor(ct_volume.data[idx : idx + 1].copy()),
        pet=Tensor(pet_volume.data[idx : idx + 1].copy()),
        mask=Tensor(mask_volume.data[idx : idx + 1].copy()),
        label=label,
        split=split,
    )


def normalize(img: Tensor) -> Tensor:
    """Shift/scale to zero mean and unit population standard deviation."""
    x = img.data.astype(np.float64)
    std = max(float(x.std()), 1e-6)
    out = (x - x.mean()) / std
    return Tensor(out.astype(np.float32))


def _lin_coords(src: int, dst: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # half-pixel center alignment
    s = (np.arange(dst, dtype=np.float64) + 0.5) * (src / dst) - 0.5
    s0 = np.floor(s).astype(np.int64)
    t = s - s0
    lo = np.clip(s0, 0, src - 1)
    hi = np.clip(s0 + 1, 0, src - 1)
    return lo, hi, t


def resize_bilinear(img: Tensor, target: tuple[int, int]) -> Tensor:
    """Upscale (1, h, w) to (1, H, W) by separable linear interpolation."""
    if img.ndim != 3 or img.shape[0] != 1:
        raise ShapeError(f"resize_bilinear expects (1, h, w), got {img.shape}")
    th, tw = target
    h, w = img.shape[1], img.shape[2]
    if th < h or tw < w:
        raise ShapeError(f"downscale requested: source ({h}, {w}) -> target ({th}, {tw})")
    x = img.data[0].astype(np.float64)
    xlo, xhi, tx = _lin_coords(w, tw)
    tmp = x[:, xlo] * (1.0 - tx) + x[:, xhi] * tx
    ylo, yhi, ty = _lin_coords(h, th)
    out = tmp[ylo, :] * (1.0 - ty)[:, None] + tmp[yhi, :] * ty[:, None]
    return Tensor(out[None].astype(np.float32))


def apply_mask(ct: Tensor, mask: Tensor) -> Tensor:
    """Zero the image outside the tumor region (applied before normalization)."""
    if ct.shape != mask.shape:
        raise ShapeError(f"image shape {ct.shape} != mask shape {mask.shape}")
    return Tensor(ct.data * mask.data)


def assemble_input(sample: Sample, modality: Modality) -> Tensor:
    """Build the model input (C, S, S); channel order is CT then PET."""
    target = (sample.ct.shape[1], sample.ct.shape[2])
    if modality is Modality.CT:
        return normalize(sample.ct)
    if modality is Modality.MASKED_CT:
        return normalize(apply_mask(sample.ct, sample.mask))
    if modality is Modality.PET:
        return resize_bilinear(normalize(sample.pet), target)
    if modality is Modality.PET_CT:
        ct = normalize(sample.ct)
        pet = resize_bilinear(normalize(sample.pet), target)
        return Tensor(np.concatenate([ct.data, pet.data], axis=0))
    raise ValueError(f"unknown modality {modality!r}")


# -- augmentation --------------------------------------------------------------------


def warp_affine(x: Tensor, flip: bool, shift: tuple[float, float], angle_deg: float) -> Tensor:
    """Horizontal flip, rotation about the center, then translation, applied
    identically to every channel; bilinear resampling with zero fill."""
    if x.ndim != 3:
        raise ShapeError(f"warp_affine expects (C, H, W), got {x.shape}")
    c, h, w = x.shape
    if h != w:
        raise ShapeError(f"augmentation requires a square image, got ({h}, {w})")
    theta = np.deg2rad(angle_deg)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    dy, dx = shift

    jj, ii = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    # invert: undo translation, rotation, then flip to find the source pixel
    py = ii - dy - cy
    px = jj - dx - cx
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    sy = cos_t * py + sin_t * px + cy
    sx = -sin_t * py + cos_t * px + cx
    if flip:
        sx = (w - 1) - sx

    y0 = np.floor(sy).astype(np.int64)
    x0 = np.floor(sx).astype(np.int64)
    ty = sy - y0
    tx = sx - x0

    data = x.data.astype(np.float64)
    out = np.zeros((c, h, w), dtype=np.float64)
    for oy, ox in ((0, 0), (0, 1), (1, 0), (1, 1)):
        yy = y0 + oy
        xx = x0 + ox
        valid = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
        wgt = (ty if oy else 1.0 - ty) * (tx if ox else 1.0 - tx)
        yc = np.clip(yy, 0, h - 1)
        xc = np.clip(xx, 0, w - 1)
        contrib = data[:, yc, xc] * (wgt * valid)[None]
        out += contrib
    return Tensor(out.astype(np.float32))


def draw_augmentation(rng: np.random.Generator, side: int) -> tuple[bool, tuple[float, float], float]:
    """Sample one transform: flip p=0.5, per-axis shift up to 40% of the side,
    rotation up to 20 degrees.  Draw order is fixed for reproducibility."""
    flip = bool(rng.random() < 0.5)
    dy = float(rng.uniform(-MAX_SHIFT_FRACTION, MAX_SHIFT_FRACTION) * side)
    dx = float(rng.uniform(-MAX_SHIFT_FRACTION, MAX_SHIFT_FRACTION) * side)
    angle = float(rng.uniform(-MAX_ROTATION_DEG, MAX_ROTATION_DEG))
    return flip, (dy, dx), angle


def augment(x: Tensor, rng_seed: int) -> Tensor:
    """Randomly flip/shift/rotate all channels with one shared transform."""
    rng = np.random.default_rng(rng_seed)
    flip, shift, angle = draw_augmentation(rng, x.shape[-1])
    return warp_affine(x, flip, shift, angle)


# -- rebalancing and batching -----------------------------------------------------------


def rebalance(samples: Sequence[Sample], rng: np.random.Generator) -> list[Sample]:
    """Oversample the minority class (with replacement) to equal class counts.

    Duplicates are flagged so downstream augmentation gives them fresh draws.
    """
    pos = [s for s in samples if s.label == 1]
    neg = [s for s in samples if s.label == 0]
    if not pos or not neg:
        raise ValueError("rebalance requires both classes to be present")
    out = list(samples)
    minority, deficit = (pos, len(neg) - len(pos)) if len(pos) < len(neg) else (neg, len(pos) - len(neg))
    for pick in rng.integers(0, len(minority), size=deficit):
        out.append(dataclasses.replace(minority[int(pick)], duplicate=True))
    return out


def iter_epoch(
    samples: Sequence[Sample],
    modality: Modality,
    batch_size: int,
    rng: np.random.Generator,
    *,
    augmenting: bool = True,
    rebalancing: bool = True,
) -> Iterator[tuple[Tensor, np.ndarray]]:
    """Yield shuffled (images, labels) batches for one epoch.

    All randomness (resampling, shuffling, per-item augmentation seeds) flows
    from the passed generator, so one master seed fixes the whole stream.
    """
    items = rebalance(samples, rng) if rebalancing else list(samples)
    order = rng.permutation(len(items))
    for start in range(0, len(items), batch_size):
        chunk = [items[int(i)] for i in order[start : start + batch_size]]
        images = []
        labels = []
        for s in chunk:
            x = assemble_input(s, modality)
            if augmenting:
                x = augment(x, int(rng.integers(0, 2**63)))
            images.append(x.data)
            labels.append(s.label)
        yield Tensor(np.stack(images)), np.asarray(labels, dtype=np.int64)


# -- synthetic data ---------------------------------------------------------------------


def synth_dataset(
    n: int,
    image_size: int,
    seed: int,
    out_dir,
    *,
    pos_fraction: float = 0.5,
    eval_fraction: float = 0.25,
) -> Manifest:
    """Generate a label-correlated blob dataset on disk and return its manifest.

    Death cases get larger tumors and hotter uptake; masks are always
    non-empty.  Identical seeds produce byte-identical files.
    """
    if n < 2:
        raise ValueError(f"need at least 2 samples, got {n}")
    if image_size < 16:
        raise ValueError(f"image_size must be >= 16, got {image_size}")
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    n_pos = int(round(n * pos_fraction))
    n_pos = min(max(n_pos, 1), n - 1)
    labels = np.zeros(n, dtype=np.int64)
    labels[:n_pos] = 1
    rng.shuffle(labels)

    splits = np.array(["train"] * n, dtype=object)
    if eval_fraction > 0:
        for cls in (0, 1):
            idx = np.flatnonzero(labels == cls)
            k = int(round(len(idx) * eval_fraction))
            k = min(max(k, 1 if len(idx) >= 2 else 0), max(len(idx) - 1, 0))
            picked = rng.permutation(idx)[:k]
            splits[picked] = "eval"

    pet_size = max(image_size // 4, 4)
    rows = []
    for i in range(n):
        label = int(labels[i])
        pid = f"synth{i:04d}"
        side = image_size
        cy = side / 2 + rng.uniform(-0.1, 0.1) * side
        cx = side / 2 + rng.uniform(-0.1, 0.1) * side
        base_r = 0.16 if label == 1 else 0.09
        radius = max((base_r + rng.uniform(-0.015, 0.015)) * side, 1.5)

        ii, jj = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
        d2 = (ii - cy) ** 2 + (jj - cx) ** 2
        disk = (d2 <= radius**2).astype(np.float32)
        grad_bg = np.linspace(0.0, 0.3, side, dtype=np.float32)[:, None]
        ct = grad_bg + 0.6 * disk + rng.normal(0, 0.05, size=(side, side)).astype(np.float32)

        pi, pj = np.meshgrid(np.arange(pet_size), np.arange(pet_size), indexing="ij")
        scale = side / pet_size
        pd2 = (pi - cy / scale) ** 2 + (pj - cx / scale) ** 2
        sigma = max(radius / scale, 1.0)
        pet = ((0.7 + 0.6 * label) * np.exp(-pd2 / (2 * sigma**2))).astype(np.float32)
        pet += rng.normal(0, 0.02, size=(pet_size, pet_size)).astype(np.float32)

        ct_rel = f"images/{pid}_ct.tnsr"
        pet_rel = f"images/{pid}_pet.tnsr"
        mask_rel = f"images/{pid}_mask.tnsr"
        save_tensor(out_dir / ct_rel, Tensor(ct[None]))
        save_tensor(out_dir / pet_rel, Tensor(pet[None]))
        save_tensor(out_dir / mask_rel, Tensor(disk[None]))
        rows.append(
            ManifestRow(
                patient_id=pid,
                institution=INSTITUTIONS[i % len(INSTITUTIONS)],
                ct_path=ct_rel,
                pet_path=pet_rel,
                mask_path=mask_rel,
                label=label,
                split=str(splits[i]),
            )
        )

    manifest = Manifest(rows, base_dir=out_dir)
    manifest.write(out_dir / "manifest.csv")
    return manifest
