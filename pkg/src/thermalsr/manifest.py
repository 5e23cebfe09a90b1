"""Dataset manifests and stratified split assignment.

A manifest records every usable image under a dataset root together with
its acquisition class (aerial or ground sensor).  Splits follow the
benchmark protocol: class-stratified train and validation draws, then an
unstratified test draw from the remaining pool.  Entries are sorted by id
before any seeded shuffle, so the assignment is independent of filesystem
enumeration order.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace

from .image_io import FormatError, read_header
from .rng import substream

SPLITS = ("train", "val", "test", "unassigned")
_IMAGE_EXTS = (".png", ".pgm")


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    path: str
    source_class: str
    width: int
    height: int
    bit_depth: int
    split: str = "unassigned"

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValueError(f"bad split {self.split!r}")

    def to_json_dict(self) -> dict:
        return {
            "id": self.id,
            "path": self.path,
            "class": self.source_class,
            "width": self.width,
            "height": self.height,
            "bit_depth": self.bit_depth,
            "split": self.split,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "ManifestEntry":
        return cls(id=d["id"], path=d["path"], source_class=d["class"],
                   width=d["width"], height=d["height"], bit_depth=d["bit_depth"],
                   split=d.get("split", "unassigned"))


@dataclass(frozen=True)
class SplitSpec:
    """Per-class train/val counts plus an unstratified test count."""

    train_aerial: int = 150
    train_ground: int = 50
    val_aerial: int = 30
    val_ground: int = 20
    test_total: int = 50
    seed: int = 0

    def to_json_dict(self) -> dict:
        return {
            "train": {"aerial": self.train_aerial, "ground": self.train_ground},
            "val": {"aerial": self.val_aerial, "ground": self.val_ground},
            "test": {"total": self.test_total},
            "seed": self.seed,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "SplitSpec":
        return cls(
            train_aerial=d.get("train", {}).get("aerial", 0),
            train_ground=d.get("train", {}).get("ground", 0),
            val_aerial=d.get("val", {}).get("aerial", 0),
            val_ground=d.get("val", {}).get("ground", 0),
            test_total=d.get("test", {}).get("total", 0),
            seed=d.get("seed", 0),
        )


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry]
    spec: SplitSpec | None = None
    seed: int | None = None
    skipped: list[str] = field(default_factory=list)

    def __post_init__(self):
        ids = [e.id for e in self.entries]
        if len(ids) != len(set(ids)):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ValueError(f"duplicate manifest ids: {dupes[:5]}")

    def __len__(self) -> int:
        return len(self.entries)

    def by_split(self, split: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == split]

    def class_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for e in self.entries:
            counts[e.source_class] = counts.get(e.source_class, 0) + 1
        return counts

    def to_json_dict(self) -> dict:
        return {
            "entries": [e.to_json_dict() for e in sorted(self.entries, key=lambda e: e.id)],
            "spec": None if self.spec is None else self.spec.to_json_dict(),
            "seed": self.seed,
        }

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | os.PathLike) -> "DatasetManifest":
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
        return cls(
            entries=[ManifestEntry.from_json_dict(e) for e in d["entries"]],
            spec=None if d.get("spec") is None else SplitSpec.from_json_dict(d["spec"]),
            seed=d.get("seed"),
        )


def scan_dataset(root: str | os.PathLike, class_rule: dict[str, str] | None = None) -> DatasetManifest:
    """Recursively index supported images under root.

    The acquisition class comes from the top-level subdirectory through
    class_rule (default: the subdirectory's own name; files directly under
    root are classed 'unknown').  Dimensions and bit depth are read from
    file headers without decoding the raster.  Unreadable files are listed
    in manifest.skipped; an empty result is fatal.
    """
    root = os.fspath(root)
    if not os.path.isdir(root):
        raise ValueError(f"dataset root does not exist: {root}")
    entries = []
    skipped = []
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames.sort()
        for name in sorted(filenames):
            if os.path.splitext(name)[1].lower() not in _IMAGE_EXTS:
                continue
            path = os.path.join(dirpath, name)
            rel = os.path.relpath(path, root)
            parts = rel.replace(os.sep, "/").split("/")
            subdir = parts[0] if len(parts) > 1 else ""
            cls_name = (class_rule or {}).get(subdir, subdir or "unknown")
            try:
                width, height, _channels, depth = read_header(path)
            except (FormatError, OSError) as exc:
                skipped.append(f"{rel}: {exc}")
                continue
            entry_id = os.path.splitext(rel.replace(os.sep, "/"))[0]
            entries.append(ManifestEntry(id=entry_id, path=path, source_class=cls_name,
                                         width=width, height=height, bit_depth=depth))
    if not entries:
        raise ValueError(f"no usable images under {root}")
    return DatasetManifest(entries=entries, skipped=skipped)


def split_dataset(manifest: DatasetManifest, spec: SplitSpec) -> DatasetManifest:
    """Assign train/val/test splits per the benchmark protocol.

    Within each class, entries are sorted by id and shuffled with a seeded
    substream; train then val take their per-class counts, and the test
    split draws unstratified from everything left over.  The same seed
    always yields the same assignment, regardless of input entry order.
    """
    by_class: dict[str, list[ManifestEntry]] = {}
    for e in sorted(manifest.entries, key=lambda e: e.id):
        by_class.setdefault(e.source_class, []).append(e)

    need = {
        "aerial": spec.train_aerial + spec.val_aerial,
        "ground": spec.train_ground + spec.val_ground,
    }
    shortfalls = []
    for cls_name, needed in need.items():
        have = len(by_class.get(cls_name, []))
        if have < needed:
            shortfalls.append(f"{cls_name} shortfall {needed - have} "
                              f"(need {needed} for train+val, have {have})")
    if shortfalls:
        raise ValueError("insufficient images: " + "; ".join(shortfalls))

    assignment: dict[str, str] = {}
    leftover: list[ManifestEntry] = []
    plan = {
        "aerial": (spec.train_aerial, spec.val_aerial),
        "ground": (spec.train_ground, spec.val_ground),
    }
    for cls_name, group in sorted(by_class.items()):
        rng = substream(spec.seed, "split", _class_tag(cls_name))
        order = list(rng.permutation(len(group)))
        n_train, n_val = plan.get(cls_name, (0, 0))
        for rank, idx in enumerate(order):
            if rank < n_train:
                assignment[group[idx].id] = "train"
            elif rank < n_train + n_val:
                assignment[group[idx].id] = "val"
            else:
                leftover.append(group[idx])

    if len(leftover) < spec.test_total:
        raise ValueError(f"test shortfall {spec.test_total - len(leftover)} "
                         f"(need {spec.test_total}, have {len(leftover)} unassigned)")
    leftover.sort(key=lambda e: e.id)
    rng = substream(spec.seed, "split", 0)
    order = list(rng.permutation(len(leftover)))
    for rank, idx in enumerate(order):
        assignment[leftover[idx].id] = "test" if rank < spec.test_total else "unassigned"

    entries = [replace(e, split=assignment.get(e.id, "unassigned")) for e in manifest.entries]
    return DatasetManifest(entries=entries, spec=spec, seed=spec.seed, skipped=list(manifest.skipped))


def _class_tag(name: str) -> int:
    # Stable small integer per class name for substream derivation.
    return int.from_bytes(name.encode("utf-8")[:6].ljust(6, b"\0"), "big") + 1
