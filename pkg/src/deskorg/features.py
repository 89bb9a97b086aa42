"""One-hot encoding of objects and scene contexts under modality masks."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .core import ATTRIBUTES, DOMAINS, AttributeSet, Scene, domain_index
from .errors import ConfigurationError, DegeneratePairError, DimensionError

# Which attributes each sensing modality contributes.
DEFAULT_MODALITY_MAP: Mapping[str, tuple[str, ...]] = {
    "H": ("weight", "rigidity"),
    "U": ("utility",),
    "V": ("color", "shape", "size"),
}

ABLATION_MASKS = ("HUV", "HV", "UV", "HU", "H", "U", "V")


@dataclass(frozen=True)
class ModalityMask:
    include_h: bool = True
    include_u: bool = True
    include_v: bool = True
    modality_map: tuple[tuple[str, tuple[str, ...]], ...] = tuple(DEFAULT_MODALITY_MAP.items())

    def __post_init__(self):
        if not (self.include_h or self.include_u or self.include_v):
            raise ConfigurationError("a modality mask must enable at least one modality")
        groups = dict(self.modality_map)
        if sorted(groups) != ["H", "U", "V"]:
            raise ConfigurationError(f"modality map must define H, U and V, got {sorted(groups)}")
        for attrs in groups.values():
            unknown = set(attrs) - set(ATTRIBUTES)
            if unknown:
                raise ConfigurationError(f"unknown attributes in modality map: {sorted(unknown)}")
        object.__setattr__(self, "modality_map", tuple((k, tuple(groups[k])) for k in ("H", "U", "V")))

    @classmethod
    def parse(cls, text: str, modality_map: Optional[Mapping[str, Sequence[str]]] = None) -> "ModalityMask":
        letters = text.strip().upper()
        if not letters or set(letters) - set("HUV") or len(set(letters)) != len(letters):
            raise ConfigurationError(f"modality mask must be a subset of 'HUV', got {text!r}")
        mm = tuple((k, tuple(v)) for k, v in (modality_map or DEFAULT_MODALITY_MAP).items())
        return cls("H" in letters, "U" in letters, "V" in letters, mm)

    @property
    def name(self) -> str:
        return "".join(m for m, on in zip("HUV", (self.include_h, self.include_u, self.include_v)) if on)

    @property
    def attributes(self) -> tuple[str, ...]:
        """Enabled attributes, in canonical attribute order."""
        groups = dict(self.modality_map)
        enabled = set()
        for letter, on in zip("HUV", (self.include_h, self.include_u, self.include_v)):
            if on:
                enabled.update(groups[letter])
        return tuple(a for a in ATTRIBUTES if a in enabled)

    def __str__(self):
        return self.name


def all_masks(modality_map: Optional[Mapping[str, Sequence[str]]] = None) -> list[ModalityMask]:
    return [ModalityMask.parse(m, modality_map) for m in ABLATION_MASKS]


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    layout: tuple[tuple[int, str, object], ...]  # (object slot, attribute, value) per index

    def __len__(self):
        return len(self.values)


def object_layout(mask: ModalityMask) -> tuple[tuple[str, object], ...]:
    return tuple((a, v) for a in mask.attributes for v in DOMAINS[a])


def object_length(mask: ModalityMask) -> int:
    return sum(len(DOMAINS[a]) for a in mask.attributes)


def _object_bits(attrs: AttributeSet, mask: ModalityMask) -> np.ndarray:
    bits = np.zeros(object_length(mask), dtype=np.uint8)
    offset = 0
    for a in mask.attributes:
        bits[offset + domain_index(a, attrs.get(a))] = 1
        offset += len(DOMAINS[a])
    return bits


def _slot_layout(mask: ModalityMask, slots: int):
    per_object = object_layout(mask)
    return tuple((s, a, v) for s in range(slots) for a, v in per_object)


def encode_object(attrs: AttributeSet, mask: ModalityMask) -> FeatureVector:
    return FeatureVector(_object_bits(attrs, mask), _slot_layout(mask, 1))


def decode_object(values: Sequence[int], mask: ModalityMask) -> dict:
    """Recover the enabled attributes from one object block."""
    layout = object_layout(mask)
    if len(values) != len(layout):
        raise DimensionError(f"object block has length {len(values)}, mask {mask} needs {len(layout)}")
    out = {}
    for bit, (a, v) in zip(values, layout):
        if bit:
            if a in out:
                raise DimensionError(f"attribute {a} has more than one active bit")
            out[a] = v
    return out


def _check_k(scene: Scene, k: Optional[int]) -> None:
    if k is not None and scene.k != k:
        raise DimensionError(f"scene {scene.scene_id!r} has {scene.k} objects; model was trained on K={k}")


def _context(blocks: list[np.ndarray]) -> list[np.ndarray]:
    return sorted(blocks, key=lambda b: b.tobytes())


def _quad_bits(blocks, target):
    ctx = [b for i, b in enumerate(blocks) if i != target]
    return np.concatenate([blocks[target], *_context(ctx)])


def _rel_bits(blocks, i, j):
    ctx = [b for n, b in enumerate(blocks) if n not in (i, j)]
    return np.concatenate([blocks[i], blocks[j], *_context(ctx)])


def encode_quad_sample(scene: Scene, target: int, mask: ModalityMask, k: Optional[int] = None) -> FeatureVector:
    """Target block followed by the other objects' blocks in canonical order."""
    _check_k(scene, k)
    blocks = [_object_bits(o.attrs, mask) for o in scene]
    return FeatureVector(_quad_bits(blocks, target), _slot_layout(mask, scene.k))


def encode_rel_sample(scene: Scene, i: int, j: int, mask: ModalityMask, k: Optional[int] = None) -> FeatureVector:
    if i == j:
        raise DegeneratePairError(f"relation sample needs two distinct objects, got ({i}, {j})")
    _check_k(scene, k)
    blocks = [_object_bits(o.attrs, mask) for o in scene]
    return FeatureVector(_rel_bits(blocks, i, j), _slot_layout(mask, scene.k))


def scene_quad_matrix(scene: Scene, mask: ModalityMask, k: Optional[int] = None) -> np.ndarray:
    """Rows are quad samples for objects 0..K-1."""
    _check_k(scene, k)
    blocks = [_object_bits(o.attrs, mask) for o in scene]
    return np.stack([_quad_bits(blocks, t) for t in range(scene.k)])


def scene_rel_matrix(scene: Scene, mask: ModalityMask, pairs, k: Optional[int] = None) -> np.ndarray:
    _check_k(scene, k)
    blocks = [_object_bits(o.attrs, mask) for o in scene]
    width = scene.k * len(blocks[0])
    if not pairs:
        return np.zeros((0, width), dtype=np.uint8)
    return np.stack([_rel_bits(blocks, i, j) for i, j in pairs])
