"""
Class-level tables. Row order of a ClassEmbeddingTable is the canonical class
index used by every downstream module.
"""
from typing import Iterable

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from app.model.error import MissingClassError, ProtocolError, ShapeError


def _frozen_array(value) -> np.ndarray:
    arr = np.array(value, dtype=np.float64, copy=True, order="C")
    if arr.ndim != 2:
        raise ShapeError(f"expected a 2-D array, got {arr.ndim}-D")
    if not np.all(np.isfinite(arr)):
        raise ShapeError("table contains non-finite values")
    arr.setflags(write=False)
    return arr


class _ClassTable(BaseModel):
    """Shared behaviour of name-indexed tables (one row per class)."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    class_names: tuple[str, ...]

    @field_validator("class_names", mode="before")
    @classmethod
    def _names_tuple(cls, value: Iterable[str]) -> tuple[str, ...]:
        return tuple(value)

    def _rows(self) -> np.ndarray:
        raise NotImplementedError

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    @property
    def dim(self) -> int:
        return int(self._rows().shape[1])

    def index_of(self, name: str) -> int:
        try:
            return self.class_names.index(name)
        except ValueError:
            raise MissingClassError(f"unknown class '{name}'", class_name=name) from None

    def _check_rows(self, rows: np.ndarray):
        if len(set(self.class_names)) != len(self.class_names):
            seen: set[str] = set()
            dup = next(n for n in self.class_names if n in seen or seen.add(n))
            raise ProtocolError(f"duplicate class name '{dup}'", class_name=dup)
        if rows.shape[0] != len(self.class_names):
            raise ShapeError(
                f"{rows.shape[0]} rows for {len(self.class_names)} class names",
                rows=rows.shape[0], names=len(self.class_names)
            )


class ClassEmbeddingTable(_ClassTable):
    """Class name <-> semantic vector (raw word embedding or mapped VAWE)."""
    vectors: np.ndarray

    @field_validator("vectors", mode="before")
    @classmethod
    def _vectors_array(cls, value) -> np.ndarray:
        return _frozen_array(value)

    @model_validator(mode="after")
    def _consistent(self) -> "ClassEmbeddingTable":
        self._check_rows(self.vectors)
        return self

    def _rows(self) -> np.ndarray:
        return self.vectors

    def subset(self, names: Iterable[str]) -> "ClassEmbeddingTable":
        """Rows for `names`, in the order given."""
        names = tuple(names)
        idx = [self.index_of(n) for n in names]
        return ClassEmbeddingTable(class_names=names, vectors=self.vectors[idx])


class VisualSignatureTable(_ClassTable):
    """Class name <-> mean visual feature vector."""
    signatures: np.ndarray

    @field_validator("signatures", mode="before")
    @classmethod
    def _signatures_array(cls, value) -> np.ndarray:
        return _frozen_array(value)

    @model_validator(mode="after")
    def _consistent(self) -> "VisualSignatureTable":
        self._check_rows(self.signatures)
        return self

    def _rows(self) -> np.ndarray:
        return self.signatures

    def subset(self, names: Iterable[str]) -> "VisualSignatureTable":
        names = tuple(names)
        idx = [self.index_of(n) for n in names]
        return VisualSignatureTable(class_names=names, signatures=self.signatures[idx])


class LabeledFeatureSet(BaseModel):
    """One visual feature row per image, labeled by class name."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    class_labels: tuple[str, ...]
    features: np.ndarray

    @field_validator("class_labels", mode="before")
    @classmethod
    def _labels_tuple(cls, value: Iterable[str]) -> tuple[str, ...]:
        return tuple(value)

    @field_validator("features", mode="before")
    @classmethod
    def _features_array(cls, value) -> np.ndarray:
        return _frozen_array(value)

    @model_validator(mode="after")
    def _consistent(self) -> "LabeledFeatureSet":
        if self.features.shape[0] != len(self.class_labels):
            raise ShapeError(
                f"{self.features.shape[0]} feature rows for {len(self.class_labels)} labels"
            )
        return self

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])

    @property
    def num_rows(self) -> int:
        return len(self.class_labels)

    def classes(self) -> tuple[str, ...]:
        """Distinct labels in order of first appearance."""
        return tuple(dict.fromkeys(self.class_labels))

    def restrict(self, names: Iterable[str]) -> "LabeledFeatureSet":
        keep = set(names)
        mask = np.array([label in keep for label in self.class_labels], dtype=bool)
        return LabeledFeatureSet(
            class_labels=[l for l, m in zip(self.class_labels, mask) if m],
            features=self.features[mask].reshape(int(mask.sum()), self.dim),
        )


class ZslSplit(BaseModel):
    """Disjoint seen / unseen class sets."""
    model_config = ConfigDict(frozen=True)

    seen: frozenset[str]
    unseen: frozenset[str]

    @model_validator(mode="after")
    def _disjoint(self) -> "ZslSplit":
        if not self.seen or not self.unseen:
            raise ProtocolError("split needs at least one seen and one unseen class")
        overlap = self.seen & self.unseen
        if overlap:
            raise ProtocolError(
                f"classes both seen and unseen: {sorted(overlap)}", classes=sorted(overlap)
            )
        return self

    def ordered(self, class_order: Iterable[str]) -> tuple[tuple[str, ...], tuple[str, ...]]:
        """(seen, unseen) names following a canonical class order."""
        order = tuple(class_order)
        missing = (self.seen | self.unseen) - set(order)
        if missing:
            raise ProtocolError(
                f"split names classes absent from the embeddings: {sorted(missing)}",
                classes=sorted(missing)
            )
        return (
            tuple(n for n in order if n in self.seen),
            tuple(n for n in order if n in self.unseen),
        )
