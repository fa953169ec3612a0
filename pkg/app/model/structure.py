from typing import Iterable

from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from app.model.error import ConfigError, ShapeError


class NeighborLists(BaseModel):
    """Per class, the k nearest other classes in ascending distance."""
    model_config = ConfigDict(frozen=True)

    k: int
    lists: tuple[tuple[int, ...], ...]

    @field_validator("lists", mode="before")
    @classmethod
    def _as_tuples(cls, value: Iterable[Iterable[int]]) -> tuple[tuple[int, ...], ...]:
        return tuple(tuple(int(j) for j in row) for row in value)

    @model_validator(mode="after")
    def _valid(self) -> "NeighborLists":
        n = len(self.lists)
        if not 1 <= self.k <= max(n - 1, 0):
            raise ConfigError(f"k={self.k} out of range for {n} classes", k=self.k, classes=n)
        for i, row in enumerate(self.lists):
            if len(row) != self.k:
                raise ShapeError(f"class {i} has {len(row)} neighbors, expected {self.k}")
            if i in row:
                raise ShapeError(f"class {i} lists itself as a neighbor")
            if len(set(row)) != len(row):
                raise ShapeError(f"class {i} has duplicate neighbors")
            if any(j < 0 or j >= n for j in row):
                raise ShapeError(f"class {i} has a neighbor index out of range")
        return self

    @property
    def num_classes(self) -> int:
        return len(self.lists)

    def prefix(self, k: int) -> "NeighborLists":
        """The top-k lists obtained by truncating these (larger) lists."""
        if k > self.k:
            raise ConfigError(f"cannot take a top-{k} prefix of top-{self.k} lists")
        return NeighborLists(k=k, lists=[row[:k] for row in self.lists])

    def as_sets(self) -> list[frozenset[int]]:
        return [frozenset(row) for row in self.lists]


class HubSet(BaseModel):
    """Classes that appear in too many neighbor lists of the mapped space."""
    model_config = ConfigDict(frozen=True)

    members: frozenset[int] = frozenset()
    epoch: int = 0
    counts: tuple[int, ...] = ()

    @classmethod
    def empty(cls, epoch: int = 0) -> "HubSet":
        return cls(members=frozenset(), epoch=epoch)


class Triplet(BaseModel):
    """(anchor, positive, negative) class indices."""
    model_config = ConfigDict(frozen=True)

    a: int
    p: int
    n: int

    @model_validator(mode="after")
    def _distinct(self) -> "Triplet":
        if len({self.a, self.p, self.n}) != 3:
            raise ShapeError(f"triplet indices must be distinct: {(self.a, self.p, self.n)}")
        return self

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.a, self.p, self.n)


class TripletBatch(BaseModel):
    """Triplets mined for one epoch, in post-shuffle order."""
    model_config = ConfigDict(frozen=True)

    epoch: int
    triplets: tuple[Triplet, ...] = ()

    def __len__(self) -> int:
        return len(self.triplets)

    @property
    def is_empty(self) -> bool:
        return not self.triplets

    def as_tuples(self) -> list[tuple[int, int, int]]:
        return [t.as_tuple() for t in self.triplets]
