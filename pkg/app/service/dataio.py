"""
Text formats for embeddings, features, signatures and splits; the binary
checkpoint format; the synthetic dataset generator.

Embedding / signature file:  "N D" then N lines "class_name v1 ... vD"
Feature file:                "M D" then M lines "class_name f1 ... fD"
Split file:                  lines "seen class_name" / "unseen class_name"
"""
import re
import struct
from pathlib import Path
from typing import Union

import numpy as np

from app.config.settings import settings
from app.engine.numerics import RngStream, l2_normalize_rows, make_rng
from app.model import (
    CheckpointError,
    ClassEmbeddingTable,
    ConfigError,
    LabeledFeatureSet,
    MlpParams,
    ParseError,
    SynthConfig,
    TrainConfig,
    VisualSignatureTable,
    ZslSplit,
)
from app.service.neighborhood import consistency, neighbors_of
from app.utils.logger import logger

PathLike = Union[str, Path]

CHECKPOINT_MAGIC = b"VAWE"
_HEADER = struct.Struct("<4sI")
_DIMS = struct.Struct("<4I")
_LENGTH = struct.Struct("<I")
_DECIMAL = re.compile(r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?", re.ASCII)
_COUNT = re.compile(r"\d+", re.ASCII)


# ========== Text Formats ==========

def _format_float(x: float) -> str:
    # repr is the shortest string that round-trips to the same float
    return repr(float(x))


def _parse_float(token: str) -> float:
    """float() for plain decimal tokens only; rejects "1_0", "nan", "0x1p3" and friends."""
    if not _DECIMAL.fullmatch(token):
        raise ValueError(token)
    return float(token)


def _read_lines(path: PathLike) -> list[str]:
    raw = Path(path).read_bytes()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as e:
        line = raw.count(b"\n", 0, e.start) + 1
        raise ParseError("file is not valid UTF-8", path=str(path), line=line) from None
    lines = text.splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    return lines


def _parse_header(lines: list[str], path: PathLike) -> tuple[int, int]:
    if not lines:
        raise ParseError("no rows", path=str(path), line=1)
    parts = lines[0].split()
    if len(parts) != 2:
        raise ParseError(f"malformed header '{lines[0]}', expected 'N D'", path=str(path), line=1)
    if not all(_COUNT.fullmatch(p) for p in parts):
        raise ParseError(f"non-integer header '{lines[0]}'", path=str(path), line=1)
    count, dim = int(parts[0]), int(parts[1])
    if count < 1:
        raise ParseError("no rows", path=str(path), line=1)
    if dim < 1:
        raise ParseError(f"dimension must be positive, got {dim}", path=str(path), line=1)
    if len(lines) - 1 != count:
        raise ParseError(
            f"header announces {count} rows but the file has {len(lines) - 1}",
            path=str(path), line=1
        )
    return count, dim


def _parse_rows(lines: list[str], dim: int, path: PathLike) -> tuple[list[str], np.ndarray]:
    names: list[str] = []
    values = np.empty((len(lines) - 1, dim), dtype=np.float64)
    for row, line in enumerate(lines[1:]):
        line_no = row + 2
        parts = line.split(" ")
        if len(parts) != dim + 1 or not parts[0]:
            raise ParseError(
                f"expected a name and {dim} values, got {len(parts) - 1} values",
                path=str(path), line=line_no
            )
        try:
            values[row] = [_parse_float(tok) for tok in parts[1:]]
        except ValueError:
            raise ParseError("non-numeric token", path=str(path), line=line_no) from None
        if not np.all(np.isfinite(values[row])):
            raise ParseError("non-finite value", path=str(path), line=line_no)
        names.append(parts[0])
    return names, values


def _write_rows(path: PathLike, names: tuple[str, ...], rows: np.ndarray):
    out = [f"{rows.shape[0]} {rows.shape[1]}"]
    for name, row in zip(names, rows):
        if not name or any(c.isspace() for c in name):
            raise ConfigError(f"class name '{name}' must be non-empty without whitespace")
        out.append(" ".join([name, *(_format_float(v) for v in row)]))
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def load_embeddings(path: PathLike) -> ClassEmbeddingTable:
    lines = _read_lines(path)
    _, dim = _parse_header(lines, path)
    names, vectors = _parse_rows(lines, dim, path)
    seen: dict[str, int] = {}
    for row, name in enumerate(names):
        if name in seen:
            raise ParseError(
                f"duplicate class name '{name}' (first at line {seen[name]})",
                path=str(path), line=row + 2
            )
        seen[name] = row + 2
    return ClassEmbeddingTable(class_names=names, vectors=vectors)


def save_embeddings(table: ClassEmbeddingTable, path: PathLike):
    _write_rows(path, table.class_names, table.vectors)


def load_signatures(path: PathLike) -> VisualSignatureTable:
    table = load_embeddings(path)
    return VisualSignatureTable(class_names=table.class_names, signatures=table.vectors)


def save_signatures(table: VisualSignatureTable, path: PathLike):
    _write_rows(path, table.class_names, table.signatures)


def load_features(path: PathLike) -> LabeledFeatureSet:
    lines = _read_lines(path)
    _, dim = _parse_header(lines, path)
    labels, features = _parse_rows(lines, dim, path)
    return LabeledFeatureSet(class_labels=labels, features=features)


def save_features(features: LabeledFeatureSet, path: PathLike):
    _write_rows(path, features.class_labels, features.features)


def load_split(path: PathLike) -> ZslSplit:
    seen: list[str] = []
    unseen: list[str] = []
    for line_no, line in enumerate(_read_lines(path), start=1):
        parts = line.split()
        if len(parts) != 2 or parts[0] not in ("seen", "unseen"):
            raise ParseError(f"expected 'seen NAME' or 'unseen NAME', got '{line}'", path=str(path), line=line_no)
        target = seen if parts[0] == "seen" else unseen
        if parts[1] in seen or parts[1] in unseen:
            raise ParseError(f"class '{parts[1]}' listed twice", path=str(path), line=line_no)
        target.append(parts[1])
    return ZslSplit(seen=frozenset(seen), unseen=frozenset(unseen))


def save_split(split: ZslSplit, path: PathLike, class_order: tuple[str, ...]):
    seen, unseen = split.ordered(class_order)
    lines = [f"seen {n}" for n in seen] + [f"unseen {n}" for n in unseen]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ========== Checkpoints ==========

def _config_text(cfg: TrainConfig) -> str:
    lines = []
    for name, value in cfg.model_dump().items():
        if value is None:
            text = ""
        elif isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, float):
            text = _format_float(value)
        elif isinstance(value, (tuple, list)):
            text = ",".join(str(v) for v in value)
        else:
            text = str(value)
        lines.append(f"{name}={text}")
    return "\n".join(lines) + "\n"


def _parse_config_text(text: str) -> TrainConfig:
    data: dict[str, object] = {}
    for line in text.splitlines():
        if not line:
            continue
        name, sep, value = line.partition("=")
        if not sep:
            raise CheckpointError(f"malformed config line '{line}'")
        if value == "":
            data[name] = None
        elif name == "hidden":
            sizes = value.split(",")
            if not all(_COUNT.fullmatch(v) for v in sizes):
                raise CheckpointError(f"malformed config value '{line}'")
            data[name] = tuple(int(v) for v in sizes)
        elif value in ("true", "false"):
            data[name] = value == "true"
        elif _COUNT.fullmatch(value.removeprefix("-")):
            data[name] = int(value)
        elif _DECIMAL.fullmatch(value):
            data[name] = float(value)
        else:
            raise CheckpointError(f"malformed config value '{line}'")
    try:
        return TrainConfig.parse(data)
    except ConfigError as e:
        raise CheckpointError(f"invalid config block: {e.message}") from e


def save_checkpoint(params: MlpParams, cfg: TrainConfig, path: PathLike):
    """Magic, version, little-endian dims, float64 weights, then the config block."""
    h1, h2 = params.hidden
    config_bytes = _config_text(cfg).encode("utf-8")
    payload = b"".join([
        _HEADER.pack(CHECKPOINT_MAGIC, settings.CHECKPOINT_VERSION),
        _DIMS.pack(params.in_dim, h1, h2, params.out_dim),
        params.flat().astype("<f8").tobytes(),
        _LENGTH.pack(len(config_bytes)),
        config_bytes,
    ])
    Path(path).write_bytes(payload)


def load_checkpoint(path: PathLike) -> tuple[MlpParams, TrainConfig]:
    data = Path(path).read_bytes()

    def take(offset: int, size: int, what: str) -> bytes:
        if offset + size > len(data):
            raise CheckpointError(f"truncated checkpoint: missing {what}", path=str(path))
        return data[offset:offset + size]

    offset = 0
    magic, version = _HEADER.unpack(take(offset, _HEADER.size, "header"))
    offset += _HEADER.size
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError("not a VAWE checkpoint (bad magic bytes)", path=str(path))
    if version != settings.CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint format version {version} is not supported (expected {settings.CHECKPOINT_VERSION})",
            path=str(path), version=version, expected=settings.CHECKPOINT_VERSION
        )

    in_dim, h1, h2, out_dim = _DIMS.unpack(take(offset, _DIMS.size, "dimensions"))
    offset += _DIMS.size
    shapes = {
        "w1": (h1, in_dim), "b1": (h1,),
        "w2": (h2, h1), "b2": (h2,),
        "w3": (out_dim, h2), "b3": (out_dim,),
    }
    count = sum(int(np.prod(s)) for s in shapes.values())
    flat = np.frombuffer(take(offset, 8 * count, "weights"), dtype="<f8").astype(np.float64)
    offset += 8 * count
    if not np.all(np.isfinite(flat)):
        raise CheckpointError("checkpoint weights contain non-finite values", path=str(path))

    (length,) = _LENGTH.unpack(take(offset, _LENGTH.size, "config length"))
    offset += _LENGTH.size
    try:
        config_text = take(offset, length, "config block").decode("utf-8")
    except UnicodeDecodeError:
        raise CheckpointError("config block is not valid UTF-8", path=str(path)) from None
    offset += length
    if offset != len(data):
        raise CheckpointError(f"{len(data) - offset} trailing bytes after config block", path=str(path))

    arrays, start = {}, 0
    for name, shape in shapes.items():
        size = int(np.prod(shape))
        arrays[name] = flat[start:start + size].reshape(shape)
        start += size
    return MlpParams.from_arrays(arrays), _parse_config_text(config_text)


# ========== Synthetic Data ==========

def class_names_for(num_classes: int) -> tuple[str, ...]:
    width = max(3, len(str(num_classes - 1)))
    return tuple(f"class_{i:0{width}d}" for i in range(num_classes))


def _projection(visual_dim: int, semantic_dim: int, rng: np.random.Generator) -> np.ndarray:
    """Fixed semantic_dim x visual_dim map: an isometry when semantic_dim >= visual_dim."""
    if semantic_dim >= visual_dim:
        q, _ = np.linalg.qr(rng.standard_normal((semantic_dim, visual_dim)))
        return q
    q, _ = np.linalg.qr(rng.standard_normal((visual_dim, semantic_dim)))
    return q.T


def generate_synthetic(cfg: SynthConfig) -> tuple[LabeledFeatureSet, ClassEmbeddingTable, VisualSignatureTable]:
    """Clustered visual features plus word-embedding-like class vectors.

    Class centers are not plain standard Gaussian draws: directions are Gaussian
    but every center is rescaled to radius sqrt(visual_dim), so that rho=0 with
    no image noise gives semantic neighborhoods equal to the visual ones. Semantic
    vectors are l2_normalize(Q·mu + rho·g): Q is drawn once per seed and g is
    independent noise, so discrepancy_rho is the only knob changing the
    visual-semantic discrepancy.

    Returns:
        (image features, semantic embeddings, ground-truth signatures = class centers)
    """
    names = class_names_for(cfg.num_classes)

    directions = make_rng(cfg.seed, RngStream.CENTERS).standard_normal((cfg.num_classes, cfg.visual_dim))
    centers = np.sqrt(cfg.visual_dim) * l2_normalize_rows(directions, settings.NORM_EPS)

    q = _projection(cfg.visual_dim, cfg.semantic_dim, make_rng(cfg.seed, RngStream.PROJECTION))
    g = make_rng(cfg.seed, RngStream.SEMANTIC_NOISE).standard_normal((cfg.num_classes, cfg.semantic_dim))
    semantic = l2_normalize_rows(centers @ q.T + cfg.discrepancy_rho * g, settings.NORM_EPS)

    noise = make_rng(cfg.seed, RngStream.IMAGE_NOISE).standard_normal(
        (cfg.num_classes * cfg.images_per_class, cfg.visual_dim)
    )
    images = np.repeat(centers, cfg.images_per_class, axis=0) + cfg.noise_sigma * noise
    labels = [name for name in names for _ in range(cfg.images_per_class)]

    logger.debug(
        f"Synthetic data: {cfg.num_classes} classes x {cfg.images_per_class} images, "
        f"d_v={cfg.visual_dim} d_s={cfg.semantic_dim} rho={cfg.discrepancy_rho}"
    )
    return (
        LabeledFeatureSet(class_labels=labels, features=images),
        ClassEmbeddingTable(class_names=names, vectors=semantic),
        VisualSignatureTable(class_names=names, signatures=centers),
    )


def synthetic_split(cfg: SynthConfig) -> ZslSplit:
    names = class_names_for(cfg.num_classes)
    perm = make_rng(cfg.seed, RngStream.SPLIT).permutation(cfg.num_classes)
    unseen = {names[i] for i in perm[:cfg.resolved_num_unseen]}
    return ZslSplit(seen=frozenset(set(names) - unseen), unseen=frozenset(unseen))


def synthetic_consistency(cfg: SynthConfig, k: int) -> float:
    """Raw consistency of the synthetic semantic vectors against the class centers."""
    _, semantic, centers = generate_synthetic(cfg)
    return consistency(neighbors_of(centers.signatures, k), neighbors_of(semantic.vectors, k))


def calibrate_rho(cfg: SynthConfig, k: int, band: tuple[float, float], max_iter: int = 60) -> float:
    """Find a discrepancy_rho whose raw consistency at k lies inside `band`.

    Doubles rho until consistency drops to the band's upper edge, then bisects.
    """
    lo, hi = band

    def measure(rho: float) -> float:
        return synthetic_consistency(cfg.model_copy(update={"discrepancy_rho": rho}), k)

    def inside(c: float) -> bool:
        return lo <= c <= hi

    left, c_left = 0.0, measure(0.0)
    if inside(c_left):
        return 0.0
    if c_left < lo:
        raise ConfigError(f"consistency band {band} unreachable: aligned data already scores {c_left:.3f}")

    right, c_right = 1.0, measure(1.0)
    doublings = 0
    while c_right > hi:
        left, c_left = right, c_right
        right *= 2.0
        c_right = measure(right)
        doublings += 1
        if doublings > 30:
            raise ConfigError(f"consistency band {band} unreachable: stays above {hi} for large rho")
    if inside(c_right):
        return right

    for _ in range(max_iter):
        mid = 0.5 * (left + right)
        c_mid = measure(mid)
        if inside(c_mid):
            logger.info(f"Calibrated rho={mid:.6g} (consistency {c_mid:.3f} at k={k})")
            return mid
        if c_mid > hi:
            left = mid
        else:
            right = mid
    logger.warning(f"rho calibration did not land in {band} after {max_iter} steps")
    raise ConfigError(f"could not calibrate rho into consistency band {band}")
