"""File formats: feature CSVs, manifests, JSON documents and raster files."""

from __future__ import annotations

import csv
import io
import logging
from pathlib import Path
from typing import Final, Iterable, Optional, Sequence, TypeVar

import numpy as np
from PIL import Image, UnidentifiedImageError
from pydantic import BaseModel, TypeAdapter

from handdigit.errors import DecodeError
from handdigit.schemas import ManifestEntry, PipelineConfig
from handdigit.services.features import FEATURE_NAMES, FeatureVector
from handdigit.services.imagecore import ImageRGB, encode_pgm, load_image, parse_header
from handdigit.services.learner import Dataset, Sample
from handdigit.services.skinclass import BinaryMask

logger = logging.getLogger(__name__)

MANIFEST_NAME: Final[str] = "manifest.json"
FEATURES_NAME: Final[str] = "features.csv"
HAND_LENGTH_KEY: Final[str] = "hand_length"
_PNM_MAGICS: Final[tuple[bytes, ...]] = (b"P5", b"P6")
_MANIFEST: Final[TypeAdapter[list[ManifestEntry]]] = TypeAdapter(list[ManifestEntry])

ModelT = TypeVar("ModelT", bound=BaseModel)


def format_features(rows: Iterable[tuple[Optional[int], FeatureVector]]) -> str:
    """CSV text, label first; floats use their shortest round-trip form."""

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(("label",) + FEATURE_NAMES)
    for label, vector in rows:
        values = [repr(float(v)) for v in vector.as_array()[1:]]
        writer.writerow(["" if label is None else str(label), str(vector.n), *values])
    return buffer.getvalue()


def write_features(path: Path, rows: Iterable[tuple[Optional[int], FeatureVector]]) -> int:
    rows = list(rows)
    path.write_text(format_features(rows), encoding="utf-8")
    return len(rows)


def read_features(path: Path) -> list[tuple[Optional[int], FeatureVector]]:
    """Read a features CSV; the leading label column is optional."""

    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DecodeError("header", f"{path} is empty") from None
        labelled = header[:1] == ["label"]
        expected = (("label",) if labelled else ()) + FEATURE_NAMES
        if tuple(header) != expected:
            raise DecodeError("header", f"unexpected columns in {path}")
        rows: list[tuple[Optional[int], FeatureVector]] = []
        for line_number, record in enumerate(reader, start=2):
            if not record:
                continue
            try:
                label = int(record[0]) if labelled and record[0] else None
                values = [float(v) for v in (record[1:] if labelled else record)]
                rows.append((label, FeatureVector.from_array(values)))
            except ValueError as exc:
                raise DecodeError(f"line {line_number}", str(exc)) from exc
    return rows


def read_dataset(path: Path) -> Dataset:
    """Labelled samples from a features CSV."""

    samples = []
    for position, (label, vector) in enumerate(read_features(path)):
        if label is None:
            raise DecodeError("label", f"row {position + 1} of {path} has no label")
        samples.append(Sample(vector, label))
    return Dataset(tuple(samples))


def write_dataset(path: Path, dataset: Dataset) -> int:
    return write_features(path, ((sample.label, sample.vector) for sample in dataset.samples))


def write_json(path: Path, document: BaseModel) -> None:
    path.write_text(document.model_dump_json(indent=2) + "\n", encoding="utf-8")


def read_json(path: Path, model: type[ModelT]) -> ModelT:
    return model.model_validate_json(path.read_text(encoding="utf-8"))


def load_config(path: Optional[Path]) -> PipelineConfig:
    """Pipeline configuration from a JSON file, or the defaults when no file is given."""

    if path is None:
        return PipelineConfig()
    return read_json(path, PipelineConfig)


def write_manifest(path: Path, entries: Sequence[ManifestEntry]) -> None:
    path.write_bytes(_MANIFEST.dump_json(list(entries), indent=2) + b"\n")


def read_manifest(path: Path) -> list[ManifestEntry]:
    return _MANIFEST.validate_json(path.read_bytes())


def read_image(path: Path) -> ImageRGB:
    """Decode PPM/PGM natively and any other raster format through Pillow."""

    data = path.read_bytes()
    if data[:2] in _PNM_MAGICS:
        return load_image(data)
    try:
        with Image.open(io.BytesIO(data)) as picture:
            pixels = np.asarray(picture.convert("RGB"), dtype=np.uint8)
    except UnidentifiedImageError as exc:
        raise DecodeError("magic", f"{path.name} is not a supported image") from exc
    return ImageRGB(pixels.copy())


def write_mask(path: Path, mask: BinaryMask, comments: tuple[str, ...] = ()) -> None:
    path.write_bytes(encode_pgm(mask.to_pgm_pixels(), comments))


def read_mask(path: Path) -> tuple[BinaryMask, tuple[str, ...]]:
    """Binary mask (gray > 127) and the header comments of a PGM/PPM file."""

    data = path.read_bytes()
    header = parse_header(data)
    return BinaryMask.from_gray(load_image(data).pixels[:, :, 0]), header.comments


def hand_length_comment(hand_length: float) -> str:
    return f"{HAND_LENGTH_KEY}={float(hand_length)!r}"


def parse_hand_length(comments: Sequence[str]) -> Optional[float]:
    prefix = f"{HAND_LENGTH_KEY}="
    for comment in comments:
        if comment.startswith(prefix):
            try:
                return float(comment[len(prefix) :])
            except ValueError as exc:
                raise DecodeError(HAND_LENGTH_KEY, f"not a number: {comment!r}") from exc
    return None
