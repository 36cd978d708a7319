"""Loading, synthesising and pairing grayscale face corpora.

Corpora are kept as plain lists of ``FaceImage`` values so that they can be
handed between Kedro nodes, notebooks and tests without a wrapper class. Pixel
rasters are float64 arrays in ``[0, 1]`` with a shape fixed per corpus.

Pair protocols follow the verification convention of one perturbed side per
pair and are stored as a DataFrame with the columns ``IMAGE_ID_1``,
``IMAGE_ID_2`` and ``IS_POSITIVE``.
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Literal

import numpy as np
import pandas as pd
import torch
import torch.nn.functional as F
from PIL import Image, UnidentifiedImageError

from immune_face_defense.errors import CorpusError

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".pgm", ".tif", ".tiff")
PAIR_COLUMNS = ["IMAGE_ID_1", "IMAGE_ID_2", "IS_POSITIVE"]


@dataclass(frozen=True)
class FaceImage:
    """A single grayscale face raster.

    Args:
        image_id: Stable identifier, ``<identity>/<file name>`` for loaded corpora
        pixels: ``H x W`` float64 array with values in ``[0, 1]``
        identity_label: Identity the face belongs to, if known
    """

    image_id: str
    pixels: np.ndarray = field(repr=False)
    identity_label: str | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape


@dataclass
class PairProtocol:
    """Positive and negative verification pairs over a corpus.

    Args:
        pairs: DataFrame with ``IMAGE_ID_1``, ``IMAGE_ID_2``, ``IS_POSITIVE``
        perturbed_side: Which image of every pair an attack perturbs
    """

    pairs: pd.DataFrame
    perturbed_side: Literal["first", "second"] = "first"

    @property
    def positive_pairs(self) -> list[tuple[str, str]]:
        positives = self.pairs[self.pairs["IS_POSITIVE"]]
        return list(zip(positives["IMAGE_ID_1"], positives["IMAGE_ID_2"]))

    @property
    def negative_pairs(self) -> list[tuple[str, str]]:
        negatives = self.pairs[~self.pairs["IS_POSITIVE"]]
        return list(zip(negatives["IMAGE_ID_1"], negatives["IMAGE_ID_2"]))

    def __len__(self) -> int:
        return len(self.pairs)


def to_grayscale(rgb: np.ndarray) -> np.ndarray:
    """Unweighted channel mean of an ``H x W x C`` raster (2-D input passes through)."""
    if rgb.ndim == 2:
        return rgb.astype(np.float64)
    return rgb.astype(np.float64).mean(axis=2)


def resize_bilinear(pixels: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Plain bilinear resize of a float raster to ``size = (H, W)``.

    Pixel centres are aligned (``align_corners=False``) and no low-pass filter is
    applied when shrinking, so a 2x downscale averages 2x2 blocks.
    """
    height, width = size
    if pixels.shape == (height, width):
        return pixels.astype(np.float64)
    raster = torch.from_numpy(np.ascontiguousarray(pixels, dtype=np.float64))[None, None]
    resized = F.interpolate(
        raster, size=(height, width), mode="bilinear", align_corners=False, antialias=False
    )
    return resized[0, 0].numpy()


def read_face_image(path: Path, size: tuple[int, int]) -> np.ndarray:
    """Decode one image file into a ``[0, 1]`` grayscale raster of ``size``.

    Raises:
        CorpusError: If the file cannot be decoded
    """
    try:
        with Image.open(path) as img:
            if img.mode in ("L", "I;16", "I", "F"):
                raw = np.asarray(img.convert("F"), dtype=np.float64)
                scale = 65535.0 if img.mode == "I;16" else 255.0
            else:
                raw = np.asarray(img.convert("RGB"), dtype=np.float64)
                scale = 255.0
    except (OSError, UnidentifiedImageError) as exc:
        raise CorpusError(f"Cannot read image file: {path}") from exc
    gray = to_grayscale(raw) / scale
    return np.clip(resize_bilinear(gray, size), 0.0, 1.0)


def load_corpus(root: str | Path, size: tuple[int, int]) -> list[FaceImage]:
    """Load every image under ``root/<identity>/`` as a grayscale ``FaceImage``.

    Images are ordered by relative path, so re-loading the same directory with the
    same size yields bit-identical rasters.

    Args:
        root: Corpus directory with one sub-directory per identity
        size: Target ``(H, W)``

    Returns:
        list of FaceImage

    Raises:
        CorpusError: If the directory holds no images or a file is unreadable
    """
    root = Path(root)
    if not root.is_dir():
        raise CorpusError(f"Corpus root does not exist: {root}")
    paths = sorted(
        p
        for p in root.glob("*/*")
        if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES
    )
    if not paths:
        raise CorpusError(f"Empty corpus: no image files found under {root}")

    corpus = [
        FaceImage(
            image_id=path.relative_to(root).as_posix(),
            pixels=read_face_image(path, tuple(size)),
            identity_label=path.parent.name,
        )
        for path in paths
    ]
    logger.info(
        "Loaded %d images of %d identities from %s",
        len(corpus),
        len({img.identity_label for img in corpus}),
        root,
    )
    return corpus


def save_corpus(corpus: Sequence[FaceImage], root: str | Path) -> None:
    """Write a corpus as 8-bit PNG files under ``root/<identity>/``."""
    root = Path(root)
    for image in corpus:
        target = root / image.image_id
        target.parent.mkdir(parents=True, exist_ok=True)
        raster = np.round(np.clip(image.pixels, 0.0, 1.0) * 255.0).astype(np.uint8)
        Image.fromarray(raster).save(target.with_suffix(".png"))


def _smooth_field(
    rng: np.random.Generator, size: tuple[int, int], grid: int
) -> np.ndarray:
    coarse = rng.standard_normal((grid, grid))
    return resize_bilinear(coarse, size)


def _face_layout(size: tuple[int, int]) -> np.ndarray:
    height, width = size
    rows, cols = np.mgrid[0:height, 0:width]
    y = (rows + 0.5) / height - 0.5
    x = (cols + 0.5) / width - 0.5
    layout = 0.25 + 0.35 * np.exp(-((x / 0.32) ** 2 + (y / 0.42) ** 2) ** 2)
    for eye_x in (-0.15, 0.15):
        layout -= 0.15 * np.exp(-(((x - eye_x) / 0.06) ** 2 + ((y + 0.08) / 0.04) ** 2))
    layout -= 0.12 * np.exp(-((x / 0.14) ** 2 + ((y - 0.22) / 0.03) ** 2))
    return layout


def synthesize_corpus(
    n_identities: int,
    images_per_identity: int,
    size: tuple[int, int],
    seed: int,
    identity_amplitude: float = 0.12,
    max_shift: int = 1,
    brightness_jitter: float = 0.03,
    noise_std: float = 0.02,
) -> list[FaceImage]:
    """Generate a toy face corpus.

    Every identity is a shared face layout plus a smooth identity-specific field;
    every image of that identity adds a small shift, a brightness offset and
    pixel noise.

    Args:
        n_identities: Number of identities
        images_per_identity: Images generated per identity
        size: ``(H, W)`` of every raster
        seed: Seed for all randomness
        identity_amplitude: Scale of the identity field
        max_shift: Maximal translation in pixels along each axis
        brightness_jitter: Maximal absolute brightness offset
        noise_std: Standard deviation of the per-pixel noise

    Returns:
        list of FaceImage with ids ``id_XXX/img_YY.png``
    """
    if n_identities < 1 or images_per_identity < 1:
        raise ValueError("n_identities and images_per_identity must be positive")
    size = tuple(size)
    rng = np.random.default_rng(seed)
    layout = _face_layout(size)
    corpus = []
    for identity in range(n_identities):
        label = f"id_{identity:03d}"
        template = layout + identity_amplitude * (
            _smooth_field(rng, size, 6) + 0.5 * _smooth_field(rng, size, 12)
        )
        for index in range(images_per_identity):
            shift = rng.integers(-max_shift, max_shift + 1, size=2)
            pixels = np.roll(template, tuple(shift), axis=(0, 1))
            pixels = pixels + rng.uniform(-brightness_jitter, brightness_jitter)
            pixels = pixels + noise_std * rng.standard_normal(size)
            corpus.append(
                FaceImage(
                    image_id=f"{label}/img_{index:02d}.png",
                    pixels=np.clip(pixels, 0.0, 1.0),
                    identity_label=label,
                )
            )
    logger.info(
        "Synthesised %d images of %d identities at %s",
        len(corpus),
        n_identities,
        size,
    )
    return corpus


def split_corpus(
    corpus: Sequence[FaceImage], holdout_per_identity: int, seed: int
) -> tuple[list[FaceImage], list[FaceImage]]:
    """Hold out a seeded number of images of every identity.

    Identities with no more than ``holdout_per_identity`` images keep all of them
    in the training part.

    Returns:
        tuple of (training images, held-out images), both in corpus order
    """
    rng = np.random.default_rng(seed)
    by_identity: dict[str | None, list[int]] = {}
    for index, image in enumerate(corpus):
        by_identity.setdefault(image.identity_label, []).append(index)

    held_out: set[int] = set()
    for label in sorted(by_identity, key=str):
        indices = by_identity[label]
        if len(indices) <= holdout_per_identity:
            continue
        chosen = rng.choice(indices, size=holdout_per_identity, replace=False)
        held_out.update(int(i) for i in chosen)

    train = [img for i, img in enumerate(corpus) if i not in held_out]
    holdout = [img for i, img in enumerate(corpus) if i in held_out]
    logger.info("Split corpus into %d training / %d held-out", len(train), len(holdout))
    return train, holdout


def corpus_lookup(corpus: Sequence[FaceImage]) -> dict[str, FaceImage]:
    return {image.image_id: image for image in corpus}


def stack_pixels(corpus: Sequence[FaceImage]) -> np.ndarray:
    """Stack rasters into an ``N x H x W`` array."""
    if not corpus:
        raise CorpusError("Empty corpus")
    return np.stack([image.pixels for image in corpus])


def build_pairs(
    corpus: Sequence[FaceImage],
    n_pos: int,
    n_neg: int,
    seed: int,
    perturbed_side: Literal["first", "second"] = "first",
) -> PairProtocol:
    """Draw distinct positive and negative verification pairs.

    Args:
        corpus: Labelled images
        n_pos: Number of same-identity pairs
        n_neg: Number of different-identity pairs
        seed: Seed for sampling; equal seeds give equal protocols
        perturbed_side: Side an attack perturbs

    Returns:
        PairProtocol with positives first, then negatives

    Raises:
        CorpusError: If the corpus cannot provide the requested pairs
    """
    if n_pos < 0 or n_neg < 0:
        raise ValueError("Pair counts must be non-negative")
    rng = np.random.default_rng(seed)
    ids = [image.image_id for image in corpus]
    labels = [image.identity_label for image in corpus]

    by_identity: dict[str | None, list[int]] = {}
    for index, label in enumerate(labels):
        by_identity.setdefault(label, []).append(index)

    positives: list[tuple[int, int]] = []
    if n_pos > 0:
        candidates = [
            pair
            for label in sorted(by_identity, key=str)
            for pair in combinations(by_identity[label], 2)
        ]
        if not candidates:
            raise CorpusError(
                "no positive pairs possible: no identity has at least 2 images"
            )
        if n_pos > len(candidates):
            raise CorpusError(
                f"requested {n_pos} positive pairs but only {len(candidates)} "
                "distinct positive pairs exist"
            )
        chosen = rng.choice(len(candidates), size=n_pos, replace=False)
        positives = [candidates[i] for i in chosen]

    negatives: list[tuple[int, int]] = []
    if n_neg > 0:
        if len(by_identity) < 2:
            raise CorpusError("no negative pairs possible: corpus has 1 identity")
        n_images = len(ids)
        same_identity = sum(len(v) * (len(v) - 1) // 2 for v in by_identity.values())
        available = n_images * (n_images - 1) // 2 - same_identity
        if n_neg > available:
            raise CorpusError(
                f"requested {n_neg} negative pairs but only {available} "
                "distinct negative pairs exist"
            )
        seen: set[tuple[int, int]] = set()
        while len(negatives) < n_neg:
            first, second = (int(i) for i in rng.integers(0, n_images, size=2))
            if labels[first] == labels[second]:
                continue
            key = (min(first, second), max(first, second))
            if key in seen:
                continue
            seen.add(key)
            negatives.append((first, second))

    rows = [(ids[a], ids[b], True) for a, b in positives] + [
        (ids[a], ids[b], False) for a, b in negatives
    ]
    pairs = pd.DataFrame(rows, columns=PAIR_COLUMNS).astype({"IS_POSITIVE": bool})
    logger.info("Built %d positive and %d negative pairs", n_pos, n_neg)
    return PairProtocol(pairs=pairs, perturbed_side=perturbed_side)


def validate_protocol(protocol: PairProtocol, corpus: Sequence[FaceImage]) -> None:
    """Check that every pair references known ids and has the right label relation.

    Raises:
        CorpusError: On the first violated pair
    """
    lookup = corpus_lookup(corpus)
    for id_1, id_2, is_positive in protocol.pairs[PAIR_COLUMNS].itertuples(index=False):
        for image_id in (id_1, id_2):
            if image_id not in lookup:
                raise CorpusError(f"Pair references missing image id: {image_id}")
        same = lookup[id_1].identity_label == lookup[id_2].identity_label
        if bool(is_positive) != same:
            kind = "positive" if is_positive else "negative"
            raise CorpusError(f"Inconsistent {kind} pair: {id_1} {id_2}")
