"""
Frozen encoders: a toy image backbone that accepts LoRA adapters, a hashed
text embedder, and resolution of frame references to token grids.
"""

import hashlib
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional, Sequence, Union

import numpy as np

from src.core.errors import MissingEmbedding, ShapeError
from src.core.layers import LayerNorm, Linear, Module, TransformerEncoder, normal
from src.core.prompting import PromptRecord
from src.core.tensor import (
    Parameter,
    Tensor,
    get_default_dtype,
    l2_normalize,
    mean,
    stack,
)
from src.storage.embeddings import EmbeddingMatrix

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BackboneSpec:
    feature_dim: int = 64
    tokens: int = 16
    dim: int = 64
    depth: int = 4
    heads: int = 4
    mlp_ratio: int = 4
    normalize: bool = True
    seed: int = 0


class FrozenBackbone(Module):
    """
    Stand-in image encoder over a (tokens x feature_dim) grid per frame.

    input projection + position table -> pre-norm blocks -> LayerNorm ->
    token mean -> output projection (-> l2 normalisation).
    Every parameter starts frozen. Injected adapters train on top of it, or
    ``unfreeze_from`` opens the upper blocks for partial fine-tuning.
    """

    def __init__(self, spec: BackboneSpec = BackboneSpec(), name: str = "backbone"):
        super().__init__()
        self.spec = spec
        self.name = name
        self.merged = False
        rng = np.random.default_rng(spec.seed)
        self.input = self.add_module(Linear(f"{name}.input", spec.feature_dim, spec.dim, rng, frozen=True))
        self.pos = self.add_parameter(
            Parameter(f"{name}.pos", normal(rng, (spec.tokens, spec.dim), 0.02), frozen=True)
        )
        self.encoder = self.add_module(
            TransformerEncoder(name, spec.depth, spec.dim, spec.heads, spec.mlp_ratio, rng, frozen=True)
        )
        self.ln_post = self.add_module(LayerNorm(f"{name}.ln_post", spec.dim, frozen=True))
        self.output = self.add_module(Linear(f"{name}.output", spec.dim, spec.dim, rng, bias=False, frozen=True))

    def linears(self) -> Iterator:
        return self.encoder.linears()

    def unfreeze_from(self, block: int) -> None:
        """Make blocks ``block..depth-1``, the final norm and the output projection trainable"""
        if not 0 <= block <= len(self.encoder.blocks):
            raise ValueError(f"block must be in [0, {len(self.encoder.blocks)}], got {block}")
        for module in self.encoder.blocks[block:] + [self.ln_post, self.output]:
            module.unfreeze()
        logger.debug(f"{self.name}: blocks {block}..{len(self.encoder.blocks) - 1} trainable")

    def __call__(self, frames: Union[Tensor, np.ndarray]) -> Tensor:
        """
        Encode frames.

        Args:
            frames: Array of shape (..., tokens, feature_dim)

        Returns:
            Tensor of shape (..., dim)
        """
        frames = frames if isinstance(frames, Tensor) else Tensor(frames)
        expected = (self.spec.tokens, self.spec.feature_dim)
        if frames.ndim < 2 or frames.shape[-2:] != expected:
            raise ShapeError("backbone input", frames.shape, expected)
        x = self.input(frames) + self.pos
        x = self.ln_post(self.encoder(x))
        out = self.output(mean(x, axis=-2))
        return l2_normalize(out, axis=-1) if self.spec.normalize else out


def encode_frame(backbone: FrozenBackbone, frame_features) -> Tensor:
    """Embed one (tokens x feature_dim) frame"""
    frame = frame_features if isinstance(frame_features, Tensor) else Tensor(frame_features)
    if frame.ndim != 2:
        raise ShapeError("encode_frame", frame.shape, (backbone.spec.tokens, backbone.spec.feature_dim))
    return backbone(frame)


def token_hash(token: str) -> int:
    return int.from_bytes(hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest(), "little")


class TextEmbedder(Module):
    """
    Deterministic frozen text encoder.

    Whitespace tokens are hashed to seeded Gaussian vectors, averaged, projected
    by a frozen linear layer and l2-normalised. With ``encoder_depth > 0`` the token
    vectors first pass through a frozen transformer that can carry LoRA adapters.
    """

    def __init__(
        self,
        dim: int = 64,
        seed: int = 0,
        normalize: bool = True,
        encoder_depth: int = 0,
        heads: int = 4,
        mlp_ratio: int = 4,
        threads: Optional[int] = None,
    ):
        super().__init__()
        self.dim = dim
        self.seed = seed
        self.normalize = normalize
        self.threads = threads
        self.merged = False
        rng = np.random.default_rng([seed, 1])
        self.proj = self.add_module(Linear("text.proj", dim, dim, rng, bias=False, frozen=True))
        self.encoder = (
            self.add_module(TransformerEncoder("text", encoder_depth, dim, heads, mlp_ratio, rng, frozen=True))
            if encoder_depth
            else None
        )
        self._cache: dict = {}
        self._lock = threading.Lock()

    def linears(self) -> Iterator:
        if self.encoder is None:
            return iter(())
        return self.encoder.linears()

    @property
    def cacheable(self) -> bool:
        if not all(p.frozen for p in self.parameters()):
            return False
        return all(linear.adapter is None for _, linear in self.linears())

    def unfreeze_from(self, block: int) -> None:
        """Make encoder blocks ``block..depth-1`` and the projection trainable"""
        blocks = self.encoder.blocks if self.encoder is not None else []
        if not 0 <= block <= len(blocks):
            raise ValueError(f"block must be in [0, {len(blocks)}], got {block}")
        for module in blocks[block:] + [self.proj]:
            module.unfreeze()

    def token_vectors(self, text: str) -> np.ndarray:
        tokens = text.split() or [""]
        rows = [np.random.default_rng([self.seed, token_hash(t)]).standard_normal(self.dim) for t in tokens]
        return np.stack(rows).astype(get_default_dtype())

    def _forward(self, text: str) -> Tensor:
        x = Tensor(self.token_vectors(text))
        if self.encoder is not None:
            x = self.encoder(x)
        out = self.proj(mean(x, axis=0))
        return l2_normalize(out, axis=-1) if self.normalize else out

    @staticmethod
    def _key(text: str) -> tuple:
        return np.dtype(get_default_dtype()).name, text.encode("utf-8")

    def _cached(self, text: str) -> np.ndarray:
        key = self._key(text)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        value = self._forward(text).data
        with self._lock:
            self._cache[key] = value
        return value

    def embed(self, text: str) -> Tensor:
        if not self.cacheable:
            return self._forward(text)
        return Tensor(self._cached(text))

    def embed_texts(self, texts: Sequence[str]) -> Tensor:
        """Embed ``texts`` into an (N, dim) tensor"""
        if not texts:
            return Tensor(np.zeros((0, self.dim), dtype=get_default_dtype()))
        if not self.cacheable:
            return stack([self._forward(t) for t in texts])
        missing = list(dict.fromkeys(t for t in texts if self._key(t) not in self._cache))
        if len(missing) > 1 and self.threads != 1:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                list(pool.map(self._cached, missing))
        return Tensor(np.stack([self._cached(t) for t in texts]))

    def clear_cache(self) -> None:
        with self._lock:
            self._cache.clear()


def embed_text(embedder: TextEmbedder, prompt: PromptRecord) -> Tensor:
    return embedder.embed(prompt.text)


class FrameStore:
    """
    Resolves frame references to (tokens x feature_dim) grids.

    ``emb:<row>`` addresses a row of a loaded FGEMB1 matrix; anything else is a
    ``.npy`` path relative to ``root``.
    """

    def __init__(
        self,
        tokens: int,
        feature_dim: int,
        matrix: Optional[EmbeddingMatrix] = None,
        root: Optional[Path] = None,
    ):
        self.tokens = tokens
        self.feature_dim = feature_dim
        self.matrix = matrix
        self.root = Path(root) if root is not None else Path(".")
        self._files: dict = {}

    def load(self, ref: str) -> np.ndarray:
        shape = (self.tokens, self.feature_dim)
        if ref.startswith("emb:"):
            if self.matrix is None:
                raise MissingEmbedding(f"Frame ref '{ref}' needs an embedding file")
            try:
                row = int(ref[4:])
            except ValueError:
                raise MissingEmbedding(f"Bad frame ref '{ref}'") from None
            if not 0 <= row < self.matrix.rows:
                raise MissingEmbedding(f"Frame ref '{ref}' outside {self.matrix.rows} rows")
            flat = self.matrix.data[row]
        else:
            if ref not in self._files:
                path = self.root / ref
                if not path.exists():
                    raise MissingEmbedding(f"Frame file {path} not found")
                self._files[ref] = np.load(path)
            flat = self._files[ref]
        if flat.size != shape[0] * shape[1]:
            raise ShapeError(f"frame {ref}", flat.shape, shape)
        return np.asarray(flat, dtype=get_default_dtype()).reshape(shape)

    def grid(self, refs: Sequence[str]) -> np.ndarray:
        return np.stack([self.load(ref) for ref in refs])
