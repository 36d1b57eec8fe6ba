from .checkpoint import decode_counter, encode_counter, load_checkpoint, save_checkpoint
from .embeddings import EmbeddingMatrix, load_embeddings, save_embeddings
from .files import atomic_write

__all__ = [
    'atomic_write',
    'decode_counter',
    'EmbeddingMatrix',
    'encode_counter',
    'load_checkpoint',
    'load_embeddings',
    'save_checkpoint',
    'save_embeddings',
]
