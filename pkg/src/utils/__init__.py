from .frames import FRAME_MODES, subsample_indices
from .jsonl import read_jsonl, write_jsonl
from .seeding import derive_rng, derive_seed

__all__ = ['FRAME_MODES', 'subsample_indices', 'read_jsonl', 'write_jsonl', 'derive_rng', 'derive_seed']
