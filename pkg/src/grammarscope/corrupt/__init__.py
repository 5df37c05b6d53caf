from .ops import (
    KINDS,
    CorruptionRecord,
    blackout_patches,
    blur,
    blur_patches,
    corrupt,
    cyclic_permutation,
    derive_seed,
    gaussian_kernel,
    make_puzzles,
    permute,
    read_records,
    replay,
    shuffle_patches,
    write_records,
)
from .patches import PatchGrid, check_rects, fold, gather, scatter, unfold
