from .io import (
    FormatError,
    Manifest,
    load_image,
    load_mask,
    read_manifest,
    save_image,
    save_mask,
    write_manifest,
)
from .raster import (
    GeometricSpec,
    PhotometricSpec,
    Rect,
    apply_geometric,
    apply_photometric,
    crop,
    hflip,
    paste,
    photometric,
    resize_image,
    resize_mask,
    sample_geometric,
    sample_photometric,
    scale_geometric,
)
from .synthetic import (
    FACE_CLASSES,
    ROOM_CLASSES,
    SyntheticSpec,
    anchors,
    dominant_row_sequence,
    generate_samples,
    grammar_template,
    write_synthetic,
)
