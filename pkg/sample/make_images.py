"""Regenerate the ten sample images (deterministic)."""

from pathlib import Path

import numpy as np

from artquant.catalog import synthetic_painting
from artquant.raster import RgbRaster, encode_png

here = Path(__file__).parent / "images"
here.mkdir(exist_ok=True)
rng = np.random.default_rng(20181231)
for i in range(1, 11):
    arr = synthetic_painting(rng, 96, 72)
    (here / f"work{i:02d}.png").write_bytes(encode_png(RgbRaster(arr)))
