"""Image-based information-quantity measures and hedonic price models for artworks."""

from .catalog import FeatureCache, extract_all, generate_synthetic, load_catalog, save_catalog
from .features import FeatureConfig, FeatureVector, extract_features
from .hedonic import DesignMatrix, ModelFit, ModelSpec, SaleRecord, build_design_matrix, ols_fit, price_ratio
from .raster import RgbRaster, decode_image

__version__ = "0.1.0"

__all__ = [
    "DesignMatrix",
    "FeatureCache",
    "FeatureConfig",
    "FeatureVector",
    "ModelFit",
    "ModelSpec",
    "RgbRaster",
    "SaleRecord",
    "build_design_matrix",
    "decode_image",
    "extract_all",
    "extract_features",
    "generate_synthetic",
    "load_catalog",
    "ols_fit",
    "price_ratio",
    "save_catalog",
]
