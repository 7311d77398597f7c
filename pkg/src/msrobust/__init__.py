"""msrobust: poisoned and weather-corrupted multispectral segmentation
datasets, plus robustness scoring for externally produced prediction masks."""

__version__ = "0.1.0"
