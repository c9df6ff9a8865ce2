"""Probabilistic forecasts of daily reported cases and deaths from logit-scale growth rates."""

from .config import EngineConfig, load_config
from .ingest import RegionSeries, parse_timeseries
from .pipeline import run_forecast, run_region, run_regions

__all__ = ["EngineConfig", "RegionSeries", "load_config", "parse_timeseries", "run_forecast", "run_region", "run_regions"]
__version__ = "0.1.0"
