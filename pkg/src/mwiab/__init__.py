"""Energy-aware microwave backhaul and IAB access simulation."""

__version__ = "0.1.0"
