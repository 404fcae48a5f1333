"""Navigational context recognition from NMEA-0183 GNSS logs."""

__version__ = "0.1.0"
