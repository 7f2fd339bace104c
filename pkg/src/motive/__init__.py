"""Vehicle-to-vehicle service exchange: registry, link prediction, beacons,
admission, payments, and verifiable compute offloading, with a deterministic
simulator on top."""

__version__ = "0.1.0"
