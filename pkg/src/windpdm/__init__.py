"""Wind turbine predictive maintenance: pattern mining, per-horizon random
forests, and a fault-tolerant streaming monitor over an embedded commit log."""

__version__ = "0.1.0"
