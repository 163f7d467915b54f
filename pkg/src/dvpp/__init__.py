"""Dynamic virtual power plant simulation, coordination and dispatch toolkit."""

__version__ = "0.1.0"
