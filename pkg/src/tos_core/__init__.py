"""Container terminal operating system core: master data, EDI, berth, yard,
vessel and equipment planning, gate, billing and reporting."""

__version__ = "0.1.0"
