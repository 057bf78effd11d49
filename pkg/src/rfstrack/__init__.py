"""Multi-target tracking with PMBM/PMB filters and adaptive-birth MBM/MB counterparts."""

__version__ = "0.1.0"
