"""Sum-rate optimization for a movable-antenna aerial relay served by a
reconfigurable reflecting surface: channel synthesis, alternating
optimization of beams/phases/placement/element positions, baseline schemes,
and a reproducible experiment harness.
"""

__version__ = "0.1.0"
