"""skybench: a desk-scale testbed for monocular visual odometry on fixed-wing aircraft.

Simulates waypoint missions over textured terrain, renders nadir imagery
through a calibrated pinhole camera, runs a reference VO pipeline with
pluggable keyframe policies, and scores estimates against truth.
"""

__version__ = "0.1.0"
