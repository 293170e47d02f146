"""toptrack: multi-camera RGB-D people tracking and auto-labeling toolkit.

Calibrates a camera rig from fiducial markers, fuses depth streams into a
top-down heightmap, detects and tracks people on the ground plane, projects
tracks into per-camera 2D boxes, supports tracklet-level correction, and
scores results with CLEAR-MOT / IDF1.  A built-in synthetic scene simulator
provides exact ground truth for end-to-end verification.
"""

__version__ = "0.1.0"
