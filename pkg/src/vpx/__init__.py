"""Two-stage 3D human pose estimation from a single depth map.

Stage one predicts per-pixel joint likelihoods over the whole image; stage two
voxelizes a small patch around each 2D estimate into a +1/-1 occupancy grid and
predicts per-voxel likelihoods with a 3D CNN. See ``vpx.pipeline`` for the end
to end flow and ``vpx.cli`` for the command-line entry point.
"""

__version__ = "0.1.0"
