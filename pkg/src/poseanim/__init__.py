"""Pose-driven image animation with a toy diffusion transformer.

Subpackages and modules:

* ``numerics``     - float64 tensor engine with reverse-mode autodiff
* ``codec``        - parameter-free latent codec (first frame standalone, 4x temporal, 8x spatial)
* ``pose``         - pose files, heatmap rendering, synthetic clips, measurement oracle
* ``conditioning`` - driving-pose / reference-pose encoders and input assembly
* ``dit``, ``lora`` - diffusion transformer and low-rank adapters
* ``flow``         - flow-matching loss, Euler sampler, training loop
* ``long_video``   - overlapped sliding-window generation
* ``cli``          - command line entry point
"""

__version__ = "0.1.0"
