"""Raw-video super-resolution toolkit.

Subpackages: ``core`` (tensor ops with hand-written backwards), ``pipeline``
(Bayer degradation, ISP simulation, synthetic video, datasets), ``kernels``
(compiled/numpy hot loops). Modules: ``hmm`` (exact pairwise-fusion
inference), ``blocks`` (alignment and reconstruction layers), ``model``,
``metrics``, ``train``, ``config``, ``cli``.
"""

__version__ = "0.1.0"
