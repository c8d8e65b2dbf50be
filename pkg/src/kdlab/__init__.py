"""kdlab: a desk-scale numerical laboratory for kernel views of
knowledge distillation.

Submodules:
    linalg          symmetric PSD factorizations with jitter escalation
    data            synthetic binary/multiclass datasets and target encodings
    model           small MLPs with exact jacobian/JVP/VJP machinery
    losses          training losses and their logit gradients
    ntk             empirical tangent kernels and the similarity probe
    kernel_machine  kernel ridge solver and supervision-complexity metrics
    bounds          margin losses and generalization bounds
    distill         SGD trainer, offline and online distillation
    linnet          linearized networks and function-space gradient flow
    harness         experiment recipes, TOML configs, CSV reports
"""

from .version import VERSION as __version__

__all__ = ["__version__"]
