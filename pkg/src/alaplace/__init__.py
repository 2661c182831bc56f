"""Orlicz N-function calculus, the A-Laplace operator and higher-integrability experiments."""

from ._validation import DomainError
from .nfunction import (NFunction, NFunctionPair, eval_A, eval_A_inverse, eval_conjugate,
                        from_spec, parse_nf, plog, power, tlog1p)

__version__ = "0.1.0"
