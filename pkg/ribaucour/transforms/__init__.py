"""
Vectorial Ribaucour transforms
==============================

``ribaucour``: data ``(φ, β)`` over an analyzed immersion, the transform
``f̃ = f − ℱΩ⁻¹φ`` with its relation checks and inverse.

``permute``: splitting a transform into two sequential ones, assembling a
transform from scalar ones, and the Bianchi cube of ``k`` scalar transforms.
"""

from ribaucour.transforms.ribaucour import (
    RibaucourData,
    TransformResult,
    build_data,
    invert,
    transform,
    verify_prop12,
)

__all__ = [
    "RibaucourData",
    "TransformResult",
    "build_data",
    "invert",
    "transform",
    "verify_prop12",
]
