class InpaintingError(ValueError):
    """Base class for invalid inputs to the spline inpainting pipeline."""


class KnotGridSizingError(InpaintingError):
    """Raised when a knot grid cannot be built for the requested order and pixel count."""


class BasisIndexError(InpaintingError):
    """Raised when a B-spline index lies outside 0..m+n-1 of its axis."""


class DomainError(InpaintingError):
    """Raised when an evaluation point lies outside the rectangle R."""


class DuplicateSiteError(InpaintingError):
    """Raised when snapping a Greville abscissa would break strict monotonicity of the sites."""


class SchoenbergWhitneyError(InpaintingError):
    """Raised when an interpolation site falls outside the support of its B-spline."""


class MaskError(InpaintingError):
    """Raised for masks that touch the image border, cover everything, or mismatch the image."""


class QuadratureOrderError(InpaintingError):
    """Raised for Gauss-Legendre orders outside the supported range."""


class FactorizationError(InpaintingError):
    """Raised when a collocation system cannot be factorized."""


class ImageFormatError(InpaintingError):
    """Raised for unsupported image or mask file formats."""
