"""Abstract base class for image file codecs.
"""


from abc import ABCMeta, abstractmethod
from six import add_metaclass


@add_metaclass(ABCMeta)
class ImageCodecBase(object):
    """
    Base class to handle format-specific reading and writing of 8-bit RGB images
    """

    @abstractmethod
    def read(self, path):
        """Return an HxWx3 uint8 array.

        Grayscale sources are replicated to three channels; anything that is
        not 8 bits per sample raises UnsupportedImageError.
        """

    @abstractmethod
    def write(self, pixels, path):
        """Write an HxWx3 uint8 array to path."""
