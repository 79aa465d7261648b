"""Exception types for eye_purify operations."""

import logging

from eye_purify import constants, settings

HAS_SENTRY_INTEGRATION = False


logger = logging.getLogger(__name__)


try:
    from sentry_sdk import capture_exception, capture_message, configure_scope
    HAS_SENTRY_INTEGRATION = True
except ImportError:
    logger.debug("No Sentry.io integration defined for eye_purify")


class EyePurifySentryMixin(object):
    """Defines exception class methods to explicitly send messages or exceptions to Sentry.io."""

    MSG_SENT_TO_SENTRY = 'Sent to Sentry.io' if HAS_SENTRY_INTEGRATION else ''

    def update_sentry_scope(self, scope, level='warning', **kwargs):
        """Set up Scope context for Sentry logging."""
        scope.level = level
        for key, value in kwargs.items():
            scope.set_extra(key, value)
        return scope

    def log_error(self, log_type):
        """Send exception information to Sentry if integrated.

        Typically called if we need to know about the exception but we don't want to fail the run.
        """
        if HAS_SENTRY_INTEGRATION and settings.SENTRY_DSN:
            with configure_scope() as scope:
                extra_context = dict()
                if getattr(self, 'path', None):
                    extra_context['path'] = str(self.path)
                if getattr(self, 'diagnostics', None):
                    extra_context.update(self.diagnostics)
                self.update_sentry_scope(scope, 'warning', **extra_context)
                if log_type == 'exception':
                    capture_exception(self)
                else:
                    capture_message(self.message)
        logger.warning('eye_purify caught exception type %s: %s. %s',
                       self.__class__.__name__, self.message, self.MSG_SENT_TO_SENTRY)


class EyePurifyException(Exception, EyePurifySentryMixin):
    """Base exception class for eye_purify."""

    exit_code = constants.EXIT_USAGE

    def __init__(self, message=None, *args):
        if message is None:
            message = 'An EyePurifyException occurred without a specific message'
        self.message = message
        super(EyePurifyException, self).__init__(message, *args)

    def err_continue_exc(self):
        """Handle non-fatal errors, tracking an exception in Sentry.io."""
        if settings.EXCEPTIONS_NO_CONTINUE:  # debug setting
            self.err_fail()
        else:
            self.log_error('exception')

    def err_continue_msg(self):
        """Handle non-fatal errors, tracking just a message in Sentry.io."""
        if settings.EXCEPTIONS_NO_CONTINUE:  # debug setting
            self.err_fail()
        else:
            self.log_error('message')

    def err_fail(self):
        self.log_error('exception')
        raise SystemExit(self.exit_code)


class ConfigurationError(EyePurifyException):
    """Invalid or unknown configuration value."""


class UsageError(ConfigurationError):
    """Malformed command line."""


class ShapeError(EyePurifyException):
    """Tensor shapes incompatible with an operation."""

    def __init__(self, message=None, expected=None, actual=None, *args):
        self.expected = expected
        self.actual = actual
        if expected is not None or actual is not None:
            message = "{} (expected {}, got {})".format(message, expected, actual)
        super(ShapeError, self).__init__(message, *args)


class UnknownLayerError(ConfigurationError):
    """Layer name outside the loss network topology."""

    def __init__(self, layer=None, *args):
        self.layer = layer
        message = "Unknown loss network layer '{}'".format(layer)
        super(UnknownLayerError, self).__init__(message, *args)


class MissingMaskError(ConfigurationError):
    """A configured loss layer has no prepared mask."""

    def __init__(self, layer=None, *args):
        self.layer = layer
        message = "No mask prepared for configured layer '{}'".format(layer)
        super(MissingMaskError, self).__init__(message, *args)


class MaskError(EyePurifyException):
    """Semantic mask cannot be used, e.g. no eye region at all."""

    def __init__(self, message=None, path=None, *args):
        self.path = path
        if path is not None:
            message = "{}: {}".format(path, message)
        super(MaskError, self).__init__(message, *args)


class ResolutionMismatchError(MaskError):
    """Mask and image (or feature map) sizes differ."""


class ImageIOError(EyePurifyException):
    """Image cannot be read or written."""

    exit_code = constants.EXIT_IO

    def __init__(self, message=None, path=None, *args):
        self.path = path
        if path is not None:
            message = "{}: {}".format(path, message)
        super(ImageIOError, self).__init__(message, *args)


class UnsupportedImageError(ImageIOError):
    """Image format or bit depth outside PNG/PPM 8-bit."""


class ModelFileError(EyePurifyException):
    """Malformed, truncated or corrupted model file."""

    exit_code = constants.EXIT_IO

    def __init__(self, message=None, path=None, *args):
        self.path = path
        if path is not None:
            message = "{}: {}".format(path, message)
        super(ModelFileError, self).__init__(message, *args)


class TopologyMismatchError(ModelFileError):
    """Model file holds layers of a different network."""


class NumericalError(EyePurifyException):
    """Non-finite value in an objective, gradient or tensor."""

    exit_code = constants.EXIT_NUMERIC

    def __init__(self, message=None, last_iterate=None, diagnostics=None, *args):
        self.last_iterate = last_iterate
        self.diagnostics = diagnostics or {}
        super(NumericalError, self).__init__(message, *args)


class EllipseFitError(NumericalError):
    """Degenerate point set for an ellipse fit."""


class BenchSkipped(EyePurifyException):
    """A bench row could not be measured, typically out of memory."""

    exit_code = constants.EXIT_NUMERIC
