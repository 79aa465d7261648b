"""Default settings for eye_purify.

Values here are the defaults every module reads at call time. A run
configuration file or command-line flag overrides them for one run; a
handful can also be set from the environment.
"""

import os


# Debugging
DEBUG_MODE = bool(os.environ.get('EYEPURIFY_DEBUG'))
EXCEPTIONS_NO_CONTINUE = False  # set to True to always raise, fail application

# Sentry.io integration, needs requirements/production.txt
SENTRY_DSN = os.environ.get('EYEPURIFY_SENTRY_DSN') or False
if SENTRY_DSN:
    try:
        import sentry_sdk
        sentry_sdk.init(SENTRY_DSN)
    except ImportError:
        pass

# cap on worker threads for per-image batch work
THREADS = int(os.environ.get('EYEPURIFY_THREADS', 0)) or os.cpu_count() or 1

# floating point type of every forward/backward computation
DTYPE = 'float32'

# raise when an operation turns finite inputs into NaN/Inf
CHECK_FINITE = True

# mask color code, 8-bit thresholds
WHITE_THRESHOLD = 250
RED_MIN = 200
RED_MAX_OTHER = 80

# soft mask values at or above this count as inside a region
MASK_BINARIZE = 0.5

# painted pupil radius as a fraction of the iris equivalent radius
PUPIL_RADIUS_RATIO = 0.4

# transform network
DROPOUT_P = 0.1
BN_EPS = 1e-5
BN_MOMENTUM = 0.1
MIN_IMAGE_SIZE = 32
TRANSFORM_PRESET = 'shape-preserving'

# loss weights
CONTENT_WEIGHT = 1e2
STYLE_WEIGHT = 1e4
LAMBDA_GLOBAL = 1.0
LAMBDA_LOCAL = 1.0
TV_WEIGHT = 1e-6
LOSS_PRESET = 'semantic'
GRAM_NORMALIZATION = 'raw'

# mean pixel subtracted before an externally loaded VGG-19, RGB order
VGG_MEAN_PIXEL = (123.68, 116.779, 103.939)

# projected L-BFGS
LBFGS_ITERATIONS = 500
LBFGS_MEMORY = 10
LBFGS_ARMIJO_C1 = 1e-4
LBFGS_TOLERANCE = 1e-9
LBFGS_GRADIENT_TOLERANCE = 1e-10
LBFGS_MAX_BACKTRACKS = 30
LBFGS_LOG_EVERY = 50
# floating point type of the pixel-space search
LBFGS_DTYPE = 'float64'

# Adam training
TRAIN_BATCH_SIZE = 4
TRAIN_ITERATIONS = 2000
TRAIN_LEARNING_RATE = 1e-4
TRAIN_IMAGE_SIZE = 256
TRAIN_LOG_EVERY = 10
SEED = 0

# benchmarking
BENCH_REPEATS = 5
BENCH_SIZES = (256, 512, 1024)
BENCH_LBFGS_ITERATIONS = 400
