"""Fixed vocabulary: loss network topology, file formats, CSV layouts."""

# VGG-19 convolution sequence as (layer name, output channels); a max-pool
# with stride 2 separates consecutive blocks
VGG19_LAYERS = (
    ('conv1_1', 64), ('conv1_2', 64),
    ('conv2_1', 128), ('conv2_2', 128),
    ('conv3_1', 256), ('conv3_2', 256), ('conv3_3', 256), ('conv3_4', 256),
    ('conv4_1', 512), ('conv4_2', 512), ('conv4_3', 512), ('conv4_4', 512),
    ('conv5_1', 512), ('conv5_2', 512), ('conv5_3', 512), ('conv5_4', 512),
)
VGG19_LAYER_NAMES = tuple(name for name, _ in VGG19_LAYERS)

# default layer selections
CONTENT_LAYERS_LOCAL = ('conv4_2',)
STYLE_LAYERS_LOCAL = ('conv1_1', 'conv2_1', 'conv3_1', 'conv4_1', 'conv5_1')
CONTENT_LAYERS_GLOBAL = ('conv3_2',)
STYLE_LAYERS_GLOBAL = ('conv1_2', 'conv2_2', 'conv3_3', 'conv4_3', 'conv5_3')

# loss presets
LOSS_PRESET_SEMANTIC = 'semantic'
LOSS_PRESET_UNMASKED = 'unmasked'
LOSS_PRESET_UNMASKED_NORMALIZED = 'unmasked-normalized'
LOSS_PRESETS = (LOSS_PRESET_SEMANTIC, LOSS_PRESET_UNMASKED, LOSS_PRESET_UNMASKED_NORMALIZED)

GRAM_RAW = 'raw'
GRAM_BY_ELEMENTS = 'by-elements'

# transform network presets
PRESET_SHAPE_PRESERVING = 'shape-preserving'
PRESET_TABLE_FAITHFUL = 'table-faithful'
TRANSFORM_PRESETS = (PRESET_SHAPE_PRESERVING, PRESET_TABLE_FAITHFUL)
TRANSFORM_WIDTHS = (32, 64, 128)
TRANSFORM_RESIDUAL_BLOCKS = 4
TRANSFORM_INPUT_PAD = 12

# trainable parameter count of the default four-block network
TRANSFORM_PARAMETER_COUNT = 1453891

# tags of loss network weight files: externally converted VGG-19 weights
# (inputs get mean subtraction) and exported seeded weights (they do not)
LOSS_NET_TAG = 'vgg19'
LOSS_NET_SEEDED_TAG = 'vgg19-seeded'
LOSS_NET_TAGS = (LOSS_NET_TAG, LOSS_NET_SEEDED_TAG)

# model file
MODEL_MAGIC = b'EPNN'
MODEL_VERSION = 1
DTYPE_TAG_F32 = 1

# semantic mask channels
MASK_PUPIL = 0
MASK_IRIS = 1
MASK_CHANNELS = 2
MASK_SUFFIX = '.mask'

# CSV layouts
LOSS_CURVE_HEADER = ('iter', 'total', 'content', 'style', 'tv', 'ms')
BENCH_HEADER = ('method', 'resolution', 'seconds', 'speedup')
PUPIL_HEADER = ('name', 'distance')

# process exit codes
EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_NUMERIC = 3
