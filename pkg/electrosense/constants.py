"""Shared constants for the electro-sensing pipeline."""

KEYBOARD_INTERRUPT_EXIT_CODE = 130
BANNER_WIDTH = 70

DEFAULT_WAVELET = "db6"
DEFAULT_TABLE_DEPTH = 12
MIN_TABLE_DEPTH = 6
LATTICE_MARGIN = 6
SMOOTHING_SAMPLES = 3

MIN_MESH_NODES = 16
NODES_PER_SUPPORT = 8
COINCIDENT_TOLERANCE = 1e-14
PLACEMENT_TOLERANCE = 1e-10
CONTRAST_MARGIN = 1e-9

DROP_TOLERANCE = 1e-14
LSTSQ_CUTOFF = 1e-10
POWER_ITERATIONS = 50
FISTA_MAX_ITERATIONS = 2000
FISTA_TOLERANCE = 1e-6
ADJOINT_CHUNK = 65536

MIN_SCALE = -6
MAX_SCALE = -2
MAX_GPT_ORDER = 6

PGM_MAXVAL = 65535
CURVE_SAMPLES = 4096
FOOT_NEWTON_STEPS = 8

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
LOG_DATE_FORMAT = "%Y-%m-%d %H:%M:%S"
LOG_MAX_BYTES = 10 * 1024 * 1024
LOG_BACKUP_COUNT = 5
