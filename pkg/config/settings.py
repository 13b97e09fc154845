"""
Configuration settings for the radar-camera fusion bench.
Adjust these values to change grid size, model widths and training schedule.
Per-run overrides go in a JSON key-value file (see config/run_config.json).
"""

# ===================
# BEV Grid
# ===================
BEV_X_RANGE = (-32.0, 32.0)  # meters, rows (x forward)
BEV_Y_RANGE = (-32.0, 32.0)  # meters, columns (y left)
BEV_RESOLUTION = 0.5         # meters per cell -> 128 x 128
BEV_CHANNELS = 64            # C, shared by radar BEV, camera features and queries
MIN_GRID_CELLS = 8           # per BEV axis

# ===================
# Radar
# ===================
RADAR_MAX_SWEEPS = 7         # current + six previous
RADAR_SWEEP_PERIOD = 0.075   # seconds between sweeps
RADAR_V_MAX = 50.0           # m/s, filter bound
RADAR_RCS_MIN = -10.0        # dBsm, filter bound
RADAR_POINT_FEATURES = 9     # x, y, z, rcs, vx, vy, age, dx_cell, dy_cell
RADAR_MLP_LAYERS = 2
RADAR_CONV_LAYERS = 2

# ===================
# Camera
# ===================
CAMERA_LEVELS = 3
CAMERA_MIN_DEPTH = 0.1       # meters, projections closer than this are invalid

# ===================
# BEV Encoder
# ===================
ENCODER_LAYERS = 2           # L
ATTN_SAMPLES = 4             # S sampling points per reference
SCA_HEIGHTS = 4              # N_z pillar reference heights
SCA_Z_RANGE = (-1.0, 3.0)    # meters
MLP0_LAYERS = 1
FFN_EXPANSION = 2
NORM_EPS = 1e-5

# ===================
# Detection Head
# ===================
CLASSES = ["car", "pedestrian", "cycle"]
HEAD_HIDDEN = 64
MAX_PROPOSALS = 100
REGRESSION_WIDTH = 10        # dx, dy, z, log w, log l, log h, sin, cos, vx, vy

# ===================
# Refinement
# ===================
GRID_PER_POINT = 7           # T
GRID_SELECTED = 64           # M
RHO_MIN = 0.5                # meters
RHO_MAX = 3.0                # meters
GRID_MODE = "adaptive"       # adaptive | fixed | radar
FIXED_GRID_SIDE = 4          # fixed mode lattice is side x side
SPA_AZIMUTH_DEG = 5.0
SPA_RADIAL = 3.0             # meters
SETABS_RADII = (0.8, 1.6)    # meters
POS_ENC_FREQS = 8
POS_ENC_SCALE = 8.0          # meters, lowest frequency wavelength is 2*pi*scale
REFINE_HIDDEN = 64
REFINE_WIDTH = 10            # dx, dy, dz, dlog w/l/h, dyaw, dvx, dvy, dscore

# ===================
# Training
# ===================
TRAIN_STEPS = 200
LEARNING_RATE = 1e-2
LR_DECAY_STEP = 150
LR_DECAY_FACTOR = 0.1
FOCAL_ALPHA = 2.0
FOCAL_BETA = 4.0
REG_LOSS_WEIGHT = 1.0
REFINE_LOSS_WEIGHT = 1.0
REFINE_JITTER = 1.0          # meters, std of center jitter on training proposals
REFINE_PROPOSALS_PER_SCENE = 8

# ===================
# Evaluation
# ===================
MATCH_THRESHOLDS = (0.5, 1.0, 2.0, 4.0)
TP_THRESHOLD = 2.0
MIN_RECALL = 0.1
MIN_PRECISION = 0.1
MAP_WEIGHT = 5.0

# ===================
# Paths
# ===================
DB_PATH = "data/runs.db"
SCENES_DIR = "scenes"
OUTPUT_DIR = "runs"
DEFAULT_CONFIG = "config/run_config.json"

# ===================
# Logging
# ===================
LOG_LEVEL = "INFO"           # DEBUG, INFO, WARNING, ERROR
LOG_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"

# ===================
# Execution
# ===================
DEFAULT_SEED = 0
WORKERS = 1                  # scene-level threads; results are reduced in input order

# ===================
# Scene Simulator
# ===================
SIM_OBJECTS = (3, 15)                # boxes per scene, inclusive
SIM_RETURNS_PER_BOX = (1, 8)         # radar returns per box per sweep, inclusive
SIM_CLUTTER = (5, 20)                # clutter returns per sweep, inclusive
SIM_SWEEPS = 7                       # sweeps per scene: current + six previous
SIM_RADIAL_NOISE = 0.15              # meters
SIM_TANGENTIAL_RATIO = 3.0           # tangential sigma / radial sigma
SIM_DOPPLER_NOISE = 0.2              # m/s
SIM_FEATURE_NOISE = 0.05
SIM_MIN_RANGE = 3.0                  # meters, boxes closer to ego are resampled
SIM_EDGE_MARGIN = 1.0                # meters kept free at the extent border
SIM_CLASS_SIZES = {                  # mean (w, l, h) meters
    "car": (1.9, 4.5, 1.6),
    "pedestrian": (0.6, 0.7, 1.75),
    "cycle": (0.7, 1.8, 1.4),
}
SIM_CLASS_SPEED = {"car": 10.0, "pedestrian": 1.5, "cycle": 5.0}   # m/s, max
SIM_CLASS_RCS = {"car": 10.0, "pedestrian": -5.0, "cycle": 0.0}    # dBsm, mean

# ===================
# Camera Rig
# ===================
RIG_YAWS_DEG = (0.0, 60.0, 120.0, 180.0, -120.0, -60.0)
RIG_MOUNT = (0.5, 0.0, 1.5)          # meters, rotated by each camera's yaw
RIG_FOCAL = 48.0                     # pixels
RIG_IMAGE_SIZE = (128, 64)           # (width, height) pixels
RIG_FEATURE_SCALES = (0.25, 0.125, 0.0625)
