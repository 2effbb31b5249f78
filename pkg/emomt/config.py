"""
Global configuration settings for the emotion-conditioned translation pipeline
"""
import os
import runpy

# Remote services - can be overridden with environment variables
SER_ENDPOINT = os.environ.get('EMOMT_SER_ENDPOINT') or None
COMET_ENDPOINT = os.environ.get('EMOMT_COMET_ENDPOINT') or None
COMET_MODEL = os.environ.get('EMOMT_COMET_MODEL', 'Unbabel/wmt22-comet-da')

# HTTP client behaviour for the SER and COMET endpoints
REQUEST_TIMEOUT = float(os.environ.get('EMOMT_REQUEST_TIMEOUT', '60'))
REQUEST_BATCH_SIZE = int(os.environ.get('EMOMT_REQUEST_BATCH_SIZE', '32'))
MAX_WORKERS = int(os.environ.get('EMOMT_MAX_WORKERS', '4'))

# Emotion binarization threshold ("higher or lower than 0.5")
EMOTION_THRESHOLD = 0.5

# Training budget
DEFAULT_MAX_EPOCHS = 5
DEFAULT_SEED = 42
DEFAULT_EARLY_STOPPING_METRIC = "dev_loss"

# Where experiment runs are persisted
RUN_ROOT = os.environ.get('EMOMT_RUN_ROOT', 'runs')

# Split names used by experiments
TRAIN_SPLIT = "train"
DEV_SPLIT = "dev"
TEST_SPLIT = "test"

# External fine-tuning driver. Placeholders: {train} {dev} {out_dir} {max_epochs} {seed}
# for training, {checkpoint} {prompts} {out} for generation.
EXTERNAL_TRAIN_COMMAND = os.environ.get('EMOMT_EXTERNAL_TRAIN_COMMAND') or None
EXTERNAL_GENERATE_COMMAND = os.environ.get('EMOMT_EXTERNAL_GENERATE_COMMAND') or None

# Reference toy trainer hyperparameters
TOY_DEFAULTS = {
    'embedding_size': 32,
    'hidden_size': 64,
    'learning_rate': 5e-3,
    'batch_size': 16,
    'max_source_len': 256,
    'max_target_len': 128,
    'grad_clip': 1.0,
}

# Load optional local config if exists
local_config = os.path.join(os.path.dirname(__file__), 'local_config.py')
if os.path.exists(local_config):
    globals().update({
        key: value
        for key, value in runpy.run_path(local_config).items()
        if key.isupper()
    })
