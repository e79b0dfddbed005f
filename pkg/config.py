# Constants for the phi operator-iteration toolkit

VERSION = "1.0.0"  # Reported by `phi --version` and stamped into every report
DEFAULT_CONFIG_PATH = "configs/config.yaml"  # First entry of the configuration search path
