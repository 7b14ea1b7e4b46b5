import os

from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

LOG_DIR = os.getenv("NODAL_LOG_DIR", "logs")
LOG_LEVEL = os.getenv("NODAL_LOG_LEVEL", "INFO")

# Root under which relative output directories from configs are resolved
OUTPUT_ROOT = os.getenv("NODAL_OUTPUT_ROOT", ".")

TOOL_VERSION = "0.1.0"
