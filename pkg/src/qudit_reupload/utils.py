import math
import os
from pathlib import Path

from qudit_reupload.logger import get_logger

logger = get_logger()

REPORT_TEMPLATE_DIR = "src/resources/report"
DIGITS_FIXTURE = "src/resources/data/digits_fixture.csv"


def create_folder_if_not_exists(folder_path: str):
    if os.path.isdir(folder_path):
        return
    os.makedirs(folder_path, exist_ok=True)
    logger.debug(f"Created output folder {folder_path}")


def format_float(value: float) -> str:
    """17 significant digits, 'nan' for missing values"""
    if value is None or not math.isfinite(value):
        return "nan"
    return f"{value:.17g}"


def _resource_root() -> Path:
    if "__compiled__" in globals():
        # onefile builds unpack the data dirs beside the package
        return Path(__file__).parent.parent
    # src/qudit_reupload/utils.py -> repository root
    return Path(__file__).parent.parent.parent


def get_resource_path(relative_path: str) -> Path:
    """
    Absolute path of a bundled resource such as the report template
    directory or the digits fixture.

    Args:
        relative_path: Path below the repository root, e.g. REPORT_TEMPLATE_DIR
    """
    resource_path = _resource_root() / relative_path
    logger.debug(f"Resource {relative_path} -> {resource_path}")
    return resource_path
