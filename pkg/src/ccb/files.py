################################################################################
# Input files - Functions that turn arguments into verified paths and load
# specifications, knapsack instances, SVM datasets and configurations
################################################################################


import csv
import json
import logging
import os
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .data import SumSpec, sum_spec_from_dict
from .errors import DomainError
from .knapsack import (
    DEFAULT_TAU,
    SIGMA_FIXED,
    KnapsackInstance,
    adapt_instance,
    instance_from_dict,
    make_instance,
)

INSTANCE_EXTENSIONS = [".txt", ".json"]

logger = logging.getLogger("ccb")
logger.setLevel(logging.CRITICAL)  # Start with logging disabled


def verify_path(path):
    """Verify that a given path exists, is readable, and is not a directory.

    Args:
        path (str): The file path to verify.

    Returns:
        str: The verified path.

    Raises:
        FileNotFoundError: If the path does not exist.
        PermissionError: If the file is not readable.
        IsADirectoryError: If the path is a directory.
    """
    logger.debug(f"Verifying file path: {path}")
    if not os.path.exists(path):
        raise FileNotFoundError(f"Error: Path does not exist: {path}")
    if not os.access(path, os.R_OK):
        raise PermissionError(f"Error: File is not readable: {path}")
    if os.path.isdir(path):
        raise IsADirectoryError(f"Error: Path is a directory, not a file: {path}")
    return path


def expand_directory(directory, extensions=INSTANCE_EXTENSIONS):
    """Find all files in a directory with specified extensions.

    Args:
        directory (str): The directory path to search.
        extensions (list): List of file extensions to include.

    Returns:
        list: A sorted list of file paths matching the extensions (not validated).
    """
    logger.debug(f"Expanding directory with directory='{directory}', extensions='{extensions}'")
    matches = []
    for root, _, filenames in os.walk(directory):
        for filename in filenames:
            if any(filename.endswith(ext) for ext in extensions):
                matches.append(os.path.join(root, filename))
    return sorted(matches)


def file_sort_key(path):
    """Key function for sorting files by name then extension priority."""
    base_name = os.path.splitext(os.path.basename(path))[0]
    ext = os.path.splitext(path)[1]
    ext_priority = INSTANCE_EXTENSIONS.index(ext) if ext in INSTANCE_EXTENSIONS else len(INSTANCE_EXTENSIONS)
    return (base_name, ext_priority)


def get_files_from_args(srcs, extensions=None) -> List[str]:
    """Expand files and directories into a sorted list of verified paths.

    Raises:
        FileNotFoundError: If a path does not exist.
        PermissionError: If a file is not readable.
    """
    if extensions is None:
        extensions = INSTANCE_EXTENSIONS
    expanded = []
    for src in srcs:
        if os.path.isdir(src):
            expanded.extend(expand_directory(src, extensions=extensions))
        else:
            expanded.append(src)
    verified = [verify_path(path) for path in expanded]
    verified.sort(key=file_sort_key)
    return verified


################################################################################
# Loaders
################################################################################


def read_json(path) -> Any:
    """Parse a JSON file.

    Raises:
        DomainError: If the file is not valid JSON.
    """
    verify_path(path)
    with open(path, "r", encoding="utf-8") as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as e:
            raise DomainError(f"{path}: invalid JSON ({e})") from e


def load_sum_spec(path) -> SumSpec:
    return sum_spec_from_dict(read_json(path))


def load_knapsack_text(path) -> Tuple[np.ndarray, np.ndarray, float]:
    """Read a deterministic knapsack: "N C" then N lines "profit weight".

    Blank lines are skipped; anything after the N item lines is ignored.

    Returns:
        Tuple[np.ndarray, np.ndarray, float]: (profits, weights, capacity).

    Raises:
        DomainError: If the file does not follow the format.
    """
    verify_path(path)
    with open(path, "r", encoding="utf-8") as f:
        lines = [line.split() for line in f if line.strip()]
    try:
        n, capacity = int(lines[0][0]), float(lines[0][1])
        items = [(float(row[0]), float(row[1])) for row in lines[1 : n + 1]]
    except (IndexError, ValueError) as e:
        raise DomainError(f"{path}: expected 'N C' then N lines 'profit weight' ({e})") from e
    if len(items) != n:
        raise DomainError(f"{path}: header announces {n} items, found {len(items)}")
    if len(lines) > n + 1:
        logger.debug(f"{path}: ignoring {len(lines) - n - 1} trailing lines")
    if n < 1:
        raise DomainError(f"{path}: an instance needs at least one item")
    profits, weights = np.array(items).T
    return profits, weights, capacity


def instance_name(path) -> str:
    return os.path.splitext(os.path.basename(path))[0]


def load_knapsack_instance(
    path,
    tau: Optional[float] = None,
    sigma_rule: str = SIGMA_FIXED,
    rng: Optional[np.random.Generator] = None,
) -> KnapsackInstance:
    """Load a canonical JSON instance or adapt a deterministic text instance.

    Args:
        path (str): .json or .txt file.
        tau (Optional[float]): Overrides the file's level; text instances
            default to 0.03.
        sigma_rule (str): Adaptation rule for text instances.
        rng (Optional[np.random.Generator]): Needed by the random rule.
    """
    name = instance_name(path)
    if path.endswith(".json"):
        instance = instance_from_dict(read_json(path))
        if tau is not None:
            instance = make_instance(
                instance.profits,
                instance.mean_weights,
                instance.sigmas,
                instance.b_upper,
                instance.capacity,
                tau,
                instance.name or name,
            )
        instance.name = instance.name or name
        return instance
    profits, weights, capacity = load_knapsack_text(path)
    return adapt_instance(
        profits,
        weights,
        capacity,
        tau=DEFAULT_TAU if tau is None else tau,
        sigma_rule=sigma_rule,
        rng=rng,
        name=name,
    )


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def load_svm_csv(path) -> Tuple[np.ndarray, np.ndarray]:
    """Read one point per row, features first and the label (-1 or 1) last.

    A first row that is not numeric is taken as a header.

    Returns:
        Tuple[np.ndarray, np.ndarray]: points (M, N) and labels (M,).

    Raises:
        DomainError: On ragged rows, non-numeric cells or bad labels.
    """
    verify_path(path)
    with open(path, "r", encoding="utf-8", newline="") as f:
        rows = [row for row in csv.reader(f) if row]
    if rows and not all(_is_number(cell) for cell in rows[0]):
        rows = rows[1:]
    if not rows:
        raise DomainError(f"{path}: no data rows")
    width = len(rows[0])
    if width < 2 or any(len(row) != width for row in rows):
        raise DomainError(f"{path}: every row needs the same number (>= 2) of columns")
    try:
        table = np.array([[float(cell) for cell in row] for row in rows])
    except ValueError as e:
        raise DomainError(f"{path}: non-numeric cell ({e})") from e
    labels = table[:, -1]
    if not np.all(np.isin(labels, (-1.0, 1.0))):
        raise DomainError(f"{path}: labels must be -1 or 1")
    logger.debug(f"Loaded {table.shape[0]} points with {width - 1} features from {path}")
    return table[:, :-1], labels.astype(int)


def load_svm_sidecar(path) -> Dict[str, Any]:
    """Read optional overrides {"sigmas": [[...]], "b": [[...]], "tau": x or [...]}.

    Raises:
        DomainError: On unknown keys.
    """
    document = read_json(path)
    unknown = set(document) - {"sigmas", "b", "tau", "penalty"}
    if unknown:
        raise DomainError(f"{path}: unknown sidecar keys {sorted(unknown)}")
    overrides = {}
    for key in ("sigmas", "b", "tau"):
        if key in document:
            overrides[key] = np.asarray(document[key], dtype=float)
    if "penalty" in document:
        overrides["penalty"] = float(document["penalty"])
    return overrides
