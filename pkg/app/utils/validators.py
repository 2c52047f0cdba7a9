import re
from typing import List, Tuple, Union

import numpy as np

GRAPH_SPEC_PATTERN = re.compile(r"^(?P<family>[a-z][a-z0-9]*):(?P<size>\d+)$")
MARKED_LIST_PATTERN = re.compile(r"^\d+(,\d+)*$")
FRACTION_PATTERN = re.compile(r"^fraction:(?P<rho>\d*\.?\d+(e-?\d+)?)$")
HAMILTONIAN_PATTERN = re.compile(r"^(?P<kind>random|chain):(?P<arg>.+)$")


def parse_graph_spec(spec: str) -> Tuple[str, int]:
    """Parse 'family:size', e.g. 'complete:32' or 'torus2d:8'"""
    match = GRAPH_SPEC_PATTERN.match(spec.strip())
    if not match:
        raise ValueError(f"Graph spec must look like 'family:size', got '{spec}'")
    return match.group("family"), int(match.group("size"))


def parse_marked_spec(spec: Union[str, List[int]]) -> Union[List[int], str, float]:
    """Parse a marked-set spec.

    Returns a list of node indices, the string "single", or the fraction
    rho for "fraction:rho".
    """
    if isinstance(spec, list):
        return [int(x) for x in spec]
    spec = str(spec).strip()
    if spec == "single":
        return "single"
    if MARKED_LIST_PATTERN.match(spec):
        return [int(x) for x in spec.split(",")]
    match = FRACTION_PATTERN.match(spec)
    if match:
        rho = float(match.group("rho"))
        if not 0.0 < rho < 1.0:
            raise ValueError(f"Marked fraction must lie in (0, 1), got {rho}")
        return rho
    raise ValueError(f"Marked spec must be an index list, 'single' or 'fraction:rho', got '{spec}'")


def parse_hamiltonian_spec(spec: str) -> Tuple[str, str]:
    """'random:<dim>', 'chain:<graph spec>' or a path to a JSON matrix file"""
    match = HAMILTONIAN_PATTERN.match(spec.strip())
    if match:
        return match.group("kind"), match.group("arg")
    if spec.endswith(".json"):
        return "file", spec
    raise ValueError(f"Hamiltonian spec must be 'random:dim', 'chain:family:size' or a .json file, got '{spec}'")


def parse_float_list(spec: str) -> List[float]:
    try:
        return [float(x) for x in spec.split(",") if x.strip()]
    except ValueError:
        raise ValueError(f"Expected a comma-separated list of numbers, got '{spec}'")


def parse_int_list(spec: str) -> List[int]:
    values = parse_float_list(spec)
    if any(v != int(v) for v in values):
        raise ValueError(f"Expected integers, got '{spec}'")
    return [int(v) for v in values]


def check_square(matrix: np.ndarray, name: str = "matrix") -> np.ndarray:
    matrix = np.asarray(matrix)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError(f"{name} must be square, got shape {matrix.shape}")
    return matrix
