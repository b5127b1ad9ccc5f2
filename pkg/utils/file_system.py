import csv
import logging
import os
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Union

import numpy as np
import yaml

from services.types import DataError, ParseError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class FileSystemUtil:
    """
    FileSystemUtil provides the file IO shared by the CLI, the harness and the HTTP layer:
    YAML mappings, "v value" sidecar files and CSV tables.
    """
    base_path: str = "."  # Default base path

    def __init__(self, base_path: Union[str, Path, None] = None):
        """
        Initializes the FileSystemUtil with a base path.
        :param base_path: The base directory relative paths are resolved against.
        """
        if base_path:
            self.base_path = str(base_path)

    def resolve(self, path: PathLike) -> Path:
        path = Path(path)
        return path if path.is_absolute() else Path(self.base_path) / path

    def path_exists(self, path: PathLike) -> bool:
        """
        Checks if a path exists.
        :param path: The path to check.
        :return: True if the path exists, False otherwise.
        """
        return self.resolve(path).exists()

    def ensure_parent(self, path: PathLike) -> Path:
        """
        Ensures that the directory of the file exists.
        :param path: The file path whose directory is created.
        :return: The resolved path.
        """
        resolved = self.resolve(path)
        os.makedirs(resolved.parent, exist_ok=True)
        return resolved

    @staticmethod
    def dump_dict_to_yaml(filename: PathLike, data_dict: Dict):
        """
        Dumps a dictionary to a YAML file.
        :param data_dict: The dictionary to dump.
        :param filename: The file to dump the dictionary into.
        """
        with open(filename, 'w') as file:
            yaml.safe_dump(data_dict, file, sort_keys=False)

    @staticmethod
    def read_yaml_file(file_path: PathLike) -> Dict:
        """
        Reads a YAML file and returns the data as a dictionary.
        :param file_path: The path to the YAML file.
        :return: Dictionary containing the YAML file data (empty for an empty file).
        """
        with open(file_path, 'r') as file:
            data = yaml.safe_load(file)
        return data or {}

    def read_node_values(self, path: PathLike, node_count: int, original_ids: Sequence[int] = None) -> np.ndarray:
        """
        Reads a "v value" sidecar (allocation x_v or threshold τ_v per line).
        :param path: sidecar file; '#' lines are comments, nodes not listed get 0.
        :param node_count: number of nodes of the graph the values belong to.
        :param original_ids: original id of every dense node; node ids in the file are original ids when given.
        :return: dense per-node array.
        """
        dense = {int(raw): v for v, raw in enumerate(original_ids)} if original_ids is not None else None
        values = np.zeros(node_count)
        with open(self.resolve(path), "r", encoding="utf-8") as f:
            for line_number, line in enumerate(f, start=1):
                stripped = line.strip()
                if not stripped or stripped.startswith("#"):
                    continue
                tokens = stripped.split()
                if len(tokens) != 2:
                    raise ParseError(f"expected 'v value', got {len(tokens)} fields", line_number)
                try:
                    node, value = int(tokens[0]), float(tokens[1])
                except ValueError:
                    raise ParseError(f"cannot parse '{stripped}'", line_number)
                if dense is not None:
                    if node not in dense:
                        raise ParseError(f"node {node} is not in the graph", line_number)
                    node = dense[node]
                elif not 0 <= node < node_count:
                    raise ParseError(f"node {node} outside 0..{node_count - 1}", line_number)
                values[node] = value
        return values

    def write_node_values(self, path: PathLike, values: Iterable[float], original_ids: Sequence[int] = None) -> Path:
        """
        Writes one "v value" line per node, values at full precision.
        :param original_ids: ids to print instead of the dense node index.
        """
        resolved = self.ensure_parent(path)
        with open(resolved, "w", encoding="utf-8", newline="\n") as f:
            for v, value in enumerate(values):
                node = int(original_ids[v]) if original_ids is not None else v
                f.write(f"{node} {float(value)!r}\n")
        return resolved

    def write_csv(self, path: PathLike, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
        """
        Writes an RFC-4180 CSV file (CRLF line ends, minimal quoting).
        :param header: column names.
        :param rows: rows in output order.
        """
        resolved = self.ensure_parent(path)
        with open(resolved, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\r\n")
            writer.writerow(header)
            writer.writerows(rows)
        return resolved

    def read_csv(self, path: PathLike, header: Sequence[str]) -> List[Dict[str, str]]:
        """
        Reads a CSV file written by write_csv.
        :param header: expected column names, in order.
        :return: one dict of raw strings per row.
        """
        with open(self.resolve(path), "r", encoding="utf-8", newline="") as f:
            reader = csv.reader(f)
            found = next(reader, None)
            if found is None or list(found) != list(header):
                raise DataError(f"Unexpected CSV header in {path}: {found}")
            rows = []
            for line_number, record in enumerate(reader, start=2):
                if len(record) != len(header):
                    raise ParseError(f"expected {len(header)} fields, got {len(record)}", line_number)
                rows.append(dict(zip(header, record)))
        logger.debug(f"Read {len(rows)} rows from {path}")
        return rows


fs_util = FileSystemUtil()
