import json
import os
from typing import Any, Sequence

import numpy as np

from lccmatch.core import MalformedDocument


def argmax(values: Sequence[float]) -> int:
    """
    The index of the largest value. Ties go to the lowest index.

    >>> argmax([0.1, 0.7, 0.2])
    1
    >>> argmax([0.5, 0.5])
    0
    """
    return int(np.argmax(np.asarray(values, dtype=float)))


def write_json(path: str, data: Any) -> None:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as outfile:
        json.dump(data, outfile, indent=2, sort_keys=True)
        outfile.write('\n')


def read_json(path: str) -> Any:
    with open(path, encoding='utf-8') as infile:
        try:
            return json.load(infile)
        except json.JSONDecodeError as err:
            raise MalformedDocument(f"{path} is not valid JSON: {err}") from err
