"""
Signatures, the per-sample record that the matcher works from, and their
serialized form.

A signature is serialized as a UTF-8 JSON document:

    {"version": 1, "mode": "classification",
     "global": [v_1, ..., v_l],
     "local": [{"pair": [lo, hi], "scores": [b_lo, b_hi]}, ...]}

with the local entries in ascending pair order. A signature file holds one
such document per line, optionally preceded by a metadata line giving the
label names and the label pair set.

>>> s = Signature([0.25, 0.75], {LabelPair(0, 1): (0.5, 0.5)})
>>> serialize_signature(s)
b'{"version": 1, "mode": "classification", "global": [0.25, 0.75], "local": [{"pair": [0, 1], "scores": [0.5, 0.5]}]}'
>>> deserialize_signature(serialize_signature(s)) == s
True
"""
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence, Tuple

from lccmatch.core import (
    InvariantViolation,
    LabelPair,
    LabelPairSet,
    MalformedDocument,
    MatcherError,
    Signature,
    SignatureMode,
    VersionMismatch,
    validate_signature,
)
from lccmatch.models import ScoringModel
from lccmatch.pairs import LocalModelBank

logger = logging.getLogger(__name__)

SIGNATURE_VERSION = 1

# Deserialized local vectors may have lost a little precision on the way
# through other tools, so they're checked more loosely than fresh ones.
DESERIALIZE_TOLERANCE = 1e-6


def build_signature(
    x: Sequence[float],
    g: ScoringModel,
    bank: LocalModelBank,
    mode: SignatureMode = SignatureMode.CLASSIFICATION,
) -> Signature:
    """
    Score one sample with the global model and with every local model in
    the bank.
    """
    global_component = g.score(x)
    local_component = {}
    for pair, model in bank.models.items():
        b_lo, b_hi = model.score(x)
        local_component[pair] = (float(b_lo), float(b_hi))
    return Signature(global_component, local_component, mode)


def build_signatures(
    xs: Sequence[Sequence[float]],
    g: ScoringModel,
    bank: LocalModelBank,
    mode: SignatureMode = SignatureMode.CLASSIFICATION,
    workers: int = 1,
) -> List[Signature]:
    def sign(x):
        return build_signature(x, g, bank, mode)

    if workers > 1 and len(xs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            signatures = list(executor.map(sign, xs))
    else:
        signatures = [sign(x) for x in xs]
    logger.debug("Built %d signatures over %d label pairs", len(signatures), len(bank))
    return signatures


def signature_to_dict(s: Signature) -> dict:
    return {
        'version': SIGNATURE_VERSION,
        'mode': s.mode.value,
        'global': [float(value) for value in s.global_component],
        'local': [
            {'pair': [pair.lo, pair.hi], 'scores': [b_lo, b_hi]}
            for pair, (b_lo, b_hi) in sorted(s.local_component.items())
        ],
    }


def signature_from_dict(data) -> Signature:
    if not isinstance(data, dict):
        raise MalformedDocument("A signature document must be a JSON object")
    if 'version' not in data:
        raise MalformedDocument("The signature document has no version")
    if type(data['version']) is not int or data['version'] != SIGNATURE_VERSION:
        raise VersionMismatch(
            f"Signature documents of version {data['version']!r} aren't supported; "
            f"expected version {SIGNATURE_VERSION}"
        )
    try:
        mode = SignatureMode(data['mode'])
        global_component = [_real(value) for value in data['global']]
        local_component = {}
        for entry in data['local']:
            lo, hi = entry['pair']
            b_lo, b_hi = entry['scores']
            pair = _pair(lo, hi)
            if pair in local_component:
                raise InvariantViolation(f"{pair!r} appears twice in the signature")
            local_component[pair] = (_real(b_lo), _real(b_hi))
    except MatcherError:
        raise
    except (KeyError, TypeError, ValueError) as err:
        raise MalformedDocument(f"Not a signature document: {err!r}") from err

    signature = Signature(global_component, local_component, mode)
    validate_signature(signature, DESERIALIZE_TOLERANCE)
    return signature


def _real(value) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise MalformedDocument(f"Expected a number, got {value!r}")
    return float(value)


def _pair(lo, hi) -> LabelPair:
    if not all(isinstance(label, int) and not isinstance(label, bool) for label in (lo, hi)):
        raise MalformedDocument(f"Label pairs are made of integers, got {[lo, hi]!r}")
    try:
        return LabelPair(lo, hi)
    except MatcherError as err:
        raise InvariantViolation(str(err)) from err


def serialize_signature(s: Signature) -> bytes:
    return json.dumps(signature_to_dict(s)).encode('utf-8')


def deserialize_signature(payload: bytes) -> Signature:
    """
    Parse and check a serialized signature.

    >>> deserialize_signature(b'{"version": 1, "mode": "classif')  # doctest: +ELLIPSIS
    Traceback (most recent call last):
        ...
    lccmatch.core.MalformedDocument: The signature is not valid JSON: ...

    >>> deserialize_signature(b'{"version": 2, "mode": "classification", "global": [1.0], "local": []}')
    Traceback (most recent call last):
        ...
    lccmatch.core.VersionMismatch: Signature documents of version 2 aren't supported; expected version 1
    """
    try:
        data = json.loads(payload.decode('utf-8'))
    except UnicodeDecodeError as err:
        raise MalformedDocument(f"The signature is not UTF-8: {err}") from err
    except json.JSONDecodeError as err:
        raise MalformedDocument(f"The signature is not valid JSON: {err}") from err
    return signature_from_dict(data)


def write_signature_file(
    path: str,
    signatures: Sequence[Signature],
    label_names: Optional[Sequence[str]] = None,
    pair_set: Optional[LabelPairSet] = None,
) -> None:
    with open(path, 'wb') as outfile:
        if label_names is not None or pair_set is not None:
            metadata = {
                'label_names': list(label_names) if label_names is not None else None,
                'pair_set': pair_set.to_dict() if pair_set is not None else None,
            }
            outfile.write(json.dumps(metadata).encode('utf-8') + b'\n')
        for signature in signatures:
            outfile.write(serialize_signature(signature) + b'\n')


def _metadata_line(line: bytes) -> Optional[dict]:
    """
    The metadata object, if this first line of a signature file is one.
    Signatures always carry a version; metadata never does.
    """
    try:
        data = json.loads(line.decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError):
        return None
    if isinstance(data, dict) and 'version' not in data:
        return data
    return None


def read_signature_file(path: str) -> Tuple[Optional[dict], List[Signature]]:
    """
    Read a signature file. Returns the metadata (or None if there was no
    metadata line) and the signatures in file order.
    """
    metadata = None
    signatures = []
    with open(path, 'rb') as infile:
        for line_number, line in enumerate(infile, start=1):
            line = line.strip()
            if not line:
                continue
            if line_number == 1:
                metadata = _metadata_line(line)
                if metadata is not None:
                    if metadata.get('pair_set') is not None:
                        metadata['pair_set'] = LabelPairSet.from_dict(metadata['pair_set'])
                    continue
            try:
                signatures.append(deserialize_signature(line))
            except MatcherError as err:
                raise type(err)(f"{path}, line {line_number}: {err}") from err
    return metadata, signatures
