import hashlib
import json
from decimal import Decimal, ROUND_HALF_UP
from typing import Iterable

MASK_64 = (1 << 64) - 1


# SHA-256 of a file, used to pin KG and QA inputs in reports
def get_file_sha256(file_path) -> str:
    sha256_hash = hashlib.sha256()
    with open(file_path, 'rb') as f:
        while chunk := f.read(8192):
            sha256_hash.update(chunk)
    return sha256_hash.hexdigest()


def checksum_ids(ids: Iterable[int]) -> str:
    sha256_hash = hashlib.sha256()
    for i in sorted(ids):
        sha256_hash.update(f'{i}\n'.encode('ascii'))
    return sha256_hash.hexdigest()


def checksum_text(text: str) -> str:
    return hashlib.sha256(text.encode('utf-8')).hexdigest()


def checksum_json(obj) -> str:
    return checksum_text(json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(',', ':')))


def derive_seed(master_seed: int, key: str) -> int:
    """64-bit seed mixed from a master seed and a key (question id, rate tag).

    Stable across processes and platforms, unlike hash().
    """
    digest = hashlib.sha256(f'{master_seed & MASK_64}:{key}'.encode('utf-8')).digest()
    return int.from_bytes(digest[:8], 'big')


def round_half_up(value, ndigits: int = 0) -> float:
    # repr() keeps 0.125 as 0.125 instead of its binary expansion
    quantum = Decimal(1).scaleb(-ndigits)
    exact = value if isinstance(value, Decimal) else Decimal(repr(value))
    rounded = exact.quantize(quantum, rounding=ROUND_HALF_UP)
    return int(rounded) if ndigits == 0 else float(rounded)


def round2(value: float) -> float:
    return round_half_up(value, 2)
