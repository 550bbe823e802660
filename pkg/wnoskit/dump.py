# wnoskit - Turn centralized network control programs into distributed solvers
# Copyright (C) 2019-2020 wnoskit contributors
#
# This file is part of wnoskit.
#
# wnoskit is free software: you can redistribute it and/or modify
# it under the terms of the GNU Lesser General Public License as published
# by the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# wnoskit is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU Lesser General Public License for more details.
#
# You should have received a copy of the GNU Lesser General Public License
# along with wnoskit.  If not, see <http://www.gnu.org/licenses/>.

import json
import os
from typing import Any, Dict, Iterable, Iterator, List, Optional

import ziproto

from .config import Settings
from .errors import FormatError

FORMAT_VERSION = 1
ENCODINGS = {"json": 0, "ziproto": 1}
EXTENSIONS = {"json": ".state.jsonl", "ziproto": ".state.zp"}


class StateCodec:
    """
    Encodes per-node state records, either as JSON lines or as length-prefixed
    ziproto frames

    A frame is a ``Content-Length`` header of ``header_size`` bytes (counting
    the two bytes after it), the format version, the encoding and the body

    :param encoding: ``"json"`` or ``"ziproto"``
    :type encoding: str
    :param byteorder: The byteorder of the length header, ``"big"`` or ``"little"``
    :type byteorder: str
    :param header_size: The size in bytes of the length header
    :type header_size: int
    """

    def __init__(self, encoding: str = "json", byteorder: str = "big", header_size: int = 4):
        if encoding not in ENCODINGS:
            raise ValueError("encoding must either be 'json' or 'ziproto'!")
        if byteorder not in ("big", "little"):
            raise ValueError("byteorder must either be 'big' or 'little'!")
        if not isinstance(header_size, int) or header_size < 1:
            raise ValueError("header_size must be a positive integer!")
        self.encoding = encoding
        self.byteorder = byteorder
        self.header_size = header_size

    @classmethod
    def from_settings(cls, settings: Settings) -> "StateCodec":
        return cls(settings.state_encoding, settings.byteorder, settings.header_size)

    @property
    def extension(self) -> str:
        return EXTENSIONS[self.encoding]

    def encode(self, record: Dict[str, Any]) -> bytes:
        if self.encoding == "json":
            return (json.dumps(record, sort_keys=True) + "\n").encode()
        payload = ziproto.encode(record)
        content_length = (len(payload) + 2).to_bytes(self.header_size, self.byteorder)
        headers = content_length + FORMAT_VERSION.to_bytes(1, "big") + (1).to_bytes(1, "big")
        return headers + payload

    def decode(self, data: bytes) -> List[Dict[str, Any]]:
        """Decodes a whole dump

        :raises FormatError: If a frame is truncated or was written by another format version
        """

        if self.encoding == "json":
            return [json.loads(line) for line in data.decode().splitlines() if line.strip()]
        return list(self._frames(data))

    def _frames(self, data: bytes) -> Iterator[Dict[str, Any]]:
        offset = 0
        while offset < len(data):
            if len(data) - offset < self.header_size + 2:
                raise FormatError("truncated frame header")
            content_length = int.from_bytes(data[offset:offset + self.header_size], self.byteorder)
            version = data[offset + self.header_size]
            if version != FORMAT_VERSION:
                raise FormatError(f"unsupported state format version {version}")
            end = offset + self.header_size + content_length
            if end > len(data) or content_length < 2:
                raise FormatError("truncated frame body")
            yield ziproto.decode(data[offset + self.header_size + 2:end])
            offset = end


def write_atomic(path: str, data: bytes):
    """Writes ``data`` to a temporary file moved over ``path`` once complete"""

    temporary = f"{path}.tmp"
    with open(temporary, "wb") as output:
        output.write(data)
    os.replace(temporary, path)


def write_states(
    records: Iterable[Dict[str, Any]], directory: str, scheme: str, codec: Optional[StateCodec] = None
) -> str:
    """Writes the state dump of one scheme and returns its path"""

    codec = codec or StateCodec()
    path = os.path.join(directory, f"{scheme}{codec.extension}")
    write_atomic(path, b"".join(codec.encode(record) for record in records))
    return path


def read_states(path: str, codec: Optional[StateCodec] = None) -> List[Dict[str, Any]]:
    if codec is None:
        codec = StateCodec("ziproto" if path.endswith(EXTENSIONS["ziproto"]) else "json")
    with open(path, "rb") as dump:
        return codec.decode(dump.read())
