import os

import pytest

from wnoskit.config import Settings
from wnoskit.dump import FORMAT_VERSION, StateCodec, read_states, write_atomic, write_states
from wnoskit.errors import FormatError

RECORDS = [
    {"slot": 0, "node": 1, "knobs": {"fec_rate": 0.25, "modulation": "gmsk"}, "lambda": {}},
    {"slot": 30, "node": 2, "knobs": {"fec_rate": 0.25, "modulation": "gmsk"}, "lambda": {"lbd_01": 0.5}},
]


class TestCodec:
    def test_invalid_parameters(self):
        with pytest.raises(ValueError):
            StateCodec("xml")
        with pytest.raises(ValueError):
            StateCodec(byteorder="middle")
        with pytest.raises(ValueError):
            StateCodec(header_size=0)

    def test_from_settings(self):
        codec = StateCodec.from_settings(Settings(state_encoding="ziproto", byteorder="little", header_size=2))
        assert (codec.encoding, codec.byteorder, codec.header_size) == ("ziproto", "little", 2)
        assert codec.extension == ".state.zp"

    def test_frame_header(self):
        codec = StateCodec("ziproto")
        frame = codec.encode(RECORDS[0])
        assert int.from_bytes(frame[:4], "big") == len(frame) - 4
        assert frame[4] == FORMAT_VERSION

    def test_truncated_frame(self):
        codec = StateCodec("ziproto")
        frame = codec.encode(RECORDS[1])
        with pytest.raises(FormatError):
            codec.decode(frame[:-3])
        with pytest.raises(FormatError):
            codec.decode(frame[:5])

    def test_foreign_version(self):
        codec = StateCodec("ziproto")
        frame = bytearray(codec.encode(RECORDS[0]))
        frame[4] = FORMAT_VERSION + 1
        with pytest.raises(FormatError):
            codec.decode(bytes(frame))


class TestFiles:
    @pytest.mark.parametrize("encoding", ["json", "ziproto"])
    def test_write_then_read(self, tmp_path, encoding):
        path = write_states(RECORDS, str(tmp_path), "WNOS-T-P", StateCodec(encoding))
        assert os.path.basename(path) == "WNOS-T-P" + StateCodec(encoding).extension
        assert read_states(path) == RECORDS

    def test_atomic_write_leaves_no_temporary(self, tmp_path):
        path = str(tmp_path / "NoControl.csv")
        write_atomic(path, b"slot\n")
        write_atomic(path, b"slot\n0\n")
        assert os.listdir(str(tmp_path)) == ["NoControl.csv"]
        with open(path, "rb") as written:
            assert written.read() == b"slot\n0\n"
