"""XML-RPC wire codec shared by server and client.

Values map to native Python types: int (32-bit signed on the wire), bool,
float, str, datetime (second precision), bytes (base64 on the wire), list
and dict. Decoding is total over byte strings: every non-conforming input
raises :class:`DecodeError`, never anything else.

Byte counts and file sizes that may exceed 2**31-1 are carried as strings
of decimal digits, since the wire integer is 32-bit signed.
"""

from __future__ import annotations

import base64
import binascii
import math
import re
import threading
from dataclasses import dataclass, field
from datetime import datetime
from typing import Any, Union
from xml.etree import ElementTree as ET

MAX_DEPTH = 64
MAX_PARAMS = 64
DEFAULT_MAX_BODY_BYTES = 8 * 1024 * 1024

INT32_MIN = -(2**31)
INT32_MAX = 2**31 - 1

_METHOD_RE = re.compile(r"^[a-z_][a-z0-9_]*\.[a-z_][a-z0-9_]*$")
# XML 1.0 cannot carry most control characters or lone surrogates; such
# strings must travel as base64 binary instead.
_BAD_XML_CHARS = re.compile("[\x00-\x08\x0b\x0c\x0e-\x1f\ud800-\udfff]")

_DATETIME_RE = re.compile(r"^(\d{4})-?(\d{2})-?(\d{2})T(\d{2}):(\d{2}):(\d{2})Z?$")

RpcValue = Union[int, bool, float, str, datetime, bytes, list, dict]


class WireError(Exception):
    """Base class for codec failures."""


class EncodeError(WireError):
    """Value or envelope cannot be represented on the wire."""


class DecodeError(WireError):
    """Input is not a conforming XML-RPC document."""


class RpcFault(Exception):
    """An RPC-level fault: non-zero code plus non-empty message.

    Raised by method handlers and by the client when a response carries a
    ``<fault>`` envelope.
    """

    def __init__(self, code: int, message: str):
        super().__init__(f"fault {code}: {message}")
        self.code = code
        self.message = message

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, RpcFault)
            and self.code == other.code
            and self.message == other.message
        )

    def __hash__(self) -> int:
        return hash((self.code, self.message))


@dataclass
class RpcRequest:
    """A decoded method call: dotted ``module.method`` name plus params."""

    method: str
    params: list = field(default_factory=list)


class _WarningCounter:
    """Thread-safe counter for duplicate struct keys seen while decoding."""

    def __init__(self) -> None:
        self._n = 0
        self._lock = threading.Lock()

    def increment(self) -> None:
        with self._lock:
            self._n += 1

    @property
    def value(self) -> int:
        with self._lock:
            return self._n

    def reset(self) -> None:
        with self._lock:
            self._n = 0


duplicate_key_warnings = _WarningCounter()


def valid_method_name(name: str) -> bool:
    return bool(_METHOD_RE.match(name))


# ---------------------------------------------------------------------------
# Encoding
# ---------------------------------------------------------------------------


def _check_text(text: str) -> str:
    if _BAD_XML_CHARS.search(text):
        raise EncodeError("string contains characters not representable in XML")
    return text


def _encode_value(parent: ET.Element, value: Any, depth: int) -> None:
    if depth > MAX_DEPTH:
        raise EncodeError(f"value nesting exceeds {MAX_DEPTH}")
    el = ET.SubElement(parent, "value")
    # bool before int: bool is an int subclass
    if isinstance(value, bool):
        ET.SubElement(el, "boolean").text = "1" if value else "0"
    elif isinstance(value, int):
        if not INT32_MIN <= value <= INT32_MAX:
            raise EncodeError(f"integer {value} outside 32-bit signed range")
        ET.SubElement(el, "int").text = str(value)
    elif isinstance(value, float):
        if math.isnan(value) or math.isinf(value):
            raise EncodeError("non-finite double not representable")
        # repr() is the shortest form that round-trips bit-exactly
        ET.SubElement(el, "double").text = repr(value)
    elif isinstance(value, str):
        ET.SubElement(el, "string").text = _check_text(value)
    elif isinstance(value, (bytes, bytearray)):
        ET.SubElement(el, "base64").text = base64.b64encode(bytes(value)).decode("ascii")
    elif isinstance(value, datetime):
        ET.SubElement(el, "dateTime.iso8601").text = (
            f"{value.year:04d}{value.month:02d}{value.day:02d}"
            f"T{value.hour:02d}:{value.minute:02d}:{value.second:02d}"
        )
    elif isinstance(value, (list, tuple)):
        data = ET.SubElement(ET.SubElement(el, "array"), "data")
        for item in value:
            _encode_value(data, item, depth + 1)
    elif isinstance(value, dict):
        struct = ET.SubElement(el, "struct")
        for key, item in value.items():
            if not isinstance(key, str):
                raise EncodeError(f"struct key must be str, got {type(key).__name__}")
            member = ET.SubElement(struct, "member")
            ET.SubElement(member, "name").text = _check_text(key)
            _encode_value(member, item, depth + 1)
    else:
        raise EncodeError(f"cannot encode value of type {type(value).__name__}")


def _document(root: ET.Element) -> bytes:
    return b'<?xml version="1.0"?>' + ET.tostring(root, encoding="unicode").encode("utf-8")


def encode_request(req: RpcRequest) -> bytes:
    """Serialize a request into a ``<methodCall>`` document."""
    if not valid_method_name(req.method):
        raise EncodeError(f"invalid method name {req.method!r}")
    if len(req.params) > MAX_PARAMS:
        raise EncodeError(f"too many params ({len(req.params)} > {MAX_PARAMS})")
    root = ET.Element("methodCall")
    ET.SubElement(root, "methodName").text = req.method
    params = ET.SubElement(root, "params")
    for value in req.params:
        _encode_value(ET.SubElement(params, "param"), value, 1)
    return _document(root)


def encode_response(result: RpcValue) -> bytes:
    """Serialize a ``<methodResponse>`` with exactly one param.

    Dispatch wraps method results into a list before calling this; the
    codec itself carries any single value.
    """
    root = ET.Element("methodResponse")
    params = ET.SubElement(root, "params")
    _encode_value(ET.SubElement(params, "param"), result, 1)
    return _document(root)


def encode_fault(fault: RpcFault) -> bytes:
    """Serialize a fault using the standard ``<fault>`` envelope."""
    if fault.code == 0:
        raise EncodeError("fault code must be non-zero")
    if not fault.message:
        raise EncodeError("fault message must be non-empty")
    root = ET.Element("methodResponse")
    _encode_value(
        ET.SubElement(root, "fault"),
        {"faultCode": fault.code, "faultString": fault.message},
        1,
    )
    return _document(root)


# ---------------------------------------------------------------------------
# Decoding
# ---------------------------------------------------------------------------


def _decode_int(text: str) -> int:
    try:
        value = int(text.strip())
    except ValueError:
        raise DecodeError(f"bad integer {text!r}") from None
    if not INT32_MIN <= value <= INT32_MAX:
        raise DecodeError(f"integer {value} outside 32-bit signed range")
    return value


def _decode_datetime(text: str) -> datetime:
    m = _DATETIME_RE.match(text.strip())
    if not m:
        raise DecodeError(f"bad dateTime {text!r}")
    try:
        return datetime(*(int(g) for g in m.groups()))
    except ValueError:
        raise DecodeError(f"bad dateTime {text!r}") from None


def _decode_value(el: ET.Element, depth: int) -> RpcValue:
    if depth > MAX_DEPTH:
        raise DecodeError(f"value nesting exceeds {MAX_DEPTH}")
    children = list(el)
    if not children:
        # omitted type tag defaults to string
        return el.text or ""
    if len(children) != 1:
        raise DecodeError("<value> must contain at most one type element")
    if (el.text or "").strip():
        raise DecodeError("stray text alongside typed value")
    child = children[0]
    tag = child.tag
    text = child.text or ""
    if tag in ("int", "i4"):
        return _decode_int(text)
    if tag == "boolean":
        flag = text.strip()
        if flag == "1":
            return True
        if flag == "0":
            return False
        raise DecodeError(f"bad boolean {text!r}")
    if tag == "double":
        try:
            value = float(text.strip())
        except ValueError:
            raise DecodeError(f"bad double {text!r}") from None
        if math.isnan(value) or math.isinf(value):
            raise DecodeError("non-finite double")
        return value
    if tag == "string":
        return text
    if tag == "dateTime.iso8601":
        return _decode_datetime(text)
    if tag == "base64":
        compact = re.sub(r"\s+", "", text)
        try:
            return base64.b64decode(compact, validate=True)
        except binascii.Error:
            raise DecodeError("bad base64 payload") from None
    if tag == "array":
        datas = list(child)
        if len(datas) != 1 or datas[0].tag != "data":
            raise DecodeError("<array> must contain exactly one <data>")
        out = []
        for item in datas[0]:
            if item.tag != "value":
                raise DecodeError(f"unexpected <{item.tag}> in array data")
            out.append(_decode_value(item, depth + 1))
        return out
    if tag == "struct":
        out_map: dict[str, RpcValue] = {}
        for member in child:
            if member.tag != "member":
                raise DecodeError(f"unexpected <{member.tag}> in struct")
            name_el = member.find("name")
            value_el = member.find("value")
            if name_el is None or value_el is None:
                raise DecodeError("struct member missing name or value")
            key = name_el.text or ""
            if key in out_map:
                duplicate_key_warnings.increment()  # last key wins
            out_map[key] = _decode_value(value_el, depth + 1)
        return out_map
    raise DecodeError(f"unknown value tag <{tag}>")


def _parse_document(doc: bytes, max_bytes: int) -> ET.Element:
    if not isinstance(doc, (bytes, bytearray)):
        raise DecodeError("document must be bytes")
    if len(doc) > max_bytes:
        raise DecodeError(f"document exceeds {max_bytes} bytes")
    if b"<!DOCTYPE" in doc or b"<!ENTITY" in doc:
        raise DecodeError("DTD declarations are not accepted")
    try:
        return ET.fromstring(doc.decode("utf-8"))
    except (ET.ParseError, UnicodeDecodeError, ValueError) as exc:
        raise DecodeError(f"malformed XML: {exc}") from None


def _single_param_value(params_el: ET.Element) -> ET.Element:
    params = list(params_el)
    if len(params) != 1:
        raise DecodeError("response must carry exactly one param")
    return _param_value(params[0])


def _param_value(param_el: ET.Element) -> ET.Element:
    if param_el.tag != "param":
        raise DecodeError(f"unexpected <{param_el.tag}> in params")
    values = list(param_el)
    if len(values) != 1 or values[0].tag != "value":
        raise DecodeError("param must contain exactly one value")
    return values[0]


def decode_request(doc: bytes, max_bytes: int = DEFAULT_MAX_BODY_BYTES) -> RpcRequest:
    """Parse a ``<methodCall>`` document; inverse of :func:`encode_request`."""
    try:
        root = _parse_document(doc, max_bytes)
        if root.tag != "methodCall":
            raise DecodeError(f"expected <methodCall>, got <{root.tag}>")
        names = root.findall("methodName")
        if len(names) != 1:
            raise DecodeError("exactly one <methodName> required")
        method = (names[0].text or "").strip()
        if not valid_method_name(method):
            raise DecodeError(f"invalid method name {method!r}")
        params_els = root.findall("params")
        for child in root:
            if child.tag not in ("methodName", "params"):
                raise DecodeError(f"unexpected <{child.tag}> in methodCall")
        params: list[RpcValue] = []
        if len(params_els) > 1:
            raise DecodeError("more than one <params>")
        if params_els:
            entries = list(params_els[0])
            if len(entries) > MAX_PARAMS:
                raise DecodeError(f"too many params ({len(entries)} > {MAX_PARAMS})")
            for param in entries:
                params.append(_decode_value(_param_value(param), 1))
        return RpcRequest(method, params)
    except WireError:
        raise
    except Exception as exc:  # totality: no input may crash the decoder
        raise DecodeError(f"malformed request: {exc}") from None


def decode_response(doc: bytes, max_bytes: int = DEFAULT_MAX_BODY_BYTES) -> Union[RpcValue, RpcFault]:
    """Parse a ``<methodResponse>``; returns the value or an :class:`RpcFault`.

    Faults are returned, not raised, so callers can distinguish the two
    outcomes unambiguously.
    """
    try:
        root = _parse_document(doc, max_bytes)
        if root.tag != "methodResponse":
            raise DecodeError(f"expected <methodResponse>, got <{root.tag}>")
        children = list(root)
        tags = [c.tag for c in children]
        if tags == ["params"]:
            return _decode_value(_single_param_value(children[0]), 1)
        if tags == ["fault"]:
            values = list(children[0])
            if len(values) != 1 or values[0].tag != "value":
                raise DecodeError("fault must contain exactly one value")
            payload = _decode_value(values[0], 1)
            if not isinstance(payload, dict):
                raise DecodeError("fault payload must be a struct")
            code = payload.get("faultCode")
            message = payload.get("faultString")
            if not isinstance(code, int) or isinstance(code, bool) or code == 0:
                raise DecodeError("fault code must be a non-zero integer")
            if not isinstance(message, str) or not message:
                raise DecodeError("fault string must be a non-empty string")
            return RpcFault(code, message)
        raise DecodeError("response must contain exactly one of <params> or <fault>")
    except WireError:
        raise
    except Exception as exc:
        raise DecodeError(f"malformed response: {exc}") from None
