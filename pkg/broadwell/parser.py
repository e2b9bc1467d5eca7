"""
This module parses the run configuration text format.

The format is a small TOML-like subset::

    # comment
    mode = "rescaled"
    rescaled.L = 3.0          # dotted keys
    [output]                  # section header, prefixes later keys
    every_t = 0.1
    [[packet]]                # starts a new packet table
    species = 1
    center = [-0.8, -0.8]

Values are JSON literals (numbers, ``"strings"``, ``true``/``false``,
``[lists]``), Python literals as a fallback, or bare words such as
``q14_thm1,mass`` which are read as strings.
"""
import ast
import json
import logging
import re
from typing import Any, Dict, List, Tuple

from broadwell.exceptions import ConfigError

logger = logging.getLogger(__name__)

_KEY = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*(\.[A-Za-z_][A-Za-z0-9_]*)*$")
_BARE = re.compile(r"^[A-Za-z_][A-Za-z0-9_\-.,/]*$")
_SECTION = re.compile(r"^\[\s*([^\[\]]+?)\s*\]$")
_ARRAY_TABLE = re.compile(r"^\[\[\s*([^\[\]]+?)\s*\]\]$")

PACKET_TABLE = "packet"


def strip_comment(line: str) -> str:
    """Remove a ``#`` comment that is not inside a double-quoted string."""
    in_string = False
    escaped = False
    for i, ch in enumerate(line):
        if escaped:
            escaped = False
        elif ch == "\\" and in_string:
            escaped = True
        elif ch == '"':
            in_string = not in_string
        elif ch == "#" and not in_string:
            return line[:i]
    return line


def parse_value(text: str, key_path: str) -> Any:
    """Parse one value literal.

    :param str text:
        Right hand side of ``key = value``.
    :param str key_path:
        Key the value belongs to, for error messages.
    :raises ConfigError:
        The text is not a supported literal.
    """
    text = text.strip()
    if not text:
        raise ConfigError(key_path, "missing value")
    try:
        return json.loads(text)
    except json.decoder.JSONDecodeError:
        try:
            return ast.literal_eval(text)
        except (ValueError, SyntaxError):
            if _BARE.match(text) and text not in ("true", "false"):
                return text
            raise ConfigError(key_path, f"could not parse value {text!r}")


def parse_config_text(
    text: str, path: str = "<string>"
) -> Tuple[Dict[str, Any], List[Dict[str, Any]]]:
    """Split configuration text into flat keys and packet tables.

    :param str text:
        File contents.
    :param str path:
        File name, for error messages.
    :returns:
        ``(values, packets)``: dotted key to value, and one dict per
        ``[[packet]]`` table in file order.
    :raises ConfigError:
        Malformed lines, unknown tables and duplicate keys.
    """
    values: Dict[str, Any] = {}
    packets: List[Dict[str, Any]] = []
    prefix = ""
    table = values
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = strip_comment(raw).strip()
        if not line:
            continue
        where = f"{path}:{line_no}"

        array_table = _ARRAY_TABLE.match(line)
        if array_table:
            name = array_table.group(1)
            if name != PACKET_TABLE:
                raise ConfigError(name, f"unknown table array ({where})")
            packets.append({})
            table = packets[-1]
            prefix = ""
            continue
        section = _SECTION.match(line)
        if section:
            name = section.group(1)
            if not _KEY.match(name):
                raise ConfigError(name, f"invalid section name ({where})")
            table = values
            prefix = name + "."
            continue

        key, sep, rhs = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(None, f"expected 'key = value' ({where})")
        if not _KEY.match(key):
            raise ConfigError(key, f"invalid key ({where})")
        if table is values:
            key_path = slot = prefix + key
        else:
            key_path, slot = f"packet[{len(packets)}].{key}", key
        if slot in table:
            raise ConfigError(key_path, f"duplicate key ({where})")
        table[slot] = parse_value(rhs, key_path)
    logger.debug("parsed %d keys and %d packet tables from %s", len(values), len(packets), path)
    return values, packets
