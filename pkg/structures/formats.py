"""FASTA, dot-bracket and fixed-position file formats."""

import re
from typing import Dict, List, Optional, Sequence, Tuple

from config import ALPHABET
from core.errors import InputValidationError

OPEN_BRACKETS = "([{<"
CLOSE_BRACKETS = ")]}>"
FREE_SYMBOLS = frozenset("-._N")


def read_fasta(text: str) -> List[Tuple[str, str]]:
    """Parse FASTA text into (header, sequence) records; sequences are upper-cased."""
    records: List[Tuple[str, str]] = []
    header: Optional[str] = None
    chunks: List[str] = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith(">"):
            if header is not None:
                records.append((header, "".join(chunks).upper()))
            header, chunks = line[1:].strip(), []
        else:
            if header is None:
                raise InputValidationError("FASTA sequence line before any '>' header")
            chunks.append(line)
    if header is not None:
        records.append((header, "".join(chunks).upper()))
    return records


def write_fasta(records: Sequence[Tuple[str, str]]) -> str:
    return "".join(f">{header}\n{sequence}\n" for header, sequence in records)


def parse_dot_bracket(structure: str) -> List[Tuple[int, int]]:
    """Pairs (i, j), i < j, from a dot-bracket string (pseudoknot brackets allowed).

    Raises:
        InputValidationError: On unbalanced brackets or unknown symbols
    """
    stacks: Dict[str, List[int]] = {c: [] for c in OPEN_BRACKETS}
    pairs = []
    for pos, char in enumerate(structure):
        if char in OPEN_BRACKETS:
            stacks[char].append(pos)
        elif char in CLOSE_BRACKETS:
            opener = OPEN_BRACKETS[CLOSE_BRACKETS.index(char)]
            if not stacks[opener]:
                raise InputValidationError(f"Unbalanced '{char}' at position {pos}")
            pairs.append((stacks[opener].pop(), pos))
        elif char not in ".-,:_":
            raise InputValidationError(f"Unknown dot-bracket symbol '{char}' at position {pos}")
    leftover = [c for c, stack in stacks.items() if stack]
    if leftover:
        raise InputValidationError(f"Unclosed brackets: {leftover}")
    return sorted(pairs)


def to_dot_bracket(n: int, pairs: Sequence[Tuple[int, int]]) -> str:
    """Render pairs as dot-bracket; crossing pairs use the next bracket type."""
    chars = ["."] * n
    levels: List[List[Tuple[int, int]]] = []
    for i, j in sorted(pairs):
        for level_idx, level in enumerate(levels):
            if all(not (a < i < b < j or i < a < j < b) for a, b in level):
                level.append((i, j))
                break
        else:
            level_idx = len(levels)
            levels.append([(i, j)])
        if level_idx >= len(OPEN_BRACKETS):
            raise InputValidationError("Too many crossing pair levels for dot-bracket")
        chars[i] = OPEN_BRACKETS[level_idx]
        chars[j] = CLOSE_BRACKETS[level_idx]
    return "".join(chars)


def read_dot_bracket_file(text: str) -> Tuple[Optional[str], str]:
    """Read a dot-bracket file: optional '>' header, optional sequence line, structure line.

    Returns:
        (sequence or None, structure string)
    """
    lines = [l.strip() for l in text.splitlines() if l.strip() and not l.startswith(">")]
    if not lines:
        raise InputValidationError("Empty dot-bracket file")
    structure = lines[-1].split()[0]
    sequence = lines[-2].upper() if len(lines) >= 2 else None
    if sequence is not None and len(sequence) != len(structure):
        raise InputValidationError(
            f"Dot-bracket sequence length {len(sequence)} != structure length {len(structure)}"
        )
    return sequence, structure


def parse_fixed_positions(text: str, native: Optional[str], n: int) -> Dict[int, str]:
    """Positions pinned during design, as {0-based index: base}.

    Two forms are accepted:
      - a template of length n over ACGU with '-', '.', '_' or 'N' at free positions;
      - 1-based positions and ranges ("1-10, 15"), pinned to the native base.

    Raises:
        InputValidationError: On out-of-range positions, a template of the wrong
            length, or ranges given without a native sequence
    """
    content = "".join(l.strip() for l in text.splitlines() if l.strip() and not l.startswith(">"))
    if content and set(content.upper()) <= set(ALPHABET) | FREE_SYMBOLS and not re.search(r"\d", content):
        content = content.upper()
        if len(content) != n:
            raise InputValidationError(f"Fixed-position template has length {len(content)}, backbone has {n}")
        return {i: c for i, c in enumerate(content) if c in ALPHABET}

    if native is None:
        raise InputValidationError("Position ranges need a native sequence to pin bases to")
    fixed: Dict[int, str] = {}
    for token in re.split(r"[,\s]+", content):
        if not token:
            continue
        match = re.fullmatch(r"(\d+)(?:-(\d+))?", token)
        if match is None:
            raise InputValidationError(f"Bad fixed-position token '{token}'")
        start = int(match.group(1))
        end = int(match.group(2) or start)
        if not 1 <= start <= end <= n:
            raise InputValidationError(f"Fixed positions {token} outside 1..{n}")
        for pos in range(start - 1, end):
            if native[pos] not in ALPHABET:
                raise InputValidationError(f"Native base at position {pos + 1} is unknown")
            fixed[pos] = native[pos]
    return fixed
