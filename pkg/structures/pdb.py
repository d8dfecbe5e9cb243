"""PDB fixed-column IO for coarse-grained RNA backbones.

Only the three beads the featurizer needs are read: P, C4' and the
glycosidic nitrogen (N9 for purines, N1 for pyrimidines).
"""

import logging
from collections import OrderedDict
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np

from core.errors import InputValidationError, PdbParseError
from structures.types import BEAD_NAMES, C4_BEAD, N_BEAD, P_BEAD, UNKNOWN_BASE, Ensemble, RnaStructure

logger = logging.getLogger(__name__)

RESIDUE_ALIASES = {
    "A": "A", "C": "C", "G": "G", "U": "U", "N": UNKNOWN_BASE,
    "RA": "A", "RC": "C", "RG": "G", "RU": "U",
    "ADE": "A", "CYT": "C", "GUA": "G", "URA": "U",
}
PURINES = frozenset("AG")
PYRIMIDINES = frozenset("CU")

# Residue names that are never RNA and are skipped without complaint
IGNORED_RESIDUES = frozenset({"HOH", "WAT", "DOD", "MG", "K", "NA", "CL", "ZN", "MN", "CA"})


def _nitrogen_names(base: str) -> Tuple[str, ...]:
    if base in PURINES:
        return ("N9",)
    if base in PYRIMIDINES:
        return ("N1",)
    return ("N9", "N1")


def _bead_index(atom_name: str, base: str) -> int:
    name = atom_name.replace("*", "'")
    if name == "P":
        return P_BEAD
    if name == "C4'":
        return C4_BEAD
    if name in _nitrogen_names(base):
        return N_BEAD
    return -1


def parse_pdb(text: str, name: str = "input") -> List[RnaStructure]:
    """Parse ATOM/HETATM records into one RnaStructure per chain.

    Only the first model is read. Residues missing any bead are kept in the
    sequence but masked out.

    Args:
        text: PDB file contents
        name: Prefix for structure ids (file stem)

    Returns:
        Structures in chain order of first appearance

    Raises:
        PdbParseError: On malformed coordinates, unknown residues in ATOM
            records, or when no RNA residue is found
    """
    chains: "OrderedDict[str, OrderedDict[Tuple[int, str], Dict]]" = OrderedDict()

    for line_no, line in enumerate(text.splitlines(), start=1):
        record = line[:6].strip()
        if record == "ENDMDL":
            break
        if record not in ("ATOM", "HETATM"):
            continue
        res_name = line[17:20].strip()
        if res_name in IGNORED_RESIDUES:
            continue
        base = RESIDUE_ALIASES.get(res_name)
        if base is None:
            if record == "HETATM":
                continue
            raise PdbParseError(f"{name}:{line_no}: unknown residue name '{res_name}'")

        alt_loc = line[16:17]
        if alt_loc not in (" ", "", "A"):
            continue
        atom_name = line[12:16].strip()
        chain_id = line[21:22].strip() or "A"
        try:
            res_seq = int(line[22:26])
            xyz = np.array([float(line[30:38]), float(line[38:46]), float(line[46:54])])
        except ValueError as e:
            raise PdbParseError(f"{name}:{line_no}: malformed record: {e}") from e
        key = (res_seq, line[26:27].strip())

        residues = chains.setdefault(chain_id, OrderedDict())
        residue = residues.setdefault(key, {"base": base, "beads": np.full((3, 3), np.nan)})
        idx = _bead_index(atom_name, base)
        if idx >= 0 and np.isnan(residue["beads"][idx, 0]):
            residue["beads"][idx] = xyz

    structures = []
    for chain_id, residues in chains.items():
        if not residues:
            continue
        sequence = "".join(r["base"] for r in residues.values())
        beads = np.stack([r["beads"] for r in residues.values()])
        mask = np.all(np.isfinite(beads), axis=(1, 2))
        structures.append(RnaStructure(
            id=f"{name}_{chain_id}",
            sequence=sequence,
            beads=beads,
            mask=mask,
            chain_id=chain_id,
            residue_numbers=[key[0] for key in residues.keys()],
        ))
        if not mask.all():
            logger.debug(f"{name}_{chain_id}: {int((~mask).sum())} residues masked for missing beads")

    if not structures:
        raise PdbParseError(f"{name}: no RNA residues found")
    return structures


def _atom_field(atom: str) -> str:
    return f" {atom:<3s}" if len(atom) < 4 else atom


def write_pdb(structure: RnaStructure) -> str:
    """Emit the structure's beads as fixed-column ATOM records.

    Missing beads are omitted, so parse_pdb(write_pdb(s)) reproduces the mask.
    """
    lines = []
    serial = 1
    for i, base in enumerate(structure.sequence):
        res_name = base
        nitrogen = _nitrogen_names(base)[-1] if base != UNKNOWN_BASE else "N1"
        atom_names = (BEAD_NAMES[P_BEAD], BEAD_NAMES[C4_BEAD], nitrogen)
        for bead, atom in enumerate(atom_names):
            x, y, z = structure.beads[i, bead]
            if not np.isfinite([x, y, z]).all():
                continue
            lines.append(
                f"ATOM  {serial:>5d} {_atom_field(atom)} {res_name:>3s} {structure.chain_id:1s}"
                f"{structure.residue_numbers[i]:>4d}    {x:8.3f}{y:8.3f}{z:8.3f}"
                f"{1.0:6.2f}{0.0:6.2f}          {atom[0]:>2s}"
            )
            serial += 1
    lines.append("TER")
    lines.append("END")
    return "\n".join(lines) + "\n"


def load_corpus(directory: Path) -> List[Ensemble]:
    """Parse every *.pdb file in a directory and group chains by sequence.

    Args:
        directory: Folder of PDB files (searched non-recursively)

    Returns:
        Ensembles sorted by id; states inside an ensemble sorted by structure id

    Raises:
        InputValidationError: If the directory does not exist or holds no PDB files
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise InputValidationError(f"Corpus directory not found: {directory}")
    files = sorted(directory.glob("*.pdb"))
    if not files:
        raise InputValidationError(f"No *.pdb files in {directory}")

    structures: List[RnaStructure] = []
    for path in files:
        try:
            structures.extend(parse_pdb(path.read_text(encoding="utf-8"), name=path.stem))
        except PdbParseError as e:
            logger.warning(f"Skipping {path.name}: {e}")

    ensembles = group_ensembles(structures)
    logger.info(f"Loaded {len(structures)} chains as {len(ensembles)} ensembles from {directory}")
    return ensembles


def group_ensembles(structures: Sequence[RnaStructure]) -> List[Ensemble]:
    """Group chains with identical sequence; ensembles sorted by id, states by structure id."""
    by_sequence: Dict[str, List[RnaStructure]] = {}
    for structure in structures:
        by_sequence.setdefault(structure.sequence, []).append(structure)
    ensembles = [
        Ensemble(sequence=seq, states=sorted(states, key=lambda s: s.id))
        for seq, states in by_sequence.items()
    ]
    return sorted(ensembles, key=lambda e: e.id)
