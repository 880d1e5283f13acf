"""Plain-text CSV format for stacks of complex matrices.

Layout::

    nr,nt,nsub
    <rows>,<cols>,<count>
    re,im,re,im,...      # one line per matrix row, matrices back to back

Entries are interleaved real/imaginary parts in row-major order, written
with ``repr`` precision so a write/read cycle is lossless.
"""

import numpy as np

HEADER = "nr,nt,nsub"


def format_matrices(stack):
    stack = np.asarray(stack, dtype=complex)
    if stack.ndim == 2:
        stack = stack[None]
    nsub, nr, nt = stack.shape
    lines = [HEADER, f"{nr},{nt},{nsub}"]
    for mat in stack:
        for row in mat:
            parts = np.empty(2 * nt)
            parts[0::2] = row.real
            parts[1::2] = row.imag
            lines.append(",".join(repr(float(x)) for x in parts))
    return "\n".join(lines) + "\n"


def parse_matrices(text):
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != HEADER:
        raise ValueError(f"missing '{HEADER}' header line")
    try:
        nr, nt, nsub = (int(x) for x in lines[1].split(","))
    except (IndexError, ValueError) as exc:
        raise ValueError("second line must hold three integers nr,nt,nsub") from exc
    body = lines[2:]
    if len(body) != nr * nsub:
        raise ValueError(f"expected {nr * nsub} data rows, found {len(body)}")
    vals = np.array([[float(x) for x in ln.split(",")] for ln in body])
    if vals.shape[1] != 2 * nt:
        raise ValueError(f"expected {2 * nt} values per row, found {vals.shape[1]}")
    return (vals[:, 0::2] + 1j * vals[:, 1::2]).reshape(nsub, nr, nt)


def write_matrices(path, stack):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_matrices(stack))


def read_matrices(path):
    with open(path, encoding="utf-8") as fh:
        return parse_matrices(fh.read())
