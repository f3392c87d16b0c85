import logging

import numpy as np


class NewLineFormatter(logging.Formatter):
    """Repeats the record prefix on every line of a multi-line message.

    Rendered reports and vector dumps span several lines; each continuation
    line gets the same `IRGAFLUX_LEVEL time [file:line]` prefix as the first.
    """

    def __init__(self, fmt, datefmt=None, style="%"):
        super().__init__(fmt, datefmt, style)

    def format(self, record):
        msg = super().format(record)
        if record.message != "" and "\n" in record.message:
            prefix = msg.split(record.message)[0]
            msg = msg.replace("\n", "\n" + prefix)
        return msg


def fmt_vector(values, precision: int = 4, max_items: int = 12) -> str:
    """Compact one-line rendering of a vector for log messages."""
    arr = np.asarray(values, dtype=float).ravel()
    return np.array2string(
        arr,
        precision=precision,
        separator=", ",
        threshold=max_items,
        edgeitems=max_items // 2,
        max_line_width=10_000,
    )
