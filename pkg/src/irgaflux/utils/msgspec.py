import os
from typing import Any, Optional, Type, TypeVar, Union

import msgspec
import numpy as np

T = TypeVar("T")


def enc_hook(obj: Any) -> Any:
    """Encode numpy values as plain JSON numbers and lists."""
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise NotImplementedError(f"Objects of type `{type(obj)}` are not supported")


_encoder = msgspec.json.Encoder(enc_hook=enc_hook, order="deterministic")


def msgspec_dumps(obj: Any) -> bytes:
    """Deterministic JSON encoding (sorted dict keys, shortest round-trip floats)."""
    return _encoder.encode(obj)


def save(obj: object, f: Union[str, os.PathLike]):
    """Save an output document or any encodable object as JSON.

    Args:
        obj:
            Saved object.
        f:
            A string or os.PathLike object containing a file name.

    Raises:
        ValueError:
            If the file format is not "json".
        FileNotFoundError:
            If the directory of the provided filepath does not exist.

    !!! example
        ``` python
        save(document, "run.json")
        ```
    """
    f = os.fspath(f)
    directory = os.path.dirname(f)
    if directory and not os.path.exists(directory):
        raise FileNotFoundError(f"The directory `{directory}` does not exist")

    if not f.endswith(".json"):
        raise ValueError(f"Unsupported format: `{f}`. Use `json`.")
    with open(f, "wb") as fp:
        fp.write(msgspec_dumps(obj))
        fp.write(b"\n")


def load(f: Union[str, os.PathLike], type: Optional[Type[T]] = None) -> Any:  # noqa: A002
    """Load a JSON document, optionally decoding it into `type`.

    Args:
        f: A string or os.PathLike object containing a file name.
        type: Target type (e.g. `OutputDocument`); plain Python objects if None.

    Raises:
        FileNotFoundError:
            If the file does not exist.
        ValueError:
            If the file extension is not ".json".
    """
    f = os.fspath(f)
    if not os.path.exists(f):
        raise FileNotFoundError(f"The file `{f}` does not exist.")
    if not f.endswith(".json"):
        raise ValueError(f"Unsupported file extension: `{f}`. Use `.json`")
    with open(f, "rb") as fp:
        content = fp.read()
    if type is None:
        return msgspec.json.decode(content)
    return msgspec.json.decode(content, type=type)


def struct_to_dict(obj: object):
    """Recursively converts a msgspec.Struct object to plain Python containers."""
    if isinstance(obj, msgspec.Struct):
        return {k: struct_to_dict(v) for k, v in msgspec.structs.asdict(obj).items()}
    elif isinstance(obj, (list, tuple)):
        return [struct_to_dict(item) for item in obj]
    elif isinstance(obj, dict):
        return {k: struct_to_dict(v) for k, v in obj.items()}
    elif isinstance(obj, (np.ndarray, np.generic)):
        return enc_hook(obj)
    return obj
