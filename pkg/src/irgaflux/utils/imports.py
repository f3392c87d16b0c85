import importlib
import pkgutil
from types import ModuleType
from typing import Set, Union

_loaded_autoloads: Set[str] = set()


def autoload_package(package: Union[str, ModuleType]) -> None:
    """Import every public submodule of a package once, so that modules which
    register themselves on import (estimator providers) become available.

    Args:
        package:
            Dotted name of the package or the package module itself.
    """
    if isinstance(package, str):
        package = importlib.import_module(package)
    if package.__name__ in _loaded_autoloads:
        return
    for module_info in pkgutil.iter_modules(package.__path__):
        if not module_info.name.startswith("_"):
            importlib.import_module(f"{package.__name__}.{module_info.name}")
    _loaded_autoloads.add(package.__name__)
