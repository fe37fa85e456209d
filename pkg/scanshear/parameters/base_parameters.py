#
# Copyright 2024 ScanShear Developers.
#
# See LICENSE for full license details
#

from __future__ import annotations

import json
import logging
import os
import sys
import types
from copy import deepcopy
from dataclasses import asdict, dataclass, fields, is_dataclass
from enum import Enum
from pathlib import Path
from pprint import pformat
from typing import Any, Union, get_args, get_origin, get_type_hints

from scanshear.configs import CONFIGS_BASE_DIR

log = logging.getLogger(__name__)

ENV_PREFIX = "SCANSHEAR_"

_TRUE_STRINGS = {"1", "true", "yes", "on"}
_FALSE_STRINGS = {"0", "false", "no", "off", ""}


@dataclass(repr=False)
class BaseParameters:
    """Base class for ScanShear parameters.

    Parameters form a tree: a field whose type is another ``BaseParameters``
    subclass accepts a dict (or ``None`` for defaults) and is converted on
    assignment. Enum fields accept either the member name or its value.

    Attributes:
        parent (BaseParameters): Parent of this parameter in the parameter tree
        root (BaseParameters): Root of the parameter tree
    """

    def __new__(cls, *args, **kwargs) -> BaseParameters:
        """Create a new parameter object with its parent link already in place.

        Returns:
            BaseParameters: New, uninitialized parameter object
        """
        param = super().__new__(cls)
        # Parent must exist before __init__ so nested fields can attach to it
        param._parent = param
        return param

    def __post_init__(self):
        """Validate the parameters after dataclass initialization."""
        self.validate()

    @property
    def parent(self) -> BaseParameters:
        """Parameter object that holds this one, or itself at the root."""
        return self._parent

    @property
    def root(self) -> BaseParameters:
        """Parameter object at the base of the tree."""
        if self.parent is self:
            return self
        return self.parent.root

    @property
    def path(self) -> str:
        """Dotted location of this parameter object inside the tree."""
        if self.parent is self:
            return type(self).__name__
        for f in fields(self.parent):
            if getattr(self.parent, f.name) is self:
                return f"{self.parent.path}.{f.name}"
        return type(self).__name__

    def validate(self) -> None:
        """Validate the parameters.

        The base implementation only logs fields whose values do not match their
        annotations. Subclasses raise ``ValueError`` for unusable values.
        """
        for f in fields(self):
            expected = _resolve_type(f.type, self.__module__)
            value = getattr(self, f.name)
            if value is not None and not isinstance(value, expected):
                log.debug(
                    "%s.%s should be %s, got %s",
                    self.path,
                    f.name,
                    f.type,
                    type(value).__name__,
                )

    def copy(self) -> BaseParameters:
        """Return a deep copy of the parameter tree below this object."""
        return deepcopy(self)

    def update(self, update: dict[str, Any]) -> None:
        """Update parameters from a dictionary.

        Args:
            update (dict[str, Any]): Values keyed by field name. Nested fields
                are addressed with dot notation (ex: ``budget.max_depth``).

        Raises:
            KeyError: Raised if a key does not name a field
        """
        for key, value in update.items():
            if "." in key:
                base_key, _, sub_key = key.partition(".")
                child = getattr(self, base_key, None)
                if not isinstance(child, BaseParameters):
                    raise KeyError(
                        f"{type(self).__qualname__} has no parameter group '{base_key}'",
                    )
                child.update({sub_key: value})
                continue
            if key not in self.__dataclass_fields__:
                raise KeyError(
                    f"{type(self).__qualname__} does not contain key '{key}'",
                )
            setattr(self, key, value)
        self.validate()

    def update_from_strings(self, update: dict[str, str]) -> None:
        """Update parameters from string values, coercing them to field types.

        Used for environment variables and other text sources.

        Args:
            update (dict[str, str]): String values keyed by dotted field name
        """
        self.update({key: self._coerce(key, value) for key, value in update.items()})

    def update_from_env(self, environ: dict[str, str] | None = None) -> list[str]:
        """Apply ``SCANSHEAR_<GROUP>__<FIELD>`` environment overrides.

        Args:
            environ (dict[str, str], optional): Environment to read. Defaults to
                ``os.environ``.

        Returns:
            list[str]: Dotted keys that were overridden
        """
        environ = os.environ if environ is None else environ
        overrides = {}
        for name, value in environ.items():
            if not name.startswith(ENV_PREFIX):
                continue
            key = name[len(ENV_PREFIX) :].lower().replace("__", ".")
            overrides[key] = value
        if overrides:
            log.info("Environment overrides: %s", sorted(overrides))
            self.update_from_strings(overrides)
        return sorted(overrides)

    def as_dict(self) -> dict[str, Any]:
        """Return the parameter tree as plain data, with enums stored by name.

        Returns:
            dict[str, Any]: Dictionary representation of the parameters
        """
        return asdict(self, dict_factory=_enum_safe_dict)

    def to_json(self, filepath: Union[str, os.PathLike], **kwargs) -> None:
        """Write the parameters to a JSON file.

        Args:
            filepath (Union[str, os.PathLike]): Path of file to write to
            **kwargs: Keyword arguments for open()
        """
        with open(filepath, "w", **kwargs) as outfile:
            json.dump(self.as_dict(), outfile, indent=4)

    @classmethod
    def from_json(cls, filepath: Union[str, os.PathLike], **kwargs) -> BaseParameters:
        """Load parameters from a JSON file or a shipped preset name.

        Args:
            filepath (Union[str, os.PathLike]): Path of a JSON file, or the name
                of a config in ``scanshear/configs`` (ex: ``"fast"``)
            **kwargs: Keyword arguments for open()

        Raises:
            FileNotFoundError: Raised if neither location exists

        Returns:
            BaseParameters: Parameters specified in the file
        """
        given = Path(filepath)
        preset = (CONFIGS_BASE_DIR / given).with_suffix(".json")
        if given.is_file():
            source = given
        elif preset.is_file():
            source = preset
        else:
            raise FileNotFoundError(f"Cannot find config: {filepath}")

        with open(source, **kwargs) as infile:
            data = json.load(infile)
        log.debug("Loaded config %s", source)
        return cls(**data)

    def _coerce(self, key: str, value: str) -> Any:
        """Convert a string into the type of the dotted field ``key``."""
        target: BaseParameters = self
        *groups, name = key.split(".")
        for group in groups:
            target = getattr(target, group, None)
            if not isinstance(target, BaseParameters):
                raise KeyError(f"No parameter group '{group}' in key '{key}'")
        if name not in target.__dataclass_fields__:
            raise KeyError(f"{type(target).__qualname__} does not contain key '{name}'")
        field_type = target.__dataclass_fields__[name].type
        return _coerce_string(value, _resolve_type(field_type, target.__module__))

    def __repr__(self) -> str:
        return f"{self.__class__.__name__}: \n{pformat(self.as_dict())}"

    def __str__(self) -> str:
        return repr(self)

    def __setattr__(self, name: str, value: Any) -> None:
        """Set an attribute, converting values for enum and nested parameter fields.

        Args:
            name (str): Name of attribute to set
            value (Any): Value of attribute to set
        """
        if name in self.__dataclass_fields__:
            value_type = _resolve_type(
                self.__dataclass_fields__[name].type,
                self.__module__,
            )
            if isinstance(value_type, type) and issubclass(value_type, Enum):
                value = _to_enum(value_type, value, f"{type(self).__name__}.{name}")
            elif is_dataclass(value_type) and not isinstance(value, value_type):
                try:
                    value = value_type(**(value or {}))
                except TypeError as e:
                    raise KeyError(
                        f"Error setting {type(self).__name__}.{name}: {e.args}",
                    ) from e
                value._parent = self
        super().__setattr__(name, value)


def _to_enum(enum_type: type[Enum], value: Any, where: str) -> Enum | None:
    if value is None or isinstance(value, enum_type):
        return value
    try:
        if isinstance(value, str):
            try:
                return enum_type[value.upper()]
            except KeyError:
                return enum_type(value)
        return enum_type(value)
    except (KeyError, ValueError) as e:
        valid = ", ".join(m.name.lower() for m in enum_type)
        raise KeyError(f"Error setting '{where}'. Valid values are: {valid}") from e


def _enum_safe_dict(items: list[tuple[str, Any]]) -> dict[str, Any]:
    return {k: (v.name if isinstance(v, Enum) else v) for k, v in items}


def _coerce_string(value: str, value_type: type) -> Any:
    """Convert text to ``value_type``; used for environment overrides."""
    if value_type is bool:
        lowered = value.strip().lower()
        if lowered in _TRUE_STRINGS:
            return True
        if lowered in _FALSE_STRINGS:
            return False
        raise ValueError(f"Cannot interpret '{value}' as a boolean")
    if value_type is list:
        return [item.strip() for item in value.split(",") if item.strip()]
    if value_type in (int, float):
        return value_type(value)
    if isinstance(value_type, type) and issubclass(value_type, Enum):
        return value.strip().upper()
    if value.strip().lower() in ("", "none", "null"):
        return None
    return value


def _resolve_type(value_type: Any, module_name: str) -> type:
    """Return the runtime type named by a (possibly string) annotation.

    With ``from __future__ import annotations`` every annotation is a string, so
    it is evaluated in the namespace of the module that declared the field.
    Optional types resolve to their non-None member and generics to their origin
    (``list[str]`` -> ``list``).

    Args:
        value_type (Any): Annotation, as a string or a type
        module_name (str): Module whose namespace the annotation refers to

    Returns:
        type: The resolved type
    """
    if isinstance(value_type, str):
        namespace = sys.modules[module_name].__dict__.copy()
        dummy_type = type("_", (), {"__annotations__": {"type": value_type}})
        value_type = get_type_hints(dummy_type, localns=namespace)["type"]
    origin = get_origin(value_type)
    if origin in (Union, types.UnionType):
        members = [arg for arg in get_args(value_type) if arg is not type(None)]
        return _resolve_type(members[0], module_name) if members else object
    return origin or value_type
