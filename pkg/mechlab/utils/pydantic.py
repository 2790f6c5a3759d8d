import json
from enum import Enum
from typing import TYPE_CHECKING, Any

import numpy as np
from pydantic import BaseModel

if TYPE_CHECKING:
    from pydantic.typing import DictStrAny


class BaseModelWithEnumValues(BaseModel):
    """
    Using this helper model class as the built-in pydantic use_enum_values breaks type guarantees
    when accessing enums on the model directly
    """

    def dict(self, *args, **kwargs) -> "DictStrAny":
        resolved_dict = super().dict(**kwargs)

        return with_enum_values(resolved_dict)


class FrozenModel(BaseModelWithEnumValues):
    class Config:
        allow_mutation = False
        allow_population_by_field_name = True


def with_enum_values(element):
    if isinstance(element, dict):
        return {k: with_enum_values(v) for k, v in element.items()}
    elif isinstance(element, (list, tuple)):
        return [with_enum_values(el) for el in element]
    elif isinstance(element, Enum):
        return element.value
    return element


def with_plain_numbers(element: Any):
    """Converts numpy scalars and arrays nested in a structure into plain Python values."""
    if isinstance(element, dict):
        return {str(k): with_plain_numbers(v) for k, v in element.items()}
    elif isinstance(element, (list, tuple)):
        return [with_plain_numbers(el) for el in element]
    elif isinstance(element, np.ndarray):
        return with_plain_numbers(element.tolist())
    elif isinstance(element, np.bool_):
        return bool(element)
    elif isinstance(element, np.integer):
        return int(element)
    elif isinstance(element, np.floating):
        return float(element)
    return element


def to_json(element: Any) -> str:
    """Serializes a model (or a structure of models) with sorted keys.

    The output does not depend on dict insertion order, so runs with the same seed
    produce byte-identical files.
    """
    if isinstance(element, BaseModel):
        element = element.dict(by_alias=True)
    elif isinstance(element, (list, tuple)):
        element = [
            el.dict(by_alias=True) if isinstance(el, BaseModel) else el
            for el in element
        ]

    return json.dumps(
        with_plain_numbers(with_enum_values(element)), sort_keys=True, indent=2
    )
