from pydantic import BaseModel as PydanticBase
from pydantic import Extra


class BaseSchema(PydanticBase):
    """Base schema type for every declarative description in the project."""

    class Config:
        allow_population_by_field_name = True
        extra = Extra.forbid
        validate_assignment = True
