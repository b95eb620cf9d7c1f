from .errors import *  # noqa
from .run_config import *  # noqa
from .runs import *  # noqa
