from .blocks import *  # noqa
from .connectivity import *  # noqa
from .cost import *  # noqa
from .errors import *  # noqa
from .gradcheck import *  # noqa
from .layers import *  # noqa
from .model import *  # noqa
from .partition import *  # noqa
from .weights import *  # noqa
