from .augment import *  # noqa
from .cifar import *  # noqa
from .config import *  # noqa
from .errors import *  # noqa
from .imagenet import *  # noqa
from .loop import *  # noqa
from .loss import *  # noqa
from .optim import *  # noqa
from .schedule import *  # noqa
